"""Exception hierarchy shared by every mailbridge component."""


class MailbridgeError(Exception):
    """Base class for all errors raised by mailbridge."""


class ConfigError(MailbridgeError):
    def __init__(self, section: str, key: str, reason: str):
        self.section = section
        self.key = key
        self.reason = reason
        where = f"[{section}] {key}" if key else f"[{section}]"
        super().__init__(f"{where}: {reason}")


class TransportError(MailbridgeError):
    """The TCP connection failed, was refused or closed unexpectedly."""


class ProtocolError(MailbridgeError):
    """The peer sent something the client could not make sense of."""

    def __init__(self, message: str, line: bytes | str = b""):
        self.line = line
        if line:
            shown = line if isinstance(line, str) else line.decode("utf-8", "replace")
            message = f"{message}: {shown.rstrip()!r}"
        super().__init__(message)


class AuthError(MailbridgeError):
    """Credentials were rejected by the server."""


class UnknownUid(MailbridgeError):
    pass


class InvalidJid(MailbridgeError, ValueError):
    pass


class StreamError(MailbridgeError):
    """The XMPP server sent <stream:error>."""

    def __init__(self, condition: str, text: str = ""):
        self.condition = condition
        self.text = text
        super().__init__(f"stream error: {condition}" + (f" ({text})" if text else ""))


class MalformedXml(MailbridgeError):
    pass


class BindError(MailbridgeError):
    pass


class NoRecipient(MailbridgeError):
    pass
