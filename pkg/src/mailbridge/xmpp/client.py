"""Minimal XMPP client: stream setup, SASL PLAIN, resource binding, sending."""

from __future__ import annotations

import base64
import ipaddress
import logging
import socket
from dataclasses import dataclass, field

from ..errors import AuthError, BindError, ConfigError, MalformedXml, StreamError, TransportError
from ..redact import Secret
from ..transport import open_socket
from .jid import Jid, parse_jid
from .stanza import Stanza, XmlStreamReader, serialize_stanza, strip_invalid_xml_chars

log = logging.getLogger(__name__)

NS_CLIENT = "jabber:client"
NS_STREAM = "http://etherx.jabber.org/streams"
NS_SASL = "urn:ietf:params:xml:ns:xmpp-sasl"
NS_BIND = "urn:ietf:params:xml:ns:xmpp-bind"
NS_STREAMS_ERR = "urn:ietf:params:xml:ns:xmpp-streams"
NS_PING = "urn:xmpp:ping"


@dataclass(frozen=True)
class XmppAccount:
    jid: Jid
    password: Secret = field(default_factory=lambda: Secret(""))
    host: str = ""
    port: int = 5222
    resource: str = "mailbridge"
    tls: str = "none"
    allow_insecure: bool = False

    def __post_init__(self):
        if isinstance(self.jid, str):
            object.__setattr__(self, "jid", parse_jid(self.jid))
        object.__setattr__(self, "jid", self.jid.bare)
        if not isinstance(self.password, Secret):
            object.__setattr__(self, "password", Secret(self.password))
        if not self.host:
            object.__setattr__(self, "host", self.jid.domain)


@dataclass(frozen=True)
class StreamFeatures:
    plain: bool
    bind: bool


def sasl_plain_payload(authzid: str, authcid: str, password: str) -> str:
    """Base64 of ``authzid NUL authcid NUL password`` (RFC 4616)."""
    if not authcid:
        raise ValueError("authcid must be nonempty")
    octets = b"\0".join(p.encode("utf-8") for p in (authzid, authcid, password))
    return base64.b64encode(octets).decode("ascii")


def build_message_stanza(to: Jid, body: str, message_type: str = "normal") -> Stanza:
    return Stanza(
        "message",
        [("type", message_type), ("to", str(to)), ("xmlns", NS_CLIENT)],
        [Stanza("body", text=strip_invalid_xml_chars(body))],
    )


def is_loopback(host: str) -> bool:
    if host == "localhost":
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


def _stream_error(stanza: Stanza) -> StreamError:
    condition = ""
    text = ""
    for child in stanza.children:
        if child.name == "text":
            text = child.text
        elif not condition:
            condition = child.name
    return StreamError(condition or "undefined-condition", text)


class XmppClient:
    """One XMPP client stream over a connected socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.reader = XmlStreamReader()
        self.jid: Jid | None = None
        self._pending: list[tuple[str, object]] = []
        self._ids = 0

    @classmethod
    def connect(cls, account: XmppAccount, timeout: float | None = 30.0) -> "XmppClient":
        return cls(open_socket(account.host, account.port, account.tls, timeout))

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None or issubclass(exc_type, Exception):
            self.close()
        else:
            self.abort()

    def _send(self, data: str) -> None:
        try:
            self.sock.sendall(data.encode("utf-8"))
        except OSError as exc:
            raise TransportError(f"XMPP write failed: {exc}") from exc

    def _next_event(self) -> tuple[str, object]:
        while not self._pending:
            try:
                data = self.sock.recv(65536)
            except OSError as exc:
                raise TransportError(f"XMPP read failed: {exc}") from exc
            if not data:
                raise TransportError("XMPP server closed the connection")
            self._pending.extend(self.reader.feed(data))
        return self._pending.pop(0)

    def _next_stanza(self) -> Stanza:
        kind, payload = self._next_event()
        if kind == "close":
            raise StreamError("stream-closed", "server closed the stream")
        if kind != "stanza":
            raise MalformedXml(f"unexpected {kind} event")
        assert isinstance(payload, Stanza)
        if payload.name == "stream:error":
            raise _stream_error(payload)
        return payload

    def open_stream(self, domain: str) -> StreamFeatures:
        """Send our stream header and read the server's header and features."""
        self.reader.reset()
        self._pending.clear()
        self._send(
            "<?xml version='1.0'?>"
            f'<stream:stream to="{domain}" xmlns="{NS_CLIENT}" xmlns:stream="{NS_STREAM}" version="1.0">'
        )
        kind, _ = self._next_event()
        if kind != "open":
            raise MalformedXml("expected server stream header")
        features = self._next_stanza()
        if features.name != "stream:features":
            raise MalformedXml(f"expected <stream:features>, got <{features.name}>")
        mechs = features.find("mechanisms")
        plain = bool(mechs and any(m.name == "mechanism" and m.text.strip().upper() == "PLAIN"
                                   for m in mechs.children))
        return StreamFeatures(plain=plain, bind=features.find("bind") is not None)

    def authenticate_and_bind(self, account: XmppAccount, features: StreamFeatures | None = None) -> Jid:
        """SASL PLAIN, stream restart, resource bind; returns the server-assigned full JID."""
        if account.tls == "none" and not (account.allow_insecure or is_loopback(account.host)):
            raise ConfigError("xmpp", "allow_insecure",
                              f"refusing SASL PLAIN without TLS to non-loopback host {account.host}")
        domain = account.jid.domain
        if features is None:
            features = self.open_stream(domain)
        if not features.plain:
            raise AuthError("server does not offer SASL PLAIN")
        payload = sasl_plain_payload("", account.jid.localpart, account.password.reveal())
        self._send(f'<auth xmlns="{NS_SASL}" mechanism="PLAIN">{payload}</auth>')
        reply = self._next_stanza()
        if reply.name == "failure":
            reason = reply.children[0].name if reply.children else "unknown"
            raise AuthError(f"SASL PLAIN rejected for {account.jid}: {reason}")
        if reply.name != "success":
            raise MalformedXml(f"unexpected <{reply.name}> during SASL")

        features = self.open_stream(domain)
        if not features.bind:
            raise BindError("server did not offer resource binding")
        iq_id = self._next_id("bind")
        self._send(
            f'<iq type="set" id="{iq_id}"><bind xmlns="{NS_BIND}">'
            f"<resource>{_escape(account.resource)}</resource></bind></iq>"
        )
        while True:
            reply = self._next_stanza()
            if reply.name == "iq" and reply.get("id") == iq_id:
                break
        if reply.get("type") != "result":
            raise BindError(f"bind refused: {serialize_stanza(reply)}")
        bind = reply.find("bind")
        jid_node = bind.find("jid") if bind else None
        if jid_node is None:
            raise BindError("bind result carries no <jid>")
        try:
            self.jid = parse_jid(jid_node.text.strip())
        except ValueError as exc:
            raise BindError(f"server assigned an invalid JID: {exc}") from exc
        log.info("bound as %s", self.jid)
        return self.jid

    def _next_id(self, prefix: str) -> str:
        self._ids += 1
        return f"{prefix}_{self._ids}"

    def send_stanza(self, stanza: Stanza) -> None:
        if self.jid is None:
            raise RuntimeError("stream is not bound yet")
        self._send(serialize_stanza(stanza))

    def send_presence_available(self) -> None:
        self.send_stanza(Stanza("presence"))

    def send_message(self, to: Jid, body: str, message_type: str = "normal", confirm: bool = True) -> Stanza:
        """Send a message stanza.

        With ``confirm`` the call returns only after the server answered a
        ping sent right behind the message. Servers handle a stream's
        stanzas in order, so the answer proves the message was received;
        a dead connection surfaces here instead of silently eating it.
        """
        stanza = build_message_stanza(to, body, message_type)
        self.send_stanza(stanza)
        if confirm:
            self.ping()
        return stanza

    def ping(self) -> None:
        """Round-trip an XEP-0199 ping; any iq answer (even an error) counts."""
        iq_id = self._next_id("ping")
        self.send_stanza(Stanza("iq", [("type", "get"), ("id", iq_id)], [Stanza("ping", [("xmlns", NS_PING)])]))
        while True:
            reply = self._next_stanza()
            if reply.name == "iq" and reply.get("id") == iq_id and reply.get("type") in ("result", "error"):
                return

    def close(self) -> None:
        try:
            self._send("</stream:stream>")
            self.sock.settimeout(2.0)
            while True:
                kind, _ = self._next_event()
                if kind == "close":
                    break
        except Exception:
            pass
        finally:
            self.abort()

    def abort(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


SESSION_ERRORS = (TransportError, AuthError, StreamError, MalformedXml, BindError)


def open_session(account: XmppAccount, timeout: float | None = 30.0) -> XmppClient:
    """Connect, authenticate, bind and announce presence."""
    client = XmppClient.connect(account, timeout)
    try:
        client.authenticate_and_bind(account)
        client.send_presence_available()
    except BaseException:
        client.abort()
        raise
    return client
