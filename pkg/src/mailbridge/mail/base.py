from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError, UnknownUid
from ..redact import Secret
from ..transport import LineTransport

DEFAULT_PORTS = {"pop3": 110, "imap": 143}
IMPLICIT_TLS_PORTS = {"pop3": 995, "imap": 993}


@dataclass(frozen=True)
class MailAccount:
    protocol: str
    host: str
    username: str
    password: Secret = field(default_factory=lambda: Secret(""))
    port: int = 0
    mailbox: str = "INBOX"
    tls: str = "none"

    def __post_init__(self):
        if self.protocol not in DEFAULT_PORTS:
            raise ValueError(f"unknown mail protocol {self.protocol!r}")
        if self.tls not in ("none", "implicit"):
            raise ValueError(f"unknown tls mode {self.tls!r}")
        if not isinstance(self.password, Secret):
            object.__setattr__(self, "password", Secret(self.password))
        if self.port == 0:
            ports = IMPLICIT_TLS_PORTS if self.tls == "implicit" else DEFAULT_PORTS
            object.__setattr__(self, "port", ports[self.protocol])
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")
        if self.protocol == "imap" and not self.mailbox:
            raise ValueError("imap account needs a mailbox name")


@dataclass(frozen=True)
class RawMessage:
    uid: str
    data: bytes

    def __post_init__(self):
        if not self.uid:
            raise ValueError("uid must be nonempty")


class MailSession:
    """One authenticated mailbox session owning its transport."""

    def __init__(self, account: MailAccount, transport: LineTransport, delete_enabled: bool = False):
        self.account = account
        self.transport = transport
        self.delete_enabled = delete_enabled
        self._listed: dict[str, int] = {}
        self._deleted: set[str] = set()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None or issubclass(exc_type, Exception):
            self.close()
        else:
            self.abort()

    def _require_listed(self, uid: str) -> None:
        if uid not in self._listed:
            raise UnknownUid(f"uid {uid!r} was not listed in this session")

    def delete(self, uid: str) -> None:
        if not self.delete_enabled:
            raise ConfigError("bridge", "delete_after_forward", "deletion requested but disabled")
        if uid in self._deleted:
            return
        self._require_listed(uid)
        self._delete(uid)
        self._deleted.add(uid)

    def list(self) -> list[tuple[str, int]]:
        raise NotImplementedError

    def fetch(self, uid: str) -> RawMessage:
        raise NotImplementedError

    def _delete(self, uid: str) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def abort(self) -> None:
        """Drop the connection without a clean logout (no deletions committed)."""
        self.transport.close()
