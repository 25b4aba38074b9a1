"""POP3 client subset: USER, PASS, STAT, UIDL, LIST, RETR, DELE, QUIT."""

from __future__ import annotations

import logging

from ..errors import AuthError, ProtocolError, TransportError, UnknownUid
from ..transport import LineTransport
from .base import MailAccount, MailSession, RawMessage

log = logging.getLogger(__name__)


class Pop3Session(MailSession):
    def __init__(self, account: MailAccount, transport: LineTransport, delete_enabled: bool = False):
        super().__init__(account, transport, delete_enabled)
        self._greet()
        self._login()

    def _status(self, line: bytes) -> bytes:
        if line.startswith(b"+OK"):
            return line[3:].strip()
        if line.startswith(b"-ERR"):
            raise _ServerErr(line)
        raise ProtocolError("malformed POP3 status line", line)

    def _command(self, command: str, shown: str | None = None) -> bytes:
        log.debug("C: %s", shown or command)
        self.transport.send_line(command)
        return self._status(self.transport.readline())

    def _multiline(self) -> list[bytes]:
        """Read a dot-terminated block, unstuffing leading dots; keeps line endings."""
        lines = []
        while True:
            line = self.transport.readline_raw()
            if line.rstrip(b"\r\n") == b".":
                return lines
            if line.startswith(b".."):
                line = line[1:]
            lines.append(line)

    def _greet(self) -> None:
        try:
            self._status(self.transport.readline())
        except _ServerErr as exc:
            raise ProtocolError("server refused session", exc.line) from None

    def _login(self) -> None:
        try:
            self._command(f"USER {self.account.username}")
            self._command(f"PASS {self.account.password.reveal()}", shown="PASS ***")
        except _ServerErr as exc:
            raise AuthError(f"POP3 login rejected for {self.account.username}@{self.account.host}") from exc

    def stat(self) -> tuple[int, int]:
        reply = self._checked("STAT")
        try:
            count, size = reply.split()[:2]
            return int(count), int(size)
        except ValueError:
            raise ProtocolError("malformed STAT reply", reply) from None

    def _checked(self, command: str) -> bytes:
        try:
            return self._command(command)
        except _ServerErr as exc:
            raise ProtocolError(f"{command.split()[0]} failed", exc.line) from None

    def list(self) -> list[tuple[str, int]]:
        self._checked("UIDL")
        uids = [_pair(line, "UIDL") for line in self._multiline()]
        self._checked("LIST")
        sizes = dict((num, int(val)) for num, val in (_pair(line, "LIST", numeric=True) for line in self._multiline()))
        listing = []
        self._listed = {}
        for num, uid in uids:
            if uid in self._listed:
                raise ProtocolError("duplicate UIDL token", uid.encode())
            self._listed[uid] = num
            listing.append((uid, sizes.get(num, 0)))
        return listing

    def fetch(self, uid: str) -> RawMessage:
        self._require_listed(uid)
        try:
            self._command(f"RETR {self._listed[uid]}")
        except _ServerErr as exc:
            raise UnknownUid(f"RETR of {uid!r} refused: {exc.line!r}") from None
        return RawMessage(uid, b"".join(self._multiline()))

    def _delete(self, uid: str) -> None:
        try:
            self._command(f"DELE {self._listed[uid]}")
        except _ServerErr as exc:
            raise ProtocolError("DELE failed", exc.line) from None

    def close(self) -> None:
        try:
            self._command("QUIT")
        except (_ServerErr, ProtocolError, TransportError) as exc:
            log.warning("POP3 QUIT failed: %s", exc)
        finally:
            self.transport.close()


class _ServerErr(Exception):
    def __init__(self, line: bytes):
        super().__init__(line)
        self.line = line


def _pair(line: bytes, what: str, numeric: bool = False):
    parts = line.split()
    if len(parts) != 2 or not parts[0].isdigit():
        raise ProtocolError(f"malformed {what} line", line)
    value = parts[1].decode("ascii", "replace")
    if numeric and not value.isdigit():
        raise ProtocolError(f"malformed {what} line", line)
    return int(parts[0]), value
