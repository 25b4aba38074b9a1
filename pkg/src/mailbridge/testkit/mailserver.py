"""Scripted POP3 and IMAP servers covering exactly the client's command subsets."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

from ..mail.base import RawMessage
from .base import Conn, MockServer, _Closed
from .faults import FaultPlan

CRLF = b"\r\n"


@dataclass
class _Stored:
    uid: str
    data: bytes
    flags: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class Exchange:
    command: str
    response: bytes


class MockMailServer(MockServer):
    """POP3 or IMAP mock serving a mutable mailbox shared by all connections.

    Every client command and the server's full reply are appended to
    ``transcript``. Deletions are modeled: POP3 DELE takes effect at QUIT,
    IMAP \\Deleted messages disappear at EXPUNGE.
    """

    def __init__(self, protocol: str, mailbox: Iterable[RawMessage | bytes] = (),
                 faults: FaultPlan | None = None, username: str = "user", password: str = "pass"):
        if protocol not in ("pop3", "imap"):
            raise ValueError(protocol)
        super().__init__()
        self.protocol = protocol
        self.faults = faults or FaultPlan()
        self.username = username
        self.password = password
        self.transcript: list[Exchange] = []
        self._messages: list[_Stored] = []
        self._next_uid = 1
        for item in mailbox:
            self.plant(item)

    # -- mailbox management -------------------------------------------------

    def plant(self, message: RawMessage | bytes) -> str:
        """Add a message; returns its uid (IMAP uids are assigned ascending)."""
        with self.lock:
            if isinstance(message, RawMessage):
                uid, data = message.uid, message.data
            else:
                uid, data = "", message
            if self.protocol == "imap":
                if uid and uid.isdigit() and int(uid) >= self._next_uid:
                    self._next_uid = int(uid)
                elif uid:
                    raise ValueError(f"IMAP uid {uid!r} must be numeric and ascending")
                uid = str(self._next_uid)
            elif not uid:
                uid = f"uidl-{self._next_uid:06d}"
            if any(m.uid == uid for m in self._messages):
                raise ValueError(f"duplicate uid {uid!r}")
            self._next_uid += 1
            self._messages.append(_Stored(uid, bytes(data)))
            return uid

    @property
    def mailbox(self) -> list[RawMessage]:
        with self.lock:
            return [RawMessage(m.uid, m.data) for m in self._messages]

    def commands(self) -> list[str]:
        with self.lock:
            return [e.command for e in self.transcript]

    def _log(self, command: str, response: bytes) -> None:
        with self.lock:
            self.transcript.append(Exchange(command, response))

    def serve(self, conn: Conn) -> None:
        if self.protocol == "pop3":
            _Pop3Conversation(self, conn).run()
        else:
            _ImapConversation(self, conn).run()


def _wire_lines(data: bytes) -> bytes:
    """Message octets as sent in a POP3 multi-line reply: CRLF-terminated and dot-stuffed."""
    if not data.endswith(CRLF):
        data += CRLF
    out = []
    for line in data[:-2].split(CRLF):
        out.append(b"." + line if line.startswith(b".") else line)
    return CRLF.join(out) + CRLF


class _Pop3Conversation:
    def __init__(self, server: MockMailServer, conn: Conn):
        self.server = server
        self.conn = conn
        self.user: str | None = None
        self.authed = False
        self.snapshot: list[_Stored] = []
        self.deleted: set[int] = set()

    def say(self, command: str, data: bytes) -> None:
        self.conn.reply(data, lambda sent: self.server._log(command, sent))

    def run(self) -> None:
        self.say("", b"+OK mock POP3 ready" + CRLF)
        if self.server.faults.close_after_banner:
            return
        while True:
            line = self.conn.readline().rstrip(b"\r\n").decode("utf-8", "replace")
            verb, _, arg = line.partition(" ")
            verb = verb.upper()
            handler = getattr(self, f"do_{verb}", None)
            if handler is None or (not self.authed and verb not in ("USER", "PASS", "QUIT")):
                self.say(line, b"-ERR unknown command or not authenticated" + CRLF)
                continue
            if handler(line, arg) is False:
                return

    def _live(self):
        return [(i + 1, m) for i, m in enumerate(self.snapshot) if i + 1 not in self.deleted]

    def _msg(self, arg: str) -> tuple[int, _Stored] | None:
        if not arg.strip().isdigit():
            return None
        num = int(arg)
        if not 1 <= num <= len(self.snapshot) or num in self.deleted:
            return None
        return num, self.snapshot[num - 1]

    def do_USER(self, line, arg):
        self.user = arg
        self.say(line, b"+OK" + CRLF)

    def do_PASS(self, line, arg):
        if self.user == self.server.username and arg == self.server.password:
            self.authed = True
            with self.server.lock:
                self.snapshot = list(self.server._messages)
            self.say(line, b"+OK maildrop locked" + CRLF)
        else:
            self.say(line, b"-ERR invalid credentials" + CRLF)

    def do_STAT(self, line, arg):
        live = self._live()
        self.say(line, f"+OK {len(live)} {sum(len(m.data) for _, m in live)}".encode() + CRLF)

    def do_UIDL(self, line, arg):
        self._listing(line, arg, lambda m: m.uid)

    def do_LIST(self, line, arg):
        self._listing(line, arg, lambda m: str(len(m.data)))

    def _listing(self, line, arg, value):
        if arg:
            found = self._msg(arg)
            if found is None:
                self.say(line, b"-ERR no such message" + CRLF)
            else:
                self.say(line, f"+OK {found[0]} {value(found[1])}".encode() + CRLF)
            return
        body = b"".join(f"{n} {value(m)}".encode() + CRLF for n, m in self._live())
        self.say(line, b"+OK" + CRLF + body + b"." + CRLF)

    def do_RETR(self, line, arg):
        found = self._msg(arg)
        if found is None:
            self.say(line, b"-ERR no such message" + CRLF)
            return
        num, msg = found
        self.say(line, f"+OK {len(msg.data)} octets".encode() + CRLF + _wire_lines(msg.data) + b"." + CRLF)

    def do_DELE(self, line, arg):
        found = self._msg(arg)
        if found is None:
            self.say(line, b"-ERR no such message" + CRLF)
            return
        self.deleted.add(found[0])
        self.say(line, b"+OK marked deleted" + CRLF)

    def do_NOOP(self, line, arg):
        self.say(line, b"+OK" + CRLF)

    def do_RSET(self, line, arg):
        self.deleted.clear()
        self.say(line, b"+OK" + CRLF)

    def do_QUIT(self, line, arg):
        if self.authed and self.deleted:
            gone = {id(self.snapshot[n - 1]) for n in self.deleted}
            with self.server.lock:
                self.server._messages = [m for m in self.server._messages if id(m) not in gone]
        self.say(line, b"+OK bye" + CRLF)
        return False


_IMAP_TOKEN = re.compile(rb'"((?:[^"\\]|\\.)*)"|(\S+)')


class _ImapConversation:
    def __init__(self, server: MockMailServer, conn: Conn):
        self.server = server
        self.conn = conn
        self.authed = False
        self.selected = False

    def read_command(self) -> tuple[bytes, list]:
        """One command line with any literals spliced in; returns (display, args)."""
        line = self.conn.readline().rstrip(b"\r\n")
        text = b""
        args: list = []
        while True:
            m = re.search(rb"\{(\d+)\}$", line)
            if not m:
                text += line
                args.extend(self._tokens(line))
                return text, args
            head = line[:m.start()]
            text += head
            args.extend(self._tokens(head))
            self.conn.write(b"+ go ahead" + CRLF)
            literal = self.conn.read(int(m.group(1)))
            text += b"{literal}"
            args.append(literal)
            line = self.conn.readline().rstrip(b"\r\n")

    @staticmethod
    def _tokens(text: bytes) -> list:
        out = []
        for m in _IMAP_TOKEN.finditer(text):
            if m.group(1) is not None:
                out.append(re.sub(rb"\\(.)", rb"\1", m.group(1)))
            else:
                out.append(m.group(2))
        return out

    def run(self) -> None:
        self.conn.reply(b"* OK [CAPABILITY IMAP4rev1] mock IMAP ready" + CRLF,
                        lambda sent: self.server._log("", sent))
        if self.server.faults.close_after_banner:
            return
        while True:
            display, args = self.read_command()
            if len(args) < 2:
                self._respond(display, [], b"* BAD missing command")
                continue
            tag = args[0].decode("ascii", "replace")
            verb = args[1].decode("ascii", "replace").upper()
            if verb == "UID" and len(args) > 2:
                verb = "UID_" + args[2].decode("ascii", "replace").upper()
                rest = args[3:]
            else:
                rest = args[2:]
            handler = getattr(self, f"do_{verb}", None)
            if handler is None:
                self._respond(display, [], f"{tag} BAD unsupported command".encode())
                continue
            if verb not in ("LOGIN", "LOGOUT", "CAPABILITY", "NOOP") and not self.selected and verb != "SELECT":
                self._respond(display, [], f"{tag} NO not selected".encode())
                continue
            untagged, status = handler(rest)
            self._respond(display, untagged, f"{tag} {status}".encode())
            if verb == "LOGOUT":
                return

    def _respond(self, display: bytes, untagged: list[bytes], tagged: bytes) -> None:
        data = b"".join(u + CRLF for u in untagged) + tagged + CRLF
        command = display.decode("utf-8", "replace")
        self.conn.reply(data, lambda sent: self.server._log(command, sent))

    def _seq(self) -> list[_Stored]:
        with self.server.lock:
            return list(self.server._messages)

    def _uid_set(self, spec: bytes) -> list[_Stored]:
        messages = self._seq()
        top = max((int(m.uid) for m in messages), default=0)
        wanted: set[int] = set()
        for part in spec.decode("ascii", "replace").split(","):
            lo, _, hi = part.partition(":")
            lo_n = top if lo == "*" else int(lo)
            hi_n = lo_n if not hi else (top if hi == "*" else int(hi))
            lo_n, hi_n = min(lo_n, hi_n), max(lo_n, hi_n)
            wanted.update(range(lo_n, hi_n + 1))
        return [m for m in messages if int(m.uid) in wanted]

    def do_CAPABILITY(self, rest):
        return [b"* CAPABILITY IMAP4rev1"], "OK done"

    def do_NOOP(self, rest):
        return [], "OK done"

    def do_LOGIN(self, rest):
        if len(rest) == 2 and rest[0].decode("utf-8", "replace") == self.server.username \
                and rest[1].decode("utf-8", "replace") == self.server.password:
            self.authed = True
            return [], "OK logged in"
        return [], "NO [AUTHENTICATIONFAILED] invalid credentials"

    def do_SELECT(self, rest):
        if not self.authed:
            return [], "NO not authenticated"
        if len(rest) != 1 or rest[0].upper() != b"INBOX":
            return [], "NO no such mailbox"
        self.selected = True
        n = len(self._seq())
        return [f"* {n} EXISTS".encode(), b"* 0 RECENT", b"* OK [UIDVALIDITY 1] ok"], "OK [READ-WRITE] selected"

    def do_UID_SEARCH(self, rest):
        uids = " ".join(m.uid for m in self._seq())
        return [f"* SEARCH {uids}".rstrip().encode()], "OK search done"

    def do_UID_FETCH(self, rest):
        if len(rest) < 2:
            return [], "BAD missing arguments"
        try:
            targets = self._uid_set(rest[0])
        except ValueError:
            return [], "BAD bad uid set"
        items = b" ".join(rest[1:]).strip(b"()").upper().split()
        seqs = {id(m): i + 1 for i, m in enumerate(self._seq())}
        untagged = []
        for m in targets:
            parts = [f"UID {m.uid}".encode()]
            for item in items:
                if item == b"RFC822.SIZE":
                    parts.append(f"RFC822.SIZE {len(m.data)}".encode())
                elif item == b"FLAGS":
                    parts.append(f"FLAGS ({' '.join(sorted(m.flags))})".encode())
                elif item == b"RFC822":
                    parts.append(f"RFC822 {{{len(m.data)}}}".encode() + CRLF + m.data)
                elif item != b"UID":
                    return [], "BAD unsupported fetch item"
            untagged.append(f"* {seqs[id(m)]} FETCH (".encode() + b" ".join(parts) + b")")
        return untagged, "OK fetch done"

    def do_UID_STORE(self, rest):
        if len(rest) < 3 or rest[1].upper() != b"+FLAGS":
            return [], "BAD only +FLAGS supported"
        flags = b" ".join(rest[2:]).strip(b"()").decode("ascii", "replace").split()
        seqs = {id(m): i + 1 for i, m in enumerate(self._seq())}
        untagged = []
        with self.server.lock:
            for m in self._uid_set(rest[0]):
                m.flags.update(flags)
                untagged.append(f"* {seqs[id(m)]} FETCH (UID {m.uid} FLAGS ({' '.join(sorted(m.flags))}))".encode())
        return untagged, "OK store done"

    def do_EXPUNGE(self, rest):
        untagged = []
        with self.server.lock:
            msgs = self.server._messages
            for i in range(len(msgs), 0, -1):
                if "\\Deleted" in msgs[i - 1].flags:
                    untagged.append(f"* {i} EXPUNGE".encode())
                    del msgs[i - 1]
        return untagged, "OK expunged"

    def do_LOGOUT(self, rest):
        return [b"* BYE logging out"], "OK logout done"


__all__ = ["Exchange", "MockMailServer", "_Closed"]
