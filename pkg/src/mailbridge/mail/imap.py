"""IMAP4rev1 client subset.

Commands used: LOGIN, SELECT, UID SEARCH ALL, UID FETCH, UID STORE,
EXPUNGE, LOGOUT. Server responses are read as a sequence of text
segments and literals; a literal ``{n}`` is always consumed as exactly
``n`` octets, whatever they contain.
"""

from __future__ import annotations

import itertools
import logging
import re

from ..errors import AuthError, ProtocolError, TransportError, UnknownUid
from ..transport import LineTransport
from .base import MailAccount, MailSession, RawMessage

log = logging.getLogger(__name__)

_LITERAL_TAIL = re.compile(rb"\{(\d+)\+?\}$")
_ATOM_SPECIALS = b'(){ %*"\\]'


class Literal(bytes):
    """Octets that arrived as an IMAP literal."""


class Response:
    def __init__(self, tag: bytes, segments: list):
        self.tag = tag
        self.segments = segments  # alternating bytes text and Literal

    @property
    def first_line(self) -> bytes:
        return self.segments[0]

    def tokens(self) -> list:
        out = []
        for seg in self.segments:
            if isinstance(seg, Literal):
                out.append(seg)
            else:
                out.extend(tokenize(seg))
        return out


def tokenize(text: bytes) -> list:
    """Split one text segment into atoms, quoted strings and parens."""
    tokens: list = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i:i + 1]
        if c == b" ":
            i += 1
        elif c in (b"(", b")"):
            tokens.append(c)
            i += 1
        elif c == b'"':
            buf = bytearray()
            i += 1
            while i < n and text[i:i + 1] != b'"':
                if text[i:i + 1] == b"\\" and i + 1 < n:
                    i += 1
                buf += text[i:i + 1]
                i += 1
            if i >= n:
                raise ProtocolError("unterminated quoted string", text)
            tokens.append(bytes(buf).decode("utf-8", "replace"))
            i += 1
        else:
            j = i
            while j < n and text[j:j + 1] not in (b" ", b"(", b")"):
                if text[j:j + 1] == b"[":
                    # section specs like BODY[HEADER.FIELDS (X)] belong to the atom
                    close = text.find(b"]", j)
                    j = n if close == -1 else close
                j += 1
            tokens.append(text[i:j].decode("ascii", "replace"))
            i = j
    return tokens


def nest(tokens: list) -> list:
    """Group parenthesized tokens into nested lists."""
    stack: list[list] = [[]]
    for tok in tokens:
        if tok == b"(":
            stack.append([])
        elif tok == b")":
            if len(stack) == 1:
                raise ProtocolError("unbalanced parenthesis")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise ProtocolError("unbalanced parenthesis")
    return stack[0]


def quote(value: str) -> str | None:
    """IMAP quoted string, or None when a literal is required."""
    if any(ch in value for ch in "\r\n\0") or not value.isascii():
        return None
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


class ImapSession(MailSession):
    def __init__(self, account: MailAccount, transport: LineTransport, delete_enabled: bool = False):
        super().__init__(account, transport, delete_enabled)
        self._tags = (f"A{n:04d}" for n in itertools.count(1))
        self._greet()
        self._login()
        self._select()

    def _read_response(self) -> Response:
        segments: list = []
        line = self.transport.readline()
        while True:
            m = _LITERAL_TAIL.search(line)
            if not m:
                segments.append(line)
                break
            segments.append(line[:m.start()])
            segments.append(Literal(self.transport.read_exact(int(m.group(1)))))
            line = self.transport.readline()
        first = segments[0]
        tag = first.split(b" ", 1)[0] if first else b""
        return Response(tag, segments)

    def _greet(self) -> None:
        resp = self._read_response()
        words = resp.first_line.split(None, 2)
        if words[:2] not in ([b"*", b"OK"], [b"*", b"PREAUTH"]):
            raise ProtocolError("unexpected IMAP greeting", resp.first_line)

    def _send_command(self, tag: str, parts: list[str | tuple[str, bytes]], shown: str) -> None:
        log.debug("C: %s %s", tag, shown)
        pending = tag
        for part in parts:
            if isinstance(part, tuple):
                _, octets = part
                self.transport.send_line(f"{pending} {{{len(octets)}}}".encode())
                cont = self._read_response()
                if not cont.first_line.startswith(b"+"):
                    raise ProtocolError("server refused literal", cont.first_line)
                self.transport.send(octets)
                pending = ""
            else:
                pending = f"{pending} {part}"
        self.transport.send_line(pending)

    def _command(self, *parts, shown: str | None = None) -> tuple[list[Response], bytes, bytes]:
        """Run one command; returns (untagged responses, status, tagged line)."""
        tag = next(self._tags)
        self._send_command(tag, list(parts), shown or " ".join(p for p in parts if isinstance(p, str)))
        untagged: list[Response] = []
        while True:
            resp = self._read_response()
            if resp.tag == b"*":
                untagged.append(resp)
                continue
            if resp.tag == tag.encode():
                words = resp.first_line.split(None, 2)
                status = words[1].upper() if len(words) > 1 else b""
                if status not in (b"OK", b"NO", b"BAD"):
                    raise ProtocolError("malformed tagged response", resp.first_line)
                if status == b"BAD":
                    raise ProtocolError("server rejected command", resp.first_line)
                return untagged, status, resp.first_line
            raise ProtocolError("unexpected response line", resp.first_line)

    @staticmethod
    def _astring(value: str) -> str | tuple[str, bytes]:
        q = quote(value)
        return q if q is not None else ("literal", value.encode("utf-8"))

    def _login(self) -> None:
        _, status, line = self._command(
            "LOGIN", self._astring(self.account.username), self._astring(self.account.password.reveal()),
            shown=f"LOGIN {self.account.username} ***",
        )
        if status != b"OK":
            raise AuthError(f"IMAP login rejected for {self.account.username}@{self.account.host}")

    def _select(self) -> None:
        _, status, line = self._command("SELECT", self._astring(self.account.mailbox))
        if status != b"OK":
            raise ProtocolError(f"cannot select {self.account.mailbox!r}", line)

    def _search_all(self) -> list[str]:
        untagged, status, line = self._command("UID", "SEARCH", "ALL")
        if status != b"OK":
            raise ProtocolError("UID SEARCH failed", line)
        uids: list[str] = []
        for resp in untagged:
            toks = resp.tokens()
            if len(toks) >= 2 and toks[1].upper() == "SEARCH":
                for tok in toks[2:]:
                    if not isinstance(tok, str) or not tok.isdigit():
                        raise ProtocolError("malformed SEARCH response", resp.first_line)
                    uids.append(tok)
        return uids

    def _fetch(self, uid_set: str, item: str) -> dict[str, dict[str, object]]:
        untagged, status, line = self._command("UID", "FETCH", uid_set, f"({item})")
        if status != b"OK":
            raise ProtocolError("UID FETCH failed", line)
        found: dict[str, dict[str, object]] = {}
        for resp in untagged:
            toks = resp.tokens()
            if len(toks) < 3 or not isinstance(toks[2], str) or toks[2].upper() != "FETCH":
                continue
            body = nest(toks[3:])
            if len(body) != 1 or not isinstance(body[0], list) or len(body[0]) % 2:
                raise ProtocolError("malformed FETCH response", resp.first_line)
            attrs = {str(k).upper(): v for k, v in zip(body[0][::2], body[0][1::2])}
            if "UID" not in attrs:
                raise ProtocolError("FETCH response without UID", resp.first_line)
            found[str(attrs["UID"])] = attrs
        return found

    def list(self) -> list[tuple[str, int]]:
        uids = [u for u in self._search_all() if u not in self._deleted]
        if len(set(uids)) != len(uids):
            raise ProtocolError("duplicate UID in SEARCH response")
        sizes: dict[str, dict[str, object]] = {}
        if uids:
            sizes = self._fetch(",".join(uids), "RFC822.SIZE")
        listing = []
        for uid in uids:
            raw_size = sizes.get(uid, {}).get("RFC822.SIZE", "0")
            if not str(raw_size).isdigit():
                raise ProtocolError("malformed RFC822.SIZE", str(raw_size))
            listing.append((uid, int(raw_size)))
        self._listed = {uid: i + 1 for i, uid in enumerate(uids)}
        return listing

    def fetch(self, uid: str) -> RawMessage:
        self._require_listed(uid)
        attrs = self._fetch(uid, "RFC822").get(uid)
        if attrs is None:
            raise UnknownUid(f"uid {uid!r} no longer in mailbox")
        data = attrs.get("RFC822")
        if isinstance(data, Literal):
            return RawMessage(uid, bytes(data))
        if isinstance(data, str) and data.upper() != "NIL":
            return RawMessage(uid, data.encode("utf-8"))
        raise ProtocolError(f"FETCH of {uid} returned no message data")

    def _delete(self, uid: str) -> None:
        _, status, line = self._command("UID", "STORE", uid, "+FLAGS", "(\\Deleted)")
        if status != b"OK":
            raise ProtocolError("UID STORE failed", line)

    def close(self) -> None:
        try:
            if self._deleted:
                self._command("EXPUNGE")
            self._command("LOGOUT")
        except (ProtocolError, TransportError) as exc:
            log.warning("IMAP logout failed: %s", exc)
        finally:
            self.transport.close()
