"""RFC 5322 header parsing and plain-text body extraction."""

from __future__ import annotations

import base64
import binascii
import email
import email.errors
import logging
import re
from dataclasses import dataclass, field
from email.message import Message

log = logging.getLogger(__name__)

NO_TEXT_PLACEHOLDER = "[no text content]"

_LINE_SPLIT = re.compile(rb"\r?\n")
_FOLD = re.compile(r"\r?\n[ \t]+")
# ftext: printable US-ASCII except ':' and space
_FIELD_NAME = re.compile(r"^[!-9;-~]+$")
_ENCODED_WORD = re.compile(r"=\?([^?\s]+)\?([QqBb])\?([^?\s]*)\?=")
_HEX2 = re.compile(r"[0-9A-Fa-f]{2}")
_ENCODED_GAP = re.compile(r"(\?=)[ \t]+(=\?)")

_CHARSETS = {
    "utf-8": "utf-8",
    "utf8": "utf-8",
    "iso-8859-1": "latin-1",
    "iso8859-1": "latin-1",
    "latin1": "latin-1",
    "latin-1": "latin-1",
    "us-ascii": "utf-8",
    "ascii": "utf-8",
}


@dataclass
class EmailMessage:
    uid: str = ""
    from_: str = ""
    to: str = ""
    subject: str = ""
    date: str = ""
    message_id: str = ""
    body_text: str | None = None
    headers: list[tuple[str, str]] = field(default_factory=list, repr=False)

    def header(self, name: str) -> str:
        """First value of header ``name`` (case-insensitive), or ''."""
        wanted = name.lower()
        for key, value in self.headers:
            if key.lower() == wanted:
                return value
        return ""


def _codec_for(charset: str) -> str | None:
    return _CHARSETS.get(charset.split("*", 1)[0].strip().lower())


def _decode_word(match: re.Match) -> str:
    charset, encoding, payload = match.groups()
    codec = _codec_for(charset)
    if codec is None:
        return match.group(0)
    try:
        if encoding in "Bb":
            payload += "=" * (-len(payload) % 4)
            octets = base64.b64decode(payload, validate=True)
        else:
            octets = _q_decode(payload)
    except (binascii.Error, ValueError):
        return match.group(0)
    return octets.decode(codec, "replace")


def _q_decode(payload: str) -> bytes:
    out = bytearray()
    i = 0
    while i < len(payload):
        ch = payload[i]
        if ch == "_":
            out.append(0x20)
        elif ch == "=" and _HEX2.fullmatch(payload[i + 1:i + 3]):
            out.append(int(payload[i + 1:i + 3], 16))
            i += 2
        else:
            out.extend(ch.encode("utf-8", "replace"))
        i += 1
    return bytes(out)


def decode_encoded_words(value: str) -> str:
    """Decode RFC 2047 encoded-words; unsupported charsets stay verbatim."""
    # whitespace between two adjacent encoded-words is not displayed
    while True:
        joined = _ENCODED_GAP.sub(r"\1\2", value)
        if joined == value:
            break
        value = joined
    return _ENCODED_WORD.sub(_decode_word, value)


def unfold(value: str) -> str:
    return _FOLD.sub(" ", value)


def split_message(raw: bytes) -> tuple[bytes, bytes, bool]:
    """Split at the first empty line: (header block, body, separator found)."""
    pos = 0
    for match in _LINE_SPLIT.finditer(raw):
        if match.start() == pos:
            return raw[:pos], raw[match.end():], True
        pos = match.end()
    return raw, b"", False


def parse_headers(block: bytes) -> list[tuple[str, str]]:
    text = block.decode("utf-8", "replace")
    fields: list[list[str]] = []
    for line in re.split(r"\r?\n", text):
        if line[:1] in (" ", "\t"):
            if fields:
                fields[-1][1] += "\n" + line
            continue
        name, sep, value = line.partition(":")
        if not sep or not _FIELD_NAME.match(name.rstrip(" \t")):
            continue
        fields.append([name.rstrip(" \t"), value])
    return [(name, unfold(value).strip(" \t\r")) for name, value in fields]


def parse_rfc5322(raw: bytes, uid: str = "") -> EmailMessage:
    """Parse the envelope headers of ``raw``; body_text is left unset."""
    block, _body, found = split_message(raw)
    if not found:
        log.warning("message %r has no header/body separator; body treated as empty", uid)
    headers = parse_headers(block)
    msg = EmailMessage(uid=uid, headers=headers)
    msg.from_ = decode_encoded_words(msg.header("From"))
    msg.to = msg.header("To")
    msg.subject = decode_encoded_words(msg.header("Subject")).replace("\r", " ").replace("\n", " ")
    msg.date = msg.header("Date")
    msg.message_id = msg.header("Message-ID")
    return msg


def _decode_text(octets: bytes, charset: str | None) -> str:
    codec = _codec_for(charset) if charset else "utf-8"
    text = octets.decode(codec or "utf-8", "replace")
    return text.replace("\r\n", "\n")


def _part_text(part: Message) -> str:
    payload = part.get_payload(decode=True)
    if payload is None:
        payload = b""
    return _decode_text(payload, part.get_content_charset())


def _plain_fallback(raw: bytes) -> str:
    _block, body, _found = split_message(raw)
    return _decode_text(body, None)


_BOUNDARY_DEFECTS = (
    email.errors.NoBoundaryInMultipartDefect,
    email.errors.StartBoundaryNotFoundDefect,
    email.errors.CloseBoundaryNotFoundDefect,
)


def extract_text_body(raw: bytes, headers: EmailMessage | None = None) -> str:
    """Return the first text/plain content of ``raw`` as unicode.

    Multipart messages are searched depth-first; when no text/plain leaf
    exists the placeholder ``[no text content]`` is returned. HTML and
    attachments are ignored.
    """
    uid = headers.uid if headers is not None else ""
    try:
        top = email.message_from_bytes(raw)
    except Exception:  # the stdlib parser is lenient; this is belt and braces
        log.warning("message %r could not be parsed as MIME; using raw body", uid)
        return _plain_fallback(raw)

    if top.get_content_maintype() == "multipart":
        if not top.is_multipart() or any(isinstance(d, _BOUNDARY_DEFECTS) for d in top.defects):
            log.warning("message %r has malformed MIME boundaries; using raw body", uid)
            return _plain_fallback(raw)
        try:
            for part in top.walk():
                if not part.is_multipart() and part.get_content_type() == "text/plain":
                    return _part_text(part)
        except Exception:
            log.warning("message %r has an undecodable MIME part; using raw body", uid)
            return _plain_fallback(raw)
        return NO_TEXT_PLACEHOLDER

    if top.get_content_type() == "text/plain":
        try:
            return _part_text(top)
        except Exception:
            log.warning("message %r body could not be decoded; using raw body", uid)
            return _plain_fallback(raw)
    return NO_TEXT_PLACEHOLDER


def parse_message(raw: bytes, uid: str = "") -> EmailMessage:
    """parse_rfc5322 followed by extract_text_body."""
    msg = parse_rfc5322(raw, uid)
    msg.body_text = extract_text_body(raw, msg)
    return msg


def addr_spec(header_value: str) -> str:
    """Address inside the last angle brackets, else the trimmed value; lowercased."""
    start = header_value.rfind("<")
    if start != -1:
        end = header_value.find(">", start)
        if end != -1:
            return header_value[start + 1:end].strip().lower()
    return header_value.strip().lower()
