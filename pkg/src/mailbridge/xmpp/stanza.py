"""Stanza tree model, canonical serialization and an incremental XML reader."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from xml.parsers import expat

from ..errors import MalformedXml

# Characters outside the XML 1.0 Char production.
_INVALID_XML = re.compile("[^\t\n\r\x20-\ud7ff\ue000-\ufffd\U00010000-\U0010ffff]")

_TEXT_ESCAPES = str.maketrans({"&": "&amp;", "<": "&lt;", ">": "&gt;", "\r": "&#13;"})
_ATTR_ESCAPES = str.maketrans({
    "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;",
    "\t": "&#9;", "\n": "&#10;", "\r": "&#13;",
})


@dataclass
class Stanza:
    name: str
    attributes: list[tuple[str, str]] = field(default_factory=list)
    children: list["Stanza"] = field(default_factory=list)
    text: str = ""

    def __post_init__(self):
        if self.children and self.text:
            raise ValueError(f"<{self.name}> has both children and text")
        keys = [k for k, _ in self.attributes]
        if len(set(keys)) != len(keys):
            raise ValueError(f"<{self.name}> has duplicate attribute keys")

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.attributes:
            if k == key:
                return v
        return default

    def find(self, name: str) -> "Stanza | None":
        for child in self.children:
            if child.name == name:
                return child
        return None


def strip_invalid_xml_chars(text: str) -> str:
    return _INVALID_XML.sub("", text)


def serialize_stanza(s: Stanza) -> str:
    """Canonical form: attributes in insertion order, no self-closing tags, no added whitespace."""
    parts: list[str] = []
    _emit(s, parts)
    return "".join(parts)


def _emit(s: Stanza, out: list[str]) -> None:
    for value in (s.name, s.text, *(v for kv in s.attributes for v in kv)):
        if _INVALID_XML.search(value):
            raise ValueError(f"character not allowed in XML inside <{s.name}>")
    out.append("<" + s.name)
    for key, value in s.attributes:
        out.append(f' {key}="{value.translate(_ATTR_ESCAPES)}"')
    out.append(">")
    if s.children:
        for child in s.children:
            _emit(child, out)
    else:
        out.append(s.text.translate(_TEXT_ESCAPES))
    out.append(f"</{s.name}>")


class XmlStreamReader:
    """Incremental reader turning an XML byte stream into events.

    With ``stream=True`` the root element is an XMPP stream header and each
    complete depth-1 element is reported as a ``("stanza", Stanza)`` event,
    preceded by ``("open", attrs)`` and followed by ``("close", None)``.
    With ``stream=False`` the root element itself becomes the stanza.
    """

    def __init__(self, stream: bool = True):
        self.stream = stream
        self.reset()

    def reset(self) -> None:
        p = expat.ParserCreate()
        p.ordered_attributes = True
        p.buffer_text = True
        p.StartElementHandler = self._start
        p.EndElementHandler = self._end
        p.CharacterDataHandler = self._chars
        p.StartDoctypeDeclHandler = self._forbidden
        p.EntityDeclHandler = self._forbidden
        p.ProcessingInstructionHandler = self._forbidden
        self._parser = p
        self._stack: list[tuple[Stanza, list[str]]] = []
        self._events: list[tuple[str, object]] = []
        self._depth = 0

    def _forbidden(self, *args):
        raise MalformedXml("DTDs, entities and processing instructions are not allowed")

    def _start(self, name, attrs):
        pairs = list(zip(attrs[::2], attrs[1::2]))
        if self.stream and self._depth == 0:
            self._events.append(("open", dict(pairs)))
        else:
            self._stack.append((Stanza(name, pairs), []))
        self._depth += 1

    def _end(self, name):
        self._depth -= 1
        if self.stream and self._depth == 0:
            self._events.append(("close", None))
            return
        node, chunks = self._stack.pop()
        text = "".join(chunks)
        if node.children:
            if text.strip():
                raise MalformedXml(f"mixed content inside <{node.name}>")
        else:
            node.text = text
        if self._stack:
            self._stack[-1][0].children.append(node)
        else:
            self._events.append(("stanza", node))

    def _chars(self, data):
        if self._stack:
            self._stack[-1][1].append(data)
        elif data.strip():
            raise MalformedXml("text outside of any stanza")

    def feed(self, data: bytes, final: bool = False) -> list[tuple[str, object]]:
        try:
            self._parser.Parse(data, final)
        except expat.ExpatError as exc:
            raise MalformedXml(str(exc)) from exc
        events, self._events = self._events, []
        return events


def parse_stanza(text: str) -> Stanza:
    """Parse one standalone element into a Stanza tree."""
    reader = XmlStreamReader(stream=False)
    events = reader.feed(text.encode("utf-8"), final=True)
    stanzas = [payload for kind, payload in events if kind == "stanza"]
    if len(stanzas) != 1:
        raise MalformedXml("expected exactly one element")
    return stanzas[0]
