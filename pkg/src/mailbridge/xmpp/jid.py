from __future__ import annotations

from dataclasses import dataclass

from ..errors import InvalidJid

_ASCII_LOWER = str.maketrans("ABCDEFGHIJKLMNOPQRSTUVWXYZ", "abcdefghijklmnopqrstuvwxyz")


def ascii_lower(value: str) -> str:
    return value.translate(_ASCII_LOWER)


@dataclass(frozen=True)
class Jid:
    """An XMPP address. Localpart and domain are stored ASCII-lowercased."""

    localpart: str
    domain: str
    resource: str = ""

    def __post_init__(self):
        if not self.domain:
            raise InvalidJid("empty domain")
        for part in (self.localpart, self.domain, self.resource):
            if "@" in part or "/" in part:
                raise InvalidJid(f"'@' or '/' inside JID part {part!r}")
            if any(ch.isspace() for ch in part):
                raise InvalidJid(f"whitespace inside JID part {part!r}")
        object.__setattr__(self, "localpart", ascii_lower(self.localpart))
        object.__setattr__(self, "domain", ascii_lower(self.domain))

    @property
    def bare(self) -> "Jid":
        return Jid(self.localpart, self.domain)

    def __str__(self) -> str:
        out = f"{self.localpart}@{self.domain}" if self.localpart else self.domain
        return f"{out}/{self.resource}" if self.resource else out


def parse_jid(text: str) -> Jid:
    """Parse ``[local@]domain[/resource]``.

    >>> parse_jid("Alice@Example.ORG/Home")
    Jid(localpart='alice', domain='example.org', resource='Home')
    """
    if not isinstance(text, str) or not text:
        raise InvalidJid("empty JID")
    if any(ch.isspace() for ch in text):
        raise InvalidJid(f"whitespace in JID {text!r}")
    local, at, rest = text.partition("@")
    if not at:
        local, rest = "", text
    elif not local:
        raise InvalidJid(f"empty localpart in {text!r}")
    domain, slash, resource = rest.partition("/")
    if slash and not resource:
        raise InvalidJid(f"empty resource in {text!r}")
    return Jid(local, domain, resource)
