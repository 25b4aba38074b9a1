"""Routing decisions: subject directive parsing, mode rules, whitelist, body rendering."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .errors import InvalidJid
from .mail.message import NO_TEXT_PLACEHOLDER, EmailMessage, addr_spec
from .xmpp.jid import Jid, parse_jid

log = logging.getLogger(__name__)

DEFAULT_MAX_BODY_CHARS = 65536
TRUNCATION_SUFFIX = "\n[truncated]"

_DIRECTIVE = re.compile(r"\s*USER:\s*(\S+)(.*)\Z", re.IGNORECASE | re.DOTALL)


@dataclass(frozen=True)
class Whitelist:
    entries: frozenset[str] = frozenset()
    enabled: bool = False

    def __post_init__(self):
        normalized = frozenset(e.strip().lower() for e in self.entries)
        for entry in normalized:
            if entry.count("@") != 1:
                raise ValueError(f"whitelist entry {entry!r} is not an email address")
        object.__setattr__(self, "entries", normalized)

    def admits(self, from_header: str) -> bool:
        return not self.enabled or addr_spec(from_header) in self.entries


@dataclass(frozen=True)
class RouteDecision:
    kind: str  # deliver | skip | reject
    recipient: Jid | None = None
    body: str = ""
    reason: str = ""

    def __post_init__(self):
        if self.kind not in ("deliver", "skip", "reject"):
            raise ValueError(f"unknown decision kind {self.kind!r}")
        if self.kind == "deliver" and (self.recipient is None or not self.body):
            raise ValueError("deliver needs a recipient and a nonempty body")

    @classmethod
    def deliver(cls, recipient: Jid, body: str) -> "RouteDecision":
        return cls("deliver", recipient, body)

    @classmethod
    def skip(cls, reason: str) -> "RouteDecision":
        return cls("skip", reason=reason)

    @classmethod
    def reject(cls, reason: str) -> "RouteDecision":
        return cls("reject", reason=reason)

    def summary(self) -> str:
        if self.kind == "deliver":
            return f"DELIVER {self.recipient}"
        return f"{self.kind.upper()} {self.reason}"


def parse_subject_directive(subject: str) -> tuple[Jid, str] | None:
    """Extract ``(recipient, residual subject)`` from ``USER: jid rest``.

    The token is case-insensitive and must open the subject. Only the first
    directive counts; any later ``USER:`` is ordinary subject text.
    """
    m = _DIRECTIVE.match(subject)
    if not m:
        return None
    try:
        jid = parse_jid(m.group(1))
    except InvalidJid as exc:
        log.warning("ignoring malformed directive JID %r: %s", m.group(1), exc)
        return None
    return jid, m.group(2).strip()


def format_body(msg: EmailMessage, subject: str, max_body_chars: int = DEFAULT_MAX_BODY_CHARS) -> str:
    body = msg.body_text or NO_TEXT_PLACEHOLDER
    rendered = f"From: {msg.from_}\nSubject: {subject}\nDate: {msg.date}\n\n{body}"
    if len(rendered) > max_body_chars:
        rendered = rendered[:max_body_chars] + TRUNCATION_SUFFIX
    return rendered


def route(mode: str, msg: EmailMessage, default_recipient: Jid | None = None,
          wl: Whitelist = Whitelist(), max_body_chars: int = DEFAULT_MAX_BODY_CHARS) -> RouteDecision:
    if mode == "type1":
        directive = parse_subject_directive(msg.subject)
        if directive is None:
            return RouteDecision.skip("no directive")
        recipient, residual = directive
        return RouteDecision.deliver(recipient, format_body(msg, residual, max_body_chars))
    if mode == "type2":
        if default_recipient is None:
            raise ValueError("type2 routing needs a default recipient")
        if not wl.admits(msg.from_):
            return RouteDecision.reject("sender not whitelisted")
        return RouteDecision.deliver(default_recipient, format_body(msg, msg.subject, max_body_chars))
    raise ValueError(f"unknown routing mode {mode!r}")
