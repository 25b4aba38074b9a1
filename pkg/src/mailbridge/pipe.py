"""Single-message delivery for MTA pipe transports (procmail-style).

Exit codes follow sysexits: 0 delivered, 65 unusable input, 67 no
recipient (the MTA bounces), 75 XMPP unavailable (the MTA requeues),
1 configuration error. Nothing is written to stdout except in dry-run.
"""

from __future__ import annotations

import logging
from typing import Mapping, TextIO

from .config import Config
from .errors import ConfigError, InvalidJid, NoRecipient
from .mail.message import EmailMessage, addr_spec, parse_message
from .router import format_body, parse_subject_directive
from .xmpp.client import SESSION_ERRORS, open_session
from .xmpp.jid import Jid, parse_jid

log = logging.getLogger(__name__)

EX_OK = 0
EX_CONFIG = 1
EX_DATAERR = 65
EX_NOUSER = 67
EX_TEMPFAIL = 75


def _try_jid(source: str, value: str) -> Jid | None:
    value = value.strip()
    if not value:
        return None
    try:
        return parse_jid(value)
    except InvalidJid as exc:
        log.warning("ignoring invalid recipient from %s: %s", source, exc)
        return None


def resolve_pipe_recipient(msg: EmailMessage, cli_rcpt: str | None,
                           address_map: Mapping[str, Jid]) -> tuple[Jid, str]:
    """Pick the recipient; returns it with the subject to render.

    Precedence: --rcpt, X-XMPP-To header, subject directive, address map
    lookup of the To address. The rendered subject is the directive's
    residual when the directive decided, else the original subject.
    """
    for source, value in (("--rcpt", cli_rcpt or ""), ("X-XMPP-To", msg.header("X-XMPP-To"))):
        jid = _try_jid(source, value)
        if jid is not None:
            return jid, msg.subject
    directive = parse_subject_directive(msg.subject)
    if directive is not None:
        return directive
    mapped = address_map.get(addr_spec(msg.to)) if msg.to else None
    if mapped is not None:
        return mapped, msg.subject
    raise NoRecipient("no recipient from --rcpt, X-XMPP-To, subject directive or address map")


def run_pipe(stdin: bytes, config: Config, cli_rcpt: str | None = None, *,
             dry_run: bool = False, out: TextIO | None = None, timeout: float | None = 30.0) -> int:
    if not stdin.strip():
        log.error("empty input")
        return EX_DATAERR
    msg = parse_message(stdin)
    if not msg.headers:
        log.error("input has no RFC 5322 header fields")
        return EX_DATAERR
    try:
        recipient, subject = resolve_pipe_recipient(msg, cli_rcpt, config.address_map)
    except NoRecipient as exc:
        log.error("%s", exc)
        return EX_NOUSER
    if not config.whitelist.admits(msg.from_):
        log.error("sender %s not whitelisted", addr_spec(msg.from_))
        if dry_run:
            print("REJECT sender not whitelisted", file=out)
        return config.pipe_reject_exit

    body = format_body(msg, subject, config.max_body_chars)
    if dry_run:
        print(f"DELIVER {recipient}", file=out)
        return EX_OK
    try:
        client = open_session(config.xmpp, timeout)
    except ConfigError as exc:
        log.error("%s", exc)
        return EX_CONFIG
    except SESSION_ERRORS as exc:
        log.error("XMPP unavailable, asking MTA to requeue: %s", exc)
        return EX_TEMPFAIL
    try:
        client.send_message(recipient, body, config.message_type)
    except SESSION_ERRORS as exc:
        client.abort()
        log.error("delivery failed, asking MTA to requeue: %s", exc)
        return EX_TEMPFAIL
    client.close()
    log.info("delivered to %s", recipient)
    return EX_OK
