"""POP3/IMAP client subsets and RFC 5322 parsing."""

from __future__ import annotations

from ..transport import LineTransport
from .base import MailAccount, MailSession, RawMessage
from .imap import ImapSession
from .message import EmailMessage, addr_spec, extract_text_body, parse_message, parse_rfc5322
from .pop3 import Pop3Session

__all__ = [
    "EmailMessage", "ImapSession", "MailAccount", "MailSession", "Pop3Session", "RawMessage",
    "addr_spec", "extract_text_body", "mail_delete", "mail_fetch", "mail_list", "open_mailbox",
    "parse_message", "parse_rfc5322",
]


def open_mailbox(account: MailAccount, *, delete_enabled: bool = False,
                 transport: LineTransport | None = None, timeout: float | None = 30.0) -> MailSession:
    """Connect (unless a transport is given), authenticate and select the mailbox."""
    if transport is None:
        transport = LineTransport.connect(account.host, account.port, account.tls, timeout)
    cls = Pop3Session if account.protocol == "pop3" else ImapSession
    try:
        return cls(account, transport, delete_enabled)
    except BaseException:
        transport.close()
        raise


def mail_list(session: MailSession) -> list[tuple[str, int]]:
    return session.list()


def mail_fetch(session: MailSession, uid: str) -> RawMessage:
    return session.fetch(uid)


def mail_delete(session: MailSession, uid: str) -> None:
    session.delete(uid)
