"""In-process mock POP3/IMAP/XMPP servers and fault injection for end-to-end tests."""

from .faults import PHASES, FaultPlan, SimulatedCrash, crash_hook, unused_port
from .mailserver import Exchange, MockMailServer
from .xmppserver import MockXmppServer, Received


def mock_mail_server(protocol, mailbox=(), faults=None, **kwargs) -> MockMailServer:
    """Start a mock mail server; stop it with ``.stop()`` or use it in a ``with`` block."""
    return MockMailServer(protocol, mailbox, faults, **kwargs).start()


def mock_xmpp_server(accept_password=None, faults=None, **kwargs) -> MockXmppServer:
    if accept_password is not None:
        kwargs["accept_password"] = accept_password
    return MockXmppServer(faults=faults, **kwargs).start()


__all__ = [
    "PHASES", "Exchange", "FaultPlan", "MockMailServer", "MockXmppServer", "Received",
    "SimulatedCrash", "crash_hook", "mock_mail_server", "mock_xmpp_server", "unused_port",
]
