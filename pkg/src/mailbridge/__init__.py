"""Forward email from POP3/IMAP mailboxes or an MTA pipe to XMPP users."""

__version__ = "0.1.0"
