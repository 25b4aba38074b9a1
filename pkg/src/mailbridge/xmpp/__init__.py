"""XMPP client subset: JIDs, stanzas, stream establishment and delivery."""

from .client import (StreamFeatures, XmppAccount, XmppClient, build_message_stanza,
                     sasl_plain_payload)
from .jid import Jid, parse_jid
from .stanza import Stanza, XmlStreamReader, parse_stanza, serialize_stanza

__all__ = [
    "Jid", "Stanza", "StreamFeatures", "XmlStreamReader", "XmppAccount", "XmppClient",
    "build_message_stanza", "parse_jid", "parse_stanza", "sasl_plain_payload", "serialize_stanza",
]
