import pytest
from hypothesis import given
from hypothesis import strategies as st

from mailbridge.errors import InvalidJid
from mailbridge.xmpp import Jid, parse_jid


@pytest.mark.parametrize("text,expected", [
    ("user@server", ("user", "server", "")),
    ("Alice@Example.ORG/Home", ("alice", "example.org", "Home")),
    ("example.org", ("", "example.org", "")),
    ("example.org/res", ("", "example.org", "res")),
])
def test_parse(text, expected):
    jid = parse_jid(text)
    assert (jid.localpart, jid.domain, jid.resource) == expected


@pytest.mark.parametrize("text", [
    "@example.org", "", "user@", "a b@c", "user@host/", "a@b@c", "a@b/c/d", "a/b@c", " a@b",
])
def test_invalid(text):
    with pytest.raises(InvalidJid):
        parse_jid(text)


def test_lowercasing_is_ascii_only():
    assert parse_jid("ÄB@X.ORG").localpart == "Äb"


def test_render_and_bare():
    jid = parse_jid("alerts@example.org/mailbridge")
    assert str(jid) == "alerts@example.org/mailbridge"
    assert str(jid.bare) == "alerts@example.org"
    assert jid.bare == Jid("Alerts", "EXAMPLE.org")


@given(st.text(max_size=30))
def test_parse_is_idempotent(text):
    try:
        jid = parse_jid(text)
    except InvalidJid:
        return
    assert parse_jid(str(jid)) == jid
