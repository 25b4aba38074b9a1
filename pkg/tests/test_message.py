import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mailbridge.mail.message import (NO_TEXT_PLACEHOLDER, addr_spec, decode_encoded_words,
                                     extract_text_body, parse_message, parse_rfc5322)

# frozen from tests/oracles.py
HELLO = oracles.b64decode("aGVsbG8=").decode("ascii")
EURO = oracles.utf8_decode(oracles.qp_hex_octets("=E2=82=AC"))


def test_oracle_values_are_what_we_froze():
    assert HELLO == "hello"
    assert EURO == "€"


def test_folded_subject_is_unfolded():
    assert parse_rfc5322(b"Subject: a\r\n b\r\n\r\nbody").subject == "a b"


def test_unfolding_is_idempotent():
    folded = parse_rfc5322(b"Subject: quarterly\r\n\treport\r\n  due\r\n\r\n")
    flat = parse_rfc5322(b"Subject: quarterly report due\r\n\r\n")
    assert folded.subject == flat.subject == "quarterly report due"


def test_base64_encoded_word():
    assert parse_rfc5322(b"Subject: =?UTF-8?B?aGVsbG8=?=\r\n\r\n").subject == HELLO


def test_q_encoded_word_latin1_and_adjacent_words_join():
    msg = parse_rfc5322(b"From: =?ISO-8859-1?Q?Andr=E9?= =?utf-8?q?_Smith?= <andre@x.org>\r\n\r\n")
    assert msg.from_ == "André Smith <andre@x.org>"


def test_unknown_charset_passes_through_verbatim():
    raw = "=?KOI8-R?B?0NLJ18XU?="
    assert decode_encoded_words(raw) == raw


def test_header_names_case_insensitive_and_missing_headers_empty():
    msg = parse_rfc5322(b"SUBJECT: x\r\nmessage-id: <1@y>\r\n\r\n")
    assert msg.subject == "x"
    assert msg.message_id == "<1@y>"
    assert msg.from_ == msg.to == msg.date == ""


def test_no_separator_is_degenerate_but_not_fatal(caplog):
    with caplog.at_level(logging.WARNING):
        msg = parse_message(b"Subject: only headers\r\nFrom: a@b")
    assert msg.subject == "only headers"
    assert msg.from_ == "a@b"
    assert any("separator" in r.message for r in caplog.records)


def test_bare_lf_messages_parse():
    msg = parse_message(b"Subject: lf\nFrom: a@b\n\nline1\nline2\n")
    assert msg.subject == "lf"
    assert msg.body_text == "line1\nline2\n"


def test_quoted_printable_euro():
    raw = (b"Subject: qp\r\nContent-Type: text/plain; charset=utf-8\r\n"
           b"Content-Transfer-Encoding: quoted-printable\r\n\r\n=E2=82=AC")
    assert extract_text_body(raw) == EURO


def test_base64_body_latin1():
    raw = (b"Content-Type: text/plain; charset=ISO-8859-1\r\n"
           b"Content-Transfer-Encoding: base64\r\n\r\n" + oracles.b64encode(b"caf\xe9").encode())
    assert extract_text_body(raw) == "café"


def test_unknown_charset_decodes_lossily_as_utf8():
    raw = b"Content-Type: text/plain; charset=x-unknown\r\n\r\nok \xff"
    assert extract_text_body(raw) == "ok �"


def test_multipart_alternative_takes_text_plain():
    raw = (b"MIME-Version: 1.0\r\nContent-Type: multipart/alternative; boundary=XX\r\n\r\n"
           b"--XX\r\nContent-Type: text/html\r\n\r\n<b>hi</b>\r\n"
           b"--XX\r\nContent-Type: text/plain\r\n\r\nhi\r\n--XX--\r\n")
    assert extract_text_body(raw) == "hi"


def test_nested_multipart_depth_first():
    raw = (b"Content-Type: multipart/mixed; boundary=OUT\r\n\r\n"
           b"--OUT\r\nContent-Type: multipart/alternative; boundary=IN\r\n\r\n"
           b"--IN\r\nContent-Type: text/plain\r\n\r\ninner\r\n--IN--\r\n"
           b"--OUT\r\nContent-Type: text/plain\r\n\r\nouter\r\n--OUT--\r\n")
    assert extract_text_body(raw) == "inner"


def test_multipart_without_text_gives_placeholder():
    raw = (b"Content-Type: multipart/mixed; boundary=B\r\n\r\n"
           b"--B\r\nContent-Type: image/png\r\nContent-Transfer-Encoding: base64\r\n\r\niVBORw0KGgo=\r\n--B--\r\n")
    assert extract_text_body(raw) == NO_TEXT_PLACEHOLDER


def test_broken_boundary_degrades_to_plain_text(caplog):
    raw = b"Content-Type: multipart/mixed; boundary=NOPE\r\n\r\njust some text\r\n"
    with caplog.at_level(logging.WARNING):
        assert extract_text_body(raw) == "just some text\n"
    assert caplog.records


@pytest.mark.parametrize("value,expected", [
    ("Alice <Alice@Example.org>", "alice@example.org"),
    ("bob@x.org", "bob@x.org"),
    ('"a <b>" <real@x.org>', "real@x.org"),
    ("  Spaced@Y.org ", "spaced@y.org"),
])
def test_addr_spec(value, expected):
    assert addr_spec(value) == expected


@settings(max_examples=300)
@given(st.binary(max_size=2048))
def test_parsing_is_total_on_arbitrary_octets(raw):
    msg = parse_message(raw)
    assert "\r" not in msg.subject and "\n" not in msg.subject
    msg.body_text.encode("utf-8")  # valid unicode, no lone surrogates


_header_char = st.characters(min_codepoint=0x21, max_codepoint=0x7E)


@given(st.lists(st.text(_header_char, min_size=1, max_size=12), min_size=1, max_size=6))
def test_folding_anywhere_between_words_is_equivalent(words):
    flat = parse_rfc5322(("Subject: " + " ".join(words) + "\r\n\r\n").encode())
    folded = parse_rfc5322(("Subject: " + "\r\n ".join(words) + "\r\n\r\n").encode())
    assert folded.subject == flat.subject
