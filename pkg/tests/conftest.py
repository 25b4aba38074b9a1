import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mailbridge.config import parse_config  # noqa: E402
from mailbridge.daemon import StateStore  # noqa: E402
from mailbridge.testkit import MockMailServer, MockXmppServer  # noqa: E402


def make_message(subject="hello", sender="alice@mail.example", body="body text",
                 to="bridge@mail.example", extra=()):
    lines = [f"From: {sender}", f"To: {to}", f"Subject: {subject}",
             "Date: Mon, 16 Sep 2013 10:00:00 +1000", *extra, "", body]
    return "\r\n".join(lines).encode("utf-8") + b"\r\n"


def config_text(xmpp_port, accounts=(), mode="type1", state_path="state", extra=""):
    out = [
        "[bridge]",
        f"mode = {mode}",
        f"state_path = {state_path}",
        "",
        "[xmpp]",
        "jid = alerts@example.org",
        "password = secret",
        "host = 127.0.0.1",
        f"port = {xmpp_port}",
        "",
    ]
    for name, protocol, port, *rest in accounts:
        out += [f"[account {name}]", f"protocol = {protocol}", "host = 127.0.0.1",
                f"port = {port}", "username = user", "password = pass"]
        if rest and rest[0]:
            out.append(f"recipient = {rest[0]}")
        out.append("")
    return "\n".join(out) + extra


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    rep = outcome.get_result()
    results = item.config.stash.setdefault(_ACCEPTANCE, {})
    number, title = marker.args
    if rep.failed or rep.when == "call":
        results[number] = ("PASS" if rep.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        verdict, title = results[number]
        terminalreporter.write_line(f"{verdict} criterion {number}: {title}")


@pytest.fixture
def xmpp():
    with MockXmppServer() as server:
        yield server


@pytest.fixture
def imap():
    with MockMailServer("imap") as server:
        yield server


@pytest.fixture
def pop3():
    with MockMailServer("pop3") as server:
        yield server


@pytest.fixture
def state_path(tmp_path):
    return str(tmp_path / "bridge.state")


@pytest.fixture
def bridge(xmpp, state_path):
    """Factory: bridge(mail_server, mode=..., recipient=..., extra=...) -> (config, store)."""

    def build(*mail_servers, mode="type1", recipient=None, extra=""):
        accounts = [(f"box{i}", m.protocol, m.port, recipient) for i, m in enumerate(mail_servers)]
        cfg = parse_config(config_text(xmpp.port, accounts, mode, state_path, extra), env={})
        return cfg, StateStore(cfg.state_path)

    return build
