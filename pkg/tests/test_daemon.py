import os
import signal
import threading

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import config_text, make_message
from mailbridge.config import parse_config
from mailbridge.daemon import (MailboxState, RunReport, StateStore, detect_new, load_state, run_loop,
                               run_once, save_state)
from mailbridge.errors import ConfigError
from mailbridge.testkit import (FaultPlan, MockMailServer, MockXmppServer, SimulatedCrash, crash_hook,
                                unused_port)


# -- state file -------------------------------------------------------------

def test_state_round_trip(tmp_path):
    path = str(tmp_path / "s")
    states = {"b": MailboxState("b", {"9": "rejected"}),
              "a": MailboxState("a", {"1": "forwarded", "2": "skipped"})}
    save_state(path, states)
    assert load_state(path) == states
    assert open(path, "rb").read() == b"a\t1\tforwarded\na\t2\tskipped\nb\t9\trejected\n"


def test_missing_state_file_is_empty(tmp_path):
    assert load_state(str(tmp_path / "absent")) == {}


def test_corrupt_lines_skipped_with_warning(tmp_path, caplog):
    path = tmp_path / "s"
    path.write_bytes(b"a\t1\tforwarded\njunk\na\t2\tbogus\n\xff\xfe\t3\tskipped\na\t4\tskipped\n")
    assert load_state(str(path)) == {"a": MailboxState("a", {"1": "forwarded", "4": "skipped"})}
    assert caplog.text.count("skipped") >= 3


def test_save_leaves_no_temp_files(tmp_path):
    save_state(str(tmp_path / "s"), {"a": MailboxState("a", {"1": "forwarded"})})
    assert os.listdir(tmp_path) == ["s"]


def test_dispositions_are_immutable():
    state = MailboxState("a")
    state.record("1", "forwarded")
    with pytest.raises(ValueError):
        state.record("1", "skipped")


@pytest.mark.parametrize("known,listing,new,after", [
    ([], ["a", "b", "c"], ["a", "b", "c"], []),
    (["a", "b"], ["a", "b", "c"], ["c"], ["a", "b"]),
    (["a", "b", "c"], ["b", "c"], [], ["b", "c"]),
])
def test_detect_new(known, listing, new, after):
    state = MailboxState("x", {u: "skipped" for u in known})
    assert detect_new(state, listing) == new
    assert list(state.processed) == after


def test_report_invariant_and_exit_codes():
    assert RunReport(new=3, forwarded=1, skipped=1, errors=[("u", "r")]).consistent
    assert RunReport(xmpp_failure="down").exit_code == 3
    assert RunReport(account_failures=[("a", "r")]).exit_code == 2
    assert RunReport(forwarded=1, account_failures=[("a", "r")]).exit_code == 0


# -- run_once ---------------------------------------------------------------

def plant_scenario(server, n_plain=2, directives=("bob@example.org",)):
    for jid in directives:
        server.plant(make_message(f"USER: {jid} note"))
    for i in range(n_plain):
        server.plant(make_message(f"newsletter {i}"))


@pytest.mark.parametrize("protocol", ["imap", "pop3"])
def test_type1_scenario_then_dedup(protocol, xmpp, bridge):
    with MockMailServer(protocol) as mail:
        plant_scenario(mail)
        cfg, store = bridge(mail)
        report = run_once(cfg, store, timeout=5)
        assert (report.listed, report.new, report.forwarded, report.skipped) == (3, 3, 1, 2)
        assert report.consistent and report.exit_code == 0
        assert len(xmpp.messages()) == 1

        again = run_once(cfg, store, timeout=5)
        assert (again.new, again.forwarded) == (0, 0)
        assert len(xmpp.messages()) == 1


def test_xmpp_down_exit_3_and_state_untouched(state_path):
    with MockMailServer("imap") as mail:
        plant_scenario(mail)
        cfg = parse_config(config_text(unused_port(), [("box", "imap", mail.port)], "type1", state_path), env={})
        store = StateStore(state_path)
        save_state(state_path, {"box": MailboxState("box", {"77": "skipped"})})
        before = open(state_path, "rb").read()
        report = run_once(cfg, store, timeout=5)
        assert report.exit_code == 3
        assert open(state_path, "rb").read() == before
        assert mail.transcript == []


def test_xmpp_auth_rejected_exit_3(state_path):
    with MockMailServer("imap") as mail, MockXmppServer(accept_password=lambda u, p: False) as x:
        plant_scenario(mail)
        cfg = parse_config(config_text(x.port, [("box", "imap", mail.port)], "type1", state_path), env={})
        assert run_once(cfg, StateStore(state_path), timeout=5).exit_code == 3
        assert not os.path.exists(state_path)


def test_mail_down_exit_2(xmpp, state_path):
    cfg = parse_config(config_text(xmpp.port, [("box", "pop3", unused_port())], "type1", state_path), env={})
    report = run_once(cfg, StateStore(state_path), timeout=5)
    assert report.exit_code == 2
    assert report.account_failures[0][0] == "box"


def test_one_bad_account_does_not_block_another(xmpp, bridge):
    with MockMailServer("pop3", faults=FaultPlan(close_after_banner=True)) as bad, MockMailServer("imap") as good:
        plant_scenario(good)
        cfg, store = bridge(bad, good)
        report = run_once(cfg, store, timeout=5)
    assert report.forwarded == 1 and len(report.account_failures) == 1
    assert report.exit_code == 0


def test_per_message_fetch_failure_is_recorded_and_retried(xmpp, bridge):
    with MockMailServer("imap") as mail:
        plant_scenario(mail, n_plain=0, directives=["a@example.org", "b@example.org"])
        # step 5 is the UID FETCH (RFC822) reply for the first uid; a garbled reply
        # ends the account's session, so the second uid is an error too
        cfg, store = bridge(mail)
        mail.faults = FaultPlan(malformed_at_step=5)
        report = run_once(cfg, store, timeout=5)
        assert report.consistent
        assert len(report.errors) == 2 and report.forwarded == 0
        mail.faults = FaultPlan()
        report = run_once(cfg, store, timeout=5)
        assert report.forwarded == 2
        assert [str(m.get("to")) for m in xmpp.messages()] == ["a@example.org", "b@example.org"]


def test_xmpp_lost_mid_run(state_path):
    with MockMailServer("imap") as mail, MockXmppServer(faults=FaultPlan(drop_after_messages=1)) as x:
        plant_scenario(mail, n_plain=0, directives=[f"u{i}@example.org" for i in range(4)])
        cfg = parse_config(config_text(x.port, [("box", "imap", mail.port)], "type1", state_path), env={})
        store = StateStore(state_path)
        report = run_once(cfg, store, timeout=5)
        assert report.consistent
        assert report.forwarded == 1 and report.exit_code == 0
        recorded = load_state(state_path)["box"].processed
        assert len(recorded) == report.forwarded
        x.faults = FaultPlan()
        run_once(cfg, store, timeout=5)
        # the dropped message was never seen, so the retry yields no duplicate
        assert [m.get("to") for m in x.messages()] == [f"u{i}@example.org" for i in range(4)]


def test_each_forward_is_confirmed_by_a_ping(xmpp, bridge):
    with MockMailServer("imap") as mail:
        plant_scenario(mail, n_plain=0, directives=["a@example.org", "b@example.org"])
        cfg, store = bridge(mail)
        run_once(cfg, store, timeout=5)
    assert xmpp.kinds(pings=True) == ["auth", "bind", "presence", "message", "ping", "message", "ping"]


def test_type2_whitelist(xmpp, bridge):
    with MockMailServer("pop3") as mail:
        mail.plant(make_message("hi", sender="Friend <friend@good.example>"))
        mail.plant(make_message("buy now", sender="spammer@evil.example"))
        cfg, store = bridge(mail, mode="type2", recipient="owner@example.org",
                            extra="[whitelist]\nsenders = friend@good.example\n")
        report = run_once(cfg, store, timeout=5)
    assert (report.forwarded, report.rejected) == (1, 1)
    [msg] = xmpp.messages()
    assert msg.get("to") == "owner@example.org"
    assert msg.find("body").text.startswith("From: Friend <friend@good.example>\nSubject: hi\n")
    assert sorted(load_state(cfg.state_path)["box0"].processed.values()) == ["forwarded", "rejected"]


def test_delete_after_forward(xmpp, bridge):
    with MockMailServer("imap") as mail:
        plant_scenario(mail)
        cfg, store = bridge(mail, extra="")
        from dataclasses import replace
        cfg = replace(cfg, delete_after_forward=True)
        run_once(cfg, store, timeout=5)
        assert len(mail.mailbox) == 2
        assert all("USER:" not in m.data.decode() for m in mail.mailbox)
        # forwarded uid vanished from the mailbox; its state entry is pruned next run
        run_once(cfg, store, timeout=5)
        assert set(load_state(cfg.state_path)["box0"].processed.values()) == {"skipped"}


def test_dry_run_is_observationally_pure(xmpp, bridge, capsys):
    with MockMailServer("imap") as mail:
        plant_scenario(mail)
        cfg, store = bridge(mail)
        run_once(cfg, store, timeout=5)
        mail.plant(make_message("USER: late@example.org x"))
        before_state = open(cfg.state_path, "rb").read()
        before_xmpp = list(xmpp.transcript)
        import io
        out = io.StringIO()
        report = run_once(cfg, store, dry_run=True, out=out, timeout=5)
        assert out.getvalue() == "DELIVER late@example.org\n"
        assert report.forwarded == 1
        assert xmpp.transcript == before_xmpp
        assert open(cfg.state_path, "rb").read() == before_state


def test_crash_after_forward_duplicates_but_loses_nothing(xmpp, bridge):
    with MockMailServer("imap") as mail:
        plant_scenario(mail, n_plain=1, directives=["a@example.org", "b@example.org"])
        cfg, store = bridge(mail)
        with pytest.raises(SimulatedCrash):
            run_once(cfg, store, crash_hook=crash_hook("after_forward"), timeout=5)
        assert [m.get("to") for m in xmpp.messages()] == ["a@example.org"]
        report = run_once(cfg, store, timeout=5)
        assert report.forwarded == 2
        assert [m.get("to") for m in xmpp.messages()] == ["a@example.org", "a@example.org", "b@example.org"]


def test_crash_after_state_write_no_duplicate(xmpp, bridge):
    with MockMailServer("imap") as mail:
        plant_scenario(mail, n_plain=1, directives=["a@example.org", "b@example.org"])
        cfg, store = bridge(mail)
        with pytest.raises(SimulatedCrash):
            run_once(cfg, store, crash_hook=crash_hook("after_state_write"), timeout=5)
        run_once(cfg, store, timeout=5)
        assert [m.get("to") for m in xmpp.messages()] == ["a@example.org", "b@example.org"]


def test_no_hook_completes_normally(xmpp, bridge):
    with MockMailServer("imap") as mail:
        plant_scenario(mail)
        cfg, store = bridge(mail)
        assert run_once(cfg, store, crash_hook=None, timeout=5).forwarded == 1


def test_run_once_rejects_pipe_mode(xmpp, bridge):
    with MockMailServer("imap") as mail:
        cfg, store = bridge(mail)
        from dataclasses import replace
        with pytest.raises(ConfigError):
            run_once(replace(cfg, mode="pipe"), store)


_ops = st.lists(st.one_of(
    st.tuples(st.just("plant"), st.booleans()),
    st.tuples(st.just("remove"), st.integers(0, 20)),
    st.tuples(st.just("run"), st.just(None)),
), max_size=12)


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(_ops)
def test_exactly_once_over_clean_runs(xmpp, tmp_path_factory, ops):
    state = str(tmp_path_factory.mktemp("s") / "state")
    with MockMailServer("pop3") as mail:
        cfg = parse_config(config_text(xmpp.port, [("box", "pop3", mail.port)], "type1", state), env={})
        store = StateStore(state)
        start = len(xmpp.messages())
        planted_directives = 0
        previous: dict[str, str] = {}
        for op, arg in ops + [("run", None)]:
            if op == "plant":
                n = planted_directives + 1 if arg else 0
                mail.plant(make_message(f"USER: r{n}@example.org x" if arg else "plain"))
                planted_directives += bool(arg)
            elif op == "remove" and mail.mailbox:
                with mail.lock:
                    del mail._messages[arg % len(mail._messages)]
            elif op == "run":
                report = run_once(cfg, store, timeout=5)
                assert report.consistent
                current = load_state(state).get("box", MailboxState("box")).processed
                live = {m.uid for m in mail.mailbox}
                for uid, disp in previous.items():
                    if uid in live:
                        assert current.get(uid) == disp
                previous = dict(current)
        to = [m.get("to") for m in xmpp.messages()[start:]]
        assert len(to) == len(set(to))


# -- run_loop ---------------------------------------------------------------

def test_interval_must_be_positive(bridge):
    with MockMailServer("imap") as mail:
        cfg, store = bridge(mail)
        with pytest.raises(ConfigError):
            run_loop(cfg, 0, store)


def test_loop_forwards_batches_across_cycles(xmpp, bridge):
    with MockMailServer("imap") as mail:
        mail.plant(make_message("USER: first@example.org a"))
        cfg, store = bridge(mail)
        stop = threading.Event()
        reports = []

        def on_report(report):
            reports.append(report)
            if len(reports) == 1:
                mail.plant(make_message("USER: second@example.org b"))
            else:
                stop.set()

        assert run_loop(cfg, 1, store, stop=stop, on_report=on_report) == 0
    assert [r.forwarded for r in reports] == [1, 1]
    assert [m.get("to") for m in xmpp.messages()] == ["first@example.org", "second@example.org"]


def test_interrupt_during_sleep_exits_cleanly(xmpp, bridge):
    with MockMailServer("imap") as mail:
        cfg, store = bridge(mail)
        timer = threading.Timer(0.3, os.kill, (os.getpid(), signal.SIGINT))
        timer.start()
        try:
            assert run_loop(cfg, 30, store) == 0
        finally:
            timer.cancel()
    assert signal.getsignal(signal.SIGINT) is signal.default_int_handler
