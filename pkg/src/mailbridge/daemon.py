"""Checker-mode orchestration: persisted dedup state, the per-run pipeline and the poll loop.

Per message the order is always forward, then record, then (optionally)
delete. A crash between forwarding and recording can therefore cause a
duplicate delivery on the next run, but never a lost message.
"""

from __future__ import annotations

import copy
import logging
import os
import signal
import tempfile
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, TextIO

from .config import Config
from .errors import (AuthError, ConfigError, MailbridgeError, ProtocolError, TransportError,
                     UnknownUid)
from .mail import MailSession, open_mailbox, parse_message
from .router import route
from .xmpp.client import SESSION_ERRORS as XMPP_ERRORS, XmppClient, open_session

log = logging.getLogger(__name__)

DISPOSITIONS = ("forwarded", "skipped", "rejected")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MAIL = 2
EXIT_XMPP = 3

MAIL_ERRORS = (TransportError, AuthError, ProtocolError)


class StateError(MailbridgeError):
    """The state file could not be read or written."""


@dataclass
class MailboxState:
    account_id: str
    processed: dict[str, str] = field(default_factory=dict)

    def record(self, uid: str, disposition: str) -> None:
        if disposition not in DISPOSITIONS:
            raise ValueError(f"unknown disposition {disposition!r}")
        if uid in self.processed:
            raise ValueError(f"uid {uid!r} already recorded as {self.processed[uid]}")
        self.processed[uid] = disposition


def load_state(path: str) -> dict[str, MailboxState]:
    """Read the state file; a missing file is an empty state."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        return {}
    except OSError as exc:
        raise StateError(f"cannot read state file {path}: {exc}") from exc
    states: dict[str, MailboxState] = {}
    for lineno, raw in enumerate(data.split(b"\n"), 1):
        if not raw.strip():
            continue
        try:
            line = raw.rstrip(b"\r").decode("utf-8")
        except UnicodeDecodeError:
            log.warning("%s:%d: undecodable line skipped", path, lineno)
            continue
        fields = line.split("\t")
        if len(fields) != 3 or not fields[0] or not fields[1] or fields[2] not in DISPOSITIONS:
            log.warning("%s:%d: corrupt state line skipped", path, lineno)
            continue
        account_id, uid, disposition = fields
        state = states.setdefault(account_id, MailboxState(account_id))
        if uid in state.processed:
            log.warning("%s:%d: duplicate uid %r ignored", path, lineno, uid)
            continue
        state.processed[uid] = disposition
    return states


def save_state(path: str, states: Mapping[str, MailboxState]) -> None:
    """Write all states to a temporary file, then atomically rename it over ``path``."""
    lines = []
    for account_id in sorted(states):
        for uid, disposition in states[account_id].processed.items():
            lines.append(f"{account_id}\t{uid}\t{disposition}\n")
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".mailbridge-state-", dir=directory)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("".join(lines))
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
    except OSError as exc:
        raise StateError(f"cannot write state file {path}: {exc}") from exc


class StateStore:
    """Single writer for the state file."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def load(self) -> dict[str, MailboxState]:
        with self._lock:
            return load_state(self.path)

    def save(self, states: Mapping[str, MailboxState]) -> None:
        with self._lock:
            save_state(self.path, states)


def detect_new(state: MailboxState, listing: Iterable[str]) -> list[str]:
    """Uids of ``listing`` not yet processed, in listing order.

    Entries for uids no longer in the mailbox are pruned from ``state``.
    """
    listing = list(listing)
    present = set(listing)
    for uid in [u for u in state.processed if u not in present]:
        del state.processed[uid]
    return [uid for uid in listing if uid not in state.processed]


@dataclass
class RunReport:
    listed: int = 0
    new: int = 0
    forwarded: int = 0
    skipped: int = 0
    rejected: int = 0
    errors: list[tuple[str, str]] = field(default_factory=list)
    account_failures: list[tuple[str, str]] = field(default_factory=list)
    xmpp_failure: str | None = None

    @property
    def consistent(self) -> bool:
        return self.new == self.forwarded + self.skipped + self.rejected + len(self.errors)

    @property
    def exit_code(self) -> int:
        if self.forwarded == 0:
            if self.xmpp_failure:
                return EXIT_XMPP
            if self.account_failures:
                return EXIT_MAIL
        return EXIT_OK

    def summary(self) -> str:
        return (f"listed={self.listed} new={self.new} forwarded={self.forwarded} "
                f"skipped={self.skipped} rejected={self.rejected} errors={len(self.errors)}")


CrashHook = Callable[[str], None]


def _no_hook(phase: str) -> None:
    pass


class _Run:
    def __init__(self, config: Config, store: StateStore, dry_run: bool, crash_hook: CrashHook,
                 out: TextIO | None, timeout: float | None):
        self.config = config
        self.store = store
        self.dry_run = dry_run
        self.hook = crash_hook
        self.out = out
        self.timeout = timeout
        self.report = RunReport()
        self.client: XmppClient | None = None

    def execute(self) -> RunReport:
        states = self.store.load()
        if self.dry_run:
            states = copy.deepcopy(states)
        else:
            try:
                self.client = open_session(self.config.xmpp, self.timeout)
            except XMPP_ERRORS as exc:
                log.error("XMPP connection failed: %s", exc)
                self.report.xmpp_failure = str(exc)
                return self.report
        try:
            for acct in self.config.accounts:
                if self.report.xmpp_failure:
                    break
                state = states.setdefault(acct.name, MailboxState(acct.name))
                self._account(acct, state, states)
        except BaseException:
            if self.client is not None:
                self.client.abort()
            raise
        if self.client is not None:
            if self.report.xmpp_failure:
                self.client.abort()
            else:
                self.client.close()
        return self.report

    def _account(self, acct, state: MailboxState, states) -> None:
        try:
            session = open_mailbox(acct.mail, delete_enabled=self.config.delete_after_forward,
                                   timeout=self.timeout)
        except MAIL_ERRORS as exc:
            log.error("account %s: connect failed: %s", acct.name, exc)
            self.report.account_failures.append((acct.name, str(exc)))
            return
        with session:
            try:
                listing = [uid for uid, _size in session.list()]
            except MAIL_ERRORS as exc:
                log.error("account %s: listing failed: %s", acct.name, exc)
                self.report.account_failures.append((acct.name, str(exc)))
                return
            self.report.listed += len(listing)
            new = detect_new(state, listing)
            self.report.new += len(new)
            log.info("account %s: %d listed, %d new", acct.name, len(listing), len(new))
            for i, uid in enumerate(new):
                broken = self._message(acct, session, state, states, uid)
                if broken:
                    for rest in new[i + 1:]:
                        self.report.errors.append((rest, broken))
                    break
            if not self.dry_run:
                self.store.save(states)

    def _message(self, acct, session: MailSession, state: MailboxState, states, uid: str) -> str | None:
        """Handle one new uid; returns a reason string when the session became unusable."""
        report = self.report
        try:
            raw = session.fetch(uid)
        except (TransportError, ProtocolError) as exc:
            # the stream may be out of step; nothing more can be trusted on it
            report.errors.append((uid, f"fetch failed: {exc}"))
            return "mail session lost"
        except UnknownUid as exc:
            report.errors.append((uid, f"fetch failed: {exc}"))
            return None
        msg = parse_message(raw.data, uid)
        decision = route(self.config.mode, msg, acct.default_recipient, self.config.whitelist,
                         self.config.max_body_chars)
        if self.dry_run:
            print(decision.summary(), file=self.out, flush=True)
            self._count(decision.kind)
            return None
        if decision.kind != "deliver":
            log.info("account %s: uid %s %s: %s", acct.name, uid, decision.kind, decision.reason)
            state.record(uid, "skipped" if decision.kind == "skip" else "rejected")
            self._count(decision.kind)
            return None

        assert self.client is not None
        try:
            self.client.send_message(decision.recipient, decision.body, self.config.message_type)
        except XMPP_ERRORS as exc:
            report.errors.append((uid, f"delivery failed: {exc}"))
            report.xmpp_failure = str(exc)
            return "xmpp session lost"
        log.info("account %s: uid %s forwarded to %s", acct.name, uid, decision.recipient)
        self.hook("after_forward")
        state.record(uid, "forwarded")
        self.store.save(states)
        self.hook("after_state_write")
        report.forwarded += 1
        if self.config.delete_after_forward:
            try:
                session.delete(uid)
            except (UnknownUid, ProtocolError) as exc:
                log.warning("account %s: delete of %s failed: %s", acct.name, uid, exc)
            except TransportError as exc:
                log.warning("account %s: delete of %s failed: %s", acct.name, uid, exc)
                return "mail session lost"
        return None

    def _count(self, kind: str) -> None:
        if kind == "deliver":
            self.report.forwarded += 1
        elif kind == "skip":
            self.report.skipped += 1
        else:
            self.report.rejected += 1


def run_once(config: Config, store: StateStore, *, dry_run: bool = False,
             crash_hook: CrashHook | None = None, out: TextIO | None = None,
             timeout: float | None = 30.0) -> RunReport:
    """Check every configured mailbox once and forward what is new.

    With ``dry_run`` nothing is sent and the state file is left alone;
    each routing decision is printed to ``out`` instead.
    """
    if config.mode not in ("type1", "type2"):
        raise ConfigError("bridge", "mode", f"run_once needs type1 or type2, not {config.mode}")
    report = _Run(config, store, dry_run, crash_hook or _no_hook, out, timeout).execute()
    log.info("run finished: %s", report.summary())
    return report


def run_loop(config: Config, interval_seconds: int, store: StateStore, *,
             stop: threading.Event | None = None,
             on_report: Callable[[RunReport], None] | None = None,
             dry_run: bool = False, out: TextIO | None = None) -> int:
    """Run until interrupted, sleeping ``interval_seconds`` between runs.

    SIGINT/SIGTERM (when called from the main thread) or setting ``stop``
    end the loop once the in-flight run has finished.
    """
    if not isinstance(interval_seconds, int) or interval_seconds < 1:
        raise ConfigError("cli", "interval", "must be an integer >= 1")
    stop = stop or threading.Event()
    previous = {}
    if threading.current_thread() is threading.main_thread():
        def _handler(signum, frame):
            log.info("signal %d received; stopping after the current run", signum)
            stop.set()
        for sig in (signal.SIGINT, signal.SIGTERM):
            previous[sig] = signal.signal(sig, _handler)
    try:
        while not stop.is_set():
            try:
                report = run_once(config, store, dry_run=dry_run, out=out)
            except ConfigError:
                raise
            except MailbridgeError as exc:
                log.error("run failed: %s", exc)
            else:
                if on_report is not None:
                    on_report(report)
            stop.wait(interval_seconds)
    finally:
        for sig, handler in previous.items():
            signal.signal(sig, handler)
    return EXIT_OK
