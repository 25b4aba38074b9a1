"""INI-style configuration.

Sections::

    [bridge]            mode, state_path, delete_after_forward, max_body_chars,
                        pipe_reject_exit
    [xmpp]              jid, password, host, port, resource, tls, allow_insecure,
                        message_type
    [account NAME]      protocol, host, port, username, password, mailbox, tls,
                        recipient
    [whitelist]         enabled, senders
    [map]               email address = jid

Secrets may also come from MAILBRIDGE_XMPP_PASSWORD and
MAILBRIDGE_MAIL_PASSWORD_<NAME>, which override file values.
"""

from __future__ import annotations

import configparser
import logging
import os
import re
from dataclasses import dataclass, field, replace
from typing import Mapping

from .errors import ConfigError, InvalidJid
from .mail.base import MailAccount
from .redact import Secret
from .router import DEFAULT_MAX_BODY_CHARS, Whitelist
from .xmpp.client import XmppAccount
from .xmpp.jid import Jid, parse_jid

log = logging.getLogger(__name__)

MODES = ("type1", "type2", "pipe")
DEFAULT_STATE_PATH = "mailbridge.state"

_KNOWN = {
    "bridge": {"mode", "state_path", "delete_after_forward", "max_body_chars", "pipe_reject_exit"},
    "xmpp": {"jid", "password", "host", "port", "resource", "tls", "allow_insecure", "message_type"},
    "account": {"protocol", "host", "port", "username", "password", "mailbox", "tls", "recipient"},
    "whitelist": {"enabled", "senders"},
}
_BOOLS = {"true": True, "yes": True, "on": True, "1": True,
          "false": False, "no": False, "off": False, "0": False}


@dataclass(frozen=True)
class AccountConfig:
    name: str
    mail: MailAccount
    default_recipient: Jid | None = None


@dataclass(frozen=True)
class Config:
    mode: str | None
    xmpp: XmppAccount
    accounts: tuple[AccountConfig, ...] = ()
    whitelist: Whitelist = Whitelist()
    delete_after_forward: bool = False
    max_body_chars: int = DEFAULT_MAX_BODY_CHARS
    message_type: str = "normal"
    state_path: str = DEFAULT_STATE_PATH
    address_map: Mapping[str, Jid] = field(default_factory=dict)
    pipe_reject_exit: int = 67

    @property
    def allow_insecure(self) -> bool:
        return self.xmpp.allow_insecure

    def with_mode(self, mode: str | None) -> "Config":
        """Copy with ``mode`` applied (None keeps the current one), re-validated."""
        cfg = replace(self, mode=mode or self.mode)
        validate_mode(cfg)
        return cfg


def validate_mode(cfg: Config) -> None:
    if cfg.mode is None:
        raise ConfigError("bridge", "mode", "no mode given in config or on the command line")
    if cfg.mode not in MODES:
        raise ConfigError("bridge", "mode", f"must be one of {', '.join(MODES)}")
    if cfg.mode in ("type1", "type2") and not cfg.accounts:
        raise ConfigError("account", "", f"mode {cfg.mode} needs at least one [account NAME] section")
    if cfg.mode == "type2":
        for acct in cfg.accounts:
            if acct.default_recipient is None:
                raise ConfigError(f"account {acct.name}", "recipient", "required in type2 mode")


class _Section:
    def __init__(self, title: str, proxy: Mapping[str, str], kind: str):
        self.title = title
        self.values = dict(proxy)
        for key in self.values:
            if key not in _KNOWN.get(kind, self.values.keys()):
                log.warning("unknown key %r in [%s] ignored", key, title)

    def get(self, key: str, default: str | None = None) -> str | None:
        value = self.values.get(key)
        return default if value is None or value == "" else value

    def require(self, key: str) -> str:
        value = self.get(key)
        if value is None:
            raise ConfigError(self.title, key, "missing required key")
        return value

    def integer(self, key: str, default: int, lo: int, hi: int) -> int:
        raw = self.get(key)
        if raw is None:
            return default
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(self.title, key, f"not an integer: {raw!r}") from None
        if not lo <= value <= hi:
            raise ConfigError(self.title, key, f"must be between {lo} and {hi}")
        return value

    def boolean(self, key: str, default: bool) -> bool:
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return _BOOLS[raw.lower()]
        except KeyError:
            raise ConfigError(self.title, key, f"not a boolean: {raw!r}") from None

    def choice(self, key: str, default: str, options: tuple[str, ...]) -> str:
        value = self.get(key, default)
        if value not in options:
            raise ConfigError(self.title, key, f"must be one of {', '.join(options)}")
        return value

    def jid(self, key: str) -> Jid | None:
        raw = self.get(key)
        if raw is None:
            return None
        try:
            return parse_jid(raw)
        except InvalidJid as exc:
            raise ConfigError(self.title, key, str(exc)) from None


def _env_name(account: str) -> str:
    return "MAILBRIDGE_MAIL_PASSWORD_" + re.sub(r"[^A-Za-z0-9]", "_", account).upper()


def parse_config(text: str, env: Mapping[str, str] | None = None, mode: str | None = None) -> Config:
    """Parse configuration text. Raises ConfigError on any problem.

    ``mode``, when given, replaces ``[bridge] mode`` before validation.
    """
    env = os.environ if env is None else env
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=None, default_section="\0defaults")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("", "", f"syntax error: {exc.message if hasattr(exc, 'message') else exc}") from None

    try:
        return _build(parser, env, mode)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError("", "", str(exc)) from None


def _build(parser: configparser.ConfigParser, env: Mapping[str, str], mode_override: str | None) -> Config:
    sections: dict[str, _Section] = {}
    accounts_raw: list[tuple[str, _Section]] = []
    for title in parser.sections():
        words = title.split(None, 1)
        if words and words[0] == "account":
            name = words[1].strip() if len(words) > 1 else ""
            if not name or any(ch in name for ch in "\t\n\r"):
                raise ConfigError(title, "", "account sections need a NAME without tabs or newlines")
            accounts_raw.append((name, _Section(title, parser[title], "account")))
        elif title in ("bridge", "xmpp", "whitelist", "map"):
            sections[title] = _Section(title, parser[title], title)
        else:
            log.warning("unknown section [%s] ignored", title)

    bridge = sections.get("bridge") or _Section("bridge", {}, "bridge")
    mode = mode_override or bridge.get("mode")
    if mode is not None and mode not in MODES:
        raise ConfigError("bridge", "mode", f"must be one of {', '.join(MODES)}")

    if "xmpp" not in sections:
        raise ConfigError("xmpp", "", "missing required section")
    xs = sections["xmpp"]
    jid = xs.jid("jid")
    if jid is None:
        raise ConfigError("xmpp", "jid", "missing required key")
    password = env.get("MAILBRIDGE_XMPP_PASSWORD") or xs.require("password")
    xmpp = XmppAccount(
        jid=jid,
        password=Secret(password),
        host=xs.get("host", jid.domain),
        port=xs.integer("port", 5222, 1, 65535),
        resource=xs.get("resource", "mailbridge"),
        tls=xs.choice("tls", "none", ("none", "implicit")),
        allow_insecure=xs.boolean("allow_insecure", False),
    )
    message_type = xs.get("message_type", "normal")

    accounts = []
    for name, sec in accounts_raw:
        protocol = sec.require("protocol")
        if protocol not in ("pop3", "imap"):
            raise ConfigError(sec.title, "protocol", "must be one of pop3, imap")
        tls = sec.choice("tls", "none", ("none", "implicit"))
        default_port = {"pop3": 110, "imap": 143}[protocol] if tls == "none" else {"pop3": 995, "imap": 993}[protocol]
        mail = MailAccount(
            protocol=protocol,
            host=sec.require("host"),
            port=sec.integer("port", default_port, 1, 65535),
            username=sec.require("username"),
            password=Secret(env.get(_env_name(name)) or sec.require("password")),
            mailbox=sec.get("mailbox", "INBOX"),
            tls=tls,
        )
        accounts.append(AccountConfig(name, mail, sec.jid("recipient")))
    if len({a.name for a in accounts}) != len(accounts):
        raise ConfigError("account", "", "duplicate account names")

    wl = Whitelist()
    if "whitelist" in sections:
        ws = sections["whitelist"]
        senders = [s for s in re.split(r"[\s,]+", ws.get("senders", "")) if s]
        try:
            wl = Whitelist(frozenset(senders), ws.boolean("enabled", True))
        except ValueError as exc:
            raise ConfigError("whitelist", "senders", str(exc)) from None

    address_map = {}
    if "map" in sections:
        for addr, raw in sections["map"].values.items():
            if addr.count("@") != 1:
                raise ConfigError("map", addr, "key must be an email address")
            try:
                address_map[addr.strip().lower()] = parse_jid(raw.strip())
            except InvalidJid as exc:
                raise ConfigError("map", addr, str(exc)) from None

    pipe_reject_exit = bridge.integer("pipe_reject_exit", 67, 0, 255)
    if pipe_reject_exit not in (0, 67):
        raise ConfigError("bridge", "pipe_reject_exit", "must be 67 (bounce) or 0 (drop)")

    cfg = Config(
        mode=mode,
        xmpp=xmpp,
        accounts=tuple(accounts),
        whitelist=wl,
        delete_after_forward=bridge.boolean("delete_after_forward", False),
        max_body_chars=bridge.integer("max_body_chars", DEFAULT_MAX_BODY_CHARS, 1, 1 << 30),
        message_type=message_type,
        state_path=bridge.get("state_path", DEFAULT_STATE_PATH),
        address_map=address_map,
        pipe_reject_exit=pipe_reject_exit,
    )
    if mode is not None:
        validate_mode(cfg)
    return cfg


def load_config(path: str, env: Mapping[str, str] | None = None, mode: str | None = None) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError("", "", f"cannot read {path}: {exc}") from None
    return parse_config(text, env, mode)
