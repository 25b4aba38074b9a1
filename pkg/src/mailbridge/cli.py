"""``mailbridge`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import load_config
from .daemon import EXIT_CONFIG, StateError, StateStore, run_loop, run_once
from .errors import ConfigError
from .pipe import run_pipe


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mailbridge", description="Forward POP3/IMAP or piped email to XMPP users.")
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--mode", choices=("type1", "type2", "pipe"))
    when = p.add_mutually_exclusive_group()
    when.add_argument("--once", action="store_true", help="check mailboxes once and exit (default)")
    when.add_argument("--interval", type=int, metavar="SECONDS", help="poll forever at this interval")
    p.add_argument("--state", metavar="PATH", help="override the state file path")
    p.add_argument("--rcpt", metavar="JID", help="pipe mode: recipient JID")
    p.add_argument("--dry-run", action="store_true",
                   help="print routing decisions; send nothing and leave state untouched")
    p.add_argument("--verbose", action="store_true")
    return p


def setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s %(message)s"))
    root = logging.getLogger("mailbridge")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.WARNING)
    root.propagate = False


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    log = logging.getLogger("mailbridge.cli")
    try:
        config = load_config(args.config, mode=args.mode).with_mode(None)
        if args.state:
            config = replace(config, state_path=args.state)

        if config.mode == "pipe":
            if args.once or args.interval is not None:
                log.warning("--once/--interval have no effect in pipe mode")
            return run_pipe(sys.stdin.buffer.read(), config, args.rcpt,
                            dry_run=args.dry_run, out=sys.stdout)

        if args.rcpt:
            log.warning("--rcpt only applies to pipe mode")
        store = StateStore(config.state_path)
        if args.interval is not None:
            return run_loop(config, args.interval, store, dry_run=args.dry_run, out=sys.stdout)
        report = run_once(config, store, dry_run=args.dry_run, out=sys.stdout)
        if not args.dry_run:
            print(report.summary())
        for uid, reason in report.errors:
            log.warning("uid %s: %s", uid, reason)
        return report.exit_code
    except (ConfigError, StateError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
