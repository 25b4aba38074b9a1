"""Scripted XMPP server: stream headers, SASL PLAIN, bind, and stanza recording."""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass
from typing import Callable

from ..errors import MalformedXml
from ..xmpp.client import NS_BIND, NS_CLIENT, NS_SASL, NS_STREAM, NS_STREAMS_ERR
from ..xmpp.stanza import Stanza, XmlStreamReader, serialize_stanza
from .base import Conn, MockServer, _Closed
from .faults import FaultPlan


@dataclass(frozen=True)
class Received:
    kind: str  # auth | bind | presence | message | ping | iq | other
    stanza: Stanza


def _accept_all(user: str, password: str) -> bool:
    return True


class MockXmppServer(MockServer):
    """Accepts client streams for ``domain`` and records what clients send.

    ``recipient_offline`` is accepted for scenario symmetry only: offline
    storage is the server's business, so the transcript does not change.
    """

    def __init__(self, domain: str = "example.org",
                 accept_password: Callable[[str, str], bool] = _accept_all,
                 faults: FaultPlan | None = None, assign_resource: str | None = None,
                 recipient_offline: bool = False, advertise_bind_early: bool = False):
        super().__init__()
        self.domain = domain
        self.accept_password = accept_password
        self.faults = faults or FaultPlan()
        self.assign_resource = assign_resource
        self.recipient_offline = recipient_offline
        self.advertise_bind_early = advertise_bind_early
        self.transcript: list[Received] = []
        self._stream_ids = 0

    def kinds(self, pings: bool = False) -> list[str]:
        """Kinds of received stanzas in order; delivery-receipt pings omitted unless asked for."""
        with self.lock:
            return [r.kind for r in self.transcript if pings or r.kind != "ping"]

    def messages(self) -> list[Stanza]:
        with self.lock:
            return [r.stanza for r in self.transcript if r.kind == "message"]

    def serialized_messages(self) -> list[str]:
        return [serialize_stanza(s) for s in self.messages()]

    def _record(self, kind: str, stanza: Stanza) -> None:
        with self.lock:
            self.transcript.append(Received(kind, stanza))

    def serve(self, conn: Conn) -> None:
        _XmppConversation(self, conn).run()


class _XmppConversation:
    def __init__(self, server: MockXmppServer, conn: Conn):
        self.server = server
        self.conn = conn
        self.reader = XmlStreamReader()
        self.user: str | None = None
        self.bound = False
        self.messages = 0

    def send(self, text: str) -> None:
        self.conn.write(text.encode("utf-8"))

    def run(self) -> None:
        while True:
            data = self.conn.sock.recv(65536)
            if not data:
                return
            try:
                events = self.reader.feed(data)
            except MalformedXml:
                self.send(f'<stream:error><bad-format xmlns="{NS_STREAMS_ERR}"></bad-format></stream:error>'
                          "</stream:stream>")
                return
            for kind, payload in events:
                if kind == "open":
                    if not self.open_stream():
                        return
                elif kind == "close":
                    self.send("</stream:stream>")
                    return
                elif not self.stanza(payload):
                    return

    def open_stream(self) -> bool:
        faults = self.server.faults
        with self.server.lock:
            self.server._stream_ids += 1
            sid = self.server._stream_ids
        self.send(f"<?xml version='1.0'?><stream:stream from=\"{self.server.domain}\" id=\"s{sid}\" "
                  f'xmlns="{NS_CLIENT}" xmlns:stream="{NS_STREAM}" version="1.0">')
        if faults.close_after_banner:
            return False
        if faults.stream_error:
            self.send(f'<stream:error><{faults.stream_error} xmlns="{NS_STREAMS_ERR}"></{faults.stream_error}>'
                      "</stream:error></stream:stream>")
            return False
        features = ""
        if self.user is None:
            features += (f'<mechanisms xmlns="{NS_SASL}"><mechanism>PLAIN</mechanism></mechanisms>')
        if self.user is not None or self.server.advertise_bind_early:
            features += f'<bind xmlns="{NS_BIND}"></bind>'
        self.send(f"<stream:features>{features}</stream:features>")
        return True

    def stanza(self, s: Stanza) -> bool:
        if s.name == "auth":
            return self.auth(s)
        if self.user is None:
            self.send(f'<stream:error><not-authorized xmlns="{NS_STREAMS_ERR}"></not-authorized>'
                      "</stream:error></stream:stream>")
            return False
        if s.name == "iq" and s.find("bind") is not None:
            return self.bind(s)
        if s.name == "iq" and s.find("ping") is not None:
            self.server._record("ping", s)
            self.send(f'<iq type="result" id="{s.get("id", "")}"></iq>')
            return True
        if s.name == "message":
            limit = self.server.faults.drop_after_messages
            if limit is not None and self.messages >= limit:
                return False  # dropped unseen: never recorded, never acknowledged
            self.messages += 1
        if s.name in ("presence", "message"):
            self.server._record(s.name, s)
            return True
        self.server._record("iq" if s.name == "iq" else "other", s)
        return True

    def auth(self, s: Stanza) -> bool:
        self.server._record("auth", s)
        try:
            parts = base64.b64decode(s.text.strip(), validate=True).split(b"\0")
        except (binascii.Error, ValueError):
            parts = []
        ok = False
        if len(parts) == 3 and s.get("mechanism") == "PLAIN":
            user = parts[1].decode("utf-8", "replace")
            ok = bool(user) and self.server.accept_password(user, parts[2].decode("utf-8", "replace"))
        if not ok:
            self.send(f'<failure xmlns="{NS_SASL}"><not-authorized></not-authorized></failure></stream:stream>')
            return False
        self.user = user
        self.send(f'<success xmlns="{NS_SASL}"></success>')
        # the client restarts the stream on a fresh parser
        self.reader.reset()
        return True

    def bind(self, s: Stanza) -> bool:
        self.server._record("bind", s)
        bind = s.find("bind")
        requested = bind.find("resource") if bind is not None else None
        resource = self.server.assign_resource or (requested.text if requested is not None else "") or "auto"
        jid = f"{self.user}@{self.server.domain}/{resource}"
        self.send(f'<iq type="result" id="{s.get("id", "")}"><bind xmlns="{NS_BIND}"><jid>{jid}</jid></bind></iq>')
        self.bound = True
        return True


__all__ = ["MockXmppServer", "Received", "_Closed"]
