"""Blocking line-oriented TCP transport used by the mail and XMPP clients."""

from __future__ import annotations

import socket
import ssl

from .errors import TransportError

CRLF = b"\r\n"
MAX_LINE = 64 * 1024


def open_socket(host: str, port: int, tls: str = "none", timeout: float | None = 30.0) -> socket.socket:
    """Connect to host:port, wrapping in TLS first when ``tls == "implicit"``."""
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
    # lock-step protocols: Nagle plus delayed ACK would stall every small write
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    if tls == "implicit":
        ctx = ssl.create_default_context()
        try:
            sock = ctx.wrap_socket(sock, server_hostname=host)
        except (OSError, ssl.SSLError) as exc:
            sock.close()
            raise TransportError(f"TLS handshake with {host}:{port} failed: {exc}") from exc
    elif tls != "none":
        sock.close()
        raise ValueError(f"unsupported tls mode {tls!r}")
    return sock


class LineTransport:
    """CRLF on send; CRLF or bare LF accepted on receive."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._file = sock.makefile("rb")

    @classmethod
    def connect(cls, host: str, port: int, tls: str = "none", timeout: float | None = 30.0) -> "LineTransport":
        return cls(open_socket(host, port, tls, timeout))

    def readline(self) -> bytes:
        """Next line with its terminator stripped."""
        try:
            line = self._file.readline(MAX_LINE + 1)
        except OSError as exc:
            raise TransportError(f"read failed: {exc}") from exc
        if not line:
            raise TransportError("connection closed by peer")
        if len(line) > MAX_LINE:
            raise TransportError("line too long")
        if line.endswith(b"\n"):
            line = line[:-1]
            if line.endswith(b"\r"):
                line = line[:-1]
        return line

    def readline_raw(self) -> bytes:
        """Next line including its terminator, as sent by the peer."""
        try:
            line = self._file.readline(MAX_LINE + 1)
        except OSError as exc:
            raise TransportError(f"read failed: {exc}") from exc
        if not line:
            raise TransportError("connection closed by peer")
        return line

    def read_exact(self, n: int) -> bytes:
        try:
            data = self._file.read(n)
        except OSError as exc:
            raise TransportError(f"read failed: {exc}") from exc
        if data is None or len(data) != n:
            raise TransportError(f"connection closed after {len(data or b'')} of {n} octets")
        return data

    def send(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"write failed: {exc}") from exc

    def send_line(self, line: str | bytes) -> None:
        if isinstance(line, str):
            line = line.encode("utf-8")
        self.send(line + CRLF)

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            try:
                self.sock.close()
            except OSError:
                pass
