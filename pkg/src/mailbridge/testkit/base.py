from __future__ import annotations

import socket
import socketserver
import threading
from typing import Callable

from .faults import FaultPlan


class _Closed(Exception):
    pass


class Conn:
    """Server side of one client connection with fault injection on writes."""

    def __init__(self, sock: socket.socket, faults: FaultPlan):
        self.sock = sock
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.file = sock.makefile("rb")
        self.faults = faults
        self.sent = 0
        self.step = 0

    def write(self, data: bytes) -> None:
        limit = self.faults.close_after_octets
        if limit is not None and self.sent + len(data) > limit:
            self.sock.sendall(data[:max(0, limit - self.sent)])
            raise _Closed()
        self.sent += len(data)
        self.sock.sendall(data)

    def reply(self, data: bytes, record: Callable[[bytes], None] | None = None) -> bytes:
        """Send one numbered reply, substituting garbage at the faulty step.

        ``record`` sees the octets actually going out before they are
        written, so a transcript never lags behind what the client read.
        """
        if self.faults.malformed_at_step == self.step:
            data = b"?? injected malformed line\r\n"
        self.step += 1
        limit = self.faults.close_after_octets
        outgoing = data if limit is None else data[:max(0, limit - self.sent)]
        if record is not None:
            record(outgoing)
        self.write(data)
        return outgoing

    def readline(self) -> bytes:
        line = self.file.readline(1 << 20)
        if not line:
            raise _Closed()
        return line

    def read(self, n: int) -> bytes:
        data = self.file.read(n)
        if len(data) != n:
            raise _Closed()
        return data


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class MockServer:
    """Threaded loopback server on an ephemeral port; use as a context manager."""

    faults: FaultPlan

    def __init__(self):
        self.lock = threading.RLock()
        self.connections = 0
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                with outer.lock:
                    outer.connections += 1
                if outer.faults.close_on_accept:
                    return
                conn = Conn(self.request, outer.faults)
                try:
                    outer.serve(conn)
                except (_Closed, OSError):
                    pass
                finally:
                    try:
                        self.request.shutdown(socket.SHUT_RDWR)
                    except OSError:
                        pass

        self._server = _TCPServer(("127.0.0.1", 0), Handler)
        self._thread: threading.Thread | None = None

    @property
    def host(self) -> str:
        return "127.0.0.1"

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def serve(self, conn: Conn) -> None:
        raise NotImplementedError

    def start(self):
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.02},
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
