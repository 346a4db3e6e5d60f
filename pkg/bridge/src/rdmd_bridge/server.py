"""Connection handling: handshake gate, then sequential eps service.

A connection must open with a handshake.  The server validates the
client's schedule descriptor against what it serves and answers with its
own handshake frame; mismatches get an error frame and no predictions.
Each subsequent eps_request is answered in order (one in flight per
connection).  Corrupt frames get an error frame, then the connection is
dropped.
"""

from __future__ import annotations

import socket
import sys
import threading
from dataclasses import dataclass

import numpy as np

from . import protocol as proto
from .wiener import WienerStub


@dataclass(frozen=True)
class ScheduleGuard:
    """Expected client schedule; None fields accept anything."""

    t_train: int | None = None
    beta_start: float | None = None
    beta_end: float | None = None
    shape: tuple[int, ...] | None = None

    def mismatch(self, hs: proto.Handshake) -> str | None:
        if self.t_train is not None and hs.t_train != self.t_train:
            return f"schedule mismatch: serving t_train={self.t_train}, client sent {hs.t_train}"
        if self.beta_start is not None and abs(hs.beta_start - self.beta_start) > 1e-12:
            return (
                f"schedule mismatch: serving beta_start={self.beta_start}, "
                f"client sent {hs.beta_start}"
            )
        if self.beta_end is not None and abs(hs.beta_end - self.beta_end) > 1e-12:
            return (
                f"schedule mismatch: serving beta_end={self.beta_end}, "
                f"client sent {hs.beta_end}"
            )
        if self.shape is not None and tuple(hs.dims) != tuple(self.shape):
            return f"shape mismatch: serving {self.shape}, client sent {tuple(hs.dims)}"
        return None


class CheckpointBackend:
    """Serves eps from a loaded checkpoint; schedule pinned by the file."""

    def __init__(self, handle):
        self.handle = handle
        self.guard = ScheduleGuard(
            t_train=handle.t_train,
            beta_start=handle.beta_start,
            beta_end=handle.beta_end,
            shape=handle.shape,
        )

    def advertise(self, hs: proto.Handshake) -> proto.Handshake:
        return proto.Handshake(
            t_train=self.handle.t_train,
            beta_start=self.handle.beta_start,
            beta_end=self.handle.beta_end,
            dims=tuple(self.handle.shape),
        )

    def eps(self, request: proto.EpsRequest) -> np.ndarray:
        return self.handle.predict_eps(request.data, request.t_index)


class StubWienerBackend:
    """Analytic prediction; accepts any schedule unless a guard is given."""

    def __init__(self, stub: WienerStub, guard: ScheduleGuard | None = None):
        self.stub = stub
        self.guard = guard or ScheduleGuard()

    def advertise(self, hs: proto.Handshake) -> proto.Handshake:
        return proto.Handshake(
            t_train=self.guard.t_train if self.guard.t_train is not None else hs.t_train,
            beta_start=self.guard.beta_start if self.guard.beta_start is not None else hs.beta_start,
            beta_end=self.guard.beta_end if self.guard.beta_end is not None else hs.beta_end,
            dims=tuple(self.guard.shape) if self.guard.shape is not None else hs.dims,
        )

    def eps(self, request: proto.EpsRequest) -> np.ndarray:
        return self.stub.predict_eps(request.data, request.alpha_bar)


def handle_connection(stream: proto.Stream, backend) -> None:
    accepted_dims: tuple[int, ...] | None = None
    while True:
        try:
            msg = stream.recv()
        except proto.ConnectionClosed:
            return
        except proto.FrameError as exc:
            try:
                stream.send(proto.ErrorFrame(f"protocol error: {exc}"))
            except Exception:
                pass
            return
        if isinstance(msg, proto.Handshake):
            problem = backend.guard.mismatch(msg)
            if problem is not None:
                stream.send(proto.ErrorFrame(problem))
                continue
            reply = backend.advertise(msg)
            accepted_dims = tuple(msg.dims)
            stream.send(reply)
        elif isinstance(msg, proto.EpsRequest):
            if accepted_dims is None:
                stream.send(proto.ErrorFrame("handshake required before eps requests"))
                continue
            if tuple(msg.data.shape) != accepted_dims:
                stream.send(
                    proto.ErrorFrame(
                        f"shape mismatch: handshake fixed {accepted_dims}, "
                        f"request carries {tuple(msg.data.shape)}"
                    )
                )
                continue
            eps = backend.eps(msg)
            stream.send(proto.EpsResponse(data=eps))
        else:
            stream.send(proto.ErrorFrame(f"unexpected {type(msg).__name__}"))


def serve_stdio(backend) -> None:
    stream = proto.Stream(
        sys.stdin.buffer.read, sys.stdout.buffer.write, sys.stdout.buffer.flush
    )
    handle_connection(stream, backend)


def serve_tcp(backend, port: int) -> None:
    """Listen forever; one sequential worker thread per connection."""
    listener = socket.create_server(("127.0.0.1", port))
    actual_port = listener.getsockname()[1]
    print(f"listening on tcp:127.0.0.1:{actual_port}", file=sys.stderr, flush=True)

    def worker(conn: socket.socket) -> None:
        with conn:
            file = conn.makefile("rwb")
            stream = proto.Stream(file.read1, file.write, file.flush)
            handle_connection(stream, backend)

    while True:
        conn, _ = listener.accept()
        threading.Thread(target=worker, args=(conn,), daemon=True).start()
