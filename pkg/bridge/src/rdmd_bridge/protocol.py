"""RDMD framed tensor protocol, server-side implementation.

Wire layout (little-endian), one frame per message:

    "RDMD" | version u32 = 1 | msg_type u8 | payload_len u64 | payload

    msg_type 1  eps_request  : t_index u32, alpha_bar f64, ndim u32 = 3,
                               dims 3*u32, float32 data
    msg_type 2  eps_response : ndim u32, dims ndim*u32, float32 data
    msg_type 3  error        : UTF-8 text
    msg_type 4  handshake    : t_train u32, beta_start f64, beta_end f64,
                               ndim u32, dims ndim*u32

Clients send a handshake first; the server answers with its own
handshake (schedule and shape it will serve) or an error frame, and only
then accepts eps_requests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"RDMD"
VERSION = 1
HEADER = struct.Struct("<4sIBQ")
MAX_PAYLOAD = 1 << 32

T_EPS_REQUEST = 1
T_EPS_RESPONSE = 2
T_ERROR = 3
T_HANDSHAKE = 4


class FrameError(Exception):
    """Raised for malformed frames or a closed stream."""


class ConnectionClosed(FrameError):
    """The peer closed the stream cleanly, at a frame boundary."""


@dataclass(frozen=True)
class EpsRequest:
    t_index: int
    alpha_bar: float
    data: np.ndarray


@dataclass(frozen=True)
class EpsResponse:
    data: np.ndarray


@dataclass(frozen=True)
class ErrorFrame:
    message: str


@dataclass(frozen=True)
class Handshake:
    t_train: int
    beta_start: float
    beta_end: float
    dims: tuple[int, ...]


def _dims_header(arr: np.ndarray) -> bytes:
    return struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)


def _take_dims(payload: bytes, offset: int) -> tuple[tuple[int, ...], int]:
    if len(payload) < offset + 4:
        raise FrameError("payload ends before ndim")
    (ndim,) = struct.unpack_from("<I", payload, offset)
    offset += 4
    if not (1 <= ndim <= 8):
        raise FrameError(f"implausible ndim {ndim}")
    if len(payload) < offset + 4 * ndim:
        raise FrameError("payload ends inside dims")
    dims = struct.unpack_from(f"<{ndim}I", payload, offset)
    return tuple(int(d) for d in dims), offset + 4 * ndim


def _take_tensor(payload: bytes, offset: int) -> np.ndarray:
    dims, offset = _take_dims(payload, offset)
    count = int(np.prod(dims))
    if len(payload) != offset + 4 * count:
        raise FrameError("tensor byte count does not match dims")
    return np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(dims)


def encode(msg) -> bytes:
    if isinstance(msg, EpsRequest):
        arr = np.ascontiguousarray(msg.data, dtype="<f4")
        payload = struct.pack("<Id", msg.t_index, msg.alpha_bar) + _dims_header(arr) + arr.tobytes()
        msg_type = T_EPS_REQUEST
    elif isinstance(msg, EpsResponse):
        arr = np.ascontiguousarray(msg.data, dtype="<f4")
        payload = _dims_header(arr) + arr.tobytes()
        msg_type = T_EPS_RESPONSE
    elif isinstance(msg, ErrorFrame):
        payload = msg.message.encode("utf-8")
        msg_type = T_ERROR
    elif isinstance(msg, Handshake):
        payload = struct.pack(
            f"<IddI{len(msg.dims)}I",
            msg.t_train, msg.beta_start, msg.beta_end, len(msg.dims), *msg.dims,
        )
        msg_type = T_HANDSHAKE
    else:
        raise FrameError(f"cannot encode {type(msg).__name__}")
    return HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def decode(msg_type: int, payload: bytes):
    if msg_type == T_EPS_REQUEST:
        if len(payload) < 12:
            raise FrameError("eps_request payload too short")
        t_index, alpha_bar = struct.unpack_from("<Id", payload, 0)
        data = _take_tensor(payload, 12)
        if data.ndim != 3:
            raise FrameError(f"eps_request tensor must be 3-D, got {data.ndim}-D")
        return EpsRequest(int(t_index), float(alpha_bar), data)
    if msg_type == T_EPS_RESPONSE:
        return EpsResponse(_take_tensor(payload, 0))
    if msg_type == T_ERROR:
        return ErrorFrame(payload.decode("utf-8", errors="replace"))
    if msg_type == T_HANDSHAKE:
        if len(payload) < 20:
            raise FrameError("handshake payload too short")
        t_train, b0, b1 = struct.unpack_from("<Idd", payload, 0)
        dims, end = _take_dims(payload, 20)
        if end != len(payload):
            raise FrameError("trailing bytes after handshake dims")
        return Handshake(int(t_train), float(b0), float(b1), dims)
    raise FrameError(f"unknown msg_type {msg_type}")


class Stream:
    """Blocking reader/writer over raw read/write callables."""

    def __init__(self, read, write, flush=lambda: None):
        self._read = read
        self._write = write
        self._flush = flush

    def _read_exactly(self, n: int, at_boundary: bool = False) -> bytes:
        parts = []
        remaining = n
        while remaining:
            chunk = self._read(remaining)
            if not chunk:
                if at_boundary and not parts:
                    raise ConnectionClosed("peer closed the stream")
                raise FrameError("stream closed mid-frame")
            parts.append(chunk)
            remaining -= len(chunk)
        return b"".join(parts)

    def recv(self):
        header = self._read_exactly(HEADER.size, at_boundary=True)
        magic, version, msg_type, length = HEADER.unpack(header)
        if magic != MAGIC:
            raise FrameError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FrameError(f"unsupported version {version}")
        if length > MAX_PAYLOAD:
            raise FrameError(f"payload length {length} over sanity bound")
        payload = self._read_exactly(length) if length else b""
        return decode(msg_type, payload)

    def send(self, msg) -> None:
        self._write(encode(msg))
        self._flush()
