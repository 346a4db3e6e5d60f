"""Framed tensor wire protocol for out-of-process denoiser backends.

Byte layout (all little-endian):

    frame   = magic "RDMD" | version u32 = 1 | msg_type u8 | payload_len u64 | payload
    type 1  eps_request  = t_index u32 | alpha_bar f64 | ndim u32 = 3 | dims 3*u32 | float32 data
    type 2  eps_response = ndim u32 | dims ndim*u32 | float32 data
    type 3  error        = UTF-8 message
    type 4  handshake    = t_train u32 | beta_start f64 | beta_end f64 | ndim u32 | dims ndim*u32

Tensors travel as float32 (the native precision of neural checkpoints);
in-process math upcasts to float64, so cross-process parity bottoms out
around 1e-6 relative.  The handshake is exchanged once per connection
before any eps_request so a server can reject a mismatched schedule early.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Union

import numpy as np

from .errors import ProtocolError

MAGIC = b"RDMD"
VERSION = 1
MAX_PAYLOAD = 1 << 32  # sanity bound against corrupt length fields

_HEADER = struct.Struct("<4sIBQ")


class MsgType(IntEnum):
    EPS_REQUEST = 1
    EPS_RESPONSE = 2
    ERROR = 3
    HANDSHAKE = 4


@dataclass(frozen=True)
class EpsRequest:
    t_index: int
    alpha_bar: float
    data: np.ndarray  # float32, 3-D


@dataclass(frozen=True)
class EpsResponse:
    data: np.ndarray  # float32


@dataclass(frozen=True)
class ErrorFrame:
    message: str


@dataclass(frozen=True)
class Handshake:
    t_train: int
    beta_start: float
    beta_end: float
    dims: tuple[int, ...]


Message = Union[EpsRequest, EpsResponse, ErrorFrame, Handshake]


def _pack_dims(data: np.ndarray) -> bytes:
    return struct.pack(f"<I{data.ndim}I", data.ndim, *data.shape)


def _unpack_dims(payload: bytes, offset: int) -> tuple[tuple[int, ...], int]:
    if len(payload) < offset + 4:
        raise ProtocolError("payload truncated before ndim")
    (ndim,) = struct.unpack_from("<I", payload, offset)
    offset += 4
    if ndim == 0 or ndim > 8:
        raise ProtocolError(f"implausible tensor ndim {ndim}")
    if len(payload) < offset + 4 * ndim:
        raise ProtocolError("payload truncated inside dims")
    dims = struct.unpack_from(f"<{ndim}I", payload, offset)
    return tuple(int(d) for d in dims), offset + 4 * ndim


def _unpack_tensor(payload: bytes, offset: int) -> np.ndarray:
    dims, offset = _unpack_dims(payload, offset)
    count = int(np.prod(dims))
    expected = offset + 4 * count
    if len(payload) != expected:
        raise ProtocolError(
            f"tensor payload length {len(payload)} != expected {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
    return flat.reshape(dims)


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, EpsRequest):
        data = np.ascontiguousarray(msg.data, dtype="<f4")
        if data.ndim != 3:
            raise ProtocolError(f"eps_request tensors must be 3-D, got {data.ndim}-D")
        payload = (
            struct.pack("<Id", msg.t_index, msg.alpha_bar)
            + _pack_dims(data)
            + data.tobytes()
        )
        return encode_frame(MsgType.EPS_REQUEST, payload)
    if isinstance(msg, EpsResponse):
        data = np.ascontiguousarray(msg.data, dtype="<f4")
        return encode_frame(MsgType.EPS_RESPONSE, _pack_dims(data) + data.tobytes())
    if isinstance(msg, ErrorFrame):
        return encode_frame(MsgType.ERROR, msg.message.encode("utf-8"))
    if isinstance(msg, Handshake):
        payload = struct.pack(
            f"<IddI{len(msg.dims)}I",
            msg.t_train,
            msg.beta_start,
            msg.beta_end,
            len(msg.dims),
            *msg.dims,
        )
        return encode_frame(MsgType.HANDSHAKE, payload)
    raise ProtocolError(f"cannot encode message of type {type(msg).__name__}")


def decode_payload(msg_type: int, payload: bytes) -> Message:
    if msg_type == MsgType.EPS_REQUEST:
        if len(payload) < 12:
            raise ProtocolError("eps_request payload too short")
        t_index, alpha_bar = struct.unpack_from("<Id", payload, 0)
        data = _unpack_tensor(payload, 12)
        if data.ndim != 3:
            raise ProtocolError(f"eps_request tensors must be 3-D, got {data.ndim}-D")
        return EpsRequest(t_index=int(t_index), alpha_bar=float(alpha_bar), data=data)
    if msg_type == MsgType.EPS_RESPONSE:
        return EpsResponse(data=_unpack_tensor(payload, 0))
    if msg_type == MsgType.ERROR:
        return ErrorFrame(message=payload.decode("utf-8", errors="replace"))
    if msg_type == MsgType.HANDSHAKE:
        if len(payload) < 20:
            raise ProtocolError("handshake payload too short")
        t_train, beta_start, beta_end = struct.unpack_from("<Idd", payload, 0)
        dims, offset = _unpack_dims(payload, 20)
        if offset != len(payload):
            raise ProtocolError("trailing bytes after handshake dims")
        return Handshake(
            t_train=int(t_train),
            beta_start=float(beta_start),
            beta_end=float(beta_end),
            dims=dims,
        )
    raise ProtocolError(f"unknown msg_type {msg_type}")


def read_exactly(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = stream.read(remaining)
        if not chunk:
            raise ProtocolError(f"stream closed with {remaining} bytes outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(stream: BinaryIO) -> Message:
    header = read_exactly(stream, _HEADER.size)
    magic, version, msg_type, length = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds sanity bound")
    payload = read_exactly(stream, length) if length else b""
    return decode_payload(msg_type, payload)


def write_message(stream: BinaryIO, msg: Message) -> None:
    stream.write(encode_message(msg))
    stream.flush()
