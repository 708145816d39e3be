"""Binary framing for protocol messages.

Frame layout (little-endian except the magic, which is the byte pair FE 1B)::

    magic      2 bytes   FE 1B
    msg_type   1 byte    0=upload, 1=broadcast, 2=scalar-exchange
    round      4 bytes   unsigned
    client_id  4 bytes   unsigned
    payload    8 bytes   unsigned length, then the payload itself

The payload is a sequence of float64 arrays in declared field order, each
prefixed by its row and column counts (4-byte unsigned each). Vectors travel
as ``n x 1`` columns.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, fields
from typing import ClassVar

import numpy as np

from ..exceptions import ProtocolError

__all__ = [
    "MAGIC",
    "HEADER",
    "MsgType",
    "Frame",
    "encode_frame",
    "decode_frame",
    "data_words",
    "ScalarExchange",
    "ClientUpload",
    "ServerBroadcast",
    "encode_message",
    "decode_message",
]

MAGIC = b"\xfe\x1b"
HEADER = struct.Struct("<2sBIIQ")
_DIMS = struct.Struct("<II")
_F64 = np.dtype("<f8")


class MsgType(enum.IntEnum):
    UPLOAD = 0
    BROADCAST = 1
    SCALAR = 2


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    round: int
    client_id: int
    arrays: tuple[np.ndarray, ...]


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(-1, 1)
    if a.ndim != 2:
        raise ProtocolError("only vectors and matrices can be framed")
    return a


def encode_frame(msg_type, round: int, client_id: int, arrays) -> bytes:
    parts = []
    for a in arrays:
        a = _as_matrix(a)
        parts.append(_DIMS.pack(*a.shape))
        parts.append(np.ascontiguousarray(a, dtype=_F64).tobytes())
    payload = b"".join(parts)
    return HEADER.pack(MAGIC, int(msg_type), int(round), int(client_id), len(payload)) + payload


def decode_frame(buf: bytes) -> Frame:
    if len(buf) < HEADER.size:
        raise ProtocolError("truncated frame header")
    magic, msg_type, rnd, cid, length = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if len(buf) != HEADER.size + length:
        raise ProtocolError(f"payload length {length} does not match frame size {len(buf)}")
    pos, end = HEADER.size, len(buf)
    arrays = []
    while pos < end:
        rows, cols = _DIMS.unpack_from(buf, pos)
        pos += _DIMS.size
        nbytes = rows * cols * 8
        if pos + nbytes > end:
            raise ProtocolError("array overruns payload")
        arrays.append(np.frombuffer(buf, dtype=_F64, count=rows * cols, offset=pos).reshape(rows, cols).copy())
        pos += nbytes
    return Frame(MsgType(msg_type), rnd, cid, tuple(arrays))


def data_words(buf: bytes) -> int:
    """64-bit data words in a frame, from the byte count alone.

    Every array costs an 8-byte dimension prefix on top of its data, so the
    data word count is ``(payload_len - 8 * n_arrays) / 8``.
    """
    _, _, _, _, length = HEADER.unpack_from(buf)
    pos, end, n_arrays = HEADER.size, len(buf), 0
    while pos < end:
        rows, cols = _DIMS.unpack_from(buf, pos)
        pos += _DIMS.size + rows * cols * 8
        n_arrays += 1
    return (length - _DIMS.size * n_arrays) // 8


# -- typed messages ----------------------------------------------------------


class _Message:
    msg_type: ClassVar[MsgType]
    # field names carried as arrays, in wire order; optional trailing fields may be None
    array_fields: ClassVar[tuple[str, ...]]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for name in self.array_fields:
            value = getattr(self, name)
            if value is not None:
                out.append(value)
        return out


@dataclass(frozen=True)
class ScalarExchange(_Message):
    """Control message: a short vector (usually one scalar) in either direction."""

    round: int
    client_id: int
    value: np.ndarray

    msg_type: ClassVar[MsgType] = MsgType.SCALAR
    array_fields: ClassVar[tuple[str, ...]] = ("value",)


@dataclass(frozen=True)
class ClientUpload(_Message):
    """Sketched pieces of one client's Hessian information.

    ``U = W_i^{1/2} A_i^T R1^T``, ``M = R2 A_i W_i A_i^T R3^T``,
    ``V = R4 A_i W_i^{1/2}`` and ``h = W_i^{1/2} h_i`` (the centering
    direction, pre-whitened). The three ``extra_*`` fields are sent only in
    server-completion mode: ``A_i^T R1^T``, ``W_i A_i^T R1^T`` and ``W_i h_i``.
    """

    round: int
    client_id: int
    U: np.ndarray
    M: np.ndarray
    V: np.ndarray
    h: np.ndarray
    extra_at: np.ndarray | None = None
    extra_wat: np.ndarray | None = None
    extra_wh: np.ndarray | None = None

    msg_type: ClassVar[MsgType] = MsgType.UPLOAD
    array_fields: ClassVar[tuple[str, ...]] = ("U", "M", "V", "h", "extra_at", "extra_wat", "extra_wh")


@dataclass(frozen=True)
class ServerBroadcast(_Message):
    """Per-client step slices and the new path parameter.

    In client-completion mode ``dx`` and ``ds`` are whitened: the client
    recovers its step as ``W_i^{1/2} dx`` and ``W_i^{-1/2} ds``.
    """

    round: int
    client_id: int
    dx: np.ndarray
    ds: np.ndarray
    t_tilde: float

    msg_type: ClassVar[MsgType] = MsgType.BROADCAST
    array_fields: ClassVar[tuple[str, ...]] = ("dx", "ds", "t_tilde")


_BY_TYPE = {cls.msg_type: cls for cls in (ScalarExchange, ClientUpload, ServerBroadcast)}


def encode_message(msg: _Message) -> bytes:
    return encode_frame(msg.msg_type, msg.round, msg.client_id, msg.arrays())


def decode_message(buf: bytes):
    frame = decode_frame(buf)
    cls = _BY_TYPE[frame.msg_type]
    names = cls.array_fields
    if len(frame.arrays) > len(names):
        raise ProtocolError(f"{cls.__name__} carries at most {len(names)} arrays")
    kwargs = {}
    for name, arr in zip(names, frame.arrays):
        kwargs[name] = arr
    if cls is ServerBroadcast:
        kwargs["dx"] = kwargs["dx"].ravel()
        kwargs["ds"] = kwargs["ds"].ravel()
        kwargs["t_tilde"] = float(kwargs["t_tilde"][0, 0])
    elif cls is ClientUpload:
        kwargs["h"] = kwargs["h"].ravel()
        if "extra_wh" in kwargs:
            kwargs["extra_wh"] = kwargs["extra_wh"].ravel()
    else:
        kwargs["value"] = kwargs["value"].ravel()
    return cls(round=frame.round, client_id=frame.client_id, **kwargs)


def message_field_names(cls) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls))
