"""Binary wire format for streamed crop samples.

One message per single-channel crop.  Layout, little-endian throughout:

    offset  size  field
    0       4     magic "TDPL"
    4       2     format version (currently 1)
    6       2     flags (reserved, 0)
    8       1     equation id
    9       1     initializer id
    10      2     simulation resolution n
    12      2     run index within the parameter setup
    14      2     recorded frame index within the run
    16      1     channel index
    17      1     canonical flag (1 = tabulated resolution row)
    18      1     param count P
    19      4*P   params, f32: equation coefficients then initializer values
    ..      6     crop dims (3 x u16)
    ..      1     payload dtype code (0 = f32 little-endian)
    ..      4     payload length in bytes (u32)
    ..      4     CRC-32 of the payload (u32)
    ..      *     payload, C-order

The single params vector concatenates the equation coefficients (count fixed
per equation id) with the initializer hyperparameters (count fixed per
initializer id); decoders split it using those tables.  Values are stored as
f32, and FrameSample keeps them f32-rounded so encode/decode round-trips are
bit-exact.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .equations import PARAM_FIELDS, Equation
from .initializers import CONFIGS, ic_param_count

__all__ = [
    "BadMagic",
    "ChecksumMismatch",
    "FormatError",
    "FrameSample",
    "MAGIC",
    "ProtocolError",
    "Truncated",
    "VERSION",
    "VersionMismatch",
    "decode",
    "encode",
    "read_sample",
]

MAGIC = b"TDPL"
VERSION = 1
DTYPE_F32 = 0
FLAG_NORMALIZED = 0x0001

_HEAD = struct.Struct("<4sHHBBHHHBBB")
_TAIL = struct.Struct("<HHHBII")


class ProtocolError(Exception):
    """Base for all wire-format failures."""


class BadMagic(ProtocolError):
    pass


class VersionMismatch(ProtocolError):
    pass


class Truncated(ProtocolError):
    pass


class ChecksumMismatch(ProtocolError):
    pass


class FormatError(ProtocolError):
    pass


def _f32(values) -> tuple[float, ...]:
    return tuple(float(np.float32(v)) for v in values)


@dataclass(eq=False)
class FrameSample:
    """One single-channel crop plus the metadata needed to interpret it."""

    payload: np.ndarray  # 3D float32, C-order
    equation_id: int
    initializer_id: int
    resolution: int
    run_idx: int
    frame_idx: int
    channel_idx: int
    canonical: bool
    pde_params: tuple[float, ...] = field(default_factory=tuple)
    ic_params: tuple[float, ...] = field(default_factory=tuple)
    normalized: bool = False  # flags bit 0: payload rescaled to [-1, 1]

    def __post_init__(self) -> None:
        self.payload = np.ascontiguousarray(self.payload, dtype=np.float32)
        if self.payload.ndim != 3:
            raise ValueError(f"payload must be 3D, got shape {self.payload.shape}")
        self.pde_params = _f32(self.pde_params)
        self.ic_params = _f32(self.ic_params)

    def _meta(self) -> tuple:
        return (
            self.equation_id,
            self.initializer_id,
            self.resolution,
            self.run_idx,
            self.frame_idx,
            self.channel_idx,
            bool(self.canonical),
            bool(self.normalized),
            self.pde_params,
            self.ic_params,
            self.payload.shape,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameSample):
            return NotImplemented
        return self._meta() == other._meta() and self.payload.tobytes() == other.payload.tobytes()

    def nbytes(self) -> int:
        return self.payload.nbytes


def _validate_ids(equation_id: int, initializer_id: int) -> tuple[int, int]:
    try:
        n_pde = len(PARAM_FIELDS[Equation(equation_id)])
    except ValueError:
        raise FormatError(f"unknown equation id {equation_id}") from None
    if initializer_id not in CONFIGS:
        raise FormatError(f"unknown initializer id {initializer_id}")
    return n_pde, ic_param_count(initializer_id)


def encode(sample: FrameSample) -> bytes:
    """Serialize one sample; raises FormatError on inconsistent metadata."""
    n_pde, n_ic = _validate_ids(sample.equation_id, sample.initializer_id)
    if len(sample.pde_params) != n_pde:
        raise FormatError(f"expected {n_pde} equation coefficients, got {len(sample.pde_params)}")
    if len(sample.ic_params) != n_ic:
        raise FormatError(f"expected {n_ic} initializer values, got {len(sample.ic_params)}")
    params = sample.pde_params + sample.ic_params
    dims = sample.payload.shape
    if any(not 0 < d <= 0xFFFF for d in dims):
        raise FormatError(f"crop dims out of range: {dims}")
    for name, value, limit in (
        ("resolution", sample.resolution, 0xFFFF),
        ("run index", sample.run_idx, 0xFFFF),
        ("frame index", sample.frame_idx, 0xFFFF),
        ("channel index", sample.channel_idx, 0xFF),
    ):
        if not 0 <= value <= limit:
            raise FormatError(f"{name} {value} out of range")
    payload = sample.payload.tobytes()
    head = _HEAD.pack(
        MAGIC,
        VERSION,
        FLAG_NORMALIZED if sample.normalized else 0,
        sample.equation_id,
        sample.initializer_id,
        sample.resolution,
        sample.run_idx,
        sample.frame_idx,
        sample.channel_idx,
        1 if sample.canonical else 0,
        len(params),
    )
    body = struct.pack(f"<{len(params)}f", *params) if params else b""
    tail = _TAIL.pack(dims[0], dims[1], dims[2], DTYPE_F32, len(payload), zlib.crc32(payload) & 0xFFFFFFFF)
    return head + body + tail + payload


def _parse_head(buf: bytes):
    magic, version, flags, eq_id, ic_id, resolution, run_idx, frame_idx, channel_idx, canonical, n_params = (
        _HEAD.unpack(buf)
    )
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"unsupported format version {version}")
    return eq_id, ic_id, resolution, run_idx, frame_idx, channel_idx, canonical, flags, n_params


def _assemble(
    head_fields,
    params: tuple[float, ...],
    tail: tuple,
    payload: bytes,
) -> FrameSample:
    eq_id, ic_id, resolution, run_idx, frame_idx, channel_idx, canonical, flags, _ = head_fields
    dx, dy, dz, dtype_code, payload_len, crc = tail
    if dtype_code != DTYPE_F32:
        raise FormatError(f"unsupported payload dtype code {dtype_code}")
    if payload_len != 4 * dx * dy * dz:
        raise FormatError(f"payload length {payload_len} does not match dims {(dx, dy, dz)}")
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumMismatch("payload CRC-32 mismatch")
    n_pde, n_ic = _validate_ids(eq_id, ic_id)
    if len(params) != n_pde + n_ic:
        raise FormatError(f"param count {len(params)} does not match ids ({n_pde}+{n_ic})")
    data = np.frombuffer(payload, dtype="<f4").reshape(dx, dy, dz).copy()
    return FrameSample(
        payload=data,
        equation_id=eq_id,
        initializer_id=ic_id,
        resolution=resolution,
        run_idx=run_idx,
        frame_idx=frame_idx,
        channel_idx=channel_idx,
        canonical=bool(canonical),
        pde_params=params[:n_pde],
        ic_params=params[n_pde:],
        normalized=bool(flags & FLAG_NORMALIZED),
    )


def decode(buf: bytes) -> FrameSample:
    """Parse one complete message; rejects truncation, junk, and bad checksums."""
    if len(buf) < _HEAD.size:
        raise Truncated(f"message shorter than fixed header ({len(buf)} bytes)")
    head_fields = _parse_head(buf[: _HEAD.size])
    n_params = head_fields[-1]
    off = _HEAD.size
    if len(buf) < off + 4 * n_params + _TAIL.size:
        raise Truncated("message truncated inside params or dims")
    params = struct.unpack_from(f"<{n_params}f", buf, off) if n_params else ()
    off += 4 * n_params
    tail = _TAIL.unpack_from(buf, off)
    off += _TAIL.size
    payload_len = tail[4]
    if len(buf) < off + payload_len:
        raise Truncated(f"payload truncated: expected {payload_len} bytes, have {len(buf) - off}")
    if len(buf) > off + payload_len:
        raise FormatError(f"{len(buf) - off - payload_len} trailing bytes after payload")
    return _assemble(head_fields, tuple(map(float, params)), tail, buf[off : off + payload_len])


def read_sample(read_exact: Callable[[int], bytes]) -> Optional[FrameSample]:
    """Incrementally read one message from a byte source.

    `read_exact(k)` must return exactly k bytes, or b"" on a clean EOF.
    Returns None when EOF falls on a message boundary; EOF anywhere else
    raises Truncated.
    """
    head = read_exact(_HEAD.size)
    if head == b"":
        return None
    if len(head) != _HEAD.size:
        raise Truncated("EOF inside fixed header")
    head_fields = _parse_head(head)
    n_params = head_fields[-1]
    rest = read_exact(4 * n_params + _TAIL.size)
    if len(rest) != 4 * n_params + _TAIL.size:
        raise Truncated("EOF inside params or dims")
    params = struct.unpack(f"<{n_params}f", rest[: 4 * n_params]) if n_params else ()
    tail = _TAIL.unpack(rest[4 * n_params :])
    payload = read_exact(tail[4])
    if len(payload) != tail[4]:
        raise Truncated("EOF inside payload")
    return _assemble(head_fields, tuple(map(float, params)), tail, payload)
