"""On-disk trajectory container: text header, sentinel, raw f32 payload.

The header is plain `key: value` lines so any language (or grep) can read
it without touching the payload:

    pdeforge-trajectory 1
    equation: ks
    equation-id: 4
    n: 64
    extent: 64.0
    channels: 1
    frames: 30
    dtype: f32
    params: 0.003122
    seed: 7
    canonical: 1
    normalized: 0
    payload-bytes: 31457280
    end-header

The payload is little-endian float32, frame-major then channel-major then
row-major: shape (frames, channels, n, n, n).
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .equations import Equation, equation_from_name, equation_name

__all__ = ["ContainerError", "ContainerInfo", "read_header", "read_trajectory", "write_trajectory"]

MAGIC_LINE = "pdeforge-trajectory"
FORMAT_VERSION = 1

_REQUIRED = {
    "equation",
    "equation-id",
    "n",
    "extent",
    "channels",
    "frames",
    "dtype",
    "params",
    "seed",
    "canonical",
    "normalized",
    "payload-bytes",
}


class ContainerError(ValueError):
    """Malformed or inconsistent container file."""


@dataclass
class ContainerInfo:
    equation: Equation
    n: int
    extent: float
    channels: int
    frames: int
    params: tuple[float, ...]
    seed: int
    canonical: bool
    normalized: bool
    payload_bytes: int
    header_bytes: int

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        return (self.frames, self.channels, self.n, self.n, self.n)


def write_trajectory(
    path,
    frames: np.ndarray,
    equation: Equation,
    extent: float,
    params=(),
    seed: int = 0,
    canonical: bool = True,
    normalized: bool = False,
) -> None:
    """Write (T, C, n, n, n) float32 frames with a self-describing header."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 5 or frames.shape[2] != frames.shape[3] or frames.shape[3] != frames.shape[4]:
        raise ContainerError(f"expected (T, C, n, n, n) frames, got shape {frames.shape}")
    t, c, n = frames.shape[0], frames.shape[1], frames.shape[2]
    header = (
        f"{MAGIC_LINE} {FORMAT_VERSION}\n"
        f"equation: {equation_name(equation)}\n"
        f"equation-id: {int(equation)}\n"
        f"n: {n}\n"
        f"extent: {float(extent)!r}\n"
        f"channels: {c}\n"
        f"frames: {t}\n"
        f"dtype: f32\n"
        f"params: {','.join(repr(float(p)) for p in params)}\n"
        f"seed: {int(seed)}\n"
        f"canonical: {1 if canonical else 0}\n"
        f"normalized: {1 if normalized else 0}\n"
        f"payload-bytes: {frames.nbytes}\n"
        f"end-header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(frames.tobytes())


def _parse_header(f: io.BufferedReader) -> ContainerInfo:
    first = f.readline().decode("ascii", errors="replace").rstrip("\n")
    parts = first.split()
    if len(parts) != 2 or parts[0] != MAGIC_LINE:
        raise ContainerError(f"not a trajectory container (first line {first!r})")
    if parts[1] != str(FORMAT_VERSION):
        raise ContainerError(f"unsupported container version {parts[1]}")
    fields: dict[str, str] = {}
    while True:
        raw = f.readline()
        if not raw:
            raise ContainerError("header ended without sentinel")
        line = raw.decode("ascii", errors="replace").rstrip("\n")
        if line == "end-header":
            break
        if ":" not in line:
            raise ContainerError(f"malformed header line {line!r}")
        key, value = line.split(":", 1)
        key = key.strip()
        if key not in _REQUIRED:
            raise ContainerError(f"unknown header key {key!r}")
        fields[key] = value.strip()
    missing = _REQUIRED - fields.keys()
    if missing:
        raise ContainerError(f"missing header keys: {sorted(missing)}")
    if fields["dtype"] != "f32":
        raise ContainerError(f"unsupported dtype {fields['dtype']!r}")
    try:
        params = tuple(float(p) for p in fields["params"].split(",") if p.strip())
        info = ContainerInfo(
            equation=equation_from_name(fields["equation"]),
            n=int(fields["n"]),
            extent=float(fields["extent"]),
            channels=int(fields["channels"]),
            frames=int(fields["frames"]),
            params=params,
            seed=int(fields["seed"]),
            canonical=fields["canonical"] == "1",
            normalized=fields["normalized"] == "1",
            payload_bytes=int(fields["payload-bytes"]),
            header_bytes=f.tell(),
        )
    except ValueError as exc:
        raise ContainerError(f"bad header value: {exc}") from None
    if int(fields["equation-id"]) != int(info.equation):
        raise ContainerError("equation name and id disagree")
    expected = 4 * info.frames * info.channels * info.n**3
    if info.payload_bytes != expected:
        raise ContainerError(f"payload-bytes {info.payload_bytes} does not match shape (expected {expected})")
    return info


def read_header(path) -> ContainerInfo:
    """Parse the header only; also checks the declared size against the file."""
    path = Path(path)
    with open(path, "rb") as f:
        info = _parse_header(f)
    actual = os.path.getsize(path)
    if actual != info.header_bytes + info.payload_bytes:
        raise ContainerError(
            f"file size {actual} does not match header + payload = {info.header_bytes + info.payload_bytes}"
        )
    return info


def read_trajectory(path) -> tuple[ContainerInfo, np.ndarray]:
    info = read_header(path)
    data = np.fromfile(path, dtype="<f4", count=info.payload_bytes // 4, offset=info.header_bytes)
    return info, data.reshape(info.shape)
