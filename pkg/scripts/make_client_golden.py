#!/usr/bin/env python3
"""Regenerate the cross-implementation fixtures under client/testdata/.

Two artifacts, both deterministic:

  golden.bin / golden_index.json
      >= 100 encoded stream messages covering every (equation, initializer)
      id pair plus edge cases (empty params, non-cubic dims, extreme f32
      values, normalized flag).  The index records what *this* package's
      decoder returns for each message, so a foreign decoder can check
      field-for-field and byte-for-byte agreement without importing any
      Python.

  mfu_trace.json
      A scripted insert/draw sequence replayed against MfuCache, recording
      every eviction, every drawn key, and the final (seq, count) snapshot.
      A conforming cache implementation must reproduce the trace exactly.

Run from the repository root: python3 scripts/make_client_golden.py
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from pdeforge.equations import PARAM_FIELDS, Equation
from pdeforge.initializers import CONFIGS, ic_param_count
from pdeforge.protocol import FrameSample, decode, encode
from pdeforge.streaming import MfuCache

OUT_DIR = Path(__file__).resolve().parent.parent / "client" / "testdata"


def _payload(rng: np.random.Generator, dims: tuple[int, int, int], flavor: int) -> np.ndarray:
    if flavor == 0:
        data = rng.standard_normal(dims)
    elif flavor == 1:
        data = np.zeros(dims)
        data.flat[:: max(1, data.size // 7)] = [1.0, -1.0, 3.4e38, -3.4e38, 1e-45, -0.0, 25.0][
            : len(data.flat[:: max(1, data.size // 7)])
        ]
    else:
        data = rng.uniform(-1.0, 1.0, dims)
    return data.astype(np.float32)


def _index_entry(offset: int, message: bytes) -> dict:
    """What the reference decoder sees; foreign decoders must agree exactly."""
    decoded = decode(message)
    return {
        "offset": offset,
        "length": len(message),
        "equation_id": decoded.equation_id,
        "initializer_id": decoded.initializer_id,
        "resolution": decoded.resolution,
        "run_idx": decoded.run_idx,
        "frame_idx": decoded.frame_idx,
        "channel_idx": decoded.channel_idx,
        "canonical": decoded.canonical,
        "normalized": decoded.normalized,
        "pde_params": list(decoded.pde_params),
        "ic_params": list(decoded.ic_params),
        "dims": list(decoded.payload.shape),
        "payload_sha256": hashlib.sha256(decoded.payload.tobytes()).hexdigest(),
        "message_sha256": hashlib.sha256(message).hexdigest(),
        "payload_first": float(decoded.payload.flat[0]),
        "payload_last": float(decoded.payload.flat[-1]),
    }


def make_golden() -> tuple[bytes, list[dict]]:
    rng = np.random.default_rng(20260815)
    dims_cycle = [(8, 8, 8), (6, 6, 6), (4, 4, 4), (5, 7, 4), (16, 16, 16)]
    samples: list[FrameSample] = []
    i = 0
    for eq in Equation:
        for ic_id in sorted(CONFIGS):
            n_pde = len(PARAM_FIELDS[eq])
            n_ic = ic_param_count(ic_id)
            samples.append(
                FrameSample(
                    payload=_payload(rng, dims_cycle[i % len(dims_cycle)], i % 3),
                    equation_id=int(eq),
                    initializer_id=ic_id,
                    resolution=int(rng.choice([16, 64, 128, 384])),
                    run_idx=int(rng.integers(0, 15)),
                    frame_idx=int(rng.integers(0, 30)),
                    channel_idx=int(rng.integers(0, 3)),
                    canonical=bool(i % 2),
                    normalized=bool(i % 5 == 0),
                    pde_params=tuple(rng.uniform(-6.0, 6.0, n_pde)),
                    ic_params=tuple(rng.uniform(-5.0, 9.0, n_ic)),
                )
            )
            i += 1

    # Edge cases the sweep cannot hit: field boundaries, degenerate dims,
    # f32 rounding of unrepresentable coefficients, an all-zero payload.
    samples += [
        FrameSample(np.zeros((1, 1, 1), np.float32), 4, 0, 16, 0, 0, 0, False),
        FrameSample(_payload(rng, (2, 3, 1), 0), 5, 3, 64, 1, 2, 2, True,
                    pde_params=(1e-4, 15.0), ic_params=(9.0, 0.0, 1.0)),
        FrameSample(_payload(rng, (4, 4, 4), 2), 0, 13, 0xFFFF, 0xFFFF, 0xFFFF, 0xFF, True,
                    pde_params=(5e-3,), ic_params=(9.0, -1.0, 1.0)),
        FrameSample(_payload(rng, (4, 4, 4), 0), 6, 8, 128, 3, 7, 1, True,
                    pde_params=(0.1,), ic_params=(0.2, -0.3, 0.7), normalized=True),
        FrameSample(np.zeros((6, 6, 6), np.float32), 3, 9, 384, 2, 9, 0, True,
                    pde_params=(-6.0,), ic_params=(-3.5, -1.0, 1.0)),
        FrameSample(_payload(rng, (8, 8, 8), 1), 2, 5, 64, 0, 29, 2, False,
                    pde_params=(2.5e-3,), ic_params=(0.004, -1.0, 1.0), normalized=True),
    ]

    blob = bytearray()
    index: list[dict] = []
    for sample in samples:
        message = encode(sample)
        index.append(_index_entry(len(blob), message))
        blob.extend(message)
    return bytes(blob), index


def make_mfu_trace() -> dict:
    rng = np.random.default_rng(7)
    capacity = 8
    cache = MfuCache(capacity)
    ops: list[dict] = []
    next_key = 0
    for _ in range(600):
        size = len(cache)
        if size == 0 or rng.uniform() < 0.55:
            evicted = cache.insert(next_key)
            ops.append({"op": "insert", "key": next_key, "evicted": evicted})
            next_key += 1
        else:
            batch = int(rng.integers(1, min(4, size) + 1))
            indices = [int(j) for j in rng.choice(size, size=batch, replace=False)]
            keys = cache.draw(batch, indices=indices)
            ops.append({"op": "draw", "indices": indices, "keys": keys})
    return {"capacity": capacity, "ops": ops, "final_snapshot": cache.snapshot()}


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    blob, index = make_golden()
    (OUT_DIR / "golden.bin").write_bytes(blob)
    (OUT_DIR / "golden_index.json").write_text(json.dumps({"frames": index}, indent=1) + "\n")
    (OUT_DIR / "mfu_trace.json").write_text(json.dumps(make_mfu_trace(), indent=1) + "\n")
    print(f"golden.bin: {len(index)} messages, {len(blob)} bytes")
    print(f"mfu_trace.json: 600 ops, capacity 8")


if __name__ == "__main__":
    main()
