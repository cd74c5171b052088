"""Procedural generation of training crops, with fault tolerance and resume.

A server owns a master seed and walks rounds: each round visits every
(equation, resolution) combination once in a shuffled order, builds a
simulator with freshly sampled coefficients, and runs the tabulated number
of trajectories.  Early rounds are shortened by the ramp factor

    xi = min(round / warmup_rounds, 1)

so the cache fills quickly at first; a run records max(1, floor(T * xi))
frames, each save_every steps apart, after discarding the tabulated warmup
steps.  Recorded frames are cropped per channel (only when the grid exceeds
the crop size), clamped to the system's value range, and emitted as
single-channel samples.

Randomness comes from counter-based streams: stream i is Philox keyed by
(master_seed, i).  Each simulator consumes one stream id; the per-round
shuffle uses a reserved tag space.  That makes every draw reproducible from
(master_seed, stream id) alone and lets checkpoints capture exact stream
state.

Guardrails: every saved frame is scanned for NaN/Inf before anything from
its trajectory is emitted.  A hit discards the whole trajectory, rebuilds
the simulator with a fresh stream (new coefficients), bumps a global error
counter, and retries; once the counter exceeds the halt tolerance the server
stops with an error instead of looping forever.
"""

from __future__ import annotations

import json
import math
import queue
import struct
import zlib
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from . import initializers
from .equations import (
    Equation,
    PdeParams,
    build_stepper,
    clamp_to_range,
    discretization,
    equation_from_name,
    equation_name,
    grid_for,
    sample_params,
    state_channels,
    trajectory,
)
from .protocol import FrameSample

__all__ = [
    "CheckpointCorrupt",
    "CheckpointError",
    "CheckpointVersionError",
    "GenerationServer",
    "NumericalAnomaly",
    "ServerConfig",
    "ServerHalted",
    "Simulator",
    "make_stream",
    "random_crop",
    "simulate_setup",
]

CHECKPOINT_MAGIC = b"TDPC"
CHECKPOINT_VERSION = 1

# Tag space for per-round shuffle streams, disjoint from simulator stream ids.
_ROUND_TAG = 1 << 62

DEFAULT_CROP = 96


class NumericalAnomaly(RuntimeError):
    """A saved frame contained NaN or Inf; the trajectory is unusable."""

    def __init__(self, step: int):
        super().__init__(f"non-finite frame at step {step}")
        self.step = step


class ServerHalted(RuntimeError):
    """Too many anomalies; generation refuses to continue."""


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorrupt(CheckpointError):
    pass


def make_stream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based stream: Philox keyed by (master_seed, stream_id)."""
    key = np.array([master_seed, stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _rng_state_to_json(rng: np.random.Generator) -> dict:
    st = rng.bit_generator.state
    return {
        "counter": [int(x) for x in st["state"]["counter"]],
        "key": [int(x) for x in st["state"]["key"]],
        "buffer": [int(x) for x in st["buffer"]],
        "buffer_pos": int(st["buffer_pos"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }


def _rng_state_from_json(obj: dict) -> np.random.Generator:
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array(obj["counter"], dtype=np.uint64),
            "key": np.array(obj["key"], dtype=np.uint64),
        },
        "buffer": np.array(obj["buffer"], dtype=np.uint64),
        "buffer_pos": int(obj["buffer_pos"]),
        "has_uint32": int(obj["has_uint32"]),
        "uinteger": int(obj["uinteger"]),
    }
    return np.random.Generator(bg)


def random_crop(arr: np.ndarray, crop: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform contiguous crop of a cubic block; offsets cover [0, n - crop]."""
    n = arr.shape[-1]
    if crop > n:
        raise ValueError(f"crop {crop} exceeds grid size {n}")
    ox, oy, oz = (int(rng.integers(0, n - crop + 1)) for _ in range(3))
    return arr[..., ox : ox + crop, oy : oy + crop, oz : oz + crop]


@dataclass(frozen=True)
class ServerConfig:
    """What to generate and how carefully."""

    equations: tuple[Equation, ...]
    resolutions: tuple[int, ...] = (64,)
    warmup_rounds: int = 10
    halt_tolerance: int = 10
    crop_size: int = DEFAULT_CROP
    normalize: bool = False
    double_precision: bool = False

    def __post_init__(self) -> None:
        if not self.equations:
            raise ValueError("at least one equation is required")
        if not self.resolutions:
            raise ValueError("at least one resolution is required")
        if self.warmup_rounds < 0:
            raise ValueError("warmup_rounds must be >= 0")
        if self.halt_tolerance < 0:
            raise ValueError("halt_tolerance must be >= 0")
        if self.crop_size < 1:
            raise ValueError("crop_size must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["equations"] = [equation_name(eq) for eq in self.equations]
        d["resolutions"] = list(self.resolutions)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ServerConfig":
        return cls(
            equations=tuple(equation_from_name(s) for s in d["equations"]),
            resolutions=tuple(int(n) for n in d["resolutions"]),
            warmup_rounds=int(d["warmup_rounds"]),
            halt_tolerance=int(d["halt_tolerance"]),
            crop_size=int(d["crop_size"]),
            normalize=bool(d["normalize"]),
            double_precision=bool(d["double_precision"]),
        )


class Simulator:
    """One parameter setup of one system at one resolution."""

    def __init__(
        self,
        eq: Equation,
        n: int,
        master_seed: int,
        stream_id: int,
        config: ServerConfig,
        params: Optional[PdeParams] = None,
        rng_state: Optional[dict] = None,
    ):
        self.eq = Equation(eq)
        self.n = int(n)
        self.stream_id = int(stream_id)
        self.config = config
        self.rng = make_stream(master_seed, stream_id)
        # Coefficients come off the stream first; a restored simulator gets
        # them verbatim together with the stream state.
        self.params = sample_params(self.eq, self.rng) if params is None else params
        if rng_state is not None:
            self.rng = _rng_state_from_json(rng_state)
        self.grid = grid_for(self.eq, self.n)
        self.disc = discretization(self.eq, self.n)
        self.traj = trajectory(self.eq, self.n)
        self.dtype = np.float64 if config.double_precision else np.float32
        self.stepper = build_stepper(self.eq, self.params, self.grid, self.disc.dt, dtype=self.dtype)
        self.canonical = self.disc.canonical and self.traj.canonical

    def _step(self, u_hat: np.ndarray) -> np.ndarray:
        return self.stepper.step(u_hat)

    def _initial_state(self) -> tuple[list[initializers.InitializerSpec], np.ndarray]:
        channels = state_channels(self.eq)
        specs = [initializers.sample_initializer(self.eq, self.rng) for _ in range(channels)]
        data = np.stack([initializers.generate(s, self.grid, self.rng, dtype=self.dtype) for s in specs])
        return specs, np.fft.fftn(data, axes=(-3, -2, -1))

    def _march(self, recorded_frames: int, sink: Callable[[int, np.ndarray], None]) -> None:
        """Warmup + recording loop; sink(frame_idx, full_frame) per clean save."""
        specs, u_hat = self._initial_state()
        self._active_specs = specs
        warmup = self.traj.warmup
        save_every = self.disc.save_every
        total = warmup + recorded_frames * save_every
        for step in range(1, total + 1):
            u_hat = self._step(u_hat)
            if step > warmup and (step - warmup) % save_every == 0:
                frame = np.fft.ifftn(u_hat, axes=(-3, -2, -1)).real.astype(self.dtype, copy=False)
                if not np.all(np.isfinite(frame)):
                    raise NumericalAnomaly(step)
                sink((step - warmup) // save_every - 1, frame)

    def run_trajectory(self, run_idx: int, recorded_frames: int) -> list[FrameSample]:
        """One run: crop, clamp, and package every recorded frame.

        Samples are buffered and returned only after the whole run finishes
        clean, so an anomaly late in a run never leaks its earlier frames.
        """
        samples: list[FrameSample] = []
        crop = self.config.crop_size
        pde_vals = self.params.wire_values(self.eq)

        def sink(frame_idx: int, frame: np.ndarray) -> None:
            for c in range(frame.shape[0]):
                block = frame[c]
                if self.n > crop:
                    block = random_crop(block, crop, self.rng)
                block = clamp_to_range(block, self.eq, normalize=self.config.normalize)
                samples.append(
                    FrameSample(
                        payload=np.ascontiguousarray(block, dtype=np.float32),
                        equation_id=int(self.eq),
                        initializer_id=self._active_specs[c].config_id,
                        resolution=self.n,
                        run_idx=run_idx,
                        frame_idx=frame_idx,
                        channel_idx=c,
                        canonical=self.canonical,
                        pde_params=pde_vals,
                        ic_params=self._active_specs[c].wire_values(),
                        normalized=self.config.normalize,
                    )
                )

        self._march(recorded_frames, sink)
        return samples

    def run_full(self, recorded_frames: int) -> np.ndarray:
        """One run kept at full resolution, clamped; shape (T, C, n, n, n)."""
        frames: list[np.ndarray] = []

        def sink(_frame_idx: int, frame: np.ndarray) -> None:
            frames.append(clamp_to_range(frame, self.eq, normalize=self.config.normalize).astype(np.float32))

        self._march(recorded_frames, sink)
        return np.stack(frames)

    def state_json(self) -> dict:
        return {
            "equation": equation_name(self.eq),
            "n": self.n,
            "stream_id": self.stream_id,
            "params": {k: v for k, v in asdict(self.params).items() if v is not None},
            "rng": _rng_state_to_json(self.rng),
        }


class GenerationServer:
    """Round-based scheduler over (equation, resolution) setups.

    next_trajectory() returns the samples of one clean run; checkpoints
    taken between calls restore bit-exact continuation.
    """

    def __init__(self, config: ServerConfig, seed: int):
        self.config = config
        self.seed = int(seed)
        self.round = 0
        self._order: list[tuple[Equation, int]] = []
        self._combo_pos = -1
        self._sim: Optional[Simulator] = None
        self._next_run = 0
        self._stream_counter = 1  # stream 0 stays reserved
        self.error_count = 0
        self.frames_emitted = 0
        self.trajectories_emitted = 0
        self._halted = False

    # -- scheduling ---------------------------------------------------------

    def _combos(self) -> list[tuple[Equation, int]]:
        return [(eq, n) for eq in self.config.equations for n in self.config.resolutions]

    def _round_order(self, rnd: int) -> list[tuple[Equation, int]]:
        combos = self._combos()
        rng = make_stream(self.seed, _ROUND_TAG + rnd)
        perm = rng.permutation(len(combos))
        return [combos[int(i)] for i in perm]

    def xi(self) -> float:
        if self.config.warmup_rounds <= 0:
            return 1.0
        return min(self.round / self.config.warmup_rounds, 1.0)

    def recorded_frames(self, eq: Equation, n: int) -> int:
        full = trajectory(eq, n).length
        return max(1, int(math.floor(full * self.xi() + 1e-9)))

    def _new_simulator(self, eq: Equation, n: int) -> Simulator:
        sim = Simulator(eq, n, self.seed, self._stream_counter, self.config)
        self._stream_counter += 1
        return sim

    def _ensure_sim(self) -> None:
        if self._sim is not None:
            return
        self._combo_pos += 1
        if self.round == 0 or self._combo_pos >= len(self._order):
            self.round += 1
            self._order = self._round_order(self.round)
            self._combo_pos = 0
        eq, n = self._order[self._combo_pos]
        self._sim = self._new_simulator(eq, n)
        self._next_run = 0

    # -- generation ---------------------------------------------------------

    def next_trajectory(self) -> list[FrameSample]:
        """Run (and if needed retry) one trajectory; returns its samples."""
        if self._halted:
            raise ServerHalted(f"halted after {self.error_count} anomalies")
        self._ensure_sim()
        sim = self._sim
        rec = self.recorded_frames(sim.eq, sim.n)
        while True:
            try:
                samples = sim.run_trajectory(self._next_run, rec)
                break
            except NumericalAnomaly:
                self.error_count += 1
                if self.error_count > self.config.halt_tolerance:
                    self._halted = True
                    raise ServerHalted(
                        f"anomaly count {self.error_count} exceeded tolerance {self.config.halt_tolerance}"
                    ) from None
                # Fresh stream id means fresh coefficients and fresh noise.
                sim = self._sim = self._new_simulator(sim.eq, sim.n)
        self._next_run += 1
        if self._next_run >= sim.traj.runs:
            self._sim = None
        self.frames_emitted += len(samples)
        self.trajectories_emitted += 1
        return samples

    def _round_boundary(self) -> bool:
        return self._sim is None and self._order and self._combo_pos == len(self._order) - 1

    @staticmethod
    def _push(sink, sample, stop) -> bool:
        """Blocking put that stays interruptible; False once stop is set."""
        while True:
            try:
                sink.put(sample, timeout=0.2)
                return True
            except queue.Full:
                if stop is not None and stop.is_set():
                    return False

    def run_round(self, sink, stop=None) -> "GenerationServer":
        """Generate exactly one full round, pushing every sample into sink."""
        while True:
            for sample in self.next_trajectory():
                if not self._push(sink, sample, stop):
                    return self
            if self._round_boundary():
                return self

    def run(self, sink, stop=None, max_trajectories: Optional[int] = None) -> None:
        """Generate until stopped (checked between trajectories) or halted."""
        done = 0
        while (stop is None or not stop.is_set()) and (max_trajectories is None or done < max_trajectories):
            for sample in self.next_trajectory():
                if not self._push(sink, sample, stop):
                    return
            done += 1

    # -- checkpointing ------------------------------------------------------

    def checkpoint(self) -> bytes:
        state = {
            "seed": self.seed,
            "round": self.round,
            "combo_pos": self._combo_pos,
            "next_run": self._next_run,
            "stream_counter": self._stream_counter,
            "error_count": self.error_count,
            "frames_emitted": self.frames_emitted,
            "trajectories_emitted": self.trajectories_emitted,
            "config": self.config.to_json(),
            "active": None if self._sim is None else self._sim.state_json(),
        }
        payload = json.dumps(state).encode("utf-8")
        head = CHECKPOINT_MAGIC + struct.pack("<HII", CHECKPOINT_VERSION, len(payload), zlib.crc32(payload) & 0xFFFFFFFF)
        return head + payload

    @classmethod
    def restore(cls, blob: bytes) -> "GenerationServer":
        if len(blob) < 14 or blob[:4] != CHECKPOINT_MAGIC:
            raise CheckpointCorrupt("not a checkpoint (bad magic)")
        version, length, crc = struct.unpack("<HII", blob[4:14])
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(f"unsupported checkpoint version {version}")
        payload = blob[14 : 14 + length]
        if len(payload) != length or zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise CheckpointCorrupt("checkpoint payload failed length/CRC check")
        state = json.loads(payload.decode("utf-8"))
        server = cls(ServerConfig.from_json(state["config"]), state["seed"])
        server.round = int(state["round"])
        server._combo_pos = int(state["combo_pos"])
        server._next_run = int(state["next_run"])
        server._stream_counter = int(state["stream_counter"])
        server.error_count = int(state["error_count"])
        server.frames_emitted = int(state["frames_emitted"])
        server.trajectories_emitted = int(state["trajectories_emitted"])
        if server.round > 0:
            server._order = server._round_order(server.round)
        active = state["active"]
        if active is not None:
            server._sim = Simulator(
                equation_from_name(active["equation"]),
                int(active["n"]),
                server.seed,
                int(active["stream_id"]),
                server.config,
                params=PdeParams(**{k: float(v) for k, v in active["params"].items()}),
                rng_state=active["rng"],
            )
        return server


@dataclass
class SimulationResult:
    """A full-resolution diagnostic run of one setup."""

    frames: np.ndarray  # (T, C, n, n, n) float32, clamped
    equation: Equation
    params: PdeParams
    ic_specs: list
    seed: int
    canonical: bool


def simulate_setup(
    eq: Equation,
    n: int,
    seed: int,
    frames: Optional[int] = None,
    double: bool = False,
    normalize: bool = False,
) -> SimulationResult:
    """One setup, one run, full frames; the CLI's trajectory path."""
    config = ServerConfig(
        equations=(Equation(eq),),
        resolutions=(int(n),),
        normalize=normalize,
        double_precision=double,
    )
    sim = Simulator(eq, n, seed, stream_id=1, config=config)
    rec = trajectory(eq, n).length if frames is None else int(frames)
    if rec < 1:
        raise ValueError("frame count must be >= 1")
    data = sim.run_full(rec)
    return SimulationResult(
        frames=data,
        equation=Equation(eq),
        params=sim.params,
        ic_specs=list(sim._active_specs),
        seed=int(seed),
        canonical=sim.canonical,
    )
