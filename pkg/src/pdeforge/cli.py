"""Operator commands: simulate, serve, consume, analyze, bench, tables.

Exit codes are stable and documented: 0 success, 2 configuration or usage
errors, 3 I/O errors (files, sockets, checkpoints), 4 protocol errors on the
wire, 5 numerical failures (anomalies, halted server, degenerate metrics).
"""

from __future__ import annotations

import signal
import socket
import sys
import threading
import time
from collections import Counter
from pathlib import Path

import click
import numpy as np

from . import containers, report
from .analysis import (
    enstrophy_spectrum,
    nrmse,
    nrmse_es,
    shell_spectrum,
    vorticity,
)
from .config import ConfigError, load_settings
from .equations import Equation, catalog_document, equation_from_name, equation_name, grid_for, value_range
from .etdrk import IntegrationBlowup
from .generation import (
    CheckpointError,
    GenerationServer,
    NumericalAnomaly,
    ServerConfig,
    ServerHalted,
    simulate_setup,
)
from .protocol import FrameSample, ProtocolError, decode, encode
from .spectral import Field, make_grid
from .streaming import (
    EpochCounter,
    MfuCache,
    SocketReader,
    StreamConsumer,
    StreamServer,
    TransmissionQueue,
    staging_pump,
)

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_PROTOCOL = 4
EXIT_NUMERICAL = 5


def _die(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(package_name="pdeforge")
def main() -> None:
    """Generate, stream, and analyze 3D semi-linear PDE training data."""


# ---------------------------------------------------------------- simulate


@main.command()
@click.argument("equation")
@click.argument("n", type=int)
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--frames", type=int, default=None, help="Override the tabulated recorded frame count.")
@click.option("--double", is_flag=True, help="Integrate in double precision.")
@click.option("--normalize", is_flag=True, help="Rescale clamped frames to [-1, 1].")
def simulate(equation: str, n: int, out: str, seed: int, frames, double: bool, normalize: bool) -> None:
    """Run one trajectory of EQUATION at resolution N and write a container."""
    try:
        eq = equation_from_name(equation)
        grid = make_grid(n)  # validates n before any heavy lifting
        if frames is not None and frames < 1:
            raise ValueError("--frames must be >= 1")
    except ValueError as exc:
        _die(EXIT_CONFIG, str(exc))
    del grid
    try:
        result = simulate_setup(eq, n, seed, frames=frames, double=double, normalize=normalize)
    except (NumericalAnomaly, IntegrationBlowup) as exc:
        _die(EXIT_NUMERICAL, f"simulation failed: {exc}")
    try:
        containers.write_trajectory(
            out,
            result.frames,
            eq,
            extent=grid_for(eq, n).extent,
            params=result.params.wire_values(eq),
            seed=seed,
            canonical=result.canonical,
            normalized=normalize,
        )
    except OSError as exc:
        _die(EXIT_IO, f"cannot write {out}: {exc}")
    t, c = result.frames.shape[0], result.frames.shape[1]
    click.echo(f"wrote {out}: {t} frames of {c}x{n}^3 ({equation_name(eq)}, seed {seed})")


# ------------------------------------------------------------------- serve


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--resume", is_flag=True, help="Restore the checkpoint before generating.")
@click.option("--dry-run", is_flag=True, help="Validate the config and print the schedule.")
@click.option("--max-trajectories", type=int, default=None, help="Stop after this many trajectories.")
def serve(config_path, resume: bool, dry_run: bool, max_trajectories) -> None:
    """Generate continuously and stream samples to connected consumers."""
    try:
        settings = load_settings(config_path)
        server_config: ServerConfig = settings.server_config()
    except ConfigError as exc:
        _die(EXIT_CONFIG, str(exc))

    if dry_run:
        click.echo(f"seed {settings.seed}, {settings.warmup_rounds} ramp-up rounds; schedule per round:")
        for eq_name in settings.equations:
            for n in settings.resolutions:
                click.echo(f"  {eq_name} @ {n}^3")
        return

    if resume:
        try:
            blob = Path(settings.checkpoint_path).read_bytes()
            server = GenerationServer.restore(blob)
        except OSError as exc:
            _die(EXIT_IO, f"cannot read checkpoint {settings.checkpoint_path}: {exc}")
        except CheckpointError as exc:
            _die(EXIT_IO, f"bad checkpoint {settings.checkpoint_path}: {exc}")
        click.echo(
            f"resumed at round {server.round}, {server.trajectories_emitted} trajectories, "
            f"{server.frames_emitted} frames emitted"
        )
    else:
        server = GenerationServer(server_config, settings.seed)

    queue = TransmissionQueue(settings.transmission_capacity)
    stream = StreamServer(queue, settings.host, settings.port)
    try:
        stream.start()
    except OSError as exc:
        _die(EXIT_IO, f"cannot listen on {settings.host}:{settings.port}: {exc}")

    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())

    host, port = stream.address
    click.echo(f"serving on {host}:{port} (transmission capacity {settings.transmission_capacity})")
    halted = None
    try:
        server.run(queue, stop=stop, max_trajectories=max_trajectories)
    except ServerHalted as exc:
        halted = exc

    stream.drain(timeout=10.0)
    stream.stop()
    try:
        Path(settings.checkpoint_path).write_bytes(server.checkpoint())
        click.echo(f"checkpoint written to {settings.checkpoint_path}")
    except OSError as exc:
        _die(EXIT_IO, f"cannot write checkpoint: {exc}")
    click.echo(
        f"generated {server.frames_emitted} frames in {server.trajectories_emitted} trajectories "
        f"(round {server.round}, {server.error_count} anomalies)"
    )
    if halted is not None:
        _die(EXIT_NUMERICAL, str(halted))


# ----------------------------------------------------------------- consume


@main.command()
@click.argument("endpoint")
@click.option("--count", type=int, default=None, help="Frames to receive (default: one epoch).")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Dump received crops as containers.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for cache draws.")
def consume(endpoint: str, count, out_dir, seed: int) -> None:
    """Diagnostic consumer: pull COUNT frames through staging and cache."""
    try:
        settings = load_settings(None)  # environment-aware defaults
    except ConfigError as exc:
        _die(EXIT_CONFIG, str(exc))
    if count is None:
        count = settings.epoch_length
    host, sep, port_s = endpoint.rpartition(":")
    if not sep or not host:
        _die(EXIT_CONFIG, f"endpoint must be host:port, got {endpoint!r}")
    try:
        port = int(port_s)
    except ValueError:
        _die(EXIT_CONFIG, f"bad port {port_s!r}")
    if count < 1:
        _die(EXIT_CONFIG, "--count must be >= 1")

    try:
        sock = socket.create_connection((host, port), timeout=30)
    except OSError as exc:
        _die(EXIT_IO, f"cannot connect to {endpoint}: {exc}")
    sock.settimeout(60)

    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)

    staging = TransmissionQueue(settings.staging_capacity)
    cache = MfuCache(settings.cache_capacity)
    epoch = EpochCounter(settings.epoch_length, on_epoch=lambda e: click.echo(f"epoch {e} complete"))
    rng = np.random.default_rng(seed)
    stop = threading.Event()
    per_equation: Counter = Counter()
    state = {"drawn": 0, "violations": 0, "bytes": 0, "dumped": 0}

    def on_insert(sample: FrameSample) -> None:
        if state["drawn"] >= count:
            return
        cache.draw(1, rng=rng)
        epoch.add(1)
        state["drawn"] += 1
        state["bytes"] += sample.nbytes()
        per_equation[equation_name(Equation(sample.equation_id))] += 1
        lo, hi = (-1.0, 1.0) if sample.normalized else value_range(Equation(sample.equation_id))
        if float(sample.payload.min()) < lo or float(sample.payload.max()) > hi:
            state["violations"] += 1
        if out_dir is not None:
            name = (
                f"{equation_name(Equation(sample.equation_id))}"
                f"-r{sample.run_idx}-f{sample.frame_idx}-c{sample.channel_idx}-{state['dumped']:06d}.tdp"
            )
            h = sample.payload.shape[0]
            extent = grid_for(Equation(sample.equation_id), sample.resolution).extent * h / sample.resolution
            containers.write_trajectory(
                Path(out_dir) / name,
                sample.payload[np.newaxis, np.newaxis],
                Equation(sample.equation_id),
                extent=extent,
                params=sample.pde_params,
                seed=0,
                canonical=sample.canonical,
                normalized=sample.normalized,
            )
            state["dumped"] += 1
        if state["drawn"] >= count:
            stop.set()

    t0 = time.monotonic()
    reader = SocketReader(sock)
    stats = staging_pump(reader.read_exact, staging, cache, stop=stop, on_insert=on_insert)
    elapsed = max(time.monotonic() - t0, 1e-9)
    sock.close()

    for name in sorted(per_equation):
        click.echo(f"{name}: {per_equation[name]}")
    click.echo(
        f"received {stats.received}, drawn {state['drawn']}, epochs {epoch.epochs}, "
        f"range violations {state['violations']}"
    )
    click.echo(f"throughput: {state['drawn'] / elapsed:.1f} frames/s, {state['bytes'] / elapsed / 1e6:.2f} MB/s")
    if stats.error is not None:
        _die(EXIT_PROTOCOL, f"stream corrupted after {stats.received} frames: {stats.error}")
    if state["drawn"] < count:
        _die(EXIT_PROTOCOL, f"server closed the stream early ({state['drawn']}/{count} frames)")


# ----------------------------------------------------------------- analyze


@main.command()
@click.argument("in_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--spectrum", "spectrum_mode", is_flag=True, help="Shell-aggregated magnitude spectrum.")
@click.option("--enstrophy", "enstrophy_mode", is_flag=True, help="Enstrophy spectrum of a velocity file.")
@click.option("--nrmse", "nrmse_ref", type=click.Path(exists=True, dir_okay=False), help="Pixel NRMSE vs a reference.")
@click.option(
    "--nrmse-es", "es_ref", type=click.Path(exists=True, dir_okay=False), help="Enstrophy-spectrum NRMSE vs a reference."
)
@click.option("--window/--no-window", "window", default=None, help="Hann window (default: off for --spectrum, on for --enstrophy).")
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None, help="Write the table here instead of stdout.")
@click.option("--delimiter", default=",", show_default=True)
@click.option("--plot", "plot_path", type=click.Path(dir_okay=False), default=None, help="Also render a figure to this file.")
def analyze(in_path, spectrum_mode, enstrophy_mode, nrmse_ref, es_ref, window, out, delimiter, plot_path) -> None:
    """Spectra and error metrics for a saved trajectory container."""
    chosen = [
        m
        for m, on in (
            ("spectrum", spectrum_mode),
            ("enstrophy", enstrophy_mode),
            ("nrmse", bool(nrmse_ref)),
            ("nrmse-es", bool(es_ref)),
        )
        if on
    ]
    if len(chosen) != 1:
        _die(EXIT_CONFIG, "choose exactly one of --spectrum, --enstrophy, --nrmse, --nrmse-es")
    what = chosen[0]
    if plot_path is not None and what not in ("spectrum", "enstrophy"):
        _die(EXIT_CONFIG, "--plot only applies to --spectrum and --enstrophy")

    try:
        info, data = containers.read_trajectory(in_path)
    except (OSError, containers.ContainerError) as exc:
        _die(EXIT_IO, f"cannot read {in_path}: {exc}")
    grid = make_grid(info.n, info.extent)

    if what == "spectrum":
        windowed = bool(window) if window is not None else False
        series: dict[str, np.ndarray] = {}
        for c in range(info.channels):
            acc = None
            for t in range(info.frames):
                bins = shell_spectrum(Field(data[t, c : c + 1], grid), windowed=windowed).bins
                acc = bins if acc is None else acc + bins
            series[f"channel{c}"] = acc / info.frames
        shells = list(range(len(next(iter(series.values())))))
        rows = [[s] + [series[k][s] for k in series] for s in shells]
        report.write_delimited(out, ["shell"] + list(series), rows, delimiter)
        if plot_path is not None:
            report.render_spectrum_figure(plot_path, shells, series, Path(in_path).name, "summed |coeff|")
            click.echo(f"figure written to {plot_path}", err=True)
        return

    if what == "enstrophy":
        if info.channels != 3:
            _die(EXIT_CONFIG, f"--enstrophy needs a 3-channel velocity file, got {info.channels} channels")
        windowed = bool(window) if window is not None else True
        acc = None
        for t in range(info.frames):
            s = enstrophy_spectrum(vorticity(Field(data[t], grid)), windowed=windowed).S
            acc = s if acc is None else acc + s
        values = acc / info.frames
        shells = list(range(len(values)))
        report.write_delimited(out, ["shell", "S"], [[s, values[s]] for s in shells], delimiter)
        if plot_path is not None:
            report.render_spectrum_figure(plot_path, shells, {"S": values}, Path(in_path).name, "S(k)")
            click.echo(f"figure written to {plot_path}", err=True)
        return

    ref_path = nrmse_ref if what == "nrmse" else es_ref
    try:
        ref_info, ref_data = containers.read_trajectory(ref_path)
    except (OSError, containers.ContainerError) as exc:
        _die(EXIT_IO, f"cannot read {ref_path}: {exc}")
    if (info.n, info.extent, info.channels, info.frames) != (
        ref_info.n,
        ref_info.extent,
        ref_info.channels,
        ref_info.frames,
    ):
        _die(EXIT_CONFIG, "prediction and reference grids/shapes do not match")

    try:
        if what == "nrmse":
            flat = data.reshape(-1, info.n, info.n, info.n)
            ref_flat = ref_data.reshape(-1, info.n, info.n, info.n)
            value = nrmse(Field(flat, grid), Field(ref_flat, grid))
        else:
            if info.channels != 3:
                _die(EXIT_CONFIG, "--nrmse-es needs 3-channel velocity files")
            pred_seq = [Field(data[t], grid) for t in range(info.frames)]
            ref_seq = [Field(ref_data[t], grid) for t in range(ref_info.frames)]
            value = nrmse_es(pred_seq, ref_seq)
    except ValueError as exc:
        _die(EXIT_NUMERICAL, str(exc))
    report.write_delimited(out, ["metric", "value"], [[what, value]], delimiter)


# ------------------------------------------------------------------- bench


@main.command()
@click.option("--n", type=int, default=16, show_default=True, help="Grid size for the simulation benches.")
@click.option("--frames", type=int, default=4, show_default=True, help="Recorded frames for the simulation bench.")
@click.option("--messages", type=int, default=10_000, show_default=True, help="Codec round-trips.")
@click.option("--loopback-count", type=int, default=200, show_default=True, help="Frames through the local socket.")
@click.option("--seed", type=int, default=0, show_default=True)
def bench(n: int, frames: int, messages: int, loopback_count: int, seed: int) -> None:
    """Measure simulation, codec, and loopback streaming throughput."""
    t0 = time.monotonic()
    result = simulate_setup(Equation.BURGERS, n, seed, frames=frames)
    dt = max(time.monotonic() - t0, 1e-9)
    nframes = result.frames.shape[0] * result.frames.shape[1]
    click.echo(f"simulation: {nframes / dt:.1f} frames/s, {result.frames.nbytes / dt / 1e6:.2f} MB/s")

    rng = np.random.default_rng(seed)
    sample = FrameSample(
        payload=rng.standard_normal((n, n, n)).astype(np.float32),
        equation_id=int(Equation.KURAMOTO_SIVASHINSKY),
        initializer_id=0,
        resolution=n,
        run_idx=0,
        frame_idx=0,
        channel_idx=0,
        canonical=False,
    )
    t0 = time.monotonic()
    nbytes = 0
    for _ in range(messages):
        buf = encode(sample)
        nbytes += len(buf)
        decoded = decode(buf)
    dt = max(time.monotonic() - t0, 1e-9)
    if decoded != sample:
        _die(EXIT_PROTOCOL, "codec round-trip mismatch")
    click.echo(f"codec: {messages / dt:.1f} frames/s, {nbytes / dt / 1e6:.2f} MB/s")

    config = ServerConfig(equations=(Equation.FISHER_KPP,), resolutions=(n,), warmup_rounds=1)
    server = GenerationServer(config, seed)
    queue = TransmissionQueue(256)
    stream = StreamServer(queue)
    stream.start()
    stop = threading.Event()
    producer_error: list[BaseException] = []

    def produce() -> None:
        try:
            server.run(queue, stop=stop)
        except BaseException as exc:
            producer_error.append(exc)
            stop.set()

    producer = threading.Thread(target=produce, daemon=True)
    producer.start()
    host, port = stream.address
    received = {"count": 0, "bytes": 0}

    def on_insert(s: FrameSample) -> None:
        received["count"] += 1
        received["bytes"] += s.nbytes()
        if received["count"] >= loopback_count:
            stop.set()

    consumer = StreamConsumer(host, port, on_insert=on_insert)
    t0 = time.monotonic()
    consumer.start()
    while not stop.is_set() and time.monotonic() - t0 < 120:
        stop.wait(0.05)
    dt = max(time.monotonic() - t0, 1e-9)
    consumer.close()
    stream.stop()
    producer.join(timeout=10)
    if producer_error:
        _die(EXIT_NUMERICAL, f"generation failed during loopback bench: {producer_error[0]}")
    if received["count"] < loopback_count:
        _die(EXIT_PROTOCOL, f"loopback delivered {received['count']}/{loopback_count} frames")
    click.echo(f"loopback: {received['count'] / dt:.1f} frames/s, {received['bytes'] / dt / 1e6:.2f} MB/s")


# ------------------------------------------------------------------ tables


@main.command()
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None, help="Write the document here instead of stdout.")
def tables(out) -> None:
    """Print the frozen run tables for audit."""
    doc = catalog_document()
    if out is None:
        click.echo(doc, nl=False)
        return
    try:
        Path(out).write_text(doc)
    except OSError as exc:
        _die(EXIT_IO, f"cannot write {out}: {exc}")


if __name__ == "__main__":
    main()
