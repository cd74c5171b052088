"""Catalog of the seven semi-linear periodic systems and their run tables.

Each system splits as u_t = L u + N(u) with L diagonal in Fourier space:

    diffusion          L = nu * Lap u                N = 0
    hyper-diffusion    L = -zeta * Lap^2 u           N = 0
    burgers            L = nu * Lap u                N = -(u . grad) u
    kdv                L = xi * (1 . grad) Lap u     N = -(u . grad) u
    ks                 L = -(Lap + Lap^2) u          N = -1/2 |grad u|^2
    fisher-kpp         L = nu * Lap u + r u          N = -r u^2
    swift-hohenberg    L = r u - (1 + Lap)^2 u       N = u^2 - u^3

Per-resolution discretization (domain extent, step size, save cadence, value
range) and trajectory (warmup steps, recorded frames, runs per setup) tables
are frozen here for the canonical resolutions 64, 128, 256, 384; other even
sizes fall back to the 64-point row and are flagged non-canonical.  Recorded
frames times runs is 30 for every system.

Nonlinear terms are evaluated pseudo-spectrally (inverse transform, pointwise
product, forward transform) and the result is projected onto the two-thirds
dealiasing mask; the quadratic advection and gradient terms are fully
dealiased by that single output-side projection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import spectral
from .etdrk import Stepper, precompute_etdrk2, precompute_etdrk4
from .spectral import Grid3, make_grid

__all__ = [
    "CANONICAL_RESOLUTIONS",
    "DiscretizationRow",
    "Equation",
    "PARAM_FIELDS",
    "PdeParams",
    "TrajectoryRow",
    "build_stepper",
    "catalog_document",
    "clamp_to_range",
    "discretization",
    "equation_from_name",
    "integrator_order",
    "linear_symbol",
    "nonlinear_fn",
    "sample_params",
    "state_channels",
    "trajectory",
    "value_range",
]

CANONICAL_RESOLUTIONS = (64, 128, 256, 384)


class Equation(enum.IntEnum):
    """Stable integer identifiers; these go on the wire."""

    DIFFUSION = 0
    HYPER_DIFFUSION = 1
    BURGERS = 2
    KDV = 3
    KURAMOTO_SIVASHINSKY = 4
    FISHER_KPP = 5
    SWIFT_HOHENBERG = 6


_NAMES = {
    Equation.DIFFUSION: "diffusion",
    Equation.HYPER_DIFFUSION: "hyper-diffusion",
    Equation.BURGERS: "burgers",
    Equation.KDV: "kdv",
    Equation.KURAMOTO_SIVASHINSKY: "ks",
    Equation.FISHER_KPP: "fisher-kpp",
    Equation.SWIFT_HOHENBERG: "swift-hohenberg",
}
_FROM_NAME = {name: eq for eq, name in _NAMES.items()}
_FROM_NAME.update({name.replace("-", "_"): eq for eq, name in _NAMES.items()})


def equation_name(eq: Equation) -> str:
    return _NAMES[Equation(eq)]


def equation_from_name(name: str) -> Equation:
    try:
        return _FROM_NAME[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown equation {name!r}; expected one of {sorted(_NAMES.values())}") from None


@dataclass(frozen=True)
class PdeParams:
    """Sampled coefficients; only the fields relevant to a system are set."""

    nu: Optional[float] = None
    zeta: Optional[float] = None
    xi: Optional[float] = None
    r: Optional[float] = None

    def wire_values(self, eq: Equation) -> tuple[float, ...]:
        return tuple(float(getattr(self, f)) for f in PARAM_FIELDS[Equation(eq)])


# Wire order of coefficients per system.
PARAM_FIELDS: dict[Equation, tuple[str, ...]] = {
    Equation.DIFFUSION: ("nu",),
    Equation.HYPER_DIFFUSION: ("zeta",),
    Equation.BURGERS: ("nu",),
    Equation.KDV: ("xi",),
    Equation.KURAMOTO_SIVASHINSKY: (),
    Equation.FISHER_KPP: ("nu", "r"),
    Equation.SWIFT_HOHENBERG: ("r",),
}


def params_from_wire(eq: Equation, values) -> PdeParams:
    fields = PARAM_FIELDS[Equation(eq)]
    if len(values) != len(fields):
        raise ValueError(f"{equation_name(eq)} expects {len(fields)} coefficients, got {len(values)}")
    return PdeParams(**{f: float(v) for f, v in zip(fields, values)})


def sample_params(eq: Equation, rng: np.random.Generator) -> PdeParams:
    """Draw coefficients from the per-system law; fixed systems consume no draws."""
    eq = Equation(eq)
    if eq is Equation.DIFFUSION:
        return PdeParams(nu=float(rng.uniform(5e-4, 5e-3)))
    if eq is Equation.HYPER_DIFFUSION:
        return PdeParams(zeta=float(rng.uniform(5e-4, 5e-3)))
    if eq is Equation.BURGERS:
        return PdeParams(nu=float(rng.uniform(1e-3, 5e-3)))
    if eq is Equation.KDV:
        return PdeParams(xi=-6.0)
    if eq is Equation.KURAMOTO_SIVASHINSKY:
        return PdeParams()
    if eq is Equation.FISHER_KPP:
        # Scale-free spread of diffusivities: log-uniform on [1e-4, 2e-2].
        nu = float(np.exp(rng.uniform(math.log(1e-4), math.log(2e-2))))
        return PdeParams(nu=nu, r=float(rng.uniform(5.0, 15.0)))
    if eq is Equation.SWIFT_HOHENBERG:
        return PdeParams(r=0.1)
    raise ValueError(f"unknown equation {eq}")


# Human-readable coefficient laws; keep in sync with sample_params above.
_PARAM_LAW: dict[Equation, str] = {
    Equation.DIFFUSION: "nu ~ U(5e-4, 5e-3)",
    Equation.HYPER_DIFFUSION: "zeta ~ U(5e-4, 5e-3)",
    Equation.BURGERS: "nu ~ U(1e-3, 5e-3)",
    Equation.KDV: "xi = -6",
    Equation.KURAMOTO_SIVASHINSKY: "none",
    Equation.FISHER_KPP: "nu ~ logU(1e-4, 2e-2), r ~ U(5, 15)",
    Equation.SWIFT_HOHENBERG: "r = 0.1",
}


def state_channels(eq: Equation) -> int:
    """Channels evolved together: the velocity triple, or three independent scalars."""
    return 1 if Equation(eq) is Equation.KURAMOTO_SIVASHINSKY else 3


def integrator_order(eq: Equation) -> int:
    """Dispersive third-order transport needs the order-4 scheme."""
    return 4 if Equation(eq) is Equation.KDV else 2


@dataclass(frozen=True)
class DiscretizationRow:
    extent: float
    dt: float
    save_every: int
    value_range: tuple[float, float]
    canonical: bool


@dataclass(frozen=True)
class TrajectoryRow:
    warmup: int  # steps discarded before recording starts
    length: int  # recorded frames per run at full schedule
    runs: int  # runs per parameter setup
    canonical: bool


# (dt, save_every) per canonical resolution.
_DT_SAVE: dict[Equation, dict[int, tuple[float, int]]] = {
    Equation.DIFFUSION: {64: (5e-4, 1), 128: (5e-5, 1), 256: (5e-5, 1), 384: (5e-5, 1)},
    Equation.HYPER_DIFFUSION: {64: (5e-4, 1), 128: (5e-5, 1), 256: (5e-5, 1), 384: (5e-5, 1)},
    Equation.BURGERS: {64: (5e-3, 1), 128: (2e-3, 2), 256: (1e-3, 5), 384: (1e-3, 5)},
    Equation.KDV: {64: (2e-6, 2), 128: (2e-6, 2), 256: (2e-6, 2), 384: (2e-6, 2)},
    Equation.KURAMOTO_SIVASHINSKY: {64: (0.1, 1), 128: (0.1, 1), 256: (0.1, 1), 384: (0.1, 1)},
    Equation.FISHER_KPP: {64: (1e-3, 1), 128: (1e-3, 1), 256: (5e-4, 2), 384: (5e-4, 2)},
    Equation.SWIFT_HOHENBERG: {64: (0.1, 1), 128: (0.02, 2), 256: (0.02, 5), 384: (0.02, 5)},
}

_EXTENT: dict[Equation, float] = {
    Equation.DIFFUSION: 1.0,
    Equation.HYPER_DIFFUSION: 1.0,
    Equation.BURGERS: 1.0,
    Equation.KDV: 1.0,
    Equation.KURAMOTO_SIVASHINSKY: 64.0,
    Equation.FISHER_KPP: 1.0,
    Equation.SWIFT_HOHENBERG: 20.0,
}

_VALUE_RANGE: dict[Equation, tuple[float, float]] = {
    Equation.DIFFUSION: (-1.0, 1.0),
    Equation.HYPER_DIFFUSION: (-1.0, 1.0),
    Equation.BURGERS: (-1.0, 1.0),
    Equation.KDV: (-1.25, 1.25),
    Equation.KURAMOTO_SIVASHINSKY: (-25.0, 25.0),
    Equation.FISHER_KPP: (0.0, 1.0),
    Equation.SWIFT_HOHENBERG: (-2.0, 3.0),
}

# (warmup steps, recorded frames, runs) per canonical resolution.
_TRAJECTORY: dict[Equation, dict[int, tuple[int, int, int]]] = {
    Equation.DIFFUSION: {n: (0, 2, 15) for n in CANONICAL_RESOLUTIONS},
    Equation.HYPER_DIFFUSION: {n: (0, 2, 15) for n in CANONICAL_RESOLUTIONS},
    Equation.BURGERS: {64: (30, 30, 1), 128: (60, 30, 1), 256: (150, 30, 1), 384: (150, 30, 1)},
    Equation.KDV: {n: (40, 10, 3) for n in CANONICAL_RESOLUTIONS},
    Equation.KURAMOTO_SIVASHINSKY: {n: (500, 30, 1) for n in CANONICAL_RESOLUTIONS},
    Equation.FISHER_KPP: {64: (20, 10, 3), 128: (20, 10, 3), 256: (40, 10, 3), 384: (40, 10, 3)},
    Equation.SWIFT_HOHENBERG: {n: (0, 30, 1) for n in CANONICAL_RESOLUTIONS},
}


def _row_resolution(n: int) -> tuple[int, bool]:
    if n in CANONICAL_RESOLUTIONS:
        return n, True
    return 64, False


def discretization(eq: Equation, n: int) -> DiscretizationRow:
    eq = Equation(eq)
    row_n, canonical = _row_resolution(n)
    dt, save_every = _DT_SAVE[eq][row_n]
    return DiscretizationRow(
        extent=_EXTENT[eq],
        dt=dt,
        save_every=save_every,
        value_range=_VALUE_RANGE[eq],
        canonical=canonical,
    )


def trajectory(eq: Equation, n: int) -> TrajectoryRow:
    eq = Equation(eq)
    row_n, canonical = _row_resolution(n)
    warmup, length, runs = _TRAJECTORY[eq][row_n]
    return TrajectoryRow(warmup=warmup, length=length, runs=runs, canonical=canonical)


def grid_for(eq: Equation, n: int) -> Grid3:
    return make_grid(n, _EXTENT[Equation(eq)])


def value_range(eq: Equation) -> tuple[float, float]:
    return _VALUE_RANGE[Equation(eq)]


def catalog_document() -> str:
    """Render every frozen run table as one auditable text document."""
    lines = [
        "semi-linear system catalog",
        "==========================",
        "",
        f"{'id':>2}  {'name':<16} {'ch':>2}  {'scheme':<6}  {'extent':>6}  {'range':<14}  coefficients",
    ]
    for eq in Equation:
        lo, hi = _VALUE_RANGE[eq]
        lines.append(
            f"{int(eq):>2}  {_NAMES[eq]:<16} {state_channels(eq):>2}  "
            f"etdrk{integrator_order(eq)}   {_EXTENT[eq]:>6g}  {f'[{lo:g}, {hi:g}]':<14}  {_PARAM_LAW[eq]}"
        )
    lines += [
        "",
        "per-resolution schedule (dt, save cadence / warmup, frames, runs)",
        "",
        f"{'name':<16} {'n':>4}  {'dt':>8}  {'save':>4}  {'warmup':>6}  {'frames':>6}  {'runs':>4}",
    ]
    for eq in Equation:
        for n in CANONICAL_RESOLUTIONS:
            dt, save_every = _DT_SAVE[eq][n]
            warmup, length, runs = _TRAJECTORY[eq][n]
            lines.append(
                f"{_NAMES[eq]:<16} {n:>4}  {dt:>8g}  {save_every:>4}  {warmup:>6}  {length:>6}  {runs:>4}"
            )
    lines.append("")
    lines.append("non-canonical even resolutions fall back to the n=64 row.")
    return "\n".join(lines) + "\n"


def clamp_to_range(data: np.ndarray, eq: Equation, normalize: bool = False) -> np.ndarray:
    """Clip to the system's tabulated value range; optionally rescale to [-1, 1]."""
    lo, hi = _VALUE_RANGE[Equation(eq)]
    out = np.clip(data, lo, hi)
    if normalize:
        # Rescale in double then re-clip so rounding cannot leak past the ends.
        out = np.clip(2.0 * (out.astype(np.float64) - lo) / (hi - lo) - 1.0, -1.0, 1.0)
    return out.astype(data.dtype, copy=False)


def linear_symbol(eq: Equation, params: PdeParams, grid: Grid3) -> np.ndarray:
    """Diagonal Fourier symbol of L, shaped (n, n, n); complex only for kdv."""
    eq = Equation(eq)
    lap = spectral.laplacian_symbol(grid)
    if eq is Equation.DIFFUSION:
        return params.nu * lap
    if eq is Equation.HYPER_DIFFUSION:
        return -params.zeta * spectral.bilaplacian_symbol(grid)
    if eq is Equation.BURGERS:
        return params.nu * lap
    if eq is Equation.KDV:
        kdx, kdy, kdz = spectral.wavenumbers_deriv(grid)
        return params.xi * (1j * (kdx + kdy + kdz)) * lap
    if eq is Equation.KURAMOTO_SIVASHINSKY:
        return -(lap + spectral.bilaplacian_symbol(grid))
    if eq is Equation.FISHER_KPP:
        return params.nu * lap + params.r
    if eq is Equation.SWIFT_HOHENBERG:
        return params.r - (1.0 + lap) ** 2
    raise ValueError(f"unknown equation {eq}")


def _pointwise_nonlin(grid: Grid3, fn) -> Callable[[np.ndarray], np.ndarray]:
    mask = spectral.dealias_mask(grid)

    def nonlin(u_hat: np.ndarray) -> np.ndarray:
        u = np.fft.ifftn(u_hat, axes=(-3, -2, -1)).real
        return np.fft.fftn(fn(u), axes=(-3, -2, -1)) * mask

    return nonlin


def _advection_nonlin(grid: Grid3) -> Callable[[np.ndarray], np.ndarray]:
    # -(u . grad) u on a 3-channel velocity state.
    mask = spectral.dealias_mask(grid)
    ik = [1j * k for k in spectral.wavenumbers_deriv(grid)]

    def nonlin(u_hat: np.ndarray) -> np.ndarray:
        u = np.fft.ifftn(u_hat, axes=(-3, -2, -1)).real
        out = np.empty_like(u)
        for c in range(3):
            acc = np.zeros(grid.shape, dtype=u.dtype)
            for a in range(3):
                grad = np.fft.ifftn(u_hat[c] * ik[a], axes=(-3, -2, -1)).real
                acc += u[a] * grad
            out[c] = -acc
        return np.fft.fftn(out, axes=(-3, -2, -1)) * mask

    return nonlin


def _gradient_square_nonlin(grid: Grid3) -> Callable[[np.ndarray], np.ndarray]:
    # -1/2 |grad u|^2 on a single-channel state.
    mask = spectral.dealias_mask(grid)
    ik = [1j * k for k in spectral.wavenumbers_deriv(grid)]

    def nonlin(u_hat: np.ndarray) -> np.ndarray:
        acc = None
        for a in range(3):
            grad = np.fft.ifftn(u_hat * ik[a], axes=(-3, -2, -1)).real
            acc = grad**2 if acc is None else acc + grad**2
        out = np.fft.fftn(-0.5 * acc, axes=(-3, -2, -1)) * mask
        # |grad u|^2 has strictly positive mean and the linear symbol is zero
        # at k=0, so the zero mode would drift monotonically and run away
        # from the tabulated value range. Pin the mean instead.
        out[..., 0, 0, 0] = 0.0
        return out

    return nonlin


def nonlinear_fn(eq: Equation, params: PdeParams, grid: Grid3) -> Callable[[np.ndarray], np.ndarray]:
    """Pseudo-spectral N_hat(u_hat) with output-side dealiasing."""
    eq = Equation(eq)
    if eq in (Equation.DIFFUSION, Equation.HYPER_DIFFUSION):
        return lambda u_hat: np.zeros_like(u_hat)
    if eq in (Equation.BURGERS, Equation.KDV):
        return _advection_nonlin(grid)
    if eq is Equation.KURAMOTO_SIVASHINSKY:
        return _gradient_square_nonlin(grid)
    if eq is Equation.FISHER_KPP:
        r = params.r
        return _pointwise_nonlin(grid, lambda u: -r * u**2)
    if eq is Equation.SWIFT_HOHENBERG:
        return _pointwise_nonlin(grid, lambda u: u**2 - u**3)
    raise ValueError(f"unknown equation {eq}")


def build_stepper(eq: Equation, params: PdeParams, grid: Grid3, dt: float, dtype=np.float32) -> Stepper:
    """Assemble tables and nonlinearity into a ready stepper for one system."""
    eq = Equation(eq)
    symbol = linear_symbol(eq, params, grid)
    nonlin = nonlinear_fn(eq, params, grid)
    if integrator_order(eq) == 4:
        tables = precompute_etdrk4(symbol, dt, dtype=dtype)
    else:
        tables = precompute_etdrk2(symbol, dt, dtype=dtype)
    return Stepper(tables=tables, nonlin=nonlin)
