"""Random initial conditions with controlled spectral content.

Every family starts from white Gaussian noise on the grid and shapes it in
Fourier space, which makes the spectral support and decay easy to reason
about:

    gaussian         raw white noise, no shaping, no range normalization
    band-limited     keep modes with |m_j| <= k on every axis, drop the rest
    diffused         scale coefficients by exp(-nu * |k_phys|^2)
    powerlaw         scale coefficients by ||m||^alpha (zero mode dropped)
    projected-band   band-limited spectrum additionally weighted by 1/||m||^2

All shaped families are then min-max normalized to a target interval
[c_min, c_max]; the interval is either fixed per config or itself sampled.
Named configs (band-a .. band-d, diffused-a .. diffused-c, powerlaw-a/b and
the projected variants) freeze the hyperparameter laws, and each equation
draws uniformly from its own allowed list.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import spectral
from .equations import Equation
from .spectral import Field, Grid3

__all__ = [
    "CONFIGS",
    "IcFamily",
    "InitializerConfig",
    "InitializerSpec",
    "allowed_initializers",
    "generate",
    "generate_field",
    "ic_param_count",
    "normalize_to_bounds",
    "sample_initializer",
    "spec_from_wire",
]


class IcFamily(enum.Enum):
    WHITE_GAUSSIAN = "gaussian"
    BAND_LIMITED = "band-limited"
    DIFFUSED = "diffused"
    POWER_LAW = "powerlaw"
    PROJECTED_BAND = "projected-band"


@dataclass(frozen=True)
class InitializerConfig:
    """A named hyperparameter law for one family."""

    config_id: int
    name: str
    family: IcFamily
    k_range: Optional[tuple[int, int]] = None  # inclusive band cutoff range
    nu_range: Optional[tuple[float, float]] = None
    alpha_range: Optional[tuple[float, float]] = None
    fixed_bounds: Optional[tuple[float, float]] = None  # None => sampled bounds


_B = IcFamily.BAND_LIMITED
_D = IcFamily.DIFFUSED
_P = IcFamily.POWER_LAW
_J = IcFamily.PROJECTED_BAND

CONFIGS: dict[int, InitializerConfig] = {
    c.config_id: c
    for c in [
        InitializerConfig(0, "gaussian", IcFamily.WHITE_GAUSSIAN),
        InitializerConfig(1, "band-a", _B, k_range=(3, 5), fixed_bounds=(-1.0, 1.0)),
        InitializerConfig(2, "band-b", _B, k_range=(3, 9), fixed_bounds=(-1.0, 1.0)),
        InitializerConfig(3, "band-c", _B, k_range=(5, 9), fixed_bounds=(0.0, 1.0)),
        InitializerConfig(4, "band-d", _B, k_range=(3, 9), fixed_bounds=None),
        InitializerConfig(5, "diffused-a", _D, nu_range=(0.001, 0.01), fixed_bounds=(-1.0, 1.0)),
        InitializerConfig(6, "diffused-b", _D, nu_range=(0.001, 0.005), fixed_bounds=(-1.0, 1.0)),
        InitializerConfig(7, "diffused-c", _D, nu_range=(0.001, 0.005), fixed_bounds=None),
        InitializerConfig(8, "powerlaw-a", _P, alpha_range=(-5.0, -2.0), fixed_bounds=(-1.0, 1.0)),
        InitializerConfig(9, "powerlaw-b", _P, alpha_range=(-5.0, -2.0), fixed_bounds=None),
        InitializerConfig(10, "projected-band-a", _J, k_range=(3, 5), fixed_bounds=(-1.0, 1.0)),
        InitializerConfig(11, "projected-band-b", _J, k_range=(3, 9), fixed_bounds=(-1.0, 1.0)),
        InitializerConfig(12, "projected-band-c", _J, k_range=(5, 9), fixed_bounds=(0.0, 1.0)),
        InitializerConfig(13, "projected-band-d", _J, k_range=(3, 9), fixed_bounds=None),
    ]
}

_BY_NAME = {c.name: c for c in CONFIGS.values()}


def config_by_name(name: str) -> InitializerConfig:
    try:
        return _BY_NAME[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown initializer config {name!r}") from None


# Which configs each equation may draw from.
_ALLOWED: dict[Equation, tuple[str, ...]] = {
    Equation.DIFFUSION: ("band-d", "diffused-c", "powerlaw-b", "projected-band-d"),
    Equation.HYPER_DIFFUSION: ("band-d", "diffused-c", "powerlaw-b", "projected-band-d"),
    Equation.BURGERS: ("band-a", "diffused-a", "powerlaw-a", "projected-band-a"),
    Equation.KDV: ("band-a", "diffused-a", "powerlaw-a", "projected-band-a"),
    Equation.KURAMOTO_SIVASHINSKY: ("gaussian",),
    Equation.FISHER_KPP: ("band-c",),
    Equation.SWIFT_HOHENBERG: ("band-b", "diffused-b", "powerlaw-a", "projected-band-b"),
}


def allowed_initializers(eq: Equation) -> tuple[InitializerConfig, ...]:
    return tuple(_BY_NAME[name] for name in _ALLOWED[Equation(eq)])


@dataclass(frozen=True)
class InitializerSpec:
    """A concrete draw from a config: everything needed to build one field."""

    config_id: int
    k_limit: Optional[int] = None
    nu: Optional[float] = None
    alpha: Optional[float] = None
    c_min: Optional[float] = None
    c_max: Optional[float] = None

    @property
    def config(self) -> InitializerConfig:
        return CONFIGS[self.config_id]

    @property
    def family(self) -> IcFamily:
        return self.config.family

    def wire_values(self) -> tuple[float, ...]:
        """Hyperparameters as they travel next to the payload (f32-rounded)."""
        fam = self.family
        if fam is IcFamily.WHITE_GAUSSIAN:
            vals: tuple[float, ...] = ()
        elif fam in (IcFamily.BAND_LIMITED, IcFamily.PROJECTED_BAND):
            vals = (float(self.k_limit), self.c_min, self.c_max)
        elif fam is IcFamily.DIFFUSED:
            vals = (self.nu, self.c_min, self.c_max)
        else:
            vals = (self.alpha, self.c_min, self.c_max)
        return tuple(float(np.float32(v)) for v in vals)


def ic_param_count(config_id: int) -> int:
    return 0 if CONFIGS[config_id].family is IcFamily.WHITE_GAUSSIAN else 3


def spec_from_wire(config_id: int, values) -> InitializerSpec:
    if config_id not in CONFIGS:
        raise ValueError(f"unknown initializer id {config_id}")
    fam = CONFIGS[config_id].family
    if len(values) != ic_param_count(config_id):
        raise ValueError(
            f"initializer {CONFIGS[config_id].name} expects {ic_param_count(config_id)} values, got {len(values)}"
        )
    if fam is IcFamily.WHITE_GAUSSIAN:
        return InitializerSpec(config_id=config_id)
    v0, c_min, c_max = (float(v) for v in values)
    if fam in (IcFamily.BAND_LIMITED, IcFamily.PROJECTED_BAND):
        return InitializerSpec(config_id=config_id, k_limit=int(round(v0)), c_min=c_min, c_max=c_max)
    if fam is IcFamily.DIFFUSED:
        return InitializerSpec(config_id=config_id, nu=v0, c_min=c_min, c_max=c_max)
    return InitializerSpec(config_id=config_id, alpha=v0, c_min=c_min, c_max=c_max)


def sample_initializer(eq: Equation, rng: np.random.Generator) -> InitializerSpec:
    """Pick a config uniformly from the equation's list, then its hyperparameters."""
    configs = allowed_initializers(eq)
    cfg = configs[int(rng.integers(0, len(configs)))]
    return sample_from_config(cfg, rng)


def sample_from_config(cfg: InitializerConfig, rng: np.random.Generator) -> InitializerSpec:
    k_limit = nu = alpha = None
    if cfg.k_range is not None:
        k_limit = int(rng.integers(cfg.k_range[0], cfg.k_range[1] + 1))
    if cfg.nu_range is not None:
        nu = float(rng.uniform(*cfg.nu_range))
    if cfg.alpha_range is not None:
        alpha = float(rng.uniform(*cfg.alpha_range))
    if cfg.family is IcFamily.WHITE_GAUSSIAN:
        return InitializerSpec(config_id=cfg.config_id)
    if cfg.fixed_bounds is not None:
        c_min, c_max = cfg.fixed_bounds
    else:
        c_min = float(rng.uniform(-1.0, -0.1))
        c_max = float(rng.uniform(0.1, 1.0))
    return InitializerSpec(
        config_id=cfg.config_id, k_limit=k_limit, nu=nu, alpha=alpha, c_min=float(c_min), c_max=float(c_max)
    )


def normalize_to_bounds(data: np.ndarray, c_min: float, c_max: float) -> np.ndarray:
    """Affine min-max map onto [c_min, c_max]; constant input maps to the midpoint."""
    lo = float(np.min(data))
    hi = float(np.max(data))
    if hi - lo <= 0.0:
        return np.full_like(data, 0.5 * (c_min + c_max))
    t = (data - lo) / (hi - lo)
    return c_min + (c_max - c_min) * t


def _band_mask(n: int, k_limit: int) -> np.ndarray:
    if not 1 <= k_limit < n // 2:
        raise ValueError(f"band cutoff {k_limit} out of range for n={n} (need 1 <= k < n/2)")
    mx, my, mz = spectral.modes(n)
    return (np.abs(mx) <= k_limit) & (np.abs(my) <= k_limit) & (np.abs(mz) <= k_limit)


def generate(spec: InitializerSpec, grid: Grid3, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Draw one (n, n, n) field for the spec, consuming exactly one noise cube."""
    n = grid.n
    noise = rng.standard_normal(grid.shape)
    fam = spec.family
    if fam is IcFamily.WHITE_GAUSSIAN:
        return noise.astype(dtype)

    coeffs = np.fft.fftn(noise)
    if fam in (IcFamily.BAND_LIMITED, IcFamily.PROJECTED_BAND):
        # Cutoffs are tuned for production grids; on tiny grids the sampled
        # band can reach past Nyquist, so saturate at the widest valid band.
        k_eff = min(spec.k_limit, n // 2 - 1)
    if fam is IcFamily.BAND_LIMITED:
        coeffs = coeffs * _band_mask(n, k_eff)
    elif fam is IcFamily.PROJECTED_BAND:
        radii2 = spectral.mode_radii(n) ** 2
        weight = np.divide(1.0, radii2, out=np.zeros_like(radii2), where=radii2 > 0)
        coeffs = coeffs * _band_mask(n, k_eff) * weight
    elif fam is IcFamily.DIFFUSED:
        kx, ky, kz = spectral.wavenumbers(grid)
        coeffs = coeffs * np.exp(-spec.nu * (kx**2 + ky**2 + kz**2))
    elif fam is IcFamily.POWER_LAW:
        radii = spectral.mode_radii(n)
        safe = np.where(radii > 0, radii, 1.0)
        envelope = np.where(radii > 0, safe**spec.alpha, 0.0)
        coeffs = coeffs * envelope
    else:
        raise ValueError(f"unknown family {fam}")

    field = np.fft.ifftn(coeffs).real
    return normalize_to_bounds(field, spec.c_min, spec.c_max).astype(dtype)


def generate_field(spec: InitializerSpec, grid: Grid3, rng: np.random.Generator, dtype=np.float32) -> Field:
    return Field(data=generate(spec, grid, rng, dtype)[np.newaxis], grid=grid)
