"""Spectral primitives on periodic cubic grids.

Transforms use the unnormalized forward convention (numpy default): the
forward sum carries no scale factor, the inverse carries 1/n^3.  A constant
field c therefore has zero-mode coefficient c * n^3, and Parseval reads

    sum_x |u(x)|^2 = (1/n^3) sum_k |u_hat(k)|^2 .

Integer modes follow the fftfreq layout m in {0, ..., n/2-1, -n/2, ..., -1};
physical wavenumbers are k = 2*pi*m / extent.  Odd-order derivatives zero the
unpaired Nyquist mode m = -n/2 so that d/dx of a real field stays real.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Field",
    "Grid3",
    "NonRealFieldError",
    "SpectralField",
    "dealias_mask",
    "forward",
    "hann_window",
    "hann_window_3d",
    "inverse",
    "laplacian_symbol",
    "bilaplacian_symbol",
    "make_grid",
    "mode_radii",
    "modes",
    "spectral_gradient",
    "wavenumbers",
    "wavenumbers_deriv",
]


class NonRealFieldError(ValueError):
    """Inverse transform produced an imaginary residue above tolerance."""


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic grid: n points per axis on [0, extent), left-end nodes."""

    n: int
    extent: float

    @property
    def dx(self) -> float:
        return self.extent / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)


def make_grid(n: int, extent: float = 1.0) -> Grid3:
    """Validated grid constructor; n must be even and at least 4."""
    if n < 4 or n % 2 != 0:
        raise ValueError(f"grid size must be even and >= 4, got {n}")
    if not extent > 0.0:
        raise ValueError(f"grid extent must be positive, got {extent}")
    return Grid3(n=int(n), extent=float(extent))


@dataclass
class Field:
    """Real multi-channel field sampled on a Grid3; data shape (C, n, n, n)."""

    data: np.ndarray
    grid: Grid3

    def __post_init__(self) -> None:
        if self.data.ndim != 4 or self.data.shape[1:] != self.grid.shape:
            raise ValueError(
                f"field data must have shape (C, {self.grid.n}, {self.grid.n}, "
                f"{self.grid.n}), got {self.data.shape}"
            )
        if np.iscomplexobj(self.data):
            raise ValueError("field data must be real")

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass
class SpectralField:
    """Fourier coefficients of a Field, full complex cube per channel."""

    coeffs: np.ndarray
    grid: Grid3

    def __post_init__(self) -> None:
        if self.coeffs.ndim != 4 or self.coeffs.shape[1:] != self.grid.shape:
            raise ValueError(
                f"coefficients must have shape (C, {self.grid.n}, {self.grid.n}, "
                f"{self.grid.n}), got {self.coeffs.shape}"
            )

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]


def as_field(data: np.ndarray, grid: Grid3) -> Field:
    """Wrap an array as a Field, adding the channel axis to 3D input."""
    if data.ndim == 3:
        data = data[np.newaxis]
    return Field(data=data, grid=grid)


# Mode tables are cached per grid size and marked read-only; callers share them.


@lru_cache(maxsize=None)
def _mode_1d(n: int) -> np.ndarray:
    # fftfreq layout, kept integral: [0, 1, ..., n/2-1, -n/2, ..., -1]
    m = np.concatenate([np.arange(0, (n + 1) // 2), np.arange(-(n // 2), 0)])
    m = m.astype(np.int64)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def modes(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer mode grids (mx, my, mz), each shaped (n, n, n)."""
    m = _mode_1d(n)
    mx, my, mz = np.meshgrid(m, m, m, indexing="ij")
    for a in (mx, my, mz):
        a.setflags(write=False)
    return mx, my, mz


@lru_cache(maxsize=None)
def mode_radii(n: int) -> np.ndarray:
    """Euclidean mode radius ||m||_2, shaped (n, n, n)."""
    mx, my, mz = modes(n)
    r = np.sqrt((mx.astype(np.float64)) ** 2 + my**2 + mz**2)
    r.setflags(write=False)
    return r


@lru_cache(maxsize=None)
def wavenumbers(grid: Grid3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Physical wavenumbers k = 2*pi*m/extent per axis, shaped (n, n, n)."""
    scale = 2.0 * np.pi / grid.extent
    out = tuple(scale * m.astype(np.float64) for m in modes(grid.n))
    for a in out:
        a.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def wavenumbers_deriv(grid: Grid3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Wavenumbers for odd-order derivatives: Nyquist mode m = -n/2 zeroed."""
    scale = 2.0 * np.pi / grid.extent
    out = []
    for m in modes(grid.n):
        k = scale * m.astype(np.float64)
        k = np.where(m == -grid.n // 2, 0.0, k)
        k.setflags(write=False)
        out.append(k)
    return tuple(out)


@lru_cache(maxsize=None)
def laplacian_symbol(grid: Grid3) -> np.ndarray:
    """Fourier symbol of the Laplacian: -(kx^2 + ky^2 + kz^2)."""
    kx, ky, kz = wavenumbers(grid)
    sym = -(kx**2 + ky**2 + kz**2)
    sym.setflags(write=False)
    return sym


@lru_cache(maxsize=None)
def bilaplacian_symbol(grid: Grid3) -> np.ndarray:
    """Fourier symbol of the squared Laplacian: (kx^2 + ky^2 + kz^2)^2."""
    sym = laplacian_symbol(grid) ** 2
    sym.setflags(write=False)
    return sym


@lru_cache(maxsize=None)
def dealias_mask(grid: Grid3) -> np.ndarray:
    """Two-thirds rule mask: keep modes with |m_j| < n/3 on every axis."""
    cut = grid.n / 3.0
    mx, my, mz = modes(grid.n)
    mask = (np.abs(mx) < cut) & (np.abs(my) < cut) & (np.abs(mz) < cut)
    mask.setflags(write=False)
    return mask


def forward(field: Field) -> SpectralField:
    """Forward FFT over the three spatial axes (unnormalized)."""
    coeffs = np.fft.fftn(field.data, axes=(-3, -2, -1))
    return SpectralField(coeffs=coeffs, grid=field.grid)


def inverse(spec: SpectralField, imag_tol: float = 1e-3) -> Field:
    """Inverse FFT; discards the imaginary residue after checking it.

    The residue check compares max|imag| against imag_tol * max|real| (with
    an absolute floor for the all-zero field) and raises NonRealFieldError
    when coefficients lack Hermitian symmetry badly enough to matter.
    """
    full = np.fft.ifftn(spec.coeffs, axes=(-3, -2, -1))
    real = full.real
    imag_max = float(np.max(np.abs(full.imag)))
    scale = max(float(np.max(np.abs(real))), 1e-30)
    if imag_max > imag_tol * scale:
        raise NonRealFieldError(
            f"imaginary residue {imag_max:.3e} exceeds {imag_tol:.1e} * {scale:.3e}; "
            "coefficients are not Hermitian-symmetric"
        )
    return Field(data=np.ascontiguousarray(real), grid=spec.grid)


def spectral_gradient(spec: SpectralField, axis: int) -> SpectralField:
    """Partial derivative along a spatial axis via i*k multiplication."""
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1, or 2, got {axis}")
    k = wavenumbers_deriv(spec.grid)[axis]
    return SpectralField(coeffs=spec.coeffs * (1j * k), grid=spec.grid)


@lru_cache(maxsize=None)
def hann_window(n: int) -> np.ndarray:
    """1D Hann window w(i) = 0.5 - 0.5*cos(2*pi*i/(n-1)), endpoints zero."""
    w = np.hanning(n)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def _hann_cube(n: int) -> np.ndarray:
    w = hann_window(n)
    cube = w[:, None, None] * w[None, :, None] * w[None, None, :]
    cube.setflags(write=False)
    return cube


def hann_window_3d(field: Field) -> Field:
    """Apply the separable 3D Hann window to every channel."""
    cube = _hann_cube(field.grid.n)
    return Field(data=field.data * cube, grid=field.grid)
