"""Spectral diagnostics: shell spectra, vorticity, enstrophy, NRMSE metrics.

Two shell conventions are in deliberate coexistence, each used where it is
defined: magnitude spectra bin on the integer mode radius with shells
[b-0.5, b+0.5) (so a pure mode at ||m|| = 3 lands in bin 3), while the
enstrophy spectrum uses half-open shells (k, k+1], which excludes the mean
mode from S(0).  Shell radii are integer mode indices ||m||_2, grid-relative,
never physical wavenumbers.

Corner modes with radius in [bin_count - 0.5, max radius] would round past
the last magnitude bin; they fold into it so that every mode lands in
exactly one shell and shell sums conserve total spectral energy.

Fields analyzed here are often non-periodic crops, so windowed variants
apply a separable Hann window before transforming; NRMSE^ES always windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .spectral import Field, hann_window_3d, mode_radii, wavenumbers_deriv

__all__ = [
    "EnstrophySpectrum",
    "ShellSpectrum",
    "divergence",
    "enstrophy_shell_count",
    "enstrophy_spectrum",
    "nrmse",
    "nrmse_es",
    "shell_bin_count",
    "shell_mode_counts",
    "shell_spectrum",
    "vorticity",
]


@dataclass
class ShellSpectrum:
    """Summed coefficient magnitudes per integer-radius shell [b-0.5, b+0.5)."""

    bins: np.ndarray


@dataclass
class EnstrophySpectrum:
    """S(k): half squared vorticity coefficient magnitudes over (k, k+1]."""

    S: np.ndarray


def shell_bin_count(n: int) -> int:
    max_radius = math.sqrt(3.0) * (n / 2.0)
    return int(math.floor(max_radius)) + 1


def enstrophy_shell_count(n: int) -> int:
    max_radius = math.sqrt(3.0) * (n / 2.0)
    return int(math.ceil(max_radius))


@lru_cache(maxsize=None)
def _magnitude_bin_index(n: int) -> np.ndarray:
    nbins = shell_bin_count(n)
    idx = np.floor(mode_radii(n) + 0.5).astype(np.int64)
    idx = np.minimum(idx, nbins - 1)
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=None)
def _enstrophy_bin_index(n: int) -> np.ndarray:
    # Shell (k, k+1] <=> index ceil(r) - 1; the zero mode gets index -1 and
    # is dropped by the caller.
    r = mode_radii(n)
    idx = np.ceil(r).astype(np.int64) - 1
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=None)
def shell_mode_counts(n: int) -> np.ndarray:
    """Exact number of integer modes per magnitude shell (enumeration oracle)."""
    counts = np.bincount(_magnitude_bin_index(n).ravel(), minlength=shell_bin_count(n))
    counts.setflags(write=False)
    return counts


def shell_spectrum(field: Field, windowed: bool = False) -> ShellSpectrum:
    """Radially aggregated coefficient magnitudes of a single-channel field."""
    if field.channels != 1:
        raise ValueError(f"shell_spectrum expects a single channel, got {field.channels}")
    f = hann_window_3d(field) if windowed else field
    coeffs = np.fft.fftn(f.data[0])
    mags = np.abs(coeffs).astype(np.float64)
    n = field.grid.n
    bins = np.bincount(_magnitude_bin_index(n).ravel(), weights=mags.ravel(), minlength=shell_bin_count(n))
    return ShellSpectrum(bins=bins)


def vorticity(velocity: Field) -> Field:
    """Spectral curl of a 3-channel velocity field."""
    if velocity.channels != 3:
        raise ValueError(f"vorticity expects 3 channels, got {velocity.channels}")
    ikx, iky, ikz = (1j * k for k in wavenumbers_deriv(velocity.grid))
    u_hat = np.fft.fftn(velocity.data, axes=(-3, -2, -1))
    w_hat = np.empty_like(u_hat)
    w_hat[0] = iky * u_hat[2] - ikz * u_hat[1]
    w_hat[1] = ikz * u_hat[0] - ikx * u_hat[2]
    w_hat[2] = ikx * u_hat[1] - iky * u_hat[0]
    w = np.fft.ifftn(w_hat, axes=(-3, -2, -1)).real
    return Field(data=np.ascontiguousarray(w.astype(velocity.data.dtype, copy=False)), grid=velocity.grid)


def divergence(velocity: Field) -> np.ndarray:
    """Spectral divergence, returned as a real (n, n, n) array."""
    if velocity.channels != 3:
        raise ValueError(f"divergence expects 3 channels, got {velocity.channels}")
    ik = [1j * k for k in wavenumbers_deriv(velocity.grid)]
    u_hat = np.fft.fftn(velocity.data, axes=(-3, -2, -1))
    d_hat = ik[0] * u_hat[0] + ik[1] * u_hat[1] + ik[2] * u_hat[2]
    return np.fft.ifftn(d_hat).real


def enstrophy_spectrum(vort: Field, windowed: bool = True) -> EnstrophySpectrum:
    """S(k) = sum over (k, k+1] of 1/2 (|w_x|^2 + |w_y|^2 + |w_z|^2)."""
    if vort.channels != 3:
        raise ValueError(f"enstrophy_spectrum expects 3 channels, got {vort.channels}")
    f = hann_window_3d(vort) if windowed else vort
    w_hat = np.fft.fftn(f.data, axes=(-3, -2, -1))
    density = 0.5 * np.sum(np.abs(w_hat).astype(np.float64) ** 2, axis=0)
    n = vort.grid.n
    idx = _enstrophy_bin_index(n)
    keep = idx >= 0
    S = np.bincount(idx[keep].ravel(), weights=density[keep].ravel(), minlength=enstrophy_shell_count(n))
    return EnstrophySpectrum(S=S)


def _mean_enstrophy(seq: Sequence[Field]) -> np.ndarray:
    acc = None
    for f in seq:
        s = enstrophy_spectrum(vorticity(f), windowed=True).S
        acc = s if acc is None else acc + s
    return acc / len(seq)


def nrmse_es(pred_velocities: Sequence[Field], ref_velocities: Sequence[Field]) -> float:
    """NRMSE between sequence-averaged enstrophy spectra.

    sqrt(mean_k((S_pred - S_ref)^2) / mean_k(S_ref^2)), spectra averaged over
    each sequence first, Hann-windowed throughout.
    """
    if len(pred_velocities) == 0 or len(ref_velocities) == 0:
        raise ValueError("nrmse_es needs non-empty sequences")
    if len(pred_velocities) != len(ref_velocities):
        raise ValueError("pred and ref sequences must have equal length")
    g_pred, g_ref = pred_velocities[0].grid, ref_velocities[0].grid
    if g_pred != g_ref:
        raise ValueError(f"grid mismatch: {g_pred} vs {g_ref}")
    s_pred = _mean_enstrophy(pred_velocities)
    s_ref = _mean_enstrophy(ref_velocities)
    denom = float(np.mean(s_ref**2))
    if denom == 0.0:
        raise ValueError("reference enstrophy spectrum is identically zero")
    return float(np.sqrt(np.mean((s_pred - s_ref) ** 2) / denom))


def nrmse(pred: Field, ref: Field, per_channel: bool = False):
    """Pixel NRMSE sqrt(mean((p-r)^2) / mean(r^2)); optionally per channel."""
    if pred.data.shape != ref.data.shape:
        raise ValueError(f"shape mismatch: {pred.data.shape} vs {ref.data.shape}")
    p = pred.data.astype(np.float64)
    r = ref.data.astype(np.float64)
    if per_channel:
        denom = np.mean(r**2, axis=(1, 2, 3))
        if np.any(denom == 0.0):
            raise ValueError("a reference channel is identically zero")
        return np.sqrt(np.mean((p - r) ** 2, axis=(1, 2, 3)) / denom)
    denom = float(np.mean(r**2))
    if denom == 0.0:
        raise ValueError("reference field is identically zero")
    return float(np.sqrt(np.mean((p - r) ** 2) / denom))
