"""pdeforge: storage-free synthesis of 3D semi-linear PDE training data.

The package covers the full pipeline: Fourier pseudo-spectral ETDRK
integration on periodic cubes, spectrally diverse random initial
conditions, a fault-tolerant procedural generation server, a binary
streaming protocol with bounded buffering and an MFU sample cache, and
spectral diagnostics for validating the generated fields.
"""

from . import analysis, equations, etdrk, initializers, spectral
from .spectral import Field, Grid3, SpectralField, forward, inverse

__all__ = [
    "Field",
    "Grid3",
    "SpectralField",
    "analysis",
    "equations",
    "etdrk",
    "forward",
    "initializers",
    "inverse",
    "spectral",
]

__version__ = "0.1.0"
