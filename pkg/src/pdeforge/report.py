"""Plot-ready table export and optional figure rendering for spectra."""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence

__all__ = ["render_spectrum_figure", "write_delimited"]


def write_delimited(dest, header: Sequence[str], rows: Iterable[Sequence], delimiter: str = ",") -> None:
    """Write one header line and one line per row; dest is a path or stream."""

    def emit(stream) -> None:
        stream.write(delimiter.join(str(h) for h in header) + "\n")
        for row in rows:
            stream.write(delimiter.join(_fmt(v) for v in row) + "\n")

    if dest is None:
        emit(sys.stdout)
    elif hasattr(dest, "write"):
        emit(dest)
    else:
        with open(Path(dest), "w", encoding="ascii") as f:
            emit(f)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9e}"
    return str(value)


def render_spectrum_figure(
    path,
    shells: Sequence[int],
    series: dict[str, Sequence[float]],
    title: str,
    ylabel: str,
    logy: bool = True,
    xlabel: str = "shell",
) -> None:
    """Render shell series to an image file next to the delimited output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in series.items():
        ax.plot(shells, values, label=label, linewidth=1.2)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
