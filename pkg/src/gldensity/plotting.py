"""SVG figures for reports.  Output is byte-stable: no timestamp, fixed id salt."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"svg.hashsalt": "gldensity", "svg.fonttype": "none", "figure.figsize": (5.0, 3.6)}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def loglog(path, radii: Sequence[float], series: dict[str, Sequence[float]], ylabel: str,
           title: str = "") -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        r = np.asarray(radii, dtype=float)
        for label, ys in series.items():
            y = np.asarray(ys, dtype=float)
            keep = y > 0
            ax.loglog(r[keep], y[keep], "o-", label=label)
        ax.set_xlabel("R")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, Path(path))


def trace_plot(path, energies_per_level: Sequence[Sequence[float]]) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for i, e in enumerate(energies_per_level):
            ax.plot(np.arange(len(e)), e, label=f"level {i}")
        ax.set_xlabel("iteration")
        ax.set_ylabel("energy")
        ax.legend()
        return _save(fig, Path(path))


def profile_plot(path, xs, us, title: str = "") -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.plot(xs, us)
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        if title:
            ax.set_title(title)
        return _save(fig, Path(path))


def field_plot(path, values: np.ndarray, extent: Sequence[float]) -> Path:
    """Image of a 2D field (first axis horizontal)."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ex, ey = extent[0], extent[1]
        im = ax.imshow(values.T, origin="lower", extent=(-ex, ex, -ey, ey), vmin=-1, vmax=1,
                       cmap="coolwarm", interpolation="nearest")
        fig.colorbar(im, ax=ax)
        return _save(fig, Path(path))


def sweep_plot(path, a_values, V, omega, dV) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.plot(a_values, dV, label="dV/da (finite difference)")
        ax.plot(a_values, omega, "--", label="|Omega_a|")
        ax.set_xlabel("a")
        ax.legend()
        return _save(fig, Path(path))
