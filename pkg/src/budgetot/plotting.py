"""Report figures, drawn on Agg canvases so no display is needed."""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.colors import LogNorm
from matplotlib.figure import Figure

from .core import DEFAULT_ZERO_TOL, as_array

# fixed metadata keeps repeated renders byte-identical
_META = {"Software": None}


def _save(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata=_META)


def plot_plan_heatmap(T, path, title: str = "transport plan", zero_tol: float = DEFAULT_ZERO_TOL) -> None:
    """Heatmap of the plan on a log color scale; exact zeros are left blank."""
    T = as_array(T)
    fig = Figure(figsize=(5.0, 4.2))
    ax = fig.add_subplot(1, 1, 1)
    pos = T > zero_tol
    shown = np.ma.masked_where(~pos, T)
    if pos.any():
        lo = T[pos].min()
        hi = T[pos].max()
        norm = LogNorm(vmin=lo, vmax=hi if hi > lo else lo * 10)
        im = ax.imshow(shown, cmap="viridis", norm=norm, interpolation="nearest", aspect="auto")
        fig.colorbar(im, ax=ax, label="mass")
    ax.set_xlabel("column j")
    ax.set_ylabel("row i")
    nnz = int(pos.sum())
    ax.set_title(f"{title} ({nnz} non-zeros, {100.0 * nnz / T.size:.1f}%)")
    fig.tight_layout()
    _save(fig, path)


def plot_residual_history(per_outer, path, outer_tol: float = None) -> None:
    """Coupling residual and inner-iteration count per outer iteration."""
    rows = [r if isinstance(r, dict) else r.__dict__ for r in per_outer]
    k = np.arange(len(rows))
    res = np.array([r["residual"] for r in rows], dtype=float)
    inner = np.array([r["inner_iters"] for r in rows], dtype=float)
    restarted = np.array([bool(r.get("restarted", False)) for r in rows])

    fig = Figure(figsize=(6.0, 3.6))
    ax = fig.add_subplot(1, 1, 1)
    ax.semilogy(k, res, "o-", color="C0", label="residual")
    if restarted.any():
        ax.semilogy(k[restarted], res[restarted], "x", color="C3", ms=9, label="reset to start")
    if outer_tol is not None:
        ax.axhline(outer_tol, color="0.5", ls="--", lw=1, label="tolerance")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("||T-U||, ||T-V||, ||T-W|| combined")
    ax2 = ax.twinx()
    ax2.bar(k, inner, color="C1", alpha=0.25, width=0.6)
    ax2.set_ylabel("inner iterations")
    ax.set_zorder(ax2.get_zorder() + 1)
    ax.patch.set_visible(False)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    _save(fig, path)
