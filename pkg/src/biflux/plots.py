"""Figure rendering for report files.

Each CSV-emitting CLI mode also renders a PNG next to the delimited
output; dispatch is on the report's schema tag, so figures can be
(re)built from the files alone.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ParseError  # noqa: E402
from .reports import read_csv  # noqa: E402

_DPI = 150


def _column(rows, col, name, cast=float):
    return np.array([cast(row[col[name]]) for row in rows])


def render_report_figure(report_path, out_path=None) -> Path:
    """Render the figure that belongs to a schema-tagged report CSV."""
    report_path = Path(report_path)
    if out_path is None:
        out_path = report_path.with_suffix(".png")
    schema, meta, columns, rows = read_csv(report_path)
    col = {name: k for k, name in enumerate(columns)}
    kind = schema.split("@")[0]
    if kind == "residuals":
        fig = _residuals_figure(rows, col)
    elif kind == "entropy":
        fig = _entropy_figure(rows, col)
    elif kind == "gap":
        fig = _gap_figure(rows, col)
    elif kind == "waves":
        fig = _waves_figure(rows, col)
    elif kind == "thermo":
        fig = _thermo_figure(rows, col)
    else:
        raise ParseError(f"{report_path}: no figure renderer for schema {schema!r}")
    fig.savefig(out_path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return Path(out_path)


def _residuals_figure(rows, col):
    ns = _column(rows, col, "n", int)
    multi_n = len(set(ns.tolist())) > 1
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
    for ax, comp in zip(axes, ("zeta", "eta")):
        picked = [row for row in rows if row[col["component"]] == comp]
        keys = sorted({(row[col["g"]], row[col["n"]]) for row in picked})
        for g_name, n_val in keys:
            sub = [
                row
                for row in picked
                if row[col["g"]] == g_name and row[col["n"]] == n_val
            ]
            if multi_n:
                x = np.array([float(r[col["n"]]) for r in sub])
                label = f"g={g_name}"
            else:
                x = np.array([float(r[col["t"]]) for r in sub])
                label = f"g={g_name}"
            y = np.array([float(r[col["mean_abs_residual"]]) for r in sub])
            err = np.array([float(r[col["stderr_abs"]]) for r in sub])
            order = np.argsort(x)
            ax.errorbar(x[order], y[order], yerr=err[order], marker="o", capsize=3, label=label)
        if multi_n:
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel("n")
        else:
            ax.set_xlabel("t")
        ax.set_title(f"{comp} component")
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("mean |residual|")
    # drop duplicate labels arising from multiple times per (g, n)
    handles, labels = axes[0].get_legend_handles_labels()
    seen: dict[str, object] = {}
    for h, lab in zip(handles, labels):
        seen.setdefault(lab, h)
    axes[0].legend(seen.values(), seen.keys(), fontsize=8)
    fig.suptitle("weak-convergence residuals")
    return fig


def _entropy_figure(rows, col):
    t = _column(rows, col, "t")
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for name, style in (("H_nu", "o-"), ("H_nu_tilde", "s--"), ("H_pi", "^-")):
        ax.plot(t, _column(rows, col, name), style, ms=3, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("relative entropy")
    ax.grid(True, alpha=0.3)
    ax.legend()
    ax.set_title("exact entropies vs reference measures")
    return fig


def _gap_figure(rows, col):
    ls = _column(rows, col, "l")
    ws = _column(rows, col, "W")
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(ls, ws, "o", ms=4, alpha=0.5, label="per sector")
    uniq = sorted(set(ls.tolist()))
    wmax = [ws[ls == l].max() for l in uniq]
    ax.plot(uniq, wmax, "k-o", ms=5, label="W(l) = max over sectors")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("block size l")
    ax.set_ylabel("1 / (l^2 gap)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    ax.set_title("spectral-gap scaling")
    return fig


def _waves_figure(rows, col):
    times = sorted({float(r[col["t"]]) for r in rows})
    t_last = times[-1]
    sub = [r for r in rows if float(r[col["t"]]) == t_last]
    x = _column(sub, {k: v for k, v in col.items()}, "x")
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].plot(x, _column(sub, col, "sigma"), label="sigma")
    axes[0].plot(x, _column(sub, col, "delta"), label="delta")
    axes[0].set_title(f"waves at t={t_last:g}")
    axes[1].plot(x, _column(sub, col, "u_n"), label="u_n")
    axes[1].plot(x, _column(sub, col, "v_n"), label="v_n")
    axes[1].plot(x, _column(sub, col, "u_tilde"), "--", label="u_tilde")
    axes[1].plot(x, _column(sub, col, "v_tilde"), "--", label="v_tilde")
    axes[1].set_title("reconstructed profiles")
    for ax in axes:
        ax.set_xlabel("x")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    return fig


def _thermo_figure(rows, col):
    u = _column(rows, col, "u")
    v = _column(rows, col, "v")
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    for ax, name in zip(axes, ("S", "lambda", "mu")):
        sc = ax.scatter(u, v, c=_column(rows, col, name), s=14, cmap="viridis")
        fig.colorbar(sc, ax=ax)
        ax.set_title(name)
        ax.set_xlabel("u")
        ax.set_ylabel("v")
    fig.suptitle("thermodynamic table")
    return fig
