"""Figure rendering for the report path.

Every preset writes its plot-ready CSV first; these helpers render the same
data to PNG files next to it. All rendering uses the Agg backend so runs
work headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import DrawMatrix  # noqa: E402

_DPI = 150


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def trace_figure(draws_by_label: dict[str, DrawMatrix], param: str, path, truth_sd=None):
    """Per-sampler trace panels for one parameter."""
    n = len(draws_by_label)
    fig, axes = plt.subplots(n, 1, figsize=(8, 2.2 * n), sharex=False, squeeze=False)
    for ax, (label, draws) in zip(axes[:, 0], draws_by_label.items()):
        x = draws.param(param)
        for c in range(x.shape[0]):
            ax.plot(x[c], lw=0.5, alpha=0.8)
        if truth_sd is not None:
            for s in (-2 * truth_sd, 2 * truth_sd):
                ax.axhline(s, color="k", ls="--", lw=0.7, alpha=0.5)
        ax.set_ylabel(param)
        ax.set_title(label, fontsize=9)
    axes[-1, 0].set_xlabel("iteration")
    return _finish(fig, path)


def funnel_scatter_figure(draws_by_label: dict[str, DrawMatrix], path):
    """theta_1 against the latent scale, one panel per sampler."""
    n = len(draws_by_label)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2), squeeze=False)
    for ax, (label, draws) in zip(axes[0], draws_by_label.items()):
        th = draws.param("theta.1").reshape(-1)
        v = draws.param("v").reshape(-1)
        ax.plot(th, v, ".", ms=1.5, alpha=0.4)
        ax.set_xlabel("theta.1")
        ax.set_ylabel("v")
        ax.set_title(label, fontsize=9)
        ax.set_ylim(-10, 10)
    return _finish(fig, path)


def scan_figure(rows: list[dict], path):
    """Acceptance, split R-hat, and divergence count against the target."""
    deltas = [r["delta"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    axes[0].plot(deltas, [r["achieved_accept"] for r in rows], "o-")
    axes[0].plot([0, 1], [0, 1], "k--", lw=0.7)
    axes[0].set_xlabel("target acceptance")
    axes[0].set_ylabel("achieved acceptance")
    axes[0].set_xlim(0.6, 1.02)
    axes[0].set_ylim(0.6, 1.02)
    axes[1].plot(deltas, [r["rhat_v"] for r in rows], "o-")
    axes[1].axhline(1.05, color="k", ls="--", lw=0.7)
    axes[1].set_xlabel("target acceptance")
    axes[1].set_ylabel("split R-hat of v")
    axes[2].plot(deltas, [r["n_divergent"] for r in rows], "o-")
    axes[2].set_xlabel("target acceptance")
    axes[2].set_ylabel("divergent transitions")
    return _finish(fig, path)


def energy_trace_figure(traces: dict[str, dict[str, np.ndarray]], path):
    """Potential and kinetic traces along one trajectory per sampler."""
    n = len(traces)
    fig, axes = plt.subplots(1, n, figsize=(5.2 * n, 3.4), squeeze=False)
    for ax, (label, tr) in zip(axes[0], traces.items()):
        steps = np.arange(len(tr["potential"]))
        ax.plot(steps, tr["potential"] - tr["potential"][0], label="dV")
        ax.plot(steps, tr["kinetic"] - tr["kinetic"][0], label="dT")
        ax.set_xlabel("integrator step")
        ax.set_ylabel("change from start")
        ax.set_title(label, fontsize=9)
        ax.legend(fontsize=8)
    return _finish(fig, path)


def energy_hist_figure(dv_by_label: dict[str, np.ndarray], path, marks: dict[str, float] | None = None):
    """Histograms of per-transition potential-energy variation."""
    n = len(dv_by_label)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.2), squeeze=False)
    for ax, (label, dv) in zip(axes[0], dv_by_label.items()):
        dv = dv[np.isfinite(dv)]
        ax.hist(dv, bins=40, color="tab:blue", alpha=0.8)
        if marks and label in marks:
            ax.axvline(marks[label], color="k", ls="--", lw=0.8)
        ax.set_xlabel("per-transition max dV")
        ax.set_ylabel("count")
        ax.set_title(label, fontsize=9)
    return _finish(fig, path)


def crossover_figure(rows: list[dict], path):
    """Sampling efficiency against the generative noise scale for CP and NCP."""
    sigmas = sorted({r["sigma"] for r in rows})
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for label, marker in (("cp", "o"), ("ncp", "s")):
        ys = [next(r["ess_per_1k_evals"] for r in rows
                   if r["parameterization"] == label and r["sigma"] == s) for s in sigmas]
        ax.plot(sigmas, ys, marker + "-", label=label.upper())
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("generative sigma")
    ax.set_ylabel("ESS(tau) per 1000 evaluations")
    ax.legend()
    return _finish(fig, path)


def curvature_figure(rows: list[dict], path):
    """Principal curvature directions scaled by their magnitudes."""
    fig, ax = plt.subplots(figsize=(5.2, 5.2))
    for r in rows:
        for k, color in ((1, "tab:blue"), (2, "tab:red")):
            mag = r[f"eval{k}"]
            dx = 0.22 * mag * r[f"evec{k}x"]
            dy = 0.22 * mag * r[f"evec{k}y"]
            ax.plot([r["x"] - dx, r["x"] + dx], [r["y"] - dy, r["y"] + dy],
                    color=color, lw=0.8, alpha=0.8)
    ax.set_xlabel("theta")
    ax.set_ylabel("v")
    return _finish(fig, path)


def benchmark_figure(rows: list[dict], path):
    """Efficiency comparison across algorithm/parameterization rows."""
    labels = [f'{r["algorithm"]}\n{r["parameterization"]}' for r in rows]
    vals = [r["ess_per_1k_evals"] for r in rows]
    colors = ["tab:blue" if r.get("consistent", True) else "tab:red" for r in rows]
    fig, ax = plt.subplots(figsize=(1.1 * len(rows) + 2, 3.6))
    ax.bar(range(len(rows)), vals, color=colors)
    ax.set_xticks(range(len(rows)), labels, fontsize=8)
    ax.set_yscale("log")
    ax.set_ylabel("ESS(tau) per 1000 evaluations")
    return _finish(fig, path)
