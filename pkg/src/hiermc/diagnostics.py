"""Convergence and efficiency statistics over recorded draws.

All functions are pure over an immutable :class:`DrawMatrix`. Undefined
statistics (zero-variance inputs) come back as NaN sentinels and are printed
as not-applicable rather than as a falsely reassuring 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import TargetModel
from .numerics import eigh

STAT_KEYS = ("accept_stat", "stepsize", "int_steps", "treedepth", "divergent", "energy")


@dataclass(frozen=True)
class DrawMatrix:
    """Ordered draws from one or more chains plus per-draw sampler statistics.

    ``values`` has shape (chains, draws, params) in constrained space;
    ``lp`` has shape (chains, draws); every array in ``stats`` matches ``lp``.
    """

    names: list[str]
    values: np.ndarray
    lp: np.ndarray
    stats: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or len(self.names) != v.shape[2]:
            raise ValueError("DrawMatrix: values must be (chains, draws, params) matching names")
        if self.lp.shape != v.shape[:2]:
            raise ValueError("DrawMatrix: lp must be (chains, draws)")
        for key, arr in self.stats.items():
            if arr.shape != v.shape[:2]:
                raise ValueError(f"DrawMatrix: stat '{key}' must be (chains, draws)")

    @property
    def chains(self) -> int:
        return self.values.shape[0]

    @property
    def draws(self) -> int:
        return self.values.shape[1]

    def param(self, name: str) -> np.ndarray:
        """Draws of one parameter as a (chains, draws) array."""
        try:
            j = self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown parameter '{name}'; have {self.names[:8]}...") from None
        return self.values[:, :, j]

    def divergence_count(self) -> int:
        d = self.stats.get("divergent")
        return int(np.nansum(d)) if d is not None else 0


@dataclass(frozen=True)
class SummaryRow:
    name: str
    mean: float
    sd: float
    q5: float
    q50: float
    q95: float
    ess: float
    rhat: float


def _split_halves(x: np.ndarray) -> np.ndarray:
    """Split each chain in half, doubling the chain count."""
    c, n = x.shape
    half = n // 2
    return np.vstack([x[:, :half], x[:, half : 2 * half]])


def split_rhat(x: np.ndarray) -> float:
    """Split potential-scale-reduction statistic over (chains, draws) input.

    Each chain is halved so a single nonstationary chain is detected too.
    Returns NaN when the within-sequence variance is zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] < 4:
        raise ValueError(f"split_rhat needs >= 4 draws, got {x.shape[1]}")
    # The statistic is affine-invariant; normalizing away the raw location
    # and scale in extended precision keeps that true numerically as well.
    x = np.asarray(x, dtype=np.longdouble)
    center = x.mean()
    spread = x.std()
    if spread > 0:
        x = (x - center) / spread
    seq = _split_halves(x)
    m, n = seq.shape
    means = seq.mean(axis=1)
    w = float(np.mean(np.var(seq, axis=1, ddof=1)))
    b = n * float(np.var(means, ddof=1))
    if w <= 0.0 or not np.isfinite(w):
        return float("nan")
    return float(np.sqrt((n - 1) / n + b / (n * w)))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Autocovariance per lag via FFT, divisor N, shape like input (chains, draws)."""
    c, n = x.shape
    centered = x - x.mean(axis=1, keepdims=True)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n].real
    return acov / n


def ess(x: np.ndarray) -> float:
    """Effective sample size across chains via paired autocorrelation sums.

    Autocorrelations are combined across chains, summed in consecutive pairs,
    truncated at the first non-positive pair, and made monotone non-increasing
    before summation. The estimate is capped at the total draw count; zero
    variance yields NaN.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    c, n = x.shape
    if n < 4:
        raise ValueError(f"ess needs >= 4 draws, got {n}")
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1)
    w = float(np.mean(chain_var))
    if w <= 0.0 or not np.isfinite(w):
        return float("nan")
    var_plus = w * (n - 1) / n
    if c > 1:
        var_plus += float(np.var(x.mean(axis=1), ddof=1))
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus

    # Geyer initial monotone positive sequence over lag pairs.
    max_pairs = (n - 1) // 2
    prev = None
    total = 0.0
    for m in range(max_pairs):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0.0:
            break
        if prev is not None and pair > prev:
            pair = prev
        total += pair
        prev = pair
    tau = max(2.0 * total - 1.0, 1.0 / (c * n))
    return float(min(c * n / tau, c * n))


def energy_stats(
    potential: np.ndarray, kinetic: np.ndarray
) -> tuple[float, float, float]:
    """Extrema of one trajectory's energy trace relative to its start.

    Returns (max dV, max dT, max |dH|) with dX = X_t - X_0 and H = V + T, so
    dV + dT - dH vanishes identically at every recorded point.
    """
    v = np.asarray(potential, dtype=float)
    t = np.asarray(kinetic, dtype=float)
    if v.shape != t.shape or v.ndim != 1 or v.size < 1:
        raise ValueError("energy_stats: potential and kinetic must be equal-length 1-D traces")
    dv = v - v[0]
    dt = t - t[0]
    dh = dv + dt
    return float(np.max(dv)), float(np.max(dt)), float(np.max(np.abs(dh)))


def curvature_field(model: TargetModel, points: np.ndarray) -> list[dict]:
    """Per-point principal curvature directions of the log density.

    At each point the Hessian of logp is eigendecomposed; directions are the
    eigenvectors with magnitudes sqrt(|eigenvalue|), which visualize the local
    deviation from isotropy. Only 2-D models are supported (plot-ready rows).
    """
    if model.dim != 2:
        raise ValueError("curvature_field emits 2-D rows; build a 2-D model slice")
    rows = []
    for pt in np.asarray(points, dtype=float):
        pair = eigh(model.hessian(pt), context="curvature-field Hessian")
        mags = np.sqrt(np.abs(pair.eigenvalues))
        order = np.argsort(mags)[::-1]
        e = pair.eigenvectors
        rows.append({
            "x": float(pt[0]), "y": float(pt[1]),
            "eval1": float(mags[order[0]]),
            "evec1x": float(e[0, order[0]]), "evec1y": float(e[1, order[0]]),
            "eval2": float(mags[order[1]]),
            "evec2x": float(e[0, order[1]]), "evec2y": float(e[1, order[1]]),
        })
    return rows


@dataclass(frozen=True)
class SummaryResult:
    rows: list[SummaryRow]
    lp_row: SummaryRow
    divergences: int
    wall_time: float
    n_evals: int

    def row(self, name: str) -> SummaryRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(f"no summary row for '{name}'")

    def time_per_ess(self, name: str) -> float:
        e = self.row(name).ess
        return self.wall_time / e if e > 0 else float("nan")

    def ess_per_eval(self, name: str) -> float:
        e = self.row(name).ess
        return e / self.n_evals if self.n_evals > 0 else float("nan")


def _summary_row(name: str, x: np.ndarray) -> SummaryRow:
    flat = x.reshape(-1)
    q5, q50, q95 = np.quantile(flat, [0.05, 0.50, 0.95])
    sd = float(np.std(flat, ddof=1)) if flat.size > 1 else 0.0
    if sd > 0 and x.shape[1] >= 4:
        e = ess(x)
        r = split_rhat(x)
    else:
        e = float("nan")
        r = float("nan")
    return SummaryRow(name=name, mean=float(np.mean(flat)), sd=sd,
                      q5=float(q5), q50=float(q50), q95=float(q95), ess=e, rhat=r)


def summarize(draws: DrawMatrix, wall_time: float = 0.0, n_evals: int = 0) -> SummaryResult:
    """Per-parameter summary rows plus run-level efficiency inputs."""
    if draws.draws < 1:
        raise ValueError("summarize: draws must be nonempty")
    rows = [_summary_row(name, draws.param(name)) for name in draws.names]
    lp_row = _summary_row("lp__", draws.lp)
    return SummaryResult(rows=rows, lp_row=lp_row, divergences=draws.divergence_count(),
                         wall_time=float(wall_time), n_evals=int(n_evals))


def format_summary_table(result: SummaryResult) -> str:
    """Aligned text table of the per-parameter summary."""
    header = ["name", "mean", "sd", "5%", "50%", "95%", "ess", "rhat"]
    body = []

    def fmt(v: float) -> str:
        if not np.isfinite(v):
            return "n/a"
        return f"{v:.4g}"

    for r in [result.lp_row] + result.rows:
        body.append([r.name, fmt(r.mean), fmt(r.sd), fmt(r.q5), fmt(r.q50),
                     fmt(r.q95), fmt(r.ess), fmt(r.rhat)])
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    lines.append(f"divergent transitions: {result.divergences}")
    return "\n".join(lines)
