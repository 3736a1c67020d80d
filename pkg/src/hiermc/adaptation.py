"""Warmup tuning: dual-averaging step size, diagonal metric estimation, and
the integrator stability diagnostics that motivate conservative targets.

Adaptive step-size tuning can silently settle on a step size that is stable
only in the neighborhood where the chain warmed up; the relaxation scan makes
that failure visible by re-running at increasingly strict acceptance targets
and comparing the resulting inferences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .metrics import EuclideanMetric
from .models import TargetModel
from .numerics import eigh


@dataclass(frozen=True)
class DualAveragingState:
    """Primal-dual averaging of log(step size) toward a target acceptance."""

    delta: float
    mu: float
    t: int = 0
    h_bar: float = 0.0
    log_eps: float = 0.0
    log_eps_bar: float = 0.0
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    @staticmethod
    def fresh(eps0: float, delta: float) -> "DualAveragingState":
        if not 0.0 < delta < 1.0:
            raise ValueError(f"dual averaging target must be in (0, 1), got {delta}")
        if eps0 <= 0:
            raise ValueError(f"initial step size must be > 0, got {eps0}")
        log_eps0 = float(np.log(eps0))
        return DualAveragingState(
            delta=delta, mu=float(np.log(10.0 * eps0)),
            log_eps=log_eps0, log_eps_bar=log_eps0,
        )

    @property
    def eps(self) -> float:
        return float(np.exp(self.log_eps))

    @property
    def eps_bar(self) -> float:
        """Frozen step size: the geometric average used after warmup."""
        return float(np.exp(self.log_eps_bar))


def dual_averaging_update(s: DualAveragingState, observed_accept: float) -> DualAveragingState:
    """One update of the averaged log step size given an observed acceptance."""
    if not 0.0 <= observed_accept <= 1.0:
        raise ValueError(f"observed acceptance must be in [0, 1], got {observed_accept}")
    t = s.t + 1
    eta = 1.0 / (t + s.t0)
    h_bar = (1.0 - eta) * s.h_bar + eta * (s.delta - observed_accept)
    log_eps = s.mu - (np.sqrt(t) / s.gamma) * h_bar
    w = t ** (-s.kappa)
    log_eps_bar = w * log_eps + (1.0 - w) * s.log_eps_bar
    return replace(s, t=t, h_bar=h_bar, log_eps=float(log_eps), log_eps_bar=float(log_eps_bar))


@dataclass(frozen=True)
class WarmupSchedule:
    """Partition of warmup into fast / doubling-slow / fast windows.

    Step size adapts throughout; draws collected inside slow windows feed the
    metric estimate at each slow-window boundary. The windows partition
    warmup exactly.
    """

    total: int
    init_fast: int
    slow_boundaries: tuple[int, ...]  # iteration indices (exclusive) ending each slow window
    term_fast: int

    @staticmethod
    def build(total: int, init_frac: float = 0.15, term_frac: float = 0.10) -> "WarmupSchedule":
        if total < 0:
            raise ValueError("warmup length must be >= 0")
        if total < 20:
            return WarmupSchedule(total=total, init_fast=total, slow_boundaries=(), term_fast=0)
        init_fast = int(np.floor(init_frac * total))
        term_fast = int(np.floor(term_frac * total))
        slow_total = total - init_fast - term_fast
        # Doubling windows: w, 2w, 4w, ...; the last absorbs the remainder.
        n_windows = 4 if slow_total >= 60 else max(1, slow_total // 15)
        base = slow_total // (2**n_windows - 1)
        boundaries = []
        pos = init_fast
        width = base
        for k in range(n_windows):
            pos = pos + width if k < n_windows - 1 else init_fast + slow_total
            boundaries.append(pos)
            width *= 2
        return WarmupSchedule(
            total=total, init_fast=init_fast,
            slow_boundaries=tuple(boundaries), term_fast=term_fast,
        )

    def in_slow(self, t: int) -> bool:
        return self.slow_boundaries and self.init_fast <= t < self.slow_boundaries[-1]

    def is_slow_boundary(self, t: int) -> bool:
        """True when iteration t (0-based) ends a slow window."""
        return (t + 1) in self.slow_boundaries


def estimate_diag_metric(draws: np.ndarray, min_draws: int = 10) -> EuclideanMetric:
    """Diagonal metric from unconstrained warmup draws.

    Sample variances are shrunk toward one with weight n/(n+5) and define the
    inverse momentum covariance, so velocities match the target's scales.
    Too few draws fall back to the identity with a warning.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    n = draws.shape[0]
    if n < min_draws:
        warnings.warn(
            f"metric estimation needs >= {min_draws} draws, got {n}; using identity",
            stacklevel=2,
        )
        return EuclideanMetric.unit()
    var = np.var(draws, axis=0, ddof=1)
    shrunk = (n / (n + 5.0)) * var + (5.0 / (n + 5.0)) * 1.0
    return EuclideanMetric.from_variances(shrunk)


def stability_bound(metric: EuclideanMetric, hessian_v: np.ndarray) -> float:
    """Largest stable leapfrog step size at a point: 2 / sqrt(lam_max).

    lam_max is the top eigenvalue of M^{-1} H with H the potential Hessian,
    computed through the symmetric similarity M^{-1/2} H M^{-1/2}.
    Directions of non-positive curvature are ignored; with none left the
    bound is infinite.
    """
    sym = metric.whiten_sym(np.asarray(hessian_v, dtype=float))
    lam_max = float(eigh(sym, context="stability-bound matrix").eigenvalues[0])
    if lam_max <= 0.0:
        return float("inf")
    return 2.0 / np.sqrt(lam_max)


def relaxation_scan(
    model: TargetModel,
    targets: list[float],
    chains: int,
    warmup: int,
    samples: int,
    seed: int,
    param: str = "v",
    max_depth: int = 10,
) -> list[dict]:
    """One adapted NUTS run per acceptance target, strictest last.

    Returns one row per target with the achieved acceptance, divergence count,
    split R-hat and moments of ``param``, and the adapted step size. Failures
    in a single cell are recorded and the scan continues.
    """
    from . import diagnostics
    from .config import ExperimentConfig
    from .engine import run_experiment

    if sorted(targets) != list(targets):
        raise ValueError("relaxation_scan: targets must be ascending")
    rows = []
    for i, delta in enumerate(targets):
        cfg = ExperimentConfig(
            model="custom", sampler="nuts", adapt_delta=delta, max_depth=max_depth,
            chains=chains, warmup=warmup, samples=samples,
            seed=seed, stream_offset=1000 * i,
        )
        row = {"delta": delta, "achieved_accept": float("nan"),
               "n_divergent": -1, f"rhat_{param}": float("nan"),
               f"mean_{param}": float("nan"), f"sd_{param}": float("nan"),
               "stepsize": float("nan"), "error": ""}
        try:
            rec = run_experiment(cfg, model=model)
            x = rec.draws.param(param)
            row.update({
                "achieved_accept": float(np.mean(rec.draws.stats["accept_stat"])),
                "n_divergent": int(np.sum(rec.draws.stats["divergent"])),
                f"rhat_{param}": diagnostics.split_rhat(x),
                f"mean_{param}": float(np.mean(x)),
                f"sd_{param}": float(np.std(x, ddof=1)),
                "stepsize": float(np.mean(rec.final_eps)),
            })
        except Exception as exc:  # keep scanning the remaining targets
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows
