"""MCMC transition kernels: random-walk, within-Gibbs, and Hamiltonian.

Each kernel maps a :class:`ChainState` to a new one and records per-transition
statistics: the acceptance statistic, step counts, the Hamiltonian of the
selected state, signed extremes of the potential/kinetic variation along the
trajectory, and a divergence flag. A trajectory is divergent when its energy
error exceeds ``DIVERGENCE_DELTA_MAX``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .metrics import EuclideanMetric
from .models import TargetModel
from .numerics import RngStream

DIVERGENCE_DELTA_MAX = 1000.0


@dataclass(frozen=True)
class ChainState:
    """Current position with cached log density and per-transition stats.

    ``grad`` is populated by gradient-based kernels and may be None after a
    random-walk update; when present it is always consistent with ``q``.
    """

    q: np.ndarray
    logp: float
    grad: np.ndarray | None = None
    accept_stat: float = 1.0
    steps: int = 0
    depth: int = 0
    divergent: bool = False
    energy: float = float("nan")
    dv_max: float = float("nan")
    dt_max: float = float("nan")
    dh_max: float = float("nan")
    n_evals: int = 0

    @staticmethod
    def at(model: TargetModel, q: np.ndarray, with_grad: bool = True) -> "ChainState":
        q = np.asarray(q, dtype=float)
        if with_grad:
            logp, grad = model.logp_grad(q)
            return ChainState(q=q, logp=logp, grad=grad)
        return ChainState(q=q, logp=model.logp(q))


def _require_grad(state: ChainState, model: TargetModel) -> ChainState:
    if state.grad is None:
        logp, grad = model.logp_grad(state.q)
        return replace(state, logp=logp, grad=grad)
    return state


class _EnergyTrack:
    """Total variation of V and T plus max |H - H0| along one trajectory.

    ``dv_max``/``dt_max`` are the widths max - min over all visited states
    (the density variation within the transition); ``dh_max`` is the largest
    energy error relative to the start.
    """

    def __init__(self, v0: float, t0: float):
        self.v0 = v0
        self.t0 = t0
        self.v_lo = v0
        self.v_hi = v0
        self.t_lo = t0
        self.t_hi = t0
        self.dh_max = 0.0

    @property
    def dv_max(self) -> float:
        return self.v_hi - self.v_lo

    @property
    def dt_max(self) -> float:
        return self.t_hi - self.t_lo

    def record(self, v: float, t: float) -> float:
        dh = abs((v - self.v0) + (t - self.t0))
        if v < self.v_lo:
            self.v_lo = v
        elif v > self.v_hi:
            self.v_hi = v
        if t < self.t_lo:
            self.t_lo = t
        elif t > self.t_hi:
            self.t_hi = t
        if dh > self.dh_max:
            self.dh_max = dh
        return dh


def rwm_transition(
    state: ChainState, scale: np.ndarray, model: TargetModel, rng: RngStream
) -> ChainState:
    """Random-walk Metropolis with an isotropic-in-scaled-coordinates proposal."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise ValueError("rwm_transition: proposal scale entries must be > 0")
    q_new = state.q + scale * rng.normal(state.q.size)
    logp_new = model.logp(q_new)
    if np.isfinite(logp_new):
        alpha = min(1.0, float(np.exp(min(0.0, logp_new - state.logp))))
    else:
        alpha = 0.0
    if rng.uniform() < alpha:
        return ChainState(q=q_new, logp=logp_new, accept_stat=alpha, steps=1, n_evals=1)
    return replace(state, grad=state.grad, accept_stat=alpha, steps=1, depth=0,
                   divergent=False, energy=float("nan"), dv_max=float("nan"),
                   dt_max=float("nan"), dh_max=float("nan"), n_evals=1)


def mwg_sweep(
    state: ChainState, scales: np.ndarray, model: TargetModel, rng: RngStream
) -> ChainState:
    """One full sweep of single-coordinate Metropolis updates.

    The sweep is one transition; its acceptance statistic is the mean of the
    per-coordinate acceptance probabilities.
    """
    scales = np.asarray(scales, dtype=float)
    d = state.q.size
    if scales.size != d:
        raise ValueError(f"mwg_sweep: need one scale per coordinate ({d}), got {scales.size}")
    if np.any(scales <= 0):
        raise ValueError("mwg_sweep: proposal scales must be > 0")
    q = state.q.copy()
    logp = state.logp
    alpha_sum = 0.0
    z = rng.normal(d)
    for i in range(d):
        q_old_i = q[i]
        q[i] = q_old_i + scales[i] * z[i]
        logp_new = model.logp(q)
        if np.isfinite(logp_new):
            alpha = min(1.0, float(np.exp(min(0.0, logp_new - logp))))
        else:
            alpha = 0.0
        if rng.uniform() < alpha:
            logp = logp_new
        else:
            q[i] = q_old_i
        alpha_sum += alpha
    return ChainState(q=q, logp=logp, accept_stat=alpha_sum / d, steps=d, n_evals=d)


def leapfrog_step(q, p, eps: float, model: TargetModel, metric: EuclideanMetric, grad=None):
    """One volume-preserving, time-reversible leapfrog step.

    Half-step in momentum, full position step with velocity M^{-1} p, half-step
    in momentum. Returns (q', p', logp', grad'); pass the cached gradient at q
    to avoid a redundant density evaluation.
    """
    if grad is None:
        _, grad = model.logp_grad(q)
    p_half = p + (0.5 * eps) * grad
    q_new = q + eps * metric.velocity(p_half)
    logp_new, grad_new = model.logp_grad(q_new)
    p_new = p_half + (0.5 * eps) * grad_new
    return q_new, p_new, logp_new, grad_new


def euclidean_hamiltonian(
    q: np.ndarray, p: np.ndarray, model: TargetModel, metric: EuclideanMetric
) -> float:
    """H(q, p) = V(q) + (1/2) p^T M^{-1} p with V = -logp."""
    return -model.logp(q) + metric.kinetic(p)


def ehmc_transition(
    state: ChainState,
    eps: float,
    n_steps: int,
    model: TargetModel,
    metric: EuclideanMetric,
    rng: RngStream,
) -> ChainState:
    """Euclidean HMC: fresh momentum, a fixed-length leapfrog trajectory, then
    a Metropolis correction on the energy error."""
    if n_steps < 1:
        raise ValueError("ehmc_transition: n_steps must be >= 1")
    state = _require_grad(state, model)
    d = state.q.size
    p = metric.sample_momentum(rng, d)
    v0 = -state.logp
    track = _EnergyTrack(v0, metric.kinetic(p))
    h0 = track.v0 + track.t0

    q, grad, logp = state.q, state.grad, state.logp
    divergent = False
    evals = 0
    for _ in range(n_steps):
        q, p, logp, grad = leapfrog_step(q, p, eps, model, metric, grad=grad)
        evals += 1
        if not (np.isfinite(logp) and np.all(np.isfinite(grad)) and np.all(np.isfinite(p))):
            divergent = True
            break
        dh = track.record(-logp, metric.kinetic(p))
        if dh > DIVERGENCE_DELTA_MAX:
            divergent = True
            break

    if divergent:
        return replace(
            state, accept_stat=0.0, steps=evals, depth=0, divergent=True,
            energy=h0, dv_max=track.dv_max, dt_max=track.dt_max,
            dh_max=track.dh_max, n_evals=evals,
        )
    h1 = -logp + metric.kinetic(p)
    alpha = min(1.0, float(np.exp(min(0.0, h0 - h1))))
    stats = dict(accept_stat=alpha, steps=evals, depth=0, divergent=False,
                 dv_max=track.dv_max, dt_max=track.dt_max, dh_max=track.dh_max,
                 n_evals=evals)
    if rng.uniform() < alpha:
        return ChainState(q=q, logp=logp, grad=grad, energy=h1, **stats)
    return replace(state, energy=h0, **stats)


class _NutsNode:
    """One phase-space endpoint of a NUTS subtree."""

    __slots__ = ("q", "p", "logp", "grad")

    def __init__(self, q, p, logp, grad):
        self.q = q
        self.p = p
        self.logp = logp
        self.grad = grad


class _NutsContext:
    __slots__ = ("model", "metric", "eps", "log_u", "h0", "track", "rng",
                 "divergent", "n_steps")

    def __init__(self, model, metric, eps, log_u, h0, track, rng):
        self.model = model
        self.metric = metric
        self.eps = eps
        self.log_u = log_u
        self.h0 = h0
        self.track = track
        self.rng = rng
        self.divergent = False
        self.n_steps = 0


def _nuts_no_uturn(ctx: _NutsContext, minus: _NutsNode, plus: _NutsNode) -> bool:
    dq = plus.q - minus.q
    return (
        float(dq @ ctx.metric.velocity(minus.p)) >= 0.0
        and float(dq @ ctx.metric.velocity(plus.p)) >= 0.0
    )


def _nuts_build(ctx: _NutsContext, node: _NutsNode, direction: int, depth: int):
    """Recursively double a subtree; returns
    (minus, plus, candidate, candidate_energy, n_valid, keep_going, alpha_sum, n_alpha)."""
    if depth == 0:
        q, p, logp, grad = leapfrog_step(
            node.q, node.p, direction * ctx.eps, ctx.model, ctx.metric, grad=node.grad
        )
        ctx.n_steps += 1
        leaf = _NutsNode(q, p, logp, grad)
        if not (np.isfinite(logp) and np.all(np.isfinite(grad)) and np.all(np.isfinite(p))):
            ctx.divergent = True
            return leaf, leaf, leaf, float("inf"), 0, False, 0.0, 1
        t = ctx.metric.kinetic(p)
        ctx.track.record(-logp, t)
        h = -logp + t
        n_valid = 1 if ctx.log_u <= -h else 0
        keep_going = ctx.log_u < DIVERGENCE_DELTA_MAX - h
        if not keep_going:
            ctx.divergent = True
        alpha = min(1.0, float(np.exp(min(0.0, ctx.h0 - h))))
        return leaf, leaf, leaf, h, n_valid, keep_going, alpha, 1

    minus, plus, cand, cand_h, n1, going, a_sum, n_a = _nuts_build(
        ctx, node, direction, depth - 1
    )
    if going:
        inner = minus if direction == -1 else plus
        m2, p2, cand2, cand2_h, n2, going2, a2, na2 = _nuts_build(
            ctx, inner, direction, depth - 1
        )
        if direction == -1:
            minus = m2
        else:
            plus = p2
        if n2 > 0 and ctx.rng.uniform() < n2 / (n1 + n2):
            cand, cand_h = cand2, cand2_h
        going = going2 and _nuts_no_uturn(ctx, minus, plus)
        n1 += n2
        a_sum += a2
        n_a += na2
    return minus, plus, cand, cand_h, n1, going, a_sum, n_a


def nuts_transition(
    state: ChainState,
    eps: float,
    max_depth: int,
    model: TargetModel,
    metric: EuclideanMetric,
    rng: RngStream,
) -> ChainState:
    """No-U-Turn transition: doubling trajectory with slice-sampling acceptance.

    The trajectory doubles in a random direction until a U-turn, a divergence,
    or ``max_depth`` doublings; the new state is drawn uniformly from the
    slice-valid states. The acceptance statistic is the trajectory-averaged
    Metropolis probability used by step-size adaptation.
    """
    if max_depth < 1:
        raise ValueError("nuts_transition: max_depth must be >= 1")
    state = _require_grad(state, model)
    d = state.q.size
    p0 = metric.sample_momentum(rng, d)
    v0 = -state.logp
    t0 = metric.kinetic(p0)
    h0 = v0 + t0
    log_u = float(np.log(rng.uniform())) - h0
    ctx = _NutsContext(model, metric, eps, log_u, h0, _EnergyTrack(v0, t0), rng)

    start = _NutsNode(state.q, p0, state.logp, state.grad)
    minus = plus = start
    sel_q, sel_logp, sel_grad, sel_h = state.q, state.logp, state.grad, h0
    n_total = 1
    depth = 0
    a_sum = 0.0
    n_a = 0
    while depth < max_depth:
        direction = -1 if rng.uniform() < 0.5 else 1
        node = minus if direction == -1 else plus
        m2, p2, cand, cand_h, n_new, going, a2, na2 = _nuts_build(ctx, node, direction, depth)
        if direction == -1:
            minus = m2
        else:
            plus = p2
        a_sum += a2
        n_a += na2
        if going and n_new > 0 and rng.uniform() < n_new / n_total:
            sel_q, sel_logp, sel_grad, sel_h = cand.q, cand.logp, cand.grad, cand_h
        n_total += n_new
        depth += 1
        if not (going and _nuts_no_uturn(ctx, minus, plus)):
            break

    return ChainState(
        q=sel_q, logp=sel_logp, grad=sel_grad,
        accept_stat=a_sum / max(n_a, 1), steps=ctx.n_steps, depth=depth,
        divergent=ctx.divergent, energy=sel_h,
        dv_max=ctx.track.dv_max, dt_max=ctx.track.dt_max, dh_max=ctx.track.dh_max,
        n_evals=ctx.n_steps,
    )
