"""Riemannian HMC with a SoftAbs-regularized Hessian metric.

The momentum covariance varies with position, so the Hamiltonian picks up a
half log-determinant term. That term acts as an energy reservoir: kinetic
energy can swing far beyond the d/2 budget of a constant metric, letting a
single trajectory traverse potential changes of many tens of units.

The dynamics are non-separable, so steps use the implicit generalized
leapfrog: fixed-point solves for the momentum half-step and the position
full-step, then an explicit momentum half-step. Non-convergence of a solve
rejects the transition rather than raising.
"""

from __future__ import annotations

import numpy as np

from .metrics import (
    MetricDecomposition,
    softabs_derivative,
    softabs_eigenvalues,
    softabs_metric,
)
from .models import TargetModel
from .numerics import NumericsError, RngStream
from .samplers import DIVERGENCE_DELTA_MAX, ChainState, _EnergyTrack

DEFAULT_ALPHA = 1e6
DEFAULT_FP_TOL = 1e-10
DEFAULT_FP_MAX = 100


class SamplerIncompatibleError(RuntimeError):
    """Kernel requirements not met by the model (e.g. missing third derivatives)."""


class _MetricState:
    """Everything the integrator needs at one position.

    The SoftAbs decomposition is built eagerly (position updates need only
    velocities); the derivative-tensor machinery behind the force is built
    lazily on first use, since the position fixed point visits many trial
    positions whose forces are never evaluated.
    """

    __slots__ = ("q", "logp", "grad", "decomp", "_model", "_jd", "_fixed_force")

    def __init__(self, model: TargetModel, q: np.ndarray, alpha: float):
        self.q = np.asarray(q, dtype=float)
        self._model = model
        self.logp, self.grad = model.logp_grad(self.q)
        hess_v = -model.hessian(self.q)
        # Inline of softabs_metric without the sort/copy overhead; model
        # Hessians are exactly symmetric by construction.
        try:
            vals, vecs = np.linalg.eigh(hess_v)
        except np.linalg.LinAlgError as exc:
            raise NumericsError("eigh did not converge for potential Hessian") from exc
        self.decomp = MetricDecomposition(
            eigenvalues=vals,
            soft_eigenvalues=softabs_eigenvalues(vals, alpha),
            eigenvectors=vecs,
            alpha=float(alpha),
        )
        self._jd = None
        self._fixed_force = None

    def _build_force(self) -> None:
        lam = self.decomp.eigenvalues
        soft = self.decomp.soft_eigenvalues
        qmat = self.decomp.eigenvectors

        third_v = -self._model.third(self.q)
        # D[a, b, k] = (Q^T (dH/dq_k) Q)[a, b]
        step = np.tensordot(qmat, third_v, axes=([0], [0]))
        d_tensor = np.tensordot(step, qmat, axes=([1], [0])).transpose(0, 2, 1)

        # Divided differences of the SoftAbs map across eigenvalue pairs.
        fprime = softabs_derivative(lam, self.decomp.alpha)
        dlam = lam[:, None] - lam[None, :]
        dsoft = soft[:, None] - soft[None, :]
        close = np.abs(dlam) < 1e-10 * (1.0 + np.abs(lam[:, None]) + np.abs(lam[None, :]))
        jmat = np.where(close, 0.5 * (fprime[:, None] + fprime[None, :]),
                        dsoft / np.where(close, 1.0, dlam))

        self._jd = jmat[:, :, None] * d_tensor
        d_diag = d_tensor[np.arange(lam.size), np.arange(lam.size), :]
        trace_force = 0.5 * (fprime / soft) @ d_diag
        self._fixed_force = -self.grad + trace_force  # grad V + log-det force

    @property
    def fixed_force(self) -> np.ndarray:
        if self._fixed_force is None:
            self._build_force()
        return self._fixed_force

    def velocity(self, p: np.ndarray) -> np.ndarray:
        return self.decomp.inv_apply(p)

    def kinetic(self, p: np.ndarray) -> float:
        return self.decomp.kinetic_quad(p) + 0.5 * self.decomp.logdet

    def hamiltonian(self, p: np.ndarray) -> float:
        return -self.logp + self.kinetic(p)

    def dh_dq(self, p: np.ndarray) -> np.ndarray:
        if self._jd is None:
            self._build_force()
        qmat = self.decomp.eigenvectors
        s = (qmat.T @ p) / self.decomp.soft_eigenvalues
        quad = -0.5 * (s @ np.tensordot(s, self._jd, axes=([0], [0])))
        return self.fixed_force + quad


class SoftAbsSystem:
    """A Riemannian-capable model paired with a SoftAbs regularization strength."""

    def __init__(self, model: TargetModel, alpha: float = DEFAULT_ALPHA):
        if not model.riemannian_capable:
            raise SamplerIncompatibleError(
                f"{type(model).__name__} lacks third derivatives; "
                "the Riemannian kernel needs them for the metric force"
            )
        if alpha <= 0:
            raise ValueError("SoftAbsSystem: alpha must be > 0")
        self.model = model
        self.alpha = float(alpha)
        self.n_metric_builds = 0

    def metric_state(self, q: np.ndarray) -> _MetricState:
        self.n_metric_builds += 1
        return _MetricState(self.model, q, self.alpha)

    def try_metric_state(self, q: np.ndarray) -> "_MetricState | None":
        """Metric state, or None when q has left the representable region.

        A diverging fixed-point iterate can overflow the density or defeat
        the eigensolver; that is a failed step (rejection), not a hard error.
        """
        if not np.all(np.isfinite(q)):
            return None
        try:
            with np.errstate(over="raise", invalid="raise"):
                ms = self.metric_state(q)
        except (NumericsError, FloatingPointError):
            return None
        if not (np.isfinite(ms.logp) and np.all(np.isfinite(ms.grad))):
            return None
        return ms


def rmhmc_hamiltonian(
    q: np.ndarray, p: np.ndarray, model: TargetModel, alpha: float = DEFAULT_ALPHA
) -> float:
    """H = V(q) + (1/2) p^T Sigma(q)^{-1} p + (1/2) log|Sigma(q)|, up to a constant.

    The +1/2 log-determinant is the momentum normalization of N(p | 0, Sigma(q)).
    """
    decomp: MetricDecomposition = softabs_metric(-model.hessian(q), alpha)
    return float(-model.logp(q) + decomp.kinetic_quad(p) + 0.5 * decomp.logdet)


def generalized_leapfrog_step(
    system: SoftAbsSystem,
    ms: _MetricState,
    p: np.ndarray,
    eps: float,
    fp_tol: float = DEFAULT_FP_TOL,
    fp_max: int = DEFAULT_FP_MAX,
):
    """One implicit leapfrog step; returns (metric_state', p', converged).

    With a position-independent metric the fixed points converge in one
    iteration and the step reduces to the explicit leapfrog.
    """
    if fp_tol <= 0 or fp_max < 1:
        raise ValueError("generalized_leapfrog_step: need fp_tol > 0 and fp_max >= 1")
    half = 0.5 * eps
    converged = True

    with np.errstate(over="ignore", invalid="ignore"):
        # Implicit momentum half-step at fixed position.
        p_half = p - half * ms.dh_dq(p)
        for _ in range(fp_max):
            if not np.all(np.isfinite(p_half)):
                return ms, p, False
            p_next = p - half * ms.dh_dq(p_half)
            delta = float(np.max(np.abs(p_next - p_half)))
            p_half = p_next
            if delta < fp_tol:
                break
        else:
            converged = False
        if not np.all(np.isfinite(p_half)):
            return ms, p, False

        # Implicit position step with averaged velocities.
        v0 = ms.velocity(p_half)
        q_cur = ms.q + eps * v0
        ok = False
        for _ in range(fp_max):
            ms_cur = system.try_metric_state(q_cur)
            if ms_cur is None:
                return ms, p, False
            q_next = ms.q + half * (v0 + ms_cur.velocity(p_half))
            delta = float(np.max(np.abs(q_next - q_cur)))
            q_cur = q_next
            if delta < fp_tol:
                ok = True
                break
        if not ok:
            converged = False
        ms_new = system.try_metric_state(q_cur)
        if ms_new is None:
            return ms, p, False

        # Explicit momentum half-step at the new position.
        p_new = p_half - half * ms_new.dh_dq(p_half)
    return ms_new, p_new, converged


def rmhmc_transition(
    state: ChainState,
    eps: float,
    n_steps: int,
    model: TargetModel,
    alpha: float,
    rng: RngStream,
    fp_tol: float = DEFAULT_FP_TOL,
    fp_max: int = DEFAULT_FP_MAX,
    system: SoftAbsSystem | None = None,
) -> ChainState:
    """Riemannian HMC transition with the SoftAbs metric and static step count."""
    if n_steps < 1:
        raise ValueError("rmhmc_transition: n_steps must be >= 1")
    if system is None:
        system = SoftAbsSystem(model, alpha)
    builds0 = system.n_metric_builds
    ms = system.metric_state(state.q)
    p = ms.decomp.sample_momentum(rng)
    v0 = -ms.logp
    track = _EnergyTrack(v0, ms.kinetic(p))
    h0 = track.v0 + track.t0

    divergent = False
    for _ in range(n_steps):
        ms, p, conv = generalized_leapfrog_step(system, ms, p, eps, fp_tol, fp_max)
        if not conv or not np.all(np.isfinite(p)):
            divergent = True
            break
        dh = track.record(-ms.logp, ms.kinetic(p))
        if dh > DIVERGENCE_DELTA_MAX:
            divergent = True
            break

    evals = system.n_metric_builds - builds0
    if divergent:
        return ChainState(
            q=state.q, logp=state.logp, grad=state.grad, accept_stat=0.0,
            steps=n_steps, divergent=True, energy=h0,
            dv_max=track.dv_max, dt_max=track.dt_max, dh_max=track.dh_max,
            n_evals=evals,
        )
    h1 = ms.hamiltonian(p)
    alpha_acc = min(1.0, float(np.exp(min(0.0, h0 - h1))))
    stats = dict(accept_stat=alpha_acc, steps=n_steps, divergent=False,
                 dv_max=track.dv_max, dt_max=track.dt_max, dh_max=track.dh_max,
                 n_evals=evals)
    if rng.uniform() < alpha_acc:
        return ChainState(q=ms.q, logp=ms.logp, grad=ms.grad, energy=h1, **stats)
    return ChainState(q=state.q, logp=state.logp, grad=state.grad, energy=h0, **stats)
