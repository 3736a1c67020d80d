"""Target distributions as differentiable unconstrained log-densities.

Every model exposes the joint log density over its unconstrained parameters
(including the log-Jacobian of any constraint transform), analytic gradient
and Hessian, and, for models that support position-dependent metrics, the
full third-derivative tensor. Samplers only ever see the unconstrained
space; ``constrain`` maps a draw to the values reported in output files.

The hierarchical scale parameter tau is always sampled as lambda = log(tau),
so the densities below carry the +lambda Jacobian term.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import LOG_2PI, RngStream, normal_logpdf


class ModelError(ValueError):
    """Invalid model construction or evaluation request."""


def positive_transform(tau: float) -> tuple[float, float]:
    """Map tau > 0 to the unconstrained lambda = log(tau).

    Returns (lambda, log_jacobian) where the log-Jacobian is that of the
    inverse map tau = exp(lambda), i.e. lambda itself.
    """
    if tau <= 0:
        raise ValueError(f"positive_transform: tau must be > 0, got {tau}")
    lam = float(np.log(tau))
    return lam, lam


def positive_untransform(lam: float) -> float:
    """Inverse of :func:`positive_transform`: tau = exp(lambda)."""
    return float(np.exp(lam))


class TargetModel:
    """A differentiable unconstrained log-density.

    Subclasses set ``dim``, ``names`` (unconstrained parameter names) and
    ``constrained_names``, and implement ``logp``/``grad``/``hessian``;
    models usable with a position-dependent metric also implement ``third``.
    """

    dim: int
    names: list[str]
    constrained_names: list[str]

    def logp(self, q: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def logp_grad(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        """Joint evaluation; subclasses override to share work."""
        return self.logp(q), self.grad(q)

    def hessian(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def third(self, q: np.ndarray) -> np.ndarray:
        """d^3 logp / dq_i dq_j dq_k as a (d, d, d) tensor, symmetric in all pairs."""
        raise ModelError(f"{type(self).__name__} does not provide third derivatives")

    @property
    def riemannian_capable(self) -> bool:
        try:
            self.third(np.zeros(self.dim))
        except ModelError:
            return False
        return True

    def constrain(self, q: np.ndarray) -> np.ndarray:
        """Constrained-space values reported in output, in ``constrained_names`` order."""
        return np.asarray(q, dtype=float).copy()


def _indexed(prefix: str, k: int) -> list[str]:
    return [f"{prefix}.{i}" for i in range(1, k + 1)]


class FunnelModel(TargetModel):
    """Hierarchical funnel: n latents whose scale is controlled by one parameter.

    theta_i ~ N(0, exp(v/2)) for i = 1..n, v ~ N(0, 3). The marginal of v is
    exactly N(0, 3^2), which makes the model a sharp oracle for sampler
    correctness, while the conditional scale exp(v/2) varies over orders of
    magnitude along v. Parameter order: (theta_1, ..., theta_n, v).
    """

    V_SD = 3.0

    def __init__(self, n: int):
        if n < 1:
            raise ModelError(f"FunnelModel: n must be >= 1, got {n}")
        self.n = int(n)
        self.dim = self.n + 1
        self.names = _indexed("theta", self.n) + ["v"]
        self.constrained_names = list(self.names)

    def _split(self, q):
        q = np.asarray(q, dtype=float)
        return q[: self.n], q[self.n]

    def logp(self, q) -> float:
        theta, v = self._split(q)
        inv_ev = np.exp(-v)
        ll_theta = -0.5 * self.n * (LOG_2PI + v) - 0.5 * inv_ev * float(theta @ theta)
        ll_v = -0.5 * LOG_2PI - np.log(self.V_SD) - 0.5 * (v / self.V_SD) ** 2
        return float(ll_theta + ll_v)

    def grad(self, q) -> np.ndarray:
        theta, v = self._split(q)
        inv_ev = np.exp(-v)
        g = np.empty(self.dim)
        g[: self.n] = -theta * inv_ev
        g[self.n] = -0.5 * self.n + 0.5 * inv_ev * float(theta @ theta) - v / self.V_SD**2
        return g

    def logp_grad(self, q):
        theta, v = self._split(q)
        inv_ev = np.exp(-v)
        tt = float(theta @ theta)
        lp = (
            -0.5 * self.n * (LOG_2PI + v)
            - 0.5 * inv_ev * tt
            - 0.5 * LOG_2PI
            - np.log(self.V_SD)
            - 0.5 * (v / self.V_SD) ** 2
        )
        g = np.empty(self.dim)
        g[: self.n] = -theta * inv_ev
        g[self.n] = -0.5 * self.n + 0.5 * inv_ev * tt - v / self.V_SD**2
        return float(lp), g

    def hessian(self, q) -> np.ndarray:
        theta, v = self._split(q)
        inv_ev = np.exp(-v)
        h = np.zeros((self.dim, self.dim))
        idx = np.arange(self.n)
        h[idx, idx] = -inv_ev
        h[idx, self.n] = theta * inv_ev
        h[self.n, idx] = theta * inv_ev
        h[self.n, self.n] = -0.5 * inv_ev * float(theta @ theta) - 1.0 / self.V_SD**2
        return h

    def third(self, q) -> np.ndarray:
        theta, v = self._split(q)
        inv_ev = np.exp(-v)
        n = self.n
        t = np.zeros((self.dim, self.dim, self.dim))
        idx = np.arange(n)
        t[idx, idx, n] = inv_ev
        t[idx, n, idx] = inv_ev
        t[n, idx, idx] = inv_ev
        t[idx, n, n] = -theta * inv_ev
        t[n, idx, n] = -theta * inv_ev
        t[n, n, idx] = -theta * inv_ev
        t[n, n, n] = 0.5 * inv_ev * float(theta @ theta)
        return t


@dataclass(frozen=True)
class OneWayNormalData:
    """Grouped observations with known per-group measurement sds."""

    y: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        if self.y.ndim != 1 or self.sigma.shape != self.y.shape or self.y.size < 1:
            raise ModelError("OneWayNormalData: y and sigma must be 1-D arrays of equal length >= 1")
        if np.any(self.sigma <= 0):
            raise ModelError("OneWayNormalData: sigma entries must be > 0")

    @property
    def J(self) -> int:
        return self.y.size


# Weakly-informative priors shared by both parameterizations.
MU_PRIOR_SD = 5.0
TAU_PRIOR_SCALE = 2.5


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


# The half-Cauchy prior on tau = exp(lam) plus the +lam Jacobian, written in
# terms of g = sigmoid(2 lam - 2 log scale) so extreme lam cannot overflow.
def _scale_prior_logp(lam: float) -> float:
    x = 2.0 * lam - 2.0 * np.log(TAU_PRIOR_SCALE)
    softplus = np.logaddexp(0.0, x)
    return float(np.log(2.0) - np.log(np.pi * TAU_PRIOR_SCALE) - softplus + lam)


def _scale_prior_d1(lam: float) -> float:
    g = _sigmoid(2.0 * lam - 2.0 * np.log(TAU_PRIOR_SCALE))
    return 1.0 - 2.0 * g


def _scale_prior_d2(lam: float) -> float:
    g = _sigmoid(2.0 * lam - 2.0 * np.log(TAU_PRIOR_SCALE))
    return -4.0 * g * (1.0 - g)


def _scale_prior_d3(lam: float) -> float:
    g = _sigmoid(2.0 * lam - 2.0 * np.log(TAU_PRIOR_SCALE))
    return -8.0 * g * (1.0 - g) * (1.0 - 2.0 * g)


class OneWayNormalCP(TargetModel):
    """Centered one-way normal model on the unconstrained space.

    y_j ~ N(theta_j, sigma_j^2), theta_j ~ N(mu, tau^2), mu ~ N(0, 5^2),
    tau ~ half-Cauchy(2.5), sampled as (mu, lambda, theta_1..theta_J) with
    lambda = log(tau). Reported values are (mu, tau, theta_1..theta_J).
    """

    def __init__(self, data: OneWayNormalData):
        self.data = data
        j = data.J
        self.dim = j + 2
        self.names = ["mu", "lambda"] + _indexed("theta", j)
        self.constrained_names = ["mu", "tau"] + _indexed("theta", j)

    def _split(self, q):
        q = np.asarray(q, dtype=float)
        return q[0], q[1], q[2:]

    def logp(self, q) -> float:
        return self.logp_grad(q)[0]

    def grad(self, q) -> np.ndarray:
        return self.logp_grad(q)[1]

    def logp_grad(self, q):
        mu, lam, theta = self._split(q)
        d = self.data
        j = d.J
        inv_t2 = np.exp(-2.0 * lam)
        r_obs = (d.y - theta) / d.sigma
        r_grp = theta - mu
        lp = (
            float(-np.sum(np.log(d.sigma)) - 0.5 * j * LOG_2PI - 0.5 * r_obs @ r_obs)
            + float(-j * lam - 0.5 * j * LOG_2PI - 0.5 * inv_t2 * (r_grp @ r_grp))
            + float(normal_logpdf(mu, 0.0, MU_PRIOR_SD))
            + _scale_prior_logp(lam)
        )
        g = np.empty(self.dim)
        g[0] = inv_t2 * float(np.sum(r_grp)) - mu / MU_PRIOR_SD**2
        g[1] = -j + inv_t2 * float(r_grp @ r_grp) + _scale_prior_d1(lam)
        g[2:] = r_obs / d.sigma - inv_t2 * r_grp
        return lp, g

    def hessian(self, q) -> np.ndarray:
        mu, lam, theta = self._split(q)
        d = self.data
        j = d.J
        inv_t2 = np.exp(-2.0 * lam)
        r_grp = theta - mu
        h = np.zeros((self.dim, self.dim))
        h[0, 0] = -j * inv_t2 - 1.0 / MU_PRIOR_SD**2
        h[0, 1] = h[1, 0] = -2.0 * inv_t2 * float(np.sum(r_grp))
        h[1, 1] = -2.0 * inv_t2 * float(r_grp @ r_grp) + _scale_prior_d2(lam)
        h[0, 2:] = h[2:, 0] = inv_t2
        cross = 2.0 * inv_t2 * r_grp
        h[1, 2:] = h[2:, 1] = cross
        di = np.arange(2, self.dim)
        h[di, di] = -1.0 / d.sigma**2 - inv_t2
        return h

    def third(self, q) -> np.ndarray:
        mu, lam, theta = self._split(q)
        d = self.data
        j = d.J
        inv_t2 = np.exp(-2.0 * lam)
        r_grp = theta - mu
        n = self.dim
        t = np.zeros((n, n, n))

        def sym3(i, jj, k, val):
            for a, b, c in ((i, jj, k), (i, k, jj), (jj, i, k), (jj, k, i), (k, i, jj), (k, jj, i)):
                t[a, b, c] = val

        sym3(0, 0, 1, 2.0 * j * inv_t2)
        sym3(0, 1, 1, 4.0 * inv_t2 * float(np.sum(r_grp)))
        t[1, 1, 1] = 4.0 * inv_t2 * float(r_grp @ r_grp) + _scale_prior_d3(lam)
        for m in range(j):
            p = m + 2
            sym3(0, 1, p, -2.0 * inv_t2)
            sym3(1, 1, p, -4.0 * inv_t2 * r_grp[m])
            sym3(1, p, p, 2.0 * inv_t2)
        return t

    def constrain(self, q) -> np.ndarray:
        mu, lam, theta = self._split(q)
        return np.concatenate(([mu, np.exp(lam)], theta))


class OneWayNormalNCP(TargetModel):
    """Non-centered one-way normal model on the unconstrained space.

    y_j ~ N(tau * vartheta_j + mu, sigma_j^2), vartheta_j ~ N(0, 1), with the
    same priors and lambda = log(tau) transform as the centered form. The
    standardized residuals vartheta are what the sampler moves; reported
    values are (mu, tau, vartheta_1..J, theta_1..J) with
    theta_j = tau * vartheta_j + mu.
    """

    def __init__(self, data: OneWayNormalData):
        self.data = data
        j = data.J
        self.dim = j + 2
        self.names = ["mu", "lambda"] + _indexed("var_theta", j)
        self.constrained_names = (
            ["mu", "tau"] + _indexed("var_theta", j) + _indexed("theta", j)
        )

    def _split(self, q):
        q = np.asarray(q, dtype=float)
        return q[0], q[1], q[2:]

    def logp(self, q) -> float:
        return self.logp_grad(q)[0]

    def grad(self, q) -> np.ndarray:
        return self.logp_grad(q)[1]

    def logp_grad(self, q):
        mu, lam, vth = self._split(q)
        d = self.data
        j = d.J
        tau = np.exp(lam)
        resid = d.y - tau * vth - mu
        r = resid / d.sigma**2
        lp = (
            float(-np.sum(np.log(d.sigma)) - 0.5 * j * LOG_2PI - 0.5 * resid @ r)
            + float(-0.5 * j * LOG_2PI - 0.5 * vth @ vth)
            + float(normal_logpdf(mu, 0.0, MU_PRIOR_SD))
            + _scale_prior_logp(lam)
        )
        g = np.empty(self.dim)
        g[0] = float(np.sum(r)) - mu / MU_PRIOR_SD**2
        g[1] = tau * float(r @ vth) + _scale_prior_d1(lam)
        g[2:] = tau * r - vth
        return lp, g

    def hessian(self, q) -> np.ndarray:
        mu, lam, vth = self._split(q)
        d = self.data
        tau = np.exp(lam)
        inv_s2 = 1.0 / d.sigma**2
        resid = d.y - tau * vth - mu
        r = resid * inv_s2
        h = np.zeros((self.dim, self.dim))
        h[0, 0] = -float(np.sum(inv_s2)) - 1.0 / MU_PRIOR_SD**2
        h[0, 1] = h[1, 0] = -tau * float(vth @ inv_s2)
        h[1, 1] = tau * float(((resid - tau * vth) * vth) @ inv_s2) + _scale_prior_d2(lam)
        h[0, 2:] = h[2:, 0] = -tau * inv_s2
        h[1, 2:] = h[2:, 1] = tau * (resid - tau * vth) * inv_s2
        di = np.arange(2, self.dim)
        h[di, di] = -(tau**2) * inv_s2 - 1.0
        return h

    def third(self, q) -> np.ndarray:
        mu, lam, vth = self._split(q)
        d = self.data
        j = d.J
        tau = np.exp(lam)
        inv_s2 = 1.0 / d.sigma**2
        resid = d.y - tau * vth - mu
        n = self.dim
        t = np.zeros((n, n, n))

        def sym3(i, jj, k, val):
            for a, b, c in ((i, jj, k), (i, k, jj), (jj, i, k), (jj, k, i), (k, i, jj), (k, jj, i)):
                t[a, b, c] = val

        sym3(0, 1, 1, -tau * float(vth @ inv_s2))
        t[1, 1, 1] = tau * float(((resid - 3.0 * tau * vth) * vth) @ inv_s2) + _scale_prior_d3(lam)
        for m in range(j):
            p = m + 2
            sym3(0, 1, p, -tau * inv_s2[m])
            sym3(1, 1, p, tau * (resid[m] - 3.0 * tau * vth[m]) * inv_s2[m])
            sym3(1, p, p, -2.0 * tau**2 * inv_s2[m])
        return t

    def constrain(self, q) -> np.ndarray:
        mu, lam, vth = self._split(q)
        tau = np.exp(lam)
        return np.concatenate(([mu, tau], vth, tau * vth + mu))


def generate_pseudodata(
    mu: float, tau: float, sigma: float, J: int, rng: RngStream
) -> OneWayNormalData:
    """Draw grouped observations: theta_i ~ N(mu, tau^2), y_i ~ N(theta_i, sigma^2)."""
    if J < 1:
        raise ModelError(f"generate_pseudodata: J must be >= 1, got {J}")
    if tau < 0 or sigma <= 0:
        raise ModelError("generate_pseudodata: tau must be >= 0 and sigma > 0")
    theta = mu + tau * rng.normal(J)
    y = theta + sigma * rng.normal(J)
    return OneWayNormalData(y=y, sigma=np.full(J, float(sigma)))


def write_dataset(data: OneWayNormalData, base: str | Path) -> tuple[Path, Path]:
    """Write a dataset as plain text (key/value lines) and equivalent JSON.

    Returns the (text_path, json_path) pair, ``<base>.dat`` and ``<base>.json``.
    """
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    txt = base.parent / (base.name + ".dat")
    jsn = base.parent / (base.name + ".json")
    with open(txt, "w") as fh:
        fh.write(f"J {data.J}\n")
        fh.write("y " + " ".join(f"{v:.17g}" for v in data.y) + "\n")
        fh.write("sigma " + " ".join(f"{v:.17g}" for v in data.sigma) + "\n")
    with open(jsn, "w") as fh:
        json.dump({"J": data.J, "y": data.y.tolist(), "sigma": data.sigma.tolist()}, fh)
        fh.write("\n")
    return txt, jsn


def read_dataset(path: str | Path) -> OneWayNormalData:
    """Read a dataset written by :func:`write_dataset` (either form)."""
    path = Path(path)
    if not path.exists():
        raise ModelError(f"dataset file not found: {path}")
    if path.suffix == ".json":
        with open(path) as fh:
            obj = json.load(fh)
        data = OneWayNormalData(y=np.asarray(obj["y"]), sigma=np.asarray(obj["sigma"]))
        if int(obj.get("J", data.J)) != data.J:
            raise ModelError(f"dataset {path}: J={obj['J']} does not match array length {data.J}")
        return data
    fields: dict[str, list[str]] = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            fields[parts[0]] = parts[1:]
    for key in ("J", "y", "sigma"):
        if key not in fields:
            raise ModelError(f"dataset {path}: missing field '{key}'")
    j = int(fields["J"][0])
    y = np.asarray([float(v) for v in fields["y"]])
    sigma = np.asarray([float(v) for v in fields["sigma"]])
    if y.size != j or sigma.size != j:
        raise ModelError(f"dataset {path}: arrays do not match J={j}")
    return OneWayNormalData(y=y, sigma=sigma)
