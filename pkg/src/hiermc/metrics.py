"""Momentum distributions: constant Euclidean metrics and the SoftAbs metric.

The Euclidean metric is the covariance of the momentum draw p ~ N(0, M); the
kinetic energy is (1/2) p^T M^{-1} p and position updates move with velocity
M^{-1} p. A well-chosen M is the local curvature of the potential, so the
diagonal metric estimated from warmup draws uses M = diag(1/variances):
velocities then have the target's own scales (see ``from_variances``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import EigenPair, NotPositiveDefiniteError, cholesky, eigh
from .numerics import RngStream


@dataclass(frozen=True)
class EuclideanMetric:
    """Constant momentum covariance of kind unit, diagonal, or dense.

    ``diag`` holds the diagonal of M for the diagonal kind; ``matrix`` and its
    Cholesky factor back the dense kind. The unit kind is the identity.
    """

    kind: str
    diag: np.ndarray | None = None
    matrix: np.ndarray | None = None
    chol: np.ndarray | None = field(default=None, repr=False)

    @staticmethod
    def unit() -> "EuclideanMetric":
        return EuclideanMetric(kind="unit")

    @staticmethod
    def diagonal(diag: np.ndarray) -> "EuclideanMetric":
        diag = np.asarray(diag, dtype=float)
        if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
            raise NotPositiveDefiniteError("diagonal metric entries must be finite and > 0")
        return EuclideanMetric(kind="diagonal", diag=diag)

    @staticmethod
    def dense(matrix: np.ndarray) -> "EuclideanMetric":
        matrix = np.asarray(matrix, dtype=float)
        return EuclideanMetric(kind="dense", matrix=matrix, chol=cholesky(matrix))

    @staticmethod
    def from_variances(variances: np.ndarray) -> "EuclideanMetric":
        """Diagonal metric from estimated target variances: M = diag(1/var)."""
        variances = np.asarray(variances, dtype=float)
        if np.any(variances <= 0):
            raise NotPositiveDefiniteError("variance estimates must be > 0")
        return EuclideanMetric.diagonal(1.0 / variances)

    @property
    def variances(self) -> np.ndarray | None:
        """Target-variance estimates implied by the metric (diag of M^{-1})."""
        if self.kind == "unit":
            return None
        if self.kind == "diagonal":
            return 1.0 / self.diag
        return np.diag(np.linalg.inv(self.matrix))

    def sample_momentum(self, rng: RngStream, dim: int) -> np.ndarray:
        z = rng.normal(dim)
        if self.kind == "unit":
            return z
        if self.kind == "diagonal":
            return np.sqrt(self.diag) * z
        return self.chol @ z

    def velocity(self, p: np.ndarray) -> np.ndarray:
        """M^{-1} p, the position drift for momentum p."""
        if self.kind == "unit":
            return p
        if self.kind == "diagonal":
            return p / self.diag
        w = np.linalg.solve(self.chol, p)
        return np.linalg.solve(self.chol.T, w)

    def kinetic(self, p: np.ndarray) -> float:
        if self.kind == "unit":
            return 0.5 * float(p @ p)
        if self.kind == "diagonal":
            return 0.5 * float(p @ (p / self.diag))
        w = np.linalg.solve(self.chol, p)
        return 0.5 * float(w @ w)

    def whiten_sym(self, h: np.ndarray) -> np.ndarray:
        """M^{-1/2} h M^{-1/2} (shares eigenvalues with M^{-1} h for symmetric h)."""
        if self.kind == "unit":
            return np.asarray(h, dtype=float)
        if self.kind == "diagonal":
            s = 1.0 / np.sqrt(self.diag)
            return h * np.outer(s, s)
        w = np.linalg.solve(self.chol, h)
        return np.linalg.solve(self.chol, w.T).T


# SoftAbs eigenvalue map. Thresholds: above ALPHA_LAM_BIG the map is |lam| to
# machine precision; below ALPHA_LAM_SMALL the series avoids 0/0.
ALPHA_LAM_BIG = 18.0
ALPHA_LAM_SMALL = 1e-4


def softabs_eigenvalues(lam: np.ndarray, alpha: float) -> np.ndarray:
    """Map eigenvalues lam -> lam * coth(alpha * lam), strictly positive."""
    lam = np.asarray(lam, dtype=float)
    x = alpha * lam
    out = np.empty_like(lam)
    big = np.abs(x) > ALPHA_LAM_BIG
    small = np.abs(x) < ALPHA_LAM_SMALL
    mid = ~(big | small)
    out[big] = np.abs(lam[big])
    out[small] = 1.0 / alpha + alpha * lam[small] ** 2 / 3.0
    out[mid] = lam[mid] / np.tanh(x[mid])
    return out


def softabs_derivative(lam: np.ndarray, alpha: float) -> np.ndarray:
    """d/dlam of lam * coth(alpha * lam)."""
    lam = np.asarray(lam, dtype=float)
    x = alpha * lam
    out = np.empty_like(lam)
    big = np.abs(x) > ALPHA_LAM_BIG
    small = np.abs(x) < ALPHA_LAM_SMALL
    mid = ~(big | small)
    out[big] = np.sign(lam[big])
    out[small] = 2.0 * alpha * lam[small] / 3.0
    cx = 1.0 / np.tanh(x[mid])
    sx = np.sinh(x[mid])
    out[mid] = cx - x[mid] / (sx * sx)
    return out


@dataclass(frozen=True)
class MetricDecomposition:
    """Eigendecomposition of the SoftAbs-regularized Hessian of the potential.

    ``eigenvalues`` are the raw Hessian eigenvalues, ``soft_eigenvalues`` the
    regularized ones (always > 0), ``eigenvectors`` the shared orthonormal
    basis, and ``logdet`` = sum(log(soft_eigenvalues)).
    """

    eigenvalues: np.ndarray
    soft_eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    alpha: float

    @property
    def logdet(self) -> float:
        return float(np.sum(np.log(self.soft_eigenvalues)))

    def metric(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.soft_eigenvalues) @ q.T

    def inv_apply(self, p: np.ndarray) -> np.ndarray:
        """Sigma^{-1} p via the eigenbasis."""
        q = self.eigenvectors
        return q @ ((q.T @ p) / self.soft_eigenvalues)

    def kinetic_quad(self, p: np.ndarray) -> float:
        w = self.eigenvectors.T @ p
        return 0.5 * float(w @ (w / self.soft_eigenvalues))

    def sample_momentum(self, rng: RngStream) -> np.ndarray:
        z = rng.normal(self.eigenvalues.size)
        return self.eigenvectors @ (np.sqrt(self.soft_eigenvalues) * z)


def softabs_metric(hessian_v: np.ndarray, alpha: float) -> MetricDecomposition:
    """SoftAbs-regularize the Hessian of the potential into an SPD metric.

    Eigenvalues map to lam * coth(alpha * lam), which tends to |lam| for
    |alpha*lam| large and to 1/alpha as lam -> 0, so the result is SPD for
    any symmetric input.
    """
    if alpha <= 0:
        raise ValueError(f"softabs_metric: alpha must be > 0, got {alpha}")
    pair: EigenPair = eigh(hessian_v, context="potential Hessian for SoftAbs metric")
    soft = softabs_eigenvalues(pair.eigenvalues, alpha)
    return MetricDecomposition(
        eigenvalues=pair.eigenvalues,
        soft_eigenvalues=soft,
        eigenvectors=pair.eigenvectors,
        alpha=float(alpha),
    )
