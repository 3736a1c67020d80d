"""Deterministic linear algebra, seeded random streams, and scalar density primitives.

Everything here is pure (no hidden state) except :class:`RngStream`, which is
single-owner mutable state: one stream per chain, never shared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class NumericsError(RuntimeError):
    """Hard failure in a linear-algebra primitive (non-convergence etc.)."""


class NotPositiveDefiniteError(ValueError):
    """Cholesky hit a non-positive pivot; the matrix is not SPD.

    Callers decide the fallback (e.g. fall back to an identity metric).
    """


@dataclass(frozen=True)
class EigenPair:
    """Eigendecomposition of a symmetric matrix.

    ``eigenvalues`` are sorted descending; ``eigenvectors`` has the matching
    eigenvector in each column and is orthonormal.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the symmetric part ``(m + m.T)/2``; enforces exact symmetry."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def eigh(m: np.ndarray, context: str = "matrix") -> EigenPair:
    """Eigendecompose a symmetric matrix, eigenvalues sorted descending.

    Backed by LAPACK's symmetric solver, which is deterministic for a given
    input on a given platform. ``context`` names the matrix in error messages.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise NumericsError(f"eigh: {context} must be square with d >= 1, got shape {m.shape}")
    m = symmetrize(m)
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"eigh did not converge for {context} (d={m.shape[0]})") from exc
    order = np.argsort(vals)[::-1]
    return EigenPair(np.ascontiguousarray(vals[order]), np.ascontiguousarray(vecs[:, order]))


def cholesky(m: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T == m for SPD input.

    Raises :class:`NotPositiveDefiniteError` on a non-positive pivot so the
    caller can decide whether indefiniteness is an error or a fallback case.
    """
    m = symmetrize(m)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"cholesky: matrix of dim {m.shape[0]} is not positive-definite"
        ) from exc


def normal_logpdf(x: float, mu: float, sd: float):
    """Log density of N(mu, sd^2) at x. Vectorizes over x/mu."""
    if np.any(np.asarray(sd) <= 0):
        raise ValueError(f"normal_logpdf: sd must be > 0, got {sd}")
    z = (x - mu) / sd
    return -np.log(sd) - 0.5 * LOG_2PI - 0.5 * z * z


def half_cauchy_logpdf(x: float, scale: float):
    """Log density of the half-Cauchy with the given scale at x >= 0."""
    if scale <= 0:
        raise ValueError(f"half_cauchy_logpdf: scale must be > 0, got {scale}")
    if np.any(np.asarray(x) < 0):
        raise ValueError(f"half_cauchy_logpdf: x must be >= 0, got {x}")
    r = x / scale
    return np.log(2.0) - np.log(np.pi * scale) - np.log1p(r * r)


def finite_diff_gradient(f, q: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar field, one coordinate at a time."""
    if h <= 0:
        raise ValueError("finite_diff_gradient: h must be > 0")
    q = np.asarray(q, dtype=float)
    grad = np.empty_like(q)
    for i in range(q.size):
        qp = q.copy()
        qm = q.copy()
        qp[i] += h
        qm[i] -= h
        fp, fm = f(qp), f(qm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericsError(f"finite_diff_gradient: non-finite value probing coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def finite_diff_jacobian(f, q: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of a vector field; column k is d f / d q_k."""
    q = np.asarray(q, dtype=float)
    cols = []
    for i in range(q.size):
        qp = q.copy()
        qm = q.copy()
        qp[i] += h
        qm[i] -= h
        cols.append((np.asarray(f(qp)) - np.asarray(f(qm))) / (2.0 * h))
    return np.stack(cols, axis=-1)


class RngStream:
    """Counter-based random stream keyed by (seed, stream id).

    Wraps numpy's Philox-4x64 generator, so identical (seed, stream) pairs
    yield bit-identical sequences on every platform and distinct stream ids
    give statistically independent streams. One stream per chain; derive the
    stream id from the chain index (plus a run offset for multi-run bundles).
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream & 0xFFFFFFFFFFFFFFFF],
                       dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"
