"""Shared fixtures and reference targets for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from hiermc.models import TargetModel

ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def record_acceptance(number: int, description: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((number, description, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        line = f"ACCEPTANCE {number:2d} [{status}] {description}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


class DiagGaussianModel(TargetModel):
    """Independent Gaussian target with analytic derivatives and zero third
    tensor, usable with every kernel including the Riemannian one."""

    def __init__(self, sds):
        self.sds = np.asarray(sds, dtype=float)
        self.dim = self.sds.size
        self.names = [f"x.{i}" for i in range(1, self.dim + 1)]
        self.constrained_names = list(self.names)
        self._prec = 1.0 / self.sds**2

    def logp(self, q):
        q = np.asarray(q, dtype=float)
        return float(-0.5 * np.sum(self._prec * q * q)
                     - np.sum(np.log(self.sds))
                     - 0.5 * self.dim * np.log(2 * np.pi))

    def grad(self, q):
        return -self._prec * np.asarray(q, dtype=float)

    def logp_grad(self, q):
        return self.logp(q), self.grad(q)

    def hessian(self, q):
        return np.diag(-self._prec)

    def third(self, q):
        return np.zeros((self.dim, self.dim, self.dim))


class Poly1DModel(TargetModel):
    """1-D quartic-well target; log density -(a q^2 + b q^4).

    Written with dtype-agnostic arithmetic so complex-step probes of the
    integrator map stay exact.
    """

    def __init__(self, a=0.5, b=0.1):
        self.a = a
        self.b = b
        self.dim = 1
        self.names = ["x"]
        self.constrained_names = ["x"]

    def logp(self, q):
        x = q[0]
        return -(self.a * x * x + self.b * x**4)

    def grad(self, q):
        x = q[0]
        return np.asarray([-(2 * self.a * x + 4 * self.b * x**3)])

    def logp_grad(self, q):
        return self.logp(q), self.grad(q)

    def hessian(self, q):
        x = q[0]
        return np.asarray([[-(2 * self.a + 12 * self.b * x * x)]])

    def third(self, q):
        x = q[0]
        return np.asarray([[[-24.0 * self.b * x]]])


@pytest.fixture
def std_normal_1d():
    return DiagGaussianModel([1.0])


@pytest.fixture
def gauss_5d():
    return DiagGaussianModel([1.0, 2.0, 0.5, 1.5, 3.0])
