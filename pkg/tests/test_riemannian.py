import numpy as np
import pytest

from hiermc.diagnostics import ess
from hiermc.metrics import EuclideanMetric
from hiermc.models import FunnelModel
from hiermc.numerics import RngStream, finite_diff_gradient
from hiermc.riemannian import (
    SamplerIncompatibleError,
    SoftAbsSystem,
    generalized_leapfrog_step,
    rmhmc_hamiltonian,
    rmhmc_transition,
)
from hiermc.samplers import ChainState, leapfrog_step

from conftest import DiagGaussianModel

TAME_V = 1.4
TAME_THETA = np.exp(TAME_V / 2) * np.array(
    [0.3, -0.2, 0.5, -0.4, 0.1, 0.2, -0.3, 0.4, -0.1, 0.25])
TAME_Q = np.concatenate([TAME_THETA, [TAME_V]])


def typical_funnel_starts(n_starts=6, n=10, seed=42):
    rng = RngStream(seed, 0)
    starts = []
    for _ in range(n_starts):
        v = 3.0 * rng.normal()
        theta = np.exp(v / 2.0) * rng.normal(n)
        starts.append(np.concatenate([theta, [v]]))
    return starts


class TestHamiltonian:
    def test_zero_momentum(self):
        model = FunnelModel(4)
        q = RngStream(1, 0).normal(5)
        h = rmhmc_hamiltonian(q, np.zeros(5), model, alpha=1e6)
        from hiermc.metrics import softabs_metric

        dec = softabs_metric(-model.hessian(q), 1e6)
        assert h == pytest.approx(-model.logp(q) + 0.5 * dec.logdet, abs=1e-10)

    def test_constant_hessian_reduces_to_euclidean_plus_constant(self, gauss_5d):
        rng = RngStream(2, 0)
        metric = EuclideanMetric.dense(-np.linalg.inv(gauss_5d.hessian(np.zeros(5))))
        qs = [rng.normal(5) for _ in range(4)]
        ps = [rng.normal(5) for _ in range(4)]
        diffs = [
            rmhmc_hamiltonian(q, p, gauss_5d, 1e8)
            - (-gauss_5d.logp(q) + metric_kinetic(gauss_5d, p))
            for q, p in zip(qs, ps)
        ]
        assert np.ptp(diffs) < 1e-8  # constant offset only

    def test_force_matches_finite_differences(self):
        model = FunnelModel(10)
        system = SoftAbsSystem(model, 1e6)
        rng = RngStream(5, 0)
        q0 = rng.normal(11) * 0.8
        ms = system.metric_state(q0)
        p = ms.decomp.sample_momentum(RngStream(3, 0))
        fd = finite_diff_gradient(lambda q: rmhmc_hamiltonian(q, p, model, 1e6), q0, h=1e-6)
        assert np.max(np.abs(ms.dh_dq(p) - fd) / (1.0 + np.abs(fd))) < 1e-6


def metric_kinetic(model, p):
    # kinetic energy of the hard-|H| metric for a constant-Hessian target
    hv = -model.hessian(np.zeros(model.dim))
    return 0.5 * float(p @ np.linalg.solve(hv, p))


class TestGeneralizedLeapfrog:
    def test_position_independent_metric_matches_leapfrog(self, gauss_5d):
        system = SoftAbsSystem(gauss_5d, 1e8)
        rng = RngStream(4, 0)
        q0, p0 = rng.normal(5), rng.normal(5)
        ms = system.metric_state(q0)
        ms1, p1, conv = generalized_leapfrog_step(system, ms, p0, 0.1)
        assert conv
        hv = -gauss_5d.hessian(q0)
        metric = EuclideanMetric.dense(hv)
        q_ref, p_ref, _, _ = leapfrog_step(q0, p0, 0.1, gauss_5d, metric)
        assert np.max(np.abs(ms1.q - q_ref)) < 1e-9
        assert np.max(np.abs(p1 - p_ref)) < 1e-9

    def test_reversibility_within_10x_fp_tol(self):
        model = FunnelModel(10)
        system = SoftAbsSystem(model, 1e6)
        for q0 in typical_funnel_starts(3):
            ms = system.metric_state(q0)
            p0 = ms.decomp.sample_momentum(RngStream(7, 0))
            ms1, p1, c1 = generalized_leapfrog_step(system, ms, p0, 0.05)
            ms2, p2, c2 = generalized_leapfrog_step(system, ms1, -p1, 0.05)
            assert c1 and c2
            assert np.max(np.abs(ms2.q - q0)) < 10 * 1e-10
            assert np.max(np.abs(p2 + p0)) < 10 * 1e-10

    def test_small_momentum_conservation_frozen_case(self):
        # Frozen small-momentum probe: five steps at eps=0.01 conserve H to
        # better than 1e-6 (observed 6.5e-8 on this configuration).
        model = FunnelModel(10)
        system = SoftAbsSystem(model, 1e6)
        ms = system.metric_state(TAME_Q)
        p = ms.decomp.sample_momentum(RngStream(4, 0)) * 0.3
        h0 = ms.hamiltonian(p)
        worst = 0.0
        for _ in range(5):
            ms, p, conv = generalized_leapfrog_step(system, ms, p, 0.01)
            assert conv
            worst = max(worst, abs(ms.hamiltonian(p) - h0))
        assert worst < 1e-6

    def test_typical_start_conservation_panel(self):
        model = FunnelModel(10)
        system = SoftAbsSystem(model, 1e6)
        for q0 in typical_funnel_starts(6):
            ms = system.metric_state(q0)
            p = ms.decomp.sample_momentum(RngStream(9, 0))
            h0 = ms.hamiltonian(p)
            worst = 0.0
            for _ in range(25):
                ms, p, conv = generalized_leapfrog_step(system, ms, p, 0.01)
                if not conv:
                    break
                worst = max(worst, abs(ms.hamiltonian(p) - h0))
            assert conv
            assert worst < 5e-4

    def test_per_step_energy_error_at_eps_005(self):
        model = FunnelModel(10)
        system = SoftAbsSystem(model, 1e6)
        rng = RngStream(11, 0)
        q0 = rng.normal(11) * 1.5
        ms = system.metric_state(q0)
        p = ms.decomp.sample_momentum(rng)
        h_prev = ms.hamiltonian(p)
        worst = 0.0
        for _ in range(50):
            ms, p, conv = generalized_leapfrog_step(system, ms, p, 0.05)
            assert conv
            h_now = ms.hamiltonian(p)
            worst = max(worst, abs(h_now - h_prev))
            h_prev = h_now
        assert worst < 1e-4

    def test_second_order_convergence(self):
        model = FunnelModel(10)
        system = SoftAbsSystem(model, 1e6)
        q0 = np.concatenate([np.full(10, 0.5), [0.0]])
        ms0 = system.metric_state(q0)
        p0 = ms0.decomp.sample_momentum(RngStream(5, 0))
        h0 = ms0.hamiltonian(p0)
        errs = []
        for eps in (0.02, 0.01, 0.005):
            ms, p = ms0, p0
            worst = 0.0
            for _ in range(int(round(0.2 / eps))):
                ms, p, conv = generalized_leapfrog_step(system, ms, p, eps)
                worst = max(worst, abs(ms.hamiltonian(p) - h0))
            errs.append(worst)
        slope = np.polyfit(np.log([0.02, 0.01, 0.005]), np.log(errs), 1)[0]
        assert 1.8 <= slope <= 2.2

    def test_validates_inputs(self):
        model = FunnelModel(2)
        system = SoftAbsSystem(model, 1e6)
        ms = system.metric_state(np.zeros(3))
        with pytest.raises(ValueError):
            generalized_leapfrog_step(system, ms, np.zeros(3), 0.1, fp_tol=0.0)


class TestRmhmcTransition:
    def test_exact_flow_limit_accepts(self, gauss_5d):
        rng = RngStream(13, 0)
        state = ChainState.at(gauss_5d, rng.normal(5))
        accs = []
        for _ in range(20):
            state = rmhmc_transition(state, 0.002, 50, gauss_5d, 1e6, rng)
            accs.append(state.accept_stat)
        assert np.mean(accs) > 0.9999

    def test_incompatible_model_raises(self):
        class NoThird(DiagGaussianModel):
            def third(self, q):
                from hiermc.models import ModelError

                raise ModelError("no third derivatives")

        with pytest.raises(SamplerIncompatibleError, match="third"):
            SoftAbsSystem(NoThird([1.0, 1.0]), 1e6)

    def test_nonconvergence_rejects_with_flag(self):
        model = FunnelModel(5)
        rng = RngStream(14, 0)
        q0 = np.concatenate([np.zeros(5), [2.0]])
        state = ChainState.at(model, q0)
        # Giant step size: fixed points cannot contract.
        new = rmhmc_transition(state, 50.0, 3, model, 1e6, rng, fp_max=5)
        assert new.divergent
        assert np.array_equal(new.q, state.q)
        assert new.accept_stat == 0.0

    def test_detailed_balance_smoke_1d(self, std_normal_1d):
        # The metric makes every direction unit-frequency, so keep the
        # trajectory time near pi/2 (q/p swap) rather than pi (antithetic).
        rng = RngStream(15, 0)
        state = ChainState.at(std_normal_1d, np.array([0.5]))
        n = 12_000
        draws = np.empty(n)
        for i in range(n):
            state = rmhmc_transition(state, 0.31, 5, std_normal_1d, 1e6, rng)
            draws[i] = state.q[0]
        x = draws[None, :]
        e = max(ess(x), 10.0)
        assert abs(np.mean(x)) < 3.0 / np.sqrt(e)
        assert abs(np.std(x) - 1.0) < 3.0 / np.sqrt(2 * e)

    def test_detailed_balance_smoke_5d(self, gauss_5d):
        rng = RngStream(16, 0)
        state = ChainState.at(gauss_5d, 0.5 * np.ones(5))
        n = 6000
        draws = np.empty((n, 5))
        for i in range(n):
            state = rmhmc_transition(state, 0.31, 5, gauss_5d, 1e6, rng)
            draws[i] = state.q
        sds = gauss_5d.sds
        for i in range(5):
            x = draws[None, :, i]
            e = max(ess(x), 10.0)
            assert abs(np.mean(x)) < 3 * sds[i] / np.sqrt(e)
            assert abs(np.std(x) - sds[i]) < 3 * sds[i] / np.sqrt(2 * e)

    def test_counts_metric_builds_as_evals(self):
        model = FunnelModel(3)
        rng = RngStream(17, 0)
        state = ChainState.at(model, np.zeros(4))
        system = SoftAbsSystem(model, 1e6)
        new = rmhmc_transition(state, 0.1, 4, model, 1e6, rng, system=system)
        assert new.n_evals >= 4  # at least one build per step
        assert new.n_evals == system.n_metric_builds
