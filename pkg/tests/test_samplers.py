import numpy as np
import pytest

from hiermc.diagnostics import ess
from hiermc.metrics import EuclideanMetric
from hiermc.models import FunnelModel, TargetModel
from hiermc.numerics import RngStream
from hiermc.samplers import (
    ChainState,
    ehmc_transition,
    euclidean_hamiltonian,
    leapfrog_step,
    mwg_sweep,
    nuts_transition,
    rwm_transition,
)

from conftest import DiagGaussianModel, Poly1DModel


class DenseGaussianModel(TargetModel):
    def __init__(self, cov):
        self.cov = np.asarray(cov, dtype=float)
        self.prec = np.linalg.inv(self.cov)
        self.dim = self.cov.shape[0]
        self.names = [f"x.{i}" for i in range(1, self.dim + 1)]
        self.constrained_names = list(self.names)

    def logp(self, q):
        return float(-0.5 * q @ self.prec @ q)

    def grad(self, q):
        return -self.prec @ q

    def logp_grad(self, q):
        return self.logp(q), self.grad(q)

    def hessian(self, q):
        return -self.prec


def run_kernel(kernel, model, n, rng, with_grad=True, q0=None):
    state = ChainState.at(model, q0 if q0 is not None else np.zeros(model.dim),
                          with_grad=with_grad)
    out = np.empty((n, model.dim))
    acc = np.empty(n)
    for i in range(n):
        state = kernel(state)
        out[i] = state.q
        acc[i] = state.accept_stat
    return out, acc, state


class TestRwm:
    def test_equal_density_accepts(self, std_normal_1d):
        # Antithetic proposal has identical density: acceptance statistic 1.
        state = ChainState.at(std_normal_1d, np.array([1.3]), with_grad=False)
        rng = RngStream(0, 0)
        seen = []
        for _ in range(50):
            new = rwm_transition(state, np.array([1e-14]), std_normal_1d, rng)
            seen.append(new.accept_stat)
        # scale -> 0: density ratio -> 1 and movement -> 0
        assert min(seen) > 1.0 - 1e-6
        assert abs(new.q[0] - 1.3) < 1e-10

    def test_long_run_moments(self, std_normal_1d):
        rng = RngStream(42, 0)
        draws, acc, _ = run_kernel(
            lambda s: rwm_transition(s, np.array([2.4]), std_normal_1d, rng),
            std_normal_1d, 100_000, rng, with_grad=False)
        assert np.std(draws) == pytest.approx(1.0, rel=0.05)
        assert 0.1 < np.mean(acc) < 0.8

    def test_nonfinite_proposal_autorejects(self):
        class HalfLine(TargetModel):
            dim = 1
            names = ["x"]
            constrained_names = ["x"]

            def logp(self, q):
                return float(-q[0]) if q[0] > 0 else -np.inf

        model = HalfLine()
        state = ChainState.at(model, np.array([1e-8]), with_grad=False)
        rng = RngStream(1, 0)
        rejected = 0
        for _ in range(200):
            new = rwm_transition(state, np.array([5.0]), model, rng)
            if new.q[0] == state.q[0] and new.accept_stat == 0.0:
                rejected += 1
        assert rejected > 0

    def test_rejects_bad_scale(self, std_normal_1d):
        state = ChainState.at(std_normal_1d, np.zeros(1), with_grad=False)
        with pytest.raises(ValueError):
            rwm_transition(state, np.array([0.0]), std_normal_1d, RngStream(0, 0))


class TestMwg:
    def test_product_target_matches_single_coordinate(self):
        # On an independent product target the sweep's per-coordinate
        # acceptance equals plain 1-D Metropolis acceptance.
        model2 = DiagGaussianModel([1.0, 1.0])
        model1 = DiagGaussianModel([1.0])
        rng2, rng1 = RngStream(7, 0), RngStream(8, 0)
        _, acc2, _ = run_kernel(
            lambda s: mwg_sweep(s, np.array([2.4, 2.4]), model2, rng2),
            model2, 20_000, rng2, with_grad=False)
        _, acc1, _ = run_kernel(
            lambda s: rwm_transition(s, np.array([2.4]), model1, rng1),
            model1, 20_000, rng1, with_grad=False)
        assert np.mean(acc2) == pytest.approx(np.mean(acc1), abs=0.02)

    def test_correlation_collapses_ess(self):
        scales_factor = 2.4
        results = {}
        for rho in (0.0, 0.99):
            model = DenseGaussianModel([[1.0, rho], [rho, 1.0]])
            cond_sd = np.sqrt(1.0 - rho**2)
            scales = scales_factor * np.array([cond_sd, cond_sd]) if rho else np.full(2, scales_factor)
            rng = RngStream(11, 0)
            draws, _, _ = run_kernel(
                lambda s: mwg_sweep(s, scales, model, rng),
                model, 6000, rng, with_grad=False)
            results[rho] = ess(draws[None, :, 0])
        assert results[0.0] / results[0.99] >= 10.0

    def test_counts_one_sweep_as_d_steps(self, gauss_5d):
        state = ChainState.at(gauss_5d, np.zeros(5), with_grad=False)
        new = mwg_sweep(state, np.full(5, 1.0), gauss_5d, RngStream(2, 0))
        assert new.steps == 5
        assert new.n_evals == 5
        assert 0.0 <= new.accept_stat <= 1.0


class TestLeapfrog:
    def test_hand_step(self, std_normal_1d):
        q, p, logp, grad = leapfrog_step(
            np.array([1.0]), np.array([0.0]), 0.1, std_normal_1d, EuclideanMetric.unit())
        assert q[0] == pytest.approx(0.995, abs=1e-12)
        assert p[0] == pytest.approx(-0.09975, abs=1e-12)

    def test_reversibility(self, gauss_5d):
        rng = RngStream(3, 0)
        q0 = rng.normal(5)
        p0 = rng.normal(5)
        metric = EuclideanMetric.diagonal(np.array([1.0, 2.0, 0.5, 1.0, 3.0]))
        q, p = q0, p0
        for _ in range(25):
            q, p, _, _ = leapfrog_step(q, p, 0.05, gauss_5d, metric)
        q, p = q, -p
        for _ in range(25):
            q, p, _, _ = leapfrog_step(q, p, 0.05, gauss_5d, metric)
        assert np.max(np.abs(q - q0)) < 1e-12
        assert np.max(np.abs(p + p0)) < 1e-12

    def test_energy_error_eps2_scaling(self):
        model = FunnelModel(1)
        metric = EuclideanMetric.unit()
        rng = RngStream(5, 0)
        starts = [np.array([0.5, 0.5]) + 0.3 * rng.normal(2) for _ in range(100)]
        moms = [rng.normal(2) for _ in range(100)]
        epss = np.array([0.2, 0.1, 0.05, 0.025])
        medians = []
        for eps in epss:
            steps = int(round(2.0 / eps))
            errs = []
            for q0, p0 in zip(starts, moms):
                h0 = euclidean_hamiltonian(q0, p0, model, metric)
                q, p = q0, p0
                for _ in range(steps):
                    q, p, lp, _ = leapfrog_step(q, p, eps, model, metric)
                errs.append(abs((-lp + metric.kinetic(p)) - h0))
            medians.append(np.median(errs))
        slope = np.polyfit(np.log(epss), np.log(medians), 1)[0]
        assert 1.8 <= slope <= 2.2

    def test_halving_eps_quarters_error(self, gauss_5d):
        metric = EuclideanMetric.unit()
        rng = RngStream(6, 0)
        q0, p0 = rng.normal(5), rng.normal(5)
        errs = []
        for eps in (0.1, 0.05):
            steps = int(round(1.0 / eps))
            q, p = q0, p0
            h0 = euclidean_hamiltonian(q0, p0, gauss_5d, metric)
            for _ in range(steps):
                q, p, lp, _ = leapfrog_step(q, p, eps, gauss_5d, metric)
            errs.append(abs((-lp + metric.kinetic(p)) - h0))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.5)

    def test_symplectic_unit_jacobian_complex_step(self):
        # Complex-step derivative of the one-step map gives the exact
        # Jacobian; its determinant must be 1 for a symplectic map.
        model = Poly1DModel(a=0.7, b=0.15)
        metric = EuclideanMetric.unit()
        rng = RngStream(8, 0)
        for _ in range(10):
            z0 = rng.normal(2)
            h = 1e-20
            jac = np.zeros((2, 2))
            for j in range(2):
                dz = np.zeros(2, dtype=complex)
                dz[j] = 1j * h
                q_in = np.array([z0[0] + dz[0]])
                p_in = np.array([z0[1] + dz[1]])
                q1, p1, _, _ = leapfrog_step(q_in, p_in, 0.23, model, metric)
                jac[0, j] = q1[0].imag / h
                jac[1, j] = p1[0].imag / h
            assert abs(np.linalg.det(jac) - 1.0) < 1e-10


class TestEuclideanHamiltonian:
    def test_zero_momentum(self, gauss_5d):
        q = np.array([0.1, -0.2, 0.3, 0.0, 1.0])
        h = euclidean_hamiltonian(q, np.zeros(5), gauss_5d, EuclideanMetric.unit())
        assert h == pytest.approx(-gauss_5d.logp(q))

    def test_pure_kinetic(self):
        model = DiagGaussianModel([1.0, 1.0])

        class Flat(TargetModel):
            dim = 2
            names = ["a", "b"]
            constrained_names = ["a", "b"]

            def logp(self, q):
                return 0.0

        h = euclidean_hamiltonian(np.zeros(2), np.array([3.0, 4.0]), Flat(),
                                  EuclideanMetric.unit())
        assert h == pytest.approx(12.5)

    def test_conserved_along_flow(self, gauss_5d):
        metric = EuclideanMetric.unit()
        rng = RngStream(9, 0)
        q, p = rng.normal(5), rng.normal(5)
        h0 = euclidean_hamiltonian(q, p, gauss_5d, metric)
        for _ in range(200):
            q, p, _, _ = leapfrog_step(q, p, 0.01, gauss_5d, metric)
        assert euclidean_hamiltonian(q, p, gauss_5d, metric) == pytest.approx(h0, abs=1e-3)


class TestEhmc:
    def test_exact_flow_limit_accepts(self, gauss_5d):
        rng = RngStream(10, 0)
        state = ChainState.at(gauss_5d, rng.normal(5))
        accs = []
        for _ in range(50):
            state = ehmc_transition(state, 0.001, 100, gauss_5d, EuclideanMetric.unit(), rng)
            accs.append(state.accept_stat)
        assert np.mean(accs) > 0.9999

    def test_stability_bound_divergence(self, std_normal_1d):
        # On a unit Gaussian the leapfrog is stable below step size 2 and
        # explodes above it.
        rng = RngStream(11, 0)
        metric = EuclideanMetric.unit()
        state = ChainState.at(std_normal_1d, np.array([0.5]))
        div_19 = 0
        for _ in range(500):
            state = ehmc_transition(state, 1.9, 20, std_normal_1d, metric, rng)
            div_19 += state.divergent
        assert div_19 == 0
        state = ChainState.at(std_normal_1d, np.array([0.5]))
        div_21 = 0
        for _ in range(500):
            state = ehmc_transition(state, 2.1, 20, std_normal_1d, metric, rng)
            div_21 += state.divergent
        assert div_21 > 250

    def test_divergent_transition_rejects_and_flags(self, std_normal_1d):
        rng = RngStream(12, 0)
        state = ChainState.at(std_normal_1d, np.array([1.0]))
        new = ehmc_transition(state, 2.5, 50, std_normal_1d, EuclideanMetric.unit(), rng)
        assert new.divergent
        assert np.array_equal(new.q, state.q)
        assert new.accept_stat == 0.0

    def test_energy_bookkeeping_identity(self, gauss_5d):
        rng = RngStream(13, 0)
        state = ChainState.at(gauss_5d, rng.normal(5))
        state = ehmc_transition(state, 0.15, 30, gauss_5d, EuclideanMetric.unit(), rng)
        # dv and dt are total variations; each is bounded by the other plus
        # the worst energy error along the trajectory.
        assert abs(state.dv_max - state.dt_max) <= 2 * state.dh_max + 1e-12

    def test_funnel_potential_variation_concentrates_near_half_dim(self):
        # With a constant metric the kinetic budget caps the potential
        # variation per transition at the d/2 scale.
        model = FunnelModel(100)
        rng = RngStream(21, 0)
        metric = EuclideanMetric.unit()
        state = ChainState.at(model, rng.uniform(-2, 2, 101))
        eps = 0.19
        dvs = []
        for i in range(900):
            state = ehmc_transition(state, eps, 64, model, metric, rng)
            if i >= 300:
                dvs.append(state.dv_max)
        dvs = np.asarray(dvs)
        d = 101
        assert d / 8 <= np.median(dvs) <= d
        assert d / 4 <= np.percentile(dvs, 90) <= 2 * d


class TestNuts:
    def test_depth_one_is_single_doubling(self, std_normal_1d):
        rng = RngStream(14, 0)
        state = ChainState.at(std_normal_1d, np.array([0.3]))
        for _ in range(20):
            new = nuts_transition(state, 0.5, 1, std_normal_1d, EuclideanMetric.unit(), rng)
            assert new.steps <= 2
            assert new.depth <= 1
            state = new

    def test_depth_never_exceeds_cap(self, gauss_5d):
        rng = RngStream(15, 0)
        state = ChainState.at(gauss_5d, rng.normal(5))
        for _ in range(200):
            state = nuts_transition(state, 0.05, 6, gauss_5d, EuclideanMetric.unit(), rng)
            assert state.depth <= 6
            assert state.steps <= 2**6

    def test_moment_oracle_1d_adapted(self, std_normal_1d):
        from hiermc.config import ExperimentConfig
        from hiermc.engine import run_experiment

        cfg = ExperimentConfig(model="custom", sampler="nuts", adapt_delta=0.8,
                               chains=4, warmup=500, samples=5000, seed=16)
        rec = run_experiment(cfg, model=std_normal_1d)
        draws = rec.draws.param("x.1")
        assert abs(np.mean(draws)) < 0.05
        assert abs(np.std(draws) - 1.0) < 0.05

    def test_funnel_max_depth_20_terminates(self):
        model = FunnelModel(25)
        rng = RngStream(17, 0)
        state = ChainState.at(model, np.zeros(26))
        for _ in range(30):
            state = nuts_transition(state, 0.1, 20, model, EuclideanMetric.unit(), rng)
            assert state.depth <= 20
        assert np.all(np.isfinite(state.q))

    def test_divergence_terminates_and_flags(self):
        # From the funnel's neck a moderate step size violates the stability
        # bound badly; the energy error rockets past the threshold within a
        # few steps, so the doubling stops and the transition is flagged.
        model = FunnelModel(5)
        rng = RngStream(18, 0)
        q0 = np.concatenate([np.zeros(5), [-6.0]])
        flagged = 0
        for _ in range(50):
            state = ChainState.at(model, q0)
            new = nuts_transition(state, 0.5, 8, model, EuclideanMetric.unit(), rng)
            flagged += new.divergent
            assert new.depth <= 8
        assert flagged > 25

    def test_accept_stat_in_unit_interval(self, gauss_5d):
        rng = RngStream(19, 0)
        state = ChainState.at(gauss_5d, rng.normal(5))
        for _ in range(100):
            state = nuts_transition(state, 0.4, 8, gauss_5d, EuclideanMetric.unit(), rng)
            assert 0.0 <= state.accept_stat <= 1.0


# Trajectory times are kept away from multiples of pi/2: on a Gaussian a
# resonant fixed-length trajectory degenerates into a reducible chain.
KERNELS_1D = {
    "rwm": lambda s, m, rng: rwm_transition(s, np.array([2.4]), m, rng),
    "mwg": lambda s, m, rng: mwg_sweep(s, np.array([2.4]), m, rng),
    "ehmc": lambda s, m, rng: ehmc_transition(s, 0.35, 7, m, EuclideanMetric.unit(), rng),
    "nuts": lambda s, m, rng: nuts_transition(s, 0.4, 8, m, EuclideanMetric.unit(), rng),
}

N_DRAWS_1D = {"rwm": 100_000, "mwg": 100_000, "ehmc": 30_000, "nuts": 20_000}
KERNEL_STREAMS = {"rwm": 0, "mwg": 1, "ehmc": 2, "nuts": 3}


class TestDetailedBalanceSmoke:
    @pytest.mark.parametrize("name", list(KERNELS_1D))
    def test_one_dimensional_gaussian(self, name, std_normal_1d):
        rng = RngStream(23, KERNEL_STREAMS[name])
        n = N_DRAWS_1D[name]
        draws, _, _ = run_kernel(
            lambda s: KERNELS_1D[name](s, std_normal_1d, rng),
            std_normal_1d, n, rng, with_grad=name in ("ehmc", "nuts"))
        x = draws[None, :, 0]
        e = max(ess(x), 10.0)
        assert abs(np.mean(x)) < 3.0 / np.sqrt(e)
        assert abs(np.std(x) - 1.0) < 3.0 / np.sqrt(2 * e)

    @pytest.mark.parametrize("name", list(KERNELS_1D))
    def test_five_dimensional_gaussian(self, name, gauss_5d):
        sds = gauss_5d.sds
        rng = RngStream(29, KERNEL_STREAMS[name])
        n = N_DRAWS_1D[name] // 2

        def kernel(s):
            if name == "rwm":
                return rwm_transition(s, 2.4 / np.sqrt(5) * sds, gauss_5d, rng)
            if name == "mwg":
                return mwg_sweep(s, 2.4 * sds, gauss_5d, rng)
            if name == "ehmc":
                return ehmc_transition(s, 0.25, 10, gauss_5d, EuclideanMetric.unit(), rng)
            return nuts_transition(s, 0.25, 8, gauss_5d, EuclideanMetric.unit(), rng)

        draws, _, _ = run_kernel(kernel, gauss_5d, n, rng,
                                 with_grad=name in ("ehmc", "nuts"))
        for i in range(5):
            x = draws[None, :, i]
            e = max(ess(x), 10.0)
            mcse_mean = sds[i] / np.sqrt(e)
            mcse_sd = sds[i] / np.sqrt(2 * e)
            assert abs(np.mean(x)) < 3 * mcse_mean, f"{name} coord {i} mean"
            assert abs(np.std(x) - sds[i]) < 3 * mcse_sd, f"{name} coord {i} sd"
