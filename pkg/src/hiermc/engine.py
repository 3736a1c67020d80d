"""Chain orchestration: warmup with adaptation, sampling, and run records.

One chain owns one random stream derived from (seed, stream_offset + chain
index), so a run is reproducible bit-for-bit from its config and seed and
chains may execute in any order, including in parallel processes.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import drawsio
from .adaptation import (
    DualAveragingState,
    WarmupSchedule,
    dual_averaging_update,
    estimate_diag_metric,
    stability_bound,
)
from .config import ConfigError, ExperimentConfig
from .diagnostics import DrawMatrix
from .metrics import EuclideanMetric
from .models import (
    FunnelModel,
    OneWayNormalCP,
    OneWayNormalNCP,
    TargetModel,
    read_dataset,
)
from .numerics import RngStream
from .riemannian import SamplerIncompatibleError, SoftAbsSystem, rmhmc_transition
from .samplers import (
    ChainState,
    ehmc_transition,
    leapfrog_step,
    mwg_sweep,
    nuts_transition,
    rwm_transition,
)

_GRADIENT_SAMPLERS = ("ehmc", "nuts", "rmhmc")


def build_model(cfg: ExperimentConfig) -> TargetModel:
    if cfg.model == "funnel":
        return FunnelModel(cfg.n)
    if cfg.model == "oneway-cp":
        return OneWayNormalCP(read_dataset(cfg.data))
    if cfg.model == "oneway-ncp":
        return OneWayNormalNCP(read_dataset(cfg.data))
    raise ConfigError("model 'custom' requires passing a model object to run_experiment")


@dataclass(frozen=True)
class RunRecord:
    """Everything one run produced, before any file is written."""

    config: ExperimentConfig
    draws: DrawMatrix
    warmup_draws: DrawMatrix | None
    wall_time: float
    final_eps: list[float]
    metric_variances: list[np.ndarray | None]
    n_evals: int
    csv_paths: list[Path]

    @property
    def mean_accept(self) -> float:
        acc = self.draws.stats["accept_stat"]
        return float(np.mean(acc)) if acc.size else float("nan")

    @property
    def n_divergent(self) -> int:
        return self.draws.divergence_count()

    def meta(self) -> dict:
        return {
            "config": asdict(self.config),
            "wall_time": self.wall_time,
            "final_eps": self.final_eps,
            "n_evals": self.n_evals,
            "n_divergent": self.n_divergent,
            "mean_accept": self.mean_accept,
        }


def _find_reasonable_eps(model, metric, state: ChainState, rng: RngStream) -> tuple[float, int]:
    """Double/halve the step size until one-step acceptance crosses 1/2."""
    eps = 1.0
    d = state.q.size
    p0 = metric.sample_momentum(rng, d)
    h0 = -state.logp + metric.kinetic(p0)

    def log_ratio(eps: float) -> float:
        _, p1, logp1, _ = leapfrog_step(state.q, p0, eps, model, metric, grad=state.grad)
        if not (np.isfinite(logp1) and np.all(np.isfinite(p1))):
            return -np.inf
        return h0 - (-logp1 + metric.kinetic(p1))

    evals = 1
    r = log_ratio(eps)
    direction = 1.0 if r > np.log(0.5) else -1.0
    while direction * r > -direction * np.log(2.0):
        eps *= 2.0**direction
        if not 1e-10 < eps < 1e7:
            break
        r = log_ratio(eps)
        evals += 1
    return eps, evals


def _default_scale_factor(sampler: str, dim: int) -> float:
    # Classic random-walk tunings: 2.4/sqrt(d) jointly, 2.4 per coordinate.
    return 2.4 / np.sqrt(dim) if sampler == "rwm" else 2.4


def _run_chain(
    cfg: ExperimentConfig,
    model: TargetModel,
    chain: int,
    base_scales: np.ndarray | None,
) -> dict:
    # Warmup excursions can transiently overflow the density; every kernel
    # checks finiteness explicitly, so silence the IEEE noise here.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _run_chain_inner(cfg, model, chain, base_scales)


def _run_chain_inner(
    cfg: ExperimentConfig,
    model: TargetModel,
    chain: int,
    base_scales: np.ndarray | None,
) -> dict:
    rng = RngStream(cfg.seed, cfg.stream_offset + chain)
    d = model.dim
    q0 = rng.uniform(-2.0, 2.0, d)
    needs_grad = cfg.sampler in _GRADIENT_SAMPLERS
    state = ChainState.at(model, q0, with_grad=needs_grad)
    n_evals = 1

    metric = EuclideanMetric.unit()
    scales = np.ones(d) if base_scales is None else np.asarray(base_scales, dtype=float)
    system = SoftAbsSystem(model, cfg.alpha) if cfg.sampler == "rmhmc" else None

    # Step size / proposal factor initialization.
    if cfg.sampler in ("ehmc", "nuts"):
        if cfg.eps is not None:
            eps = cfg.eps
        else:
            eps, extra = _find_reasonable_eps(model, metric, state, rng)
            n_evals += extra
    elif cfg.sampler == "rmhmc":
        eps = cfg.eps if cfg.eps is not None else 0.1
    else:
        eps = cfg.scale if cfg.scale is not None else _default_scale_factor(cfg.sampler, d)

    adapting = cfg.adapt_delta is not None and cfg.warmup > 0
    da = DualAveragingState.fresh(eps, cfg.adapt_delta) if adapting else None
    schedule = (
        WarmupSchedule.build(cfg.warmup)
        if (cfg.metric == "diag" and cfg.sampler in ("ehmc", "nuts"))
        else None
    )
    window: list[np.ndarray] = []

    def transition(s: ChainState, step: float) -> ChainState:
        if cfg.sampler == "rwm":
            return rwm_transition(s, step * scales, model, rng)
        if cfg.sampler == "mwg":
            return mwg_sweep(s, step * scales, model, rng)
        if cfg.sampler == "ehmc":
            return ehmc_transition(s, step, cfg.n_leapfrog, model, metric, rng)
        if cfg.sampler == "nuts":
            return nuts_transition(s, step, cfg.max_depth, model, metric, rng)
        return rmhmc_transition(
            s, step, cfg.n_leapfrog, model, cfg.alpha, rng,
            fp_tol=cfg.fp_tol, fp_max=cfg.fp_max, system=system,
        )

    warm_rows = [] if cfg.save_warmup else None
    for t in range(cfg.warmup):
        cur_eps = da.eps if da is not None else eps
        state = transition(state, cur_eps)
        n_evals += state.n_evals
        if da is not None:
            da = dual_averaging_update(da, state.accept_stat)
        if schedule is not None:
            if schedule.in_slow(t):
                window.append(state.q.copy())
            if schedule.is_slow_boundary(t) and window:
                metric = estimate_diag_metric(np.asarray(window))
                window = []
                if da is not None:
                    eps_now = max(da.eps, 1e-12)
                    da = DualAveragingState.fresh(eps_now, cfg.adapt_delta)
        if warm_rows is not None and (t + 1) % cfg.thin == 0:
            warm_rows.append(_record_row(cfg, model, state, cur_eps, metric))

    if da is not None:
        eps = da.eps_bar

    rows = []
    for t in range(cfg.samples):
        state = transition(state, eps)
        n_evals += state.n_evals
        if (t + 1) % cfg.thin == 0:
            rows.append(_record_row(cfg, model, state, eps, metric))

    return {
        "rows": rows,
        "warm_rows": warm_rows,
        "final_eps": float(eps),
        "metric_variances": metric.variances,
        "n_evals": n_evals,
    }


def _record_row(cfg, model, state: ChainState, eps: float, metric) -> dict:
    row = {
        "constrained": model.constrain(state.q),
        "lp": state.logp,
        "accept_stat": state.accept_stat,
        "stepsize": eps,
        "int_steps": float(state.steps),
        "treedepth": float(state.depth) if cfg.sampler == "nuts" else float("nan"),
        "divergent": float(state.divergent),
        "energy": state.energy,
        "dv_max": state.dv_max,
        "dt_max": state.dt_max,
        "dh_max": state.dh_max,
    }
    if cfg.record_stability and cfg.sampler in ("ehmc", "nuts"):
        row["stability_bound"] = stability_bound(metric, -model.hessian(state.q))
    return row


def _assemble(model: TargetModel, per_chain_rows: list[list[dict]]) -> DrawMatrix:
    c = len(per_chain_rows)
    n = len(per_chain_rows[0])
    d = len(model.constrained_names)
    values = np.zeros((c, n, d))
    lp = np.zeros((c, n))
    stat_keys = ["accept_stat", "stepsize", "int_steps", "treedepth", "divergent",
                 "energy", "dv_max", "dt_max", "dh_max"]
    if n and "stability_bound" in per_chain_rows[0][0]:
        stat_keys.append("stability_bound")
    stats = {key: np.full((c, n), np.nan) for key in stat_keys}
    for ci, rows in enumerate(per_chain_rows):
        for ri, row in enumerate(rows):
            values[ci, ri] = row["constrained"]
            lp[ci, ri] = row["lp"]
            for key in stat_keys:
                stats[key][ci, ri] = row[key]
    return DrawMatrix(names=list(model.constrained_names), values=values, lp=lp, stats=stats)


def run_experiment(
    cfg: ExperimentConfig,
    model: TargetModel | None = None,
    base_scales: np.ndarray | None = None,
) -> RunRecord:
    """Run all chains of one experiment; write CSVs when an output dir is set.

    ``base_scales`` gives random-walk kernels per-coordinate proposal scales
    (e.g. marginal sd estimates from a baseline run); the config's global
    factor multiplies them.
    """
    cfg = cfg.validate()
    if model is None:
        model = build_model(cfg)
    if cfg.sampler == "rmhmc" and not model.riemannian_capable:
        raise SamplerIncompatibleError(
            f"sampler 'rmhmc' requires third derivatives, which "
            f"{type(model).__name__} does not provide"
        )

    start = time.perf_counter()
    if cfg.parallel and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.chains, 8)) as pool:
            results = list(
                pool.map(_chain_worker, [(cfg, model, c, base_scales) for c in range(cfg.chains)])
            )
    else:
        results = [_run_chain(cfg, model, c, base_scales) for c in range(cfg.chains)]
    wall = time.perf_counter() - start

    draws = _assemble(model, [r["rows"] for r in results])
    warmup_draws = None
    if cfg.save_warmup:
        warmup_draws = _assemble(model, [r["warm_rows"] for r in results])
    record = RunRecord(
        config=cfg,
        draws=draws,
        warmup_draws=warmup_draws,
        wall_time=wall,
        final_eps=[r["final_eps"] for r in results],
        metric_variances=[r["metric_variances"] for r in results],
        n_evals=int(sum(r["n_evals"] for r in results)),
        csv_paths=[],
    )
    if cfg.output is not None:
        paths = drawsio.write_draws(cfg.output, cfg.name, draws)
        if warmup_draws is not None:
            paths += drawsio.write_draws(cfg.output, cfg.name + "-warmup", warmup_draws)
        meta_path = Path(cfg.output) / f"{cfg.name}-meta.json"
        meta_path.parent.mkdir(parents=True, exist_ok=True)
        meta_path.write_text(json.dumps(record.meta(), indent=2, default=str) + "\n")
        object.__setattr__(record, "csv_paths", paths)
    return record


def _chain_worker(args) -> dict:
    cfg, model, chain, base_scales = args
    return _run_chain(cfg, model, chain, base_scales)
