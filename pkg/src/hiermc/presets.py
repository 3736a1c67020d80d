"""One-command experiment bundles with deterministic seeding.

Each preset runs a fixed set of experiments at desk scale, writes the draws
and a plot-ready CSV of its headline quantity, and renders figures from the
same data. ``scale`` multiplies iteration counts for quick looks; ``full``
restores the long-run settings for users with hours to spend.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .adaptation import relaxation_scan
from .config import ConfigError, ExperimentConfig
from .diagnostics import DrawMatrix, ess, format_summary_table, split_rhat, summarize
from .drawsio import write_table_csv
from .engine import RunRecord, run_experiment
from .models import FunnelModel, generate_pseudodata, write_dataset
from .numerics import RngStream
from .riemannian import SoftAbsSystem, generalized_leapfrog_step
from .samplers import leapfrog_step
from .metrics import EuclideanMetric
from . import diagnostics

PRESET_NAMES = (
    "funnel-explore",
    "stepsize-scan",
    "energy-trace",
    "param-crossover",
    "oneway-benchmark",
    "curvature-field",
)


@dataclass
class PresetResult:
    name: str
    outputs: list[Path] = field(default_factory=list)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    records: dict[str, RunRecord] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


def _iters(base: int, scale: float, lo: int = 20) -> int:
    return max(lo, int(round(base * scale)))


def _marginal_sds(draws: DrawMatrix, names: list[str]) -> np.ndarray:
    """Per-parameter sds in the order requested; 'lambda' maps to sd(log tau)."""
    out = []
    for name in names:
        if name == "lambda":
            x = np.log(draws.param("tau"))
        else:
            x = draws.param(name)
        out.append(float(np.std(x.reshape(-1), ddof=1)))
    return np.asarray(out)


def unconstrained_scales_from(draws: DrawMatrix, model) -> np.ndarray:
    """Baseline marginal-sd estimates for a model's unconstrained parameters."""
    return _marginal_sds(draws, list(model.names))


def _write_summary(outdir: Path, name: str, record: RunRecord) -> list[Path]:
    res = summarize(record.draws, wall_time=record.wall_time, n_evals=record.n_evals)
    txt = outdir / f"{name}-summary.txt"
    txt.write_text(format_summary_table(res) + "\n")
    rows = [
        {"name": r.name, "mean": r.mean, "sd": r.sd, "q5": r.q5, "q50": r.q50,
         "q95": r.q95, "ess": r.ess, "rhat": r.rhat}
        for r in [res.lp_row] + res.rows
    ]
    csv = write_table_csv(outdir / f"{name}-summary.csv",
                          rows, ["name", "mean", "sd", "q5", "q50", "q95", "ess", "rhat"])
    return [txt, csv]


def compare_table(
    records: dict[tuple[str, str], RunRecord],
    param: str,
    baseline: RunRecord | None = None,
    baseline_param: str | None = None,
) -> tuple[list[dict], str]:
    """Efficiency rows per (algorithm, parameterization) for one slow parameter.

    With a baseline, rows whose mean/sd of ``param`` disagree with the
    baseline by more than three combined Monte Carlo standard errors are
    marked inconsistent and dropped from the text table (the exclusion is
    recorded in the row and in the rendered text).
    """
    baseline_param = baseline_param or param
    base_stats = None
    if baseline is not None:
        bx = baseline.draws.param(baseline_param)
        be = ess(bx)
        base_stats = (float(np.mean(bx)), float(np.std(bx.reshape(-1), ddof=1)), be)

    rows = []
    for (algorithm, parameterization), rec in records.items():
        x = rec.draws.param(param)
        e = ess(x)
        mean = float(np.mean(x))
        sd = float(np.std(x.reshape(-1), ddof=1))
        consistent = True
        reason = ""
        if base_stats is not None:
            bmean, bsd, bess = base_stats
            se_mean = np.hypot(sd / np.sqrt(max(e, 1.0)), bsd / np.sqrt(max(bess, 1.0)))
            se_sd = np.hypot(sd / np.sqrt(2.0 * max(e, 1.0)), bsd / np.sqrt(2.0 * max(bess, 1.0)))
            if not np.isfinite(e):
                consistent, reason = False, "undefined ESS"
            elif abs(mean - bmean) > 3.0 * se_mean:
                consistent, reason = False, (
                    f"mean({param})={mean:.3f} vs baseline {bmean:.3f} "
                    f"(> 3 x {se_mean:.3f})")
            elif abs(sd - bsd) > 3.0 * se_sd:
                consistent, reason = False, (
                    f"sd({param})={sd:.3f} vs baseline {bsd:.3f} (> 3 x {se_sd:.3f})")
        rows.append({
            "algorithm": algorithm,
            "parameterization": parameterization,
            "step_size": float(np.mean(rec.final_eps)),
            "avg_accept": rec.mean_accept,
            "time_s": rec.wall_time,
            "time_per_ess_s": rec.wall_time / e if e > 0 else float("nan"),
            "ess": e,
            "ess_per_1k_evals": 1000.0 * e / rec.n_evals if rec.n_evals else float("nan"),
            "n_divergent": rec.n_divergent,
            "consistent": consistent,
            "excluded_because": reason,
        })

    cols = ["algorithm", "parameterization", "step_size", "avg_accept",
            "time_s", "time_per_ess_s", "ess_per_1k_evals"]
    lines = []
    shown = [r for r in rows if r["consistent"]]
    widths = {c: max(len(c), 12) for c in cols}
    lines.append("  ".join(c.ljust(widths[c]) for c in cols))
    for r in shown:
        cells = []
        for c in cols:
            v = r[c]
            cells.append((f"{v:.4g}" if isinstance(v, float) else str(v)).ljust(widths[c]))
        lines.append("  ".join(cells))
    for r in rows:
        if not r["consistent"]:
            lines.append(
                f"excluded: {r['algorithm']}/{r['parameterization']} - {r['excluded_because']}"
            )
    lines.append("wall time includes warmup and excludes file I/O; "
                 f"efficiency column is ESS({param}) per 1000 density/gradient evaluations")
    return rows, "\n".join(lines)


def _record_trajectory_euclidean(model, state, metric, eps, n_steps):
    v_trace = [-state.logp]
    p = metric.sample_momentum(RngStream(987, 3), model.dim)
    t_trace = [metric.kinetic(p)]
    q, grad, logp = state.q, state.grad, state.logp
    for _ in range(n_steps):
        q, p, logp, grad = leapfrog_step(q, p, eps, model, metric, grad=grad)
        if not np.isfinite(logp):
            break
        v_trace.append(-logp)
        t_trace.append(metric.kinetic(p))
    return {"potential": np.asarray(v_trace), "kinetic": np.asarray(t_trace)}


def _record_trajectory_riemannian(model, q0, alpha, eps, n_steps, fp_tol):
    system = SoftAbsSystem(model, alpha)
    ms = system.metric_state(q0)
    p = ms.decomp.sample_momentum(RngStream(987, 4))
    v_trace = [-ms.logp]
    t_trace = [ms.kinetic(p)]
    for _ in range(n_steps):
        ms, p, conv = generalized_leapfrog_step(system, ms, p, eps, fp_tol=fp_tol)
        if not conv:
            break
        v_trace.append(-ms.logp)
        t_trace.append(ms.kinetic(p))
    return {"potential": np.asarray(v_trace), "kinetic": np.asarray(t_trace)}


def preset_funnel_explore(outdir: Path, seed: int, scale: float, full: bool,
                          parallel: bool, render: bool) -> PresetResult:
    """Random-walk kernels stall on a wide funnel while the doubling sampler
    recovers the latent-scale marginal."""
    res = PresetResult(name="funnel-explore")
    mult = 10.0 if full else scale
    baseline = run_experiment(ExperimentConfig(
        model="funnel", n=100, sampler="nuts", adapt_delta=0.9, chains=2,
        warmup=_iters(500, scale), samples=_iters(800, mult), seed=seed,
        stream_offset=100, name="funnel100-baseline", output=str(outdir), parallel=parallel,
    ))
    res.records["baseline"] = baseline
    scales = unconstrained_scales_from(baseline.draws, FunnelModel(100))

    runs = {}
    for sampler, factor in (("rwm", 2.4 / np.sqrt(101.0)), ("mwg", 2.4)):
        cfg = ExperimentConfig(
            model="funnel", n=100, sampler=sampler, scale=factor, chains=2,
            warmup=0, samples=_iters(2500, mult), seed=seed,
            stream_offset=200 if sampler == "rwm" else 300,
            name=f"funnel100-{sampler}", output=str(outdir), parallel=parallel,
        )
        runs[sampler] = run_experiment(cfg, base_scales=scales)
    nuts25 = run_experiment(ExperimentConfig(
        model="funnel", n=25, sampler="nuts", adapt_delta=0.99, chains=4,
        warmup=_iters(1000, scale), samples=_iters(2500, mult), seed=seed,
        stream_offset=400, name="funnel25-nuts", output=str(outdir), parallel=parallel,
    ))
    runs["nuts"] = nuts25
    res.records.update(runs)

    rows = []
    for label, rec in [("rwm n=100", runs["rwm"]), ("mwg n=100", runs["mwg"]),
                       ("nuts n=25", nuts25), ("nuts n=100 baseline", baseline)]:
        v = rec.draws.param("v")
        rows.append({
            "run": label, "mean_v": float(v.mean()), "sd_v": float(v.std(ddof=1)),
            "min_v": float(v.min()), "rhat_v": split_rhat(v), "ess_v": ess(v),
            "n_divergent": rec.n_divergent,
        })
    res.tables["marginal"] = rows
    res.outputs.append(write_table_csv(
        outdir / "funnel-explore.csv", rows,
        ["run", "mean_v", "sd_v", "min_v", "rhat_v", "ess_v", "n_divergent"]))
    for name, rec in [("funnel100-rwm", runs["rwm"]), ("funnel100-mwg", runs["mwg"]),
                      ("funnel25-nuts", nuts25)]:
        res.outputs += _write_summary(outdir, name, rec)
    res.outputs += [p for rec in res.records.values() for p in rec.csv_paths]
    if render:
        by_label = {"random-walk (n=100)": runs["rwm"].draws,
                    "within-gibbs (n=100)": runs["mwg"].draws,
                    "no-u-turn (n=25)": nuts25.draws}
        res.outputs.append(plots.trace_figure(by_label, "v", outdir / "funnel-explore-traces.png",
                                              truth_sd=3.0))
        res.outputs.append(plots.funnel_scatter_figure(by_label, outdir / "funnel-explore-scatter.png"))
    return res


def preset_stepsize_scan(outdir: Path, seed: int, scale: float, full: bool,
                         parallel: bool, render: bool) -> PresetResult:
    """Inference on a funnel stabilizes only as the acceptance target rises."""
    res = PresetResult(name="stepsize-scan")
    mult = 10.0 if full else scale
    rows = relaxation_scan(
        FunnelModel(50), [0.651, 0.8, 0.9, 0.95, 0.99, 0.999],
        chains=4, warmup=_iters(700, scale), samples=_iters(1500, mult), seed=seed,
    )
    res.tables["scan"] = rows
    res.outputs.append(write_table_csv(
        outdir / "stepsize-scan.csv", rows,
        ["delta", "achieved_accept", "n_divergent", "rhat_v", "mean_v", "sd_v",
         "stepsize", "error"]))
    if render:
        res.outputs.append(plots.scan_figure(rows, outdir / "stepsize-scan.png"))
    return res


def preset_energy_trace(outdir: Path, seed: int, scale: float, full: bool,
                        parallel: bool, render: bool) -> PresetResult:
    """A constant metric caps potential-energy variation near d/2; the
    position-dependent metric's log-determinant reservoir removes the cap."""
    res = PresetResult(name="energy-trace")
    mult = 4.0 if full else scale
    ehmc = run_experiment(ExperimentConfig(
        model="funnel", n=100, sampler="ehmc", adapt_delta=0.9, n_leapfrog=64,
        chains=1, warmup=_iters(400, scale), samples=_iters(800, mult), seed=seed,
        stream_offset=10, name="energy-ehmc", output=str(outdir), parallel=parallel,
    ))
    rmhmc = run_experiment(ExperimentConfig(
        model="funnel", n=10, sampler="rmhmc", adapt_delta=0.8, n_leapfrog=48,
        eps=0.1, fp_tol=1e-8, chains=1, warmup=_iters(150, scale),
        samples=_iters(600, mult), seed=seed,
        stream_offset=20, name="energy-rmhmc", output=str(outdir), parallel=parallel,
    ))
    res.records.update({"ehmc": ehmc, "rmhmc": rmhmc})

    rows = []
    for label, rec, d in (("ehmc-funnel100", ehmc, 101), ("rmhmc-funnel10", rmhmc, 11)):
        dv = rec.draws.stats["dv_max"].reshape(-1)
        dv = dv[np.isfinite(dv)]
        rows.append({
            "run": label, "dim": d, "dv_p50": float(np.percentile(dv, 50)),
            "dv_p90": float(np.percentile(dv, 90)), "dv_max": float(dv.max()),
            "frac_above_half_dim": float(np.mean(dv > 0.5 * d)),
            "frac_above_5x_half_dim": float(np.mean(dv > 2.5 * d)),
        })
    res.tables["energy"] = rows
    res.outputs.append(write_table_csv(
        outdir / "energy-extrema.csv", rows,
        ["run", "dim", "dv_p50", "dv_p90", "dv_max",
         "frac_above_half_dim", "frac_above_5x_half_dim"]))

    # One long illustrative trajectory per sampler from the final states.
    from .samplers import ChainState

    model100 = FunnelModel(100)
    q_end = ehmc.draws.values[0, -1, :]
    st = ChainState.at(model100, q_end)
    tr_e = _record_trajectory_euclidean(model100, st, EuclideanMetric.unit(),
                                        float(np.mean(ehmc.final_eps)), 256)
    model10 = FunnelModel(10)
    tr_r = _record_trajectory_riemannian(model10, rmhmc.draws.values[0, -1, :11], 1e6,
                                         float(np.mean(rmhmc.final_eps)), 64, 1e-8)
    for label, tr in (("ehmc", tr_e), ("rmhmc", tr_r)):
        res.outputs.append(write_table_csv(
            outdir / f"energy-trace-{label}.csv",
            [{"step": i, "potential": float(v), "kinetic": float(t),
              "hamiltonian": float(v + t)}
             for i, (v, t) in enumerate(zip(tr["potential"], tr["kinetic"]))],
            ["step", "potential", "kinetic", "hamiltonian"]))
    if render:
        res.outputs.append(plots.energy_trace_figure(
            {"constant metric (funnel n=100)": tr_e,
             "position-dependent metric (funnel n=10)": tr_r},
            outdir / "energy-traces.png"))
        res.outputs.append(plots.energy_hist_figure(
            {"ehmc-funnel100": ehmc.draws.stats["dv_max"].reshape(-1),
             "rmhmc-funnel10": rmhmc.draws.stats["dv_max"].reshape(-1)},
            outdir / "energy-hist.png",
            marks={"ehmc-funnel100": 50.5, "rmhmc-funnel10": 27.5}))
    return res


def crossover_sweep(
    sigmas: tuple[float, ...],
    J: int,
    seeds: tuple[int, ...],
    outdir: Path | None,
    warmup: int,
    samples: int,
    data_seed: int = 991,
) -> list[dict]:
    """ESS(tau) per evaluation for CP and NCP across generative noise scales."""
    rows = []
    for si, sigma in enumerate(sigmas):
        data = generate_pseudodata(8.0, 3.0, sigma, J, RngStream(data_seed, si))
        base = (outdir or Path("/tmp")) / f"crossover-J{J}-sigma{sigma:g}"
        dat_path, _ = write_dataset(data, base)
        for seed_i, seed in enumerate(seeds):
            for pi, mid in enumerate(("oneway-cp", "oneway-ncp")):
                cfg = ExperimentConfig(
                    model=mid, data=str(dat_path), sampler="nuts", adapt_delta=0.9,
                    metric="diag", chains=2, warmup=warmup, samples=samples,
                    seed=seed, stream_offset=10000 * si + 100 * seed_i + 10 * pi,
                )
                rec = run_experiment(cfg)
                tau = rec.draws.param("tau")
                rows.append({
                    "sigma": sigma, "seed": seed,
                    "parameterization": "cp" if mid == "oneway-cp" else "ncp",
                    "ess_tau": ess(tau), "n_evals": rec.n_evals,
                    "ess_per_1k_evals": 1000.0 * ess(tau) / rec.n_evals,
                    "mean_tau": float(np.mean(tau)), "n_divergent": rec.n_divergent,
                })
    return rows


def preset_param_crossover(outdir: Path, seed: int, scale: float, full: bool,
                           parallel: bool, render: bool) -> PresetResult:
    """Which parameterization samples better flips as the data weaken."""
    res = PresetResult(name="param-crossover")
    mult = 5.0 if full else scale
    rows = crossover_sweep(
        sigmas=(0.5, 1.0, 2.0, 5.0, 10.0, 20.0), J=10, seeds=(seed,),
        outdir=outdir, warmup=_iters(400, scale), samples=_iters(800, mult),
    )
    # Advantage of NCP over CP per sigma.
    summary = []
    for sigma in (0.5, 1.0, 2.0, 5.0, 10.0, 20.0):
        cp = [r["ess_per_1k_evals"] for r in rows
              if r["sigma"] == sigma and r["parameterization"] == "cp"]
        ncp = [r["ess_per_1k_evals"] for r in rows
               if r["sigma"] == sigma and r["parameterization"] == "ncp"]
        summary.append({"sigma": sigma, "cp": float(np.median(cp)), "ncp": float(np.median(ncp)),
                        "ncp_over_cp": float(np.median(ncp) / np.median(cp))})
    res.tables["rows"] = rows
    res.tables["summary"] = summary
    res.outputs.append(write_table_csv(
        outdir / "param-crossover.csv", rows,
        ["sigma", "seed", "parameterization", "ess_tau", "n_evals",
         "ess_per_1k_evals", "mean_tau", "n_divergent"]))
    res.outputs.append(write_table_csv(
        outdir / "param-crossover-summary.csv", summary,
        ["sigma", "cp", "ncp", "ncp_over_cp"]))
    if render:
        res.outputs.append(plots.crossover_figure(rows, outdir / "param-crossover.png"))
    return res


def benchmark_runs(outdir: Path, seed: int, warmup: int, samples: int,
                   J: int = 200, max_depth: int = 12,
                   parallel: bool = False) -> tuple[dict, RunRecord, Path]:
    """The six benchmark rows plus the strict-acceptance baseline run."""
    from .engine import build_model

    data = generate_pseudodata(8.0, 3.0, 10.0, J, RngStream(48383823, 0))
    dat_path, _ = write_dataset(data, outdir / f"oneway-J{J}")
    baseline = run_experiment(ExperimentConfig(
        model="oneway-ncp", data=str(dat_path), sampler="nuts", adapt_delta=0.99,
        metric="diag", max_depth=max_depth, chains=2, warmup=warmup,
        samples=samples, seed=seed, stream_offset=1,
        name="bench-baseline", output=str(outdir), parallel=parallel,
    ))

    # Random-walk proposals are scaled by the baseline's marginal sd
    # estimates in each parameterization's unconstrained coordinates.
    records: dict[tuple[str, str], RunRecord] = {}
    specs = [
        ("rwm", "cp", dict(sampler="rwm", adapt_delta=0.234)),
        ("mwg", "cp", dict(sampler="mwg", adapt_delta=0.44)),
        ("nuts", "cp", dict(sampler="nuts", adapt_delta=0.999, metric="diag",
                            max_depth=max_depth)),
        ("rwm", "ncp", dict(sampler="rwm", adapt_delta=0.234)),
        ("mwg", "ncp", dict(sampler="mwg", adapt_delta=0.44)),
        ("nuts", "ncp", dict(sampler="nuts", adapt_delta=0.8, metric="diag",
                             max_depth=max_depth)),
    ]
    for i, (algorithm, par, extra) in enumerate(specs):
        model_id = "oneway-cp" if par == "cp" else "oneway-ncp"
        cfg = ExperimentConfig(
            model=model_id, data=str(dat_path), chains=2, warmup=warmup,
            samples=samples, seed=seed, stream_offset=100 * (i + 2),
            name=f"bench-{algorithm}-{par}", output=str(outdir), parallel=parallel,
            **extra,
        )
        scales = None
        if algorithm in ("rwm", "mwg"):
            scales = unconstrained_scales_from(baseline.draws, build_model(cfg))
        records[(algorithm, par)] = run_experiment(cfg, base_scales=scales)
    return records, baseline, dat_path


def preset_oneway_benchmark(outdir: Path, seed: int, scale: float, full: bool,
                            parallel: bool, render: bool) -> PresetResult:
    """Efficiency comparison of all kernels on both parameterizations, gated
    on agreement with a strict-acceptance baseline."""
    res = PresetResult(name="oneway-benchmark")
    mult = 4.0 if full else scale
    records, baseline, _ = benchmark_runs(
        outdir, seed, warmup=_iters(600, scale), samples=_iters(2500, mult),
        J=800 if full else 200, max_depth=20 if full else 12, parallel=parallel,
    )
    res.records = {f"{a}-{p}": r for (a, p), r in records.items()}
    res.records["baseline"] = baseline
    rows, text = compare_table(records, "tau", baseline=baseline)
    res.tables["table"] = rows
    res.outputs.append(write_table_csv(
        outdir / "oneway-benchmark.csv", rows,
        ["algorithm", "parameterization", "step_size", "avg_accept", "time_s",
         "time_per_ess_s", "ess", "ess_per_1k_evals", "n_divergent",
         "consistent", "excluded_because"]))
    table_txt = outdir / "oneway-benchmark.txt"
    table_txt.write_text(text + "\n")
    res.outputs.append(table_txt)
    res.notes.append(text)
    if render:
        res.outputs.append(plots.benchmark_figure(rows, outdir / "oneway-benchmark.png"))
    return res


def preset_curvature_field(outdir: Path, seed: int, scale: float, full: bool,
                           parallel: bool, render: bool) -> PresetResult:
    """Local curvature of a 2-D funnel slice, plot-ready."""
    res = PresetResult(name="curvature-field")
    n_grid = 25 if full else max(9, int(round(17 * min(scale, 1.0))))
    model = FunnelModel(1)
    thetas = np.linspace(-4.0, 4.0, n_grid)
    vs = np.linspace(-6.0, 6.0, n_grid)
    points = [(th, v) for v in vs for th in thetas]
    rows = diagnostics.curvature_field(model, np.asarray(points))
    res.tables["field"] = rows
    res.outputs.append(write_table_csv(
        outdir / "curvature-field.csv", rows,
        ["x", "y", "eval1", "evec1x", "evec1y", "eval2", "evec2x", "evec2y"]))
    if render:
        res.outputs.append(plots.curvature_figure(rows, outdir / "curvature-field.png"))
    return res


_PRESETS = {
    "funnel-explore": preset_funnel_explore,
    "stepsize-scan": preset_stepsize_scan,
    "energy-trace": preset_energy_trace,
    "param-crossover": preset_param_crossover,
    "oneway-benchmark": preset_oneway_benchmark,
    "curvature-field": preset_curvature_field,
}


def run_preset(
    name: str,
    output_dir: str | Path,
    seed: int = 1,
    scale: float = 1.0,
    full: bool = False,
    parallel: bool = False,
    render: bool = True,
) -> PresetResult:
    """Execute one named preset; returns the artifacts it wrote."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset '{name}' (choose from {PRESET_NAMES})")
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = _PRESETS[name](outdir, seed, scale, full, parallel, render)
    result.notes.append(f"completed in {time.perf_counter() - t0:.1f}s")
    return result
