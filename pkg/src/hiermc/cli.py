"""Command-line driver: run, preset, summarize, compare, generate-data.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 sampler
incompatibility, 1 anything else. Error messages name the offending key.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import presets
from .config import ConfigError, DataError, ExperimentConfig, parse_config
from .diagnostics import format_summary_table, summarize
from .drawsio import read_draws, write_table_csv
from .engine import run_experiment
from .models import generate_pseudodata, write_dataset
from .numerics import RngStream
from .riemannian import SamplerIncompatibleError


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--model", choices=["funnel", "oneway-cp", "oneway-ncp"])
    p.add_argument("--n", type=int, help="funnel latent count")
    p.add_argument("--data", help="dataset file (.dat or .json) for one-way models")
    p.add_argument("--sampler", choices=["rwm", "mwg", "ehmc", "nuts", "rmhmc"])
    p.add_argument("--eps", type=float, help="fixed step size")
    p.add_argument("--adapt-delta", dest="adapt_delta", type=float,
                   help="dual-averaging target acceptance")
    p.add_argument("--n-leapfrog", dest="n_leapfrog", type=int,
                   help="static step count for ehmc/rmhmc")
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--alpha", type=float, help="SoftAbs regularization strength")
    p.add_argument("--scale", type=float, help="global proposal factor for rwm/mwg")
    p.add_argument("--metric", choices=["unit", "diag"])
    p.add_argument("--chains", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="output directory for draws CSVs and metadata")
    p.add_argument("--name", help="run name used in output file names")
    p.add_argument("--save-warmup", dest="save_warmup", action="store_const", const=True)
    p.add_argument("--parallel", action="store_const", const=True,
                   help="run chains in parallel processes")


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    keys = ("model", "n", "data", "sampler", "eps", "adapt_delta", "n_leapfrog",
            "max_depth", "alpha", "scale", "metric", "chains", "warmup", "samples",
            "thin", "seed", "output", "name", "save_warmup", "parallel")
    flags = {k: getattr(args, k) for k in keys}
    return parse_config(flags, config_file=args.config)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    record = run_experiment(cfg)
    result = summarize(record.draws, wall_time=record.wall_time, n_evals=record.n_evals)
    print(format_summary_table(result))
    print(f"mean acceptance: {record.mean_accept:.4f}   "
          f"final step size: {np.mean(record.final_eps):.6g}   "
          f"evaluations: {record.n_evals}")
    if record.csv_paths:
        print("wrote:")
        for p in record.csv_paths:
            print(f"  {p}")
    return 0


def _cmd_generate_data(args: argparse.Namespace) -> int:
    rng = RngStream(args.seed, 0)
    data = generate_pseudodata(args.mu, args.tau, args.sigma, args.J, rng)
    txt, jsn = write_dataset(data, args.output)
    print(f"wrote {txt} and {jsn} (J={data.J})")
    return 0


def _collect_chain_csvs(paths: list[str]) -> list[Path]:
    out: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            found = sorted(p.glob("*-chain*.csv"))
            if not found:
                raise DataError(f"no '*-chain*.csv' draw files found in {p}")
            out.extend(found)
        elif p.exists():
            out.append(p)
        else:
            raise DataError(f"draws file not found: {p}")
    return out


def _cmd_summarize(args: argparse.Namespace) -> int:
    paths = _collect_chain_csvs(args.draws)
    draws = read_draws(paths)
    result = summarize(draws, wall_time=args.wall_time, n_evals=args.evals)
    print(format_summary_table(result))
    if args.output:
        rows = [{"name": r.name, "mean": r.mean, "sd": r.sd, "q5": r.q5,
                 "q50": r.q50, "q95": r.q95, "ess": r.ess, "rhat": r.rhat}
                for r in [result.lp_row] + result.rows]
        path = write_table_csv(Path(args.output), rows,
                               ["name", "mean", "sd", "q5", "q50", "q95", "ess", "rhat"])
        print(f"wrote {path}")
    if args.plot:
        from . import plots

        param = args.plot_param or draws.names[-1]
        fig = plots.trace_figure({"draws": draws}, param,
                                 Path(args.plot))
        print(f"wrote {fig}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    import json

    from .presets import compare_table

    records = {}

    def load(run_dir: str):
        d = Path(run_dir)
        metas = sorted(d.glob("*-meta.json"))
        if not metas:
            raise DataError(f"no '*-meta.json' run metadata found in {d}")
        meta = json.loads(metas[0].read_text())
        name = meta["config"]["name"]
        draws = read_draws(sorted(d.glob(f"{name}-chain*.csv")))
        return meta, draws

    class _Shim:
        def __init__(self, meta, draws):
            self.draws = draws
            self.wall_time = meta["wall_time"]
            self.final_eps = meta["final_eps"]
            self.n_evals = meta["n_evals"]
            self.mean_accept = meta["mean_accept"]
            self.n_divergent = meta["n_divergent"]

    baseline = None
    if args.baseline:
        baseline = _Shim(*load(args.baseline))
    for spec in args.runs:
        label, _, path = spec.rpartition("=")
        if not label:
            label, path = Path(spec).name, spec
        meta, draws = load(path)
        records[(label, meta["config"]["model"])] = _Shim(meta, draws)
    rows, text = compare_table(records, args.param, baseline=baseline)
    print(text)
    if args.output:
        path = write_table_csv(
            Path(args.output), rows,
            ["algorithm", "parameterization", "step_size", "avg_accept", "time_s",
             "time_per_ess_s", "ess", "ess_per_1k_evals", "n_divergent",
             "consistent", "excluded_because"])
        print(f"wrote {path}")
    return 0


def _cmd_preset(args: argparse.Namespace) -> int:
    result = presets.run_preset(
        args.name, args.output, seed=args.seed, scale=args.scale,
        full=args.full, parallel=bool(args.parallel), render=not args.no_plots,
    )
    for note in result.notes:
        print(note)
    print("artifacts:")
    for p in result.outputs:
        print(f"  {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiermc",
        description="MCMC experiments on hierarchical targets with difficult geometry",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_run_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_gen = sub.add_parser("generate-data", help="write a grouped-observation dataset")
    p_gen.add_argument("--mu", type=float, default=8.0)
    p_gen.add_argument("--tau", type=float, default=3.0)
    p_gen.add_argument("--sigma", type=float, default=10.0)
    p_gen.add_argument("--J", type=int, default=800)
    p_gen.add_argument("--seed", type=int, default=48383823)
    p_gen.add_argument("--output", required=True, help="output base path (writes .dat and .json)")
    p_gen.set_defaults(func=_cmd_generate_data)

    p_sum = sub.add_parser("summarize", help="summarize draws CSVs or a run directory")
    p_sum.add_argument("draws", nargs="+", help="per-chain CSV files or a run directory")
    p_sum.add_argument("--wall-time", dest="wall_time", type=float, default=0.0)
    p_sum.add_argument("--evals", type=int, default=0)
    p_sum.add_argument("--output", help="write the summary table as CSV here")
    p_sum.add_argument("--plot", help="also render a trace figure to this path")
    p_sum.add_argument("--plot-param", dest="plot_param", help="parameter for --plot")
    p_sum.set_defaults(func=_cmd_summarize)

    p_cmp = sub.add_parser("compare", help="efficiency table across run directories")
    p_cmp.add_argument("runs", nargs="+", help="run directories, optionally LABEL=DIR")
    p_cmp.add_argument("--param", default="tau", help="slow parameter for efficiency columns")
    p_cmp.add_argument("--baseline", help="baseline run directory for the consistency gate")
    p_cmp.add_argument("--output", help="write the comparison as CSV here")
    p_cmp.set_defaults(func=_cmd_compare)

    p_pre = sub.add_parser("preset", help="run a named experiment bundle")
    p_pre.add_argument("name", choices=list(presets.PRESET_NAMES))
    p_pre.add_argument("--output", required=True)
    p_pre.add_argument("--seed", type=int, default=1)
    p_pre.add_argument("--scale", type=float, default=1.0,
                       help="multiply iteration counts (quick looks)")
    p_pre.add_argument("--full", action="store_true", help="long-run settings")
    p_pre.add_argument("--parallel", action="store_const", const=True)
    p_pre.add_argument("--no-plots", dest="no_plots", action="store_true")
    p_pre.set_defaults(func=_cmd_preset)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except SamplerIncompatibleError as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
