"""Command-line interface.

Subcommands:
    simulate   sample one SCM and write its dataset CSV plus graph JSON
    select     run one selector on a dataset, print the chosen columns
    benchmark  run a full experiment config and write the results CSV
    report     aggregate a results CSV into rank and inclusion-error tables

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime
failures (e.g. SCM parameters no sampled graph can satisfy).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, hte_fit, structure_fit
from .errors import ConfigError, HteSelectError
from .harness import MethodSpec
from .scm_gen import (
    ScmSpec,
    dataset_from_csv,
    dataset_to_csv,
    graph_from_json,
    graph_to_json,
    make_dataset,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hteselect",
        description="Causal feature selection benchmarks for effect estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate one dataset from SCM parameters")
    sim.add_argument("--d", type=int, required=True)
    sim.add_argument("--p-e", type=float, required=True)
    sim.add_argument("--sigma", type=float, default=0.2)
    sim.add_argument("--rho", type=float, default=0.5)
    sim.add_argument("--gamma", action="store_true")
    sim.add_argument("--m", type=int, default=0)
    sim.add_argument("--p-h", type=int, default=0)
    sim.add_argument("--m-p", action="store_true")
    sim.add_argument("--n", type=int, default=2000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-data", type=Path, required=True)
    sim.add_argument("--out-graph", type=Path, required=True)

    sel = sub.add_parser("select", help="run one selector on a dataset CSV")
    sel.add_argument("--data", type=Path, required=True)
    sel.add_argument("--selector", choices=harness.SELECTORS, required=True)
    sel.add_argument("--estimator", default="T")
    sel.add_argument("--metric", default="TauRisk")
    sel.add_argument("--graph", type=Path, help="graph JSON (needed by Oracle selectors)")
    sel.add_argument("--alpha", type=float, default=0.05)
    sel.add_argument("--max-cond", type=int, default=3)
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--trace-out", type=Path)

    bench = sub.add_parser("benchmark", help="run an experiment config JSON")
    bench.add_argument("--config", type=Path, required=True)
    bench.add_argument("--out", type=Path, required=True)
    bench.add_argument("--traces", type=Path)
    bench.add_argument("--workers", type=int, help="override config worker count")

    rep = sub.add_parser("report", help="aggregate a results CSV")
    rep.add_argument("--results", type=Path, required=True)
    return parser


def _cmd_simulate(args) -> int:
    spec = ScmSpec(
        d=args.d,
        p_e=args.p_e,
        sigma=args.sigma,
        rho=args.rho,
        gamma=args.gamma,
        m=args.m,
        p_h=args.p_h,
        m_p=args.m_p,
        n=args.n,
        seed=args.seed,
    )
    graph, dataset, attempts = make_dataset(spec)
    args.out_data.write_text(dataset_to_csv(dataset))
    args.out_graph.write_text(graph_to_json(graph, spec))
    print(
        f"wrote {args.out_data} ({dataset.x.shape[0]} rows, "
        f"{dataset.n_features} features) and {args.out_graph} "
        f"(treatment node {graph.t_node}, outcome node {graph.y_node}, "
        f"{attempts} sampling attempt(s))"
    )
    return 0


def _cmd_select(args) -> int:
    dataset = dataset_from_csv(args.data.read_text())
    x, t, y = dataset.x, dataset.t, dataset.y
    k = x.shape[1]
    cfg = structure_fit.CiTestConfig(alpha=args.alpha, max_cond=args.max_cond)
    trace: dict = {}
    if args.selector == "None":
        selected = tuple(range(k))
    elif args.selector in ("HteFitF", "HteFitB"):
        direction = "forward" if args.selector == "HteFitF" else "backward"
        result = hte_fit.select_features(
            x, t, y, metric=args.metric, estimator=args.estimator,
            direction=direction, seed=args.seed,
        )
        selected, trace = result.final_set, json.loads(result.to_json())
    elif args.selector == "StructureFit":
        stacked = np.hstack([x, t[:, None], y[:, None]])
        result = structure_fit.structure_fit(
            stacked, t_col=k, y_col=k + 1, candidates=range(k), cfg=cfg
        )
        selected, trace = result.selected, json.loads(result.graph.to_json())
    elif args.selector == "HteFS":
        selected, trace = harness.hte_fs(
            x, t, y, metric=args.metric, estimator=args.estimator,
            seed=args.seed, cfg=cfg,
        )
    else:  # oracle selectors need the generating graph
        if args.graph is None:
            raise ConfigError(f"{args.selector} requires --graph")
        graph, _ = graph_from_json(args.graph.read_text())
        mode = args.selector.removeprefix("Oracle")
        result = structure_fit.oracle_adjustment(graph, mode)
        col_of_node = {node: j for j, node in enumerate(graph.feature_nodes())}
        selected = tuple(sorted(col_of_node[n] for n in result.nodes))
        trace = {"nodes": sorted(result.nodes)}
    print(" ".join(str(c) for c in selected))
    if args.trace_out is not None:
        args.trace_out.write_text(json.dumps(trace, indent=2))
    return 0


def _cmd_benchmark(args) -> int:
    config = harness.config_from_json(args.config.read_text())
    if args.workers is not None:
        config = harness.ExperimentConfig(
            base=config.base,
            methods=config.methods,
            replicates=config.replicates,
            grid=config.grid,
            split_ratio=config.split_ratio,
            master_seed=config.master_seed,
            alpha=config.alpha,
            max_cond=config.max_cond,
            workers=args.workers,
            record_timing=config.record_timing,
        )
    rows, traces = harness.run_experiment(config)
    args.out.write_text(harness.rows_to_csv(rows))
    if args.traces is not None:
        args.traces.write_text(json.dumps(traces, indent=2, sort_keys=True))
    summary = harness.report(rows)
    print(summary.format())
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_report(args) -> int:
    rows = harness.rows_from_csv(args.results.read_text())
    if not rows:
        raise ConfigError("results CSV contains no rows")
    print(harness.report(rows).format())
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "select": _cmd_select,
    "benchmark": _cmd_benchmark,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except HteSelectError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
