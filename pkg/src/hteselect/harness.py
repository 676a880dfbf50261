"""End-to-end pipeline and benchmark harness.

Combines the two selection stages (metric-guided greedy selection followed
by local-structure pruning of discovered treatment descendants), runs them
against vanilla and oracle baselines over replicated synthetic SCMs, and
aggregates per-SCM mean-squared-error ranks and inclusion errors into a
results table.

Everything is deterministic given the master seed: replicate seeds come
from a splittable seed tree, so replicates can run in worker processes and
still merge into identical output.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimators, fit_metrics, hte_fit, structure_fit, supervised
from .errors import ConfigError, HteSelectError
from .scm_gen import Dataset, ScmSpec, make_dataset

SELECTORS = (
    "None",
    "HteFitF",
    "HteFitB",
    "StructureFit",
    "HteFS",
    "OracleParents",
    "OracleValid",
    "OracleOSet",
)
_METRIC_SELECTORS = {"HteFitF", "HteFitB", "HteFS"}

RESULT_COLUMNS = (
    "scm_id",
    "method",
    "selector",
    "estimator",
    "metric",
    "n_selected",
    "selected",
    "mse",
    "tau_risk",
    "inclusion_error",
    "rank",
    "wall_millis",
    "flags",
)


@dataclass(frozen=True)
class MethodSpec:
    selector: str
    estimator: str = "T"
    metric: str = "TauRisk"

    def __post_init__(self):
        if self.selector not in SELECTORS:
            raise ConfigError(f"unknown selector {self.selector!r}")
        if self.estimator not in estimators.ESTIMATOR_KINDS:
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.metric not in fit_metrics.METRIC_KINDS:
            raise ConfigError(f"unknown metric {self.metric!r}")

    @property
    def method_id(self) -> str:
        if self.selector in _METRIC_SELECTORS:
            return f"{self.selector}({self.metric})+{self.estimator}"
        return f"{self.selector}+{self.estimator}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Benchmark definition: an SCM family, replicates, and methods."""

    base: dict
    methods: tuple[MethodSpec, ...]
    replicates: int = 1
    grid: dict = field(default_factory=dict)
    split_ratio: float = 0.8
    master_seed: int = 0
    alpha: float = 0.05
    max_cond: int = 3
    workers: int = 1
    record_timing: bool = True

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must lie in (0, 1)")

    def grid_cells(self) -> list[dict]:
        """Cartesian product of grid overrides, applied over the base spec."""
        if not self.grid:
            return [dict(self.base)]
        keys = sorted(self.grid)
        cells = []
        for values in itertools.product(*(self.grid[k] for k in keys)):
            cell = dict(self.base)
            cell.update(dict(zip(keys, values)))
            cells.append(cell)
        return cells

    def spec_for_replicate(self, replicate: int) -> ScmSpec:
        cells = self.grid_cells()
        cell = dict(cells[replicate % len(cells)])
        cell["seed"] = _derived_seed(self.master_seed, replicate, 0)
        try:
            return ScmSpec(**cell)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid SCM parameters: {exc}") from exc


def _derived_seed(master_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class BenchmarkRow:
    """One evaluated (SCM, method) cell."""

    scm_id: str
    method: str
    selector: str
    estimator: str
    metric: str
    n_selected: int
    selected: tuple[int, ...]
    mse: float
    tau_risk: float
    inclusion_error: float
    ie_defined: bool
    rank: float = 0.0
    wall_millis: int = 0
    flags: tuple[str, ...] = ()

    @property
    def failed(self) -> bool:
        return any(f.startswith("failed") for f in self.flags)


# ---------------------------------------------------------------------------
# the combined two-stage pipeline
# ---------------------------------------------------------------------------


def hte_fs(
    x: np.ndarray,
    t: np.ndarray,
    y: np.ndarray,
    metric: str = "TauRisk",
    estimator: str = "T",
    seed: int = 0,
    cfg: structure_fit.CiTestConfig | None = None,
    direction: str = "forward",
) -> tuple[tuple[int, ...], dict]:
    """Greedy metric selection followed by structure-based pruning.

    Returns the final column set and a combined trace.  When pruning would
    empty the set, the greedy-stage output is kept and flagged, since
    estimation needs at least one column.
    """
    trace = hte_fit.select_features(
        x, t, y, metric=metric, estimator=estimator, direction=direction, seed=seed
    )
    stage_one = trace.final_set
    k = np.asarray(x).shape[1]
    stacked = np.hstack(
        [np.asarray(x, float), np.asarray(t, float)[:, None], np.asarray(y, float)[:, None]]
    )
    discovery = structure_fit.structure_fit(
        stacked, t_col=k, y_col=k + 1, candidates=stage_one, cfg=cfg
    )
    flags: list[str] = []
    selected = discovery.selected
    if not selected:
        selected = stage_one
        flags.append("fallback_stage_one")
    combined = {
        "stage_one": json.loads(trace.to_json()),
        "structure": json.loads(discovery.graph.to_json()),
        "forbidden": sorted(discovery.forbidden),
        "selected": list(selected),
        "flags": flags,
    }
    return tuple(selected), combined


# ---------------------------------------------------------------------------
# selector dispatch
# ---------------------------------------------------------------------------


def _run_selector(
    method: MethodSpec,
    x_tr: np.ndarray,
    t_tr: np.ndarray,
    y_tr: np.ndarray,
    graph,
    dataset: Dataset,
    cfg: structure_fit.CiTestConfig,
    seed: int,
) -> tuple[tuple[int, ...], dict, list[str]]:
    k = x_tr.shape[1]
    all_cols = tuple(range(k))
    if method.selector == "None":
        return all_cols, {}, []
    if method.selector in ("HteFitF", "HteFitB"):
        direction = "forward" if method.selector == "HteFitF" else "backward"
        trace = hte_fit.select_features(
            x_tr, t_tr, y_tr,
            metric=method.metric, estimator=method.estimator,
            direction=direction, seed=seed,
        )
        return trace.final_set, json.loads(trace.to_json()), []
    if method.selector == "StructureFit":
        stacked = np.hstack([x_tr, t_tr[:, None], y_tr[:, None]])
        result = structure_fit.structure_fit(
            stacked, t_col=k, y_col=k + 1, candidates=all_cols, cfg=cfg
        )
        flags = [] if result.selected else ["empty_selection"]
        return result.selected, json.loads(result.graph.to_json()), flags
    if method.selector == "HteFS":
        selected, combined = hte_fs(
            x_tr, t_tr, y_tr,
            metric=method.metric, estimator=method.estimator, seed=seed, cfg=cfg,
        )
        return selected, combined, list(combined["flags"])
    if method.selector.startswith("Oracle"):
        mode = method.selector.removeprefix("Oracle")
        result = structure_fit.oracle_adjustment(graph, mode)
        col_of_node = {node: j for j, node in enumerate(dataset.feature_nodes)}
        cols = tuple(sorted(col_of_node[n] for n in result.nodes if n in col_of_node))
        flags = ["empty_causal_path"] if result.empty_causal_path else []
        return cols, {"nodes": sorted(result.nodes)}, flags
    raise ConfigError(f"unknown selector {method.selector!r}")


# ---------------------------------------------------------------------------
# replicate execution
# ---------------------------------------------------------------------------


def _run_replicate(config: ExperimentConfig, replicate: int) -> tuple[list[BenchmarkRow], dict]:
    spec = config.spec_for_replicate(replicate)
    graph, dataset, _ = make_dataset(spec)
    scm_id = f"scm{replicate:04d}"
    cfg = structure_fit.CiTestConfig(alpha=config.alpha, max_cond=config.max_cond)

    n = dataset.x.shape[0]
    split_rng = np.random.default_rng(_derived_seed(config.master_seed, replicate, 1))
    order = split_rng.permutation(n)
    cut = int(round(config.split_ratio * n))
    train, test = order[:cut], order[cut:]
    x_tr, t_tr, y_tr = dataset.x[train], dataset.t[train], dataset.y[train]
    x_te, t_te, y_te = dataset.x[test], dataset.t[test], dataset.y[test]
    tau_te = dataset.tau[test]

    # shared held-out yardstick for the reported risk metric
    m_hat = supervised.predict(supervised.fit_ridge(x_tr, y_tr), x_te)
    p_hat = supervised.predict(supervised.fit_logistic(x_tr, t_tr), x_te)

    rows: list[BenchmarkRow] = []
    traces: dict = {}
    for method in config.methods:
        # stable per-method stream: independent of the method list ordering
        method_key = zlib.crc32(method.method_id.encode())
        seed = _derived_seed(config.master_seed, replicate, 2, method_key)
        started = time.perf_counter_ns()
        flags: list[str] = []
        try:
            selected, trace, flags = _run_selector(
                method, x_tr, t_tr, y_tr, graph, dataset, cfg, seed
            )
            if not selected:
                raise HteSelectError("selector returned no columns")
            cols = list(selected)
            est = estimators.fit_estimator(
                method.estimator, x_tr[:, cols], t_tr, y_tr
            )
            tau_hat = est.predict(x_te[:, cols])
            mse = fit_metrics.mse_true(tau_hat, tau_te)
            risk = fit_metrics.tau_risk(tau_hat, y_te, t_te, m_hat, p_hat)
            ie = fit_metrics.inclusion_error(selected, dataset.post_treatment_mask)
            if not ie.defined:
                flags.append("ie_undefined")
            row = BenchmarkRow(
                scm_id=scm_id,
                method=method.method_id,
                selector=method.selector,
                estimator=method.estimator,
                metric=method.metric if method.selector in _METRIC_SELECTORS else "",
                n_selected=len(selected),
                selected=tuple(selected),
                mse=mse,
                tau_risk=risk,
                inclusion_error=ie.value,
                ie_defined=ie.defined,
                flags=tuple(flags),
            )
            traces[f"{scm_id}/{method.method_id}"] = trace
        except HteSelectError as exc:
            row = BenchmarkRow(
                scm_id=scm_id,
                method=method.method_id,
                selector=method.selector,
                estimator=method.estimator,
                metric=method.metric if method.selector in _METRIC_SELECTORS else "",
                n_selected=0,
                selected=(),
                mse=float("nan"),
                tau_risk=float("nan"),
                inclusion_error=0.0,
                ie_defined=False,
                flags=tuple(flags) + (f"failed:{type(exc).__name__}",),
            )
        elapsed_ms = (time.perf_counter_ns() - started) // 1_000_000
        row.wall_millis = int(elapsed_ms) if config.record_timing else 0
        rows.append(row)
    return rows, traces


def _replicate_worker(payload):
    config, replicate = payload
    return _run_replicate(config, replicate)


def assign_ranks(rows: list[BenchmarkRow]) -> None:
    """Within-SCM MSE ranks; ties share the mean rank, failures rank last."""
    by_scm: dict[str, list[BenchmarkRow]] = {}
    for row in rows:
        by_scm.setdefault(row.scm_id, []).append(row)
    for scm_rows in by_scm.values():
        valid = [r for r in scm_rows if not r.failed]
        if valid:
            _, per_scm = fit_metrics.rank_methods({"_": {r.method: r.mse for r in valid}})
            for r in valid:
                r.rank = per_scm["_"][r.method]
        worst = max((r.rank for r in valid), default=0.0)
        for r in scm_rows:
            if r.failed:
                r.rank = worst + 1.0


def run_experiment(config: ExperimentConfig) -> tuple[list[BenchmarkRow], dict]:
    """Execute every replicate and method cell; returns ranked rows + traces."""
    payloads = [(config, r) for r in range(config.replicates)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_replicate_worker, payloads))
    else:
        outcomes = [_run_replicate(config, r) for r in range(config.replicates)]
    rows: list[BenchmarkRow] = []
    traces: dict = {}
    for rep_rows, rep_traces in outcomes:
        rows.extend(rep_rows)
        traces.update(rep_traces)
    assign_ranks(rows)
    return rows, traces


# ---------------------------------------------------------------------------
# persistence and reporting
# ---------------------------------------------------------------------------


def rows_to_csv(rows: list[BenchmarkRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in rows:
        writer.writerow(
            [
                r.scm_id,
                r.method,
                r.selector,
                r.estimator,
                r.metric,
                r.n_selected,
                ";".join(str(c) for c in r.selected),
                repr(float(r.mse)),
                repr(float(r.tau_risk)),
                repr(float(r.inclusion_error)),
                repr(float(r.rank)),
                r.wall_millis,
                ";".join(r.flags),
            ]
        )
    return buf.getvalue()


def rows_from_csv(text: str) -> list[BenchmarkRow]:
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for rec in reader:
        flags = tuple(f for f in rec["flags"].split(";") if f)
        selected = tuple(int(c) for c in rec["selected"].split(";") if c)
        rows.append(
            BenchmarkRow(
                scm_id=rec["scm_id"],
                method=rec["method"],
                selector=rec["selector"],
                estimator=rec["estimator"],
                metric=rec["metric"],
                n_selected=int(rec["n_selected"]),
                selected=selected,
                mse=float(rec["mse"]),
                tau_risk=float(rec["tau_risk"]),
                inclusion_error=float(rec["inclusion_error"]),
                ie_defined="ie_undefined" not in flags and not any(
                    f.startswith("failed") for f in flags
                ),
                rank=float(rec["rank"]),
                wall_millis=int(rec["wall_millis"]),
                flags=flags,
            )
        )
    return rows


@dataclass
class ReportSummary:
    rank_table: dict[str, fit_metrics.RankSummary]
    inclusion: dict[str, float]
    random_reference: float = 0.5

    def format(self) -> str:
        lines = ["method                          mean_rank    sd  inclusion_error"]
        for method in sorted(self.rank_table, key=lambda m: self.rank_table[m].mean):
            rs = self.rank_table[method]
            ie = self.inclusion.get(method)
            ie_txt = f"{ie:.3f}" if ie is not None else "  n/a"
            lines.append(f"{method:<32}{rs.mean:>8.2f}{rs.sd:>7.2f}    {ie_txt}")
        lines.append(f"(random half-selection reference inclusion error: {self.random_reference})")
        return "\n".join(lines)


def report(rows: list[BenchmarkRow]) -> ReportSummary:
    """Per-method mean rank and mean inclusion error over defined rows."""
    ranks: dict[str, list[float]] = {}
    ies: dict[str, list[float]] = {}
    for r in rows:
        ranks.setdefault(r.method, []).append(r.rank)
        if r.ie_defined:
            ies.setdefault(r.method, []).append(r.inclusion_error)
    table = {
        m: fit_metrics.RankSummary(float(np.mean(v)), float(np.std(v)), len(v))
        for m, v in ranks.items()
    }
    inclusion = {m: float(np.mean(v)) for m, v in ies.items()}
    return ReportSummary(rank_table=table, inclusion=inclusion)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def config_from_json(text: str) -> ExperimentConfig:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "scm" not in payload:
        raise ConfigError("config must be an object with an 'scm' section")
    try:
        methods = tuple(
            MethodSpec(
                selector=m["selector"],
                estimator=m.get("estimator", "T"),
                metric=m.get("metric", "TauRisk"),
            )
            for m in payload.get("methods", [])
        )
        config = ExperimentConfig(
            base=dict(payload["scm"]),
            methods=methods,
            replicates=int(payload.get("replicates", 1)),
            grid=dict(payload.get("grid", {})),
            split_ratio=float(payload.get("split_ratio", 0.8)),
            master_seed=int(payload.get("master_seed", 0)),
            alpha=float(payload.get("alpha", 0.05)),
            max_cond=int(payload.get("max_cond", 3)),
            workers=int(payload.get("workers", 1)),
            record_timing=bool(payload.get("record_timing", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    # fail fast on unusable SCM parameters
    config.spec_for_replicate(0)
    return config
