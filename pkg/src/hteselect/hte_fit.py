"""Metric-guided greedy feature selection, forward and backward.

Forward selection seeds with the single best-scoring column and keeps
appending the best strict improvement; backward selection starts from the
full set and keeps removing the single most score-improving column.  Both
operate through a score callable on column tuples, so the search logic is
testable against scripted score tables, and both break ties toward the
lowest column index.

``SubsetScorer`` supplies the real score: it freezes a few inner train/
validation splits per selection run, fits each metric's nuisance yardsticks
once per split on the inner-train rows using the full candidate set, then
scores a candidate subset by refitting only the effect estimator and
averaging the per-split metric.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import estimators, fit_metrics, supervised
from .errors import HteSelectError

logger = logging.getLogger(__name__)

REL_TOL = 1e-6
INNER_TRAIN_RATIO = 0.7


@dataclass
class SelectionStep:
    column: int
    score: float
    accepted: bool


@dataclass
class SelectionTrace:
    """Full record of one greedy selection run."""

    steps: list[SelectionStep]
    final_set: tuple[int, ...]
    final_score: float
    metric: str
    direction: str

    def accepted_scores(self) -> list[float]:
        return [s.score for s in self.steps if s.accepted]

    def to_json(self) -> str:
        return json.dumps(
            {
                "direction": self.direction,
                "metric": self.metric,
                "final_set": list(self.final_set),
                "final_score": self.final_score,
                "steps": [
                    {"column": s.column, "score": s.score, "accepted": s.accepted}
                    for s in self.steps
                ],
            }
        )


def _improves(candidate: float, best: float, rel_tol: float) -> bool:
    if not math.isfinite(candidate):
        return False
    if not math.isfinite(best):
        return True
    return best - candidate > rel_tol * abs(best)


def forward_select(
    score: Callable[[tuple[int, ...]], float],
    columns: Sequence[int],
    rel_tol: float = REL_TOL,
    metric: str = "custom",
) -> SelectionTrace:
    """Greedy forward selection over ``columns``.

    Seeds with the column whose singleton subset scores lowest, then
    repeatedly appends the remaining column giving the largest strict
    improvement, stopping when no candidate improves the best score by more
    than ``rel_tol`` (relative) or no columns remain.
    """
    columns = sorted(int(c) for c in columns)
    if not columns:
        raise ValueError("forward selection needs at least one candidate column")
    steps: list[SelectionStep] = []

    best_col, best_score = None, math.inf
    for col in columns:
        value = score((col,))
        steps.append(SelectionStep(col, value, False))
        if value < best_score:
            best_col, best_score = col, value
    if best_col is None:
        raise HteSelectError("every singleton candidate failed to score")
    chosen = [best_col]
    _mark_accepted(steps, best_col, 0)

    remaining = [c for c in columns if c != best_col]
    while remaining:
        round_start = len(steps)
        cand_col, cand_score = None, math.inf
        for col in remaining:
            value = score(tuple(sorted(chosen + [col])))
            steps.append(SelectionStep(col, value, False))
            if value < cand_score:
                cand_col, cand_score = col, value
        if cand_col is None or not _improves(cand_score, best_score, rel_tol):
            break
        chosen.append(cand_col)
        best_score = cand_score
        _mark_accepted(steps, cand_col, round_start)
        remaining.remove(cand_col)

    return SelectionTrace(
        steps=steps,
        final_set=tuple(sorted(chosen)),
        final_score=best_score,
        metric=metric,
        direction="forward",
    )


def backward_select(
    score: Callable[[tuple[int, ...]], float],
    columns: Sequence[int],
    rel_tol: float = REL_TOL,
    metric: str = "custom",
) -> SelectionTrace:
    """Greedy backward elimination over ``columns``.

    Starts from the full set, then repeatedly removes the column whose
    removal lowers the score the most, rescanning after every removal and
    stopping when no removal strictly improves or one column remains.
    """
    columns = sorted(int(c) for c in columns)
    if len(columns) < 2:
        raise ValueError("backward selection needs at least two candidate columns")
    steps: list[SelectionStep] = []
    kept = list(columns)
    best_score = score(tuple(kept))

    while len(kept) > 1:
        round_start = len(steps)
        cand_col, cand_score = None, math.inf
        for col in kept:
            value = score(tuple(c for c in kept if c != col))
            steps.append(SelectionStep(col, value, False))
            if value < cand_score:
                cand_col, cand_score = col, value
        if cand_col is None or not _improves(cand_score, best_score, rel_tol):
            break
        kept.remove(cand_col)
        best_score = cand_score
        _mark_accepted(steps, cand_col, round_start)

    return SelectionTrace(
        steps=steps,
        final_set=tuple(kept),
        final_score=best_score,
        metric=metric,
        direction="backward",
    )


def _mark_accepted(steps: list[SelectionStep], column: int, round_start: int) -> None:
    for step in steps[round_start:]:
        if step.column == column:
            step.accepted = True
            return


class SubsetScorer:
    """Scores candidate column subsets against fixed metric yardsticks.

    A small number of 70/30 inner splits (default 3) is drawn once per
    instance, and every candidate subset is scored on the same splits with
    the per-split values averaged: at desk-scale sample sizes a single
    split's metric noise rivals the selection signal, and the greedy argmin
    then stalls on its own winner's-curse scores.

    Per split, the outcome yardstick and any imputed reference effects are
    fit once on the inner-train rows with the full candidate feature set, so
    every subset faces the same target.  The propensity estimate for the
    residual-product metric is refit on the subset under evaluation: a
    propensity fit on all candidates would learn to predict the treatment
    from its own descendants, collapsing the treatment-residual term exactly
    when post-treatment columns are present.  Estimator failures score +inf
    and are skipped with a warning rather than aborting the search.
    """

    def __init__(
        self,
        x: np.ndarray,
        t: np.ndarray,
        y: np.ndarray,
        metric: str,
        estimator: str = "T",
        seed: int = 0,
        inner_ratio: float = INNER_TRAIN_RATIO,
        n_splits: int = 3,
    ):
        if metric not in fit_metrics.METRIC_KINDS:
            raise ValueError(f"unknown metric {metric!r}")
        if n_splits < 1:
            raise ValueError("n_splits must be >= 1")
        self.x = np.asarray(x, dtype=np.float64)
        self.t = np.asarray(t, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.metric = metric
        self.estimator = estimator
        self.evaluations = 0

        n = self.x.shape[0]
        rng = np.random.default_rng(seed)
        cut = int(round(inner_ratio * n))
        self.splits: list[tuple[np.ndarray, np.ndarray]] = []
        for _ in range(n_splits):
            order = rng.permutation(n)
            tr, va = order[:cut], order[cut:]
            if len(set(self.t[tr])) < 2 or len(set(self.t[va])) < 2:
                raise HteSelectError("inner split lost a treatment arm")
            self.splits.append((tr, va))
        self._yards = [self._fit_yardstick(tr, va) for tr, va in self.splits]

    def _fit_yardstick(self, tr: np.ndarray, va: np.ndarray) -> dict:
        x_tr, x_va = self.x[tr], self.x[va]
        t_tr, y_tr = self.t[tr], self.y[tr]
        yard: dict = {}
        if self.metric == "TauRisk":
            m_hat = supervised.fit_ridge(x_tr, y_tr)
            yard["m_hat"] = supervised.predict(m_hat, x_va)
        elif self.metric == "NNPEHE":
            yard["tau_tilde"] = fit_metrics.nn_imputed_effects(
                x_va, self.y[va], self.t[va]
            )
        elif self.metric == "PluginTau":
            ref = estimators.fit_t_learner(x_tr, t_tr, y_tr)
            yard["tau_tilde"] = ref.predict(x_va)
        elif self.metric == "CFCV":
            arms = estimators.fit_t_learner(x_tr, t_tr, y_tr)
            p_hat = supervised.fit_logistic(x_tr, t_tr)
            yard["tau_tilde"] = fit_metrics.doubly_robust_effects(
                self.y[va],
                self.t[va],
                supervised.predict(arms.models["f1"], x_va),
                supervised.predict(arms.models["f0"], x_va),
                supervised.predict(p_hat, x_va),
            )
        return yard

    def __call__(self, cols: tuple[int, ...]) -> float:
        self.evaluations += 1
        cols = tuple(cols)
        values = []
        for (tr, va), yard in zip(self.splits, self._yards):
            try:
                est = estimators.fit_estimator(
                    self.estimator, self.x[np.ix_(tr, cols)], self.t[tr], self.y[tr]
                )
                tau_hat = est.predict(self.x[np.ix_(va, cols)])
                values.append(self._score(tau_hat, cols, tr, va, yard))
            except HteSelectError as exc:
                logger.warning("candidate %s skipped: %s", cols, exc)
                return math.inf
        return float(np.mean(values))

    def _score(self, tau_hat, cols, tr, va, yard) -> float:
        if self.metric == "TauRisk":
            p_model = supervised.fit_logistic(self.x[np.ix_(tr, cols)], self.t[tr])
            p_hat = supervised.predict(p_model, self.x[np.ix_(va, cols)])
            return fit_metrics.tau_risk(
                tau_hat, self.y[va], self.t[va], yard["m_hat"], p_hat
            )
        return fit_metrics.plugin_tau(tau_hat, yard["tau_tilde"])

    def report(self, value: float) -> fit_metrics.FitMetricReport:
        return fit_metrics.FitMetricReport(
            metric=self.metric,
            value=value,
            split_id=f"inner-val x{len(self.splits)}[{len(self.splits[0][1])}]",
            nuisance_spec={
                "outcome_lam": supervised.OUTCOME_LAMBDA,
                "propensity_lam": supervised.PROPENSITY_LAMBDA,
                "outcome_features": "all-candidates",
                "propensity_features": "subset-under-evaluation",
                "splits": len(self.splits),
            },
        )


def select_features(
    x,
    t,
    y,
    metric: str = "TauRisk",
    estimator: str = "T",
    direction: str = "forward",
    seed: int = 0,
    rel_tol: float = REL_TOL,
) -> SelectionTrace:
    """Run one full metric-guided selection on a training partition."""
    scorer = SubsetScorer(x, t, y, metric=metric, estimator=estimator, seed=seed)
    columns = range(np.asarray(x).shape[1])
    if direction == "forward":
        return forward_select(scorer, columns, rel_tol=rel_tol, metric=metric)
    if direction == "backward":
        return backward_select(scorer, columns, rel_tol=rel_tol, metric=metric)
    raise ValueError("direction must be 'forward' or 'backward'")
