"""Heuristic estimator-quality metrics plus the ground-truth evaluation
metrics used by the benchmark harness.

The four heuristic metrics score a fitted effect estimator without ground
truth: an outcome/propensity residual product form, nearest-neighbor
imputed effects, reference-estimator imputed effects, and doubly robust
imputed effects.  Each is a mean of squares, so values are nonnegative and
zero exactly when the defining residuals vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
from scipy.stats import rankdata

from ._kernels import nn_opposite_arm
from .errors import DegenerateArms, LengthMismatch

METRIC_KINDS = ("TauRisk", "NNPEHE", "PluginTau", "CFCV")


@dataclass
class FitMetricReport:
    """One heuristic metric value for one estimator on one data split."""

    metric: str
    value: float
    split_id: str
    nuisance_spec: dict = field(default_factory=dict)


def _as_vectors(*arrays):
    out = [np.asarray(a, dtype=np.float64).ravel() for a in arrays]
    n = out[0].shape[0]
    if any(v.shape[0] != n for v in out):
        raise LengthMismatch("metric inputs must have equal length")
    return out


def tau_risk(tau_hat, y, t, m_hat, p_hat) -> float:
    """Mean of ((y - m_hat) - (t - p_hat) * tau_hat)^2.

    ``m_hat`` is a per-unit outcome estimate and ``p_hat`` a per-unit
    propensity estimate, both from models fit on held-out data.
    """
    tau_hat, y, t, m_hat, p_hat = _as_vectors(tau_hat, y, t, m_hat, p_hat)
    if np.any(p_hat <= 0.0) or np.any(p_hat >= 1.0):
        raise ValueError("propensities must lie strictly inside (0, 1)")
    resid = (y - m_hat) - (t - p_hat) * tau_hat
    return float(np.mean(resid**2))


def nn_imputed_effects(x, y, t) -> np.ndarray:
    """Matched-neighbor effect imputations (2t - 1) * (y - y_nn).

    The neighbor is each unit's Euclidean nearest in the opposite arm,
    computed on standardized features.
    """
    x = np.asarray(x, dtype=np.float64)
    y, t = _as_vectors(y, t)
    if not ((t == 1).any() and (t == 0).any()):
        raise DegenerateArms("matching needs both arms nonempty")
    scale = x.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    z = (x - x.mean(axis=0)) / scale
    nn = nn_opposite_arm(z, t)
    return (2.0 * t - 1.0) * (y - y[nn])


def nn_pehe(tau_hat, x, y, t) -> float:
    """Mean squared gap between matched-neighbor imputations and tau_hat."""
    tau_tilde = nn_imputed_effects(x, y, t)
    tau_hat = _as_vectors(tau_hat)[0]
    if tau_hat.shape != tau_tilde.shape:
        raise LengthMismatch("tau_hat length must match x rows")
    return float(np.mean((tau_tilde - tau_hat) ** 2))


def plugin_tau(tau_hat, tau_tilde) -> float:
    """Mean squared gap to effects imputed by a reference estimator."""
    tau_hat, tau_tilde = _as_vectors(tau_hat, tau_tilde)
    return float(np.mean((tau_tilde - tau_hat) ** 2))


def doubly_robust_effects(y, t, m1_hat, m0_hat, p_hat) -> np.ndarray:
    """AIPW imputations m1 - m0 + t(y - m1)/p - (1 - t)(y - m0)/(1 - p)."""
    y, t, m1_hat, m0_hat, p_hat = _as_vectors(y, t, m1_hat, m0_hat, p_hat)
    if np.any(p_hat <= 0.0) or np.any(p_hat >= 1.0):
        raise ValueError("propensities must lie strictly inside (0, 1)")
    return (
        m1_hat
        - m0_hat
        + t * (y - m1_hat) / p_hat
        - (1.0 - t) * (y - m0_hat) / (1.0 - p_hat)
    )


def cfcv(tau_hat, y, t, m1_hat, m0_hat, p_hat) -> float:
    """Mean squared gap to doubly robust imputed effects."""
    tau_hat = _as_vectors(tau_hat)[0]
    tau_tilde = doubly_robust_effects(y, t, m1_hat, m0_hat, p_hat)
    if tau_hat.shape != tau_tilde.shape:
        raise LengthMismatch("tau_hat length must match nuisance vectors")
    return float(np.mean((tau_tilde - tau_hat) ** 2))


def mse_true(tau_hat, tau) -> float:
    """Ground-truth mean squared error of the effect estimate."""
    tau_hat, tau = _as_vectors(tau_hat, tau)
    return float(np.mean((tau - tau_hat) ** 2))


class InclusionError(NamedTuple):
    value: float
    defined: bool


def inclusion_error(selected, post_mask) -> InclusionError:
    """Fraction of post-treatment columns that a selector kept.

    ``selected`` holds column indices, ``post_mask`` is the boolean
    post-treatment indicator per column.  With no post-treatment columns the
    ratio is undefined; (0.0, defined=False) is returned and callers exclude
    such rows from averages.
    """
    post_mask = np.asarray(post_mask, dtype=bool)
    forbidden = set(np.flatnonzero(post_mask).tolist())
    if not forbidden:
        return InclusionError(0.0, False)
    kept = forbidden.intersection(int(c) for c in selected)
    return InclusionError(len(kept) / len(forbidden), True)


class RankSummary(NamedTuple):
    mean: float
    sd: float
    count: int


def rank_methods(
    mse_by_scm: Mapping[object, Mapping[str, float]],
) -> tuple[dict[str, RankSummary], dict[object, dict[str, float]]]:
    """Rank methods within each SCM by ascending MSE and average across SCMs.

    Ties receive the mean of the tied rank positions, so ranks within one
    SCM always sum to k(k+1)/2.

    Returns:
        (per-method summary, per-SCM rank assignment).
    """
    per_scm: dict[object, dict[str, float]] = {}
    collected: dict[str, list[float]] = {}
    for scm_id, method_mse in mse_by_scm.items():
        methods = list(method_mse)
        ranks = rankdata([method_mse[m] for m in methods], method="average")
        per_scm[scm_id] = {m: float(r) for m, r in zip(methods, ranks)}
        for m, r in zip(methods, ranks):
            collected.setdefault(m, []).append(float(r))
    summary = {
        m: RankSummary(float(np.mean(v)), float(np.std(v)), len(v))
        for m, v in collected.items()
    }
    return summary, per_scm
