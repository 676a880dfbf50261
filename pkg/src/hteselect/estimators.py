"""Meta-learner CATE estimators over the ridge/logistic core.

Four constructions are provided: a single-model learner with explicit
treatment and treatment-by-feature interaction columns (S), per-arm outcome
models (T), imputed-effect regression with propensity weighting (X), and a
two-fold cross-fit doubly robust learner (DR).  Each fit returns a
``CateEstimator`` exposing per-unit effect prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import supervised
from .errors import DegenerateArms, DimensionMismatch
from .fit_metrics import doubly_robust_effects
from .supervised import LinearModel, fit_logistic, fit_ridge

ESTIMATOR_KINDS = ("S", "T", "X", "DR")


@dataclass
class CateEstimator:
    """A fitted effect estimator with its component models.

    ``feature_columns`` records which dataset columns the estimator was fit
    on (bookkeeping for traces); prediction takes a matrix with exactly that
    many columns, already subset by the caller.
    """

    kind: str
    feature_dim: int
    models: dict[str, LinearModel] = field(default_factory=dict)
    feature_columns: tuple[int, ...] | None = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.feature_dim:
            raise DimensionMismatch(
                f"{self.kind}-learner expects {self.feature_dim} columns"
            )
        return _PREDICTORS[self.kind](self, x)


def predict_cate(estimator: CateEstimator, x: np.ndarray) -> np.ndarray:
    """Per-unit effect prediction; finite for any row in the fitted space."""
    return estimator.predict(x)


def _check_arms(t: np.ndarray) -> None:
    if not ((t == 1).any() and (t == 0).any()):
        raise DegenerateArms("both treatment arms must be nonempty")


def _s_design(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    # Centered treatment coding keeps the fit exactly antisymmetric under
    # label swaps; the effect formula is unchanged.
    tc = (t - 0.5)[:, None]
    return np.hstack([x, tc, tc * x])


def fit_s_learner(x, t, y, lam: float = supervised.OUTCOME_LAMBDA) -> CateEstimator:
    """One ridge model on [x, t, t*x]; effect = f(x, 1) - f(x, 0)."""
    x, t, y = np.asarray(x, float), np.asarray(t, float), np.asarray(y, float)
    _check_arms(t)
    model = fit_ridge(_s_design(x, t), y, lam)
    return CateEstimator(kind="S", feature_dim=x.shape[1], models={"joint": model})


def _predict_s(est: CateEstimator, x: np.ndarray) -> np.ndarray:
    ones = np.ones(x.shape[0])
    f1 = supervised.predict(est.models["joint"], _s_design(x, ones))
    f0 = supervised.predict(est.models["joint"], _s_design(x, 1.0 - ones))
    return f1 - f0


def fit_t_learner(x, t, y, lam: float = supervised.OUTCOME_LAMBDA) -> CateEstimator:
    """Separate ridge per arm; effect = f1(x) - f0(x)."""
    x, t, y = np.asarray(x, float), np.asarray(t, float), np.asarray(y, float)
    _check_arms(t)
    treated, control = t == 1, t == 0
    return CateEstimator(
        kind="T",
        feature_dim=x.shape[1],
        models={
            "f1": fit_ridge(x[treated], y[treated], lam),
            "f0": fit_ridge(x[control], y[control], lam),
        },
    )


def _predict_t(est: CateEstimator, x: np.ndarray) -> np.ndarray:
    return supervised.predict(est.models["f1"], x) - supervised.predict(
        est.models["f0"], x
    )


def fit_x_learner(
    x,
    t,
    y,
    lam: float = supervised.OUTCOME_LAMBDA,
    propensity_lam: float = supervised.PROPENSITY_LAMBDA,
) -> CateEstimator:
    """Two-stage construction with propensity-weighted effect models.

    Stage one fits per-arm outcome models.  Stage two regresses the imputed
    effects D1 = y1 - f0(x1) and D0 = f1(x0) - y0 onto features, and the
    prediction is the pointwise convex combination
    p(x) * g0(x) + (1 - p(x)) * g1(x).
    """
    x, t, y = np.asarray(x, float), np.asarray(t, float), np.asarray(y, float)
    _check_arms(t)
    treated, control = t == 1, t == 0
    f1 = fit_ridge(x[treated], y[treated], lam)
    f0 = fit_ridge(x[control], y[control], lam)
    d1 = y[treated] - supervised.predict(f0, x[treated])
    d0 = supervised.predict(f1, x[control]) - y[control]
    return CateEstimator(
        kind="X",
        feature_dim=x.shape[1],
        models={
            "f1": f1,
            "f0": f0,
            "g1": fit_ridge(x[treated], d1, lam),
            "g0": fit_ridge(x[control], d0, lam),
            "propensity": fit_logistic(x, t, propensity_lam),
        },
    )


def _predict_x(est: CateEstimator, x: np.ndarray) -> np.ndarray:
    p = supervised.predict(est.models["propensity"], x)
    g1 = supervised.predict(est.models["g1"], x)
    g0 = supervised.predict(est.models["g0"], x)
    return p * g0 + (1.0 - p) * g1


def fit_dr_learner(
    x,
    t,
    y,
    lam: float = supervised.OUTCOME_LAMBDA,
    propensity_lam: float = supervised.PROPENSITY_LAMBDA,
) -> CateEstimator:
    """Two-fold cross-fit doubly robust learner.

    Folds are assigned by row parity (deterministic).  Pseudo-outcomes on
    each fold use nuisance models fit on the other fold; the final stage is
    one ridge of the pseudo-outcomes on features over all rows.

    Raises:
        DegenerateArms: an arm is empty within a fold.
    """
    x, t, y = np.asarray(x, float), np.asarray(t, float), np.asarray(y, float)
    _check_arms(t)
    n = x.shape[0]
    fold = np.arange(n) % 2
    phi = np.empty(n)
    for current in (0, 1):
        fit_idx = fold != current
        apply_idx = fold == current
        xf, tf, yf = x[fit_idx], t[fit_idx], y[fit_idx]
        if not ((tf == 1).any() and (tf == 0).any()):
            raise DegenerateArms("cross-fitting fold lost a treatment arm")
        m1 = fit_ridge(xf[tf == 1], yf[tf == 1], lam)
        m0 = fit_ridge(xf[tf == 0], yf[tf == 0], lam)
        prop = fit_logistic(xf, tf, propensity_lam)
        xa = x[apply_idx]
        phi[apply_idx] = doubly_robust_effects(
            y[apply_idx],
            t[apply_idx],
            supervised.predict(m1, xa),
            supervised.predict(m0, xa),
            supervised.predict(prop, xa),
        )
    return CateEstimator(
        kind="DR", feature_dim=x.shape[1], models={"effect": fit_ridge(x, phi, lam)}
    )


def _predict_dr(est: CateEstimator, x: np.ndarray) -> np.ndarray:
    return supervised.predict(est.models["effect"], x)


_PREDICTORS: dict[str, Callable] = {
    "S": _predict_s,
    "T": _predict_t,
    "X": _predict_x,
    "DR": _predict_dr,
}

_FITTERS: dict[str, Callable] = {
    "S": fit_s_learner,
    "T": fit_t_learner,
    "X": fit_x_learner,
    "DR": fit_dr_learner,
}


def fit_estimator(kind: str, x, t, y) -> CateEstimator:
    """Fit one of the four estimator kinds by name."""
    if kind not in _FITTERS:
        raise ValueError(f"unknown estimator kind {kind!r}; use one of {ESTIMATOR_KINDS}")
    return _FITTERS[kind](x, t, y)
