"""Minimal regression core: ridge least squares and IRLS logistic regression.

Every estimator and fit metric in the package is built on these two fits.
Features are standardized inside ``fit`` using statistics of the fitting
split only; the returned weights are folded back to original units so that
prediction is a plain affine map.  The intercept is never penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateArms, DimensionMismatch, SingularSystem

OUTCOME_LAMBDA = 1e-3
PROPENSITY_LAMBDA = 1e-2
PROB_CLIP = (0.01, 0.99)

_IRLS_TOL = 1e-8
_IRLS_MAX_ITER = 100


@dataclass
class LinearModel:
    """A fitted linear or logistic model in original feature units.

    ``weights[0]`` is the intercept, ``weights[1:]`` the per-feature slopes.
    ``mu``/``scale`` record the standardization used during fitting (needed
    to evaluate the penalized objective, not for prediction).
    """

    weights: np.ndarray
    lam: float
    kind: str  # "regression" or "logistic"
    feature_dim: int
    mu: np.ndarray
    scale: np.ndarray
    converged: bool = True


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    return (x - mu) / scale, mu, scale


def _fold_back(w_std: np.ndarray, mu: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Convert standardized-space weights to original-unit weights."""
    slopes = w_std[1:] / scale
    intercept = w_std[0] - float(slopes @ mu)
    return np.concatenate([[intercept], slopes])


def fit_ridge(x: np.ndarray, y: np.ndarray, lam: float = OUTCOME_LAMBDA) -> LinearModel:
    """Ridge regression solved as an augmented least-squares problem.

    Solves (X'X + lam*I')w = X'y with the intercept slot unpenalized, via
    an SVD-backed least-squares factorization of the penalty-augmented
    design (numerically stable for small lam).

    Raises:
        SingularSystem: lam == 0 and the design is rank-deficient.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] < 1:
        raise ValueError("x must be (n, k) with matching y")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in regression inputs")
    n, k = x.shape
    z, mu, scale = _standardize(x)
    design = np.hstack([np.ones((n, 1)), z])
    if lam == 0.0:
        rank = np.linalg.matrix_rank(design)
        if rank < k + 1:
            raise SingularSystem(
                f"rank-deficient design (rank {rank} < {k + 1}) with lam=0"
            )
        aug, target = design, y
    else:
        penalty = np.sqrt(lam) * np.eye(k + 1)[1:]  # no intercept penalty
        aug = np.vstack([design, penalty])
        target = np.concatenate([y, np.zeros(k)])
    w_std, *_ = np.linalg.lstsq(aug, target, rcond=None)
    return LinearModel(
        weights=_fold_back(w_std, mu, scale),
        lam=lam,
        kind="regression",
        feature_dim=k,
        mu=mu,
        scale=scale,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _penalized_loglik(design, t, w, lam):
    p = np.clip(_sigmoid(design @ w), 1e-12, 1.0 - 1e-12)
    ll = float(t @ np.log(p) + (1.0 - t) @ np.log(1.0 - p))
    return ll - 0.5 * lam * float(w[1:] @ w[1:])


def fit_logistic(
    x: np.ndarray,
    t: np.ndarray,
    lam: float = PROPENSITY_LAMBDA,
    objective_trace: list | None = None,
) -> LinearModel:
    """Penalized logistic regression by IRLS with step halving.

    Step halving keeps the penalized log-likelihood nondecreasing across
    iterations, so the final iterate is also the best one.  If the max
    weight change has not dropped below 1e-8 after 100 iterations the model
    is returned with ``converged=False``.  ``objective_trace``, when given,
    collects the per-iteration penalized log-likelihood.

    Raises:
        DegenerateArms: t does not contain both classes.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if lam <= 0:
        raise ValueError("logistic fits require lam > 0")
    classes = np.unique(t)
    if not np.array_equal(classes, np.array([0.0, 1.0])):
        raise DegenerateArms("treatment vector must contain both 0 and 1")
    n, k = x.shape
    z, mu, scale = _standardize(x)
    design = np.hstack([np.ones((n, 1)), z])
    pen = lam * np.concatenate([[0.0], np.ones(k)])

    w = np.zeros(k + 1)
    cur_ll = _penalized_loglik(design, t, w, lam)
    converged = False
    for _ in range(_IRLS_MAX_ITER):
        p = _sigmoid(design @ w)
        weight = p * (1.0 - p) + 1e-10
        grad = design.T @ (t - p) - pen * w
        hess = (design * weight[:, None]).T @ design + np.diag(pen)
        step = np.linalg.solve(hess, grad)
        # halve until the penalized objective does not decrease
        stepsize = 1.0
        cand_ll = cur_ll
        for _ in range(30):
            cand_ll = _penalized_loglik(design, t, w + stepsize * step, lam)
            if cand_ll >= cur_ll - 1e-12:
                break
            stepsize *= 0.5
        w = w + stepsize * step
        cur_ll = cand_ll
        if objective_trace is not None:
            objective_trace.append(cur_ll)
        if float(np.max(np.abs(stepsize * step))) < _IRLS_TOL:
            converged = True
            break
    return LinearModel(
        weights=_fold_back(w, mu, scale),
        lam=lam,
        kind="logistic",
        feature_dim=k,
        mu=mu,
        scale=scale,
        converged=converged,
    )


def predict(model: LinearModel, x: np.ndarray) -> np.ndarray:
    """Linear score, or clipped probability for logistic models.

    Raises:
        DimensionMismatch: column count differs from the fitted dimension.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.feature_dim:
        raise DimensionMismatch(
            f"expected {model.feature_dim} columns, got {x.shape[1] if x.ndim == 2 else 'non-2d'}"
        )
    score = model.weights[0] + x @ model.weights[1:]
    if model.kind == "logistic":
        return np.clip(_sigmoid(score), *PROB_CLIP)
    return score


def ridge_objective(model: LinearModel, x: np.ndarray, y: np.ndarray) -> float:
    """Penalized least-squares objective at the model's weights.

    The penalty applies to standardized-space slopes, matching what
    ``fit_ridge`` minimized; used by the uniqueness property test.
    """
    resid = y - predict(model, x)
    w_std_slopes = model.weights[1:] * model.scale
    return float(resid @ resid + model.lam * (w_std_slopes @ w_std_slopes))
