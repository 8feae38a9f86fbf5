"""Stage two: per-node score features and logistic influence weights."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import (
    AGE_GROUP_ORDER,
    GENDER_ORDER,
    DataError,
    Dataset,
    Observation,
    label_vector,
)
from .hierarchy import (
    Hierarchy,
    Level,
    age_node_id,
    dataset_node_id,
    domain_node_id,
    gender_node_id,
    ROOT_ID,
)
from .mapfit import FitError, FittedParams


@dataclass(frozen=True)
class LevelFeatureEncoding:
    """Stable column order over the nodes relevant to one target dataset."""

    node_ids: tuple[str, ...]
    target_dataset_id: str

    @property
    def width(self) -> int:
        return len(self.node_ids)

    def column(self, node_id: str) -> int:
        return self.node_ids.index(node_id)


@dataclass(frozen=True)
class LevelWeights:
    coefficients: np.ndarray
    intercept: float
    l2_strength: float


@dataclass(frozen=True)
class HierPModel:
    fitted: FittedParams
    weights: LevelWeights
    encoding: LevelFeatureEncoding
    target_dataset_id: str


def build_encoding(hierarchy: Hierarchy, target_dataset_id: str) -> LevelFeatureEncoding:
    """Encoding over root, attribute nodes (if present), target domain and dataset."""
    ds_node = dataset_node_id(target_dataset_id)
    if ds_node not in hierarchy.nodes:
        raise DataError(f"target dataset {target_dataset_id!r} not in hierarchy")
    domain_node = hierarchy.nodes[ds_node].parents[0]
    order: list[str] = [ROOT_ID]
    for group in AGE_GROUP_ORDER:
        nid = age_node_id(group)
        if nid in hierarchy.nodes:
            order.append(nid)
    for gender in GENDER_ORDER:
        nid = gender_node_id(gender)
        if nid in hierarchy.nodes:
            order.append(nid)
    order.append(domain_node)
    order.append(ds_node)
    return LevelFeatureEncoding(tuple(order), target_dataset_id)


def level_features(
    obs: Observation, fitted: FittedParams, encoding: LevelFeatureEncoding
) -> np.ndarray:
    """Per-node symptom scores; non-matching demographic columns stay zero."""
    s = np.asarray(obs.symptoms, dtype=float)
    own_age = age_node_id(obs.age_group)
    own_gender = gender_node_id(obs.gender)
    out = np.zeros(encoding.width)
    for col, nid in enumerate(encoding.node_ids):
        if nid.startswith("age:") and nid != own_age:
            continue
        if nid.startswith("gender:") and nid != own_gender:
            continue
        theta = fitted.node_params[nid]
        if theta.shape != s.shape:
            raise DataError("symptom vector length does not match parameters")
        out[col] = float(s @ theta)
    return out


def feature_matrix(
    observations, fitted: FittedParams, encoding: LevelFeatureEncoding
) -> np.ndarray:
    return np.array([level_features(o, fitted, encoding) for o in observations])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logreg_objective(X: np.ndarray, y: np.ndarray, w: np.ndarray,
                     b: float, l2_strength: float) -> float:
    """Penalized log-likelihood (to maximize); intercept unpenalized."""
    z = X @ w + b
    # log sigma(z) = -log(1+exp(-z)), stable via logaddexp
    ll = float(-(np.logaddexp(0.0, -z)[y]).sum() - (np.logaddexp(0.0, z)[~y]).sum())
    return ll - 0.5 * l2_strength * float(w @ w)


def logreg_gradient(X: np.ndarray, y: np.ndarray, w: np.ndarray,
                    b: float, l2_strength: float) -> np.ndarray:
    """Gradient of the penalized log-likelihood in (w, b)."""
    mu = _sigmoid(X @ w + b)
    resid = y.astype(float) - mu
    gw = X.T @ resid - l2_strength * w
    gb = resid.sum()
    return np.concatenate([gw, [gb]])


def fit_logreg(
    X: np.ndarray,
    y: np.ndarray,
    l2_strength: float,
    tol: float = 1e-8,
    max_iters: int = 100,
) -> tuple[np.ndarray, float]:
    """L2-penalized logistic regression by Newton's method (IRLS).

    Maximizes the penalized log-likelihood to gradient norm < tol; the
    intercept is never penalized. Raises on single-class targets or
    non-convergence.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=bool)
    if X.shape[0] < 2:
        raise FitError("need at least 2 rows")
    if y.all() or (~y).all():
        raise FitError("both classes must be present")
    if l2_strength < 0:
        raise FitError("l2_strength must be non-negative")

    n, p = X.shape
    w = np.zeros(p)
    b = 0.0
    penalty = np.append(np.full(p, l2_strength), 0.0)
    Xb = np.hstack([X, np.ones((n, 1))])
    damping = 1e-10  # keeps the Hessian solvable on collinear designs
    for _ in range(max_iters):
        grad = logreg_gradient(X, y, w, b, l2_strength)
        if np.linalg.norm(grad) < tol:
            return w, b
        mu = _sigmoid(X @ w + b)
        weights = np.clip(mu * (1.0 - mu), 1e-12, None)
        hess = (Xb * weights[:, None]).T @ Xb + np.diag(penalty + damping)
        step = np.linalg.solve(hess, grad)
        w = w + step[:-1]
        b = b + step[-1]
    grad = logreg_gradient(X, y, w, b, l2_strength)
    if np.linalg.norm(grad) < tol:
        return w, b
    raise FitError(
        f"logistic regression did not converge in {max_iters} Newton steps "
        f"(gradient norm {np.linalg.norm(grad):.3e})"
    )


def fit_level_weights(
    target_labelled: Dataset,
    fitted: FittedParams,
    encoding: LevelFeatureEncoding,
    l2_strength: float,
) -> LevelWeights:
    """Learn per-node influence weights on the target's labelled slice."""
    X = feature_matrix(target_labelled.observations, fitted, encoding)
    y = label_vector(target_labelled.observations)
    coef, intercept = fit_logreg(X, y, l2_strength)
    return LevelWeights(coefficients=coef, intercept=intercept, l2_strength=l2_strength)


def predict_proba(obs: Observation, model: HierPModel) -> float:
    """Infection probability for one observation under the fitted model."""
    x = level_features(obs, model.fitted, model.encoding)
    z = float(model.weights.coefficients @ x + model.weights.intercept)
    return float(_sigmoid(np.array([z]))[0])


def _fmt(x: float) -> str:
    return "%.17g" % x


def model_to_json(model: HierPModel) -> str:
    payload = {
        "target_dataset_id": model.target_dataset_id,
        "encoding": list(model.encoding.node_ids),
        "coefficients": [_fmt(v) for v in model.weights.coefficients],
        "intercept": _fmt(model.weights.intercept),
        "l2_strength": _fmt(model.weights.l2_strength),
        "node_params": {
            nid: [_fmt(v) for v in vec]
            for nid, vec in sorted(model.fitted.node_params.items())
        },
        "final_objective": _fmt(model.fitted.final_objective),
        "iterations": model.fitted.iterations,
        "converged": model.fitted.converged,
    }
    return json.dumps(payload, indent=2)


def model_from_json(text: str) -> HierPModel:
    payload = json.loads(text)
    fitted = FittedParams(
        node_params={
            nid: np.array([float(v) for v in vec])
            for nid, vec in payload["node_params"].items()
        },
        final_objective=float(payload["final_objective"]),
        iterations=payload["iterations"],
        converged=payload["converged"],
    )
    encoding = LevelFeatureEncoding(
        tuple(payload["encoding"]), payload["target_dataset_id"]
    )
    weights = LevelWeights(
        coefficients=np.array([float(v) for v in payload["coefficients"]]),
        intercept=float(payload["intercept"]),
        l2_strength=float(payload["l2_strength"]),
    )
    return HierPModel(fitted, weights, encoding, payload["target_dataset_id"])
