"""Joint MAP objective over the hierarchy and Powell's derivative-free minimizer."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Callable, Mapping, Optional

import numpy as np

from .hierarchy import Hierarchy, NodeStats


class FitError(RuntimeError):
    """Raised when optimization encounters non-finite values or bad inputs."""


@dataclass(frozen=True)
class ModelConfig:
    beta: float = 0.2
    lam: float = 1.0
    powell_tol: float = 1e-6
    powell_max_iters: int = 200
    line_search_tol: float = 1e-8
    seed: int = 0
    l2_strength: float = 1.0
    squared_divergence: bool = True
    target_dataset_id: Optional[str] = None
    proportion_labelled: float = 0.2

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class FittedParams:
    node_params: dict[str, np.ndarray]
    final_objective: float
    iterations: int
    converged: bool


def log_sum_exp(v: np.ndarray) -> float:
    """Overflow-safe log of the sum of exponentials."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise FitError("log_sum_exp of empty vector")
    m = v.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(v - m).sum()))


def data_term(theta: np.ndarray, f: np.ndarray, lam: float) -> float:
    """Negative smoothed multinomial log-likelihood for one dataset node."""
    theta = np.asarray(theta, dtype=float)
    f = np.asarray(f, dtype=float)
    if theta.shape != f.shape:
        raise FitError("theta and f length mismatch")
    if lam <= 0:
        raise FitError("lambda must be positive")
    return float(-np.dot(f + lam, theta - log_sum_exp(theta)))


def divergence(theta_child: np.ndarray, theta_parent: np.ndarray,
               squared: bool = True) -> float:
    """Squared (default) or plain Euclidean distance between parameter vectors."""
    a = np.asarray(theta_child, dtype=float)
    b = np.asarray(theta_parent, dtype=float)
    if a.shape != b.shape:
        raise FitError("parameter length mismatch in divergence")
    d2 = float(np.dot(a - b, a - b))
    return d2 if squared else math.sqrt(d2)


class MapObjective:
    """Vectorized joint objective over the flattened node parameter vector.

    Every node carries a smoothed multinomial data term anchored to its own
    slice statistics (for demographic and domain nodes this realizes the
    empirical group prior), plus the beta-weighted divergence over parent
    edges. Flat layout is canonical node order x vocabulary order.
    """

    def __init__(self, hierarchy: Hierarchy, stats: Mapping[str, NodeStats],
                 config: ModelConfig):
        self.hierarchy = hierarchy
        self.config = config
        self.node_ids = hierarchy.node_order()
        self.k = len(hierarchy.vocab)
        index = {nid: i for i, nid in enumerate(self.node_ids)}

        self._data_rows = np.arange(len(self.node_ids))
        self._weights = np.array(
            [stats[nid].ppv + config.lam for nid in self.node_ids]
        )
        self._weight_sums = self._weights.sum(axis=1)

        edges = hierarchy.edges()
        self._child = np.array([index[c] for c, _ in edges], dtype=int)
        self._parent = np.array([index[p] for _, p in edges], dtype=int)

    @property
    def dim(self) -> int:
        return len(self.node_ids) * self.k

    def initial_point(self) -> np.ndarray:
        return np.concatenate(
            [self.hierarchy.nodes[nid].prior_center for nid in self.node_ids]
        )

    def unflatten(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        theta = np.asarray(flat, dtype=float).reshape(len(self.node_ids), self.k)
        return {nid: theta[i].copy() for i, nid in enumerate(self.node_ids)}

    def edge_divergences(self, flat: np.ndarray) -> np.ndarray:
        theta = np.asarray(flat, dtype=float).reshape(len(self.node_ids), self.k)
        diff = theta[self._child] - theta[self._parent]
        d2 = (diff * diff).sum(axis=1)
        return d2 if self.config.squared_divergence else np.sqrt(d2)

    def total_divergence(self, flat: np.ndarray) -> float:
        return float(self.edge_divergences(flat).sum())

    def data_part(self, flat: np.ndarray) -> float:
        theta = np.asarray(flat, dtype=float).reshape(len(self.node_ids), self.k)
        td = theta[self._data_rows]
        m = td.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(td - m).sum(axis=1))
        return float(-(self._weights * td).sum() + (self._weight_sums * lse).sum())

    def __call__(self, flat: np.ndarray) -> float:
        flat = np.asarray(flat, dtype=float)
        if not np.all(np.isfinite(flat)):
            raise FitError("non-finite parameter passed to objective")
        return self.data_part(flat) + self.config.beta * float(
            self.edge_divergences(flat).sum()
        )


def objective(flat_params: np.ndarray, hierarchy: Hierarchy,
              stats: Mapping[str, NodeStats], config: ModelConfig) -> float:
    """One-shot evaluation of the joint objective at a flattened point."""
    return MapObjective(hierarchy, stats, config)(flat_params)


_GOLD = 1.618034
_TINY = 1e-21
_BRENT_GOLD = 0.3819660


def _bracket(f1d: Callable[[float], float], xa: float = 0.0, xb: float = 1.0,
             grow_limit: float = 110.0, maxiter: int = 1000):
    """Bracket a minimum of a 1-D function starting from (xa, xb)."""
    fa, fb = f1d(xa), f1d(xb)
    if fa < fb:
        xa, xb = xb, xa
        fa, fb = fb, fa
    xc = xb + _GOLD * (xb - xa)
    fc = f1d(xc)
    iters = 0
    while fc < fb:
        tmp1 = (xb - xa) * (fb - fc)
        tmp2 = (xb - xc) * (fb - fa)
        val = tmp2 - tmp1
        denom = 2.0 * math.copysign(max(abs(val), _TINY), val)
        w = xb - ((xb - xc) * tmp2 - (xb - xa) * tmp1) / denom
        wlim = xb + grow_limit * (xc - xb)
        if iters > maxiter:
            raise FitError("bracketing failed to converge")
        iters += 1
        if (w - xc) * (xb - w) > 0.0:
            fw = f1d(w)
            if fw < fc:
                return (xb, w, xc), (fb, fw, fc)
            if fw > fb:
                return (xa, xb, w), (fa, fb, fw)
            w = xc + _GOLD * (xc - xb)
            fw = f1d(w)
        elif (w - wlim) * (wlim - xc) >= 0.0:
            w = wlim
            fw = f1d(w)
        elif (w - wlim) * (xc - w) > 0.0:
            fw = f1d(w)
            if fw < fc:
                xb, xc, w = xc, w, w + _GOLD * (w - xc)
                fb, fc, fw = fc, fw, f1d(w)
        else:
            w = xc + _GOLD * (xc - xb)
            fw = f1d(w)
        xa, xb, xc = xb, xc, w
        fa, fb, fc = fb, fc, fw
    return (xa, xb, xc), (fa, fb, fc)


def _brent(f1d: Callable[[float], float], bracket_x, bracket_f,
           tol: float, maxiter: int = 200) -> tuple[float, float]:
    """Brent's parabolic-interpolation line minimization inside a bracket."""
    xa, xb, xc = bracket_x
    a, b = (xa, xc) if xa < xc else (xc, xa)
    x = w = v = xb
    fx = fw = fv = bracket_f[1]
    d = e = 0.0
    for _ in range(maxiter):
        xm = 0.5 * (a + b)
        tol1 = tol * abs(x) + 1e-12
        tol2 = 2.0 * tol1
        if abs(x - xm) <= tol2 - 0.5 * (b - a):
            return x, fx
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            etemp = e
            e = d
            if abs(p) >= abs(0.5 * q * etemp) or p <= q * (a - x) or p >= q * (b - x):
                e = (a - x) if x >= xm else (b - x)
                d = _BRENT_GOLD * e
            else:
                d = p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = math.copysign(tol1, xm - x)
        else:
            e = (a - x) if x >= xm else (b - x)
            d = _BRENT_GOLD * e
        u = x + d if abs(d) >= tol1 else x + math.copysign(tol1, d)
        fu = f1d(u)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, w, x = w, x, u
            fv, fw, fx = fw, fx, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, w = w, u
                fv, fw = fw, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx


def _line_minimize(fn, x: np.ndarray, direction: np.ndarray,
                   tol: float) -> tuple[np.ndarray, float, float]:
    """Minimize fn along x + t*direction; returns (new x, f value, |t|*‖d‖)."""

    def f1d(t: float) -> float:
        val = fn(x + t * direction)
        if not np.isfinite(val):
            raise FitError(f"non-finite objective at line point t={t}")
        return val

    bx, bf = _bracket(f1d)
    t_star, f_star = _brent(f1d, bx, bf, tol)
    x_new = x + t_star * direction
    return x_new, f_star, abs(t_star)


def powell_minimize(
    fn: Callable[[np.ndarray], float],
    x0: np.ndarray,
    config: ModelConfig,
    callback: Optional[Callable[[int, float], None]] = None,
) -> tuple[np.ndarray, float, int, bool]:
    """Powell's conjugate-direction minimization.

    Directions start as the coordinate basis; each sweep line-minimizes along
    every direction (golden-section bracketing then Brent), then applies the
    classical replacement test before adopting the net displacement as a new
    direction. Stops when the per-sweep objective decrease drops below
    config.powell_tol or the iteration cap is hit.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    fval = fn(x)
    if not np.isfinite(fval):
        raise FitError("objective not finite at starting point")
    directions = [np.eye(n)[i] for i in range(n)]
    converged = False
    iters = 0
    for iteration in range(1, config.powell_max_iters + 1):
        iters = iteration
        f_begin = fval
        x_begin = x.copy()
        biggest_drop = 0.0
        biggest_index = 0
        for i, direction in enumerate(directions):
            f_before = fval
            x, fval, _ = _line_minimize(fn, x, direction, config.line_search_tol)
            drop = f_before - fval
            if drop > biggest_drop:
                biggest_drop = drop
                biggest_index = i
        if callback is not None:
            callback(iteration, fval)
        decrease = f_begin - fval
        if decrease < config.powell_tol:
            converged = True
            break
        # Classical direction-replacement test on the extrapolated point.
        x_ext = 2.0 * x - x_begin
        f_ext = fn(x_ext)
        if f_ext < f_begin:
            t = (
                2.0 * (f_begin - 2.0 * fval + f_ext)
                * (f_begin - fval - biggest_drop) ** 2
                - biggest_drop * (f_begin - f_ext) ** 2
            )
            if t < 0.0:
                new_dir = x - x_begin
                norm = np.linalg.norm(new_dir)
                if norm > 0:
                    x, fval, _ = _line_minimize(
                        fn, x, new_dir, config.line_search_tol
                    )
                    directions[biggest_index] = directions[-1]
                    directions[-1] = new_dir / norm
    return x, fval, iters, converged


def fit_map(
    hierarchy: Hierarchy,
    stats: Mapping[str, NodeStats],
    config: ModelConfig,
    trace: Optional[list] = None,
) -> FittedParams:
    """Jointly fit all node parameters by minimizing the MAP objective.

    Starts from the prior centers; deterministic for fixed inputs. If a list
    is passed as trace, per-sweep objective values are appended to it.
    """
    obj = MapObjective(hierarchy, stats, config)
    x0 = obj.initial_point()
    callback = None
    if trace is not None:
        callback = lambda _it, f: trace.append(f)
    x_star, f_star, iters, converged = powell_minimize(obj, x0, config, callback)
    return FittedParams(
        node_params=obj.unflatten(x_star),
        final_objective=f_star,
        iterations=iters,
        converged=converged,
    )


def _fmt(x: float) -> str:
    return "%.17g" % x


def fitted_to_json(fitted: FittedParams, config: ModelConfig) -> str:
    payload = {
        "config": config.to_dict(),
        "final_objective": _fmt(fitted.final_objective),
        "iterations": fitted.iterations,
        "converged": fitted.converged,
        "node_params": {
            nid: [_fmt(v) for v in vec]
            for nid, vec in sorted(fitted.node_params.items())
        },
    }
    return json.dumps(payload, indent=2)


def fitted_from_json(text: str) -> tuple[FittedParams, ModelConfig]:
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
    return fitted, ModelConfig.from_dict(payload["config"])
