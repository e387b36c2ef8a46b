"""
Convergence diagnostics.

All norms of ``(m, d)`` matrices are summed over the ``d`` columns, i.e. the
mixing matrix acts as ``W kron I_d`` without forming the Kronecker product.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import astuple, dataclass, fields

import numpy as np

from .costs import CostModel
from .oracle import SaddlePoint


@dataclass(frozen=True)
class IterationRecord:
    k: int
    u: float
    rel_fpr: float
    obj_err: float
    consensus_err: float
    dual_sum: float
    kkt_primal: float
    kkt_dual: float
    kkt_lagr: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> tuple:
        return astuple(self)


@dataclass(frozen=True)
class RateEstimate:
    slope: float
    intercept: float
    window: tuple[int, int]


def _as2d(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def g_norm_sq(v: np.ndarray, G: np.ndarray) -> float:
    """``sum_columns v^T G v``."""
    v = _as2d(v)
    if G.shape != (v.shape[0], v.shape[0]):
        raise ValueError(f"G has shape {G.shape}, expected {(v.shape[0],) * 2}")
    return float(np.sum(v * (G @ v)))


def disagreement(x: np.ndarray) -> np.ndarray:
    """``(I - 11^T/m) x``."""
    x = _as2d(x)
    return x - x.mean(axis=0, keepdims=True)


def fixed_point_residual(x_prev: np.ndarray, x_next: np.ndarray, w: np.ndarray) -> float:
    """``||x~_next||^2_{I-W} + ||x_next - x_prev||^2_W``."""
    x_prev, x_next = _as2d(x_prev), _as2d(x_next)
    if x_prev.shape != x_next.shape:
        raise ValueError("shape mismatch")
    lap = np.eye(w.shape[0]) - w
    return g_norm_sq(disagreement(x_next), lap) + g_norm_sq(x_next - x_prev, w)


def kkt_residuals(x: np.ndarray, y: np.ndarray, c: CostModel, w: np.ndarray) -> tuple[float, float, float]:
    """
    Residuals of primal feasibility, dual feasibility and Lagrangian
    optimality. Non-smooth models use ``||x - prox_f(x + y)||`` for the last.
    """
    x, y = _as2d(x), _as2d(y)
    primal = float(np.linalg.norm(x - w @ x))
    dual = float(np.linalg.norm(y.sum(axis=0)))
    if c.smooth:
        lagr = float(np.linalg.norm(c.gradient(x) - y))
    else:
        lagr = float(np.linalg.norm(x - c.prox(x + y, 1.0)))
    return primal, dual, lagr


def lagrangian_value(x: np.ndarray, y: np.ndarray, c: CostModel, w: np.ndarray, gamma: float) -> float:
    """Augmented Lagrangian ``f(x) - <y, x> + ||x||^2_{I-W} / (2 gamma)``."""
    x, y = _as2d(x), _as2d(y)
    pen = 0.0 if np.isinf(gamma) else g_norm_sq(x, np.eye(w.shape[0]) - w) / (2.0 * gamma)
    return c.value(x) - float(np.sum(y * x)) + pen


def _dual_metric_matrix(w: np.ndarray) -> np.ndarray:
    m = w.shape[0]
    return np.eye(m) - (w - np.full((m, m), 1.0 / m))


def lyapunov_v0(x0: np.ndarray, y0: np.ndarray, truth: SaddlePoint, w: np.ndarray, gamma: float) -> float:
    """
    ``gamma^2 ||y0 - y*||^2_{P^-1} + ||x0 - x*||^2_W`` with
    ``P = I - (W - 11^T/m)``; the inverse is applied by a linear solve.
    """
    x0, y0 = _as2d(x0), _as2d(y0)
    P = _dual_metric_matrix(w)
    dy = y0 - truth.y_star
    try:
        sol = np.linalg.solve(P, dy)
    except np.linalg.LinAlgError as exc:
        raise ValueError("I - (W - 11^T/m) is singular; W does not mix") from exc
    if np.linalg.cond(P) > 1e12:
        raise ValueError("I - (W - 11^T/m) is numerically singular; W does not mix")
    return gamma**2 * float(np.sum(dy * sol)) + g_norm_sq(x0 - truth.x_star, w)


def lyapunov_v0_inexact(x0, y0, truth: SaddlePoint, c: CostModel, w: np.ndarray, gamma: float) -> float:
    """Gradient-step variant: subtracts ``2 gamma D_f(x*, x0)`` from :func:`lyapunov_v0`."""
    x0 = _as2d(x0)
    breg = c.value(truth.x_star) - c.value(x0) - float(np.sum(c.gradient(x0) * (truth.x_star - x0)))
    return lyapunov_v0(x0, y0, truth, w, gamma) - 2.0 * gamma * breg


def running_average(xs) -> list[np.ndarray]:
    """``xhat_k = mean(x_0, ..., x_{k-1})`` for ``k = 1..n``, computed incrementally."""
    xs = list(xs)
    if not xs:
        raise ValueError("empty sequence")
    out = []
    acc = np.zeros_like(np.asarray(xs[0], dtype=float))
    for k, x in enumerate(xs, 1):
        acc = acc + (np.asarray(x, dtype=float) - acc) / k
        out.append(acc)
    return out


def rate_fit(residuals, window: tuple[int, int], ks=None) -> RateEstimate:
    """
    Least-squares slope of ``log(residual)`` against ``log(k)`` over
    ``k_lo <= k <= k_hi``; non-positive residuals are skipped.
    """
    r = np.asarray(residuals, dtype=float)
    k = np.arange(r.size) if ks is None else np.asarray(ks, dtype=float)
    lo, hi = window
    sel = (k >= lo) & (k <= hi) & (r > 0) & np.isfinite(r) & (k > 0)
    if sel.sum() < 2:
        raise ValueError(f"fewer than two positive residuals in window {window}")
    slope, intercept = np.polyfit(np.log(k[sel]), np.log(r[sel]), 1)
    return RateEstimate(float(slope), float(intercept), (int(lo), int(hi)))


def ergodic_weights(gamma: float, alpha: float, lam_min: float, lam_max: float,
                    mu: float = 0.5, nu: float = 0.5) -> tuple[float, float]:
    """
    Weights of the averaged-iterate residual: ``gamma alpha / 2 - lam_max - eta``
    on the increment and ``(1 - mu) / (1 - nu)`` on the disagreement, with
    ``eta = (1 - mu)(1 - lam_min) / mu``. The first may be negative; it is
    returned as is.
    """
    if not (0 < mu < 1 and 0 < nu < 1):
        raise ValueError("mu and nu must lie in (0, 1)")
    eta = (1.0 - mu) * (1.0 - lam_min) / mu
    return gamma * alpha / 2.0 - lam_max - eta, (1.0 - mu) / (1.0 - nu)


def ergodic_residual(xs, w_bar: np.ndarray, gamma: float, alpha: float, lam_min: float,
                     lam_max: float, mu: float = 0.5, nu: float = 0.5) -> np.ndarray:
    """
    Residual of the running averages along a stochastic trace. Entry ``k-1``
    holds ``a ||xhat_{k+1} - xhat_k||^2 + b ||xhat_k - mean(xhat_k)||^2_{I-Wbar}``
    for ``k = 1..n-1``.
    """
    a, b = ergodic_weights(gamma, alpha, lam_min, lam_max, mu, nu)
    if a < 0:
        warnings.warn(f"increment weight gamma*alpha/2 - lam_max - eta = {a:.3g} is negative; "
                      "gamma is below the stochastic bound", RuntimeWarning, stacklevel=2)
    avg = running_average(xs)
    lap = np.eye(w_bar.shape[0]) - w_bar
    out = np.empty(len(avg) - 1)
    for k in range(len(avg) - 1):
        step = avg[k + 1] - avg[k]
        out[k] = a * float(np.sum(step * step)) + b * g_norm_sq(disagreement(avg[k]), lap)
    return out


def make_record(k: int, x: np.ndarray, x_prev: np.ndarray, y: np.ndarray, c: CostModel,
                w: np.ndarray, truth: SaddlePoint, x0: np.ndarray) -> IterationRecord:
    """Metrics for one iterate. ``w`` is the reference matrix (``Wbar`` on stochastic networks)."""
    # hot path: same quantities as fixed_point_residual / kkt_residuals, fewer temporaries
    xt = x - x.mean(axis=0)
    dx = x - x_prev
    u = float(np.sum(xt * (xt - w @ xt)) + np.sum(dx * (w @ dx)))
    if k == 0:
        rel = 1.0
    else:
        e0 = x0 - truth.x_star
        e = x - truth.x_star
        den = float(np.sum(e0 * e0))
        num = float(np.sum(e * e))
        rel = num / den if den > 0 else (0.0 if num == 0 else np.inf)
    obj = c.value(x) - truth.primal_value
    cons = float(np.sum(xt * xt))
    colsum = y.sum(axis=0)
    dual_sum = float(np.max(np.abs(colsum)))
    primal = math.sqrt(float(np.sum((x - w @ x) ** 2)))
    dual = math.sqrt(float(colsum @ colsum))
    if c.smooth:
        lagr = math.sqrt(float(np.sum((c.gradient(x) - y) ** 2)))
    else:
        lagr = math.sqrt(float(np.sum((x - c.prox(x + y, 1.0)) ** 2)))
    return IterationRecord(k, u, rel, obj, cons, dual_sum, primal, dual, lagr)


def batch_records(xs: np.ndarray, ys: np.ndarray, c: CostModel, w: np.ndarray,
                  truth: SaddlePoint) -> list[IterationRecord]:
    """
    :func:`make_record` for a whole trace at once. ``xs`` and ``ys`` are
    ``(n, m, d)`` stacks of primal and (sign-aligned) dual iterates.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = xs.shape[0]
    if n == 0:
        return []
    xt = xs - xs.mean(axis=1, keepdims=True)
    dx = np.zeros_like(xs)
    dx[1:] = xs[1:] - xs[:-1]
    wxt = np.einsum("ij,njd->nid", w, xt)
    wdx = np.einsum("ij,njd->nid", w, dx)
    u = np.sum(xt * (xt - wxt), axis=(1, 2)) + np.sum(dx * wdx, axis=(1, 2))

    e = xs - truth.x_star
    num = np.sum(e * e, axis=(1, 2))
    den = num[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = num / den if den > 0 else np.where(num == 0, 0.0, np.inf)
    rel = np.asarray(rel, dtype=float)
    rel[0] = 1.0

    obj = np.sum(c.values(xs), axis=1) - truth.primal_value
    cons = np.sum(xt * xt, axis=(1, 2))
    colsum = ys.sum(axis=1)
    dual_sum = np.max(np.abs(colsum), axis=1)
    lap_x = xs - np.einsum("ij,njd->nid", w, xs)
    primal = np.sqrt(np.sum(lap_x * lap_x, axis=(1, 2)))
    dual = np.sqrt(np.sum(colsum * colsum, axis=1))
    if c.smooth:
        r = c.gradient(xs) - ys
    else:
        r = np.stack([xs[k] - c.prox(xs[k] + ys[k], 1.0) for k in range(n)])
    lagr = np.sqrt(np.sum(r * r, axis=(1, 2)))
    cols = (u, rel, obj, cons, dual_sum, primal, dual, lagr)
    return [IterationRecord(k, *(float(a[k]) for a in cols)) for k in range(n)]
