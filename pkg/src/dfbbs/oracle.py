"""
Centralized ground truth and brute-force verifiers.

Nothing here runs over the network; these routines exist to check the
distributed solvers against independent computations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .costs import AbsoluteAgentCost, CostModel, LinearAgentCost, QuadraticAgentCost


class UnboundedProblemError(ValueError):
    pass


@dataclass(frozen=True)
class SaddlePoint:
    theta_star: np.ndarray
    x_star: np.ndarray
    y_star: np.ndarray
    primal_value: float
    unique: bool = True


def _linear_terms(c: CostModel):
    """Sum of Hessians and sum of linear terms for a smooth quadratic/linear model."""
    H = np.zeros((c.d, c.d))
    b = np.zeros(c.d)
    for a in c.agents:
        if isinstance(a, QuadraticAgentCost):
            H += a.hessian
            b += a.linear
        elif isinstance(a, LinearAgentCost):
            b -= a.b
        else:
            return None
    return H, b


def centralized_solve(c: CostModel, tol: float = 1e-12, max_iter: int = 200_000) -> SaddlePoint:
    """
    Minimize ``sum_i f_i(theta)`` and build the matching dual ``y*``.

    Quadratic and linear families go through the normal equations (minimum
    norm solution if singular). Anything else uses consensus ADMM on the
    agents' proxes, followed by a minimal-norm zero-sum subgradient choice.
    """
    terms = _linear_terms(c)
    if terms is not None:
        H, b = terms
        theta, _, rank, _ = np.linalg.lstsq(H, b, rcond=None)
        if np.linalg.norm(H @ theta - b) > 1e-8 * max(1.0, np.linalg.norm(b)):
            raise UnboundedProblemError("objective is unbounded below (normal equations inconsistent)")
        unique = rank == c.d
        x_star = np.tile(theta, (c.m, 1))
        y_star = c.gradient(x_star)
        # remove roundoff drift from the zero-sum property
        y_star -= y_star.mean(axis=0, keepdims=True)
        return SaddlePoint(theta, x_star, y_star, c.value(x_star), bool(unique))

    theta = _consensus_admm(c, tol, max_iter)
    theta = _snap_to_kinks(c, theta)
    x_star = np.tile(theta, (c.m, 1))
    y_star = min_norm_zero_sum_subgradients(c, theta)
    return SaddlePoint(theta, x_star, y_star, c.value(x_star), unique=False)


def _consensus_admm(c: CostModel, tol: float, max_iter: int, rho: float = 1.0) -> np.ndarray:
    m, d = c.m, c.d
    x = np.zeros((m, d))
    u = np.zeros((m, d))
    z = np.zeros(d)
    for _ in range(max_iter):
        x = c.prox(z[None, :] - u, 1.0 / rho)
        z_old = z
        z = (x + u).mean(axis=0)
        u += x - z[None, :]
        r = np.linalg.norm(x - z[None, :])
        s = rho * np.sqrt(m) * np.linalg.norm(z - z_old)
        if r < tol and s < tol:
            break
        if np.linalg.norm(z) > 1e12:
            raise UnboundedProblemError("iterates diverge; objective appears unbounded below")
    return z


def _snap_to_kinks(c: CostModel, theta: np.ndarray, atol: float = 1e-7) -> np.ndarray:
    """Move coordinates onto nearby l1 anchors when that does not increase the objective."""
    theta = theta.copy()
    x = np.tile(theta, (c.m, 1))
    best = c.value(x)
    for a in c.agents:
        if not isinstance(a, AbsoluteAgentCost):
            continue
        for k in range(c.d):
            if theta[k] != a.a[k] and abs(theta[k] - a.a[k]) <= atol:
                trial = theta.copy()
                trial[k] = a.a[k]
                val = c.value(np.tile(trial, (c.m, 1)))
                if val <= best:
                    theta, best = trial, val
    return theta


def min_norm_zero_sum_subgradients(c: CostModel, theta: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """
    Pick ``g_i in df_i(theta)`` with ``sum_i g_i = 0`` and minimal total norm.

    Subdifferentials here are boxes, so each coordinate is the projection
    problem ``g_i = clip(-t, lo_i, hi_i)`` with the scalar ``t`` found by root
    finding on the (monotone) sum.
    """
    lo = np.empty((c.m, c.d))
    hi = np.empty((c.m, c.d))
    for i, a in enumerate(c.agents):
        lo[i], hi[i] = a.subdifferential_box(theta, atol=atol)
    y = np.empty((c.m, c.d))
    for k in range(c.d):
        l, h = lo[:, k], hi[:, k]
        if l.sum() > 1e-9 or h.sum() < -1e-9:
            raise ValueError("theta is not optimal: 0 is outside the sum of subdifferentials")

        def total(t):
            return np.clip(-t, l, h).sum()

        span = 1.0 + np.max(np.abs(np.concatenate([l, h])))
        # total is non-increasing in t; a flat or tolerance-level sum has no sign change
        if total(-span) <= 0.0:
            t = -span
        elif total(span) >= 0.0:
            t = span
        else:
            t = brentq(total, -span, span, xtol=1e-15, rtol=1e-15)
        y[:, k] = np.clip(-t, l, h)
    return y


def finite_diff_check(c: CostModel, samples: int = 20, h: float = 1e-5, seed: int | None = 0,
                      scale: float = 1.0) -> float:
    """Largest relative error between central differences and the gradient oracle."""
    if not c.smooth:
        raise TypeError("finite-difference check needs smooth costs")
    rng = np.random.default_rng(seed)
    worst = 0.0
    eye = np.eye(c.d)
    for _ in range(samples):
        for i, a in enumerate(c.agents):
            x = scale * rng.standard_normal(c.d)
            fd = np.array([(a.value(x + h * e) - a.value(x - h * e)) / (2 * h) for e in eye])
            g = a.gradient(x)
            err = np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g))
            worst = max(worst, float(err))
    return worst


def _values_on_line(f, xs: np.ndarray) -> np.ndarray:
    if isinstance(f, QuadraticAgentCost):
        r = f.z[:, None] - f.M[:, :1] * xs[None, :]
        return np.sum(r**2, axis=0) + f.lam * xs**2
    if isinstance(f, AbsoluteAgentCost):
        return f.w * np.abs(xs - f.a[0])
    if isinstance(f, LinearAgentCost):
        return f.b[0] * xs
    return np.array([f.value(np.array([t])) for t in xs])


class GridTooSmallError(ValueError):
    pass


def brute_force_prox(c: CostModel, agent: int, v: float, gamma: float,
                     grid: tuple[float, float, float]) -> float:
    """Grid argmin of ``f_i(x) + (x - v)^2 / (2 gamma)`` for one-dimensional costs."""
    if c.d != 1:
        raise ValueError("brute-force prox is only defined for d=1")
    lo, hi, step = grid
    n = int(round((hi - lo) / step))
    xs = lo + step * np.arange(n + 1)
    vals = _values_on_line(c[agent], xs) + (xs - v) ** 2 / (2.0 * gamma)
    k = int(np.argmin(vals))
    if k == 0 or k == n:
        raise GridTooSmallError(f"minimizer at grid boundary {xs[k]:.6g}; widen the grid")
    return float(xs[k])
