"""
Per-agent cost oracles and the sensor-fusion problem generator.

A :class:`CostModel` stacks ``m`` agent costs acting on ``d``-vectors. Its
batch methods take and return ``(m, d)`` arrays, row ``i`` belonging to
agent ``i``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class AgentCost:
    """Interface for a convex local cost ``f_i : R^d -> R``."""

    d: int
    smooth: bool = True

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        return self.gradient(x)

    def subdifferential_box(self, x: np.ndarray, atol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise bounds ``lo <= g <= hi`` of the subdifferential at ``x``."""
        g = self.gradient(x)
        return g, g.copy()

    def prox(self, v: np.ndarray, gamma: float) -> np.ndarray:
        raise NotImplementedError

    @property
    def alpha(self) -> float:
        raise NotImplementedError

    @property
    def lip(self) -> float:
        raise NotImplementedError


class QuadraticAgentCost(AgentCost):
    """``f(x) = ||z - M x||^2 + lam ||x||^2``."""

    def __init__(self, M, z, lam: float = 0.0):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.M.shape[0] != self.z.shape[0]:
            raise ValueError("M and z disagree on the number of measurements")
        if lam < 0:
            raise ValueError("lam must be non-negative")
        self.lam = float(lam)
        self.d = self.M.shape[1]
        self.hessian = 2.0 * (self.M.T @ self.M + self.lam * np.eye(self.d))
        self.linear = 2.0 * (self.M.T @ self.z)
        eig = np.linalg.eigvalsh(self.hessian)
        self._alpha = max(float(eig[0]), 0.0)
        self._lip = float(eig[-1])

    @classmethod
    def anchor(cls, a, weight: float = 1.0) -> "QuadraticAgentCost":
        """``weight * ||x - a||^2``."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        s = math.sqrt(weight)
        return cls(s * np.eye(a.size), s * a)

    def value(self, x):
        r = self.z - self.M @ x
        return float(r @ r + self.lam * (x @ x))

    def gradient(self, x):
        return self.hessian @ x - self.linear

    def prox(self, v, gamma):
        return quad_prox(self, v, gamma)

    @property
    def alpha(self):
        return self._alpha

    @property
    def lip(self):
        return self._lip


class LinearAgentCost(AgentCost):
    """``f(x) = <b, x>``."""

    def __init__(self, b):
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.d = self.b.size

    def value(self, x):
        return float(self.b @ x)

    def gradient(self, x):
        return self.b.copy()

    def prox(self, v, gamma):
        return v - gamma * self.b

    @property
    def alpha(self):
        return 0.0

    @property
    def lip(self):
        return 0.0


class AbsoluteAgentCost(AgentCost):
    """``f(x) = w ||x - a||_1``; non-smooth."""

    smooth = False

    def __init__(self, a, w: float = 1.0):
        if w <= 0:
            raise ValueError("weight must be positive")
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.w = float(w)
        self.d = self.a.size

    def value(self, x):
        return self.w * float(np.sum(np.abs(x - self.a)))

    def gradient(self, x):
        raise TypeError("absolute cost has no gradient; use subgradient()")

    def subgradient(self, x):
        # minimal-norm element: 0 at the kink
        return self.w * np.sign(x - self.a)

    def subdifferential_box(self, x, atol=1e-9):
        t = x - self.a
        at_kink = np.abs(t) <= atol
        lo = np.where(at_kink, -self.w, self.w * np.sign(t))
        hi = np.where(at_kink, self.w, self.w * np.sign(t))
        return lo, hi

    def prox(self, v, gamma):
        return l1_prox(self, v, gamma)

    @property
    def alpha(self):
        return 0.0

    @property
    def lip(self):
        return math.inf


def quad_prox(c: QuadraticAgentCost, v: np.ndarray, gamma: float) -> np.ndarray:
    """Solve ``(I + gamma H) x = v + 2 gamma M^T z`` with ``H`` the Hessian."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    a = np.eye(c.d) + gamma * c.hessian
    return np.linalg.solve(a, np.asarray(v, dtype=float) + gamma * c.linear)


def shrink(t: np.ndarray, tau: float) -> np.ndarray:
    return np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)


def l1_prox(c: AbsoluteAgentCost, v: np.ndarray, gamma: float) -> np.ndarray:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return c.a + shrink(np.asarray(v, dtype=float) - c.a, gamma * c.w)


class CostModel:
    """
    The separable network cost ``f(x) = sum_i f_i(x_i)``.

    Quadratic-only models take a vectorized prox path; the per-gamma system
    inverses are cached since solvers call prox with a fixed stepsize.
    """

    def __init__(self, agents: Sequence[AgentCost]):
        if not agents:
            raise ValueError("need at least one agent")
        dims = {a.d for a in agents}
        if len(dims) != 1:
            raise ValueError(f"agents disagree on dimension: {sorted(dims)}")
        self.agents = list(agents)
        self.m = len(self.agents)
        self.d = dims.pop()
        self.smooth = all(a.smooth for a in self.agents)
        self._quadratic = all(isinstance(a, QuadraticAgentCost) for a in self.agents)
        if self._quadratic:
            self._H = np.stack([a.hessian for a in self.agents])
            self._b = np.stack([a.linear for a in self.agents])
            if len({a.M.shape for a in self.agents}) == 1:
                self._M = np.stack([a.M for a in self.agents])
                self._z = np.stack([a.z for a in self.agents])
                self._lam = np.array([a.lam for a in self.agents])
        self._prox_cache: dict = {}

    def __len__(self):
        return self.m

    def __getitem__(self, i):
        return self.agents[i]

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a.alpha for a in self.agents])

    @property
    def lips(self) -> np.ndarray:
        return np.array([a.lip for a in self.agents])

    def value(self, x: np.ndarray) -> float:
        """Total cost of a stacked ``(m, d)`` point."""
        return float(np.sum(self.values(x)))

    def values(self, x: np.ndarray) -> np.ndarray:
        """Per-agent costs; ``x`` may carry leading batch axes, ``(..., m, d)``."""
        if self._quadratic and hasattr(self, "_M"):
            r = self._z - np.einsum("isk,...ik->...is", self._M, x)
            return np.sum(r * r, axis=-1) + self._lam * np.sum(x * x, axis=-1)
        if x.ndim > 2:
            return np.stack([self.values(xk) for xk in x])
        return np.array([a.value(x[i]) for i, a in enumerate(self.agents)])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Stacked gradients; accepts leading batch axes like :meth:`values`."""
        if not self.smooth:
            raise TypeError("cost model has non-smooth members")
        if self._quadratic:
            return np.einsum("ijk,...ik->...ij", self._H, x) - self._b
        if x.ndim > 2:
            return np.stack([self.gradient(xk) for xk in x])
        return np.stack([a.gradient(x[i]) for i, a in enumerate(self.agents)])

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        if self._quadratic:
            return self.gradient(x)
        return np.stack([a.subgradient(x[i]) for i, a in enumerate(self.agents)])

    def prox(self, v: np.ndarray, gamma: float | np.ndarray) -> np.ndarray:
        """Row-wise prox; ``gamma`` may be a scalar or one stepsize per agent."""
        scalar = np.ndim(gamma) == 0
        g = np.full(self.m, float(gamma)) if scalar else np.asarray(gamma, dtype=float)
        if g.shape != (self.m,):
            raise ValueError(f"need one stepsize per agent, got shape {g.shape}")
        if not np.all(g > 0):
            raise ValueError("gamma must be positive")
        if self._quadratic:
            key = float(gamma) if scalar else g.tobytes()
            inv = self._prox_cache.get(key)
            if inv is None:
                inv = np.linalg.inv(np.eye(self.d)[None] + g[:, None, None] * self._H)
                if len(self._prox_cache) > 32:
                    self._prox_cache.clear()
                self._prox_cache[key] = inv
            return np.einsum("ijk,ik->ij", inv, v + g[:, None] * self._b)
        return np.stack([a.prox(v[i], float(g[i])) for i, a in enumerate(self.agents)])


def bregman_distance(c: CostModel, agent: int, x, xp, q) -> float:
    """``f_i(x) - f_i(xp) - <q, x - xp>`` for a subgradient ``q`` of ``f_i`` at ``xp``."""
    f = c[agent]
    x, xp, q = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, xp, q))
    return f.value(x) - f.value(xp) - float(q @ (x - xp))


def aggregate_constants(c: CostModel) -> tuple[float, float]:
    """Network-wide strong convexity (min) and gradient Lipschitz (max) constants."""
    return float(np.min(c.alphas)), float(np.max(c.lips))


@dataclass
class SensorFusionProblem:
    costs: CostModel
    theta_true: np.ndarray
    noise_sigma: float
    seed: int | None
    lam_reg: float = 0.0

    @property
    def m(self):
        return self.costs.m

    @property
    def d(self):
        return self.costs.d

    @property
    def measurement_matrices(self) -> list[np.ndarray]:
        return [a.M for a in self.costs.agents]

    @property
    def measurements(self) -> list[np.ndarray]:
        return [a.z for a in self.costs.agents]


def generate_sensor_fusion(m: int, d: int, s: int, lam_reg: float, sigma: float,
                           seed: int | None) -> SensorFusionProblem:
    """
    Linear measurements ``z_i = M_i theta + noise`` with uniform ``M_i`` and
    ``theta``; the ridge ``lam_reg`` is split evenly across agents.
    """
    if min(m, d, s) < 1:
        raise ValueError("m, d and s must be positive")
    if lam_reg < 0 or sigma < 0:
        raise ValueError("lam_reg and sigma must be non-negative")
    rng = np.random.default_rng(seed)
    theta = rng.random(d)
    Ms = rng.random((m, s, d))
    noise = rng.normal(0.0, sigma, size=(m, s)) if sigma > 0 else np.zeros((m, s))
    lam = lam_reg / m
    agents = [QuadraticAgentCost(Ms[i], Ms[i] @ theta + noise[i], lam) for i in range(m)]
    return SensorFusionProblem(CostModel(agents), theta, float(sigma), seed, float(lam_reg))


def save_problem(path: str | Path, prob: SensorFusionProblem) -> None:
    """JSON dump; Python floats round-trip exactly."""
    payload = {
        "m": prob.m,
        "d": prob.d,
        "lam_reg": prob.lam_reg,
        "sigma": prob.noise_sigma,
        "seed": prob.seed,
        "theta_true": prob.theta_true.tolist(),
        "M": [a.M.tolist() for a in prob.costs.agents],
        "z": [a.z.tolist() for a in prob.costs.agents],
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_problem(path: str | Path) -> SensorFusionProblem:
    raw = json.loads(Path(path).read_text())
    lam = raw["lam_reg"] / raw["m"]
    agents = [QuadraticAgentCost(np.array(M), np.array(z), lam) for M, z in zip(raw["M"], raw["z"])]
    return SensorFusionProblem(CostModel(agents), np.array(raw["theta_true"]), raw["sigma"],
                               raw["seed"], raw["lam_reg"])
