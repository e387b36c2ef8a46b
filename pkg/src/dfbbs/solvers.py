"""
Update rules and the synchronous iteration engine.

Every step function maps a :class:`MultiAgentState` to a new one without
mutating its input. Mixing acts row-wise on ``(m, d)`` arrays.

Algorithms
----------
``dfbbs``   prox step on ``W x + gamma y``, then the dual correction
``idfbbs``  gradient (inexact) variant of ``dfbbs``
``dsm``     distributed subgradient method
``extra``   corrected DSM written with the running correction sum
``pextra``  proximal counterpart of ``extra``
``cp``      primal-dual (Chambolle-Pock type) form with ``tau = 1/delta = gamma``
``dadmm``   decentralized ADMM on the unweighted graph
``dlm``     linearized decentralized ADMM
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .costs import AbsoluteAgentCost, CostModel, LinearAgentCost, QuadraticAgentCost
from .metrics import IterationRecord, batch_records, fixed_point_residual
from .oracle import SaddlePoint, centralized_solve
from .topology import (Graph, LinkFailureModel, SpectralReport, canonical_edges,
                       expected_weight_matrix, sample_network)

ALGORITHMS = ("dfbbs", "idfbbs", "dsm", "extra", "pextra", "cp", "dadmm", "dlm")
SMOOTH_ONLY = ("idfbbs", "extra", "dlm")
SCHEDULES = ("constant", "sqrt", "harmonic")

# stream label for per-iteration link draws; problem data uses other labels
NETWORK_STREAM = 2


class ConfigurationError(ValueError):
    pass


@dataclass
class MultiAgentState:
    x: np.ndarray
    y: np.ndarray
    k: int = 0
    aux: dict = field(default_factory=dict)


@dataclass
class SolverConfig:
    """
    Run parameters.

    ``gamma`` is the stepsize (the DSM constant for diminishing schedules);
    ``penalty`` and ``rho`` are the ADMM-family ``c`` and DLM proximal weight.
    A run stops after ``max_iter`` rounds, on non-finite iterates, when the
    fixed-point residual drops to ``tol`` (if positive) or when the relative
    distance to the optimum drops to ``stop_rel`` (if positive).
    """

    gamma: float = 1.0
    schedule: str = "constant"
    max_iter: int = 1000
    tol: float = 0.0
    x0_policy: Union[str, np.ndarray] = "zeros"
    y0: np.ndarray | None = None
    penalty: float = 0.05
    rho: float = 1.0
    store_iterates: bool = False
    stop_rel: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")
        if self.max_iter < 0:
            raise ConfigurationError("max_iter must be non-negative")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")
        if isinstance(self.x0_policy, str) and self.x0_policy not in ("zeros", "local-anchor"):
            raise ConfigurationError(f"unknown x0 policy {self.x0_policy!r}")


@dataclass(frozen=True)
class StochasticNetwork:
    """Base mixing matrix with i.i.d. Bernoulli link failures, seeded."""

    base: np.ndarray
    failure: LinkFailureModel
    seed: int

    @property
    def mean(self) -> np.ndarray:
        return expected_weight_matrix(self.base, self.failure.p)


@dataclass
class Trace:
    algorithm: str
    records: list[IterationRecord]
    final_state: MultiAgentState
    wall_time: float
    iterates: list[np.ndarray] | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


@dataclass(frozen=True)
class AdmissibleRange:
    """Open interval ``(lower, upper)`` of admissible stepsizes."""

    lower: float = 0.0
    upper: float = math.inf

    def __contains__(self, gamma: float) -> bool:
        return self.lower < gamma < self.upper


# ---------------------------------------------------------------- steps

def _check_conservation(y: np.ndarray) -> None:
    drift = np.max(np.abs(y.sum(axis=0))) if y.size else 0.0
    if drift > 1e-8 * max(1.0, float(np.max(np.abs(y)))):
        warnings.warn(f"dual column sums are not zero ({drift:.3g}); conservation will not hold",
                      RuntimeWarning, stacklevel=3)


def dfbbs_step(st: MultiAgentState, w: np.ndarray, c: CostModel, gamma: float) -> MultiAgentState:
    """``x+ = prox_{gamma f}(W x + gamma y)``, ``y+ = y - (I - W) x+ / gamma``."""
    if st.k == 0:
        _check_conservation(st.y)
    x = c.prox(w @ st.x + gamma * st.y, gamma)
    y = st.y - (x - w @ x) / gamma
    return MultiAgentState(x, y, st.k + 1, st.aux)


def idfbbs_step(st: MultiAgentState, w: np.ndarray, c: CostModel, gamma: float) -> MultiAgentState:
    """``x+ = W x - gamma (grad f(x) - y)``, then the same dual step as D-FBBS."""
    x = w @ st.x - gamma * (c.gradient(st.x) - st.y)
    y = st.y - (x - w @ x) / gamma
    return MultiAgentState(x, y, st.k + 1, st.aux)


def dsm_step(st: MultiAgentState, w: np.ndarray, c: CostModel, gamma_k: float) -> MultiAgentState:
    x = w @ st.x - gamma_k * c.subgradient(st.x) if gamma_k else w @ st.x
    return MultiAgentState(x, st.y, st.k + 1, st.aux)


def extra_step(st: MultiAgentState, w: np.ndarray, c: CostModel, gamma: float) -> MultiAgentState:
    """
    ``x+ = W x - gamma grad f(x) - S`` with ``S = sum_{i<=k} (I - W) x_i``.
    The reported dual is ``-S / gamma``.
    """
    S = st.aux["S"]
    x = w @ st.x - gamma * c.gradient(st.x) - S
    S = S + (x - w @ x)
    return MultiAgentState(x, -S / gamma, st.k + 1, {**st.aux, "S": S})


def pextra_step(st: MultiAgentState, w: np.ndarray, c: CostModel, gamma: float) -> MultiAgentState:
    """``x+ = prox_{gamma f}(W x - S)``."""
    S = st.aux["S"]
    x = c.prox(w @ st.x - S, gamma)
    S = S + (x - w @ x)
    return MultiAgentState(x, -S / gamma, st.k + 1, {**st.aux, "S": S})


def cp_step(st: MultiAgentState, w: np.ndarray, c: CostModel, tau: float, delta: float | None = None) -> MultiAgentState:
    """
    ``x+ = prox_{tau f}(x + tau (2 y - y_prev))``, ``y+ = y - delta (I - W) x+``.
    ``st.aux['y_prev']`` holds the previous dual.
    """
    delta = 1.0 / tau if delta is None else delta
    y_prev = st.aux["y_prev"]
    x = c.prox(st.x + tau * (2.0 * st.y - y_prev), tau)
    y = st.y - delta * (x - w @ x)
    return MultiAgentState(x, y, st.k + 1, {**st.aux, "y_prev": st.y})


def _support(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Degrees and 0/1 adjacency of the off-diagonal support of ``w``."""
    A = (w != 0.0).astype(float)
    np.fill_diagonal(A, 0.0)
    return A.sum(axis=1), A


def _degree_mats(g: Graph | tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(g, Graph):
        deg, A = g.degrees.astype(float), g.adjacency()
    else:
        deg, A = g
    if np.any(deg == 0):
        isolated = np.flatnonzero(deg == 0).tolist()
        raise ConfigurationError(f"nodes {isolated} have no neighbors; ADMM-type updates are undefined")
    return deg, A


def dadmm_step(st: MultiAgentState, g: Graph | tuple, c: CostModel, cc: float) -> MultiAgentState:
    """
    ``x+ = (2cD + df)^{-1}(c (D + A) x - y)``, ``y+ = y + c (D - A) x+``.

    Agent ``i`` solves ``argmin f_i(x) + c d_i ||x||^2 - <r_i, x>``, which is
    ``prox_{f_i / (2 c d_i)}(r_i / (2 c d_i))``. ``g`` is a :class:`Graph` or a
    precomputed ``(degrees, adjacency)`` pair.
    """
    if not cc > 0:
        raise ConfigurationError("ADMM penalty c must be positive")
    deg, A = _degree_mats(g)
    r = cc * (deg[:, None] * st.x + A @ st.x) - st.y
    scale = 2.0 * cc * deg
    x = c.prox(r / scale[:, None], 1.0 / scale)
    y = st.y + cc * (deg[:, None] * x - A @ x)
    return MultiAgentState(x, y, st.k + 1, st.aux)


def dlm_step(st: MultiAgentState, g: Graph | tuple, c: CostModel, cc: float, rho: float) -> MultiAgentState:
    """``x+ = x - Dt^{-1}(grad f(x) + c (D - A) x + y)`` with ``Dt = 2cD + rho I``."""
    if not cc > 0 or not rho > 0:
        raise ConfigurationError("DLM needs c > 0 and rho > 0")
    deg, A = _degree_mats(g)
    lap_x = deg[:, None] * st.x - A @ st.x
    dt = 2.0 * cc * deg + rho
    x = st.x - (c.gradient(st.x) + cc * lap_x + st.y) / dt[:, None]
    y = st.y + cc * (deg[:, None] * x - A @ x)
    return MultiAgentState(x, y, st.k + 1, st.aux)


# ---------------------------------------------------------------- engine

def initial_point(c: CostModel, policy) -> np.ndarray:
    if not isinstance(policy, str):
        x0 = np.array(policy, dtype=float)
        if x0.shape != (c.m, c.d):
            raise ConfigurationError(f"explicit x0 must have shape {(c.m, c.d)}, got {x0.shape}")
        return x0
    if policy == "zeros":
        return np.zeros((c.m, c.d))
    rows = []
    for a in c.agents:
        if isinstance(a, QuadraticAgentCost):
            rows.append(np.linalg.lstsq(a.hessian, a.linear, rcond=None)[0])
        elif isinstance(a, AbsoluteAgentCost):
            rows.append(a.a.copy())
        elif isinstance(a, LinearAgentCost):
            rows.append(np.zeros(c.d))
        else:
            raise ConfigurationError(f"no local anchor for {type(a).__name__}")
    return np.stack(rows)


def stepsize_at(config: SolverConfig, k: int) -> float:
    """DSM stepsize for iteration ``k >= 1``."""
    if config.schedule == "sqrt":
        return config.gamma / math.sqrt(k)
    if config.schedule == "harmonic":
        return config.gamma / k
    return config.gamma


def check_config(alg: str, c: CostModel, config: SolverConfig) -> None:
    if alg not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {alg!r}; choose from {ALGORITHMS}")
    if alg in SMOOTH_ONLY and not c.smooth:
        raise ConfigurationError(f"{alg} needs smooth costs (finite Lipschitz gradients)")
    if config.schedule != "constant" and alg != "dsm":
        raise ConfigurationError("diminishing schedules are only defined for dsm")
    if alg in ("dadmm", "dlm") and not config.penalty > 0:
        raise ConfigurationError("ADMM penalty c must be positive")
    if alg == "dlm" and not config.rho > 0:
        raise ConfigurationError("DLM parameter rho must be positive")


def init_state(alg: str, c: CostModel, w: np.ndarray, config: SolverConfig) -> MultiAgentState:
    x0 = initial_point(c, config.x0_policy)
    y0 = np.zeros_like(x0) if config.y0 is None else np.array(config.y0, dtype=float)
    aux = {}
    if alg in ("extra", "pextra"):
        aux["S"] = x0 - w @ x0
        y0 = -aux["S"] / config.gamma
    elif alg == "cp":
        # virtual previous dual that makes the first step match D-FBBS
        aux["y_prev"] = y0 + (x0 - w @ x0) / config.gamma
    return MultiAgentState(x0, y0, 0, aux)


def apply_step(alg: str, st: MultiAgentState, w: np.ndarray, c: CostModel, config: SolverConfig,
               support: tuple[np.ndarray, np.ndarray] | None = None) -> MultiAgentState:
    """One round of ``alg``; ``support`` optionally caches the (degree, adjacency) pair of ``w``."""
    gamma = config.gamma
    if alg == "dfbbs":
        return dfbbs_step(st, w, c, gamma)
    if alg == "idfbbs":
        return idfbbs_step(st, w, c, gamma)
    if alg == "dsm":
        return dsm_step(st, w, c, stepsize_at(config, st.k + 1))
    if alg == "extra":
        return extra_step(st, w, c, gamma)
    if alg == "pextra":
        return pextra_step(st, w, c, gamma)
    if alg == "cp":
        return cp_step(st, w, c, gamma)
    g = _support(w) if support is None else support
    if alg == "dadmm":
        return dadmm_step(st, g, c, config.penalty)
    if alg == "dlm":
        return dlm_step(st, g, c, config.penalty, config.rho)
    raise ConfigurationError(f"unknown algorithm {alg!r}")


def dual_estimate(alg: str, st: MultiAgentState) -> np.ndarray:
    """Dual iterate in the sign convention ``y* = grad f(x*)``."""
    return -st.y if alg in ("dadmm", "dlm") else st.y


def run(alg: str, c: CostModel, net: np.ndarray | StochasticNetwork, config: SolverConfig,
        truth: SaddlePoint | None = None) -> Trace:
    """
    Synchronous rounds of ``alg``. On a :class:`StochasticNetwork` a fresh
    ``W_k`` is drawn every round (one draw per base edge, canonical order)
    and metrics use the mean matrix as reference.
    """
    check_config(alg, c, config)
    stochastic = isinstance(net, StochasticNetwork)
    w_ref = net.mean if stochastic else np.asarray(net, dtype=float)
    base = net.base if stochastic else w_ref
    if base.shape != (c.m, c.m):
        raise ConfigurationError(f"weight matrix shape {base.shape} does not match {c.m} agents")
    if truth is None:
        truth = centralized_solve(c)
    if stochastic:
        rng = np.random.default_rng([net.seed, NETWORK_STREAM])
        edges = canonical_edges(net.base)

    t0 = time.perf_counter()
    st = init_state(alg, c, base, config)
    x0 = st.x
    xs, ys = [st.x], [dual_estimate(alg, st)]
    support = _support(base) if alg in ("dadmm", "dlm") and not stochastic else None
    if config.stop_rel > 0:
        den = float(np.sum((x0 - truth.x_star) ** 2))
    for _ in range(config.max_iter):
        w_k = sample_network(net.base, net.failure, rng, edges) if stochastic else base
        x_prev = st.x
        st = apply_step(alg, st, w_k, c, config, support)
        xs.append(st.x)
        ys.append(dual_estimate(alg, st))
        if not np.all(np.isfinite(st.x)):
            break
        if config.tol > 0 and fixed_point_residual(x_prev, st.x, w_ref) <= config.tol:
            break
        if config.stop_rel > 0 and den > 0 and float(np.sum((st.x - truth.x_star) ** 2)) / den <= config.stop_rel:
            break
    wall = time.perf_counter() - t0
    records = batch_records(np.stack(xs), np.stack(ys), c, w_ref, truth)
    return Trace(alg, records, st, wall, xs if config.store_iterates else None)


def extra_run(c: CostModel, w: np.ndarray, config: SolverConfig, truth: SaddlePoint | None = None) -> Trace:
    return run("extra", c, w, config, truth)


def pextra_run(c: CostModel, w: np.ndarray, config: SolverConfig, truth: SaddlePoint | None = None) -> Trace:
    return run("pextra", c, w, config, truth)


def chambolle_pock_run(c: CostModel, w: np.ndarray, config: SolverConfig,
                       truth: SaddlePoint | None = None) -> Trace:
    return run("cp", c, w, config, truth)


def stepsize_bound(alg: str, report: SpectralReport, alpha: float, lip: float,
                   mu: float = 0.5, stochastic: bool = False) -> AdmissibleRange:
    """
    Admissible stepsizes. Gradient variants need ``gamma < lambda_min(W) / L``;
    D-FBBS on stochastic networks needs
    ``gamma > 2 (1 - mu)(1 - lambda_min) / (alpha mu) + 2 lambda_max / alpha``
    with ``lambda_max = 1`` (samples are stochastic) and ``lambda_min`` from
    the base matrix (link failures only add diagonal mass).
    """
    if alg in ("idfbbs", "extra"):
        if not math.isfinite(lip):
            raise ConfigurationError("gradient stepsize bound needs a finite Lipschitz constant")
        return AdmissibleRange(0.0, report.lambda_min / lip if lip > 0 else math.inf)
    if alg == "dfbbs" and stochastic:
        if not 0 < mu < 1:
            raise ConfigurationError("mu must lie in (0, 1)")
        if not alpha > 0:
            raise ConfigurationError("stochastic bound needs strongly convex costs (alpha > 0)")
        lam_min, lam_max = report.lambda_min, 1.0
        return AdmissibleRange(2 * (1 - mu) * (1 - lam_min) / (alpha * mu) + 2 * lam_max / alpha, math.inf)
    return AdmissibleRange(0.0, math.inf)
