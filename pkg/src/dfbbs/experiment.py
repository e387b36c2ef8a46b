"""
Experiment harness: builds the instance described by an
:class:`ExperimentConfig`, runs every (solver, p, run) cell and writes CSVs.

Output layout under ``cfg.output``::

    traces/<label>_p<p>_run<i>.csv   per-run traces (if output.traces)
    aggregate_<label>_p<p>.csv       mean / sample std across runs
    fpr_p<p>.csv                     mean rel_fpr of every solver side by side
    neps.csv, neps_summary.csv       first k with rel_fpr <= eps (if epsilon > 0)
    failures.csv                     failed or diverged cells (always written)
    *.png                            figures (if output.plots)
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import AUTO, ConfigError, ExperimentConfig, SolverSpec
from .costs import SensorFusionProblem, aggregate_constants, generate_sensor_fusion
from .metrics import IterationRecord
from .oracle import SaddlePoint, centralized_solve
from .solvers import (ConfigurationError, SolverConfig, StochasticNetwork, Trace, run,
                      stepsize_bound)
from .topology import (Graph, LinkFailureModel, SpectralReport, connected_geometric_graph,
                       metropolis_weights, read_edge_list, validate_weights)

log = logging.getLogger(__name__)

THREADS_ENV = "DFBBS_THREADS"
NEPS_NOT_REACHED = -1
# margin above the stochastic lower stepsize bound, and below the gradient upper bound
AUTO_ABOVE = 1.05
AUTO_BELOW = 0.9
# hand-tuned harmonic DSM constant
AUTO_HARMONIC = 2.0

METRIC_COLUMNS = [c for c in IterationRecord.columns() if c != "k"]
TRACE_HEADER = ["iter"] + METRIC_COLUMNS


@dataclass
class Instance:
    problem: SensorFusionProblem
    graph: Graph
    w: np.ndarray
    report: SpectralReport
    truth: SaddlePoint
    network_seed: int
    alpha: float
    lip: float


@dataclass
class Aggregate:
    """Per-iteration mean and sample std across runs; shorter runs count as missing."""

    iters: np.ndarray
    n_runs: np.ndarray
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]


@dataclass
class ExperimentResult:
    files: list[Path] = field(default_factory=list)
    traces: dict[tuple[str, float], list[Trace | None]] = field(default_factory=dict)
    failures: list[tuple[str, float, int, str]] = field(default_factory=list)
    neps: dict[tuple[str, float], list[int]] = field(default_factory=dict)


# ---------------------------------------------------------------- setup

def build_instance(cfg: ExperimentConfig) -> Instance:
    pr, nw = cfg.problem, cfg.network
    prob = generate_sensor_fusion(pr.m, pr.d, pr.s, pr.lam_reg, pr.sigma, pr.seed)
    if nw.edges:
        g, w = read_edge_list(nw.edges)
        if g.m != pr.m:
            raise ConfigError(f"edge list has m={g.m}, problem has m={pr.m}")
        if nw.blend:
            w = (1.0 - nw.blend) * w + nw.blend * np.eye(pr.m)
        seed_used = nw.seed
    else:
        g, seed_used = connected_geometric_graph(pr.m, nw.r, nw.seed)
        w = metropolis_weights(g, nw.blend)
    report = validate_weights(w)
    alpha, lip = aggregate_constants(prob.costs)
    return Instance(prob, g, w, report, centralized_solve(prob.costs), seed_used, alpha, lip)


def resolve_solver(spec: SolverSpec, inst: Instance, p: float, cfg: ExperimentConfig) -> SolverConfig:
    """Turn a labelled spec into a :class:`SolverConfig`, filling ``auto`` values."""
    stochastic = p < 1.0
    gamma = spec.gamma
    if gamma == AUTO:
        gamma = auto_gamma(spec, inst, stochastic, cfg.mu)
    rho = inst.lip if spec.rho == AUTO else spec.rho
    if not (math.isfinite(rho) and rho > 0):
        raise ConfigurationError(f"{spec.label}: rho=auto needs a finite positive Lipschitz constant")
    stop = cfg.epsilon if cfg.stop_at_epsilon else 0.0
    return SolverConfig(gamma=float(gamma), schedule=spec.schedule, max_iter=cfg.max_iter,
                        tol=cfg.tol, x0_policy=spec.x0, penalty=spec.penalty, rho=float(rho),
                        stop_rel=stop)


def auto_gamma(spec: SolverSpec, inst: Instance, stochastic: bool, mu: float = 0.5) -> float:
    alg = spec.algorithm
    if alg == "dfbbs" and stochastic:
        rng = stepsize_bound("dfbbs", inst.report, inst.alpha, inst.lip, mu=mu, stochastic=True)
        return AUTO_ABOVE * rng.lower
    if alg in ("idfbbs", "extra") or (alg == "dsm" and spec.schedule != "harmonic"):
        if not math.isfinite(inst.lip) or inst.lip <= 0:
            raise ConfigurationError(f"{spec.label}: gamma=auto needs a finite positive Lipschitz constant")
        return AUTO_BELOW * inst.report.lambda_min / inst.lip
    if alg == "dsm":
        return AUTO_HARMONIC
    return 1.0


def run_seed(cfg: ExperimentConfig, run_index: int) -> int:
    return cfg.base_seed + run_index


def first_below(rel_fpr: np.ndarray, eps: float) -> int:
    hit = np.flatnonzero(np.asarray(rel_fpr) <= eps)
    return int(hit[0]) if hit.size else NEPS_NOT_REACHED


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


# ---------------------------------------------------------------- running

def _run_cell(spec: SolverSpec, inst: Instance, p: float, r: int, cfg: ExperimentConfig):
    try:
        sc = resolve_solver(spec, inst, p, cfg)
        if p < 1.0:
            net = StochasticNetwork(inst.w, LinkFailureModel(p), run_seed(cfg, r))
        else:
            net = inst.w
        return run(spec.algorithm, inst.problem.costs, net, sc, inst.truth)
    except (ConfigurationError, ValueError, np.linalg.LinAlgError) as exc:
        return exc


def run_cells(cfg: ExperimentConfig, inst: Instance) -> ExperimentResult:
    cells = [(spec, p, r) for spec in cfg.solvers for p in cfg.network.p for r in range(cfg.runs)]
    n = _threads()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            outs = list(pool.map(lambda c: _run_cell(c[0], inst, c[1], c[2], cfg), cells))
    else:
        outs = [_run_cell(spec, inst, p, r, cfg) for spec, p, r in cells]

    res = ExperimentResult()
    for (spec, p, r), out in zip(cells, outs):
        key = (spec.label, p)
        bucket = res.traces.setdefault(key, [])
        if isinstance(out, Exception):
            res.failures.append((spec.label, p, r, f"{type(out).__name__}: {out}"))
            bucket.append(None)
            continue
        bucket.append(out)
        if not np.all(np.isfinite(out.final_state.x)):
            res.failures.append((spec.label, p, r, f"diverged at iteration {out.final_state.k}"))
        if cfg.epsilon > 0:
            res.neps.setdefault(key, []).append(first_below(out.column("rel_fpr"), cfg.epsilon))
    for key, tr in res.traces.items():
        if cfg.epsilon > 0 and any(t is None for t in tr):
            res.neps.setdefault(key, [])
    return res


def aggregate(traces: list[Trace | None]) -> Aggregate:
    """NaN-padded mean and sample std (``ddof=1``) across the available runs."""
    ok = [t for t in traces if t is not None]
    length = max((len(t.records) for t in ok), default=0)
    mean, std = {}, {}
    counts = np.zeros(length, dtype=int)
    for t in ok:
        counts[: len(t.records)] += 1
    for col in METRIC_COLUMNS:
        stack = np.full((len(ok), length), np.nan)
        for i, t in enumerate(ok):
            stack[i, : len(t.records)] = t.column(col)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.nansum(stack, axis=0)
            mu = np.where(counts > 0, s / np.maximum(counts, 1), np.nan)
            dev = np.nansum((stack - mu) ** 2, axis=0)
            sd = np.where(counts > 1, np.sqrt(dev / np.maximum(counts - 1, 1)), np.nan)
        mean[col], std[col] = mu, sd
    return Aggregate(np.arange(length), counts, mean, std)


def censored_mean(neps: list[int], max_iter: int) -> float:
    """Mean N_eps with unreached runs counted as ``max_iter + 1`` (a lower bound)."""
    if not neps:
        return math.nan
    vals = [n if n != NEPS_NOT_REACHED else max_iter + 1 for n in neps]
    return float(np.mean(vals))


def run_experiment(cfg: ExperimentConfig, inst: Instance | None = None) -> ExperimentResult:
    """Run every cell and write all CSV (and optional figure) files."""
    inst = build_instance(cfg) if inst is None else inst
    res = run_cells(cfg, inst)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.traces:
        (out / "traces").mkdir(exist_ok=True)
        for (label, p), trs in res.traces.items():
            for r, t in enumerate(trs):
                if t is not None:
                    path = out / "traces" / f"{label}_p{p:g}_run{r}.csv"
                    write_csv(t, path)
                    res.files.append(path)

    aggs = {key: aggregate(trs) for key, trs in res.traces.items()}
    for (label, p), agg in aggs.items():
        path = out / f"aggregate_{label}_p{p:g}.csv"
        write_csv(agg, path)
        res.files.append(path)

    for p in cfg.network.p:
        labels = [s.label for s in cfg.solvers]
        path = out / f"fpr_p{p:g}.csv"
        _write_side_by_side(path, labels, [aggs[(lab, p)] for lab in labels])
        res.files.append(path)

    if cfg.epsilon > 0:
        res.files.extend(_write_neps(out, cfg, res))

    path = out / "failures.csv"
    _write_rows(path, ["label", "p", "run", "reason"],
                [(lab, repr(float(p)), r, why) for lab, p, r, why in res.failures])
    res.files.append(path)

    if cfg.plots:
        from .plotting import plot_fpr, plot_neps
        res.files.extend(plot_fpr(aggs, cfg, out))
        if cfg.epsilon > 0:
            res.files.append(plot_neps(res.neps, cfg, out / "neps.png"))
    for f in res.failures:
        log.warning("failed cell %s p=%g run=%d: %s", *f)
    return res


def _write_neps(out: Path, cfg: ExperimentConfig, res: ExperimentResult) -> list[Path]:
    rows, summary = [], []
    for s in cfg.solvers:
        for p in cfg.network.p:
            vals = res.neps.get((s.label, p), [])
            for r, n in enumerate(vals):
                rows.append((s.label, repr(float(p)), r, n))
            reached = [n for n in vals if n != NEPS_NOT_REACHED]
            summary.append((s.label, repr(float(p)), len(vals), len(reached),
                            _fmt(censored_mean(vals, cfg.max_iter)),
                            _fmt(float(np.mean(reached)) if reached else math.nan),
                            _fmt(float(np.std(reached, ddof=1)) if len(reached) > 1 else math.nan)))
    a, b = out / "neps.csv", out / "neps_summary.csv"
    _write_rows(a, ["label", "p", "run", "n_eps"], rows)
    _write_rows(b, ["label", "p", "runs", "reached", "mean_censored", "mean_reached", "std_reached"], summary)
    return [a, b]


# ---------------------------------------------------------------- CSV

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_rows(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(str(c) for c in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def write_csv(obj: Trace | Aggregate, path: str | Path) -> Path:
    """
    Write a trace (one row per iteration, columns :data:`TRACE_HEADER`) or an
    aggregate (``iter,n_runs`` then ``<metric>_mean,<metric>_std``). Floats use
    17 significant digits so the file parses back bitwise.
    """
    path = Path(path)
    if isinstance(obj, Trace):
        header = TRACE_HEADER
        rows = ([str(r.k)] + [_fmt(getattr(r, c)) for c in METRIC_COLUMNS] for r in obj.records)
    elif isinstance(obj, Aggregate):
        header = ["iter", "n_runs"] + [f"{c}_{s}" for c in METRIC_COLUMNS for s in ("mean", "std")]
        rows = ([str(int(k)), str(int(obj.n_runs[k]))]
                + [_fmt(v) for c in METRIC_COLUMNS for v in (obj.mean[c][k], obj.std[c][k])]
                for k in range(obj.iters.size))
    else:
        raise TypeError(f"cannot write {type(obj).__name__} as CSV")
    _write_rows(path, header, rows)
    return path


def _write_side_by_side(path: Path, labels: list[str], aggs: list[Aggregate]) -> None:
    length = max((a.iters.size for a in aggs), default=0)
    rows = []
    for k in range(length):
        row = [str(k)]
        for a in aggs:
            row.append(_fmt(a.mean["rel_fpr"][k]) if k < a.iters.size else "nan")
        rows.append(row)
    _write_rows(path, ["iter"] + labels, rows)


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a file written by :func:`write_csv` into column arrays."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    cols: dict[str, list] = {h: [] for h in header}
    for ln in lines[1:]:
        for h, v in zip(header, ln.split(",")):
            cols[h].append(v)
    out = {}
    for h, vs in cols.items():
        if h in ("iter", "n_runs"):
            out[h] = np.array([int(v) for v in vs], dtype=int)
        else:
            out[h] = np.array([float(v) for v in vs], dtype=float)
    return out
