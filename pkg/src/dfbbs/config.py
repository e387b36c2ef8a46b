"""
Line-oriented experiment configuration.

A config file is a list of ``section.key = value`` lines. ``#`` starts a
comment; blank lines are ignored. Lists are comma separated. Per-solver
overrides live under ``solver.<label>.<key>``; a label that is not itself an
algorithm name must set ``solver.<label>.algorithm``.

Example::

    problem.m = 20
    network.r = 1.0
    solver.algorithms = dfbbs, admm_a
    solver.admm_a.algorithm = dadmm
    solver.admm_a.penalty = 0.05
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .solvers import ALGORITHMS, SCHEDULES


class ConfigError(ValueError):
    """Invalid configuration text; messages carry line numbers where known."""


AUTO = "auto"
_LABEL = re.compile(r"^[A-Za-z][A-Za-z0-9_-]*$")


def _to_int(v: str) -> int:
    return int(v)


def _to_float(v: str) -> float:
    return float(v)


def _to_bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _to_float_list(v: str) -> tuple[float, ...]:
    return tuple(float(t) for t in _split(v))


def _to_str_list(v: str) -> tuple[str, ...]:
    return tuple(_split(v))


def _to_auto_float(v: str) -> float | str:
    return AUTO if v.lower() == AUTO else float(v)


def _split(v: str) -> list[str]:
    items = [t.strip() for t in v.split(",")]
    if not items or any(not t for t in items):
        raise ValueError(f"malformed list {v!r}")
    return items


# key -> (parser, default); a default of ``None`` with required=True means mandatory
_SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "problem": {
        "m": (_to_int, None),
        "d": (_to_int, 4),
        "s": (_to_int, 1),
        "lam_reg": (_to_float, 0.0),
        "sigma": (_to_float, math.sqrt(0.1)),
        "seed": (_to_int, 0),
    },
    "network": {
        "r": (_to_float, 1.0),
        "p": (_to_float_list, (1.0,)),
        "blend": (_to_float, 0.0),
        "seed": (_to_int, 0),
        "edges": (str, None),
    },
    "solver": {
        "algorithms": (_to_str_list, None),
        "max_iter": (_to_int, 1000),
        "tol": (_to_float, 0.0),
        "gamma": (_to_auto_float, 1.0),
        "schedule": (str, "constant"),
        "penalty": (_to_float, 0.05),
        "rho": (_to_auto_float, 1.0),
        "mu": (_to_float, 0.5),
        "x0": (str, "zeros"),
    },
    "experiment": {
        "runs": (_to_int, 1),
        "base_seed": (_to_int, 0),
        "epsilon": (_to_float, 0.0),
        "stop_at_epsilon": (_to_bool, False),
    },
    "output": {
        "path": (str, "out"),
        "plots": (_to_bool, True),
        "traces": (_to_bool, True),
    },
}
_REQUIRED = {("problem", "m"), ("solver", "algorithms")}
_PER_SOLVER = {"algorithm": (str, None), "gamma": _SCHEMA["solver"]["gamma"],
               "schedule": _SCHEMA["solver"]["schedule"], "penalty": _SCHEMA["solver"]["penalty"],
               "rho": _SCHEMA["solver"]["rho"], "x0": _SCHEMA["solver"]["x0"]}


@dataclass(frozen=True)
class ProblemSpec:
    m: int
    d: int = 4
    s: int = 1
    lam_reg: float = 0.0
    sigma: float = math.sqrt(0.1)
    seed: int = 0


@dataclass(frozen=True)
class NetworkSpec:
    r: float = 1.0
    p: tuple[float, ...] = (1.0,)
    blend: float = 0.0
    seed: int = 0
    edges: str | None = None


@dataclass(frozen=True)
class SolverSpec:
    """One labelled solver; ``gamma`` and ``rho`` may be ``"auto"``."""

    label: str
    algorithm: str
    gamma: float | str = 1.0
    schedule: str = "constant"
    penalty: float = 0.05
    rho: float | str = 1.0
    x0: str = "zeros"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    network: NetworkSpec
    solvers: tuple[SolverSpec, ...]
    max_iter: int = 1000
    tol: float = 0.0
    mu: float = 0.5
    runs: int = 1
    base_seed: int = 0
    epsilon: float = 0.0
    stop_at_epsilon: bool = False
    output: Path = Path("out")
    plots: bool = True
    traces: bool = True
    source: str = field(default="", compare=False)

    @property
    def stochastic(self) -> bool:
        return any(p < 1.0 for p in self.network.p)

    def with_output(self, path: str | Path) -> "ExperimentConfig":
        return replace(self, output=Path(path))


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse config text; raises :class:`ConfigError` on the first problem found."""
    seen: dict[str, int] = {}
    values: dict[tuple, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        parts = key.split(".")
        where = f"{source}:{lineno}"
        if len(parts) == 2 and parts[0] in _SCHEMA and parts[1] in _SCHEMA[parts[0]]:
            conv = _SCHEMA[parts[0]][parts[1]][0]
            values[(parts[0], parts[1])] = _convert(conv, val, key, where)
        elif len(parts) == 3 and parts[0] == "solver" and parts[2] in _PER_SOLVER:
            if not _LABEL.match(parts[1]):
                raise ConfigError(f"{where}: invalid solver label {parts[1]!r}")
            conv = _PER_SOLVER[parts[2]][0]
            values[("solver", parts[1], parts[2])] = _convert(conv, val, key, where)
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
        _check_value(key, values[tuple(parts)], where)

    for sec, k in sorted(_REQUIRED):
        if (sec, k) not in values:
            raise ConfigError(f"{source}: missing required key '{sec}.{k}'")
    return _build(values, seen, source, text)


def _convert(conv, val: str, key: str, where: str):
    try:
        return conv(val)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None


def _check_value(key: str, v, where: str) -> None:
    name = key.rsplit(".", 1)[-1]
    positive = {"m", "d", "s", "runs", "r", "penalty"}
    if name in positive and not v > 0:
        raise ConfigError(f"{where}: {name} must be positive")
    if name in ("gamma", "rho") and v != AUTO and not v > 0:
        raise ConfigError(f"{where}: {name} must be positive")
    if name in ("lam_reg", "sigma", "tol", "epsilon", "max_iter") and v < 0:
        raise ConfigError(f"{where}: {name} must be non-negative")
    if name == "p" and not all(0.0 <= t <= 1.0 for t in v):
        raise ConfigError(f"{where}: link probabilities must lie in [0, 1]")
    if name == "blend" and not 0.0 <= v < 1.0:
        raise ConfigError(f"{where}: blend must lie in [0, 1)")
    if name == "mu" and not 0.0 < v < 1.0:
        raise ConfigError(f"{where}: mu must lie in (0, 1)")
    if name == "schedule" and v not in SCHEDULES:
        raise ConfigError(f"{where}: unknown schedule {v!r}; choose from {', '.join(SCHEDULES)}")
    if name == "x0" and v not in ("zeros", "local-anchor"):
        raise ConfigError(f"{where}: x0 must be 'zeros' or 'local-anchor'")
    if name == "algorithm" and v not in ALGORITHMS:
        raise ConfigError(f"{where}: unknown algorithm {v!r}; choose from {', '.join(ALGORITHMS)}")


def _build(values: dict, seen: dict, source: str, text: str) -> ExperimentConfig:
    def get(sec, k):
        return values.get((sec, k), _SCHEMA[sec][k][1])

    problem = ProblemSpec(**{k: get("problem", k) for k in _SCHEMA["problem"]})
    network = NetworkSpec(**{k: get("network", k) for k in _SCHEMA["network"]})

    labels = get("solver", "algorithms")
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{source}:{seen['solver.algorithms']}: repeated solver label")
    referenced = {key[1] for key in values if key[0] == "solver" and len(key) == 3}
    for lab in sorted(referenced - set(labels)):
        line = min(n for k, n in seen.items() if k.startswith(f"solver.{lab}."))
        raise ConfigError(f"{source}:{line}: solver label {lab!r} is not listed in solver.algorithms")

    solvers = []
    for lab in labels:
        if not _LABEL.match(lab):
            raise ConfigError(f"{source}:{seen['solver.algorithms']}: invalid solver label {lab!r}")
        alg = values.get(("solver", lab, "algorithm"), lab)
        if alg not in ALGORITHMS:
            where = seen.get(f"solver.{lab}.algorithm", seen["solver.algorithms"])
            raise ConfigError(f"{source}:{where}: unknown algorithm {alg!r}; "
                              f"choose from {', '.join(ALGORITHMS)} or set solver.{lab}.algorithm")
        opts = {k: values.get(("solver", lab, k), get("solver", k))
                for k in ("gamma", "schedule", "penalty", "rho", "x0")}
        if opts["schedule"] != "constant" and alg != "dsm":
            raise ConfigError(f"{source}: solver {lab!r}: diminishing schedules apply only to dsm")
        solvers.append(SolverSpec(lab, alg, **opts))

    return ExperimentConfig(
        problem, network, tuple(solvers),
        max_iter=get("solver", "max_iter"), tol=get("solver", "tol"), mu=get("solver", "mu"),
        runs=get("experiment", "runs"), base_seed=get("experiment", "base_seed"),
        epsilon=get("experiment", "epsilon"), stop_at_epsilon=get("experiment", "stop_at_epsilon"),
        output=Path(get("output", "path")), plots=get("output", "plots"),
        traces=get("output", "traces"), source=text,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), source=str(p))


def override(text: str, assignments: list[str]) -> str:
    """Replace or append ``key = value`` lines; used by ``--set`` and sweeps."""
    lines = text.splitlines()
    for a in assignments:
        if "=" not in a:
            raise ConfigError(f"override {a!r} is not of the form key=value")
        key, val = (t.strip() for t in a.split("=", 1))
        pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
        hit = [i for i, ln in enumerate(lines) if pat.match(ln.split("#", 1)[0])]
        if hit:
            lines[hit[0]] = f"{key} = {val}"
        else:
            lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
