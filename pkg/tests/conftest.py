import math

import numpy as np
import pytest

from dfbbs.costs import CostModel, QuadraticAgentCost, generate_sensor_fusion
from dfbbs.topology import Graph, connected_geometric_graph, metropolis_weights

ANCHORS = (0.0, 3.0, 6.0)


@pytest.fixture
def path3():
    """Path graph 0-1-2 with its Metropolis matrix."""
    g = Graph(3, ((0, 1), (1, 2)))
    return g, metropolis_weights(g)


@pytest.fixture
def anchors3():
    """f_i(x) = (x - a_i)^2 with a = (0, 3, 6)."""
    return CostModel([QuadraticAgentCost.anchor([a]) for a in ANCHORS])


def random_instance(m=10, d=3, s=2, lam_reg=0.5, seed=0, r=1.5):
    prob = generate_sensor_fusion(m, d, s, lam_reg, math.sqrt(0.1), seed)
    g, _ = connected_geometric_graph(m, r, seed)
    return prob, g, metropolis_weights(g)


# ---------------------------------------------------------------- acceptance reporting

def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, ok, detail)``; summarized at the end of the session."""
    store = request.config._acceptance

    def record(criterion: int, ok: bool, detail: str):
        store.setdefault(criterion, []).append((bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = getattr(config, "_acceptance", {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(store):
        parts = store[crit]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
