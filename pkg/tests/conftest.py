import numpy as np
import pytest

from adaptive_consensus.graph import build_network, laplacian

# six-agent directed network used by the paper_fig2 preset
SIX_AGENT_L = np.array([
    [2, -2, 0, 0, 0, 0],
    [0, 3, -3, 0, 0, 0],
    [-3, 0, 3, 0, 0, 0],
    [0, 0, -5, 5, 0, 0],
    [0, 0, 0, -4, 9, -5],
    [-1, 0, -2, 0, 0, 3],
], dtype=float)

SIX_AGENT_EDGES = [(2, 1, 2), (3, 2, 3), (1, 3, 3), (3, 4, 5), (4, 5, 4), (6, 5, 5), (1, 6, 1), (3, 6, 2)]


def random_spanning_digraph(rng, n, extra=0.3):
    """Random digraph on n nodes containing a directed spanning tree, weights in (0, 5]."""
    order = rng.permutation(n)
    edges = {}
    for k in range(1, n):
        parent = order[rng.integers(k)]
        edges[(parent, order[k])] = 5.0 * (1.0 - rng.random())
    for j in range(n):
        for i in range(n):
            if i != j and (j, i) not in edges and rng.random() < extra:
                edges[(j, i)] = 5.0 * (1.0 - rng.random())
    return build_network(n, [(j + 1, i + 1, w) for (j, i), w in edges.items()])


def random_digraph(rng, n, density):
    edges = [(j + 1, i + 1, 5.0 * (1.0 - rng.random()))
             for j in range(n) for i in range(n) if i != j and rng.random() < density]
    return build_network(n, edges)


@pytest.fixture
def six_lap():
    return laplacian(build_network(6, SIX_AGENT_EDGES))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed again at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
