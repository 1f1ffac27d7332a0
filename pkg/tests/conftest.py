from __future__ import annotations

import numpy as np
import pytest

from specgraph.graph import GraphSpec, bond_scattering_matrix, build_graph, custom_scattering, kirchhoff_scattering
from specgraph.secular import secular_polynomial

STAR_LENGTHS = (0.41, 0.57, 0.73)


def kirchhoff(spec: GraphSpec):
    g = build_graph(spec)
    return g, bond_scattering_matrix(g, kirchhoff_scattering(g))


def interval(length: float = 1.0):
    return kirchhoff(GraphSpec(2, [(0, 1, length)]))


def star(lengths=STAR_LENGTHS):
    return kirchhoff(GraphSpec(len(lengths) + 1, [(0, i + 1, l) for i, l in enumerate(lengths)]))


def complete4(seed: int, lo: float = 0.5, hi: float = 1.5):
    rng = np.random.default_rng(seed)
    return kirchhoff(GraphSpec(4, [(a, b, rng.uniform(lo, hi)) for a in range(4) for b in range(a + 1, 4)]))


def chain(lengths, reflection: float):
    """Path graph whose interior vertices reflect weakly; strictly regular for small reflection."""
    g = build_graph(GraphSpec(len(lengths) + 1, [(i, i + 1, l) for i, l in enumerate(lengths)]))
    t = np.sqrt(1 - reflection**2)
    m = np.array([[reflection, t], [t, -reflection]])
    S = bond_scattering_matrix(g, custom_scattering(g, {v: m for v in range(1, len(lengths))}))
    return g, S


def random_small_graph(rng, max_vertices: int = 4):
    """Connected multigraph on <= 4 vertices with <= 8 directed bonds."""
    n = int(rng.integers(2, max_vertices + 1))
    bonds = [(int(rng.integers(0, i)), i, float(rng.uniform(0.3, 1.7))) for i in range(1, n)]
    while len(bonds) < 4 and rng.uniform() < 0.6:
        a, b = rng.choice(n, size=2, replace=False)
        bonds.append((int(a), int(b), float(rng.uniform(0.3, 1.7))))
    return kirchhoff(GraphSpec(n, bonds))


@pytest.fixture(scope="session")
def star_poly():
    g, S = star()
    return g, S, secular_polynomial(g, S)


@pytest.fixture(scope="session")
def k4_poly():
    g, S = complete4(1)
    return g, S, secular_polynomial(g, S)


@pytest.fixture(scope="session")
def chain3_poly():
    g, S = chain((0.53, 0.71, 0.97), 0.3)
    return g, S, secular_polynomial(g, S)


def ring(n_bonds: int, reflection: float, seed: int):
    """Cycle of random lengths with the same weak reflection at every vertex."""
    rng = np.random.default_rng(seed)
    g = build_graph(GraphSpec(n_bonds, [(i, (i + 1) % n_bonds, rng.uniform(0.5, 1.5)) for i in range(n_bonds)]))
    t = np.sqrt(1 - reflection**2)
    m = np.array([[reflection, t], [t, -reflection]])
    return g, bond_scattering_matrix(g, custom_scattering(g, {v: m for v in range(n_bonds)}))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
