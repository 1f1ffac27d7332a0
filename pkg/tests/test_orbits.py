from __future__ import annotations

import itertools
import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specgraph.errors import Explosion
from specgraph.orbits import (
    OrbitExpansion,
    canonical_rotation,
    classify_simple,
    enumerate_orbits,
    orbits_csv,
    primitive_vector,
    staircase_orbit_sum,
)
from specgraph.roots import SeparatorSequence, real_zeros, weyl_fit
from specgraph.secular import secular_polynomial

from conftest import complete4, interval, random_small_graph, star


def brute_cycles(S, max_len):
    """All closed walks up to max_len modulo rotation, by exhaustive product."""
    n = len(S)
    A = np.abs(S) > 0
    seen = set()
    for L in range(1, max_len + 1):
        for walk in itertools.product(range(n), repeat=L):
            if all(A[walk[(i + 1) % L], walk[i]] for i in range(L)):
                seen.add(canonical_rotation(walk))
    return seen


def test_interval_single_orbit():
    g, S = interval()
    orbits = enumerate_orbits(g, S, 2)
    assert len(orbits) == 1
    o = orbits[0]
    assert o.optical_length == pytest.approx(2.0) and o.scatter_count == 2 and o.repetition == 1
    rep = enumerate_orbits(g, S, 4)
    assert [o.repetition for o in rep] == [1, 2]
    assert rep[1].amplitude == pytest.approx(0.5)


def test_star_count_matches_brute_force():
    g, S = star()
    orbits = enumerate_orbits(g, S, 4)
    assert {o.bond_cycle for o in orbits} == brute_cycles(S, 4)
    assert [(o.scatter_count, o.bond_cycle) for o in orbits] == sorted((o.scatter_count, o.bond_cycle) for o in orbits)


def test_growth_rate_matches_leading_eigenvalue():
    g, S = complete4(2)
    lam = max(abs(np.linalg.eigvals((np.abs(S) > 0).astype(float))))
    counts = np.bincount([o.scatter_count for o in enumerate_orbits(g, S, 10)])
    assert counts[10] / counts[9] == pytest.approx(lam, rel=0.15)


def test_explosion_cap():
    g, S = complete4(2)
    with pytest.raises(Explosion):
        enumerate_orbits(g, S, 30, cap=1e5)


def test_orbit_fields_consistent():
    g, S = complete4(4)
    for o in enumerate_orbits(g, S, 6):
        assert o.optical_length > 0 and o.scatter_count >= 1
        assert abs(o.frequency - np.pi * (o.traversal_vector @ g.lengths) / g.total_length) < 1e-12
        assert canonical_rotation(o.bond_cycle) == o.bond_cycle
        assert abs(o.frequency - np.pi * (o.traversal_vector @ g.frequency_basis)) < 1e-12


@pytest.mark.parametrize("n", range(1, 7))
def test_trace_sum_rule(n):
    g, S = star()
    orbits = [o for o in enumerate_orbits(g, S, n) if o.scatter_count == n]
    assert abs(sum(n * o.amplitude for o in orbits) - np.trace(np.linalg.matrix_power(S, n))) < 1e-10


def test_log_expansion_equals_orbit_aggregation():
    g, S = complete4(5)
    P = secular_polynomial(g, S)
    a = OrbitExpansion.from_orbits(enumerate_orbits(g, S, 7), g.lengths, 7)
    b = OrbitExpansion.log_expansion(P, 7)
    da = {tuple(v): x for v, x in zip(a.vectors, a.amplitudes)}
    db = {tuple(v): x for v, x in zip(b.vectors, b.amplitudes)}
    for key in set(da) | set(db):
        assert abs(da.get(key, 0) - db.get(key, 0)) < 1e-12
    k = np.linspace(0.3, 30, 200)
    assert np.abs(a.oscillating(k) - b.oscillating(k)).max() < 1e-12


def midpoint_errors(P, M, n_gaps, L0, kmax):
    z = real_zeros(P, 1e-3, kmax, multiplicity="repeat")
    seq = SeparatorSequence(0, z, np.arange(1, len(z) + 1), L0)
    fit = weyl_fit(seq, min_zeros=2)
    mids = 0.5 * (z[1:] + z[:-1])[:n_gaps]
    exp = OrbitExpansion.log_expansion(P, M)
    return np.abs(staircase_orbit_sum(exp, fit, mids) - seq.counting(mids)), fit, exp


def test_interval_staircase():
    g, S = interval()
    P = secular_polynomial(g, S)
    err, fit, exp = midpoint_errors(P, 40, 30, 1.0, 30 * np.pi + 1)
    assert err.max() < 0.05
    below = staircase_orbit_sum(exp, fit, np.array([0.5 * np.pi]))
    assert abs(below[0] - 0.0) < 0.05
    prev = np.inf
    for M in (10, 20, 40, 80):
        e, _, _ = midpoint_errors(P, M, 30, 1.0, 30 * np.pi + 1)
        assert e.max() <= prev + 1e-12
        prev = e.max()


def test_staircase_accepts_orbit_list():
    g, S = star()
    orbits = enumerate_orbits(g, S, 5)
    k = np.linspace(1, 10, 11)
    direct = staircase_orbit_sum(orbits, lambda x: 0 * x, k, bond_lengths=g.lengths)
    agg = staircase_orbit_sum(OrbitExpansion.from_orbits(orbits, g.lengths), lambda x: 0 * x, k)
    assert np.allclose(direct, agg, atol=1e-14)
    with pytest.raises(ValueError):
        staircase_orbit_sum(orbits, lambda x: 0 * x, k)


def test_classify_examples():
    cls = classify_simple([(2, 4), (1, 2), (0, 0), (-1, -2), (1, 3)])
    assert cls.degenerate == (2,)
    by = {c.primitive: c for c in cls.classes}
    assert by[(1, 2)].members == (0, 1, 3) and by[(1, 2)].multiples == (2, 1, -1)
    assert by[(1, 3)].multiples == (1,)
    assert primitive_vector((0, -6, 9)) == ((0, 2, -3), -3)


def test_star_classes_match_bucketing():
    g, S = star()
    orbits = enumerate_orbits(g, S, 6)
    cls = classify_simple(orbits)
    buckets = set()
    for o in orbits:
        v = [int(x) for x in o.reduced_vector]
        if any(v):
            gcd = reduce(math.gcd, [abs(x) for x in v if x])
            p = [x // gcd for x in v]
            first = next(x for x in p if x)
            buckets.add(tuple(x if first > 0 else -x for x in p))
    assert {c.primitive for c in cls.classes} == buckets
    assert sum(len(c.members) for c in cls.classes) + len(cls.degenerate) == len(orbits)


def test_dynamically_distinct_orbits_share_a_class():
    g, S = star()
    orbits = enumerate_orbits(g, S, 6)
    cls = classify_simple(orbits)
    shared = [
        c for c in cls.classes
        if len({orbits[i].bond_cycle for i in c.members if orbits[i].repetition == 1}) > 1
    ]
    assert shared
    # e.g. the bounce on bond 0 and the 1-2 traverse both reduce onto the primitive (1, 0)
    assert (1, 0) in {c.primitive for c in shared}


def test_simple_flag():
    g, S = star()
    for o in enumerate_orbits(g, S, 6):
        prim, nu = primitive_vector(o.reduced_vector)
        assert o.simple_flag == (abs(nu) == 1)


def test_orbits_csv_columns():
    g, S = star()
    text = orbits_csv(enumerate_orbits(g, S, 3))
    assert text.splitlines()[0] == "cycle,length,scatter_count,re_A,im_A,omega,class_id"


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_sum_rule_random_graphs(seed):
    g, S = random_small_graph(np.random.default_rng(seed))
    orbits = enumerate_orbits(g, S, 5)
    for n in range(1, 6):
        total = sum(n * o.amplitude for o in orbits if o.scatter_count == n)
        assert abs(total - np.trace(np.linalg.matrix_power(S, n))) < 1e-10
