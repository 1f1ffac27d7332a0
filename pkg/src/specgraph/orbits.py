"""Periodic orbits, their amplitudes, and the orbit sum for the staircase.

Amplitudes follow from  log det(I - D S) = -sum_n tr[(D S)^n] / n:  each
closed directed-bond cycle p contributes  A_p exp(i k L_p)  to
-log det with A_p = (product of S entries around p) / repetition, so that

    N(k) = Nbar(k) + (1/pi) Im sum_p A_p exp(i k L_p).

Explicit enumeration grows like (leading eigenvalue)^n, so large truncation
orders use :meth:`OrbitExpansion.log_expansion`, which computes the same
coefficients aggregated by traversal vector straight from the determinant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from ._parallel import ordered_map
from .errors import Explosion
from .secular import ExponentialPolynomial

DEFAULT_CAP = 10**7


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    bond_cycle: tuple[int, ...]
    repetition: int
    traversal_vector: np.ndarray = field(repr=False)
    optical_length: float
    amplitude: complex
    frequency: float

    @property
    def scatter_count(self) -> int:
        return len(self.bond_cycle)

    @property
    def reduced_vector(self) -> np.ndarray:
        m = self.traversal_vector
        return m[:-1] - m[-1]

    @property
    def simple_flag(self) -> bool:
        nz = [int(abs(x)) for x in self.reduced_vector if x]
        return bool(nz) and reduce(math.gcd, nz) == 1


def canonical_rotation(cycle) -> tuple[int, ...]:
    """Lexicographically minimal rotation."""
    c = tuple(cycle)
    return min(c[i:] + c[:i] for i in range(len(c))) if c else c


def _period(c: tuple) -> int:
    n = len(c)
    for p in range(1, n + 1):
        if n % p == 0 and c == c[p:] + c[:p]:
            return p
    return n


def predicted_cycle_count(S, max_scatterings: int) -> float:
    """Sum_n tr(A^n)/n for the 0/1 pattern A of S; upper bound on cycles mod rotation."""
    A = (np.abs(np.asarray(S)) > 0).astype(float)
    total, P = 0.0, np.eye(len(A))
    for n in range(1, max_scatterings + 1):
        P = P @ A
        total += np.trace(P) / n
    return total


def _cycles_from(start: int, succ: list[list[int]], max_len: int) -> list[tuple[int, ...]]:
    """Canonical closed walks whose minimal element is ``start`` and that begin there."""
    out = []
    path = [start]
    stack = [iter([d for d in succ[start] if d >= start])]
    while stack:
        nxt = next(stack[-1], None)
        if nxt is None:
            stack.pop()
            path.pop()
            continue
        if nxt == start:
            c = tuple(path)
            if c == canonical_rotation(c):
                out.append(c)
        if len(path) < max_len:
            path.append(nxt)
            stack.append(iter([d for d in succ[nxt] if d >= start]))
    return out


def enumerate_orbits(graph, S, max_scatterings: int, cap: int = DEFAULT_CAP, threads: int | None = None) -> list[PeriodicOrbit]:
    """All directed-bond cycles with at most ``max_scatterings`` steps, modulo rotation.

    Repeated traversals are separate orbits carrying their repetition number.
    Order: by scatter count, then by canonical cycle.
    """
    if max_scatterings < 1:
        raise ValueError("max_scatterings must be >= 1")
    S = np.asarray(S, dtype=complex)
    predicted = predicted_cycle_count(S, max_scatterings)
    if predicted > cap:
        raise Explosion(f"about {predicted:.3g} cycles up to length {max_scatterings} exceeds cap {cap}")
    n = len(S)
    # successors of d: directed bonds d' with S[d', d] != 0
    succ = [[int(dp) for dp in np.flatnonzero(S[:, d])] for d in range(n)]
    parts = ordered_map(lambda s: _cycles_from(s, succ, max_scatterings), range(n), threads)
    cycles = sorted((c for part in parts for c in part), key=lambda c: (len(c), c))
    bond_of = graph.bond_of
    L0 = graph.total_length
    orbits = []
    for c in cycles:
        rep = len(c) // _period(c)
        amp = complex(np.prod([S[c[(i + 1) % len(c)], c[i]] for i in range(len(c))])) / rep
        m = np.bincount(bond_of[list(c)], minlength=graph.bond_count).astype(np.int64)
        L = float(m @ graph.lengths)
        orbits.append(PeriodicOrbit(c, rep, m, L, amp, np.pi * L / L0))
    return orbits


# -- aggregated expansions ----------------------------------------------------
@dataclass(frozen=True, eq=False)
class OrbitExpansion:
    """Coefficients A_m of exp(i k L_m), one per traversal vector m.

    ``amplitudes`` are the coefficients of -log of the normalized determinant
    (or derivative polynomial), truncated at total degree ``max_order``.
    """

    vectors: np.ndarray
    amplitudes: np.ndarray
    bond_lengths: np.ndarray
    max_order: int
    level: int = 0

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.int64).reshape(-1, len(self.bond_lengths))
        a = np.asarray(self.amplitudes, dtype=complex)
        order = np.lexsort(tuple(v.T[::-1]) + (v.sum(axis=1),)) if len(v) else np.zeros(0, int)
        object.__setattr__(self, "vectors", v[order])
        object.__setattr__(self, "amplitudes", a[order])
        object.__setattr__(self, "bond_lengths", np.asarray(self.bond_lengths, dtype=float))

    def __len__(self):
        return len(self.amplitudes)

    @property
    def lengths(self) -> np.ndarray:
        return self.vectors @ self.bond_lengths

    @property
    def total_length(self) -> float:
        return float(self.bond_lengths.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return np.pi * self.lengths / self.total_length

    @property
    def scatter_counts(self) -> np.ndarray:
        return self.vectors.sum(axis=1)

    @property
    def reduced_vectors(self) -> np.ndarray:
        return self.vectors[:, :-1] - self.vectors[:, -1:]

    def truncate(self, order: int) -> "OrbitExpansion":
        keep = self.scatter_counts <= order
        return OrbitExpansion(self.vectors[keep], self.amplitudes[keep], self.bond_lengths, min(order, self.max_order), self.level)

    @classmethod
    def from_orbits(cls, orbits, bond_lengths, max_order: int | None = None) -> "OrbitExpansion":
        bond_lengths = np.asarray(bond_lengths, dtype=float)
        if not orbits:
            return cls(np.zeros((0, len(bond_lengths)), np.int64), np.zeros(0, complex), bond_lengths, max_order or 0)
        vecs = np.array([o.traversal_vector for o in orbits])
        amps = np.array([o.amplitude for o in orbits])
        uniq, inv = np.unique(vecs, axis=0, return_inverse=True)
        summed = np.zeros(len(uniq), dtype=complex)
        np.add.at(summed, inv.ravel(), amps)
        order = max_order if max_order is not None else max(o.scatter_count for o in orbits)
        return cls(uniq, summed, bond_lengths, order)

    @classmethod
    def log_expansion(cls, poly: ExponentialPolynomial, max_order: int, level: int = 0) -> "OrbitExpansion":
        """-log(poly / constant term) as a multivariate series in exp(i k l_b), degree <= max_order."""
        if poly.vectors is None:
            raise ValueError("log expansion needs a polynomial with bond-count vectors")
        const_mask = ~poly.vectors.any(axis=1)
        if not const_mask.any():
            raise ValueError("polynomial has no constant term")
        c0 = poly.vector_amplitudes[const_mask][0]
        vec = poly.vectors[~const_mask]
        amp = poly.vector_amplitudes[~const_mask] / c0
        keys, coefs = _log_series(vec, amp, max_order)
        vectors = _decode(keys, vec.shape[1], max_order)
        keep = coefs != 0
        return cls(vectors[keep], -coefs[keep], poly.bond_lengths, max_order, level)

    def oscillating(self, k) -> np.ndarray:
        """(1/pi) Im sum A_m exp(i k L_m), summed in length order."""
        k = np.asarray(k, dtype=float)
        flat = k.ravel()
        L = self.lengths
        order = np.argsort(L, kind="stable")
        L, A = L[order], self.amplitudes[order]
        out = np.empty(flat.shape)
        step = max(1, 2_000_000 // max(len(L), 1))
        for s in range(0, len(flat), step):
            out[s:s + step] = (np.exp(1j * np.outer(flat[s:s + step], L)) @ A).imag / np.pi
        return out.reshape(k.shape)

    def to_csv(self) -> str:
        lines = ["vector,length,scatter_count,re_A,im_A,omega"]
        for m, L, n, a, w in zip(self.vectors, self.lengths, self.scatter_counts, self.amplitudes, self.frequencies):
            lines.append(f"{' '.join(map(str, m))},{L:.17g},{n},{a.real:.17g},{a.imag:.17g},{w:.17g}")
        return "\n".join(lines) + "\n"


def _encode(vectors: np.ndarray, base: int) -> np.ndarray:
    weights = base ** np.arange(vectors.shape[1], dtype=np.int64)
    return vectors.astype(np.int64) @ weights


def _decode(keys: np.ndarray, dim: int, max_order: int) -> np.ndarray:
    base = max_order + 1
    out = np.empty((len(keys), dim), dtype=np.int64)
    rest = keys.copy()
    for i in range(dim):
        out[:, i] = rest % base
        rest //= base
    return out


def _combine(keys, coefs):
    u, inv = np.unique(keys, return_inverse=True)
    s = np.zeros(len(u), dtype=complex)
    np.add.at(s, inv.ravel(), coefs)
    return u, s


def _log_series(vectors, amps, M):
    """log(1 + sum amps x^vectors) truncated at total degree M.

    Homogeneous parts obey  d Y_d = d H_d - sum_{e<d} e Y_e H_{d-e}.
    Returns (encoded keys, coefficients) sorted by key.
    """
    base = M + 1
    deg = vectors.sum(axis=1)
    H = {}
    for d in range(1, M + 1):
        m = deg == d
        if m.any():
            H[d] = _combine(_encode(vectors[m], base), amps[m])
    Y = {}
    for d in range(1, M + 1):
        acc = (H[d][0], d * H[d][1]) if d in H else None
        for e in range(1, d):
            if e not in Y or (d - e) not in H:
                continue
            ky, cy = Y[e]
            kh, ch = H[d - e]
            # combine each partial product right away to bound memory
            part = _combine((ky[:, None] + kh[None, :]).ravel(), (-e * cy[:, None] * ch[None, :]).ravel())
            acc = part if acc is None else _combine(np.concatenate([acc[0], part[0]]), np.concatenate([acc[1], part[1]]))
        if acc is not None:
            k, c = acc[0], acc[1] / d
            nz = c != 0
            Y[d] = (k[nz], c[nz])
    if not Y:
        return np.zeros(0, np.int64), np.zeros(0, complex)
    k = np.concatenate([Y[d][0] for d in sorted(Y)])
    c = np.concatenate([Y[d][1] for d in sorted(Y)])
    return k, c


def staircase_orbit_sum(orbits, weyl, k, bond_lengths=None) -> np.ndarray:
    """Nbar(k) + (1/pi) Im sum_p A_p exp(i k L_p)."""
    if not isinstance(orbits, OrbitExpansion):
        if bond_lengths is None:
            raise ValueError("bond_lengths needed to aggregate a plain orbit list")
        orbits = OrbitExpansion.from_orbits(orbits, bond_lengths)
    return weyl(k) + orbits.oscillating(k)


# -- algebraic classes ------------------------------------------------------
@dataclass(frozen=True)
class OrbitClass:
    """Orbits whose reduced vectors are integer multiples nu of one primitive vector.

    The primitive vector has a positive first nonzero entry; nu carries the
    sign, since m and -m describe the same resonance on the torus.
    """

    primitive: tuple[int, ...]
    members: tuple[int, ...]
    multiples: tuple[int, ...]


@dataclass(frozen=True)
class Classification:
    classes: tuple[OrbitClass, ...]
    degenerate: tuple[int, ...]  # members with zero reduced vector

    def class_of(self) -> dict[int, int]:
        out = {}
        for ci, c in enumerate(self.classes):
            for m in c.members:
                out[m] = ci
        for m in self.degenerate:
            out[m] = -1
        return out


def primitive_vector(v) -> tuple[tuple[int, ...], int]:
    v = [int(x) for x in v]
    nz = [abs(x) for x in v if x]
    if not nz:
        return tuple(v), 0
    g = reduce(math.gcd, nz)
    first = next(x for x in v if x)
    g = g if first > 0 else -g
    return tuple(x // g for x in v), g


def classify_simple(reduced_vectors) -> Classification:
    """Group reduced vectors (or orbits) by primitive direction."""
    if len(reduced_vectors) and isinstance(reduced_vectors[0], PeriodicOrbit):
        reduced_vectors = [o.reduced_vector for o in reduced_vectors]
    groups: dict[tuple, list[tuple[int, int]]] = {}
    degenerate = []
    for idx, v in enumerate(reduced_vectors):
        prim, nu = primitive_vector(v)
        if nu == 0:
            degenerate.append(idx)
            continue
        groups.setdefault(prim, []).append((idx, nu))
    classes = tuple(
        OrbitClass(p, tuple(i for i, _ in mem), tuple(nu for _, nu in mem)) for p, mem in sorted(groups.items())
    )
    return Classification(classes, tuple(degenerate))


def orbits_csv(orbits: list[PeriodicOrbit]) -> str:
    cls = classify_simple(orbits).class_of() if orbits else {}
    lines = ["cycle,length,scatter_count,re_A,im_A,omega,class_id"]
    for i, o in enumerate(orbits):
        cyc = " ".join(map(str, o.bond_cycle))
        a = o.amplitude
        lines.append(
            f"{cyc},{o.optical_length:.17g},{o.scatter_count},{a.real:.17g},{a.imag:.17g},{o.frequency:.17g},{cls[i]}"
        )
    return "\n".join(lines) + "\n"
