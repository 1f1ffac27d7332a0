"""Metric graphs, the directed-bond basis and vertex scattering data.

Directed bonds are numbered ``2*b`` (bond ``b`` traversed from its first to
its second vertex) and ``2*b + 1`` (the reverse direction), so reversal is
``d ^ 1``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DimensionMismatch, DisconnectedGraph, GraphError, NonPositiveLength, NonUnitary, SelfLoop

UNITARY_TOL = 1e-12


@dataclass(frozen=True)
class GraphSpec:
    vertex_count: int
    bonds: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "bonds", tuple((int(a), int(b), float(l)) for a, b, l in self.bonds)
        )

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GraphSpec":
        try:
            n = doc["vertices"]
            bonds = doc["bonds"]
        except (KeyError, TypeError) as exc:
            raise GraphError(f"graph document needs 'vertices' and 'bonds': {exc}") from None
        if not isinstance(n, int) or n < 1:
            raise GraphError(f"'vertices' must be a positive integer, got {n!r}")
        out = []
        for i, bond in enumerate(bonds):
            if len(bond) != 3:
                raise GraphError(f"bond {i} must be [a, b, length], got {bond!r}")
            out.append((bond[0], bond[1], bond[2]))
        return cls(n, tuple(out))

    def to_dict(self) -> dict:
        return {"vertices": self.vertex_count, "bonds": [[a, b, l] for a, b, l in self.bonds]}

    @classmethod
    def from_json(cls, text: str) -> "GraphSpec":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        # json writes floats with repr(), which round-trips exactly
        return json.dumps(self.to_dict())

    @classmethod
    def load(cls, path) -> "GraphSpec":
        return cls.from_json(Path(path).read_text())

    def dump(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


@dataclass(frozen=True)
class MetricGraph:
    spec: GraphSpec
    lengths: np.ndarray = field(repr=False)
    tails: np.ndarray = field(repr=False)
    heads: np.ndarray = field(repr=False)

    @property
    def bond_count(self) -> int:
        return len(self.lengths)

    @property
    def directed_count(self) -> int:
        return 2 * len(self.lengths)

    @property
    def vertex_count(self) -> int:
        return self.spec.vertex_count

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    @property
    def frequency_basis(self) -> np.ndarray:
        """Omega_i = l_i / L0; sums to one."""
        return self.lengths / self.total_length

    @property
    def reduced_frequency_basis(self) -> np.ndarray:
        om = self.frequency_basis
        return om[:-1] - om[-1]

    @property
    def directed_lengths(self) -> np.ndarray:
        return np.repeat(self.lengths, 2)

    @property
    def bond_of(self) -> np.ndarray:
        return np.arange(self.directed_count) // 2

    @staticmethod
    def reverse(d: int) -> int:
        return d ^ 1

    def degree(self, v: int) -> int:
        return int(np.count_nonzero(self.heads == v))

    def incoming(self, v: int) -> list[int]:
        return [int(d) for d in np.flatnonzero(self.heads == v)]

    def outgoing(self, v: int) -> list[int]:
        return [int(d) for d in np.flatnonzero(self.tails == v)]


def build_graph(spec: GraphSpec) -> MetricGraph:
    n = spec.vertex_count
    if n < 1:
        raise GraphError("graph needs at least one vertex")
    if not spec.bonds:
        raise GraphError("graph needs at least one bond")
    tails, heads, lengths = [], [], []
    for i, (a, b, l) in enumerate(spec.bonds):
        if not (0 <= a < n and 0 <= b < n):
            raise GraphError(f"bond {i} references a vertex outside 0..{n - 1}")
        if a == b:
            raise SelfLoop(f"bond {i} is a self-loop at vertex {a}")
        if not (l > 0 and np.isfinite(l)):
            raise NonPositiveLength(f"bond {i} has length {l}")
        tails += [a, b]
        heads += [b, a]
        lengths.append(l)

    # union-find connectivity
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, _ in spec.bonds:
        parent[find(a)] = find(b)
    roots = {find(v) for v in range(n)}
    if len(roots) > 1:
        raise DisconnectedGraph(f"graph has {len(roots)} connected components")

    return MetricGraph(
        spec=spec,
        lengths=np.asarray(lengths, dtype=float),
        tails=np.asarray(tails, dtype=int),
        heads=np.asarray(heads, dtype=int),
    )


def commensurability_report(lengths, max_denominator: int = 64, tol: float = 1e-9) -> list[tuple[int, int, int, int]]:
    """Pairs (i, j, p, q) with l_i / l_j within ``tol`` of p/q, q <= max_denominator.

    Emits a warning when any pair is found; rational ratios break the
    equidistribution premise behind torus sampling but never stop a run.
    """
    lengths = np.asarray(lengths, dtype=float)
    hits = []
    for i in range(len(lengths)):
        for j in range(i + 1, len(lengths)):
            ratio = lengths[i] / lengths[j]
            frac = Fraction(ratio).limit_denominator(max_denominator)
            if abs(ratio - frac.numerator / frac.denominator) < tol:
                hits.append((i, j, frac.numerator, frac.denominator))
    if hits:
        warnings.warn(
            f"bond lengths look commensurate: {hits[:4]}{'...' if len(hits) > 4 else ''}",
            stacklevel=2,
        )
    return hits


@dataclass(frozen=True)
class VertexScattering:
    """Per-vertex scattering matrices.

    ``matrices[v]`` is indexed ``[out_port, in_port]`` where ``incoming[v]``
    lists directed bonds entering ``v`` and ``outgoing[v]`` the directed
    bonds leaving it, in the same port order (port p leaves along the
    reversal of the bond that enters through port p).
    """

    incoming: tuple[tuple[int, ...], ...]
    outgoing: tuple[tuple[int, ...], ...]
    matrices: tuple[np.ndarray, ...]

    def unitarity_residual(self) -> float:
        worst = 0.0
        for m in self.matrices:
            worst = max(worst, float(np.abs(m @ m.conj().T - np.eye(len(m))).max()))
        return worst


def _ports(graph: MetricGraph):
    incoming = tuple(tuple(graph.incoming(v)) for v in range(graph.vertex_count))
    outgoing = tuple(tuple(d ^ 1 for d in ins) for ins in incoming)
    return incoming, outgoing


def kirchhoff_scattering(graph: MetricGraph) -> VertexScattering:
    """Neumann-Kirchhoff matching: sigma = 2/deg - delta(out, reverse(in))."""
    incoming, outgoing = _ports(graph)
    mats = []
    for ins in incoming:
        deg = len(ins)
        mats.append(np.full((deg, deg), 2.0 / deg, dtype=complex) - np.eye(deg))
    return VertexScattering(incoming, outgoing, tuple(mats))


def custom_scattering(graph: MetricGraph, overrides: Mapping[int, np.ndarray]) -> VertexScattering:
    """Kirchhoff everywhere except at the vertices in ``overrides``.

    Override matrices use the port order of :func:`kirchhoff_scattering`
    (incoming directed bonds in ascending index order).
    """
    base = kirchhoff_scattering(graph)
    mats = list(base.matrices)
    for v, m in overrides.items():
        m = np.asarray(m, dtype=complex)
        deg = len(base.incoming[v])
        if m.shape != (deg, deg):
            raise DimensionMismatch(f"vertex {v} has degree {deg}, matrix shape {m.shape}")
        if np.abs(m @ m.conj().T - np.eye(deg)).max() > 1e-10:
            raise NonUnitary(f"scattering matrix at vertex {v} is not unitary")
        mats[v] = m
    return VertexScattering(base.incoming, base.outgoing, tuple(mats))


def bond_scattering_matrix(graph: MetricGraph, vs: VertexScattering) -> np.ndarray:
    """Global matrix S[d', d]: amplitude to continue along d' after arriving via d."""
    if len(vs.matrices) != graph.vertex_count:
        raise DimensionMismatch(
            f"scattering data covers {len(vs.matrices)} vertices, graph has {graph.vertex_count}"
        )
    n = graph.directed_count
    S = np.zeros((n, n), dtype=complex)
    for v, (ins, outs, m) in enumerate(zip(vs.incoming, vs.outgoing, vs.matrices)):
        if m.shape != (len(ins), len(outs)):
            raise DimensionMismatch(f"vertex {v}: matrix {m.shape} vs {len(ins)} ports")
        for i, d in enumerate(ins):
            if graph.heads[d] != v:
                raise DimensionMismatch(f"directed bond {d} does not enter vertex {v}")
            for o, dp in enumerate(outs):
                S[dp, d] = m[o, i]
    return S


def unitarity_residual(S: np.ndarray) -> float:
    return float(np.abs(S @ S.conj().T - np.eye(len(S))).max())
