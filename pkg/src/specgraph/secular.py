"""Exponential polynomials and the secular determinant.

The secular determinant det(I - D(k) S), with D(k) = diag(exp(i k l_d)),
expands into a finite sum  1 + sum_i a_i exp(i k L_i).  Each term also
remembers its bond-count vector (how many times each bond's length enters
L_i), which the orbit machinery needs for the logarithmic expansion.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonUnitary, TooLarge

MERGE_TOL = 1e-10
MAX_DIRECTED = 16
_ZERO_AMP = 1e-13


def _merge_by_length(amps, lengths, tol):
    order = np.argsort(lengths, kind="stable")
    amps, lengths = amps[order], lengths[order]
    scale = max(float(lengths[-1]) if len(lengths) else 0.0, 1.0)
    out_a, out_l = [], []
    start = None
    for a, l in zip(amps, lengths):
        if start is not None and l - start <= tol * scale:
            out_a[-1] += a
        else:
            out_a.append(complex(a))
            out_l.append(float(l))
            start = l
    out_a = np.asarray(out_a, dtype=complex)
    out_l = np.asarray(out_l, dtype=float)
    if len(out_a):
        keep = out_a != 0
        out_a, out_l = out_a[keep], out_l[keep]
    return out_a, out_l


@dataclass(frozen=True, eq=False)
class ExponentialPolynomial:
    """Finite sum  sum_i a_i exp(i k L_i)  with lengths strictly increasing.

    ``vectors``/``vector_amplitudes`` hold the unmerged terms keyed by
    integer bond-count vectors (absent for polynomials built from raw
    lengths).
    """

    amplitudes: np.ndarray
    lengths: np.ndarray
    vectors: np.ndarray | None = field(default=None, repr=False)
    vector_amplitudes: np.ndarray | None = field(default=None, repr=False)
    bond_lengths: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_terms(cls, amplitudes, lengths, merge_tol: float = MERGE_TOL) -> "ExponentialPolynomial":
        a = np.atleast_1d(np.asarray(amplitudes, dtype=complex))
        L = np.atleast_1d(np.asarray(lengths, dtype=float))
        if a.shape != L.shape:
            raise DimensionMismatch("amplitudes and lengths differ in shape")
        if np.any(L < 0):
            raise ValueError("lengths must be nonnegative")
        a, L = _merge_by_length(a, L, merge_tol)
        return cls(a, L)

    @classmethod
    def from_vectors(cls, vectors, amplitudes, bond_lengths, merge_tol: float = MERGE_TOL) -> "ExponentialPolynomial":
        vectors = np.asarray(vectors, dtype=np.int64)
        amplitudes = np.asarray(amplitudes, dtype=complex)
        bond_lengths = np.asarray(bond_lengths, dtype=float)
        uniq, inv = np.unique(vectors, axis=0, return_inverse=True)
        summed = np.zeros(len(uniq), dtype=complex)
        np.add.at(summed, inv.ravel(), amplitudes)
        keep = summed != 0
        uniq, summed = uniq[keep], summed[keep]
        lengths = uniq @ bond_lengths
        order = np.argsort(lengths, kind="stable")
        uniq, summed, lengths = uniq[order], summed[order], lengths[order]
        a, L = _merge_by_length(summed, lengths, merge_tol)
        return cls(a, L, uniq, summed, bond_lengths)

    # -- basic properties -------------------------------------------------
    @property
    def max_length(self) -> float:
        return float(self.lengths[-1]) if len(self.lengths) else 0.0

    @property
    def min_length(self) -> float:
        return float(self.lengths[0]) if len(self.lengths) else 0.0

    @property
    def constant_term(self) -> complex:
        if len(self.lengths) and self.lengths[0] == 0.0:
            return complex(self.amplitudes[0])
        return 0j

    @property
    def abs_sum(self) -> float:
        return float(np.abs(self.amplitudes).sum())

    def __len__(self):
        return len(self.amplitudes)

    def __call__(self, k):
        return evaluate(self, k)

    # -- transformations --------------------------------------------------
    def _scaled(self, factor_fn) -> "ExponentialPolynomial":
        if self.vectors is not None:
            fine_L = self.vectors @ self.bond_lengths
            va = self.vector_amplitudes * factor_fn(fine_L)
            keep = va != 0
            return ExponentialPolynomial.from_vectors(self.vectors[keep], va[keep], self.bond_lengths)
        return ExponentialPolynomial.from_terms(self.amplitudes * factor_fn(self.lengths), self.lengths)

    def derivative(self, j: int) -> "ExponentialPolynomial":
        return derivative(self, j)

    def centered_derivative(self, j: int, center: float | None = None) -> "ExponentialPolynomial":
        return centered_derivative(self, j, center)

    def normalized(self) -> "ExponentialPolynomial":
        c = self.constant_term
        if c == 0:
            raise ValueError("polynomial has no constant term to normalize by")
        return self._scaled(lambda L: np.full(L.shape, 1.0 / c))

    # -- real form ----------------------------------------------------------
    def realification(self, tol: float = 1e-9):
        """Return (c, center) with c*exp(-i k center)*P(k) real on the real axis.

        ``None`` when the polynomial is not self-reciprocal.  For a unitary
        scattering matrix the determinant always is.
        """
        if len(self.lengths) == 0:
            return None
        a, L = self.amplitudes, self.lengths
        center = 0.5 * (L[0] + L[-1])
        span = max(L[-1] - L[0], 1.0)
        phase = a[-1] / np.conj(a[0])
        if abs(abs(phase) - 1.0) > tol * max(1.0, abs(phase)):
            return None
        partner = 2 * center - L
        idx = np.searchsorted(L, partner)
        idx = np.clip(idx, 0, len(L) - 1)
        lo = np.clip(idx - 1, 0, len(L) - 1)
        best = np.where(np.abs(L[idx] - partner) <= np.abs(L[lo] - partner), idx, lo)
        if np.any(np.abs(L[best] - partner) > 1e-9 * span):
            return None
        scale = np.abs(a).max()
        if np.any(np.abs(a[best] - phase * np.conj(a)) > tol * scale):
            return None
        c = np.exp(-0.5j * np.angle(phase))
        return complex(c), float(center)

    def real_form(self, k, realification=None) -> np.ndarray:
        """Real-valued c*exp(-i k center)*P(k) for real k."""
        rf = realification or self.realification()
        if rf is None:
            raise ValueError("polynomial is not self-reciprocal; no real form")
        c, center = rf
        k = np.asarray(k, dtype=float)
        flat = k.ravel()
        coef = c * self.amplitudes
        nu = self.lengths - center
        out = np.empty(flat.shape, dtype=float)
        step = max(1, 4_000_000 // max(len(nu), 1))
        for s in range(0, len(flat), step):
            ph = np.outer(flat[s:s + step], nu)
            out[s:s + step] = (np.cos(ph) * coef.real - np.sin(ph) * coef.imag).sum(axis=1)
        return out.reshape(k.shape)

    # -- serialization -----------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(
            [{"re": float(a.real), "im": float(a.imag), "L": float(l)} for a, l in zip(self.amplitudes, self.lengths)]
        )

    @classmethod
    def from_json(cls, text: str) -> "ExponentialPolynomial":
        terms = json.loads(text)
        a = np.array([complex(t["re"], t["im"]) for t in terms], dtype=complex)
        L = np.array([t["L"] for t in terms], dtype=float)
        return cls(a, L)


def evaluate(poly: ExponentialPolynomial, k):
    """Direct summation, ascending length order."""
    k = np.asarray(k)
    flat = k.ravel().astype(complex)
    out = np.empty(flat.shape, dtype=complex)
    step = max(1, 4_000_000 // max(len(poly.lengths), 1))
    for s in range(0, len(flat), step):
        out[s:s + step] = np.exp(1j * np.outer(flat[s:s + step], poly.lengths)) @ poly.amplitudes
    if k.ndim == 0:
        return complex(out[0])
    return out.reshape(k.shape)


def derivative(poly: ExponentialPolynomial, j: int) -> ExponentialPolynomial:
    """j-th derivative in k: a_i -> a_i (i L_i)^j."""
    if j < 0:
        raise ValueError("derivative order must be nonnegative")
    if j == 0:
        return poly
    return poly._scaled(lambda L: (1j * L) ** j)


def centered_derivative(poly: ExponentialPolynomial, j: int, center: float | None = None) -> ExponentialPolynomial:
    """exp(i k c) (d/dk)^j [exp(-i k c) P(k)]:  a_i -> a_i (i (L_i - c))^j.

    With c the midpoint of the length range this differentiates the real
    form of a self-reciprocal polynomial, so zeros stay on the real axis.
    """
    if j < 0:
        raise ValueError("derivative order must be nonnegative")
    if center is None:
        center = 0.5 * (poly.min_length + poly.max_length)
    if j == 0:
        return poly
    return poly._scaled(lambda L: (1j * (L - center)) ** j)


def determinant_expand(S, lengths, bond_of=None, bond_lengths=None, max_dim: int = MAX_DIRECTED) -> ExponentialPolynomial:
    """Expand det(I - D(k) S) into an exponential polynomial.

    Uses the principal-minor identity det(I + M) = sum_T det M[T, T]; each
    subset T of directed bonds contributes (-1)^|T| det S[T, T] exp(i k L_T).
    """
    S = np.asarray(S, dtype=complex)
    lengths = np.asarray(lengths, dtype=float)
    n = len(S)
    if S.shape != (n, n) or lengths.shape != (n,):
        raise DimensionMismatch(f"S {S.shape} vs lengths {lengths.shape}")
    if n > max_dim:
        raise TooLarge(f"{n} directed bonds exceeds expansion cap {max_dim}")
    if np.abs(S @ S.conj().T - np.eye(n)).max() > 1e-10:
        raise NonUnitary("bond scattering matrix is not unitary")
    if bond_of is None:
        bond_of = np.arange(n)
        bond_lengths = lengths
    bond_of = np.asarray(bond_of, dtype=int)
    if bond_lengths is None:
        nb = bond_of.max() + 1
        bond_lengths = np.zeros(nb)
        bond_lengths[bond_of] = lengths
    nb = len(bond_lengths)

    vecs = [np.zeros((1, nb), dtype=np.int64)]
    amps = [np.ones(1, dtype=complex)]
    onehot = np.eye(nb, dtype=np.int64)[bond_of]
    for size in range(1, n + 1):
        idx = np.array(list(itertools.combinations(range(n), size)), dtype=int)
        sub = S[idx[:, :, None], idx[:, None, :]]
        det = np.linalg.det(sub) * (-1) ** size
        keep = np.abs(det) > _ZERO_AMP
        if not keep.any():
            continue
        idx, det = idx[keep], det[keep]
        vecs.append(onehot[idx].sum(axis=1))
        amps.append(det)
    poly = ExponentialPolynomial.from_vectors(np.concatenate(vecs), np.concatenate(amps), bond_lengths)
    const = poly.constant_term
    # the empty subset is the only zero-length term: det(I - DS) -> 1 as Im k -> inf
    assert abs(const - 1.0) < 1e-12, const
    return poly


def secular_polynomial(graph, S) -> ExponentialPolynomial:
    return determinant_expand(S, graph.directed_lengths, graph.bond_of, graph.lengths)


@dataclass(frozen=True)
class RegularityReport:
    r: int | None
    status: str  # "finite" | "marginal" | "not_found"
    criterion_values: tuple[float, ...]
    mode: str
    weak_r: int | None = None
    endpoints_excluded: bool = True

    @property
    def is_finite(self) -> bool:
        return self.status == "finite"

    @property
    def hierarchy_depth(self) -> int:
        """Number of derivative levels above the spectrum (0 for regular or marginal)."""
        return self.r if self.r is not None else 0


def regularity_weights(poly: ExponentialPolynomial, mode: str = "centered"):
    """Per-term (weight, ratio) pairs entering the regularity criterion.

    ``centered``: the real form  cos(L0 k + theta) + sum_nu b_nu cos(nu k + ...)
    with L0 = Lambda/2; ratio |nu|/L0 and weight |b_nu| (half the modulus of
    each interior term, as each pair of mirrored terms forms one cosine).
    ``raw``: ratio L_i/Lambda and weight |a_i| over 0 < L_i < Lambda.
    """
    a, L = poly.amplitudes, poly.lengths
    lo, hi = poly.min_length, poly.max_length
    span = hi - lo
    interior = (L > lo + MERGE_TOL * max(span, 1.0)) & (L < hi - MERGE_TOL * max(span, 1.0))
    if mode == "centered":
        top = abs(a[-1])
        ratio = np.abs(2 * L[interior] - (lo + hi)) / span
        weight = 0.5 * np.abs(a[interior]) / top
    elif mode == "raw":
        ratio = L[interior] / hi
        weight = np.abs(a[interior])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return weight, ratio


def regularity_index(poly: ExponentialPolynomial, r_cap: int = 64, mode: str = "centered") -> RegularityReport:
    """Minimal r with  sum_i |a_i| (L_i/L0)^r < 1  over interior terms."""
    weight, ratio = regularity_weights(poly, mode)
    if len(weight) == 0:
        return RegularityReport(None, "marginal", (), mode, None)
    values = []
    weak = None
    for r in range(r_cap + 1):
        with np.errstate(divide="ignore"):
            val = float((weight * ratio**r).sum())
        values.append(val)
        if weak is None and val <= 1.0 + 1e-12:
            weak = r
        if val < 1.0 - 1e-12:
            return RegularityReport(r, "finite", tuple(values), mode, weak)
    return RegularityReport(None, "not_found", tuple(values), mode, weak)
