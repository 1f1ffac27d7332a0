"""Real zeros of exponential polynomials and the separator hierarchy.

Level j of the hierarchy holds the zeros of the centered j-th derivative of
Delta (see :func:`specgraph.secular.centered_derivative`); the level above the
last computed one is an explicit lattice.  Zeros are located on the real
form of each polynomial by a fixed-step sign scan plus critical-point
splitting, and every stretch of the window is certified by an
argument-principle count on a thin rectangle around the real axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._parallel import ordered_map
from .errors import BootstrapViolation, CloseZeros, NonRealZero, TooFewZeros
from .secular import ExponentialPolynomial, centered_derivative, evaluate

SCAN_DIVISIONS = 16
STRIP_FRACTION = 0.05
CHUNK_CELLS = 512
OFF_AXIS_TOL = 1e-8


# -- argument principle -----------------------------------------------------
def _edge_phase(poly, z0, z1, n0, max_rounds=30):
    t = np.linspace(0.0, 1.0, n0 + 1)
    v = evaluate(poly, z0 + (z1 - z0) * t)
    for _ in range(max_rounds):
        if np.any(v == 0):
            raise NonRealZero("zero on the certification contour", [complex(z0 + (z1 - z0) * ti) for ti in t[v == 0]])
        d = np.angle(v[1:] / v[:-1])
        bad = np.abs(d) > np.pi / 4
        if not bad.any():
            return float(d.sum())
        mids = 0.5 * (t[:-1][bad] + t[1:][bad])
        vm = evaluate(poly, z0 + (z1 - z0) * mids)
        t = np.concatenate([t, mids])
        v = np.concatenate([v, vm])
        order = np.argsort(t, kind="stable")
        t, v = t[order], v[order]
    raise NonRealZero("argument principle did not resolve along the contour", [complex(z0), complex(z1)])


def winding_number(poly: ExponentialPolynomial, a: float, b: float, half_height: float) -> int:
    """Zeros of ``poly`` inside the rectangle [a, b] x [-h, h], by the argument principle."""
    span = max(poly.max_length - poly.min_length, 1e-300)
    step = (2 * np.pi / span) / SCAN_DIVISIONS
    corners = [a - 1j * half_height, b - 1j * half_height, b + 1j * half_height, a + 1j * half_height]
    total = 0.0
    for z0, z1 in zip(corners, corners[1:] + corners[:1]):
        n0 = max(8, int(math.ceil(abs(z1 - z0) / step)))
        total += _edge_phase(poly, z0, z1, n0)
    return int(round(total / (2 * np.pi)))


# -- complex Newton (diagnostics and the non-self-reciprocal path) ----------
def _newton(poly, dpoly, z, iters=60):
    fz = evaluate(poly, z)
    for _ in range(iters):
        d = evaluate(dpoly, z)
        if d == 0:
            break
        step = fz / d
        lam = 1.0
        for _ in range(12):
            zn = z - lam * step
            fn = evaluate(poly, zn)
            if abs(fn) < abs(fz):
                break
            lam *= 0.5
        else:
            break
        z, fz = zn, fn
        if abs(lam * step) < 1e-15 * max(1.0, abs(z)):
            break
    return z, abs(fz)


def _locate_complex(poly, a, b, half_height, step):
    """Newton from local minima of |P| along the real segment; unique zeros in the strip."""
    dpoly = poly.derivative(1)
    k = np.arange(a, b + step, step / 2)
    mod = np.abs(evaluate(poly, k))
    mins = [i for i in range(1, len(k) - 1) if mod[i] <= mod[i - 1] and mod[i] <= mod[i + 1]]
    tol = 1e-9 * poly.abs_sum
    found = []
    for i in mins:
        for start in (k[i], k[i] + 0.5j * half_height, k[i] - 0.5j * half_height):
            z, res = _newton(poly, dpoly, complex(start))
            if res > tol or not (a <= z.real <= b) or abs(z.imag) > half_height:
                continue
            if all(abs(z - w) > 1e-7 * step for w in found):
                found.append(z)
    found.sort(key=lambda z: (z.real, z.imag))
    return found


# -- real scan ---------------------------------------------------------------
@dataclass(frozen=True)
class _RealForm:
    poly: ExponentialPolynomial
    dpoly: ExponentialPolynomial
    rf: tuple

    @classmethod
    def build(cls, poly, rf):
        c, center = rf
        dpoly = ExponentialPolynomial(poly.amplitudes * 1j * (poly.lengths - center), poly.lengths)
        return cls(poly, dpoly, rf)

    def f(self, k):
        return self.poly.real_form(k, self.rf)

    def df(self, k):
        return self.dpoly.real_form(k, self.rf)


def _solve(fn, a, b):
    return brentq(fn, a, b, xtol=1e-15 * max(1.0, abs(a)), rtol=4 * np.finfo(float).eps, maxiter=200)


def _scan_cells(form: _RealForm, grid, fv, dfv, noise, resolution):
    """Zeros in cells [grid[i], grid[i+1]) as (k, multiplicity, close) triples."""
    f1 = lambda x: float(form.f(np.array([x]))[0])
    d1 = lambda x: float(form.df(np.array([x]))[0])
    out = []
    s = np.sign(fv)
    ds = np.sign(dfv)
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        if s[i] == 0:
            out.append((a, 1, False))
            continue
        if s[i + 1] == 0:
            continue
        if s[i] != s[i + 1]:
            out.append((_solve(f1, a, b), 1, False))
            continue
        if ds[i] * ds[i + 1] >= 0:
            continue
        kc = _solve(d1, a, b)
        fc = f1(kc)
        if abs(fc) <= noise * (10.0 + abs(kc) * form.poly.max_length):
            out.append((kc, 2, True))
        elif np.sign(fc) != s[i]:
            z1, z2 = _solve(f1, a, kc), _solve(f1, kc, b)
            close = z2 - z1 <= resolution
            out.append((z1, 1, close))
            out.append((z2, 1, close))
    return out


def _edges(fv, stop, chunk):
    """Chunk boundaries at local maxima of |f| so contours stay clear of real zeros.

    The outer edges stay within the four padding points on either side.
    """
    marks = list(range(0, stop, chunk)) + [stop]
    edges = []
    for j, i in enumerate(marks):
        if j == 0:
            lo, hi = 0, min(stop, 4)
        elif j == len(marks) - 1:
            lo, hi = max(0, stop - 4), stop
        else:
            lo, hi = i - 4, min(stop, i + 4)
        e = lo + int(np.argmax(np.abs(fv[lo:hi + 1])))
        if not edges or e > edges[-1]:
            edges.append(e)
    return edges


def real_zeros(
    poly: ExponentialPolynomial,
    k_min: float,
    k_max: float,
    *,
    multiplicity: str = "raise",
    certify: bool = True,
    threads: int | None = None,
) -> np.ndarray:
    """All real zeros of ``poly`` in [k_min, k_max], sorted.

    ``multiplicity`` decides what happens to double zeros and pairs closer
    than 1e-9 of the mean spacing: ``"raise"`` (CloseZeros) or ``"repeat"``
    (listed once per multiplicity).  A zero at k = 0 is reported with the
    order given by :func:`origin_order`.
    """
    if not k_max > k_min:
        raise ValueError("need k_max > k_min")
    if multiplicity not in ("raise", "repeat"):
        raise ValueError(f"unknown multiplicity mode {multiplicity!r}")
    span = poly.max_length - poly.min_length
    if span <= 0:
        return np.zeros(0)
    cell = 2 * np.pi / span
    h = cell / SCAN_DIVISIONS
    eps = STRIP_FRACTION * cell
    resolution = 1e-9 * cell
    n_hi = int(math.ceil((k_max - k_min) / h)) + 4
    grid = k_min + h * np.arange(-4, n_hi + 1)

    rf = poly.realification()
    if rf is None:
        zeros = _complex_path(poly, grid, eps, h, threads)
    else:
        zeros = _real_path(poly, rf, grid, eps, resolution, certify, threads)

    keep = [(k, m, c) for k, m, c in zeros if k_min <= k <= k_max]
    if multiplicity == "raise":
        bad = [k for k, m, c in keep if m > 1 or c]
        if bad:
            raise CloseZeros(f"{len(bad)} zeros closer than resolution {resolution:.3g}", bad)
    out = []
    for k, m, _ in keep:
        out.extend([k] * m)
    return np.asarray(out, dtype=float)


def origin_order(poly: ExponentialPolynomial, max_order: int = 32, rtol: float = 1e-9) -> int:
    """Order of the zero of ``poly`` at k = 0 (0 when poly(0) != 0)."""
    a, L = poly.amplitudes, poly.lengths
    for j in range(max_order + 1):
        if abs(np.sum(a * (1j * L) ** j)) > rtol * np.sum(np.abs(a) * L**j):
            return j
    return max_order


def _real_path(poly, rf, grid, eps, resolution, certify, threads):
    form = _RealForm.build(poly, rf)
    fv = form.f(grid)
    dfv = form.df(grid)
    noise = 1e-14 * poly.abs_sum
    edges = _edges(fv, len(grid) - 1, CHUNK_CELLS)
    m0 = origin_order(poly) if grid[0] <= 0.0 <= grid[-1] else 0
    near = grid[1] - grid[0]  # sign changes this close to a flat origin zero are roundoff

    def at_origin(found, a, b):
        if not (m0 and a <= 0.0 <= b):
            return found
        return [z for z in found if abs(z[0]) > near] + [(0.0, m0, m0 > 1)]

    def work(pair):
        ea, eb = pair
        a, b = grid[ea], grid[eb]
        found = at_origin(_scan_cells(form, grid[ea:eb + 1], fv[ea:eb + 1], dfv[ea:eb + 1], noise, resolution), a, b)
        if not certify:
            return found
        w = winding_number(poly, a, b, eps)
        count = sum(m for k, m, _ in found)
        if w == count:
            return found
        # finer rescan before declaring trouble
        fine = np.linspace(a, b, 8 * (eb - ea) + 1)
        found = at_origin(_scan_cells(form, fine, form.f(fine), form.df(fine), noise, resolution), a, b)
        count = sum(m for k, m, _ in found)
        if w == count:
            return found
        locs = _locate_complex(poly, a, b, eps, (b - a) / (eb - ea))
        off = [z for z in locs if abs(z.imag) > OFF_AXIS_TOL]
        raise NonRealZero(
            f"window [{a:.6g}, {b:.6g}] holds {w} zeros by winding but {count} on the real axis",
            off or locs,
        )

    parts = ordered_map(work, list(zip(edges[:-1], edges[1:])), threads)
    merged = [z for part in parts for z in part]
    merged.sort(key=lambda t: t[0])
    return merged


def _complex_path(poly, grid, eps, h, threads):
    """Polynomials without a real form: locate zeros in the strip by Newton."""
    a, b = float(grid[0]), float(grid[-1])
    w = winding_number(poly, a, b, eps)
    if w == 0:
        return []
    locs = _locate_complex(poly, a, b, eps, h)
    off = [z for z in locs if abs(z.imag) > OFF_AXIS_TOL]
    if off:
        raise NonRealZero(f"{len(off)} zeros off the real axis within the strip", off)
    if len(locs) != w:
        raise NonRealZero(f"winding count {w} but {len(locs)} zeros located", locs)
    return [(z.real, 1, False) for z in locs]


# -- hierarchy ----------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SeparatorSequence:
    """Sorted zeros of one hierarchy level with their integer labels.

    Fluctuations satisfy  k_n = (pi / L0) (n + delta_n).
    """

    level: int
    zeros: np.ndarray
    labels: np.ndarray
    total_length: float
    baseline: bool = False

    def __post_init__(self):
        z = np.asarray(self.zeros, dtype=float)
        lab = np.asarray(self.labels, dtype=np.int64)
        if z.shape != lab.shape:
            raise ValueError("zeros and labels differ in length")
        if np.any(np.diff(z) < 0):
            raise ValueError("zeros must be sorted")
        object.__setattr__(self, "zeros", z)
        object.__setattr__(self, "labels", lab)

    def __len__(self):
        return len(self.zeros)

    @property
    def fluctuations(self) -> np.ndarray:
        return self.total_length * self.zeros / np.pi - self.labels

    @property
    def index_offset(self) -> int:
        return int(self.labels[0]) if len(self.labels) else 0

    def reconstruct(self) -> np.ndarray:
        return (np.pi / self.total_length) * (self.labels + self.fluctuations)

    def counting(self, k) -> np.ndarray:
        """N(k): label of the last zero at or below k (offset - 1 below the first)."""
        pos = np.searchsorted(self.zeros, np.asarray(k, dtype=float), side="right")
        return self.index_offset - 1 + pos

    def by_label(self) -> dict[int, float]:
        return {int(n): float(k) for n, k in zip(self.labels, self.zeros)}

    def window(self, k_min: float, k_max: float) -> "SeparatorSequence":
        m = (self.zeros >= k_min) & (self.zeros <= k_max)
        return SeparatorSequence(self.level, self.zeros[m], self.labels[m], self.total_length, self.baseline)


def baseline_phase(poly: ExponentialPolynomial, r: int) -> float:
    """gamma in [0, 1) with the top level at (pi/L0)(n + gamma).

    The longest term of the real form is cos(L0 k + theta0); its (r+1)-th
    centered derivative vanishes on this lattice.  The interval gives 1/2.
    """
    rf = poly.realification()
    if rf is None:
        raise ValueError("baseline needs a self-reciprocal polynomial")
    c, _ = rf
    theta0 = float(np.angle(c * poly.amplitudes[-1]))
    return float((-theta0 / np.pi - r / 2.0) % 1.0)


def baseline_sequence(total_length: float, gamma: float, level: int, k_min: float, k_max: float) -> SeparatorSequence:
    step = np.pi / total_length
    n0 = int(math.ceil(k_min / step - gamma - 1e-12))
    n1 = int(math.floor(k_max / step - gamma + 1e-12))
    n = np.arange(n0, n1 + 1)
    return SeparatorSequence(level, step * (n + gamma), n, total_length, baseline=True)


def label_by_upper(zeros: np.ndarray, upper: SeparatorSequence) -> np.ndarray:
    """Label each zero with the label of the first upper point strictly to its right."""
    pos = np.searchsorted(upper.zeros, zeros, side="right")
    if np.any(pos >= len(upper.zeros)):
        raise BootstrapViolation("upper level does not extend past the lower level's last zero")
    return upper.labels[pos]


def separator_hierarchy(
    poly: ExponentialPolynomial,
    r: int | None,
    window: tuple[float, float],
    *,
    multiplicity: str = "raise",
    threads: int | None = None,
) -> list[SeparatorSequence]:
    """Levels 0..r from derivative zeros plus the explicit lattice at level r+1.

    ``r=None`` (marginal) behaves as r=0.  Each level is computed on a
    window padded to the right so every zero below has an upper neighbour,
    then trimmed to ``window``.
    """
    r = 0 if r is None else int(r)
    k_min, k_max = window
    if not k_min > 0:
        raise ValueError("hierarchy windows start at k > 0 (k = 0 is a threshold of the secular function)")
    L0 = poly.max_length / 2
    step = np.pi / L0
    center = 0.5 * (poly.min_length + poly.max_length)
    gamma = baseline_phase(poly, r)
    top = baseline_sequence(L0, gamma, r + 1, k_min, k_max + (r + 4) * 2 * step)
    levels = [top]
    upper = top
    for j in range(r, -1, -1):
        pad = (j + 2) * 2 * step
        pj = centered_derivative(poly, j, center)
        z = real_zeros(pj, k_min, k_max + pad, multiplicity=multiplicity, threads=threads)
        seq = SeparatorSequence(j, z, label_by_upper(z, upper), L0)
        levels.append(seq)
        upper = seq
    levels.reverse()
    return [s.window(k_min, k_max) for s in levels]


def hierarchy_polynomials(poly: ExponentialPolynomial, r: int) -> list[ExponentialPolynomial]:
    center = 0.5 * (poly.min_length + poly.max_length)
    return [centered_derivative(poly, j, center) for j in range(r + 1)]


@dataclass(frozen=True)
class BootstrapReport:
    passed: bool
    checked_gaps: int
    violations: tuple = field(default=())  # (side, position, label, count)

    def __bool__(self):
        return self.passed


def _as_arrays(seq):
    if isinstance(seq, SeparatorSequence):
        return seq.zeros, seq.labels
    z = np.asarray(seq, dtype=float)
    return z, np.arange(len(z))


def _gap_counts(points, labels, other, side):
    lo, hi = other[0], other[-1]
    out, checked = [], 0
    for i in range(len(points) - 1):
        a, b = points[i], points[i + 1]
        if b < lo or a > hi:
            continue
        checked += 1
        cnt = int(np.count_nonzero((other > a) & (other < b)))
        touch = bool(np.any((other == a) | (other == b)))
        if cnt != 1 or touch:
            out.append((side, i, int(labels[i]), cnt))
    return out, checked


def verify_bootstrap(inner, outer) -> BootstrapReport:
    """Interlacing check: every gap of either sequence holds exactly one point of the other.

    Only gaps overlapping the other sequence's span are examined, so the
    windows need not coincide and labels play no role.
    """
    zi, li = _as_arrays(inner)
    zo, lo = _as_arrays(outer)
    if len(zi) == 0 or len(zo) == 0:
        return BootstrapReport(True, 0, ())
    v1, c1 = _gap_counts(zi, li, zo, "inner")
    v2, c2 = _gap_counts(zo, lo, zi, "outer")
    viol = tuple(v1 + v2)
    return BootstrapReport(not viol, c1 + c2, viol)


def verify_hierarchy(levels: list[SeparatorSequence]) -> list[BootstrapReport]:
    return [verify_bootstrap(levels[j], levels[j + 1]) for j in range(len(levels) - 1)]


@dataclass(frozen=True)
class StaircaseModel:
    slope: float
    intercept: float
    residuals: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError("staircase slope must be positive")

    def __call__(self, k):
        return self.slope * np.asarray(k, dtype=float) + self.intercept


def weyl_fit(seq: SeparatorSequence, min_zeros: int = 100) -> StaircaseModel:
    """Least-squares line through the jump midpoints (k_n, n - 1/2) of N(k).

    N steps from n-1 to n at k_n, so the midpoints lie on the mean staircase
    without the half-step bias a continuous fit would carry.
    """
    if len(seq) < min_zeros:
        raise TooFewZeros(f"weyl_fit needs >= {min_zeros} zeros, got {len(seq)}")
    k = seq.zeros
    y = seq.labels - 0.5
    A = np.column_stack([k, np.ones_like(k)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return StaircaseModel(float(slope), float(intercept), y - (slope * k + intercept))


def extract_level(f, upper: SeparatorSequence, lower: SeparatorSequence):
    """Per-cell value f(k_n) for the single lower zero in each upper cell.

    The cell labelled n is (upper_{n-1}, upper_n); the cell integral of f
    against the lower level's delta-comb collapses to a lookup.  Returns
    (labels, values).
    """
    uz, ul = upper.zeros, upper.labels
    labels, values = [], []
    for i in range(1, len(uz)):
        a, b = uz[i - 1], uz[i]
        inside = lower.zeros[(lower.zeros > a) & (lower.zeros < b)]
        if len(inside) != 1:
            raise BootstrapViolation(f"cell {int(ul[i])} ({a:.12g}, {b:.12g}) holds {len(inside)} zeros")
        labels.append(int(ul[i]))
        values.append(f(inside[0]))
    return np.asarray(labels, dtype=np.int64), np.asarray(values)


def hierarchy_csv(levels: list[SeparatorSequence]) -> str:
    lines = ["level,n,k,delta"]
    for seq in levels:
        for n, k, d in zip(seq.labels, seq.zeros, seq.fluctuations):
            lines.append(f"{seq.level},{int(n)},{k:.17g},{d:.17g}")
    return "\n".join(lines) + "\n"
