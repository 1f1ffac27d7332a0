"""Distributions of spectral observables from their harmonic series.

Torus sampling treats x in [0, 2pi)^d and the parity bit b as uniform
random variables; a series then becomes a random variable whose law can be
estimated directly (histogram), through its characteristic function
(Monte Carlo, per-class quadrature, Bessel product), or by its Gaussian
limit.  Densities are piecewise constant on cells centred at grid points.

Random streams are Philox generators keyed by (seed, operation, block);
blocks have a fixed size and results are reduced in block order, so output
does not depend on the thread count.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0
from scipy.stats import norm

from ._parallel import ordered_map
from .errors import FourierArtifact, GridMismatch
from .orbits import classify_simple
from .roots import baseline_phase
from .series import HarmonicSeries, TransitionSeries, level_expansion

BLOCK = 8192
CLIP = 1e-3
T_GRID_POINTS = 4096
X_GRID_POINTS = 801
T_EXTENT = 128.0  # t_max = T_EXTENT / sigma
TAPER = 4.0  # Gaussian window exp(-(TAPER t / t_max)^2 / 2)


# -- random streams ------------------------------------------------------------
def _op_key(op: str) -> int:
    return zlib.crc32(op.encode())


def rng_stream(seed: int, op: str, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(_op_key(op), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def _blocks(count: int):
    return [(b, min(BLOCK, count - b * BLOCK)) for b in range((count + BLOCK - 1) // BLOCK)]


def sample_torus(dim: int, count: int, seed: int, op: str, threads: int | None = None):
    """Uniform torus points (count, dim) and parity bits, block by block."""

    def draw(block):
        b, size = block
        g = rng_stream(seed, op, b)
        return g.uniform(0.0, 2 * np.pi, size=(size, dim)), g.integers(0, 2, size=size)

    parts = ordered_map(draw, _blocks(count), threads)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _block_values(series: HarmonicSeries, count: int, seed: int, op: str, threads):
    red = series.torus_reduced()  # same function on the torus, fewer terms

    def run(block):
        b, size = block
        g = rng_stream(seed, op, b)
        x = g.uniform(0.0, 2 * np.pi, size=(size, series.torus_dim))
        bits = g.integers(0, 2, size=size)
        return red.on_torus(x, bits)

    return ordered_map(run, _blocks(count), threads)


# -- distribution objects --------------------------------------------------------
@dataclass(frozen=True, eq=False)
class DistributionEstimate:
    grid: np.ndarray
    density: np.ndarray
    method: str
    char_fn: tuple | None = field(default=None, repr=False)  # (t, Phi)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if g.shape != d.shape or g.ndim != 1 or len(g) < 2:
            raise GridMismatch("grid and density must be 1-d arrays of equal length >= 2")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "density", d)

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def edges(self) -> np.ndarray:
        h = self.step
        return np.concatenate([self.grid - h / 2, [self.grid[-1] + h / 2]])

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.step

    def total_mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def mean(self) -> float:
        return float(np.sum(self.grid * self.masses) / np.sum(self.masses))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.sum((self.grid - mu) ** 2 * self.masses) / np.sum(self.masses))

    def skewness(self) -> float:
        mu, var = self.mean(), self.variance()
        return float(np.sum((self.grid - mu) ** 3 * self.masses) / np.sum(self.masses) / var**1.5)

    def cdf(self, x) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        return np.interp(x, self.edges, cum / cum[-1], left=0.0, right=1.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-CDF draws from the piecewise-constant density."""
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        cum /= cum[-1]
        u = rng.uniform(size=size)
        return np.interp(u, cum, self.edges)

    def to_csv(self) -> str:
        lines = ["x,density"] + [f"{x:.17g},{p:.17g}" for x, p in zip(self.grid, self.density)]
        return "\n".join(lines) + "\n"

    def char_fn_csv(self) -> str:
        if self.char_fn is None:
            return "t,re,im\n"
        t, phi = self.char_fn
        lines = ["t,re,im"] + [f"{a:.17g},{b.real:.17g},{b.imag:.17g}" for a, b in zip(t, phi)]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "method": self.method,
            "metadata": self.metadata,
            "grid": [float(x) for x in self.grid],
            "density": [float(p) for p in self.density],
        }
        if self.char_fn is not None:
            t, phi = self.char_fn
            doc["char_fn"] = {"t": [float(x) for x in t], "re": [float(z.real) for z in phi], "im": [float(z.imag) for z in phi]}
        return json.dumps(doc, sort_keys=True)


@dataclass(frozen=True)
class GaussianReference:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def pdf(self, x) -> np.ndarray:
        return norm.pdf(x, self.mean, self.std)

    def cdf(self, x) -> np.ndarray:
        return norm.cdf(x, self.mean, self.std)


def _point_mass(v: float, method: str, **meta) -> DistributionEstimate:
    w = max(abs(v), 1.0) * 1e-6
    return DistributionEstimate(np.array([v - w, v, v + w]), np.array([0.0, 1.0 / w, 0.0]), method, metadata=meta)


def histogram_estimate(values, method: str, edges=None, **meta) -> DistributionEstimate:
    """Histogram density (Freedman-Diaconis bins unless edges given), zero-padded at both ends."""
    values = np.asarray(values, dtype=float)
    if edges is None:
        if np.ptp(values) == 0:
            return _point_mass(float(values[0]), method, **meta)
        edges = np.histogram_bin_edges(values, bins="fd")
    edges = np.asarray(edges, dtype=float)
    h = np.diff(edges)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise GridMismatch("histogram edges must be uniform")
    counts, _ = np.histogram(values, bins=edges)
    dens = counts / (len(values) * h[0])
    centers = 0.5 * (edges[:-1] + edges[1:])
    grid = np.concatenate([[centers[0] - h[0]], centers, [centers[-1] + h[0]]])
    dens = np.concatenate([[0.0], dens, [0.0]])
    mass = np.sum(dens) * h[0]
    if mass > 0:
        dens = dens / mass
    return DistributionEstimate(grid, dens, method, metadata=meta)


def _sample_moments(values) -> dict:
    v = np.asarray(values, dtype=float)
    mu, sd = float(v.mean()), float(v.std())
    skew = float(np.mean((v - mu) ** 3) / sd**3) if sd > 0 else 0.0
    return {"sample_mean": mu, "sample_variance": sd**2, "sample_skewness": skew}


def empirical_distribution(series: HarmonicSeries, sample_count: int, seed: int, edges=None, threads=None) -> DistributionEstimate:
    """Histogram of the series at uniform random torus points."""
    parts = _block_values(series, sample_count, seed, "empirical", threads)
    vals = np.concatenate(parts)
    meta = {"sample_count": int(sample_count), "seed": int(seed), "terms": len(series)}
    meta.update(_sample_moments(vals))
    return histogram_estimate(vals, "empirical", edges, **meta)


# -- characteristic functions ---------------------------------------------------
def gaussian_reference(series: HarmonicSeries) -> GaussianReference:
    """mean and 1/2 sum C-tilde^2 of the torus-reduced series."""
    red = series.torus_reduced()
    return GaussianReference(float(red.mean), red.variance)


def default_t_grid(series: HarmonicSeries, t_max: float | None = None, points: int | None = None) -> np.ndarray:
    points = T_GRID_POINTS if points is None else points
    if t_max is None:
        sd = np.sqrt(max(series.torus_reduced().variance, 1e-300))
        t_max = T_EXTENT / sd
    return np.linspace(0.0, t_max, points)


def default_x_grid(center: float, sd: float, points: int | None = None, width: float = 6.0) -> np.ndarray:
    points = X_GRID_POINTS if points is None else points
    return np.linspace(center - width * sd, center + width * sd, points)


def invert_char_fn(t, phi, center: float, x_grid, method: str, **meta) -> DistributionEstimate:
    """Density of Y = center + Z from Phi_Z on t >= 0, Gaussian-tapered.

    Negative lobes down to CLIP times the peak are clipped; deeper ones mean
    the t-grid is too short and raise FourierArtifact.
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=complex)
    x = np.asarray(x_grid, dtype=float)
    t_max = t[-1]
    w = np.exp(-0.5 * (TAPER * t / t_max) ** 2)
    wt = np.full(len(t), t[1] - t[0])
    wt[0] *= 0.5
    wt[-1] *= 0.5
    dens = (np.cos(np.outer(x - center, t)) @ (wt * w * phi.real) + np.sin(np.outer(x - center, t)) @ (wt * w * phi.imag)) / np.pi
    peak = dens.max()
    if peak <= 0 or dens.min() < -CLIP * peak:
        raise FourierArtifact(f"inverse transform dips to {dens.min():.3g} against peak {peak:.3g}; extend the t-grid")
    dens = np.clip(dens, 0.0, None)
    dens /= np.trapezoid(dens, x)
    meta = dict(meta, t_max=float(t_max), t_points=len(t))
    return DistributionEstimate(x, dens, method, (t, phi), meta)


def _degenerate_factor(series: HarmonicSeries, t):
    """b-dependent factor from parity-only terms; shape (2, len(t))."""
    deg = ~series.reduced_vectors.any(axis=1)
    out = np.ones((2, len(t)), dtype=complex)
    for b in (0, 1):
        val = -np.sum(series.amplitudes[deg] * np.cos(np.pi * series.parities[deg] * b + series.phases[deg]))
        out[b] = np.exp(1j * t * val)
    return out


def _exp_sums(t, v) -> np.ndarray:
    """sum_j exp(i t_k v_j) for every k.

    On a uniform grid t_k = t_0 + k dt the exponent splits as
    (t_0 + c a dt) + b dt with k = c a + b, turning the sum into one matrix
    product with O(sqrt(len(t))) exponentials per sample.
    """
    nt = len(t)
    uniform = nt > 2 and np.allclose(np.diff(t), t[1] - t[0], rtol=1e-12, atol=0)
    if not uniform:
        return np.exp(1j * np.outer(t, v)).sum(axis=1)
    dt = t[1] - t[0]
    a = int(np.ceil(np.sqrt(nt)))
    rows = (nt + a - 1) // a
    out = np.zeros(rows * a, dtype=complex)
    for s in range(0, len(v), 4096):
        vs = v[s:s + 4096]
        inner = np.exp(1j * np.outer(vs, dt * np.arange(a)))  # (n, a)
        outer = np.exp(1j * np.outer(t[0] + a * dt * np.arange(rows), vs))  # (rows, n)
        out += (outer @ inner).ravel()
    return out[:nt]


def char_fn_mc(series: HarmonicSeries, t, sample_count: int, seed: int, threads=None) -> np.ndarray:
    """Phi(t) = E exp(i t (f - mean)) by torus Monte Carlo."""
    t = np.asarray(t, dtype=float)
    red = series.torus_reduced()

    def run(block):
        b, size = block
        g = rng_stream(seed, "exact_mc", b)
        x = g.uniform(0.0, 2 * np.pi, size=(size, series.torus_dim))
        bits = g.integers(0, 2, size=size)
        return _exp_sums(t, red.on_torus(x, bits) - series.mean)

    parts = ordered_map(run, _blocks(sample_count), threads)
    total = np.zeros(len(t), dtype=complex)
    for p in parts:
        total += p
    return total / sample_count


def char_fn_bessel(series: HarmonicSeries, t) -> np.ndarray:
    red = series.torus_reduced()
    t = np.asarray(t, dtype=float)
    return np.prod(j0(np.outer(t, red.amplitudes)), axis=1).astype(complex)


def char_fn_gaussian(series: HarmonicSeries, t) -> np.ndarray:
    return np.exp(-0.5 * gaussian_reference(series).variance * np.asarray(t, dtype=float) ** 2).astype(complex)


def char_fn_simple_orbit(series: HarmonicSeries, t, quadrature: int | None = None):
    """Phi(t) = 1/2 sum_b prod_classes Q_c(t, b), classes keyed by primitive reduced vector.

    Within a class all terms are functions of theta = m.x, uniform on the
    circle; Q_c is a trapezoid average over theta.  Returns (Phi, info).
    """
    red = series.torus_reduced()
    t = np.asarray(t, dtype=float)
    cls = classify_simple(red.reduced_vectors)
    result = _degenerate_factor(red, t)
    nodes_used = []
    for c in cls.classes:
        idx = np.array(c.members)
        nu = np.array(c.multiples, dtype=float)
        C = red.amplitudes[idx]
        if quadrature is None:
            K = int(2 * np.max(np.abs(nu)) * t[-1] * np.sum(np.abs(C))) + 64
        else:
            K = int(quadrature)
        nodes_used.append(K)
        theta = 2 * np.pi * np.arange(K) / K
        for b in (0, 1):
            arg = np.outer(theta, nu) + np.pi * red.parities[idx] * b + red.phases[idx]
            g = -(np.cos(arg) @ C)  # (K,)
            result[b] *= _exp_sums(t, g) / K
    info = {"classes": len(cls.classes), "degenerate_terms": len(cls.degenerate), "max_nodes": max(nodes_used, default=0)}
    return 0.5 * (result[0] + result[1]), info


def _grid_for(series, x_grid):
    ref = gaussian_reference(series)
    if x_grid is None:
        x_grid = default_x_grid(ref.mean, max(ref.std, 1e-12))
    return ref, x_grid


def exact_distribution_mc(series, t_grid=None, sample_count: int = 10**4, seed: int = 0, x_grid=None, threads=None):
    if len(series) == 0:
        return _point_mass(series.mean, "exact_mc", seed=int(seed))
    ref, x_grid = _grid_for(series, x_grid)
    t = default_t_grid(series) if t_grid is None else np.asarray(t_grid, dtype=float)
    phi = char_fn_mc(series, t, sample_count, seed, threads)
    return invert_char_fn(t, phi, series.mean, x_grid, "exact_mc", sample_count=int(sample_count), seed=int(seed))


def simple_orbit_distribution(series, t_grid=None, quadrature: int | None = None, x_grid=None):
    if len(series) == 0:
        return _point_mass(series.mean, "simple_orbit")
    red = series.torus_reduced()
    ref, x_grid = _grid_for(series, x_grid)
    t = default_t_grid(series) if t_grid is None else np.asarray(t_grid, dtype=float)
    phi, info = char_fn_simple_orbit(series, t, quadrature)
    return invert_char_fn(t, phi, red.mean, x_grid, "simple_orbit", **info)


def bessel_distribution(series, t_grid=None, x_grid=None):
    red = series.torus_reduced()
    if len(red) == 0 or not np.any(red.amplitudes):
        return _point_mass(red.mean, "bessel")
    ref, x_grid = _grid_for(series, x_grid)
    t = default_t_grid(series) if t_grid is None else np.asarray(t_grid, dtype=float)
    return invert_char_fn(t, char_fn_bessel(series, t), red.mean, x_grid, "bessel", terms=len(red))


def gaussian_distribution(series, x_grid=None) -> DistributionEstimate:
    ref, x_grid = _grid_for(series, x_grid)
    if ref.variance == 0:
        return _point_mass(ref.mean, "gaussian")
    return DistributionEstimate(x_grid, ref.pdf(x_grid), "gaussian", metadata={"variance": ref.variance})


# -- comparisons ------------------------------------------------------------------
def distribution_metrics(a: DistributionEstimate, b: DistributionEstimate) -> tuple[float, float]:
    """(L1, KS) between two piecewise-constant densities, exact on the union of cell edges."""
    for d in (a, b):
        h = np.diff(d.grid)
        if not np.allclose(h, h[0], rtol=1e-6, atol=0):
            raise GridMismatch(f"{d.method} grid is not uniform")
    pts = np.union1d(a.edges, b.edges)
    Fa, Fb = a.cdf(pts), b.cdf(pts)
    ks = float(np.max(np.abs(Fa - Fb)))
    ma, mb = np.diff(Fa), np.diff(Fb)
    return float(np.sum(np.abs(ma - mb))), ks


def ks_to_reference(est: DistributionEstimate, ref: GaussianReference) -> float:
    pts = est.edges
    return float(np.max(np.abs(est.cdf(pts) - ref.cdf(pts))))


def wigner_surmise(s) -> np.ndarray:
    """GOE nearest-neighbour spacing law for unit mean spacing."""
    s = np.asarray(s, dtype=float)
    return np.where(s >= 0, 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s**2), 0.0)


@dataclass(frozen=True)
class FormFactor:
    tau: np.ndarray
    values: np.ndarray
    m_max: int
    tail: float  # largest |term| at m = m_max over the tau grid


def form_factor(char_fns, total_length: float, tau) -> FormFactor:
    """K2(tau) = (pi/L0) sum_{m=1}^{m_max} exp(-i pi m tau / L0) F_m(tau), truncated.

    ``char_fns[m-1]`` is F_m, either a callable of tau or an array on the
    tau grid, with F_m(tau) = <exp(-i (s_m - mean s_m) tau)>.
    """
    tau = np.asarray(tau, dtype=float)
    total = np.zeros(len(tau), dtype=complex)
    last = np.zeros(len(tau))
    for m, F in enumerate(char_fns, start=1):
        Fv = np.asarray(F(tau) if callable(F) else F, dtype=complex)
        term = np.exp(-1j * np.pi * m * tau / total_length) * Fv
        total += term
        last = np.abs(term)
    return FormFactor(tau, (np.pi / total_length) * total, len(char_fns), float(last.max()) if len(last) else 0.0)


def form_factor_direct(levels, m_max: int, tau) -> np.ndarray:
    """Oracle: (mean spacing) * average over n of sum_m exp(-i (k_{n+m} - k_n) tau)."""
    k = np.asarray(levels, dtype=float)
    tau = np.asarray(tau, dtype=float)
    n = len(k) - m_max
    mean_spacing = (k[-1] - k[0]) / (len(k) - 1)
    total = np.zeros(len(tau), dtype=complex)
    for m in range(1, m_max + 1):
        s = k[m:m + n] - k[:n]
        total += np.exp(-1j * np.outer(tau, s)).mean(axis=1)
    return mean_spacing * total


@dataclass(frozen=True)
class R2Result:
    grid: np.ndarray
    values: np.ndarray
    m_max: int


def r2_correlation(densities, total_length: float) -> R2Result:
    """R2(x) = (pi/L0) sum_m P_{s_m}(x) on a grid shared by all densities."""
    if not densities:
        raise GridMismatch("no densities supplied")
    grid = densities[0].grid
    for d in densities[1:]:
        if d.grid.shape != grid.shape or not np.allclose(d.grid, grid, rtol=0, atol=1e-12 * max(1.0, np.abs(grid).max())):
            raise GridMismatch("spacing densities must share one grid")
    vals = (np.pi / total_length) * np.sum([d.density for d in densities], axis=0)
    return R2Result(grid, vals, len(densities))


# -- hierarchy propagation ---------------------------------------------------------
def propagate_hierarchy(
    upper: DistributionEstimate,
    transition: TransitionSeries,
    sample_count: int,
    seed: int,
    observable: str = "delta",
    edges=None,
    threads=None,
) -> DistributionEstimate:
    """Law of the level-(j-1) observable with level-j fluctuations drawn independently from ``upper``.

    ``observable="spacing"`` gives the nearest-neighbour spacing through two
    consecutive transition values sharing one torus orbit.
    """
    if observable not in ("delta", "spacing"):
        raise ValueError(f"unknown observable {observable!r}")
    exp = transition.expansion
    dim = exp.vectors.shape[1] - 1
    om = exp.bond_lengths[:-1] / exp.total_length

    def run(block):
        b, size = block
        g = rng_stream(seed, f"propagate-{observable}", b)
        x = g.uniform(0.0, 2 * np.pi, size=(size, dim))
        bits = g.integers(0, 2, size=size)
        d = [upper.sample(g, size) for _ in range(3 if observable == "spacing" else 2)]
        v = transition.on_torus(x, bits, d[0], d[1])
        if observable == "delta":
            return v
        # next index: torus advances by pi * Omega_i, parity flips
        v_next = transition.on_torus(np.mod(x + np.pi * om, 2 * np.pi), 1 - bits, d[2], d[0])
        return (np.pi / exp.total_length) * (1.0 + v_next - v)

    vals = np.concatenate(ordered_map(run, _blocks(sample_count), threads))
    meta = {"sample_count": int(sample_count), "seed": int(seed), "observable": observable, "level": exp.level}
    meta.update(_sample_moments(vals))
    return histogram_estimate(vals, "propagated", edges, **meta)


def propagate_chain(poly, r: int, max_order: int, sample_count: int, seed: int, spacing: bool = False, threads=None):
    """Propagate from the explicit top level r+1 down to level 0.

    Returns the level densities ordered from level 0 up to level r+1 and,
    when ``spacing`` is set, the level-0 nearest-neighbour spacing density.
    """
    upper = point_mass(baseline_phase(poly, r))
    chain = [upper]
    transition = None
    for j in range(r + 1, 0, -1):
        transition = TransitionSeries(level_expansion(poly, j - 1, max_order), None, "exact", upper.mean() - 0.5)
        prev, upper = upper, propagate_hierarchy(upper, transition, sample_count, seed + j, threads=threads)
        chain.append(upper)
    chain.reverse()
    sp = None
    if spacing:
        sp = propagate_hierarchy(prev, transition, sample_count, seed, "spacing", threads=threads)
    return chain, sp


def point_mass(value: float) -> DistributionEstimate:
    """Distribution concentrated at ``value`` (e.g. the explicit top level)."""
    return _point_mass(float(value), "point")


@dataclass(frozen=True)
class LadderReport:
    l1: dict  # method -> mean L1 to empirical over replicates
    stderr: dict
    replicates: int

    def ordered(self, k: float = 2.0) -> bool:
        eps = k * max(self.stderr.values())
        return self.l1["exact_mc"] <= self.l1["simple_orbit"] + eps and self.l1["simple_orbit"] <= self.l1["bessel"] + eps


def approximation_ladder(
    series: HarmonicSeries, sample_count: int, seed: int, replicates: int = 4, exact_samples: int | None = None, threads=None
) -> LadderReport:
    """L1 distance of each approximation to the empirical law, averaged over replicate seeds.

    The exact Monte Carlo estimate draws ``exact_samples`` (default
    ``sample_count``) points from a stream independent of the empirical one.
    """
    exact_samples = sample_count if exact_samples is None else exact_samples
    simple = simple_orbit_distribution(series)
    bessel = bessel_distribution(series)
    gauss = gaussian_distribution(series)
    rows = {"exact_mc": [], "simple_orbit": [], "bessel": [], "gaussian": []}
    for r in range(replicates):
        s = seed * 1000 + r
        emp = empirical_distribution(series, sample_count, s, threads=threads)
        exact = exact_distribution_mc(series, sample_count=exact_samples, seed=s + 500, threads=threads)
        for name, est in (("exact_mc", exact), ("simple_orbit", simple), ("bessel", bessel), ("gaussian", gauss)):
            rows[name].append(distribution_metrics(est, emp)[0])
    l1 = {k: float(np.mean(v)) for k, v in rows.items()}
    se = {k: float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0 for k, v in rows.items()}
    return LadderReport(l1, se, replicates)
