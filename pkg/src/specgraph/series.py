"""Harmonic expansions of level fluctuations and spacings.

Every series is stored in one cosine normal form

    f(n) = mean - sum_p C_p cos(omega_p n + phi_p),

with real (possibly negative) C_p.  A sine-convention term C sin(x + phi)
is the same as C cos(x + phi - pi/2).

Derivation sketch for the regular level.  A zero labelled n is the only
zero of its separator cell (khat_{n-1}, khat_n), so

    k_n = khat_n - int_cell (N(k) - (n - 1)) dk,

and substituting N = L0 k / pi + c + (1/pi) Im sum A exp(i k L) gives the
coefficients below.  The same computation over a cell with fluctuating ends
gives the hierarchy transition, either exactly (``mode="exact"``) or in the
form linear in the cell width (``mode="linear"``).

Torus data: with x_i = pi n Omega_i (mod 2pi), i < B, and parity b = n mod 2,
omega_p n = mtilde_p . x + pi m_{p,B} b (mod 2pi), where mtilde is the
traversal vector with its last entry subtracted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MissingLevelData
from .orbits import OrbitExpansion

OBSERVABLES = ("delta", "spacing")


@dataclass(frozen=True, eq=False)
class HarmonicSeries:
    mean: float
    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    orbit_ids: np.ndarray = field(repr=False)
    reduced_vectors: np.ndarray = field(repr=False)
    parities: np.ndarray = field(repr=False)
    level: int = 0
    observable: str = "delta"
    m: int = 0
    max_order: int | None = None

    def __post_init__(self):
        C = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        for name, dt in (("frequencies", float), ("phases", float), ("orbit_ids", np.int64), ("parities", np.int64)):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=dt)))
        object.__setattr__(self, "amplitudes", C)
        rv = np.asarray(self.reduced_vectors, dtype=np.int64)
        width = rv.shape[-1] if rv.ndim == 2 else (rv.size // len(C) if len(C) else 0)
        object.__setattr__(self, "reduced_vectors", rv.reshape(len(C), width))
        if self.observable not in OBSERVABLES:
            raise ValueError(f"unknown observable {self.observable!r}")

    def __len__(self):
        return len(self.amplitudes)

    @property
    def torus_dim(self) -> int:
        return self.reduced_vectors.shape[1]

    @property
    def variance(self) -> float:
        return 0.5 * float(np.sum(self.amplitudes**2))

    @classmethod
    def synthetic(cls, amplitudes, phases=None, mean: float = 0.0, frequencies=None) -> "HarmonicSeries":
        """Terms on independent torus coordinates (one axis per term)."""
        C = np.atleast_1d(np.asarray(amplitudes, dtype=float))
        n = len(C)
        phases = np.zeros(n) if phases is None else phases
        freqs = np.sqrt(2.0 + np.arange(n)) if frequencies is None else frequencies
        return cls(mean, C, freqs, phases, np.arange(n), np.eye(n, dtype=np.int64), np.zeros(n, np.int64))

    def truncated(self, keep) -> "HarmonicSeries":
        return HarmonicSeries(
            self.mean, self.amplitudes[keep], self.frequencies[keep], self.phases[keep], self.orbit_ids[keep],
            self.reduced_vectors[keep], self.parities[keep], self.level, self.observable, self.m, self.max_order,
        )

    def on_torus(self, x, b) -> np.ndarray:
        """f at torus points x (N, dim) with parity bits b (N,)."""
        b = np.asarray(b).reshape(-1)
        if len(self) == 0:
            return np.full(len(b), float(self.mean))
        x = np.asarray(x, dtype=float).reshape(len(b), self.torus_dim)
        arg = x @ self.reduced_vectors.T.astype(float) + np.pi * np.outer(b, self.parities) + self.phases
        return self.mean - np.cos(arg) @ self.amplitudes

    def torus_reduced(self) -> "HarmonicSeries":
        """Merge terms that are the same function on the torus.

        Terms share a torus function when their reduced vectors agree up to
        sign and their parities agree; their frequencies then differ by even
        multiples of pi, invisible at integer n.  Merged amplitudes are the
        moduli of the summed phasors (the C-tilde coefficients).  Terms with
        zero reduced vector and even parity are constants and move into the
        mean.  The result evaluates identically at every integer n.
        """
        if len(self) == 0:
            return self
        rv = self.reduced_vectors.copy()
        ph = self.phases.copy()
        nz = rv != 0
        if rv.shape[1]:
            first = np.where(nz.any(axis=1), rv[np.arange(len(rv)), nz.argmax(axis=1)], 0)
        else:  # single bond: every term is parity-only
            first = np.zeros(len(rv), dtype=np.int64)
        flip = first < 0
        rv[flip] *= -1
        ph[flip] *= -1
        keys = np.column_stack([rv, self.parities % 2])
        uniq, idx, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        z = np.zeros(len(uniq), dtype=complex)
        np.add.at(z, inv.ravel(), self.amplitudes * np.exp(1j * ph))
        mean = self.mean
        const = ~uniq.any(axis=1)
        mean -= float(np.sum(z[const].real))
        keep = ~const
        order = np.sort(idx[keep])
        pos = {int(i): j for j, i in enumerate(idx)}
        sel = np.array([pos[int(i)] for i in order], dtype=int)
        zs = z[sel]
        # keep each representative's own orientation so frequency and phase agree
        rep_flip = flip[order]
        phase = np.where(rep_flip, -np.angle(zs), np.angle(zs))
        return HarmonicSeries(
            mean, np.abs(zs), self.frequencies[order], phase, self.orbit_ids[order],
            self.reduced_vectors[order], self.parities[order] % 2, self.level, self.observable, self.m, self.max_order,
        )

    @property
    def exact_variance(self) -> float:
        """Variance on the torus: 1/2 sum C^2 over genuine torus terms plus
        (C cos phi)^2 for parity-only terms.  Call on a torus-reduced series."""
        deg = ~self.reduced_vectors.any(axis=1)
        C = self.amplitudes
        return 0.5 * float(np.sum(C[~deg] ** 2)) + float(np.sum((C[deg] * np.cos(self.phases[deg])) ** 2))

    def to_csv(self) -> str:
        lines = ["orbit_id,amplitude,omega,phase"]
        for i, c, w, p in zip(self.orbit_ids, self.amplitudes, self.frequencies, self.phases):
            lines.append(f"{i},{c:.17g},{w:.17g},{p:.17g}")
        return "\n".join(lines) + "\n"


def evaluate_series(series: HarmonicSeries, n) -> np.ndarray:
    """mean - sum C cos(omega n + phi), terms summed in stored order."""
    n = np.asarray(n, dtype=float)
    flat = n.ravel()
    out = np.empty(flat.shape)
    step = max(1, 2_000_000 // max(len(series), 1))
    for s in range(0, len(flat), step):
        arg = np.outer(flat[s:s + step], series.frequencies) + series.phases
        out[s:s + step] = series.mean - np.cos(arg) @ series.amplitudes
    return out.reshape(n.shape)


def torus_data(expansion: OrbitExpansion):
    v = expansion.vectors
    return v[:, :-1] - v[:, -1:], v[:, -1] % 2


def torus_points(frequency_basis, n) -> tuple[np.ndarray, np.ndarray]:
    """Torus coordinates x = pi n Omega_i (mod 2pi), i < B, and parity n mod 2."""
    n = np.asarray(n)
    om = np.asarray(frequency_basis, dtype=float)[:-1]
    x = np.mod(np.pi * np.outer(n.astype(float), om), 2 * np.pi)
    return x, np.mod(n, 2)


def _base(expansion: OrbitExpansion, M: int | None):
    exp = expansion if M is None else expansion.truncate(M)
    w = exp.frequencies
    A = exp.amplitudes
    rv, par = torus_data(exp)
    return exp, w, np.abs(A), np.angle(A), rv, par


def delta_series(expansion: OrbitExpansion, M: int | None = None, gamma: float = 0.5) -> HarmonicSeries:
    """delta_n of the regular level, cells from the lattice (pi/L0)(n + gamma).

    C = (2/pi)(|A|/omega) sin(omega/2),  phi = omega (gamma - 1/2) + arg A - pi/2,
    mean = gamma - 1/2.
    """
    exp, w, mod, arg, rv, par = _base(expansion, M)
    C = (2 / np.pi) * mod / w * np.sin(w / 2)
    phi = w * (gamma - 0.5) + arg - np.pi / 2
    return HarmonicSeries(gamma - 0.5, C, w, phi, np.arange(len(w)), rv, par, exp.level, "delta", 0, exp.max_order)


def spacing_series(expansion: OrbitExpansion, m: int, M: int | None = None, gamma: float = 0.5) -> HarmonicSeries:
    """s_{n,m} = k_{n+m} - k_n of the regular level.

    D = (4/L0)(|A|/omega) sin(omega/2) sin(omega m/2), mean pi m/L0,
    phase = phi_delta + omega m/2 + pi/2 (= omega m/2 for real A, gamma = 1/2).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    exp, w, mod, arg, rv, par = _base(expansion, M)
    L0 = exp.total_length
    D = (4 / L0) * mod / w * np.sin(w / 2) * np.sin(w * m / 2)
    phi = w * (gamma - 0.5) + arg + w * m / 2
    return HarmonicSeries(np.pi * m / L0, D, w, phi, np.arange(len(w)), rv, par, exp.level, "spacing", m, exp.max_order)


# -- hierarchy transitions ---------------------------------------------------
TRANSITION_MODES = ("exact", "linear")
SPACING_MODES = ("derived", "literal", "additive")


def _lookup(fluct, n):
    """Level-j fluctuations at integer labels n (array)."""
    try:
        return np.asarray(fluct(n), dtype=float)
    except KeyError as exc:
        raise MissingLevelData(f"no level data for label {exc}") from None


def fluctuation_lookup(seq) -> Callable:
    """Callback n -> delta_n for a SeparatorSequence; MissingLevelData outside its labels."""
    table = dict(zip(seq.labels.tolist(), seq.fluctuations.tolist()))

    def get(n):
        n = np.asarray(n)
        try:
            return np.array([table[int(i)] for i in n.ravel()]).reshape(n.shape)
        except KeyError as exc:
            raise MissingLevelData(f"label {exc.args[0]} not present at level {seq.level}") from None

    return get


@dataclass(frozen=True, eq=False)
class TransitionSeries:
    """delta^{(j-1)}_n as a harmonic series whose coefficients depend on level-j data.

    With d1 = delta^{(j)}_n, d2 = delta^{(j)}_{n-1} and mu the mean of the
    lower level (0 reproduces the textbook zeroth term):

        mean = mu + (1/2 + mu)(d1 - d2) - (1/2)(d1^2 - d2^2)
        C    = (2/pi)(|A|/omega) sin(omega (1 + d1 - d2) / 2)           exact
             = (2/L0)(|A|/omega) sin(omega/2) (1 + d1 - d2)              linear
        sine phase = omega (d1 + d2 - 1)/2 + arg A
    """

    expansion: OrbitExpansion
    fluctuations: Callable | None
    mode: str = "exact"
    mean_level: float = 0.0

    def __post_init__(self):
        if self.mode not in TRANSITION_MODES:
            raise ValueError(f"unknown transition mode {self.mode!r}")

    @property
    def level(self) -> int:
        return self.expansion.level

    @property
    def total_length(self) -> float:
        return self.expansion.total_length

    def coefficients(self, d1, d2):
        """(mean, C, sine phase) broadcast over d1, d2 arrays (trailing axis = terms)."""
        d1 = np.asarray(d1, dtype=float)[..., None]
        d2 = np.asarray(d2, dtype=float)[..., None]
        exp = self.expansion
        w = exp.frequencies
        mod, arg = np.abs(exp.amplitudes), np.angle(exp.amplitudes)
        mu = self.mean_level
        mean = (mu + (0.5 + mu) * (d1 - d2) - 0.5 * (d1**2 - d2**2))[..., 0]
        if self.mode == "exact":
            C = (2 / np.pi) * mod / w * np.sin(w * (1 + d1 - d2) / 2)
        else:
            C = (2 / exp.total_length) * mod / w * np.sin(w / 2) * (1 + d1 - d2)
        phase = w * (d1 + d2 - 1) / 2 + arg
        return mean, C, phase

    def _blocked(self, fn, *arrays):
        """Apply fn over row blocks so (rows x terms) temporaries stay bounded."""
        arrays = [np.asarray(a) for a in arrays]
        shape = np.broadcast_shapes(*(a.shape[:1] if a.ndim else () for a in arrays))
        rows = shape[0] if shape else 1
        arrays = [np.broadcast_to(a, (rows,) + a.shape[1:]) if a.ndim else np.full(rows, a) for a in arrays]
        step = max(1, 2_000_000 // max(len(self.expansion), 1))
        return np.concatenate([fn(*(a[s:s + step] for a in arrays)) for s in range(0, rows, step)]) if rows else np.zeros(0)

    def evaluate_with(self, n, d1, d2) -> np.ndarray:
        w = self.expansion.frequencies
        scalar = np.ndim(n) == 0 and np.ndim(d1) == 0 and np.ndim(d2) == 0

        def block(nb, a, b):
            mean, C, phase = self.coefficients(a, b)
            return mean - np.sum(C * np.sin(nb.astype(float)[:, None] * w + phase), axis=-1)

        out = self._blocked(block, np.atleast_1d(n), np.atleast_1d(d1), np.atleast_1d(d2))
        return out[0] if scalar else out

    def evaluate(self, n) -> np.ndarray:
        if self.fluctuations is None:
            raise MissingLevelData("transition has no level data attached")
        n = np.asarray(n)
        return self.evaluate_with(n, _lookup(self.fluctuations, n), _lookup(self.fluctuations, n - 1))

    def on_torus(self, x, b, d1, d2) -> np.ndarray:
        """Observable at torus points with independently supplied (d1, d2)."""
        rv, par = torus_data(self.expansion)
        rvf = rv.T.astype(float)

        def block(xb, bb, a, c):
            arg_n = xb @ rvf + np.pi * np.outer(bb, par)
            mean, C, phase = self.coefficients(a, c)
            return mean - np.sum(C * np.sin(arg_n + phase), axis=-1)

        x = np.asarray(x, dtype=float).reshape(-1, rv.shape[1])
        return self._blocked(block, x, np.asarray(b), np.asarray(d1, dtype=float), np.asarray(d2, dtype=float))

    def series_at(self, n: int) -> HarmonicSeries:
        """Freeze the coefficients at one label n."""
        d1 = float(_lookup(self.fluctuations, np.array([n]))[0])
        d2 = float(_lookup(self.fluctuations, np.array([n - 1]))[0])
        mean, C, phase = self.coefficients(d1, d2)
        rv, par = torus_data(self.expansion)
        exp = self.expansion
        return HarmonicSeries(float(mean), C, exp.frequencies, phase - np.pi / 2, np.arange(len(exp)), rv, par,
                              exp.level, "delta", 0, exp.max_order)

    # -- spacings -------------------------------------------------------------
    def spacing(self, n, m: int, mode: str = "derived") -> np.ndarray:
        """s^{(j-1)}_{n,m} = k_{n+m} - k_n in one of three forms.

        ``derived``: difference of two exact-transition fluctuations.
        ``literal``: f_s + (2/L0) sum D cos(omega (n - (m/2) phi)).
        ``additive``: as literal with the phase added, cos(omega n - (m/2) phi).
        The literal forms use D = (4/L0)(|A|/omega) sin(omega/2) sin(omega m/2)
        and phi the sine phase of the delta transition at n.
        """
        if mode not in SPACING_MODES:
            raise ValueError(f"unknown spacing mode {mode!r}")
        if m < 1:
            raise ValueError("m must be >= 1")
        n = np.asarray(n)
        L0 = self.total_length
        if mode == "derived":
            return (np.pi / L0) * (m + self.evaluate(n + m) - self.evaluate(n))
        get = lambda i: _lookup(self.fluctuations, i)
        s = lambda i, mm: (np.pi / L0) * (mm + get(i + mm) - get(i))
        s_nm, s_nm1, s_n1m = s(n, m), s(n, m - 1), s(n - 1, m)
        xi = 0.5 * (get(n) + get(n - 1))
        f_s = s_nm + (s_nm - s_nm1) * (np.pi * m / L0 - 0.5 * (s_nm + s_n1m)) - xi * (s_nm - s_n1m)
        _, _, phase = self.coefficients(get(n), get(n - 1))
        exp = self.expansion
        w = exp.frequencies
        D = (4 / L0) * np.abs(exp.amplitudes) / w * np.sin(w / 2) * np.sin(w * m / 2)
        nn = np.asarray(n, dtype=float)[..., None]
        if mode == "literal":
            arg = w * (nn - 0.5 * m * phase)
        else:
            arg = w * nn - 0.5 * m * phase
        return f_s + (2 / L0) * np.sum(D * np.cos(arg), axis=-1)


def hierarchy_transition(
    upper, expansion: OrbitExpansion, mode: str = "exact", mean_level: float | None = None
) -> TransitionSeries:
    """Transition series for level j-1 from level-j data.

    ``upper`` is a SeparatorSequence or a callable n -> delta_n.  When
    ``mean_level`` is None it is taken as (mean of level-j fluctuations) - 1/2,
    the offset between consecutive levels under cell labelling.
    """
    if upper is None:
        raise MissingLevelData("level-j fluctuations are required")
    if callable(upper):
        fluct = upper
        if mean_level is None:
            mean_level = 0.0
    else:
        if len(upper) == 0:
            raise MissingLevelData(f"level {upper.level} holds no zeros")
        fluct = fluctuation_lookup(upper)
        if mean_level is None:
            mean_level = float(np.mean(upper.fluctuations)) - 0.5
    return TransitionSeries(expansion, fluct, mode, float(mean_level))


def level_expansion(poly, j: int, max_order: int) -> OrbitExpansion:
    """Orbit-like expansion for the staircase of level j (centered j-th derivative)."""
    from .secular import centered_derivative

    center = 0.5 * (poly.min_length + poly.max_length)
    return OrbitExpansion.log_expansion(centered_derivative(poly, j, center), max_order, level=j)


# -- equidistribution ----------------------------------------------------------
def star_discrepancy(points) -> float:
    """Star discrepancy of points in [0,1)^d.

    Exact in one dimension; in higher dimensions the supremum is taken over
    anchored boxes with corners at sample coordinates, which bounds the
    true value from below.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    N, d = p.shape
    if d == 1:
        x = np.sort(p[:, 0])
        i = np.arange(1, N + 1)
        return float(max(np.max(i / N - x), np.max(x - (i - 1) / N)))
    worst = 0.0
    vol = np.prod(p, axis=1)
    step = max(1, 4_000_000 // N)
    for s in range(0, N, step):
        corners = p[s:s + step]
        inside_open = np.all(p[None, :, :] < corners[:, None, :], axis=2).sum(axis=1)
        inside_closed = np.all(p[None, :, :] <= corners[:, None, :], axis=2).sum(axis=1)
        v = vol[s:s + step]
        worst = max(worst, float(np.max(v - inside_open / N)), float(np.max(inside_closed / N - v)))
    return worst


def equidistribution_test(reduced_frequency_basis, N: int, bound: float = 10.0) -> tuple[bool, float]:
    """(passed, D_N) for (n Omegatilde_i) mod 1, n = 1..N, against bound / sqrt(N)."""
    n = np.arange(1, N + 1, dtype=float)
    pts = np.mod(np.outer(n, np.asarray(reduced_frequency_basis, dtype=float)), 1.0)
    D = star_discrepancy(pts)
    return D < bound / np.sqrt(N), D
