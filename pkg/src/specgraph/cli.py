"""Command-line front end: ``specgraph <command> --graph FILE --out DIR ...``.

Graph files are JSON documents ``{"vertices": n, "bonds": [[a, b, length], ...]}``
with an optional ``"vertex_scattering": {"v": [[...], ...]}`` block of real
unitary matrices replacing the Kirchhoff matrix at selected vertices.

Every output file carries the library version and a hash of the run
configuration (graph document included), and is written with fixed float
formatting so reruns with the same configuration are byte-identical.

Exit codes: 0 success, 1 usage or input error, 2 interlacing violation,
3 non-real zero, 4 Fourier inversion artifact.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CloseZeros, FourierArtifact, NonRealZero, SpecGraphError
from .graph import GraphSpec, bond_scattering_matrix, build_graph, custom_scattering
from .orbits import OrbitExpansion, enumerate_orbits, orbits_csv
from .roots import baseline_phase, hierarchy_csv, separator_hierarchy, verify_hierarchy, weyl_fit
from .secular import regularity_index, secular_polynomial
from .series import delta_series, hierarchy_transition, level_expansion, spacing_series
from . import stats

EXIT_USAGE, EXIT_BOOTSTRAP, EXIT_NONREAL, EXIT_FOURIER = 1, 2, 3, 4
STOCHASTIC = ("stats",)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    graph: str
    kmin: float
    kmax: float
    max_scatter: int
    depth: int | None
    samples: int
    seed: int | None
    out: str
    observable: str
    m: int
    m_max: int

    def __post_init__(self):
        positive = {"kmax": self.kmax, "max_scatter": self.max_scatter, "samples": self.samples, "m": self.m, "m_max": self.m_max}
        for name, val in positive.items():
            if not val > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive, got {val}")
        if self.kmin <= 0 or self.kmin >= self.kmax:
            raise UsageError(f"need 0 < kmin < kmax, got ({self.kmin}, {self.kmax})")
        if self.depth is not None and self.depth < 0:
            raise UsageError("--depth must be nonnegative")
        if self.command in STOCHASTIC and self.seed is None:
            raise UsageError(f"'{self.command}' is stochastic and needs --seed")


def _load_graph(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read graph file: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    spec = GraphSpec.from_dict(doc)
    graph = build_graph(spec)
    overrides = {int(v): np.array(m, dtype=float) for v, m in doc.get("vertex_scattering", {}).items()}
    S = bond_scattering_matrix(graph, custom_scattering(graph, overrides))
    return doc, graph, S


def _config_hash(cfg: RunConfig, doc) -> str:
    payload = {k: v for k, v in asdict(cfg).items() if k not in ("out", "graph")}
    payload["graph_document"] = doc
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


class _Writer:
    def __init__(self, cfg: RunConfig, digest: str):
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.digest = digest
        self.written: list[str] = []

    def csv(self, name: str, body: str) -> None:
        head = f"# specgraph {__version__} config {self.digest}\n"
        (self.dir / name).write_text(head + body)
        self.written.append(name)

    def json(self, name: str, doc: dict) -> None:
        doc = {"version": __version__, "config_hash": self.digest, **doc}
        (self.dir / name).write_text(json.dumps(doc, sort_keys=True, indent=1, default=_plain) + "\n")
        self.written.append(name)


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _regularity(poly, cfg):
    rep = regularity_index(poly)
    r = cfg.depth if cfg.depth is not None else rep.hierarchy_depth
    doc = {"r": rep.r, "status": rep.status, "criterion_values": list(rep.criterion_values), "mode": rep.mode, "depth_used": r}
    return rep, r, doc


# -- commands -------------------------------------------------------------------
def cmd_spectrum(cfg, doc, graph, S, out: _Writer) -> int:
    poly = secular_polynomial(graph, S)
    rep, r, reg_doc = _regularity(poly, cfg)
    levels = separator_hierarchy(poly, r, (cfg.kmin, cfg.kmax), multiplicity="repeat")
    for seq in levels:
        lines = ["n,k,delta"] + [f"{n},{k:.17g},{d:.17g}" for n, k, d in zip(seq.labels, seq.zeros, seq.fluctuations)]
        out.csv(f"zeros_level{seq.level}.csv", "\n".join(lines) + "\n")
    out.json("regularity.json", reg_doc)
    reports = verify_hierarchy(levels)
    boot = {
        "passed": all(b.passed for b in reports),
        "pairs": [
            {"lower": levels[j].level, "upper": levels[j + 1].level, "checked_gaps": b.checked_gaps,
             "violations": [list(v) for v in b.violations]}
            for j, b in enumerate(reports)
        ],
    }
    out.json("bootstrap.json", boot)
    level0 = levels[0]
    weyl = {"zeros": len(level0), "expected_slope": graph.total_length / np.pi}
    if len(level0) >= 2:
        fit = weyl_fit(level0, min_zeros=2)
        weyl.update(slope=fit.slope, intercept=fit.intercept, max_residual=float(np.abs(fit.residuals).max()))
    out.json("weyl.json", weyl)
    return 0 if boot["passed"] else EXIT_BOOTSTRAP


def cmd_hierarchy(cfg, doc, graph, S, out: _Writer) -> int:
    poly = secular_polynomial(graph, S)
    rep, r, reg_doc = _regularity(poly, cfg)
    levels = separator_hierarchy(poly, r, (cfg.kmin, cfg.kmax), multiplicity="repeat")
    out.csv("hierarchy.csv", hierarchy_csv(levels))
    steps = []
    lines = ["level,n,actual,predicted"]
    for j in range(len(levels) - 1, 0, -1):
        low = levels[j - 1]
        T = hierarchy_transition(levels[j], level_expansion(poly, j - 1, cfg.max_scatter))
        inner = low.labels[2:-2]
        pred = T.evaluate(inner) if len(inner) else np.zeros(0)
        act = low.fluctuations[2:-2]
        lines += [f"{low.level},{n},{a:.17g},{p:.17g}" for n, a, p in zip(inner, act, pred)]
        steps.append({"from": j, "to": j - 1, "max_error": float(np.abs(pred - act).max()) if len(act) else None})
    out.csv("transitions.csv", "\n".join(lines) + "\n")
    reports = verify_hierarchy(levels)
    out.json("hierarchy.json", {"regularity": reg_doc, "transitions": steps, "interlaced": all(b.passed for b in reports)})
    return 0 if all(b.passed for b in reports) else EXIT_BOOTSTRAP


def cmd_orbits(cfg, doc, graph, S, out: _Writer) -> int:
    orbits = enumerate_orbits(graph, S, cfg.max_scatter)
    out.csv("orbits.csv", orbits_csv(orbits))
    exp = OrbitExpansion.from_orbits(orbits, graph.lengths, cfg.max_scatter)
    out.csv("expansion.csv", exp.to_csv())
    out.json("orbits.json", {"primitive_orbits": len(orbits), "traversal_vectors": len(exp), "max_scatter": cfg.max_scatter})
    return 0


def _series(cfg, poly):
    exp = OrbitExpansion.log_expansion(poly, cfg.max_scatter)
    gamma = baseline_phase(poly, 0)
    if cfg.observable == "delta":
        return delta_series(exp, gamma=gamma)
    return spacing_series(exp, cfg.m, gamma=gamma)


def cmd_series(cfg, doc, graph, S, out: _Writer) -> int:
    poly = secular_polynomial(graph, S)
    ser = _series(cfg, poly)
    red = ser.torus_reduced()
    out.csv("series.csv", ser.to_csv())
    out.csv("series_reduced.csv", red.to_csv())
    out.json("series.json", {
        "observable": cfg.observable, "m": cfg.m if cfg.observable == "spacing" else 0, "max_order": cfg.max_scatter,
        "mean": ser.mean, "terms": len(ser), "reduced_terms": len(red), "variance": red.variance,
        "exact_variance": red.exact_variance,
    })
    return 0


def cmd_stats(cfg, doc, graph, S, out: _Writer) -> int:
    poly = secular_polynomial(graph, S)
    ser = _series(cfg, poly)
    seed = int(cfg.seed)
    emp = stats.empirical_distribution(ser, cfg.samples, seed)
    ests = {
        "empirical": emp,
        "exact_mc": stats.exact_distribution_mc(ser, sample_count=cfg.samples, seed=seed + 1),
        "simple_orbit": stats.simple_orbit_distribution(ser),
        "bessel": stats.bessel_distribution(ser),
        "gaussian": stats.gaussian_distribution(ser),
    }
    metrics = {}
    for name, est in ests.items():
        out.csv(f"density_{name}.csv", est.to_csv())
        if est.char_fn is not None:
            out.csv(f"charfn_{name}.csv", est.char_fn_csv())
        l1, ks = stats.distribution_metrics(est, emp)
        metrics[name] = {"l1_to_empirical": l1, "ks_to_empirical": ks, "metadata": est.metadata}
    ref = stats.gaussian_reference(ser)
    summary = {
        "observable": cfg.observable, "seed": seed, "samples": cfg.samples, "max_order": cfg.max_scatter,
        "gaussian": {"mean": ref.mean, "variance": ref.variance}, "ks_empirical_gaussian": stats.ks_to_reference(emp, ref),
        "methods": metrics, "seeds": {"empirical": seed, "exact_mc": seed + 1, "pair_density": seed + 2, "propagation": seed + 3},
    }

    # two-point statistics from spacing series m = 1..m_max
    exp = OrbitExpansion.log_expansion(poly, cfg.max_scatter)
    gamma = baseline_phase(poly, 0)
    L0 = graph.total_length
    sp = [spacing_series(exp, m, gamma=gamma) for m in range(1, cfg.m_max + 1)]
    tau = np.linspace(0.0, 4 * L0, 801)
    K2 = stats.form_factor([lambda t, s=s: np.conj(stats.char_fn_bessel(s, t)) for s in sp], L0, tau)
    out.csv("form_factor.csv", "\n".join(["tau,re,im"] + [f"{t:.17g},{v.real:.17g},{v.imag:.17g}" for t, v in zip(tau, K2.values)]) + "\n")
    edges = np.linspace(0.0, (cfg.m_max + 1) * np.pi / L0, 40 * (cfg.m_max + 1) + 1)
    pair = [stats.empirical_distribution(s, cfg.samples, seed + 2, edges=edges) for s in sp]
    R2 = stats.r2_correlation(pair, L0)
    out.csv("r2.csv", "\n".join(["x,r2"] + [f"{x:.17g},{v:.17g}" for x, v in zip(R2.grid, R2.values)]) + "\n")
    summary["form_factor"] = {"m_max": K2.m_max, "tail": K2.tail}

    # hierarchy propagation for graphs with derivative levels
    rep, r, reg_doc = _regularity(poly, cfg)
    if r > 0:
        chain, sp0 = stats.propagate_chain(poly, r, min(cfg.max_scatter, 16), cfg.samples, seed + 3, spacing=True)
        for j, est in enumerate(chain):
            out.csv(f"propagated_level{j}.csv", est.to_csv())
        out.csv("propagated_spacing_level0.csv", sp0.to_csv())
        summary["propagation"] = {"depth": r, "level0_variance": chain[0].variance(), "spacing_skewness": sp0.skewness()}
    summary["regularity"] = reg_doc
    out.json("metrics.json", summary)
    return 0


COMMANDS = {"spectrum": cmd_spectrum, "hierarchy": cmd_hierarchy, "orbits": cmd_orbits, "series": cmd_series, "stats": cmd_stats}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specgraph", description="Spectral statistics of quantum graphs.")
    p.add_argument("--version", action="version", version=f"specgraph {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--graph", required=True, help="graph JSON file")
        s.add_argument("--kmin", type=float, default=1.0, help="window start, > 0 for spectrum and hierarchy")
        s.add_argument("--kmax", type=float, default=200.0)
        s.add_argument("--max-scatter", type=int, default=12, help="orbit / series truncation order M")
        s.add_argument("--depth", type=int, default=None, help="override the computed hierarchy depth r")
        s.add_argument("--samples", type=int, default=10**4)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--observable", choices=("delta", "spacing"), default="delta")
        s.add_argument("--m", type=int, default=1, help="spacing order")
        s.add_argument("--m-max", type=int, default=3, help="spacing orders for form factor and R2")
        s.add_argument("--out", required=True, help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            args.command, args.graph, args.kmin, args.kmax, args.max_scatter, args.depth, args.samples, args.seed,
            args.out, args.observable, args.m, args.m_max,
        )
        doc, graph, S = _load_graph(cfg.graph)
        out = _Writer(cfg, _config_hash(cfg, doc))
        return COMMANDS[cfg.command](cfg, doc, graph, S, out)
    except UsageError as exc:
        print(f"specgraph: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonRealZero, CloseZeros) as exc:
        print(f"specgraph: {exc}", file=sys.stderr)
        return EXIT_NONREAL
    except FourierArtifact as exc:
        print(f"specgraph: {exc}", file=sys.stderr)
        return EXIT_FOURIER
    except (SpecGraphError, ValueError) as exc:
        print(f"specgraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
