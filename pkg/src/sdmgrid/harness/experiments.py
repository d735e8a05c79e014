"""Named experiments. Each returns CSV tables keyed by file name."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from ..selector import select_batch
from ..wireless import NetGraph, build_graph
from .engine import metrics_csv, run_scenario
from .scenario import Scenario, node_jammer

CDF_GRID = np.logspace(-10, 0, 41)


@dataclass
class ExperimentResult:
    name: str
    tables: dict[str, str]
    data: dict[str, Any] = field(default_factory=dict)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _label(ids) -> str:
    return "-".join(str(u) for u in ids)


# -- time-domain runs ---------------------------------------------------------

def _time_domain(name: str, s: Scenario) -> ExperimentResult:
    trace, metrics = run_scenario(s)
    return ExperimentResult(
        name,
        {f"{name}_trace.csv": trace.to_csv(), f"{name}_metrics.csv": metrics_csv(metrics)},
        {"trace": trace, "metrics": metrics},
    )


def exp_static(seed: int = 0, periods: int = 3, base: Scenario | None = None) -> ExperimentResult:
    """Static VSS, intact wireless graph."""
    s = (base or Scenario()).with_overrides(seed=seed, periods=periods, dvsss_enabled=False)
    return _time_domain("exp_static", s)


def exp_dos_static(seed: int = 0, periods: int = 3, base: Scenario | None = None, target: int = 2) -> ExperimentResult:
    """Static VSS while ``target`` is jammed for the whole run."""
    s = (base or Scenario()).with_overrides(
        seed=seed, periods=periods, dvsss_enabled=False, jammers=(node_jammer(target),)
    )
    return _time_domain("exp_dos_static", s)


def exp_dos_dvsss(seed: int = 0, periods: int = 3, base: Scenario | None = None, target: int = 2) -> ExperimentResult:
    """Same attack, with the set re-elected every tertiary period."""
    s = (base or Scenario()).with_overrides(
        seed=seed, periods=periods, dvsss_enabled=True, jammers=(node_jammer(target),)
    )
    return _time_domain("exp_dos_dvsss", s)


# -- selection sweeps ---------------------------------------------------------

@dataclass
class GraphStats:
    graph: NetGraph
    candidates: list[tuple[int, ...]]
    choice: np.ndarray
    dvsss_jcq: np.ndarray
    static_set: tuple[int, ...]
    static_jcq: np.ndarray
    fallback: np.ndarray

    def frequencies(self) -> list[tuple[tuple[int, ...], int]]:
        counts = Counter(int(c) for c in self.choice)
        return sorted(((self.candidates[c], n) for c, n in counts.items()), key=lambda x: (-x[1], len(x[0]), x[0]))


def draw_capacities(rng: np.random.Generator, n_draws: int, n_ders: int, p_min: float, p_max: float) -> np.ndarray:
    return rng.uniform(p_min, p_max, size=(n_draws, n_ders))


def selection_stats(graph: NetGraph, caps: np.ndarray, s: Scenario) -> GraphStats:
    """DVSSS choices over many draws, against the most frequent choice held fixed."""
    cands, choice, p, fallback = select_batch(caps, graph, s.mu, s.sigma, s.selection.p_abs, s.selection.max_card)
    counts = Counter(int(c) for c in choice)
    # most frequent; ties to the canonical order
    best = min(counts, key=lambda c: (-counts[c], c))
    static = cands[best]
    mask = np.zeros(caps.shape[1], dtype=bool)
    mask[list(static)] = True
    csc = caps[:, ~mask].sum(axis=1)
    static_p = ndtr((csc - s.mu) / s.sigma)
    return GraphStats(graph, cands, choice, p, static, static_p, fallback)


def ecdf(values: np.ndarray, grid: np.ndarray = CDF_GRID) -> np.ndarray:
    v = np.sort(np.asarray(values))
    return np.searchsorted(v, grid, side="right") / len(v)


def case_study_graph(s: Scenario | None = None) -> NetGraph:
    s = s or Scenario()
    return build_graph(s.positions, s.rho)


def exp_selection_histogram(seed: int = 0, n_draws: int = 1000, base: Scenario | None = None) -> ExperimentResult:
    s = base or Scenario()
    rng = np.random.default_rng(seed)
    caps = draw_capacities(rng, n_draws, s.n_ders, s.p_min, s.p_max)
    st = selection_stats(case_study_graph(s), caps, s)
    hist = [(_label(v), n, n / n_draws) for v, n in st.frequencies()]
    cdf_rows = [
        (repr(float(x)), repr(float(a)), repr(float(b)))
        for x, a, b in zip(CDF_GRID, ecdf(st.dvsss_jcq), ecdf(st.static_jcq))
    ]
    p_abs = s.selection.p_abs
    summary = [
        ("dvsss", float(np.mean(st.dvsss_jcq < p_abs)), float(np.median(st.dvsss_jcq)), int(st.fallback.sum())),
        ("static", float(np.mean(st.static_jcq < p_abs)), float(np.median(st.static_jcq)), 0),
    ]
    return ExperimentResult(
        "exp_selection_histogram",
        {
            "selection_histogram.csv": _csv(["vss", "count", "frequency"], hist),
            "jcq_cdf.csv": _csv(["x", "dvsss", "static"], cdf_rows),
            "selection_summary.csv": _csv(["policy", "frac_below_p_abs", "median_jcq", "fallbacks"], summary),
        },
        {"stats": st, "static_set": st.static_set},
    )


def _pair_within(s: float) -> float:
    """P(|X - Y| <= s*L) for X, Y uniform in an L-square, valid for s <= 1."""
    return math.pi * s**2 - 8.0 / 3.0 * s**3 + 0.5 * s**4


def matched_square_side(n_nodes: int, rho: float, target_edges: float) -> float:
    """Side of the square that gives ``target_edges`` expected unit-disk edges."""
    pairs = n_nodes * (n_nodes - 1) / 2
    p = target_edges / pairs
    s = brentq(lambda x: _pair_within(x) - p, 1e-9, 1.0)
    return rho / s


def random_topology(rng: np.random.Generator, n_nodes: int, rho: float, side: float) -> NetGraph:
    pos = [tuple(xy) for xy in rng.uniform(0.0, side, size=(n_nodes, 2))]
    return build_graph(pos, rho)


def _graph_row(args):
    k, graph, caps, s = args
    return k, selection_stats(graph, caps, s)


def _quartiles(x: np.ndarray) -> tuple[float, float, float, int]:
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    outliers = int(np.sum(x > q3 + 1.5 * (q3 - q1)))
    return float(q1), float(med), float(q3), outliers


def exp_random_topologies(
    seed: int = 0,
    n_graphs: int = 20,
    n_draws: int = 1000,
    base: Scenario | None = None,
    workers: int = 1,
) -> ExperimentResult:
    """DVSSS against the static most-frequent set on random wireless layouts.

    Graph 0 is the case-study layout; the others place the DERs uniformly in
    a square whose side matches the case-study expected edge count.
    """
    s = base or Scenario()
    rng = np.random.default_rng(seed)
    case = case_study_graph(s)
    side = matched_square_side(s.n_ders, s.rho, case.edge_count)
    graphs = [case] + [random_topology(rng, s.n_ders, s.rho, side) for _ in range(n_graphs - 1)]
    jobs = [(k, g, draw_capacities(rng, n_draws, s.n_ders, s.p_min, s.p_max), s) for k, g in enumerate(graphs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_graph_row, jobs))
    else:
        results = [_graph_row(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    p_abs = s.selection.p_abs
    rows = []
    for k, st in results:
        for policy, x in (("dvsss", st.dvsss_jcq), ("static", st.static_jcq)):
            q1, med, q3, out = _quartiles(x)
            rows.append((k, len(st.graph.components), policy, _label(st.static_set), q1, med, q3, out, float(np.mean(x < p_abs))))
    header = ["graph", "components", "policy", "static_vss", "q1", "median", "q3", "outliers", "frac_below_p_abs"]
    return ExperimentResult(
        "exp_random_topologies",
        {"random_topologies.csv": _csv(header, rows)},
        {"stats": [st for _, st in results], "side": side},
    )


EXPERIMENTS: dict[str, Callable[..., ExperimentResult]] = {
    "exp_static": exp_static,
    "exp_dos_static": exp_dos_static,
    "exp_dos_dvsss": exp_dos_dvsss,
    "exp_selection_histogram": exp_selection_histogram,
    "exp_random_topologies": exp_random_topologies,
}

