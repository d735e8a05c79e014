"""Choice of the voltage source set.

The set is the smallest wireless-connected group of DERs for which the
probability that current-source production exceeds a Gaussian demand stays
below ``p_abs``. When no such group exists the connected group with the
lowest probability is returned instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .wireless import NetGraph, is_connected


def jcq(csc_capacity: float, mu: float, sigma: float) -> float:
    """Probability that demand ~ N(mu, sigma^2) falls below ``csc_capacity``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = (csc_capacity - mu) / sigma
    # 1 - Q(x) written as Q(-x) to keep the far lower tail
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class SelectionInput:
    capacities: Mapping[int, float]
    graph: NetGraph
    mu: float
    sigma: float
    p_abs: float = 0.01
    max_card: int | None = None

    def __post_init__(self):
        if not 0 <= self.p_abs <= 1:
            raise ValueError("p_abs must lie in [0, 1]")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.max_card is not None and self.max_card > len(self.graph.nodes):
            raise ValueError("max_card exceeds the number of DERs")


@dataclass(frozen=True)
class Selection:
    vss: frozenset[int]
    jcq: float
    fallback_used: bool


def connected_subsets(graph: NetGraph, max_card: int | None = None) -> tuple[tuple[int, ...], ...]:
    """Connected node subsets in canonical order (size, then lexicographic)."""
    return _connected_subsets(graph.nodes, graph.edges, max_card)


@lru_cache(maxsize=256)
def _connected_subsets(nodes, edges, max_card):
    g = NetGraph(nodes, edges)
    limit = len(nodes) if max_card is None else max_card
    out = []
    for k in range(1, limit + 1):
        for combo in combinations(nodes, k):
            if is_connected(g, combo):
                out.append(combo)
    return tuple(out)


def vsc_select(inp: SelectionInput) -> Selection:
    if not inp.graph.nodes:
        raise ValueError("graph has no DERs")
    candidates = connected_subsets(inp.graph, inp.max_card)
    total = math.fsum(inp.capacities[u] for u in inp.graph.nodes)
    best = None
    for cand in candidates:
        csc = total - math.fsum(inp.capacities[u] for u in cand)
        p = jcq(csc, inp.mu, inp.sigma)
        if p < inp.p_abs:
            return Selection(frozenset(cand), p, False)
        if best is None or p < best[1]:
            best = (cand, p)
    return Selection(frozenset(best[0]), best[1], True)


def select_batch(
    capacities: np.ndarray,
    graph: NetGraph,
    mu: float,
    sigma: float,
    p_abs: float = 0.01,
    max_card: int | None = None,
) -> tuple[list[tuple[int, ...]], np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized selection over many capacity draws on one graph.

    ``capacities`` has shape ``(draws, n_nodes)`` with columns in
    ``graph.nodes`` order.

    Returns:
        ``(candidates, choice, jcq, fallback)`` where ``choice[d]`` indexes
        into ``candidates`` for draw ``d``.
    """
    candidates = list(connected_subsets(graph, max_card))
    col = {u: k for k, u in enumerate(graph.nodes)}
    mask = np.zeros((len(candidates), len(graph.nodes)))
    for r, cand in enumerate(candidates):
        mask[r, [col[u] for u in cand]] = 1.0
    caps = np.asarray(capacities, dtype=float)
    csc = caps.sum(axis=1)[None, :] - mask @ caps.T  # (candidates, draws)
    p = ndtr((csc - mu) / sigma)
    ok = p < p_abs
    first = np.argmax(ok, axis=0)
    fallback = ~ok.any(axis=0)
    choice = np.where(fallback, np.argmin(p, axis=0), first)
    draws = np.arange(caps.shape[0])
    return candidates, choice, p[choice, draws], fallback


def jcq_of_set(capacities: Mapping[int, float] | Sequence[float], vss, mu: float, sigma: float) -> float:
    if isinstance(capacities, Mapping):
        items = capacities.items()
    else:
        items = enumerate(capacities)
    csc = math.fsum(c for u, c in items if u not in vss)
    return jcq(csc, mu, sigma)
