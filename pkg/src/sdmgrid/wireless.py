"""Wireless data plane: range graph, jamming, broadcast delivery."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence


@dataclass(frozen=True)
class Jammer:
    """A jamming source active on ``[start, end)`` simulated seconds.

    Targets a single node (``node`` set) or every node inside a disk
    (``center`` and ``radius`` set).
    """

    start: float = 0.0
    end: float = math.inf
    node: int | None = None
    center: tuple[float, float] | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("jammer interval must satisfy start <= end")
        if (self.node is None) == (self.center is None):
            raise ValueError("jammer needs exactly one of node or center")
        if self.center is not None and not (self.radius and self.radius > 0):
            raise ValueError("disk jammer needs a positive radius")

    def active(self, t: float) -> bool:
        return self.start <= t < self.end

    def suppresses(self, node: int, position) -> bool:
        if self.node is not None:
            return node == self.node
        return math.dist(position, self.center) <= self.radius


@dataclass(frozen=True)
class NetGraph:
    nodes: tuple[int, ...]
    edges: frozenset[tuple[int, int]]
    components: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        if not self.components:
            object.__setattr__(self, "components", components(self))

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> NetGraph:
        return cls(tuple(sorted(nodes)), frozenset(_canon(u, v) for u, v in edges))

    def neighbors(self, u: int) -> set[int]:
        out = set()
        for a, b in self.edges:
            if a == u:
                out.add(b)
            elif b == u:
                out.add(a)
        return out

    def adjacency(self) -> dict[int, set[int]]:
        adj = {u: set() for u in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    @property
    def edge_count(self) -> int:
        return len(self.edges)


def _canon(u: int, v: int) -> tuple[int, int]:
    if u == v:
        raise ValueError("self-loops are not allowed")
    return (u, v) if u < v else (v, u)


def build_graph(
    positions: Sequence[tuple[float, float]],
    rho: float,
    jammers: Sequence[Jammer] = (),
    t: float = 0.0,
) -> NetGraph:
    """Unit-disk graph over ``positions`` (distance <= rho), minus jammed nodes."""
    if rho <= 0:
        raise ValueError("communication range must be positive")
    n = len(positions)
    dead = {
        u for u in range(n)
        for j in jammers if j.active(t) and j.suppresses(u, positions[u])
    }
    edges = set()
    for u in range(n):
        if u in dead:
            continue
        for v in range(u + 1, n):
            if v not in dead and math.dist(positions[u], positions[v]) <= rho:
                edges.add((u, v))
    return NetGraph(tuple(range(n)), frozenset(edges))


def deliver_broadcast(g: NetGraph, sender: int, vss: Iterable[int]) -> set[int]:
    if sender not in g.nodes:
        raise ValueError(f"unknown sender {sender}")
    return g.neighbors(sender) & set(vss)


def components(g: NetGraph) -> tuple[tuple[int, ...], ...]:
    """Connected components by BFS, each sorted, ordered by smallest member."""
    adj = g.adjacency()
    seen: set[int] = set()
    out = []
    for s in sorted(g.nodes):
        if s in seen:
            continue
        comp = []
        queue = deque([s])
        seen.add(s)
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        out.append(tuple(sorted(comp)))
    return tuple(out)


def is_connected(g: NetGraph, subset: Iterable[int]) -> bool:
    """True if ``subset`` induces a connected subgraph (empty set is not)."""
    members = set(subset)
    if not members:
        return False
    adj = g.adjacency()
    start = next(iter(members))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u] & members:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(members)
