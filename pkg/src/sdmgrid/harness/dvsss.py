"""One round of decentralized voltage-source-set selection.

Neighbour discovery on the wireless plane, then a power-talk channel on the
bus (roster in the CSMA phase, edge lists in the token phase), then every
DER runs the selector on what it decoded.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..grid import DerUnit, LoadModel
from ..powertalk import (
    BusChannel,
    PowerTalkReceiver,
    PtchSchedule,
    csma_round,
    decode_neighbor,
    decode_roster,
    encode_neighbor,
    encode_roster,
    from_bits,
    plan_channel,
    pt_transmit,
    to_bits,
)
from ..selector import Selection, SelectionInput, vsc_select
from ..wireless import NetGraph, build_graph
from .scenario import Scenario


@dataclass(frozen=True)
class Symbol:
    """A reference offset held on the bus during ``[start, end)``."""

    start: float
    end: float
    offsets: dict[int, float]


@dataclass
class DvsssResult:
    schedule: PtchSchedule
    selection: Selection | None
    capacities: dict[int, float]
    graph: NetGraph
    neighbors: dict[int, set[int]]
    symbols: list[Symbol] = field(default_factory=list)
    flagged_frames: int = 0

    @property
    def vss(self) -> frozenset[int] | None:
        return None if self.selection is None else self.selection.vss


def discover_neighbors(s: Scenario, start: float, end: float) -> dict[int, set[int]]:
    """Neighbour lists heard over the discovery window ``[start, end)``.

    A link counts only if it stayed up for the whole window.
    """
    times = {start}
    for j in s.jammers:
        for edge in (j.start, j.end):
            if start < edge < end:
                times.add(edge)
    graphs = [build_graph(s.positions, s.rho, s.jammers, t) for t in sorted(times)]
    edges = frozenset.intersection(*(g.edges for g in graphs))
    g = NetGraph(graphs[0].nodes, edges)
    return {u: g.neighbors(u) for u in g.nodes}


def run_dvsss(
    ders: Sequence[DerUnit],
    load: LoadModel,
    corrections,
    neighbors: dict[int, set[int]],
    s: Scenario,
    rng: np.random.Generator,
    n_previous: int,
) -> DvsssResult:
    """Run the power-talk exchange on a frozen bus and select the new set.

    Args:
        ders: grid snapshot at the channel start.
        load: load at the channel start.
        corrections: frozen secondary corrections per DER (volts).
        neighbors: discovered wireless neighbour set per DER.
        s: scenario (timing, power-talk, selection parameters).
        rng: generator for the backoff draws.
        n_previous: number of DERs decoded in the previous round; sizes the
            backoff window and phase durations.

    Symbol times in the result are relative to the channel start.
    """
    pt = s.pt
    plan = plan_channel(pt, n_previous)
    sched = csma_round([d.id for d in ders], plan.window, rng, pt, contention=plan.contention)
    sched.cf_duration = plan.contention_free

    bus = BusChannel(ders, load, corrections, s.v_ref)
    shift = bus.min_one_bit_shift(pt.amplitude)
    rx = PowerTalkReceiver(pt, bus.idle_voltage(), shift)
    symbols: list[Symbol] = []
    flagged = 0
    n_bits = pt.packet_bits
    t_sym = pt.symbol_period

    def send(sender: int, code: int, t0: float):
        nonlocal flagged
        bits = to_bits(code, n_bits)
        offs = pt_transmit(bits, pt, bus, sender)
        for k, off in enumerate(offs):
            if off:
                symbols.append(Symbol(t0 + k * t_sym, t0 + (k + 1) * t_sym, {sender: off}))
        decoded, bad = rx.decode(bus.samples[-n_bits - 1:-1], idle_after=bus.samples[-1])
        flagged += bad
        return from_bits(decoded)

    by_slot: dict[float, list[int]] = {}
    for u, t in sched.tx_times.items():
        by_slot.setdefault(t, []).append(u)
    by_id = {d.id: d for d in ders}
    decoded_caps: dict[int, float] = {}
    for t0 in sorted(by_slot):
        group = sorted(by_slot[t0])
        codes = {u: encode_roster(u, by_id[u].capacity, s.p_min, s.p_max) for u in group}
        if len(group) > 1:
            # superposed frames; the receivers drop the slot
            for k in range(n_bits):
                offs = {u: pt.amplitude for u in group if to_bits(codes[u], n_bits)[k]}
                if offs:
                    symbols.append(Symbol(t0 + k * t_sym, t0 + (k + 1) * t_sym, offs))
            continue
        (u,) = group
        uid, cap = decode_roster(send(u, codes[u], t0), s.p_min, s.p_max)
        decoded_caps[uid] = cap
    sched.roster = sorted(decoded_caps.items())

    roster_ids = [u for u, _ in sched.roster]
    t = sched.contention_duration
    reports: list[tuple[int, int]] = []
    for u in roster_ids:  # token passes in ascending id order
        sched.cf_tx_times[u] = t
        for v in sorted(neighbors.get(u, ())):
            if v > u:
                reports.append(decode_neighbor(send(u, encode_neighbor(u, v), t)))
                t += n_bits * t_sym
        t += pt.tau
    sched.edge_reports = reports

    members = set(roster_ids)
    graph = NetGraph.from_edges(members, [(a, b) for a, b in reports if a in members and b in members])
    selection = None
    if members:
        max_card = s.selection.max_card
        if max_card is not None:
            max_card = min(max_card, len(members))
        selection = vsc_select(
            SelectionInput(decoded_caps, graph, s.mu, s.sigma, s.selection.p_abs, max_card)
        )
    return DvsssResult(sched, selection, decoded_caps, graph, neighbors, symbols, flagged)
