"""Power talk: low-rate signalling over the DC bus itself.

A sender shifts its converter reference by ``amplitude`` volts for a 1 and
leaves it alone for a 0; every other converter reads the resulting bus
voltage ``tau`` seconds into each symbol. Access to the bus is arbitrated by a
slotted CSMA contention phase followed by a token-ordered contention-free
phase.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .grid import BusState, DerUnit, LoadModel, settle_lag, solve_bus


class ChannelBusy(Exception):
    pass


class RangeError(ValueError):
    pass


@dataclass(frozen=True)
class PtParams:
    symbol_period: float = 0.01
    amplitude: float = 0.5
    tau: float = 0.0028
    slot: float = 0.003
    packet_bits: int = 8
    target_pc: float = 0.8
    period: float = 30.0

    def __post_init__(self):
        if not self.symbol_period > self.tau:
            raise ValueError("symbol period must exceed the settling lag")
        if self.slot < self.tau:
            raise ValueError("virtual slot must cover the settling lag")
        if not 0 < self.target_pc < 1:
            raise ValueError("target collision-free probability must be in (0, 1)")
        if self.packet_bits < 1:
            raise ValueError("packet must carry at least one bit")

    @property
    def transmission_duration(self) -> float:
        """Airtime of one packet plus its guard: ``b * T_pt + tau``."""
        return self.packet_bits * self.symbol_period + self.tau


# -- channel sizing ---------------------------------------------------------

def collision_free_probability(n_senders: int, window: int) -> float:
    """Probability that ``n_senders`` uniform draws from ``window`` are distinct."""
    if n_senders > window:
        return 0.0
    p = 1.0
    for k in range(1, n_senders):
        p *= 1.0 - k / window
    return p


def min_backoff_window(n_senders: int, target: float) -> int:
    """Smallest window whose collision-free probability strictly exceeds ``target``."""
    if n_senders < 1 or not 0 < target < 1:
        raise ValueError("need n_senders >= 1 and 0 < target < 1")
    window = n_senders
    while collision_free_probability(n_senders, window) <= target:
        window += 1
    return window


def contention_duration(window: int, n_senders: int, slot: float, tx_duration: float) -> float:
    """Shortest contention phase that leaves at least ``window`` idle slots."""
    if window < 1 or n_senders < 1 or slot <= 0 or tx_duration <= 0:
        raise ValueError("contention sizing inputs must be positive")
    return n_senders * tx_duration + window * slot


def cf_duration(bits: int, symbol_period: float, edges: int, n_senders: int, tau: float) -> float:
    if edges < 0:
        raise ValueError("edge count must be non-negative")
    return bits * symbol_period * edges + n_senders * tau


@dataclass(frozen=True)
class ChannelPlan:
    window: int
    contention: float
    contention_free: float

    @property
    def total(self) -> float:
        return self.contention + self.contention_free


def plan_channel(params: PtParams, n_senders: int, edges: int | None = None) -> ChannelPlan:
    """Size the channel for ``n_senders``; ``edges`` defaults to a full mesh."""
    if edges is None:
        edges = n_senders * (n_senders - 1) // 2
    window = min_backoff_window(n_senders, params.target_pc)
    t_c = contention_duration(window, n_senders, params.slot, params.transmission_duration)
    t_cf = cf_duration(params.packet_bits, params.symbol_period, edges, n_senders, params.tau)
    return ChannelPlan(window, t_c, t_cf)


# -- contention -------------------------------------------------------------

@dataclass
class PtchSchedule:
    """Outcome of one power-talk channel.

    Times are relative to the channel start.
    """

    window: int
    contention_duration: float
    cf_duration: float = 0.0
    draws: dict[int, int] = field(default_factory=dict)
    tx_times: dict[int, float] = field(default_factory=dict)
    collisions: frozenset[int] = frozenset()
    roster: list[tuple[int, float]] = field(default_factory=list)
    edge_reports: list[tuple[int, int]] = field(default_factory=list)
    cf_tx_times: dict[int, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.contention_duration + self.cf_duration

    @property
    def senders(self) -> list[int]:
        """Ids that got a clean slot, in transmission order."""
        ok = [u for u in self.tx_times if u not in self.collisions]
        return sorted(ok, key=lambda u: (self.tx_times[u], u))


def csma_round(
    present: Iterable[int],
    window: int,
    rng: np.random.Generator,
    params: PtParams = PtParams(),
    contention: float | None = None,
) -> PtchSchedule:
    """Draw backoff counters and lay transmissions on the slot grid.

    Counters count idle slots only; every transmission (clean or collided)
    freezes the others for one transmission duration. DERs sharing a counter
    value collide and are not retried.
    """
    if window < 1:
        raise ValueError("backoff window must be >= 1")
    ids = sorted(present)
    draws = rng.integers(0, window, size=len(ids))
    counters = dict(zip(ids, (int(c) for c in draws)))
    t_dt = params.transmission_duration

    by_value: dict[int, list[int]] = {}
    for u, c in counters.items():
        by_value.setdefault(c, []).append(u)
    tx_times = {}
    collisions = set()
    for rank, c in enumerate(sorted(by_value)):
        start = c * params.slot + rank * t_dt
        for u in by_value[c]:
            tx_times[u] = start
        if len(by_value[c]) > 1:
            collisions.update(by_value[c])

    if contention is None:
        contention = contention_duration(window, max(len(ids), 1), params.slot, t_dt)
    return PtchSchedule(
        window=window,
        contention_duration=contention,
        draws=counters,
        tx_times=tx_times,
        collisions=frozenset(collisions),
    )


# -- packet codecs ----------------------------------------------------------

NIBBLE = 16


def _check_id(u: int):
    if not 0 <= u < NIBBLE:
        raise RangeError(f"id {u} does not fit in 4 bits")


def capacity_level(capacity: float, p_min: float, p_max: float) -> int:
    if not p_min <= capacity <= p_max:
        raise RangeError(f"capacity {capacity} outside [{p_min}, {p_max}]")
    step = (p_max - p_min) / NIBBLE
    return min(NIBBLE - 1, int((capacity - p_min) // step))


def level_capacity(level: int, p_min: float, p_max: float) -> float:
    step = (p_max - p_min) / NIBBLE
    return p_min + (level + 0.5) * step


def encode_roster(u: int, capacity: float, p_min: float, p_max: float) -> int:
    _check_id(u)
    return (u << 4) | capacity_level(capacity, p_min, p_max)


def decode_roster(code: int, p_min: float, p_max: float) -> tuple[int, float]:
    return code >> 4, level_capacity(code & 0xF, p_min, p_max)


def encode_neighbor(reporter: int, neighbor: int) -> int:
    _check_id(reporter)
    _check_id(neighbor)
    return (reporter << 4) | neighbor


def decode_neighbor(code: int) -> tuple[int, int]:
    return code >> 4, code & 0xF


def to_bits(code: int, n: int = 8) -> list[int]:
    """MSB-first bit list."""
    return [(code >> (n - 1 - k)) & 1 for k in range(n)]


def from_bits(bits: Sequence[int]) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


# -- physical layer ---------------------------------------------------------

class BusChannel:
    """The bus as seen by power talk, frozen at one grid snapshot.

    Secondary corrections are held at ``corrections`` for the whole channel.
    Every driven symbol is sampled ``tau`` after its boundary and appended to
    :attr:`samples`.
    """

    def __init__(self, ders: Sequence[DerUnit], load: LoadModel, corrections, v_ref: float):
        self.ders = list(ders)
        self.load = load
        self.corrections = np.zeros(len(ders)) if corrections is None else np.asarray(corrections, float)
        self.v_ref = v_ref
        self.holder: int | None = None
        self.samples: list[float] = []
        self._state = self.solve()

    def solve(self, offsets: Mapping[int, float] | None = None) -> BusState:
        corr = self.corrections.copy()
        for k, off in (offsets or {}).items():
            corr[k] += off
        return solve_bus(self.ders, self.load, corr, self.v_ref)

    def idle_voltage(self) -> float:
        return self.solve().v_bus

    def one_bit_shift(self, sender: int, amplitude: float) -> float:
        return self.solve({sender: amplitude}).v_bus - self.idle_voltage()

    def min_one_bit_shift(self, amplitude: float, senders: Iterable[int] | None = None) -> float:
        ids = range(len(self.ders)) if senders is None else senders
        base = self.idle_voltage()
        return min(self.solve({u: amplitude}).v_bus - base for u in ids)

    def acquire(self, sender: int):
        if self.holder is not None and self.holder != sender:
            raise ChannelBusy(f"DER {self.holder} is transmitting")
        self.holder = sender

    def release(self, sender: int):
        if self.holder == sender:
            self.holder = None

    def drive(self, offsets: Mapping[int, float], tau: float) -> float:
        target = self.solve(offsets)
        self._state = settle_lag(self._state, target, tau, tau)
        self.samples.append(self._state.v_bus)
        return self._state.v_bus


def pt_transmit(bits: Sequence[int], params: PtParams, bus: BusChannel, sender: int) -> list[float]:
    """Send ``bits`` from ``sender``; returns the reference offset per symbol."""
    bus.acquire(sender)
    try:
        offsets = [params.amplitude if b else 0.0 for b in bits]
        for off in offsets:
            bus.drive({sender: off}, params.tau)
    finally:
        bus.release(sender)
    bus.drive({}, params.tau)  # reference restored after the last symbol
    return offsets


def pt_receive(samples: Sequence[float], params: PtParams, baseline: float, shift: float) -> list[int]:
    """Threshold each symbol sample at half the calibrated one-bit shift."""
    if shift <= 0:
        raise ValueError("calibrated shift must be positive")
    return [1 if s - baseline > 0.5 * shift else 0 for s in samples]


def symbol_guard(samples: Sequence[float], baseline: float, shift: float) -> bool:
    """True if the frame looks corrupted by a baseline move.

    A single noiseless sender produces exactly two levels, so all samples
    decoded to the same bit must agree. A spread above a quarter shift within
    either level flags a load change inside the frame.
    """
    tol = 0.25 * shift
    levels: dict[bool, list[float]] = {True: [], False: []}
    for s in samples:
        levels[s - baseline > 0.5 * shift].append(s)
    return any(v and max(v) - min(v) > tol for v in levels.values())


class PowerTalkReceiver:
    """Frame decoder with per-frame baseline re-anchoring."""

    def __init__(self, params: PtParams, baseline: float, shift: float):
        self.params = params
        self.baseline = baseline
        self.shift = shift

    def decode(self, samples: Sequence[float], idle_after: float | None = None) -> tuple[list[int], bool]:
        bits = pt_receive(samples, self.params, self.baseline, self.shift)
        flagged = symbol_guard(samples, self.baseline, self.shift)
        if idle_after is not None:
            self.baseline = idle_after
        return bits, flagged
