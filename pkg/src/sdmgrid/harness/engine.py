"""Multi-rate simulation loop.

One row per secondary period: gossip round over the current wireless graph,
secondary update of every VSC, quasi-static bus solve. Tertiary boundaries
redraw the DER capacities and the demand; with DVSSS enabled each period
also carries a discovery window and a power-talk channel, during which the
secondary corrections are frozen.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..control import ControllerConfig, PiState, proportional_shares, secondary_step
from ..gossip import AgentState, gossip_update
from ..grid import BusState, DerUnit, GridError, LoadModel, Mode, csc_setpoint, settle_lag, solve_bus
from ..selector import jcq_of_set
from ..wireless import NetGraph, build_graph, is_connected
from .dvsss import DvsssResult, Symbol, discover_neighbors, run_dvsss
from .scenario import Scenario

log = logging.getLogger(__name__)

_EPS = 1e-9


class SimulationError(RuntimeError):
    def __init__(self, t: float, cause: Exception):
        super().__init__(f"t={t:.6f} s: {cause}")
        self.t = t
        self.cause = cause


def jsc(i_out, vss, alpha, demand: float, ders: Sequence[DerUnit], v_ref: float) -> float:
    """Summed deviation of VSC currents from their ideal share at ``v_ref``.

    The ideal share splits what the load draws at nominal voltage, net of the
    CSC injection at nominal voltage, in proportion to ``alpha``.
    """
    csc = math.fsum(d.csc_setpoint for d in ders if d.id not in vss)
    residual = demand / v_ref - csc
    return math.fsum(abs(i_out[v] - alpha[v] * residual) for v in vss)


@dataclass
class TraceRow:
    t: float
    v_bus: float
    i_out: tuple[float, ...]
    modes: tuple[str, ...]
    vss: tuple[int, ...]
    jsc: float
    event: str = ""


@dataclass
class PeriodMetrics:
    period: int
    jcq: float
    jsc: float
    vss: tuple[int, ...]
    fallback_used: bool
    steady: bool = True
    v_bus: float = float("nan")


def _fmt_set(ids) -> str:
    return "-".join(str(u) for u in sorted(ids))


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class Trace:
    n_ders: int
    rows: list[TraceRow] = field(default_factory=list)

    @property
    def header(self) -> list[str]:
        u = range(self.n_ders)
        return ["t", "v_bus", *(f"i_{k}" for k in u), *(f"mode_{k}" for k in u), "vss", "jsc", "event"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([_fmt(r.t), _fmt(r.v_bus), *map(_fmt, r.i_out), *r.modes, _fmt_set(r.vss), _fmt(r.jsc), r.event])
        return buf.getvalue()

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    def voltages(self) -> np.ndarray:
        return np.array([r.v_bus for r in self.rows])

    def events(self, name: str) -> list[float]:
        return [r.t for r in self.rows if name in r.event.split(";")]


def metrics_csv(metrics: Sequence[PeriodMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["period", "jcq", "jsc", "vss", "fallback_used"])
    for m in metrics:
        w.writerow([m.period, _fmt(m.jcq), _fmt(m.jsc), _fmt_set(m.vss), int(m.fallback_used)])
    return buf.getvalue()


@dataclass
class _Agent:
    cfg: ControllerConfig
    pi_v: PiState
    pi_i: PiState
    gossip: AgentState
    dx_v: float = 0.0
    dx_i: float = 0.0


class Simulation:
    """Single-threaded, seeded run of one scenario."""

    def __init__(self, s: Scenario):
        self.s = s
        self.rng = np.random.default_rng(s.seed)
        self.v_ref = s.v_ref
        self.dt = s.timing.secondary
        self.ders: list[DerUnit] = [
            DerUnit(k, spec.position, 0.5 * (s.p_min + s.p_max), droop=spec.droop, csc_resistance=spec.csc_resistance)
            for k, spec in enumerate(s.ders)
        ]
        self.vss: set[int] = set(s.initial_vss)
        self.known_caps: dict[int, float] = {}
        self.agents: dict[int, _Agent] = {}
        self.load = LoadModel(s.mu, s.mu, s.sigma, s.load_law)
        self.demand_next = s.mu
        self.graph: NetGraph = build_graph(s.positions, s.rho, s.jammers, 0.0)
        self.adj = self.graph.adjacency()
        self.frozen = False
        self.symbols: list[Symbol] = []
        self.pending: DvsssResult | None = None
        self.n_decoded = s.n_ders
        self.bus: BusState | None = None
        self.trace = Trace(s.n_ders)
        self.metrics: list[PeriodMetrics] = []
        self.dvsss_log: list[tuple[float, DvsssResult]] = []
        self._fallback = False
        self._fresh: set[int] = set()

    # -- state helpers ------------------------------------------------------

    def _pi(self, kp, ki) -> PiState:
        return PiState(kp, ki, self.dt, limit=self.s.gains.clamp_fraction * self.v_ref)

    def corrections(self) -> np.ndarray:
        out = np.zeros(len(self.ders))
        for u, a in self.agents.items():
            out[u] = a.dx_v + a.dx_i
        return out

    def _symbol_offsets(self, t: float) -> dict[int, float]:
        offs: dict[int, float] = {}
        for sym in self.symbols:
            if sym.start - _EPS <= t < sym.end - _EPS:
                for u, o in sym.offsets.items():
                    offs[u] = offs.get(u, 0.0) + o
        return offs

    def _solve(self, t: float) -> BusState:
        corr = self.corrections()
        for u, o in self._symbol_offsets(t).items():
            corr[u] += o
        try:
            target = solve_bus(self.ders, self.load, corr, self.v_ref)
        except GridError as exc:
            raise SimulationError(t, exc) from exc
        if self.bus is None:
            return target
        # a secondary period is far longer than the settling lag
        return settle_lag(self.bus, target, self.dt, self.s.pt.tau)

    def _normalized(self, u: int) -> tuple[float, float]:
        a = self.agents[u].cfg
        return self.bus.v_bus, self.bus.i_out[u] / (a.alpha * a.vsc_count)

    def _apply_vss(self, vss: set[int], caps: dict[int, float]):
        """Put exactly ``vss`` in VSC mode; shares from ``caps``."""
        self.vss = set(vss)
        self.known_caps = dict(caps)
        shares = proportional_shares(caps, vss)
        n = len(vss)
        for d in list(self.ders):
            if d.id in vss:
                self.ders[d.id] = replace(d, mode=Mode.VSC)
            else:
                self.ders[d.id] = replace(d, mode=Mode.CSC, csc_setpoint=csc_setpoint(d.capacity, self.v_ref))
                self.agents.pop(d.id, None)
        for u in sorted(vss):
            cfg = ControllerConfig(self.v_ref, shares[u], n, Mode.VSC)
            if u in self.agents:
                ag = self.agents[u]
                ag.cfg = cfg
                ag.gossip = AgentState(ag.gossip.estimate, 1.0 / n)
            else:
                g = self.s.gains
                self.agents[u] = _Agent(cfg, self._pi(g.v_kp, g.v_ki), self._pi(g.i_kp, g.i_ki), AgentState((0.0, 0.0), 1.0 / n))
                self.agents[u].gossip = None  # initialised from the next measurement
        self._fresh = {u for u, a in self.agents.items() if a.gossip is None}

    def _init_fresh_agents(self):
        for u in sorted(self._fresh):
            n = self.agents[u].cfg.vsc_count
            self.agents[u].gossip = AgentState(self._normalized(u), 1.0 / n)
        self._fresh = set()

    def _set_graph(self, t: float):
        self.graph = build_graph(self.s.positions, self.s.rho, self.s.jammers, t)
        self.adj = self.graph.adjacency()

    # -- per-step work ------------------------------------------------------

    def _secondary(self):
        members = sorted(self.vss)
        estimates = {u: self.agents[u].gossip.estimate for u in members}
        inbox: dict[int, list] = {u: [] for u in members}
        loss = self.s.loss_prob
        for j in members:
            for u in sorted(self.adj[j] & self.vss):
                if loss and self.rng.random() < loss:
                    continue
                inbox[u].append(estimates[j])
        for u in members:
            ag = self.agents[u]
            m = self._normalized(u)
            # the measurement is already share-normalised, so the isolated
            # fallback [0, i/(alpha*V)] is just [0, m_i]: pass alpha*V = 1
            ag.gossip = gossip_update(ag.gossip, m, inbox[u], 1.0, 1)
            ag.dx_v, ag.dx_i, ag.pi_v, ag.pi_i = secondary_step(
                ag.cfg, ag.pi_v, ag.pi_i, ag.gossip.estimate, (self.bus.v_bus, self.bus.i_out[u])
            )

    def _row(self, t: float, event: str):
        alpha = {u: a.cfg.alpha for u, a in self.agents.items()}
        j = jsc(self.bus.i_out, self.vss, alpha, self.load.demand, self.ders, self.v_ref)
        self.trace.rows.append(
            TraceRow(t, self.bus.v_bus, tuple(self.bus.i_out), tuple(d.mode.value for d in self.ders), tuple(sorted(self.vss)), j, event)
        )

    # -- events ---------------------------------------------------------------

    def _draw_demand(self) -> float:
        s = self.s
        return max(float(self.rng.normal(s.mu, s.sigma)), 1e-3 * s.mu)

    def _period_start(self, k: int):
        s = self.s
        caps = self.rng.uniform(s.p_min, s.p_max, size=s.n_ders)
        self.ders = [replace(d, capacity=float(c), csc_setpoint=csc_setpoint(float(c), self.v_ref)) for d, c in zip(self.ders, caps)]
        self.load = replace(self.load, demand=self._draw_demand())
        self.demand_next = self._draw_demand()
        self._fallback = False
        self._apply_vss(self.vss, {d.id: d.capacity for d in self.ders})

    def _ptch_start(self, t: float):
        s = self.s
        self.frozen = True
        neighbors = discover_neighbors(s, t - s.timing.discovery, t)
        res = run_dvsss(self.ders, self.load, self.corrections(), neighbors, s, self.rng, self.n_decoded)
        self.symbols = [Symbol(t + x.start, t + x.end, x.offsets) for x in res.symbols]
        self.pending = res
        self.dvsss_log.append((t, res))
        return t + res.schedule.total

    def _ptch_end(self):
        res = self.pending
        self.pending = None
        self.symbols = []
        self.frozen = False
        if res.selection is not None:
            self.n_decoded = len(res.capacities)
            self._apply_vss(set(res.selection.vss), res.capacities)
            self._fallback = res.selection.fallback_used
        else:
            log.warning("power-talk roster empty, keeping the previous set")

    # -- main loop --------------------------------------------------------------

    def run(self) -> tuple[Trace, list[PeriodMetrics]]:
        s = self.s
        steps = int(round(s.timing.tertiary / self.dt))
        for k in range(s.periods):
            t0 = k * s.timing.tertiary
            self._period_start(k)
            events: list[tuple[float, str]] = [(t0, "load-step"), (t0 + 0.5 * s.timing.tertiary, "load-step")]
            for j in s.jammers:
                for te, name in ((j.start, "jam-on"), (j.end, "jam-off")):
                    if t0 <= te < t0 + s.timing.tertiary:
                        events.append((te, name))
            if s.selection.dvsss_enabled:
                events.append((t0 + s.timing.discovery, "ptch-start"))
            self._run_period(k, t0, steps, events)
            self._close_period(k)
        return self.trace, self.metrics

    def _run_period(self, k: int, t0: float, steps: int, events: list[tuple[float, str]]):
        pending = sorted(events)
        for n in range(steps):
            t = t0 + n * self.dt
            # off-grid events that fall before this step get their own row
            while pending and pending[0][0] < t - _EPS:
                te = pending[0][0]
                names = self._handle_events(pending, te)
                self.bus = self._solve(te)
                self._row(te, ";".join(names))
            names = self._handle_events(pending, t) if pending and abs(pending[0][0] - t) <= _EPS else []
            if self.bus is None:
                self.bus = self._solve(t)
            if self._fresh:
                self._init_fresh_agents()
            if not self.frozen:
                self._secondary()
            self.bus = self._solve(t)
            self._row(t, ";".join(names))

    def _handle_events(self, pending: list[tuple[float, str]], te: float) -> list[str]:
        names = []
        while pending and abs(pending[0][0] - te) <= _EPS:
            _, name = pending.pop(0)
            names.append(name)
            if name == "load-step" and not self._is_period_start(te):
                self.load = replace(self.load, demand=self.demand_next)
            elif name in ("jam-on", "jam-off"):
                self._set_graph(te)
            elif name == "ptch-start":
                end = self._ptch_start(te)
                pending.append((end, "ptch-end"))
                pending.sort()
            elif name == "ptch-end":
                self._ptch_end()
                names.append("dvsss-decision")
        return names

    def _is_period_start(self, t: float) -> bool:
        r = t / self.s.timing.tertiary
        return abs(r - round(r)) < 1e-12

    def _close_period(self, k: int):
        s = self.s
        last = self.trace.rows[-1]
        window = 0.5
        t_end = last.t
        past = [r for r in self.trace.rows if r.t >= t_end - window - _EPS]
        drift = abs(past[-1].v_bus - past[0].v_bus) / max(past[-1].t - past[0].t, self.dt)
        caps = {d.id: d.capacity for d in self.ders}
        self.metrics.append(
            PeriodMetrics(
                period=k,
                jcq=jcq_of_set(caps, self.vss, s.mu, s.sigma),
                jsc=last.jsc,
                vss=tuple(sorted(self.vss)),
                fallback_used=self._fallback,
                steady=drift < 1e-3,
                v_bus=last.v_bus,
            )
        )

    def vss_connected(self) -> bool:
        return is_connected(self.graph, self.vss)


def run_scenario(s: Scenario) -> tuple[Trace, list[PeriodMetrics]]:
    return Simulation(s).run()
