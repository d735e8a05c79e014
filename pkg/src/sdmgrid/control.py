"""Secondary voltage/current compensation for converters in VSC mode."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

from .grid import DerUnit, Mode, csc_setpoint


class ModeError(Exception):
    pass


class EmptyVss(Exception):
    """Raised when a mode change would leave the grid with no voltage source."""


@dataclass(frozen=True)
class PiState:
    """Discrete PI compensator, backward-Euler integration.

    ``limit`` clamps the output symmetrically; the integral is back-computed
    when the clamp is active so it cannot wind up.
    """

    kp: float
    ki: float
    dt: float
    integral: float = 0.0
    limit: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("PI sample period must be positive")
        if not math.isfinite(self.integral):
            raise ValueError("PI integral must be finite")

    def reset(self) -> PiState:
        return replace(self, integral=0.0)


def pi_step(state: PiState, error: float) -> tuple[PiState, float]:
    if not math.isfinite(error):
        raise ValueError("PI error must be finite")
    integral = state.integral + error * state.dt
    out = state.kp * error + state.ki * integral
    lim = state.limit
    if lim is not None and abs(out) > lim:
        out = math.copysign(lim, out)
        if state.ki != 0:
            integral = (out - state.kp * error) / state.ki
    return replace(state, integral=integral), out


@dataclass(frozen=True)
class ControllerConfig:
    v_ref: float
    alpha: float
    vsc_count: int
    mode: Mode = Mode.VSC

    def __post_init__(self):
        if self.mode is Mode.VSC and not 0 < self.alpha <= 1:
            raise ValueError(f"share alpha={self.alpha} outside (0, 1]")
        if self.vsc_count < 1:
            raise ValueError("VSS must hold at least one DER")


def proportional_shares(capacities: Mapping[int, float], vss: Iterable[int]) -> dict[int, float]:
    """Capacity-proportional share of each VSS member (sums to one)."""
    members = sorted(vss)
    total = math.fsum(capacities[u] for u in members)
    return {u: capacities[u] / total for u in members}


def secondary_step(
    cfg: ControllerConfig,
    pi_v: PiState,
    pi_i: PiState,
    estimate,
    measurement,
) -> tuple[float, float, PiState, PiState]:
    """One secondary-control update for a voltage-source agent.

    ``estimate`` is the gossip state ``[v_avg, i_avg]`` and ``measurement``
    the local ``[v, i]``. The voltage channel drives the averaged voltage to
    the reference; the current channel drives the local current to the
    agent's share ``alpha * V * i_avg``.

    Returns:
        ``(dx_v, dx_i, pi_v, pi_i)``.
    """
    if cfg.mode is not Mode.VSC:
        raise ModeError("secondary control runs only in VSC mode")
    v_avg, i_avg = estimate
    _, i_meas = measurement
    pi_v, dx_v = pi_step(pi_v, cfg.v_ref - v_avg)
    pi_i, dx_i = pi_step(pi_i, cfg.alpha * cfg.vsc_count * i_avg - i_meas)
    return dx_v, dx_i, pi_v, pi_i


def set_mode(
    der: DerUnit,
    mode: Mode,
    cfg: ControllerConfig,
    ders: Iterable[DerUnit],
) -> tuple[DerUnit, ControllerConfig]:
    """Switch ``der`` to ``mode`` and rebuild its controller config.

    ``ders`` is the grid-wide population before the switch; it defines the
    voltage source set the new share is computed over. PI integrals live with
    the caller: they are dropped on VSC->CSC and start from zero on CSC->VSC.
    """
    ders = list(ders)
    vss = {d.id for d in ders if d.mode is Mode.VSC}
    if mode is Mode.VSC:
        vss.add(der.id)
    else:
        vss.discard(der.id)
    if not vss:
        raise EmptyVss("islanded grid needs at least one VSC unit")

    if mode is Mode.CSC:
        new_der = replace(der, mode=Mode.CSC, csc_setpoint=csc_setpoint(der.capacity, cfg.v_ref))
        return new_der, replace(cfg, mode=Mode.CSC, vsc_count=len(vss), alpha=0.0)

    caps = {d.id: d.capacity for d in ders}
    caps[der.id] = der.capacity
    alpha = proportional_shares(caps, vss)[der.id]
    return replace(der, mode=Mode.VSC), replace(cfg, mode=Mode.VSC, vsc_count=len(vss), alpha=alpha)
