"""Quasi-static model of a single-bus DC microgrid.

Every converter is either a voltage source (droop law around its own shifted
reference) or a current source with a shunt source resistance referenced to
the nominal voltage. The bus voltage is the root of the scalar current
balance; converter dynamics are collapsed into a fixed settling lag.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np


class Mode(str, enum.Enum):
    VSC = "VSC"
    CSC = "CSC"


class LoadLaw(str, enum.Enum):
    CONSTANT_POWER = "constant-power"
    CONSTANT_RESISTANCE = "constant-resistance"


class GridError(Exception):
    """Base class for bus solver failures."""


class NoVoltageSource(GridError):
    pass


class NoConvergence(GridError):
    pass


class NonPositiveVoltage(GridError):
    pass


@dataclass(frozen=True)
class DerUnit:
    """One distributed energy resource behind its converter.

    Attributes:
        id: 0-based index, unique within a grid.
        position: (x, y) in meters.
        capacity: maximum produced power P_uM in watts.
        mode: current operating mode.
        droop: virtual droop resistance in ohms (VSC mode).
        csc_resistance: shunt source resistance in ohms (CSC mode).
        csc_setpoint: injected current in amperes (CSC mode).
    """

    id: int
    position: tuple[float, float]
    capacity: float
    mode: Mode = Mode.CSC
    droop: float = 1.0
    csc_resistance: float = 0.385
    csc_setpoint: float = 0.0

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"DER {self.id}: capacity must be positive")
        if self.droop <= 0 or self.csc_resistance <= 0:
            raise ValueError(f"DER {self.id}: resistances must be positive")


@dataclass(frozen=True)
class LoadModel:
    """Bus load with Gaussian demand statistics."""

    demand: float
    mean: float = 14.44e3
    std: float = 1.2e3
    law: LoadLaw = LoadLaw.CONSTANT_POWER

    def __post_init__(self):
        if self.demand <= 0:
            raise ValueError("load demand must be positive")
        if self.std <= 0:
            raise ValueError("load std must be positive")

    def current(self, v_bus: float, v_ref: float) -> float:
        if self.law is LoadLaw.CONSTANT_POWER:
            return self.demand / v_bus
        return v_bus * self.demand / v_ref**2


@dataclass(frozen=True)
class BusState:
    v_bus: float
    i_out: np.ndarray = field(repr=False)
    i_load: float
    settled: bool = True

    def kcl_residual(self) -> float:
        return abs(float(np.sum(self.i_out)) - self.i_load)


def csc_setpoint(capacity: float, v_ref: float) -> float:
    """Current injected by a DER run at full capacity in CSC mode."""
    return capacity / v_ref


def _offsets_array(ders, corrections, v_ref) -> np.ndarray:
    out = np.zeros(len(ders))
    if corrections is None:
        return out
    if isinstance(corrections, Mapping):
        for k, val in corrections.items():
            out[k] = val
    else:
        out[:] = np.asarray(corrections, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValueError("voltage offsets must be finite")
    return out


def _linear_terms(ders: Sequence[DerUnit], offsets: np.ndarray, v_ref: float):
    """Source side of the balance as ``A - G*v`` (amperes)."""
    a = 0.0
    g = 0.0
    for k, der in enumerate(ders):
        if der.mode is Mode.VSC:
            a += (v_ref + offsets[k]) / der.droop
            g += 1.0 / der.droop
        else:
            a += der.csc_setpoint + (v_ref + offsets[k]) / der.csc_resistance
            g += 1.0 / der.csc_resistance
    return a, g


def source_currents(ders: Sequence[DerUnit], offsets: np.ndarray, v_bus: float, v_ref: float) -> np.ndarray:
    i = np.empty(len(ders))
    for k, der in enumerate(ders):
        if der.mode is Mode.VSC:
            i[k] = (v_ref + offsets[k] - v_bus) / der.droop
        else:
            i[k] = der.csc_setpoint - (v_bus - v_ref - offsets[k]) / der.csc_resistance
    return i


def solve_bus(
    ders: Sequence[DerUnit],
    load: LoadModel,
    corrections=None,
    v_ref: float = 380.0,
    max_iter: int = 100,
) -> BusState:
    """Solve the quasi-static operating point of the bus.

    ``corrections`` holds per-DER offsets (volts) added to the reference of
    each converter law: the secondary-control correction for VSC units, the
    power-talk symbol offset for either mode. Either a sequence aligned with
    ``ders`` or a mapping ``{index: offset}``.

    Raises:
        NoVoltageSource: no DER in VSC mode.
        NoConvergence: the balance has no root (demand exceeds what the
            sources can deliver) or the root-finder stalls.
        NonPositiveVoltage: the root lies below half the nominal voltage.
    """
    if not any(d.mode is Mode.VSC for d in ders):
        raise NoVoltageSource("at least one DER must run in VSC mode")
    offsets = _offsets_array(ders, corrections, v_ref)
    a, g = _linear_terms(ders, offsets, v_ref)

    if load.law is LoadLaw.CONSTANT_RESISTANCE:
        v = a / (g + load.demand / v_ref**2)
    else:
        v = _solve_constant_power(a, g, load.demand, v_ref, max_iter)

    if not v >= 0.5 * v_ref:
        raise NonPositiveVoltage(f"bus voltage collapsed to {v:.3f} V")
    i_out = source_currents(ders, offsets, v, v_ref)
    return BusState(v_bus=v, i_out=i_out, i_load=load.current(v, v_ref))


def _solve_constant_power(a: float, g: float, p: float, v_ref: float, max_iter: int) -> float:
    # f(v) = a - g v - p / v, concave, upper root wanted
    def f(v):
        return a - g * v - p / v

    v = v_ref
    for _ in range(max_iter):
        fv = f(v)
        dfv = -g + p / (v * v)
        if dfv >= 0:
            break  # past the fold, Newton would head to the lower branch
        step = fv / dfv
        v_new = v - step
        if not 0.5 * v_ref <= v_new or not math.isfinite(v_new):
            break
        v = v_new
        if abs(step) <= 1e-12 * max(1.0, abs(v)):
            return v
    return _bisect_upper(f, v_ref, g, p, max_iter)


def _bisect_upper(f, v_ref: float, g: float, p: float, max_iter: int) -> float:
    fold = math.sqrt(p / g)  # maximum of f
    if f(fold) < 0:
        raise NoConvergence("demand exceeds the power the sources can deliver")
    lo = max(fold, 0.5 * v_ref)
    if f(lo) < 0:
        raise NonPositiveVoltage("upper solution branch lies below 0.5*v_ref")
    hi = max(1.1 * v_ref, lo)
    while f(hi) > 0:  # large offsets push the root above the nominal window
        hi *= 1.5
        if hi > 100 * v_ref:
            raise NoConvergence("could not bracket bus voltage")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            return 0.5 * (lo + hi)
    raise NoConvergence(f"bisection did not converge in {max_iter} iterations")


def settle_lag(prev: BusState, target: BusState, elapsed: float, tau: float) -> BusState:
    """Hold the previous operating point until ``tau`` seconds have elapsed."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if elapsed < 0:
        raise ValueError("elapsed must be non-negative")
    if elapsed >= tau:
        return replace(target, settled=True)
    return replace(prev, settled=False)
