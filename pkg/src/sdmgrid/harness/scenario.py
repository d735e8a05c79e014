"""Scenario description and YAML loading.

Defaults reproduce the nine-DER case-study grid. The DER coordinates are a
reconstruction: at a 175 m range they give the wireless components
{0, 1, 2, 4, 5, 7} and {3, 6, 8}, where DER 0 hangs off DER 1 only, so that
{1, 2, 4, 5, 7}, {1, 2, 4, 5} and {1, 4, 5, 7} are connected on their own.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml

from ..grid import LoadLaw
from ..powertalk import PtParams, plan_channel
from ..wireless import Jammer


class ConfigError(ValueError):
    pass


CASE_STUDY_POSITIONS = (
    (0.0, 420.0),
    (100.0, 300.0),
    (120.0, 170.0),
    (650.0, 100.0),
    (250.0, 300.0),
    (250.0, 150.0),
    (750.0, 200.0),
    (400.0, 230.0),
    (700.0, 330.0),
)


@dataclass(frozen=True)
class DerSpec:
    position: tuple[float, float]
    droop: float = 1.0
    csc_resistance: float = 0.385


@dataclass(frozen=True)
class Timing:
    primary: float = 1e-4
    secondary: float = 1e-2
    tertiary: float = 30.0
    discovery: float = 10.0


@dataclass(frozen=True)
class Gains:
    v_kp: float = 0.1
    v_ki: float = 20.0
    i_kp: float = 0.1
    i_ki: float = 20.0
    # inner droop loop gains and bus capacitance: bookkeeping only, the
    # quasi-static solver assumes ideal tracking
    pc_kp: float = 3.0
    pc_ki: float = 170.0
    c_dc: float = 2.2e-3
    clamp_fraction: float = 0.1


@dataclass(frozen=True)
class SelectionConfig:
    p_abs: float = 0.01
    max_card: int | None = None
    dvsss_enabled: bool = False


@dataclass(frozen=True)
class Scenario:
    ders: tuple[DerSpec, ...] = tuple(DerSpec(p) for p in CASE_STUDY_POSITIONS)
    p_min: float = 1e3
    p_max: float = 4e3
    v_ref: float = 380.0
    load_law: LoadLaw = LoadLaw.CONSTANT_POWER
    mu: float = 14.44e3
    sigma: float = 1.2e3
    timing: Timing = Timing()
    pt: PtParams = PtParams()
    gains: Gains = Gains()
    rho: float = 175.0
    loss_prob: float = 0.0
    jammers: tuple[Jammer, ...] = ()
    initial_vss: tuple[int, ...] = (1, 2, 4, 5)
    selection: SelectionConfig = SelectionConfig()
    seed: int = 0
    periods: int = 3

    def __post_init__(self):
        self.validate()

    @property
    def n_ders(self) -> int:
        return len(self.ders)

    @property
    def positions(self) -> list[tuple[float, float]]:
        return [d.position for d in self.ders]

    def validate(self):
        t = self.timing
        if not 0 < t.primary <= t.secondary <= t.tertiary:
            raise ConfigError("need 0 < T_pc <= T_sc <= T_tc")
        if not math.isclose(self.pt.period, t.tertiary):
            raise ConfigError("power-talk period must equal the tertiary period")
        ratio = t.tertiary / t.secondary
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("T_tc must be an integer multiple of T_sc")
        if not self.ders:
            raise ConfigError("scenario needs at least one DER")
        if len(self.ders) > 16:
            raise ConfigError("power-talk ids are 4 bits: at most 16 DERs")
        if not 0 < self.p_min < self.p_max:
            raise ConfigError("need 0 < p_min < p_max")
        if not self.initial_vss or not set(self.initial_vss) <= set(range(self.n_ders)):
            raise ConfigError("initial_vss must be a nonempty subset of DER ids")
        if self.sigma <= 0 or self.mu <= 0:
            raise ConfigError("load mean and std must be positive")
        if self.rho <= 0:
            raise ConfigError("rho must be positive")
        if not 0 <= self.loss_prob < 1:
            raise ConfigError("loss_prob must be in [0, 1)")
        if self.periods < 1:
            raise ConfigError("periods must be >= 1")
        if self.selection.dvsss_enabled:
            plan = plan_channel(self.pt, self.n_ders)
            if t.discovery + plan.total >= 0.5 * t.tertiary:
                raise ConfigError(
                    f"discovery + channel ({t.discovery + plan.total:.3f} s) must end "
                    "before the mid-period load step"
                )

    def with_overrides(self, **kw) -> Scenario:
        sel = kw.pop("dvsss_enabled", None)
        s = replace(self, **kw)
        if sel is not None:
            s = replace(s, selection=replace(s.selection, dvsss_enabled=sel))
        return s


def _build(cls, data: dict[str, Any] | None, where: str):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def scenario_from_dict(data: dict[str, Any]) -> Scenario:
    """Build a :class:`Scenario` from nested plain data (see ``schema.md``)."""
    data = dict(data or {})
    kw: dict[str, Any] = {}
    try:
        if "ders" in data:
            ders = []
            for k, d in enumerate(data.pop("ders")):
                d = dict(d)
                d["position"] = tuple(float(x) for x in d["position"])
                ders.append(_build(DerSpec, d, f"ders[{k}]"))
            kw["ders"] = tuple(ders)
        if "capacity" in data:
            cap = data.pop("capacity")
            kw["p_min"] = float(cap.get("p_min", 1e3))
            kw["p_max"] = float(cap.get("p_max", 4e3))
        if "load" in data:
            load = dict(data.pop("load"))
            if "law" in load:
                kw["load_law"] = LoadLaw(load.pop("law"))
            kw["mu"] = float(load.pop("mu", 14.44e3))
            kw["sigma"] = float(load.pop("sigma", 1.2e3))
            if load:
                raise ConfigError(f"load: unknown keys {sorted(load)}")
        timing = dict(data.pop("timing", {}) or {})
        pt = timing.pop("power_talk", {}) or {}
        kw["timing"] = _build(Timing, timing, "timing")
        pt = dict(pt)
        pt.setdefault("period", kw["timing"].tertiary)
        kw["pt"] = _build(PtParams, pt, "timing.power_talk")
        if "gains" in data:
            kw["gains"] = _build(Gains, data.pop("gains"), "gains")
        if "wireless" in data:
            w = dict(data.pop("wireless"))
            kw["rho"] = float(w.pop("rho", 175.0))
            kw["loss_prob"] = float(w.pop("loss_prob", 0.0))
            if w:
                raise ConfigError(f"wireless: unknown keys {sorted(w)}")
        if "jammers" in data:
            jams = []
            for k, j in enumerate(data.pop("jammers") or []):
                j = dict(j)
                if j.get("end") is None:
                    j["end"] = math.inf
                if "center" in j:
                    j["center"] = tuple(float(x) for x in j["center"])
                jams.append(_build(Jammer, j, f"jammers[{k}]"))
            kw["jammers"] = tuple(jams)
        if "initial_vss" in data:
            kw["initial_vss"] = tuple(int(u) for u in data.pop("initial_vss"))
        if "selection" in data:
            kw["selection"] = _build(SelectionConfig, data.pop("selection"), "selection")
        for key in ("v_ref", "seed", "periods"):
            if key in data:
                kw[key] = data.pop(key)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if data:
        raise ConfigError(f"unknown top-level keys {sorted(data)}")
    return Scenario(**kw)


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("scenario file must hold a mapping")
    return scenario_from_dict(data or {})


def node_jammer(node: int, start: float = 0.0, end: float = math.inf) -> Jammer:
    return Jammer(start=start, end=end, node=node)
