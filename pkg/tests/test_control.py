import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdmgrid.control import (
    ControllerConfig,
    EmptyVss,
    ModeError,
    PiState,
    pi_step,
    proportional_shares,
    secondary_step,
    set_mode,
)
from sdmgrid.grid import DerUnit, Mode


def test_pi_zero():
    s, out = pi_step(PiState(0.1, 20, 0.01), 0.0)
    assert out == 0.0 and s.integral == 0.0


def test_pi_table_gains_example():
    s, out = pi_step(PiState(0.1, 20, 0.01), 1.0)
    assert s.integral == pytest.approx(0.01)
    assert out == pytest.approx(0.3)


@settings(max_examples=50, deadline=None)
@given(e=st.floats(-5, 5), n=st.integers(1, 200), kp=st.floats(0, 2), ki=st.floats(0, 50))
def test_pi_linear_ramp(e, n, kp, ki):
    s = PiState(kp, ki, 0.01)
    for _ in range(n):
        s, out = pi_step(s, e)
    assert out == pytest.approx(kp * e + ki * e * n * 0.01, rel=1e-9, abs=1e-12)


def test_pi_clamp_prevents_windup():
    s = PiState(0.1, 20, 0.01, limit=1.0)
    for _ in range(1000):
        s, out = pi_step(s, 10.0)
    assert out == 1.0
    # one reversal is enough to leave saturation
    s, out = pi_step(s, -10.0)
    assert out < 1.0


def test_pi_validation():
    with pytest.raises(ValueError):
        PiState(1, 1, 0.0)
    with pytest.raises(ValueError):
        pi_step(PiState(1, 1, 0.01), math.inf)


def _pis():
    return PiState(0.1, 20, 0.01), PiState(0.1, 20, 0.01)


def test_secondary_balanced_is_zero():
    cfg = ControllerConfig(380.0, 0.25, 4)
    dv, di, *_ = secondary_step(cfg, *_pis(), (380.0, 10.0), (380.0, 10.0))
    assert (dv, di) == (0.0, 0.0)


def test_secondary_voltage_example():
    cfg = ControllerConfig(380.0, 0.25, 4)
    dv, di, *_ = secondary_step(cfg, *_pis(), (379.0, 10.0), (379.0, 10.0))
    assert dv == pytest.approx(0.3)
    assert di == 0.0


def test_secondary_fixed_point_is_stationary():
    cfg = ControllerConfig(380.0, 0.5, 2)
    pv, pi = PiState(0.1, 20, 0.01, integral=0.7), PiState(0.1, 20, 0.01, integral=-0.2)
    outs = []
    for _ in range(5):
        dv, di, pv, pi = secondary_step(cfg, pv, pi, (380.0, 6.0), (380.0, 6.0))
        outs.append((dv, di))
    assert len(set(outs)) == 1


def test_secondary_rejects_csc():
    cfg = ControllerConfig(380.0, 0.0, 1, Mode.CSC)
    with pytest.raises(ModeError):
        secondary_step(cfg, *_pis(), (380.0, 1.0), (380.0, 1.0))


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(380.0, 1.5, 1)
    with pytest.raises(ValueError):
        ControllerConfig(380.0, 0.5, 0)


def _der(k, cap, mode=Mode.CSC):
    return DerUnit(k, (0.0, 0.0), cap, mode)


def test_sole_vsc_cannot_leave():
    d = _der(0, 1e3, Mode.VSC)
    with pytest.raises(EmptyVss):
        set_mode(d, Mode.CSC, ControllerConfig(380.0, 1.0, 1), [d, _der(1, 1e3)])


def test_join_share():
    others = [_der(0, 2e3, Mode.VSC), _der(1, 4e3, Mode.VSC)]
    new = _der(2, 2e3)
    d, cfg = set_mode(new, Mode.VSC, ControllerConfig(380.0, 0.0, 2, Mode.CSC), others + [new])
    assert d.mode is Mode.VSC
    assert cfg.alpha == pytest.approx(0.25)
    assert cfg.vsc_count == 3


def test_leave_sets_full_capacity_setpoint():
    ders = [_der(0, 2e3, Mode.VSC), _der(1, 3.8e3, Mode.VSC)]
    d, cfg = set_mode(ders[1], Mode.CSC, ControllerConfig(380.0, 0.5, 2), ders)
    assert d.mode is Mode.CSC and d.csc_setpoint == pytest.approx(10.0)
    assert cfg.vsc_count == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e3, 4e3), min_size=2, max_size=9), st.lists(st.integers(0, 8), min_size=1, max_size=30))
def test_shares_sum_to_one_after_switches(caps, toggles):
    ders = [_der(k, c, Mode.VSC if k == 0 else Mode.CSC) for k, c in enumerate(caps)]
    cfg = {k: ControllerConfig(380.0, 1.0 if k == 0 else 0.0, 1, d.mode) for k, d in enumerate(ders)}
    for t in toggles:
        k = t % len(ders)
        target = Mode.CSC if ders[k].mode is Mode.VSC else Mode.VSC
        try:
            ders[k], cfg[k] = set_mode(ders[k], target, cfg[k], ders)
        except EmptyVss:
            continue
    vss = {d.id for d in ders if d.mode is Mode.VSC}
    shares = proportional_shares({d.id: d.capacity for d in ders}, vss)
    assert abs(math.fsum(shares.values()) - 1.0) <= 1e-12
