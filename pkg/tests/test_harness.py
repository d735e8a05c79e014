import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from sdmgrid.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from sdmgrid.grid import DerUnit, Mode
from sdmgrid.harness import (
    ConfigError,
    Scenario,
    Simulation,
    discover_neighbors,
    jsc,
    load_scenario,
    node_jammer,
    run_dvsss,
    run_scenario,
    scenario_from_dict,
)
from sdmgrid.harness.experiments import (
    exp_random_topologies,
    exp_selection_histogram,
    matched_square_side,
    _pair_within,
)
from sdmgrid.wireless import Jammer, build_graph, is_connected

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


# -- scenario ---------------------------------------------------------------

def test_default_scenario_is_case_study():
    s = Scenario()
    assert s.n_ders == 9 and s.v_ref == 380.0 and s.rho == 175.0
    assert s.timing.secondary == 0.01 and s.timing.tertiary == 30.0
    assert s.mu == 14.44e3 and s.sigma == 1.2e3


def test_yaml_round_trip():
    s = load_scenario(CONFIGS / "case_study.yaml")
    assert s.selection.dvsss_enabled
    assert s.jammers == (Jammer(start=0.0, end=math.inf, node=2),)
    assert s.positions == Scenario().positions
    assert s.pt == Scenario().pt


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"timing": {"secondary": 0.0}},
        {"timing": {"tertiary": 30.005}},
        {"initial_vss": [42]},
        {"load": {"law": "quadratic"}},
        {"jammers": [{"node": 1, "center": [0, 0], "radius": 3}]},
        {"wireless": {"rho": -1}},
        {"ders": [{"position": [0, 0], "colour": "red"}]},
        {"timing": {"discovery": 14.0}, "selection": {"dvsss_enabled": True}},
    ],
)
def test_bad_config(data):
    with pytest.raises(ConfigError):
        scenario_from_dict(data)


def test_load_scenario_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.yaml")
    p = tmp_path / "list.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_scenario(p)


# -- J^sc -------------------------------------------------------------------

def test_jsc_zero_for_exact_sharing():
    ders = [DerUnit(0, (0, 0), 2e3, Mode.VSC), DerUnit(1, (0, 0), 2e3, Mode.VSC), DerUnit(2, (0, 0), 1.9e3, csc_setpoint=5.0)]
    alpha = {0: 0.25, 1: 0.75}
    residual = 7600.0 / 380.0 - 5.0
    i_out = [0.25 * residual, 0.75 * residual, 5.0]
    assert jsc(i_out, {0, 1}, alpha, 7600.0, ders, 380.0) == pytest.approx(0.0, abs=1e-12)


def test_jsc_mirrors_one_wrong_share():
    ders = [DerUnit(0, (0, 0), 2e3, Mode.VSC), DerUnit(1, (0, 0), 2e3, Mode.VSC)]
    total = 7600.0 / 380.0
    d = 1.7  # agent 0 sits 1.7 A above its share; KCL puts agent 1 1.7 A below
    i_out = [0.5 * total + d, 0.5 * total - d]
    assert jsc(i_out, {0, 1}, {0: 0.5, 1: 0.5}, 7600.0, ders, 380.0) == pytest.approx(2 * d)


# -- engine -----------------------------------------------------------------

@pytest.fixture(scope="module")
def static_run():
    return run_scenario(Scenario().with_overrides(periods=2))


@pytest.fixture(scope="module")
def dvsss_sim():
    s = Scenario().with_overrides(periods=3, dvsss_enabled=True, jammers=(node_jammer(2),))
    sim = Simulation(s)
    frozen = []
    orig = sim._row

    def spy(t, event):
        orig(t, event)
        frozen.append((t, sim.frozen, tuple(sim.corrections())))

    sim._row = spy
    trace, metrics = sim.run()
    return sim, trace, metrics, frozen


def test_trace_layout(static_run):
    trace, metrics = static_run
    t = trace.times()
    assert np.all(np.diff(t) > 0)
    # one row per secondary period; the midpoint step falls on the grid
    assert len(t) == 2 * 3000
    head = trace.to_csv().splitlines()[0].split(",")
    assert head[:3] == ["t", "v_bus", "i_0"] and head[-3:] == ["vss", "jsc", "event"]
    assert [m.period for m in metrics] == [0, 1]


def test_off_grid_events_get_rows():
    s = Scenario().with_overrides(periods=1, jammers=(Jammer(start=5.005, end=7.0, node=2),))
    trace, _ = run_scenario(s)
    assert trace.events("jam-on") == [5.005]
    assert trace.events("jam-off") == [7.0]
    assert np.all(np.diff(trace.times()) > 0)


def test_static_steady_state(static_run):
    trace, metrics = static_run
    for m in metrics:
        assert m.steady and m.jsc < 0.05 and abs(m.v_bus - 380) < 0.38
    # proportional sharing among the VSCs at the end of each period
    row = trace.rows[-1]
    vsc = [row.i_out[u] for u in row.vss]
    assert sum(vsc) > 0


def test_energy_bookkeeping(static_run):
    trace, _ = static_run
    s = Scenario()
    sim = Simulation(s)
    # rebuild the demand sequence from the same seed
    demands = []
    for _ in range(2):
        sim.rng.uniform(s.p_min, s.p_max, size=9)
        demands.append((sim._draw_demand(), sim._draw_demand()))
    for r in trace.rows:
        k = int(r.t // 30.0)
        p = demands[k][0] if (r.t % 30.0) < 15.0 - 1e-9 else demands[k][1]
        assert sum(r.i_out) * r.v_bus >= p * (1 - 1e-3)


def test_determinism():
    s = Scenario().with_overrides(periods=1, dvsss_enabled=True, seed=5)
    assert run_scenario(s)[0].to_csv() == run_scenario(s)[0].to_csv()
    other = run_scenario(s.with_overrides(seed=6))[0].to_csv()
    assert other != run_scenario(s)[0].to_csv()


def _ptch_windows(trace):
    return list(zip(trace.events("ptch-start"), trace.events("ptch-end")))


def test_corrections_frozen_during_channel(dvsss_sim):
    _, trace, _, frozen = dvsss_sim
    windows = _ptch_windows(trace)
    assert len(windows) == 3
    for start, end in windows:
        inside = [c for t, f, c in frozen if start <= t < end]
        assert len(inside) > 100
        assert all(c == inside[0] for c in inside)


def test_vss_connected_outside_channel(dvsss_sim):
    sim, trace, _, _ = dvsss_sim
    windows = _ptch_windows(trace)
    first = trace.events("dvsss-decision")[0]
    g = build_graph(sim.s.positions, sim.s.rho, sim.s.jammers, 1.0)
    checked = 0
    for r in trace.rows:
        if r.t < first or any(a <= r.t < b for a, b in windows):
            continue
        assert 2 not in r.vss
        assert is_connected(g, r.vss)
        checked += 1
    assert checked > 5000


def test_dvsss_recovers(dvsss_sim):
    _, _, metrics, _ = dvsss_sim
    for m in metrics:
        assert m.jsc < 0.05 and 2 not in m.vss


def test_discovery_keeps_stable_links_only():
    s = Scenario().with_overrides(jammers=(Jammer(start=5.0, end=8.0, node=1),))
    nb = discover_neighbors(s, 0.0, 10.0)
    assert nb[1] == set()
    assert 1 not in nb[0]
    full = discover_neighbors(Scenario(), 0.0, 10.0)
    assert full[1] == {0, 2, 4}


def test_run_dvsss_repeatable():
    s = Scenario().with_overrides(dvsss_enabled=True)
    sim = Simulation(s)
    sim._period_start(0)
    sim.bus = sim._solve(0.0)
    nb = discover_neighbors(s, 0.0, 10.0)
    args = (sim.ders, sim.load, sim.corrections(), nb, s)
    a = run_dvsss(*args, np.random.default_rng(1), 9)
    b = run_dvsss(*args, np.random.default_rng(1), 9)
    assert a.vss == b.vss and a.schedule.roster == b.schedule.roster
    # the contention-free phase reports each edge once
    clean = set(a.schedule.senders)
    expected = {(u, v) for u in clean for v in nb[u] if v > u}
    assert set(a.schedule.edge_reports) == expected
    assert a.flagged_frames == 0


# -- experiments ------------------------------------------------------------

def test_selection_histogram_tables():
    r = exp_selection_histogram(seed=0, n_draws=200)
    assert set(r.tables) == {"selection_histogram.csv", "jcq_cdf.csv", "selection_summary.csv"}
    counts = [int(line.split(",")[1]) for line in r.tables["selection_histogram.csv"].splitlines()[1:]]
    assert sum(counts) == 200


def test_matched_square_side():
    # closed-form pair-distance CDF against a Monte Carlo estimate
    rng = np.random.default_rng(0)
    a, b = rng.uniform(0, 1, (2, 200000, 2))
    frac = np.mean(np.linalg.norm(a - b, axis=1) <= 0.3)
    assert _pair_within(0.3) == pytest.approx(frac, abs=3e-3)
    side = matched_square_side(9, 175.0, 9)
    assert _pair_within(175.0 / side) * 36 == pytest.approx(9)


def test_random_topologies_table():
    r = exp_random_topologies(seed=1, n_graphs=3, n_draws=50)
    lines = r.tables["random_topologies.csv"].splitlines()
    assert len(lines) == 1 + 3 * 2


# -- CLI ----------------------------------------------------------------------

def test_cli_run(tmp_path):
    out = tmp_path / "o"
    code = main(["run", str(CONFIGS / "static_no_attack.yaml"), "--periods", "1", "--out-dir", str(out)])
    assert code == EXIT_OK
    assert (out / "trace.csv").read_text().startswith("t,v_bus,")
    assert len((out / "metrics.csv").read_text().splitlines()) == 2


def test_cli_experiment(tmp_path):
    code = main(["experiment", "exp_dos_static", "--periods", "1", "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / "exp_dos_static_metrics.csv").exists()


def test_cli_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"timing": {"secondary": -1}}))
    assert main(["run", str(bad), "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_cli_solver_failure(tmp_path, capsys):
    cfg = tmp_path / "heavy.yaml"
    cfg.write_text(yaml.safe_dump({"load": {"mu": 1.0e6, "sigma": 1.0e3}, "periods": 1}))
    assert main(["run", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err


def test_cli_dvsss_flag(tmp_path):
    code = main(["run", str(CONFIGS / "static_no_attack.yaml"), "--periods", "1", "--dvsss", "on", "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    assert "ptch-start" in (tmp_path / "trace.csv").read_text()
