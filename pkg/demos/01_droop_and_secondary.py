"""Droop sharing, the voltage sag it causes, and how secondary control removes it.

Four DERs run as voltage sources behind 1 ohm droops and five inject their
full capacity as current sources. We solve the bus with no correction, then
let the simulator run one tertiary period and look at the bus voltage before
and after the secondary loop has settled.
"""
import numpy as np

from sdmgrid.grid import DerUnit, LoadModel, Mode, csc_setpoint, solve_bus
from sdmgrid.harness import Scenario, run_scenario

V_REF = 380.0
caps = np.array([2.1, 3.4, 1.2, 2.8, 3.9, 1.7, 2.5, 3.1, 1.4]) * 1e3
vss = {1, 2, 4, 5}

ders = [
    DerUnit(k, (0.0, 0.0), c, Mode.VSC if k in vss else Mode.CSC, csc_setpoint=csc_setpoint(c, V_REF))
    for k, c in enumerate(caps)
]
state = solve_bus(ders, LoadModel(14.44e3), None, V_REF)
print(f"droop only: v_bus = {state.v_bus:.3f} V")
print("  VSC currents:", np.round(state.i_out[sorted(vss)], 3), "A  (equal droops, equal split)")
print(f"  KCL residual: {state.kcl_residual():.2e} A")

# the same grid inside the simulator, secondary control on
trace, metrics = run_scenario(Scenario().with_overrides(periods=1))
t, v = trace.times(), trace.voltages()
for when in (0.0, 0.05, 0.5, 2.0, 14.99, 15.0, 15.5, 29.99):
    k = int(np.searchsorted(t, when))
    print(f"t = {t[k]:6.2f} s   v_bus = {v[k]:.4f} V   J^sc = {trace.rows[k].jsc:.2e} A")
print("period metrics:", metrics[0])
