"""Sending bits over the DC bus by nudging one converter's voltage reference.

We size the channel for nine DERs, draw one contention round, and push a
roster packet through the quasi-static bus model to see the voltage levels
a receiver samples.
"""
import numpy as np

from sdmgrid.grid import DerUnit, LoadModel, Mode
from sdmgrid.powertalk import (
    BusChannel,
    PowerTalkReceiver,
    PtParams,
    csma_round,
    decode_roster,
    encode_roster,
    plan_channel,
    pt_transmit,
    to_bits,
)

p = PtParams()
plan = plan_channel(p, 9)
print(f"window B = {plan.window}, contention {plan.contention:.4f} s, "
      f"contention-free {plan.contention_free:.4f} s, total {plan.total:.4f} s")

sched = csma_round(range(9), plan.window, np.random.default_rng(4), p)
for u in sorted(sched.tx_times, key=sched.tx_times.get):
    tag = " (collided)" if u in sched.collisions else ""
    print(f"  DER {u}: counter {sched.draws[u]:3d}, starts at {sched.tx_times[u]:.4f} s{tag}")

ders = [DerUnit(k, (0, 0), 2.5e3, Mode.VSC if k in {1, 2, 4, 5} else Mode.CSC, csc_setpoint=2.5e3 / 380) for k in range(9)]
bus = BusChannel(ders, LoadModel(14.44e3), None, 380.0)
shift = bus.min_one_bit_shift(p.amplitude)
print(f"\nidle bus {bus.idle_voltage():.4f} V, smallest one-bit shift {shift * 1e3:.2f} mV")

code = encode_roster(6, 3150.0, 1e3, 4e3)
bits = to_bits(code)
pt_transmit(bits, p, bus, 6)
rx = PowerTalkReceiver(p, bus.idle_voltage(), shift)
decoded, flagged = rx.decode(bus.samples[:8], idle_after=bus.samples[8])
for b, s in zip(bits, bus.samples):
    print(f"  bit {b}: sampled {s:.4f} V")
u, cap = decode_roster(int("".join(map(str, decoded)), 2), 1e3, 4e3)
print(f"decoded DER {u} with capacity level midpoint {cap:.2f} W, guard flagged: {flagged}")
