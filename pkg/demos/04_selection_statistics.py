"""How often the reselection meets the absorption target, and against what.

On the case-study layout we draw 1000 capacity vectors and compare the
per-draw choice with holding its most frequent set fixed. Then we repeat on
random layouts with the same expected number of wireless links.
"""
import numpy as np

from sdmgrid.harness.experiments import exp_random_topologies, exp_selection_histogram

hist = exp_selection_histogram(seed=0, n_draws=1000)
st = hist.data["stats"]
print("most frequent sets on the case study:")
for vss, n in st.frequencies()[:6]:
    print(f"  {vss}: {n}")
print(f"per-draw choice below p_abs: {np.mean(st.dvsss_jcq < 0.01):.1%}")
print(f"fixed set {st.static_set} below p_abs: {np.mean(st.static_jcq < 0.01):.1%}")

topo = exp_random_topologies(seed=0)
print(f"\nrandom layouts in a {topo.data['side']:.0f} m square")
print(" graph  comps  per-draw median  fixed median  per-draw ok  fixed ok")
for k, s in enumerate(topo.data["stats"]):
    print(
        f"  {k:3d}   {len(s.graph.components):3d}   {np.median(s.dvsss_jcq):12.2e}   "
        f"{np.median(s.static_jcq):11.2e}   {np.mean(s.dvsss_jcq < 0.01):8.1%}   {np.mean(s.static_jcq < 0.01):6.1%}"
    )
