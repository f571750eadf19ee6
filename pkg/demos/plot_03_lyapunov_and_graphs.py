"""
Lyapunov exponents and map graphs
=================================

The estimator is first checked on the logistic map at r = 4, whose exponent
is ln 2.  It then sweeps the (alpha1, alpha2) plane of f.

"""

import math
from pathlib import Path

import numpy as np

from compmap.chaos import (
    FMapParams,
    GMapParams,
    LogisticParams,
    graph_csv,
    lyapunov_exponent,
    lyapunov_sweep,
    map_graph,
    orbit_collapse_fraction,
    param_grid,
)

out = Path("demo_output")
out.mkdir(exist_ok=True)

# %%
# Calibration.
est = [lyapunov_exponent("logistic", LogisticParams(4.0), x0) for x0 in np.linspace(0.05, 0.95, 10)]
print(f"logistic r=4: mean {np.mean(est):.6f}, ln 2 = {math.log(2):.6f}")

# %%
# f on the key-sampler rectangle; cells with a negative exponent or an
# escaped orbit are the weak parameters.
sweep = lyapunov_sweep("f", param_grid((1.0, 4.0), (1.0, 5.0), 25), 25.687)
print(f"fraction of positive cells: {sweep.fraction_positive:.3f}")
(out / "lyapunov_f.csv").write_text(sweep.to_csv())

print("f exponent at the published parameters:", lyapunov_exponent("f", FMapParams(2.10155, 3.569221), 25.687))

# %%
# g with large alpha4 pushes orbits toward zero, where its image is tiny.
diag = orbit_collapse_fraction(GMapParams(61.522, 257.26223))
print("g orbit collapse:", diag)

# %%
# Graph samples for plotting elsewhere.
(out / "graph_f.csv").write_text(graph_csv(map_graph("f", FMapParams(2.10155, 3.569221), (0.0, 10.0), 2000)))
(out / "graph_g.csv").write_text(graph_csv(map_graph("g", GMapParams(61.522, 257.26223), (0.01, 10.0), 2000)))
print("wrote", sorted(p.name for p in out.iterdir()))
