"""Call surfaces of Brownian motion three ways.

Simulate Brownian motion, estimate the call surface C(t, x) = E[(X_t - x)_+]
from the paths, solve the forward equation for the same surface, and compare
both with the closed form.  Then read the local volatility back from the PDE
surface.  Figures go to ``demo-out/``.

Run with ``python demos/01_gaussian_surfaces.py``.
"""

import os

import numpy as np

from genbackward import marginals as mg
from genbackward import plots
from genbackward import process_models as pm
from genbackward.io_utils import atomic_write_text

OUT = os.environ.get("GENBACKWARD_OUTPUT", "demo-out")

bm = pm.brownian_motion()
ens = pm.simulate(bm, pm.Partition.uniform(1.0, 64), 100_000, seed=7)
# far in the tails a handful of paths end beyond x and the sample SE is unreliable
x = np.linspace(-1.5, 1.5, 31)
C = mg.estimate_call_surface(ens, x, [0.25, 0.5, 0.75, 1.0])
exact = mg.gaussian_call(C.t_nodes[:, None], x[None, :])
z = np.abs(C.raw - exact)[1:] / C.se[1:]
print(f"Monte Carlo: largest |error| / SE over {z.size} nodes = {z.max():.2f}")

xp = np.linspace(-6, 6, 481)
tp = np.linspace(0, 1, 401)
P = mg.call_surface_forward_pde(bm, xp, tp)
err = P.values - mg.gaussian_call(tp[:, None], xp[None, :])
print(f"forward PDE: max abs error {np.abs(err).max():.2e}")

sig = mg.dupire_surface(P)
inner = np.ix_(tp >= 0.25, np.abs(xp) <= 1.5)
print(f"local volatility on the interior: min {np.nanmin(sig[inner]):.4f}, max {np.nanmax(sig[inner]):.4f}")

path = os.path.join(OUT, "gaussian_pde_error.svg")
atomic_write_text(path, plots.heatmap(tp, xp, err, "forward PDE minus closed form"))
print(f"wrote {path}")
