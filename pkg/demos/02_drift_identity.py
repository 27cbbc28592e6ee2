"""Two routes to the drift of f(t, X_t).

For a jump diffusion and a smooth bump f, the drift of f(t, X_t) tested
against a plateau function theta can be computed from Ito's formula (needs
f_t, f_x, f_xx) or from the generalized drift, which only uses f on a grid,
the call surface of X and the recorded jumps.  Both are estimated on the
same paths, so their difference has a small paired standard error.
"""

import numpy as np

from genbackward import function_space as fs
from genbackward import marginals as mg
from genbackward import measures as ms
from genbackward import process_models as pm
from genbackward import stochastic_calculus as sc
from genbackward import verifier as vf

model = pm.jump_diffusion(sigma=1.0, rate=1.0, size=0.5)
ens = pm.simulate(model, pm.Partition.uniform(1.0, 128), 20_000, seed=3)
x = np.linspace(-4, 5, 181)

fn = vf.smooth_function({"kind": "bump", "center": 0.3, "half_width": 2.0, "slope": 1.0})
F = fs.GridFunction.from_function(fn.f, ens.times, x)
theta = fs.plateau_bump(ens.times, x, (0.2, 0.8), (-1.0, 1.5))
C = mg.estimate_call_surface(ens, np.linspace(-6, 7, 362), project=False)

generalized = ms.mu_tilde(F, theta, C, ens, model)
ito = sc.ito_drift(fn, ens, model).functional(theta)
diff = generalized.total - ito

for name, est in [("bilinear term", generalized.bilinear), ("drift term", generalized.drift),
                  ("jump term", generalized.jumps), ("generalized drift", generalized.total),
                  ("Ito drift", ito)]:
    print(f"{name:>18}: {est.value:+.5f} (se {est.se:.5f})")
print(f"{'difference':>18}: {diff.value:+.5f}, {abs(diff.value) / diff.se:.2f} paired SE")
