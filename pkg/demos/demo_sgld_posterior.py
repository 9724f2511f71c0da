"""Langevin dynamics as posterior sampling.

Two checks that the SGLD update  w <- w - (eps/N) dC/dw + Normal(0, 2*T*eps/N)
really samples exp(-C/T):

1.  On a quadratic cost the long-run variance matches the discrete-time
    Ornstein-Uhlenbeck value T/(k*(1 - eps*k/2N)), approaching T/k as the
    step shrinks.
2.  On a tilted double well, the fraction of time spent in each basin of
    attraction matches the quadrature mass of exp(-C) over that basin: the
    sampler visits a minimum in proportion to the local evidence for it.

Run:  python demos/demo_sgld_posterior.py     (~30 seconds)
"""

import numpy as np

from sgdlab import optim
from sgdlab.experiments import sgld_basin_occupancy
from sgdlab.numkit import RngStream

print("1. Stationary variance on C = k*w^2/2 (k=1, T=1, N=1):")
for eps in (0.2, 0.05):
    obj = optim.QuadraticObjective(1.0, np.array([0.0]))
    rng = RngStream(1)
    w = np.zeros(1)
    samples = np.empty(150_000)
    for i in range(20_000):
        w = optim.sgld_step(w, obj, eps, 1.0, rng)
    for i in range(samples.size):
        w = optim.sgld_step(w, obj, eps, 1.0, rng)
        samples[i] = w[0]
    predicted = 1.0 / (1.0 - eps / 2.0)
    print(f"   eps={eps:4.2f}: measured {samples.var():.4f}, "
          f"discrete-time value {predicted:.4f}, continuum T/k = 1")

print("\n2. Double well C(w) = (w^2-1)^2 + 0.5*w, T=1:")
result = sgld_basin_occupancy(a=1.0, b=0.5, epsilon=0.01, steps=300_000, seed=0)
left, right = result["occupancy"]
fl, fr = result["evidence_fraction"]
print(f"   occupancy      left {left:.3f} / right {right:.3f}")
print(f"   local evidence left {fl:.3f} / right {fr:.3f}")
print(f"   basin boundary at w = {result['split']:.3f}")
print(
    "\nThe deeper left well collects posterior mass in the exact proportion"
    "\nquadrature assigns it; that is why long SGLD runs prefer broad, deep"
    "\nminima: they hold more evidence."
)
