"""Particle BP with and without the swarm step on the same measurements."""
import time

import numpy as np

from passloc.geometry import paper_default, perturb_receivers, simulate_measurements
from passloc.sample_bp import PsoConfig, run_sample_bp

sc = paper_default()
seed = 3
priors = sc.priors(perturb_receivers(sc, seed))
meas = simulate_measurements(sc, seed)

runs = {
    "100 particles + PSO": dict(n_particles=100, pso=PsoConfig()),
    "100 particles, no PSO": dict(n_particles=100, pso=None),
    "2000 particles, no PSO": dict(n_particles=2000, pso=None),
}
for name, kw in runs.items():
    t0 = time.perf_counter()
    res = run_sample_bp(priors, meas, n_iter=40, seed=seed, **kw)
    dt = time.perf_counter() - t0
    err = np.linalg.norm(res.target_mean - sc.targets, axis=1)
    print(f"{name:24s} target errors {np.round(err, 2)} m  ({dt:.1f} s)")

# a particle dump shows where the swarm ends up
res = run_sample_bp(priors, meas, n_iter=5, n_particles=100, seed=seed, record_particles=True)
it, node, pos, w = res.info["particles"][-8]   # target 0 at the last iteration
print(f"\niteration {it}, node {node}: {len(np.unique(pos, axis=0))} distinct particles,"
      f" spread {np.round(pos.std(axis=0), 2)} m, heaviest weight {w.max():.3f}")
