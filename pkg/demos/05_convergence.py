"""
How fast the residual shrinks
=============================

Three variants run for a fixed number of detections on noiseless mixtures:
full refinement, no cyclic refinement, and plain grid detection. Refinement
lets the full method remove nearly all the energy once every component is
found.
"""

from mnomp.convergence import convergence_experiment

k = 8
curves = {v: convergence_experiment(v, n=64, t=4, k=k, gamma=g, trials=20, seed=0)
          for v, g in (("MNOMP", 4), ("MNOMP-", 4), ("MDOMP", 20))}

print("iteration " + "".join(f"{v:>10s}" for v in curves))
for m in range(2 * k + 1):
    print(f"{m:9d} " + "".join(f"{c.rel_energy_db[m]:10.1f}" for c in curves.values()))
