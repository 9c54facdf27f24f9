"""
Estimating an unknown number of sinusoids
=========================================

The estimator alternates detection, Newton polishing, cyclic re-polishing of
earlier components and a least-squares gain update. It stops once the best
remaining peak falls below a threshold set from the tolerated probability of
reporting a spurious component.
"""

import numpy as np

from mnomp import MnompConfig, extract_spectrum, random_ground_truth, synthesize
from mnomp.harness import match_frequencies
from mnomp.signal_model import TWO_PI

rng = np.random.default_rng(3)
n, t, k = 64, 8, 6
truth = random_ground_truth(k, t, n, snr_db=8.0, delta_min_bins=2.0, rng=rng)
Y = synthesize(truth, n, rng)

cfg = MnompConfig.from_poe(0.01, sigma2=1.0, n=n, t=t, r_cyclic=3)
est, trace = extract_spectrum(Y, cfg)
print(f"threshold {cfg.tau:.2f}, stop reason: {trace.stop_reason}")
print(f"true order {k}, estimated order {len(est)}")

for i, j, d in match_frequencies(truth.frequencies, est.frequencies):
    print(f"  true {truth.frequencies[i] * n / TWO_PI:7.3f} bins -> estimate "
          f"{est.frequencies[j] * n / TWO_PI:7.3f} (error {d * n / TWO_PI:.1e} bins)")

# The residual energy falls by at least the threshold at every accepted detection.
print("residual energy by iteration:", np.round(trace.energies, 1))
