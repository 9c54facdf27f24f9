"""
Coarse detection and Newton polishing of one frequency
======================================================

The detector scores a candidate frequency by the energy all snapshots put on
its steering vector. An oversampled FFT finds the best bin, then Newton
steps on the same score move the estimate off the grid.
"""

import numpy as np

from mnomp import glrt_eval, grid_scan, newton_refine, steering
from mnomp.signal_model import TWO_PI, wrap_distance

rng = np.random.default_rng(2)
n, t = 32, 3
w_true = TWO_PI * 7.37 / n
Y = np.outer(steering(w_true, n), np.exp(1j * rng.uniform(0, TWO_PI, t)) * 3)
Y += 0.05 * (rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape))

scan = grid_scan(Y, gamma=4)
w0 = scan.argmax_omega
print(f"grid estimate error: {wrap_distance(w0, w_true) * n / TWO_PI:.4f} bins")

for steps in (1, 2, 5):
    w, ev, _ = newton_refine(Y, w0, steps)
    print(f"after {steps} Newton step(s): error {wrap_distance(w, w_true) * n / TWO_PI:.2e} bins, "
          f"score {ev.value:.4f}, curvature {ev.d2:.1f}")

# At a local maximum the slope vanishes and the curvature is negative.
ev = glrt_eval(Y, newton_refine(Y, w0, 10)[0])
print(f"slope at the polished peak: {ev.d1:.2e}")
