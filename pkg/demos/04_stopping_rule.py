"""
Choosing the stopping threshold and predicting misses
=====================================================

Under noise only, each periodogram bin is a scaled chi-square with 2T degrees
of freedom. The threshold is the level that the largest of N such bins
exceeds with the tolerated overestimation probability. The same statistic
under a lone sinusoid is non-central, which gives the miss probability.
"""

import numpy as np

from mnomp import MissModel, threshold_from_poe
from mnomp.stopping import alpha_factor

n = 64
print("threshold per snapshot count, P_oe = 0.01:")
for t in (1, 2, 4, 8, 16):
    tau = threshold_from_poe(0.01, n, t, 1.0).tau
    print(f"  T={t:2d}: tau = {tau:7.3f}   (tau / T = {tau / t:.3f})")

# A tone between grid points loses energy; the RMS loss over a bin is close to 0.88.
offsets = np.linspace(-0.5, 0.5, 2001) * 2 * np.pi / n
a = alpha_factor(offsets, 0.0, n)
print(f"\nmean gain loss {a.mean():.4f}, RMS gain loss {np.sqrt(np.mean(a ** 2)):.4f}")

print("\npredicted miss probability at 11 dB, P_oe = 0.01:")
for t in (1, 2, 4, 8):
    tau = threshold_from_poe(0.01, n, t, 1.0).tau
    print(f"  T={t}: {MissModel(11.0, t, tau, 1.0).p_miss:.2e}")
