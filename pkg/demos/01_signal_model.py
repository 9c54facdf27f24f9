"""
Synthesizing multi-snapshot line spectra
========================================

A mixture of K sinusoids is seen by N sensors over T snapshots. Each
sinusoid keeps its frequency across snapshots while its complex gain changes.
"""

import numpy as np

from mnomp import GroundTruth, random_ground_truth, synthesize
from mnomp.signal_model import TWO_PI, draw_separated_frequencies, wrap_distance

rng = np.random.default_rng(1)
n, t, k = 64, 4, 5

# Frequencies are drawn uniformly but kept at least 2 DFT bins apart.
freqs = draw_separated_frequencies(k, 2 * TWO_PI / n, rng)
gaps = wrap_distance(freqs[:, None], freqs[None, :]) + np.eye(k) * TWO_PI
print("frequencies (bins):", np.round(np.sort(freqs) * n / TWO_PI, 2))
print("closest pair (bins):", round(gaps.min() * n / TWO_PI, 3))

# Gains have unit modulus and random phase, then get scaled to a per-component SNR.
truth = random_ground_truth(k, t, n, snr_db=12.0, delta_min_bins=2.0, rng=rng)
print("per-component SNR (dB):", np.round(truth.snr_db(), 6))

Y = synthesize(truth, n, rng)
print("snapshot matrix shape:", Y.shape)

# Ground truth round-trips through JSON, the format the command line reads.
again = GroundTruth.from_json(truth.to_json())
print("JSON round-trip exact:", np.array_equal(again.amplitudes, truth.amplitudes))
