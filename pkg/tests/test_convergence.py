import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mnomp.convergence import (VARIANTS, atomic_surrogate, bound_factor, check_grid_sandwich, check_residual_rate,
                               continuum_sup, convergence_experiment, residual_norm_sequence,
                               variant_config)
from mnomp.estimator import extract_spectrum
from mnomp.glrt import glrt_eval
from mnomp.signal_model import TWO_PI, GroundTruth, noiseless, random_ground_truth, steering


def test_bound_factor():
    assert bound_factor(64, 1) == pytest.approx((1 - 4 * np.pi / 64) ** -0.5)
    assert bound_factor(20, 10) is None
    assert bound_factor(4 * np.pi, 1) is None


def test_surrogate_single_atom():
    x = np.array([[3.0, 4.0j]])
    assert atomic_surrogate(GroundTruth([1.0], x, 0.0)) == pytest.approx(5.0)


def test_surrogate_orthogonal_pair():
    n = 16
    truth = GroundTruth(TWO_PI * np.array([2, 5]) / n, np.array([[1.0, 2.0], [3.0, -1.0]]), 0.0)
    assert atomic_surrogate(truth) >= np.linalg.norm(noiseless(truth, n))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 6), st.integers(1, 4))
def test_surrogate_dominates_frobenius(seed, k, t):
    rng = np.random.default_rng(seed)
    truth = random_ground_truth(k, t, 20, rng.uniform(-5, 20), 0.0, rng)
    Y = noiseless(truth, 20)
    s = atomic_surrogate(truth)
    assert s >= np.linalg.norm(Y) * (1 - 1e-12)
    # the dual bound sup sqrt(G) <= ||Y||_A <= surrogate also holds
    assert np.sqrt(continuum_sup(Y, fine=4096)[1]) <= s * (1 + 1e-12)


def test_continuum_sup_finds_off_grid_peak():
    n = 32
    w0 = TWO_PI * 7.31 / n
    Y = np.outer(steering(w0, n), [2.0, 1j])
    w, g = continuum_sup(Y)
    assert g == pytest.approx(5.0, rel=1e-12)
    assert abs(w - w0) < 1e-9


def test_grid_sandwich_on_grid_tone_equal():
    n = 16
    Y = np.outer(steering(TWO_PI * 3 / n, n), [1.0])
    chk = check_grid_sandwich(Y, 64)
    assert chk.grid_max == pytest.approx(chk.continuum_sup, rel=1e-12)
    assert chk.factor_ok


def test_grid_sandwich_half_bin_offset_strict():
    n, gamma = 16, 64
    Y = np.outer(steering(TWO_PI * 3.5 / (gamma * n), n), [1.0])
    chk = check_grid_sandwich(Y, gamma)
    assert chk.grid_max < chk.continuum_sup
    assert chk.factor_ok


@pytest.mark.parametrize("seed", range(20))
def test_grid_sandwich_random_mixtures(seed):
    rng = np.random.default_rng([2, seed])
    truth = random_ground_truth(int(rng.integers(1, 8)), 1, 32, 10.0, 0.0, rng)
    chk = check_grid_sandwich(noiseless(truth, 32), 64)
    assert chk.applicable and chk.left_ok and chk.factor_ok


def test_grid_sandwich_not_applicable():
    Y = np.outer(steering(0.3, 16), np.ones(10))
    chk = check_grid_sandwich(Y, 20)
    assert not chk.applicable and chk.factor_ok is None and chk.left_ok


def test_residual_rate_m0_and_violation_injection():
    rng = np.random.default_rng(4)
    truth = random_ground_truth(5, 1, 32, 10.0, 1.0, rng)
    Y = noiseless(truth, 32)
    norms = residual_norm_sequence(Y, variant_config("MNOMP", 64), 10)
    s = atomic_surrogate(truth)
    assert norms[0] <= bound_factor(64, 1) * s
    assert check_residual_rate(norms, s, 64, 1).holds
    corrupted = norms.copy()
    corrupted[3] = 10 * s
    assert check_residual_rate(corrupted, s, 64, 1).holds is False
    assert check_residual_rate(norms, s, 20, 10).holds is None


def test_variant_configs():
    assert variant_config("MNOMP", 4, 2, 3).r_cyclic == 3
    assert variant_config("MNOMP-", 4, 2, 3).r_cyclic == 0
    mdomp = variant_config("MDOMP", 20)
    assert (mdomp.r_single, mdomp.r_cyclic, mdomp.gamma) == (0, 0, 20)
    with pytest.raises(ValueError):
        variant_config("OMP", 4)


def test_mdomp_exact_on_grid():
    n, k = 32, 5
    freqs = TWO_PI * np.array([1, 6, 11, 20, 27]) / n
    X = np.exp(1j * np.arange(k * 2).reshape(k, 2))
    Y = noiseless(GroundTruth(freqs, X, 0.0), n)
    est, trace = extract_spectrum(Y, variant_config("MDOMP", 4), n_iterations=k)
    assert trace.energies[k] < 1e-25 * trace.energies[0]
    np.testing.assert_allclose(np.sort(est.frequencies), freqs, atol=1e-14)


@pytest.mark.parametrize("variant", VARIANTS)
def test_curves_non_increasing_and_rows(variant):
    curve = convergence_experiment(variant, n=32, t=2, k=6, gamma=4 if variant != "MDOMP" else 20,
                                   trials=10, seed=3)
    assert curve.rel_energy_db.size == 13
    assert np.all(np.diff(curve.rel_energy_db) <= 1e-9)
    rows = curve.rows()
    assert set(rows[0]) == {"iteration", "rel_energy_db", "variant", "gamma", "T", "seed"}
    assert rows[-1]["iteration"] == 12


def test_residual_norm_sequence_padding():
    n = 16
    Y = np.outer(steering(TWO_PI * 3 / n, n), [1.0])
    norms = residual_norm_sequence(Y, variant_config("MDOMP", 4), 5)
    assert norms.size == 6 and norms[0] == pytest.approx(1.0) and np.all(norms[1:] < 1e-12)
