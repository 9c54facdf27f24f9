"""
Convergence diagnostics.

* iteration/energy bounds of a threshold-stopped run live in
  :mod:`mnomp.estimator` (``iteration_bound``, ``bound_violations``);
* the grid/continuum sandwich for ``sup_w sqrt(G_Y(w))`` with factor
  ``(1 - 4 pi T / gamma)^(-1/2)``;
* the residual rate bound ``||Y_r(P_m)||_F <= (m+1)^(-1/2) (1 - 4 pi T/gamma)^(-1/2) ||Y||_A``,
  checked with the decomposition surrogate ``sum_k ||x_k||_2 >= ||Y||_A``;
* averaged relative-residual curves for MNOMP and its two stripped variants.

Both bounds are vacuous unless ``gamma > 4 pi T``; the checks then report
"not applicable" instead of a verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimator import MnompConfig, extract_spectrum
from .glrt import grid_scan, newton_refine
from .signal_model import GroundTruth, TWO_PI, as_snapshots, noiseless, random_ground_truth

#: Fine-grid size used to approximate the supremum over the continuum.
FINE_GRID = 2 ** 16

VARIANTS = ("MNOMP", "MNOMP-", "MDOMP")


def bound_factor(gamma: float, t: int) -> Optional[float]:
    """``(1 - 4 pi T / gamma)^(-1/2)``, or None when ``gamma <= 4 pi T``."""
    r = 1.0 - 4.0 * np.pi * t / gamma
    return None if r <= 0 else r ** -0.5


def atomic_surrogate(truth: GroundTruth) -> float:
    """``sum_k ||x_k||_2``, an upper bound on the atomic norm of the noiseless mixture."""
    return float(np.sum(np.linalg.norm(truth.amplitudes, axis=1)))


def continuum_sup(Y, fine: int = FINE_GRID, extra_grid: Optional[int] = None) -> tuple[float, float]:
    """Approximate ``(argmax, max)`` of ``G_Y`` over ``[0, 2 pi)``.

    Samples a ``fine``-point grid (plus the ``extra_grid``-point grid when
    given, so coarser grids are never missed), then polishes the best sample
    with Newton steps. Resolution is ``2 pi / fine`` before polishing.
    """
    Y = as_snapshots(Y)
    n = Y.shape[0]
    best_w, best_g = 0.0, -np.inf
    for size in (fine, extra_grid):
        if size is None:
            continue
        vals = np.sum(np.abs(np.fft.fft(Y, n=size, axis=0)) ** 2, axis=1) / n
        k = int(np.argmax(vals))
        if vals[k] > best_g:
            best_w, best_g = TWO_PI * k / size, float(vals[k])
    w, ev, _ = newton_refine(Y, best_w, 20)
    return (w, ev.value) if ev.value > best_g else (best_w, best_g)


@dataclass(frozen=True)
class GridSandwichCheck:
    grid_max: float
    continuum_sup: float
    factor: Optional[float]

    @property
    def applicable(self) -> bool:
        return self.factor is not None

    @property
    def left_ok(self) -> bool:
        return self.grid_max <= self.continuum_sup * (1 + 1e-12)

    @property
    def factor_ok(self) -> Optional[bool]:
        if not self.applicable:
            return None
        return self.left_ok and self.continuum_sup <= self.factor * self.grid_max * (1 + 1e-12)


def check_grid_sandwich(Y, gamma: int) -> GridSandwichCheck:
    """Compare ``max_{grid} sqrt(G)`` with the (approximate) continuum supremum.

    ``grid_max <= sup <= factor * grid_max`` is verified when ``gamma > 4 pi T``.
    """
    Y = as_snapshots(Y)
    scan = grid_scan(Y, gamma)
    _, sup_g = continuum_sup(Y, extra_grid=scan.grid_size)
    return GridSandwichCheck(np.sqrt(scan.max_value), np.sqrt(sup_g), bound_factor(gamma, Y.shape[1]))


@dataclass(frozen=True)
class ResidualRateCheck:
    residual_norms: np.ndarray
    bounds: Optional[np.ndarray]

    @property
    def applicable(self) -> bool:
        return self.bounds is not None

    @property
    def holds(self) -> Optional[bool]:
        if not self.applicable:
            return None
        return bool(np.all(self.residual_norms <= self.bounds * (1 + 1e-12)))


def check_residual_rate(residual_norms, surrogate: float, gamma: int, t: int) -> ResidualRateCheck:
    """Check ``||Y_r(P_m)||_F <= (m+1)^(-1/2) factor * surrogate`` for ``m = 0, 1, ...``.

    ``residual_norms[m]`` is the Frobenius norm after ``m`` detections.
    """
    norms = np.asarray(residual_norms, dtype=float)
    factor = bound_factor(gamma, t)
    if factor is None:
        return ResidualRateCheck(norms, None)
    m = np.arange(norms.size)
    return ResidualRateCheck(norms, factor * surrogate / np.sqrt(m + 1))


def variant_config(variant: str, gamma: int, r_single: int = 1, r_cyclic: int = 1) -> MnompConfig:
    """MNOMP as given; ``MNOMP-`` drops cyclic refinement; ``MDOMP`` drops all refinement."""
    if variant == "MNOMP":
        rs, rc = r_single, r_cyclic
    elif variant == "MNOMP-":
        rs, rc = r_single, 0
    elif variant == "MDOMP":
        rs, rc = 0, 0
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    # tau is unused when the iteration budget is fixed
    return MnompConfig(tau=1.0, gamma=gamma, r_single=rs, r_cyclic=rc)


@dataclass
class ConvergenceCurve:
    """Mean relative residual energy ``10 log10(mean (||Y_r(P_m)||_F / surrogate)^2)``."""

    rel_energy_db: np.ndarray
    variant: str
    gamma: int
    t: int
    seed: int
    trials: int

    def rows(self) -> list[dict]:
        return [dict(iteration=m, rel_energy_db=float(v), variant=self.variant,
                     gamma=self.gamma, T=self.t, seed=self.seed)
                for m, v in enumerate(self.rel_energy_db)]


#: Relative energy floor used to keep exactly-zero residuals finite in dB.
ENERGY_FLOOR = 1e-30


def residual_norm_sequence(Y, cfg: MnompConfig, n_iterations: int) -> np.ndarray:
    """Residual norms after ``0..n_iterations`` detections (padded if the residual vanishes)."""
    _, trace = extract_spectrum(Y, cfg, n_iterations=n_iterations)
    norms = np.sqrt(np.maximum(trace.energies, 0.0))
    if norms.size < n_iterations + 1:
        norms = np.concatenate([norms, np.full(n_iterations + 1 - norms.size, norms[-1])])
    return norms


def convergence_experiment(variant: str, *, n: int = 64, t: int = 10, k: int = 16,
                           gamma: int = 4, r_single: int = 1, r_cyclic: int = 1,
                           n_iterations: Optional[int] = None, delta_min_bins: float = 2.5,
                           trials: int = 100, seed: int = 0) -> ConvergenceCurve:
    """Average relative residual energy per iteration over noiseless random mixtures.

    Trial ``i`` uses the mixture drawn from ``SeedSequence([seed, i])``, so
    different variants see identical data.
    """
    cfg = variant_config(variant, gamma, r_single, r_cyclic)
    n_iterations = 2 * k if n_iterations is None else n_iterations
    acc = np.zeros(n_iterations + 1)
    for i in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        truth = random_ground_truth(k, t, n, 0.0, delta_min_bins, rng)
        Y = noiseless(truth, n)
        norms = residual_norm_sequence(Y, cfg, n_iterations)
        acc += (norms / atomic_surrogate(truth)) ** 2
    rel = 10.0 * np.log10(np.maximum(acc / trials, ENERGY_FLOOR))
    return ConvergenceCurve(rel, variant, gamma, t, seed, trials)
