"""
Multi-snapshot Newtonized orthogonal matching pursuit.

Each outer iteration detects one new sinusoid on the residual, then:

1. IDENTIFY the peak of ``G`` on the ``gamma * N`` point grid and project it out;
2. SINGLE REFINEMENT: ``r_single`` Newton steps on the new frequency;
3. CYCLIC REFINEMENT: ``r_cyclic`` rounds re-refining every component against
   the residual that excludes it;
4. UPDATE all gains jointly by least squares.

The loop runs while the largest value of ``G`` on the plain ``N`` point DFT
grid of the residual exceeds the threshold ``tau``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .glrt import grid_scan, newton_refine
from .signal_model import TWO_PI, as_snapshots, steering, steering_matrix, wrap, wrap_distance
from .stopping import threshold_from_poe

log = logging.getLogger(__name__)

#: Minimum wrap distance between two components before they count as duplicates.
DUPLICATE_TOL = 1e-9
#: Condition number of the steering matrix above which the LS update refuses.
MAX_CONDITION = 1e8


class IllConditionedError(np.linalg.LinAlgError):
    """The steering matrix of the current frequencies is numerically rank deficient."""

    def __init__(self, condition: float):
        super().__init__(f"steering matrix is ill-conditioned (condition estimate {condition:.3g})")
        self.condition = condition


@dataclass
class SinusoidEstimate:
    omega: float
    amplitudes: np.ndarray


@dataclass
class EstimateSet:
    """Detected components plus the cached residual ``Y - sum_l a(w_l) x_l^T``."""

    components: list[SinusoidEstimate]
    residual: np.ndarray

    @classmethod
    def empty(cls, Y) -> "EstimateSet":
        return cls([], as_snapshots(Y).copy())

    def __len__(self):
        return len(self.components)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([c.omega for c in self.components], dtype=float)

    @property
    def amplitudes(self) -> np.ndarray:
        if not self.components:
            return np.zeros((0, self.residual.shape[1]), dtype=complex)
        return np.array([c.amplitudes for c in self.components])

    def residual_energy(self) -> float:
        return float(np.linalg.norm(self.residual) ** 2)

    def recompute_residual(self, Y) -> np.ndarray:
        Y = as_snapshots(Y)
        if not self.components:
            return Y.copy()
        return Y - steering_matrix(self.frequencies, Y.shape[0]) @ self.amplitudes

    def copy(self) -> "EstimateSet":
        return EstimateSet([SinusoidEstimate(c.omega, c.amplitudes.copy()) for c in self.components],
                           self.residual.copy())


@dataclass(frozen=True)
class MnompConfig:
    """Estimator settings.

    ``tau`` is the stopping energy threshold; use :meth:`from_poe` to derive it
    from a nominal overestimation probability and the noise variance.
    ``max_components`` defaults to the number of sensors.
    """

    tau: float
    gamma: int = 4
    r_single: int = 1
    r_cyclic: int = 1
    max_components: Optional[int] = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if int(self.gamma) != self.gamma or self.gamma < 1:
            raise ValueError("gamma must be an integer >= 1")
        if self.r_single < 0 or self.r_cyclic < 0:
            raise ValueError("refinement counts must be non-negative")
        if self.max_components is not None and self.max_components < 0:
            raise ValueError("max_components must be non-negative")

    @classmethod
    def from_poe(cls, p_oe: float, sigma2: float, n: int, t: int, **kwargs) -> "MnompConfig":
        return cls(tau=threshold_from_poe(p_oe, n, t, sigma2).tau, **kwargs)


@dataclass
class IterationRecord:
    omega_detected: float
    omega_refined: float
    energy_before: float
    energy_after: float
    g_detect: float
    stop_statistic: float
    ls_fallback: bool = False

    @property
    def energy_drop(self) -> float:
        return self.energy_before - self.energy_after


@dataclass
class MnompTrace:
    """Per-iteration bookkeeping of a run.

    ``stop_reason`` is ``"threshold"``, ``"max_components"`` or ``"budget"``;
    ``final_statistic`` is the stop statistic of the returned residual.
    """

    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = "threshold"
    final_statistic: float = 0.0
    initial_energy: float = 0.0

    @property
    def hit_max_components(self) -> bool:
        return self.stop_reason == "max_components"

    @property
    def energies(self) -> np.ndarray:
        """Residual energy after ``m`` iterations, ``m = 0..len(records)``."""
        return np.array([self.initial_energy] + [r.energy_after for r in self.records])

    def to_dict(self) -> list[dict]:
        return [vars(r).copy() for r in self.records]


def stop_statistic(residual) -> float:
    """``max_n sum_t |a(2 pi n / N)^H y_t|^2`` over the plain DFT grid."""
    return grid_scan(residual, 1).max_value


def identify(residual, cfg: MnompConfig, existing=()) -> SinusoidEstimate:
    """Coarse detection on the ``gamma * N`` grid.

    Grid points within ``DUPLICATE_TOL`` of an ``existing`` frequency are
    excluded, so the next-best point is taken instead of a duplicate.
    """
    residual = as_snapshots(residual)
    scan = grid_scan(residual, cfg.gamma)
    values = scan.values
    existing = np.atleast_1d(np.asarray(existing, dtype=float))
    if existing.size:
        grid = scan.omega(np.arange(scan.grid_size))
        near = np.min(wrap_distance(grid[:, None], existing[None, :]), axis=1) < DUPLICATE_TOL
        if near.any():
            values = np.where(near, -np.inf, values)
    k = int(np.argmax(values))
    omega = TWO_PI * k / scan.grid_size
    gains = steering(omega, residual.shape[0]).conj() @ residual
    return SinusoidEstimate(omega, gains)


def _refine_component(est: EstimateSet, l: int, steps: int) -> None:
    """Refine component ``l`` in place against the residual excluding it."""
    n = est.residual.shape[0]
    comp = est.components[l]
    a = steering(comp.omega, n)
    excluded = est.residual + np.outer(a, comp.amplitudes)
    omega, ev, _ = newton_refine(excluded, comp.omega, steps)
    comp.omega = omega
    comp.amplitudes = ev.amplitudes
    est.residual = excluded - np.outer(steering(omega, n), ev.amplitudes)


def cyclic_refine(est: EstimateSet, Y, rounds: int, steps: int = 1) -> EstimateSet:
    """``rounds`` passes of one-at-a-time refinement, in insertion order.

    Each component is added back into the residual, refined with ``steps``
    Newton steps, and its gains reset to the matched-filter gains against that
    exclusion residual. Residual energy never increases. Returns a new set.
    """
    out = est.copy()
    for _ in range(int(rounds)):
        for l in range(len(out.components)):
            _refine_component(out, l, steps)
    out.residual = out.recompute_residual(Y)
    return out


def ls_update(est: EstimateSet, Y) -> EstimateSet:
    """Jointly re-solve all gains by least squares for the current frequencies.

    Raises :class:`IllConditionedError` when the steering matrix condition
    number exceeds ``MAX_CONDITION``.
    """
    Y = as_snapshots(Y)
    if not est.components:
        return EstimateSet([], Y.copy())
    A = steering_matrix(est.frequencies, Y.shape[0])
    cond = np.linalg.cond(A)
    if not cond <= MAX_CONDITION:
        raise IllConditionedError(cond)
    X, *_ = scipy.linalg.lstsq(A, Y)
    comps = [SinusoidEstimate(c.omega, X[i].copy()) for i, c in enumerate(est.components)]
    return EstimateSet(comps, Y - A @ X)


def extract_spectrum(Y, cfg: MnompConfig, n_iterations: Optional[int] = None
                     ) -> tuple[EstimateSet, MnompTrace]:
    """Estimate frequencies and per-snapshot gains of the sinusoids in ``Y``.

    Parameters
    ----------
    Y : array_like, shape (N, T)
        Snapshot matrix (a 1-D array is treated as a single snapshot).
    cfg : MnompConfig
        Threshold and refinement settings.
    n_iterations : int, optional
        Run exactly this many detections, ignoring ``tau`` (used for
        convergence curves). The run still ends early if the residual
        vanishes.

    Returns
    -------
    EstimateSet, MnompTrace
    """
    Y = as_snapshots(Y)
    n = Y.shape[0]
    max_components = n if cfg.max_components is None else cfg.max_components
    est = EstimateSet.empty(Y)
    trace = MnompTrace(initial_energy=est.residual_energy())

    while True:
        stat = stop_statistic(est.residual)
        if n_iterations is not None:
            if len(est) >= n_iterations or stat == 0.0:
                trace.stop_reason = "budget"
                break
        elif not stat > cfg.tau:
            trace.stop_reason = "threshold"
            break
        if len(est) >= max_components:
            trace.stop_reason = "max_components"
            log.warning("stopped at max_components=%d with statistic %.4g > tau=%.4g",
                        max_components, stat, cfg.tau)
            break

        energy_before = est.residual_energy()
        previous = est.residual
        new = identify(previous, cfg, est.frequencies)
        g_detect = float(np.sum(np.abs(new.amplitudes) ** 2))

        # single refinement against Y_r(P_{m-1}); the new atom is projected out
        omega, ev, _ = newton_refine(previous, new.omega, cfg.r_single)
        est.components.append(SinusoidEstimate(omega, ev.amplitudes))
        est.residual = previous - np.outer(steering(omega, n), ev.amplitudes)

        if cfg.r_cyclic:
            est = cyclic_refine(est, Y, cfg.r_cyclic, cfg.r_single)

        fallback = False
        try:
            est = ls_update(est, Y)
        except IllConditionedError as err:
            # keep the refined gains; residual energy is still non-increasing
            log.warning("LS update skipped: %s", err)
            fallback = True
            est.residual = est.recompute_residual(Y)

        trace.records.append(IterationRecord(
            omega_detected=new.omega, omega_refined=est.components[-1].omega,
            energy_before=energy_before, energy_after=est.residual_energy(),
            g_detect=g_detect, stop_statistic=stat, ls_fallback=fallback))

    trace.final_statistic = stop_statistic(est.residual)
    return est, trace


def iteration_bound(Y, tau: float) -> int:
    """Iteration bound ``min(N, floor(||Y||_F^2 / tau))``."""
    Y = as_snapshots(Y)
    return int(min(Y.shape[0], np.floor(np.linalg.norm(Y) ** 2 / tau)))


def bound_violations(trace: MnompTrace, tau: float, Y, rtol: float = 1e-9) -> list[str]:
    """List violations of the per-iteration energy-drop and iteration-count bounds.

    Only meaningful for threshold-stopped runs. ``rtol`` (relative to the
    initial energy) absorbs floating-point noise in the energy bookkeeping.
    """
    problems = []
    slack = rtol * max(trace.initial_energy, 1e-300)
    for i, r in enumerate(trace.records, start=1):
        if r.energy_drop < tau - slack:
            problems.append(f"iteration {i}: energy drop {r.energy_drop:.6g} < tau {tau:.6g}")
    bound = iteration_bound(Y, tau)
    if len(trace.records) > bound:
        problems.append(f"{len(trace.records)} iterations exceed bound {bound}")
    return problems
