"""
Signal model for line spectra observed with multiple snapshots.

The observation is ``Y = A X + Z`` where column ``k`` of ``A`` is the
unit-norm steering vector ``a(w_k) = [1, e^{jw_k}, ..., e^{j(N-1)w_k}] / sqrt(N)``,
``X`` holds one row of complex gains per sinusoid (one entry per snapshot)
and ``Z`` is white circular complex Gaussian noise of variance ``sigma2``.

Frequencies are always stored wrapped to ``[0, 2*pi)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

#: Attempts allowed when drawing separated frequencies by rejection.
REJECTION_BUDGET = 1_000_000


class InvalidDimensionError(ValueError):
    """Raised when a sensor or snapshot count is not a positive integer."""


class InfeasibleSeparationError(ValueError):
    """Raised when a separation constraint cannot be (or was not) met."""


def wrap(omega):
    """Wrap angular frequencies into ``[0, 2*pi)``."""
    w = np.mod(omega, TWO_PI)
    # np.mod returns exactly 2*pi for tiny negative inputs
    w = np.where(w >= TWO_PI, 0.0, w)
    return float(w) if w.ndim == 0 else w


def wrap_distance(w1, w2):
    """Wrap-around distance ``min(|d|, 2*pi - |d|)`` on the frequency circle."""
    d = np.abs(np.mod(np.asarray(w1) - np.asarray(w2), TWO_PI))
    return np.minimum(d, TWO_PI - d)


def as_snapshots(Y) -> np.ndarray:
    """Return ``Y`` as a finite complex ``N x T`` array (1-D input becomes one snapshot)."""
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] < 1 or Y.shape[1] < 1:
        raise InvalidDimensionError(f"snapshot matrix must be N x T with N, T >= 1, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("snapshot matrix contains non-finite entries")
    return Y


def steering(omega: float, n: int) -> np.ndarray:
    """Unit-norm steering vector of length ``n`` at frequency ``omega``.

    Element ``i`` is ``exp(1j * i * omega) / sqrt(n)`` for ``i = 0..n-1``.
    """
    if int(n) != n or n < 1:
        raise InvalidDimensionError(f"sensor count must be a positive integer, got {n}")
    if not np.isfinite(omega):
        raise ValueError(f"frequency must be finite, got {omega}")
    idx = np.arange(int(n))
    return np.exp(1j * idx * wrap(omega)) / np.sqrt(n)


def steering_matrix(omegas: Sequence[float], n: int) -> np.ndarray:
    """Stack steering vectors as the columns of an ``n x K`` matrix."""
    if int(n) != n or n < 1:
        raise InvalidDimensionError(f"sensor count must be a positive integer, got {n}")
    omegas = wrap(np.atleast_1d(np.asarray(omegas, dtype=float)))
    return np.exp(1j * np.outer(np.arange(int(n)), omegas)) / np.sqrt(n)


@dataclass(frozen=True)
class GroundTruth:
    """Frequencies, per-snapshot gains (``K x T``) and noise variance of a mixture."""

    frequencies: np.ndarray
    amplitudes: np.ndarray
    sigma2: float

    def __post_init__(self):
        freqs = wrap(np.atleast_1d(np.asarray(self.frequencies, dtype=float)))
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim == 1:
            amps = amps[None, :] if freqs.size == 1 else amps[:, None]
        if amps.shape[0] != freqs.size:
            raise InvalidDimensionError(
                f"amplitudes have {amps.shape[0]} rows for {freqs.size} frequencies")
        if self.sigma2 < 0:
            raise ValueError("noise variance must be non-negative")
        freqs.setflags(write=False)
        amps.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def n_components(self) -> int:
        return self.frequencies.size

    @property
    def n_snapshots(self) -> int:
        return self.amplitudes.shape[1]

    def snr_db(self) -> np.ndarray:
        """Per-component SNR ``10 log10(||x_k||^2 / (sigma2 T))``."""
        energy = np.sum(np.abs(self.amplitudes) ** 2, axis=1)
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(energy / (self.sigma2 * self.n_snapshots))

    def to_dict(self) -> dict:
        return {
            "frequencies": self.frequencies.tolist(),
            "amplitudes": [[[z.real, z.imag] for z in row] for row in self.amplitudes],
            "sigma2": self.sigma2,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        amps = np.asarray(d["amplitudes"], dtype=float)
        if amps.size == 0:
            amps = np.zeros((0, 1), dtype=complex)
        else:
            amps = amps[..., 0] + 1j * amps[..., 1]
        return cls(np.asarray(d["frequencies"], dtype=float), amps, d["sigma2"])

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        return cls.from_dict(json.loads(text))


def noiseless(truth: GroundTruth, n: int) -> np.ndarray:
    """``A X`` for the mixture, without noise."""
    return steering_matrix(truth.frequencies, n) @ truth.amplitudes


def synthesize(truth: GroundTruth, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``Y = A X + Z`` for ``n`` sensors.

    Each noise entry is circular complex Gaussian with variance ``truth.sigma2``
    (real and imaginary parts each ``sigma2 / 2``). With ``sigma2 == 0`` the
    result is deterministic and ``rng`` is not touched.
    """
    Y = noiseless(truth, n)
    if truth.sigma2 > 0:
        rng = np.random.default_rng() if rng is None else rng
        scale = np.sqrt(truth.sigma2 / 2.0)
        Y = Y + scale * (rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape))
    return Y


def draw_separated_frequencies(k: int, delta_min: float, rng: np.random.Generator,
                               method: str = "spacing",
                               budget: int = REJECTION_BUDGET) -> np.ndarray:
    """Draw ``k`` uniform frequencies whose pairwise wrap distance is at least ``delta_min``.

    The law is that of ``k`` i.i.d. uniform points conditioned on the
    separation. ``method="spacing"`` samples it exactly: circular gaps are
    ``delta_min`` plus a flat-Dirichlet split of the slack ``2*pi - k*delta_min``,
    with a uniform rotation and random labelling. ``method="rejection"``
    redraws whole sets and gives up after ``budget`` attempts; its acceptance
    rate ``(1 - k*delta_min/(2*pi))**(k-1)`` makes it unusable for dense
    mixtures.

    Raises :class:`InfeasibleSeparationError` when ``k * delta_min >= 2*pi``
    (``k >= 2``) or the rejection budget is exhausted.
    """
    if k < 0:
        raise InvalidDimensionError("k must be non-negative")
    if k * delta_min > TWO_PI:
        raise InfeasibleSeparationError(
            f"cannot place {k} frequencies {delta_min:.4g} rad apart on the circle")
    if k <= 1 or delta_min <= 0:
        return rng.uniform(0.0, TWO_PI, size=k)
    if method == "spacing":
        gaps = delta_min + (TWO_PI - k * delta_min) * rng.dirichlet(np.ones(k))
        w = rng.uniform(0.0, TWO_PI) + np.concatenate(([0.0], np.cumsum(gaps[:-1])))
        return rng.permutation(wrap(w))
    if method != "rejection":
        raise ValueError(f"unknown method {method!r}")
    for _ in range(budget):
        w = np.sort(rng.uniform(0.0, TWO_PI, size=k))
        gaps = np.diff(np.append(w, w[0] + TWO_PI))
        if gaps.min() >= delta_min:
            return rng.permutation(w)
    raise InfeasibleSeparationError(
        f"rejection budget of {budget} attempts exceeded drawing {k} frequencies "
        f"with separation {delta_min:.4g} rad")


def scale_to_snr(amplitudes, target_snr_db, sigma2: float) -> np.ndarray:
    """Rescale each row of ``amplitudes`` so that ``10 log10(||x_k||^2/(sigma2 T))`` hits the target."""
    X = np.array(amplitudes, dtype=complex, ndmin=2)
    T = X.shape[1]
    energy = np.sum(np.abs(X) ** 2, axis=1)
    if np.any(energy == 0):
        raise ValueError("cannot scale an all-zero amplitude row to a target SNR")
    target = sigma2 * T * 10.0 ** (np.broadcast_to(np.asarray(target_snr_db, float), energy.shape) / 10.0)
    return X * np.sqrt(target / energy)[:, None]


def random_ground_truth(k: int, t: int, n: int, snr_db, delta_min_bins: float,
                        rng: np.random.Generator, sigma2: float = 1.0,
                        frequencies=None) -> GroundTruth:
    """Random constant-modulus mixture at a fixed per-component SNR.

    Gains have unit modulus and i.i.d. uniform phase before SNR scaling.
    ``delta_min_bins`` is the minimum separation in DFT bins ``2*pi/n``.
    """
    if frequencies is None:
        frequencies = draw_separated_frequencies(k, delta_min_bins * TWO_PI / n, rng)
    phases = rng.uniform(0.0, TWO_PI, size=(k, t))
    X = scale_to_snr(np.exp(1j * phases), snr_db, sigma2) if k else np.zeros((0, t), complex)
    return GroundTruth(frequencies, X, sigma2)


def doa_to_omega(phi_deg):
    """Map a half-wavelength ULA arrival angle (degrees) to ``pi*sin(phi)`` wrapped to ``[0, 2*pi)``."""
    phi = np.asarray(phi_deg, dtype=float)
    if np.any(np.abs(phi) >= 90.0):
        raise ValueError(f"arrival angles must satisfy |phi| < 90 deg, got {phi_deg}")
    return wrap(np.pi * np.sin(np.deg2rad(phi)))


def omega_to_doa(omega):
    """Inverse of :func:`doa_to_omega`; ``omega`` is read in ``(-pi, pi]``."""
    w = np.mod(np.asarray(omega, dtype=float), TWO_PI)
    w = np.where(w > np.pi, w - TWO_PI, w)
    out = np.rad2deg(np.arcsin(np.clip(w / np.pi, -1.0, 1.0)))
    return float(out) if out.ndim == 0 else out
