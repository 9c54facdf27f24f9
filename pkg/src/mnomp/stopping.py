"""
Detection statistics behind the stopping rule.

Under white noise ``CN(0, sigma2)`` the statistic ``R_n = sum_t |a(w_n)^H z_t|^2``
at each of the ``N`` DFT frequencies is chi-squared with ``2T`` degrees of
freedom and per-component variance ``sigma2/2``, independently across bins.
The stopping threshold ``tau`` is chosen so that the maximum over bins
exceeds ``tau`` with a nominal overestimation probability ``p_oe``.

A sinusoid is missed when its nearest-bin statistic (noncentral
chi-squared) stays below ``tau``; this probability involves the generalized
Marcum Q function.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma

import numpy as np
from scipy.special import ive

#: Scalloping factor averaged over a DFT bin, as used for the miss model.
DEFAULT_ALPHA = 0.88


class ConvergenceError(RuntimeError):
    """Raised when an iterative special-function solve fails to converge."""


def _poisson_tail(order: int, y: float) -> tuple[float, float]:
    """Return ``(P, Q)``: regularized lower/upper incomplete gamma at integer order.

    ``Q = exp(-y) sum_{k<order} y^k/k!`` and ``P = 1 - Q``. Whichever of the two
    is small is summed directly so neither suffers cancellation.
    """
    if y <= 0:
        return 0.0, 1.0
    logy = np.log(y)
    if y < order:
        # P = exp(-y) sum_{k>=order} y^k/k!, terms shrink once k > y
        k = order
        log_terms = []
        while True:
            lt = -y + k * logy - lgamma(k + 1)
            log_terms.append(lt)
            if k > y and lt < log_terms[0] - 40.0:
                break
            k += 1
        p = float(np.exp(np.logaddexp.reduce(log_terms)))
        return p, 1.0 - p
    k = np.arange(order)
    log_terms = -y + k * logy - np.array([lgamma(i + 1) for i in k])
    q = float(np.exp(np.logaddexp.reduce(log_terms)))
    return 1.0 - q, q


def chi2_cdf_even(x: float, dof_half: int, sigma0_sq: float = 1.0) -> float:
    """CDF of a chi-squared variable with ``2*dof_half`` degrees of freedom.

    Each underlying Gaussian has variance ``sigma0_sq``, so the CDF is
    ``1 - exp(-x/(2 sigma0_sq)) sum_{k<T} (x/(2 sigma0_sq))^k / k!``;
    zero for ``x <= 0``.
    """
    return _poisson_tail(int(dof_half), x / (2.0 * sigma0_sq))[0]


def chi2_sf_even(x: float, dof_half: int, sigma0_sq: float = 1.0) -> float:
    """Upper tail ``1 - chi2_cdf_even``, accurate when it is tiny."""
    return _poisson_tail(int(dof_half), x / (2.0 * sigma0_sq))[1]


@dataclass(frozen=True)
class ThresholdSpec:
    p_oe: float
    n: int
    t: int
    sigma2: float
    tau: float


def _bin_exceedance(p_oe: float, n: int) -> float:
    """Per-bin tail probability ``1 - (1 - p_oe)^(1/n)``, without cancellation."""
    return float(-np.expm1(np.log1p(-p_oe) / n))


def threshold_from_poe(p_oe: float, n: int, t: int, sigma2: float,
                       max_iter: int = 200) -> ThresholdSpec:
    """Energy threshold giving overestimation probability ``p_oe`` for white noise.

    Solves ``F(2 tau / sigma2) = (1 - p_oe)^(1/n)`` for the even-order
    chi-squared CDF ``F``. The equation is solved on the upper tail
    ``Q(T, tau/sigma2) = 1 - (1 - p_oe)^(1/n)`` (bracketing by doubling, then
    bisection with Newton polishing on ``log Q``) because the CDF target sits
    too close to one for a relative tolerance of 1e-12.
    """
    if not 0.0 < p_oe < 1.0:
        raise ValueError(f"p_oe must lie in (0, 1), got {p_oe}")
    if n < 1 or t < 1:
        raise ValueError("n and t must be positive")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    t = int(t)
    q_target = _bin_exceedance(p_oe, n)
    log_target = np.log(q_target)

    def resid(y):
        return np.log(_poisson_tail(t, y)[1]) - log_target

    lo, hi = 0.0, max(1.0, float(t))
    while resid(hi) > 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e8:
            raise ConvergenceError("could not bracket the threshold")
    y = 0.5 * (lo + hi)
    for _ in range(max_iter):
        r = resid(y)
        if r > 0:
            lo = y
        else:
            hi = y
        # d/dy log Q = -pdf/Q with pdf the Gamma(T, 1) density
        q = _poisson_tail(t, y)[1]
        log_pdf = (t - 1) * np.log(y) - y - lgamma(t) if y > 0 else -np.inf
        slope = -np.exp(log_pdf) / q
        y_new = y - r / slope if slope < 0 else 0.5 * (lo + hi)
        if not lo < y_new < hi:
            y_new = 0.5 * (lo + hi)
        if abs(y_new - y) <= 1e-15 * max(y, 1.0) or hi - lo <= 1e-15 * hi:
            y = y_new
            break
        y = y_new
    else:
        raise ConvergenceError(f"threshold solve did not converge in {max_iter} iterations")
    return ThresholdSpec(float(p_oe), int(n), t, float(sigma2), float(y * sigma2))


def _marcum_parts(m: int, a: float, b: float, tol: float = 1e-17) -> tuple[float, float]:
    """Return ``(Q_m(a, b), 1 - Q_m(a, b))`` from the Bessel series.

    For ``a < b`` sums ``Q = exp(-(a^2+b^2)/2) sum_{k>=1-m} (a/b)^k I_k(ab)``;
    otherwise the complement ``1 - Q = exp(-(a^2+b^2)/2) sum_{k>=m} (b/a)^k I_k(ab)``.
    Exponentially scaled Bessel functions keep the terms finite:
    ``exp(-(a^2+b^2)/2) I_k(ab) = exp(-(a-b)^2/2) ive(k, ab)``.
    """
    if b <= 0:
        return 1.0, 0.0
    if a <= 0:
        p, q = _poisson_tail(m, b * b / 2.0)
        return q, p
    z = a * b
    log_env = -0.5 * (a - b) ** 2
    if a < b:
        ratio, k0 = a / b, 1 - m
    else:
        ratio, k0 = b / a, m
    log_ratio = np.log(ratio)
    total = 0.0
    k = k0
    chunk = 64
    while True:
        ks = np.arange(k, k + chunk)
        with np.errstate(divide="ignore"):
            log_terms = ks * log_ratio + np.log(ive(np.abs(ks), z)) + log_env
        terms = np.exp(log_terms)
        total += float(np.sum(terms))
        k += chunk
        # terms decrease monotonically once k >= 0
        if ks[-1] >= 0 and terms[-1] <= tol * max(total, 1e-300):
            break
        if k - k0 > 100_000:
            raise ConvergenceError("Marcum Q series did not converge")
    total = min(total, 1.0)
    if a < b:
        return total, 1.0 - total
    return 1.0 - total, total


def marcum_q(order: int, a: float, b: float) -> float:
    """Generalized Marcum Q function ``Q_M(a, b)`` for integer order ``M >= 1``."""
    if int(order) != order or order < 1:
        raise ValueError(f"order must be a positive integer, got {order}")
    if a < 0 or b < 0:
        raise ValueError("a and b must be non-negative")
    return _marcum_parts(int(order), float(a), float(b))[0]


def p_miss(snr_db: float, t: int, tau: float, sigma2: float, alpha: float = DEFAULT_ALPHA) -> float:
    """Probability that a lone sinusoid's nearest-bin statistic stays below ``tau``.

    ``1 - Q_T(alpha sqrt(2 T SNR), sqrt(2 tau / sigma2))`` with SNR linear.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if tau < 0 or not sigma2 > 0:
        raise ValueError("tau must be >= 0 and sigma2 > 0")
    a = alpha * np.sqrt(2.0 * t * 10.0 ** (snr_db / 10.0))
    b = np.sqrt(2.0 * tau / sigma2)
    return float(np.clip(_marcum_parts(int(t), float(a), float(b))[1], 0.0, 1.0))


def alpha_factor(omega, omega_d, n: int):
    """Dirichlet-kernel gain ``sin(N d/2) / (N sin(d/2))`` with ``d = omega - omega_d``.

    Equals one at ``d = 0``.
    """
    d = np.asarray(omega, dtype=float) - np.asarray(omega_d, dtype=float)
    half = d / 2.0
    den = n * np.sin(half)
    small = np.abs(den) < 1e-300
    safe = np.where(small, 1.0, den)
    out = np.where(small, 1.0, np.sin(n * half) / safe)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MissModel:
    """Inputs of :func:`p_miss` bundled for reuse across sweeps."""

    snr_db: float
    t: int
    tau: float
    sigma2: float
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")

    @property
    def p_miss(self) -> float:
        return p_miss(self.snr_db, self.t, self.tau, self.sigma2, self.alpha)
