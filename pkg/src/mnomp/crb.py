"""
Cramer-Rao bound for frequencies of a multi-snapshot line spectrum.

Parameters are ``kappa = [theta_1..theta_K, vec(G), vec(Phi)]`` where
``x_kt = g_kt exp(j phi_kt)`` and both ``vec`` orderings are snapshot-major
(all ``K`` entries of snapshot 1 first). The noiseless sample is taken in the
*unnormalized* convention

    Z_nt = sum_k g_kt exp(j((n-1) theta_k + phi_kt)),

i.e. without the ``1/sqrt(N)`` of the steering vector. Use
:func:`from_normalized` to convert gains of the normalized model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import GroundTruth

#: FIM condition number above which inversion is refused.
MAX_FIM_CONDITION = 1e12


class SingularFisherError(np.linalg.LinAlgError):
    def __init__(self, condition: float):
        super().__init__(f"Fisher information matrix is singular or ill-conditioned "
                         f"(condition estimate {condition:.3g})")
        self.condition = condition


@dataclass(frozen=True)
class CrbInput:
    """Frequencies ``theta`` (K), magnitudes ``g`` and phases ``phi`` (both K x T)."""

    theta: np.ndarray
    g: np.ndarray
    phi: np.ndarray
    sigma2: float

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        g = np.asarray(self.g, dtype=float).reshape(theta.size, -1)
        phi = np.asarray(self.phi, dtype=float).reshape(theta.size, -1)
        if g.shape != phi.shape:
            raise ValueError("g and phi must have the same shape")
        if np.any(g < 0):
            raise ValueError("magnitudes must be non-negative")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "phi", phi)

    @property
    def shape(self) -> tuple[int, int]:
        return self.g.shape


def from_normalized(truth: GroundTruth, n: int) -> CrbInput:
    """CRB input for a mixture expressed with unit-norm steering vectors.

    ``a(w) x = (1/sqrt(n)) [e^{j(n-1)w}]_n x``, so the unnormalized magnitude is
    ``|x| / sqrt(n)``.
    """
    X = truth.amplitudes
    return CrbInput(truth.frequencies, np.abs(X) / np.sqrt(n), np.angle(X), truth.sigma2)


def partials(inp: CrbInput, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form partials of ``Re Z`` and ``Im Z``, each of shape ``(N, T, P)``.

    ``P = K + 2KT`` follows the parameter ordering of the module docstring.
    """
    K, T = inp.shape
    m = np.arange(n)[:, None, None]                      # (n-1) in 1-based indexing
    arg = m * inp.theta[None, None, :] + inp.phi.T[None, :, :]   # (N, T, K)
    c, s = np.cos(arg), np.sin(arg)
    g = inp.g.T[None, :, :]
    P = K + 2 * K * T
    dre = np.zeros((n, T, P))
    dim = np.zeros((n, T, P))
    dre[:, :, :K] = -m * g * s
    dim[:, :, :K] = m * g * c
    for t in range(T):
        gcols = slice(K + t * K, K + (t + 1) * K)
        pcols = slice(K + K * T + t * K, K + K * T + (t + 1) * K)
        dre[:, t, gcols] = c[:, t, :]
        dim[:, t, gcols] = s[:, t, :]
        dre[:, t, pcols] = -g[:, t, :] * s[:, t, :]
        dim[:, t, pcols] = g[:, t, :] * c[:, t, :]
    return dre, dim


def noiseless_samples(inp: CrbInput, n: int) -> np.ndarray:
    """``Z`` (N x T) in the unnormalized convention."""
    m = np.arange(n)[:, None, None]
    arg = m * inp.theta[None, None, :] + inp.phi.T[None, :, :]
    return np.sum(inp.g.T[None, :, :] * np.exp(1j * arg), axis=2)


def fim(inp: CrbInput, n: int) -> np.ndarray:
    """Fisher information ``(2/sigma2) sum_{n,t} (dRe dRe^T + dIm dIm^T)``."""
    dre, dim = partials(inp, n)
    P = dre.shape[2]
    J = np.concatenate([dre.reshape(-1, P), dim.reshape(-1, P)], axis=0)
    F = (2.0 / inp.sigma2) * (J.T @ J)
    return 0.5 * (F + F.T)


def crb_matrix(inp: CrbInput, n: int) -> np.ndarray:
    """Inverse FIM. Raises :class:`SingularFisherError` when it is ill-conditioned."""
    F = fim(inp, n)
    # symmetric scaling makes the condition estimate insensitive to parameter units
    d = np.sqrt(np.diag(F))
    if np.any(d == 0):
        raise SingularFisherError(np.inf)
    Fs = F / np.outer(d, d)
    cond = np.linalg.cond(Fs)
    if not cond < MAX_FIM_CONDITION:
        raise SingularFisherError(cond)
    try:
        L = np.linalg.cholesky(Fs)
        Linv = np.linalg.inv(L)
        inv_s = Linv.T @ Linv
    except np.linalg.LinAlgError:
        inv_s = np.linalg.pinv(Fs, hermitian=True)
    return inv_s / np.outer(d, d)


def crb_frequencies(inp: CrbInput, n: int) -> np.ndarray:
    """Per-frequency CRB (variance, rad^2): diagonal of the top-left ``K x K`` block."""
    K = inp.theta.size
    return np.diag(crb_matrix(inp, n))[:K].copy()


def crb_single_tone(g: float, sigma2: float, n: int) -> float:
    """Classical single-snapshot bound ``6 sigma2 / (g^2 N (N^2 - 1))``."""
    return 6.0 * sigma2 / (g ** 2 * n * (n ** 2 - 1))
