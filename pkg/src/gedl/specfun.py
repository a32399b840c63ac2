"""Scalar special functions: log-gamma, digamma, trigamma, log multivariate Beta.

All functions accept scalars or numpy arrays and are evaluated elementwise.
Arguments are shifted upward with the standard recurrences until they reach
``_SHIFT`` and then evaluated with the asymptotic (Stirling-type) series.
Nonpositive arguments raise :class:`DomainError`; poles are never continued.
"""

import math

import numpy as np

__all__ = [
    "DomainError",
    "lgamma",
    "digamma",
    "trigamma",
    "log_multivariate_beta",
]

_SHIFT = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# B_{2n} / (2n (2n-1)) for n = 1..6, coefficients of x^-(2n-1) in ln Gamma
_LGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
)
# B_{2n} / (2n) for n = 1..7, coefficients of x^-2n in psi
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# B_{2n} for n = 1..7, coefficients of x^-(2n+1) in psi'
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


class DomainError(ValueError):
    """Raised when a special function is evaluated outside its domain."""


def _as_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{name} requires finite x > 0")
    return arr


def _result(arr):
    return float(arr) if arr.ndim == 0 else arr


def _poly(coeffs, t):
    # Horner evaluation of sum_i coeffs[i] * t**i
    acc = np.zeros_like(t)
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


def lgamma(x):
    """Natural log of the gamma function for x > 0."""
    x = _as_positive(x, "lgamma")
    z = x.copy()
    log_prod = np.zeros_like(z)
    # ln Gamma(x) = ln Gamma(x + n) - ln(x (x+1) ... (x+n-1))
    while True:
        small = z < _SHIFT
        if not small.any():
            break
        log_prod = log_prod + np.where(small, np.log(np.where(small, z, 1.0)), 0.0)
        z = np.where(small, z + 1.0, z)
    inv = 1.0 / z
    series = inv * _poly(_LGAMMA_SERIES, inv * inv)
    out = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series - log_prod
    return _result(out)


def digamma(x):
    """Digamma function psi(x) = d/dx ln Gamma(x) for x > 0."""
    x = _as_positive(x, "digamma")
    z = x.copy()
    acc = np.zeros_like(z)
    while True:
        small = z < _SHIFT
        if not small.any():
            break
        acc = acc + np.where(small, 1.0 / np.where(small, z, 1.0), 0.0)
        z = np.where(small, z + 1.0, z)
    inv2 = 1.0 / (z * z)
    series = inv2 * _poly(_DIGAMMA_SERIES, inv2)
    out = np.log(z) - 0.5 / z - series - acc
    return _result(out)


def trigamma(x):
    """Trigamma function psi'(x) for x > 0."""
    x = _as_positive(x, "trigamma")
    z = x.copy()
    acc = np.zeros_like(z)
    while True:
        small = z < _SHIFT
        if not small.any():
            break
        zz = np.where(small, z, 1.0)
        acc = acc + np.where(small, 1.0 / (zz * zz), 0.0)
        z = np.where(small, z + 1.0, z)
    inv = 1.0 / z
    inv2 = inv * inv
    series = inv * inv2 * _poly(_TRIGAMMA_SERIES, inv2)
    out = inv + 0.5 * inv2 + series + acc
    return _result(out)


def log_multivariate_beta(alpha):
    """ln B(alpha) = sum_k ln Gamma(alpha_k) - ln Gamma(sum_k alpha_k).

    ``alpha`` has shape ``(..., K)`` with ``K >= 2``; the reduction is over
    the last axis.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim == 0 or alpha.shape[-1] < 2:
        raise DomainError("log_multivariate_beta needs at least two components")
    if np.any(alpha <= 0.0) or not np.all(np.isfinite(alpha)):
        raise DomainError("log_multivariate_beta requires finite positive components")
    out = np.sum(lgamma(alpha), axis=-1) - lgamma(np.sum(alpha, axis=-1))
    return _result(np.asarray(out))
