"""Dirichlet algebra: moments, expectations, KL divergence, sampling and
conjugate / tempered updates.

Functions take concentration arrays of shape ``(..., K)`` and reduce over the
last axis, so a batch of Dirichlets is just a 2-D array.  ``DirichletParams``
wraps a single validated parameter vector for callers that want an object.
"""

from dataclasses import dataclass

import numpy as np

from .specfun import digamma, log_multivariate_beta

__all__ = [
    "DirichletParams",
    "as_alpha",
    "strength",
    "mean",
    "variance",
    "expected_log",
    "expected_pi_log_pi",
    "kl_divergence",
    "sample",
    "log_density",
    "conjugate_update",
    "tempered_update",
]


def as_alpha(alpha):
    """Validate and return a float concentration array of shape (..., K)."""
    if isinstance(alpha, DirichletParams):
        return alpha.alpha
    a = np.asarray(alpha, dtype=float)
    if a.ndim == 0 or a.shape[-1] < 2:
        raise ValueError("a Dirichlet needs at least two concentration components")
    if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
        raise ValueError("concentration parameters must be finite and > 0")
    return a


def _check_index(a, k):
    K = a.shape[-1]
    if not 0 <= k < K:
        raise IndexError(f"class index {k} out of range for K={K}")


def _check_counts(a, counts):
    n = np.asarray(counts, dtype=float)
    if n.shape[-1] != a.shape[-1]:
        raise ValueError(f"dimension mismatch: K={a.shape[-1]} vs counts of length {n.shape[-1]}")
    if np.any(n < 0.0) or not np.all(np.isfinite(n)):
        raise ValueError("counts must be finite and nonnegative")
    return n


@dataclass(frozen=True)
class DirichletParams:
    """A Dirichlet distribution over the (K-1)-simplex."""

    alpha: np.ndarray

    def __post_init__(self):
        a = as_alpha(self.alpha)
        if a.ndim != 1:
            raise ValueError("DirichletParams holds a single parameter vector")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @property
    def K(self):
        return self.alpha.shape[0]

    def strength(self):
        return float(np.sum(self.alpha))

    def mean(self):
        return mean(self.alpha)

    def variance(self, k):
        return variance(self.alpha, k)

    def expected_log(self, k):
        return expected_log(self.alpha, k)

    def expected_pi_log_pi(self, k):
        return expected_pi_log_pi(self.alpha, k)

    def kl_divergence(self, other):
        return kl_divergence(self, other)

    def sample(self, rng, size=None):
        return sample(self.alpha, rng, size)

    def conjugate_update(self, counts):
        return DirichletParams(conjugate_update(self.alpha, counts))

    def tempered_update(self, label, tau):
        return DirichletParams(tempered_update(self.alpha, label, tau))

    def __eq__(self, other):
        if not isinstance(other, DirichletParams):
            return NotImplemented
        return np.array_equal(self.alpha, other.alpha)

    def __hash__(self):
        return hash(self.alpha.tobytes())


def strength(alpha):
    """S = sum_k alpha_k."""
    return np.sum(as_alpha(alpha), axis=-1)


def mean(alpha):
    """E[pi] = alpha / S."""
    a = as_alpha(alpha)
    return a / np.sum(a, axis=-1, keepdims=True)


def variance(alpha, k=None):
    """Var[pi_k] = alpha_k (S - alpha_k) / (S^2 (S + 1)).

    With ``k=None`` the full vector of marginal variances is returned.
    """
    a = as_alpha(alpha)
    S = np.sum(a, axis=-1, keepdims=True)
    var = a * (S - a) / (S * S * (S + 1.0))
    if k is None:
        return var
    _check_index(a, k)
    return var[..., k]


def expected_log(alpha, k=None):
    """E[ln pi_k] = psi(alpha_k) - psi(S)."""
    a = as_alpha(alpha)
    S = np.sum(a, axis=-1, keepdims=True)
    out = digamma(a) - digamma(S)
    if k is None:
        return out
    _check_index(a, k)
    return out[..., k]


def expected_pi_log_pi(alpha, k=None):
    """E[pi_k ln pi_k] = (alpha_k / S) (psi(alpha_k + 1) - psi(S + 1))."""
    a = as_alpha(alpha)
    S = np.sum(a, axis=-1, keepdims=True)
    out = (a / S) * (digamma(a + 1.0) - digamma(S + 1.0))
    if k is None:
        return out
    _check_index(a, k)
    return out[..., k]


def kl_divergence(q, p):
    """KL(Dir(q) || Dir(p)) in nats.

    ln B(p)/B(q) + sum_k (q_k - p_k) (psi(q_k) - psi(S_q)).
    """
    a = as_alpha(q)
    a0 = as_alpha(p)
    if a.shape[-1] != a0.shape[-1]:
        raise ValueError(f"dimension mismatch: K={a.shape[-1]} vs K={a0.shape[-1]}")
    S = np.sum(a, axis=-1, keepdims=True)
    elog = digamma(a) - digamma(S)
    out = (
        log_multivariate_beta(a0)
        - log_multivariate_beta(a)
        + np.sum((a - a0) * elog, axis=-1)
    )
    return float(out) if np.ndim(out) == 0 else out


def log_density(alpha, pi):
    """Log density of Dir(alpha) at points ``pi`` on the simplex."""
    a = as_alpha(alpha)
    pi = np.asarray(pi, dtype=float)
    return np.sum((a - 1.0) * np.log(pi), axis=-1) - log_multivariate_beta(a)


def _log_gamma_variates(shape_param, rng, size):
    # Gamma(a) = Gamma(a + 1) * U**(1/a); kept in log space so that small
    # shapes do not underflow to an all-zero row before normalisation.
    g = rng.standard_gamma(shape_param + 1.0, size=size)
    u = rng.random(size=size)
    return np.log(g) + np.log(u) / shape_param


def sample(alpha, rng, size=None):
    """Draw from Dir(alpha) by normalising independent Gamma(alpha_k, 1) draws.

    Parameters
    ----------
    alpha : array_like, shape (K,)
    rng : numpy.random.Generator
    size : int or tuple, optional
        Leading batch shape; the result has shape ``size + (K,)``.
    """
    a = as_alpha(alpha)
    if a.ndim != 1:
        raise ValueError("sample() takes a single parameter vector")
    if size is None:
        batch = ()
    elif np.isscalar(size):
        batch = (int(size),)
    else:
        batch = tuple(size)
    logg = _log_gamma_variates(a, rng, batch + a.shape)
    logg -= np.max(logg, axis=-1, keepdims=True)
    g = np.exp(logg)
    return g / np.sum(g, axis=-1, keepdims=True)


def conjugate_update(prior, counts):
    """Posterior concentration alpha_0 + n under a categorical likelihood."""
    a0 = as_alpha(prior)
    n = _check_counts(a0, counts)
    return a0 + n


def tempered_update(prior, label, tau):
    """Tempered posterior alpha_0 + tau * y (likelihood raised to power tau)."""
    if not tau > 0.0 or not np.isfinite(tau):
        raise ValueError("tau must be finite and > 0")
    a0 = as_alpha(prior)
    y = _check_counts(a0, label)
    return a0 + tau * y
