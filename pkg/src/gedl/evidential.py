"""Evidential layer: evidence -> Dirichlet map, subjective opinions, loss
closed forms, prior/evidence-strength schedules and the variant presets.

Losses are vectorised: ``alpha`` may be ``(K,)`` with an integer label or
``(N, K)`` with an integer label array, and per-sample values are returned.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import dirichlet
from .specfun import digamma

__all__ = [
    "SubjectiveOpinion",
    "EvidenceDecomposition",
    "VariantConfig",
    "PRESETS",
    "get_preset",
    "uniform_base_rate",
    "one_hot",
    "evidence_to_alpha",
    "alpha_to_opinion",
    "predictive_probability",
    "decompose_evidence",
    "expected_nll",
    "expected_mse",
    "masked_alpha",
    "variational_loss",
    "loss_terms",
    "gedl_prior_strength",
    "gedl_tau_schedule",
    "annealed_kl_weight",
    "legacy_tau_anneal",
    "red_tau_weight",
    "prior_strength",
    "kl_weight",
    "tau_from_weight",
    "kl_weight_from_tau",
]


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def uniform_base_rate(K):
    return np.full(K, 1.0 / K)


def _check_base_rate(a):
    a = np.asarray(a, dtype=float)
    if np.any(a < 0.0) or abs(float(np.sum(a)) - 1.0) > 1e-12:
        raise ValueError("base rate must be nonnegative and sum to 1")
    return a


def one_hot(y, K):
    """One-hot encode integer labels (scalar or array) into ``(..., K)``."""
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= K):
        raise IndexError(f"label out of range for K={K}")
    return np.eye(K)[y]


def _check_one_hot(y, K):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != K:
        raise ValueError(f"dimension mismatch: K={K} vs label of length {y.shape[-1]}")
    if not (np.all((y == 0.0) | (y == 1.0)) and np.all(np.sum(y, axis=-1) == 1.0)):
        raise ValueError("label must be one-hot")
    return y


def _label_index(y, K):
    y = np.asarray(y)
    if not np.issubdtype(y.dtype, np.integer):
        raise TypeError("class label must be an integer index")
    if np.any(y < 0) or np.any(y >= K):
        raise IndexError(f"class index out of range for K={K}")
    return y


# --- opinions -----------------------------------------------------------------


@dataclass(frozen=True)
class SubjectiveOpinion:
    """Belief masses ``b``, uncertainty mass ``u``, base rate ``a``, prior strength ``W``.

    ``b`` may be batched as ``(N, K)`` with ``u`` and ``W`` of shape ``(N,)``.
    """

    b: np.ndarray
    u: np.ndarray
    a: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        total = np.sum(self.b, axis=-1) + self.u
        if np.any(np.asarray(self.b) < 0.0) or np.any(np.asarray(self.u) < 0.0):
            raise ValueError("belief and uncertainty masses must be nonnegative")
        if np.any(np.abs(total - 1.0) > 1e-10):
            raise ValueError("belief masses and uncertainty must sum to 1")


def evidence_to_alpha(e, W, a):
    """alpha = e + W * a.

    ``W`` may be a scalar or a per-sample array matching the batch shape.
    """
    e = np.asarray(e, dtype=float)
    a = _check_base_rate(a)
    W = np.asarray(W, dtype=float)
    if np.any(e < 0.0) or not np.all(np.isfinite(e)):
        raise ValueError("evidence must be finite and nonnegative")
    if np.any(W <= 0.0):
        raise ValueError("prior strength W must be > 0")
    alpha = e + W[..., None] * a
    if np.any(alpha <= 0.0):
        raise ValueError("zero base-rate component with zero evidence gives alpha_k = 0")
    return alpha


def alpha_to_opinion(alpha, W, a):
    """Split a Dirichlet built as e + W a into belief masses and uncertainty."""
    alpha = dirichlet.as_alpha(alpha)
    a = _check_base_rate(a)
    W = np.asarray(W, dtype=float)
    e = alpha - W[..., None] * a
    # round-off from the e + W a construction is tolerated, real deficits are not
    if np.any(e < -1e-12 * np.maximum(1.0, alpha)):
        raise ValueError("alpha_k < W a_k implies negative evidence")
    e = np.maximum(e, 0.0)
    S = np.sum(alpha, axis=-1)
    return SubjectiveOpinion(b=e / S[..., None], u=W / S, a=a, W=W)


def predictive_probability(op):
    """p_k = b_k + u a_k, the Dirichlet predictive mean."""
    return op.b + np.asarray(op.u)[..., None] * op.a


@dataclass(frozen=True)
class EvidenceDecomposition:
    """Evidence split into total strength ``E`` and simplex direction ``r``."""

    E: np.ndarray
    r: np.ndarray

    def reconstruct(self):
        return np.asarray(self.E)[..., None] * self.r


def decompose_evidence(e):
    """E = ||e||_1, r = e / E.  All-zero evidence maps to E = 0, r uniform."""
    e = np.asarray(e, dtype=float)
    if np.any(e < 0.0):
        raise ValueError("evidence must be nonnegative")
    E = np.sum(e, axis=-1)
    K = e.shape[-1]
    zero = E == 0.0
    safe = np.where(zero, 1.0, E)
    r = np.where(zero[..., None], 1.0 / K, e / safe[..., None])
    return EvidenceDecomposition(E=E, r=r)


# --- loss closed forms --------------------------------------------------------


def expected_nll(alpha, y):
    """E_pi[-ln pi_y] = psi(S) - psi(alpha_y)."""
    a = dirichlet.as_alpha(alpha)
    y = _label_index(y, a.shape[-1])
    a_y = np.take_along_axis(a, np.expand_dims(y, -1), axis=-1)[..., 0]
    return _out(digamma(np.sum(a, axis=-1)) - digamma(a_y))


def expected_mse(alpha, y):
    """E_pi ||y - pi||^2 = sum_k (y_k - E pi_k)^2 + Var pi_k, for one-hot ``y``."""
    a = dirichlet.as_alpha(alpha)
    y = _check_one_hot(y, a.shape[-1])
    p = dirichlet.mean(a)
    return _out(np.sum((y - p) ** 2 + dirichlet.variance(a), axis=-1))


def masked_alpha(alpha, y):
    """alpha~ = y + (1 - y) * alpha: true-class concentration reset to 1."""
    a = dirichlet.as_alpha(alpha)
    y = _check_one_hot(y, a.shape[-1])
    return y + (1.0 - y) * a


def tau_from_weight(weight):
    """Evidence strength tau = 1 / lambda, with lambda = 0 mapped to inf."""
    w = np.asarray(weight, dtype=float)
    with np.errstate(divide="ignore"):
        tau = np.where(w > 0.0, 1.0 / np.where(w > 0.0, w, 1.0), np.inf)
    return float(tau) if tau.ndim == 0 else tau


def kl_weight_from_tau(tau):
    t = np.asarray(tau, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("tau must be > 0")
    # tau = inf means the KL term is skipped, never divided through
    return np.where(np.isinf(t), 0.0, 1.0 / np.where(np.isinf(t), 1.0, t))


def loss_terms(alpha, prior, y, cfg):
    """Per-sample (data term, KL term) of the variational loss under ``cfg``."""
    a = dirichlet.as_alpha(alpha)
    a0 = dirichlet.as_alpha(prior)
    K = a.shape[-1]
    y = _label_index(y, K)
    if a0.shape[-1] != K:
        raise ValueError("alpha and prior have different K")
    y1 = one_hot(y, K)
    if cfg.likelihood == "mse":
        data = expected_mse(a, y1)
    else:
        data = expected_nll(a, y)
    q = masked_alpha(a, y1) if cfg.kl_masking == "misclassified_only" else a
    kl = dirichlet.kl_divergence(q, np.broadcast_to(a0, q.shape))
    return data, kl


def variational_loss(alpha, prior, y, tau, cfg):
    """Negative ELBO: data term + (1 / tau) KL(q || prior).

    ``tau=inf`` disables the KL term (annealing weight of zero).
    """
    data, kl = loss_terms(alpha, prior, y, cfg)
    lam = kl_weight_from_tau(tau)
    return _out(data + np.where(lam > 0.0, lam * kl, 0.0))


# --- schedules ----------------------------------------------------------------


def gedl_prior_strength(e, K, C_w):
    """Evidence-adaptive prior strength W = (K + C_w K E) / (1 + K E), E = sum_k e_k.

    Goes from K at zero evidence to C_w as evidence grows.  The caller treats
    the result as a constant when differentiating.
    """
    e = np.asarray(e, dtype=float)
    if np.any(e < 0.0):
        raise ValueError("evidence must be nonnegative")
    total = np.sum(e, axis=-1)
    out = (K + C_w * K * total) / (1.0 + K * total)
    return float(out) if np.ndim(out) == 0 else out


def gedl_tau_schedule(cumulative_strength, C_tau):
    """tau_t = max(1, C_tau / sum_{i<=t} E[S_i])."""
    if not cumulative_strength > 0.0:
        raise ValueError("cumulative strength must be > 0")
    return max(1.0, C_tau / cumulative_strength)


def annealed_kl_weight(epoch, t0):
    """lambda = min(1, epoch / t0)."""
    return min(1.0, epoch / t0)


def legacy_tau_anneal(epoch, t0):
    """tau = 1 / min(1, epoch / t0); ``inf`` while the KL weight is zero."""
    return tau_from_weight(annealed_kl_weight(epoch, t0))


def red_tau_weight(opinion, correct, epoch, t0):
    """KL weight of the RED variant: u for correct samples, annealed otherwise."""
    u = np.asarray(opinion.u, dtype=float)
    out = np.where(correct, u, annealed_kl_weight(epoch, t0))
    return float(out) if out.ndim == 0 else out


# --- variants -----------------------------------------------------------------

_PRIOR_RULES = ("fixed_k", "fixed", "adaptive")
_TAU_RULES = ("annealed", "red_correct_u", "scheduled")
_MASKING = ("misclassified_only", "all_samples")
_LIKELIHOODS = ("nll", "mse")


@dataclass(frozen=True)
class VariantConfig:
    """One evidential-learning variant: prior strength, tau rule, KL masking, likelihood.

    ``w0`` is used by the ``fixed`` prior rule, ``c_w`` by ``adaptive``;
    ``t0`` by ``annealed`` and ``red_correct_u``; ``c_tau`` by ``scheduled``.
    """

    name: str
    prior_strength_rule: str = "fixed_k"
    tau_rule: str = "annealed"
    kl_masking: str = "misclassified_only"
    likelihood: str = "nll"
    w0: float = 2.0
    c_w: float = 0.5
    t0: int = 10
    c_tau: float = 100.0
    description: str = field(default="", compare=False)

    def __post_init__(self):
        for value, allowed, what in (
            (self.prior_strength_rule, _PRIOR_RULES, "prior_strength_rule"),
            (self.tau_rule, _TAU_RULES, "tau_rule"),
            (self.kl_masking, _MASKING, "kl_masking"),
            (self.likelihood, _LIKELIHOODS, "likelihood"),
        ):
            if value not in allowed:
                raise ValueError(f"{what} must be one of {allowed}, got {value!r}")
        if self.w0 <= 0 or self.c_w <= 0 or self.c_tau <= 0 or self.t0 <= 0:
            raise ValueError("w0, c_w, c_tau and t0 must be positive")

    def with_overrides(self, **kw):
        return replace(self, **kw)


PRESETS = {
    "edl": VariantConfig(
        "edl",
        description="Vanilla EDL: W = K, annealed KL weight, masked KL, NLL data term",
    ),
    "iedl-lik": VariantConfig(
        "iedl-lik",
        likelihood="mse",
        description="I-EDL likelihood only: vanilla EDL with the MSE data term",
    ),
    "redl": VariantConfig(
        "redl",
        prior_strength_rule="fixed",
        w0=2.0,
        description="R-EDL: tuned constant W (default 2), annealed KL weight, masked KL",
    ),
    "red": VariantConfig(
        "red",
        tau_rule="red_correct_u",
        description="RED: W = K, KL weight u on correct samples, annealed on incorrect",
    ),
    "gedl": VariantConfig(
        "gedl",
        prior_strength_rule="adaptive",
        tau_rule="scheduled",
        kl_masking="all_samples",
        description="GEDL: adaptive W, scheduled tau, unmasked KL from the tempered ELBO",
    ),
}


def get_preset(name, **overrides):
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown variant preset {name!r}; choose from {sorted(PRESETS)}") from None
    return cfg.with_overrides(**overrides) if overrides else cfg


def prior_strength(cfg, evidence):
    """Per-sample prior strength W for evidence of shape (..., K)."""
    e = np.asarray(evidence, dtype=float)
    K = e.shape[-1]
    batch = e.shape[:-1]
    if cfg.prior_strength_rule == "adaptive":
        return np.asarray(gedl_prior_strength(e, K, cfg.c_w), dtype=float)
    value = float(K) if cfg.prior_strength_rule == "fixed_k" else cfg.w0
    return np.full(batch, value)


def kl_weight(cfg, *, epoch, batch_shape=(), u=None, correct=None, cumulative_strength=None):
    """Per-sample KL weight lambda = 1 / tau for one optimisation step."""
    if cfg.tau_rule == "annealed":
        return np.full(batch_shape, annealed_kl_weight(epoch, cfg.t0))
    if cfg.tau_rule == "red_correct_u":
        if u is None or correct is None:
            raise ValueError("RED weighting needs u and correctness")
        return np.where(correct, u, annealed_kl_weight(epoch, cfg.t0))
    if cumulative_strength is None:
        raise ValueError("scheduled tau needs the cumulative strength")
    tau = gedl_tau_schedule(cumulative_strength, cfg.c_tau)
    return np.full(batch_shape, 1.0 / tau)
