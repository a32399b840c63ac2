"""Dirichlet opinions by hand: evidence, strength, and the three uncertainty scores.

Run with ``python3 demos/dirichlet_walkthrough.py``.
"""
import numpy as np

from gedl import dirichlet, evidential, uncertainty

# %% evidence -> concentration -> opinion
K = 3
a = evidential.uniform_base_rate(K)
e = np.array([8.0, 1.0, 0.0])
W = evidential.gedl_prior_strength(e, K, C_w=0.5)  # adaptive prior weight
alpha = evidential.evidence_to_alpha(e, W, a)
op = evidential.alpha_to_opinion(alpha, W, a)
print("W =", W, " alpha =", alpha)
print("belief =", op.b, " u =", op.u, " sum =", op.b.sum() + op.u)
print("predictive =", evidential.predictive_probability(op))

# %% the prior weight moves from K (no evidence) toward C_w
for total in (0.0, 1.0, 10.0, 1e3, 1e6):
    print(f"sum e = {total:>9g}   W = {float(evidential.gedl_prior_strength(np.array([total, 0, 0]), K, 0.5)):.6f}")

# %% closed forms against sampling
rng = np.random.default_rng(0)
pi = dirichlet.sample(alpha, rng, 200000)
print("mean     ", dirichlet.mean(alpha), pi.mean(axis=0))
print("variance ", dirichlet.variance(alpha), pi.var(axis=0))
print("E[ln pi] ", dirichlet.expected_log(alpha), np.log(pi).mean(axis=0))

# %% tempered update: one label, likelihood raised to tau
prior = np.ones(K)
for tau in (0.25, 1.0, 3.0):
    print(f"tau={tau:<5} posterior", dirichlet.tempered_update(prior, np.eye(K)[0], tau))

# %% scores shrink as strength grows along a fixed direction
direction = np.array([0.6, 0.3, 0.1])
for S in (10, 100, 1000, 10000):
    al = S * direction
    print(
        f"S={S:<6} u={float(K / S):.5f}  MI={float(uncertainty.mutual_information(al)):.3e}"
        f"  (K-1)/2S={float(uncertainty.asymptotic_mi(al)):.3e}  var_sum={float(uncertainty.variance_sum(al)):.3e}"
    )
