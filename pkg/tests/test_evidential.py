"""Evidential layer: opinions, loss closed forms, schedules and variant wiring."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gedl import dirichlet, evidential
from gedl.checks import mc_draws
from gedl.evidential import (
    PRESETS,
    SubjectiveOpinion,
    VariantConfig,
    alpha_to_opinion,
    decompose_evidence,
    evidence_to_alpha,
    expected_mse,
    expected_nll,
    gedl_prior_strength,
    gedl_tau_schedule,
    get_preset,
    legacy_tau_anneal,
    masked_alpha,
    predictive_probability,
    red_tau_weight,
    variational_loss,
)

H9 = sum(1.0 / k for k in range(1, 10))
ALL_SAMPLES_NLL = VariantConfig("t", kl_masking="all_samples")


# --- evidence and opinions ----------------------------------------------------


def test_evidence_to_alpha_examples():
    np.testing.assert_allclose(evidence_to_alpha(np.zeros(5), 5.0, np.full(5, 0.2)), np.ones(5))
    np.testing.assert_allclose(evidence_to_alpha([2, 6], 2.0, [0.5, 0.5]), [3, 7])
    np.testing.assert_allclose(evidence_to_alpha([1, 1, 1], 3.0, np.full(3, 1 / 3)), [2, 2, 2])


def test_evidence_to_alpha_per_sample_W():
    e = np.array([[0.0, 0.0], [2.0, 6.0]])
    np.testing.assert_allclose(evidence_to_alpha(e, np.array([2.0, 4.0]), [0.5, 0.5]), [[1, 1], [4, 8]])


def test_evidence_to_alpha_errors():
    with pytest.raises(ValueError, match="nonnegative"):
        evidence_to_alpha([-1.0, 1.0], 2.0, [0.5, 0.5])
    with pytest.raises(ValueError, match="alpha_k = 0"):
        evidence_to_alpha([0.0, 1.0], 2.0, [0.0, 1.0])
    with pytest.raises(ValueError):
        evidence_to_alpha([1.0, 1.0], 0.0, [0.5, 0.5])
    with pytest.raises(ValueError, match="base rate"):
        evidence_to_alpha([1.0, 1.0], 2.0, [0.5, 0.6])


def test_alpha_to_opinion_examples():
    op = alpha_to_opinion([3.0, 7.0], 2.0, [0.5, 0.5])
    np.testing.assert_allclose(op.b, [0.2, 0.6])
    assert op.u == pytest.approx(0.2)
    op = alpha_to_opinion([1.0, 1.0, 1.0], 3.0, np.full(3, 1 / 3))
    np.testing.assert_allclose(op.b, 0.0, atol=1e-15)
    assert op.u == pytest.approx(1.0)
    assert alpha_to_opinion([1e9, 1e9], 2.0, [0.5, 0.5]).u < 1e-8


def test_alpha_to_opinion_rejects_negative_evidence():
    with pytest.raises(ValueError, match="negative evidence"):
        alpha_to_opinion([0.5, 3.0], 2.0, [0.5, 0.5])


def test_opinion_invariant_enforced():
    with pytest.raises(ValueError):
        SubjectiveOpinion(b=np.array([0.5, 0.5]), u=0.2, a=np.array([0.5, 0.5]), W=2.0)
    with pytest.raises(ValueError):
        SubjectiveOpinion(b=np.array([-0.1, 0.9]), u=0.2, a=np.array([0.5, 0.5]), W=2.0)


def test_predictive_probability_examples():
    op = SubjectiveOpinion(b=np.array([0.2, 0.6]), u=0.2, a=np.array([0.5, 0.5]), W=2.0)
    np.testing.assert_allclose(predictive_probability(op), [0.3, 0.7])
    np.testing.assert_allclose(predictive_probability(op), dirichlet.mean([3, 7]), atol=1e-12)
    a = np.array([0.2, 0.3, 0.5])
    prior = SubjectiveOpinion(b=np.zeros(3), u=1.0, a=a, W=2.0)
    np.testing.assert_allclose(predictive_probability(prior), a)
    sure = SubjectiveOpinion(b=np.array([0.1, 0.9]), u=0.0, a=np.array([0.5, 0.5]), W=2.0)
    np.testing.assert_allclose(predictive_probability(sure), [0.1, 0.9])


def test_decompose_evidence_examples():
    d = decompose_evidence([2.0, 6.0])
    assert d.E == 8.0
    np.testing.assert_allclose(d.r, [0.25, 0.75])
    d = decompose_evidence([0.0, 0.0, 0.0])
    assert d.E == 0.0
    np.testing.assert_allclose(d.r, [1 / 3] * 3)
    np.testing.assert_allclose(d.reconstruct(), 0.0)
    d = decompose_evidence([0.0, 5.0, 0.0])
    assert d.E == 5.0
    np.testing.assert_allclose(d.r, [0, 1, 0])
    with pytest.raises(ValueError):
        decompose_evidence([-1.0, 2.0])


evidence = st.integers(2, 10).flatmap(lambda K: arrays(float, K, elements=st.floats(0.0, 1e4)))


@settings(max_examples=300, deadline=None)
@given(evidence, st.floats(0.01, 100.0))
def test_opinion_roundtrip_properties(e, W):
    K = len(e)
    a = np.full(K, 1.0 / K)
    alpha = evidence_to_alpha(e, W, a)
    op = alpha_to_opinion(alpha, W, a)
    assert abs(np.sum(op.b) + op.u - 1.0) <= 1e-10
    np.testing.assert_allclose(predictive_probability(op), dirichlet.mean(alpha), atol=1e-12)
    if e.sum() > 0:
        d = decompose_evidence(e)
        np.testing.assert_allclose(d.reconstruct(), e, atol=1e-10, rtol=1e-12)
        assert abs(d.r.sum() - 1.0) <= 1e-12


# --- loss closed forms --------------------------------------------------------


def test_expected_nll_examples():
    assert expected_nll([2.0, 1.0], 0) == 0.5
    for y in range(10):
        assert expected_nll(np.ones(10), y) == pytest.approx(H9, abs=1e-12)


def test_expected_nll_errors():
    with pytest.raises(IndexError):
        expected_nll([1.0, 1.0], 2)
    with pytest.raises(TypeError):
        expected_nll([1.0, 1.0], 0.5)


def test_expected_mse_examples():
    assert expected_mse([1.0, 1.0], [1.0, 0.0]) == pytest.approx(2 / 3, abs=1e-12)
    assert expected_mse([1e8, 1.0], [1.0, 0.0]) < 1e-7
    with pytest.raises(ValueError, match="one-hot"):
        expected_mse([1.0, 1.0], [0.5, 0.5])


def test_losses_by_monte_carlo():
    rng = np.random.default_rng(21)
    for _ in range(5):
        K = int(rng.integers(2, 8))
        a = rng.uniform(0.5, 10.0, K)
        y = int(rng.integers(K))
        pi, log_pi, control = mc_draws(a, rng, 1_000_000)
        assert abs(-(log_pi[:, y] - control[:, y]).mean() - expected_nll(a, y)) <= 5e-3
        y1 = np.eye(K)[y]
        assert abs(np.sum((y1 - pi) ** 2, axis=1).mean() - expected_mse(a, y1)) <= 5e-3


def test_masked_alpha_examples():
    np.testing.assert_array_equal(masked_alpha([3, 7], [1, 0]), [1, 7])
    np.testing.assert_array_equal(masked_alpha([1, 7], [1, 0]), [1, 7])
    np.testing.assert_array_equal(masked_alpha([5, 5, 5], [0, 0, 1]), [5, 5, 1])
    with pytest.raises(ValueError):
        masked_alpha([5, 5], [1, 1])


def test_variational_loss_examples():
    assert variational_loss(np.ones(10), np.ones(10), 3, 1.0, ALL_SAMPLES_NLL) == pytest.approx(H9, abs=1e-12)
    assert variational_loss([2.0, 1.0], [1.0, 1.0], 0, 1.0, ALL_SAMPLES_NLL) == pytest.approx(math.log(2), abs=1e-12)
    data = expected_nll([2.0, 1.0], 0)
    assert variational_loss([2.0, 1.0], [1.0, 1.0], 0, np.inf, ALL_SAMPLES_NLL) == data
    assert variational_loss([2.0, 1.0], [1.0, 1.0], 0, 1e12, ALL_SAMPLES_NLL) == pytest.approx(data, abs=1e-12)
    with pytest.raises(ValueError):
        variational_loss([2.0, 1.0], [1.0, 1.0], 0, 0.0, ALL_SAMPLES_NLL)


def test_variational_loss_batched():
    rng = np.random.default_rng(2)
    a, a0 = rng.uniform(0.5, 5, (7, 4)), rng.uniform(0.5, 5, (7, 4))
    y = rng.integers(0, 4, 7)
    for cfg in PRESETS.values():
        out = variational_loss(a, a0, y, 2.0, cfg)
        assert out.shape == (7,)
        np.testing.assert_allclose(out, [variational_loss(a[i], a0[i], y[i], 2.0, cfg) for i in range(7)])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.sampled_from(sorted(PRESETS)))
def test_loss_label_permutation_invariance(K, seed, preset):
    rng = np.random.default_rng(seed)
    a, a0 = rng.uniform(0.2, 20, K), rng.uniform(0.2, 5, K)
    y = int(rng.integers(K))
    perm = rng.permutation(K)
    inv = np.argsort(perm)
    cfg = PRESETS[preset]
    base = variational_loss(a, a0, y, 3.0, cfg)
    assert variational_loss(a[perm], a0[perm], int(inv[y]), 3.0, cfg) == pytest.approx(base, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("tau", [1.0, 10.0])
def test_loss_along_label_direction_has_single_minimum(tau):
    prior = np.ones(3)
    y1 = np.array([1.0, 0.0, 0.0])
    c = np.linspace(0.0, 1000.0, 20001)
    h = 1e-4
    f = lambda cc: variational_loss(prior + cc[:, None] * y1, np.broadcast_to(prior, (len(cc), 3)), np.zeros(len(cc), int), tau, ALL_SAMPLES_NLL)
    deriv = (f(c + h) - f(np.maximum(c - h, 0.0))) / (c + h - np.maximum(c - h, 0.0))
    signs = np.sign(deriv)
    assert signs[0] < 0 and signs[-1] > 0
    assert np.count_nonzero(np.diff(signs) != 0) == 1


# --- schedules ----------------------------------------------------------------


def test_gedl_prior_strength_examples():
    assert gedl_prior_strength(np.zeros(10), 10, 0.5) == 10.0
    assert abs(gedl_prior_strength(np.array([1e6]), 10, 0.5) - 0.5) <= 1e-3
    assert gedl_prior_strength(np.array([0.5, 0.5]), 10, 0.5) == pytest.approx(15 / 11, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 20), st.floats(0.05, 30.0), st.floats(0.0, 1e6), st.floats(1e-6, 1e3))
def test_gedl_prior_strength_monotone_and_bounded(K, C_w, total, step):
    lo, hi = min(K, C_w), max(K, C_w)
    w1 = gedl_prior_strength(np.array([total]), K, C_w)
    w2 = gedl_prior_strength(np.array([total + step]), K, C_w)
    assert lo - 1e-12 <= w1 <= hi + 1e-12
    # monotone up to round-off once W sits on its asymptote
    slack = 4 * np.finfo(float).eps * hi
    if C_w < K:
        assert w2 <= w1 + slack
    elif C_w > K:
        assert w2 >= w1 - slack


def test_gedl_prior_strength_strict():
    e = np.linspace(0, 100, 1000)[:, None]
    assert np.all(np.diff(gedl_prior_strength(e, 10, 0.5)) < 0)
    assert np.all(np.diff(gedl_prior_strength(e, 2, 5.0)) > 0)


def test_gedl_tau_schedule_examples():
    assert gedl_tau_schedule(50.0, 100.0) == 2.0
    assert gedl_tau_schedule(200.0, 100.0) == 1.0
    assert gedl_tau_schedule(100.0, 100.0) == 1.0
    with pytest.raises(ValueError):
        gedl_tau_schedule(0.0, 100.0)
    with pytest.raises(ValueError):
        gedl_tau_schedule(-3.0, 100.0)


def test_gedl_tau_schedule_monotone():
    s = np.logspace(-3, 4, 500)
    t = np.array([gedl_tau_schedule(v, 100.0) for v in s])
    assert np.all(np.diff(t) <= 0) and np.all(t >= 1.0)


def test_legacy_anneal_examples():
    assert legacy_tau_anneal(0, 10) == np.inf
    assert evidential.kl_weight_from_tau(legacy_tau_anneal(0, 10)) == 0.0
    assert 1.0 / legacy_tau_anneal(5, 10) == pytest.approx(0.5)
    assert legacy_tau_anneal(10, 10) == 1.0
    assert legacy_tau_anneal(37, 10) == 1.0


def test_red_weight_examples():
    a = np.array([0.5, 0.5])
    correct_op = SubjectiveOpinion(b=np.array([0.2, 0.6]), u=0.2, a=a, W=2.0)
    assert red_tau_weight(correct_op, True, 5, 10) == pytest.approx(0.2)
    assert red_tau_weight(correct_op, False, 5, 10) == pytest.approx(0.5)
    vacuous = SubjectiveOpinion(b=np.zeros(2), u=1.0, a=a, W=2.0)
    assert red_tau_weight(vacuous, True, 0, 10) == 1.0


# --- presets ------------------------------------------------------------------


def test_presets_taxonomy():
    assert set(PRESETS) == {"edl", "iedl-lik", "redl", "red", "gedl"}
    assert (PRESETS["edl"].prior_strength_rule, PRESETS["edl"].likelihood) == ("fixed_k", "nll")
    assert PRESETS["iedl-lik"].likelihood == "mse"
    assert PRESETS["redl"].prior_strength_rule == "fixed" and PRESETS["redl"].w0 == 2.0
    assert PRESETS["red"].tau_rule == "red_correct_u"
    g = PRESETS["gedl"]
    assert (g.prior_strength_rule, g.tau_rule, g.kl_masking) == ("adaptive", "scheduled", "all_samples")
    for name in ("edl", "iedl-lik", "redl", "red"):
        assert PRESETS[name].kl_masking == "misclassified_only"


def test_variant_config_validation():
    with pytest.raises(ValueError):
        VariantConfig("x", tau_rule="sometimes")
    with pytest.raises(ValueError):
        VariantConfig("x", c_w=-1.0)
    with pytest.raises(KeyError):
        get_preset("nope")
    assert get_preset("gedl", c_w=0.3).c_w == 0.3
    with pytest.raises(Exception):
        PRESETS["edl"].likelihood = "mse"


def test_prior_strength_rules():
    e = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(evidential.prior_strength(PRESETS["edl"], e), [3.0, 3.0])
    np.testing.assert_array_equal(evidential.prior_strength(PRESETS["redl"], e), [2.0, 2.0])
    np.testing.assert_allclose(
        evidential.prior_strength(PRESETS["gedl"], e), [3.0, (3 + 0.5 * 3 * 6) / (1 + 3 * 6)]
    )


def test_kl_weight_rules():
    n = (3,)
    np.testing.assert_array_equal(evidential.kl_weight(PRESETS["edl"], epoch=0, batch_shape=n), 0.0)
    np.testing.assert_array_equal(evidential.kl_weight(PRESETS["edl"], epoch=4, batch_shape=n), 0.4)
    u, correct = np.array([0.1, 0.2, 0.3]), np.array([True, False, True])
    np.testing.assert_allclose(evidential.kl_weight(PRESETS["red"], epoch=4, batch_shape=n, u=u, correct=correct), [0.1, 0.4, 0.3])
    np.testing.assert_allclose(evidential.kl_weight(PRESETS["gedl"], epoch=0, batch_shape=n, cumulative_strength=50.0), 0.5)
    with pytest.raises(ValueError):
        evidential.kl_weight(PRESETS["red"], epoch=0, batch_shape=n)


class _Spy:
    def __init__(self, monkeypatch):
        self.calls = []
        for name in ("expected_mse", "expected_nll", "masked_alpha"):
            original = getattr(evidential, name)

            def wrapper(*args, _name=name, _orig=original, **kw):
                self.calls.append(_name)
                return _orig(*args, **kw)

            monkeypatch.setattr(evidential, name, wrapper)


@pytest.mark.parametrize(
    "preset, expect, forbid",
    [
        ("edl", {"expected_nll", "masked_alpha"}, {"expected_mse"}),
        ("iedl-lik", {"expected_mse", "masked_alpha"}, {"expected_nll"}),
        ("redl", {"expected_nll", "masked_alpha"}, {"expected_mse"}),
        ("red", {"expected_nll", "masked_alpha"}, {"expected_mse"}),
        ("gedl", {"expected_nll"}, {"expected_mse", "masked_alpha"}),
    ],
)
def test_preset_wiring(monkeypatch, preset, expect, forbid):
    spy = _Spy(monkeypatch)
    variational_loss(np.array([3.0, 2.0, 1.5]), np.ones(3), 0, 2.0, PRESETS[preset])
    assert expect <= set(spy.calls)
    assert not forbid & set(spy.calls)
