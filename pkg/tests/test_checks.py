"""The verification suite itself: fault injection and determinism."""

import numpy as np

from gedl import checks
from gedl.specfun import digamma


def test_corrupted_digamma_fails_recurrence():
    bad = lambda x: digamma(x) + 1e-3 * np.sin(np.asarray(x))
    res = checks.check_specfun_recurrences(digamma=bad)
    assert not res.passed and res.measured > 1e-4
    assert checks.check_specfun_recurrences().passed


def test_offset_digamma_caught_by_values():
    # a constant offset cancels in the recurrence but not in psi(1) = -gamma
    import gedl.specfun as sf

    orig = sf.digamma
    try:
        sf.digamma = lambda x: orig(x) + 1e-3
        assert not checks.check_specfun_values().passed
    finally:
        sf.digamma = orig
    assert checks.check_specfun_values().passed


def test_report_deterministic():
    names = {"specfun.recurrences", "dirichlet.conjugacy_grid", "uncertainty.monotone_agreement", "gradients.loss_alpha"}
    a = checks.run_checks(names)
    b = checks.run_checks(names)
    assert [(r.name, r.passed, r.measured, r.detail) for r in a] == [(r.name, r.passed, r.measured, r.detail) for r in b]


def test_report_format():
    res = [checks.CheckResult("a", True, 1e-12, 1e-9, 0.1), checks.CheckResult("b", False, 2.0, 1.0, 0.2, "why")]
    text = checks.format_report(res)
    assert "[PASS] a" in text and "[FAIL] b" in text and "why" in text
    assert text.strip().endswith("1/2 checks passed")


def test_time_budget_enforced(monkeypatch):
    slow = lambda: checks.CheckResult("dirichlet.conjugacy_grid", True, 0.0, 1e-4, seconds=11.0)
    monkeypatch.setitem(checks.CHECKS, "dirichlet.conjugacy_grid", slow)
    (res,) = checks.run_checks({"dirichlet.conjugacy_grid"})
    assert not res.passed and "time budget" in res.detail
