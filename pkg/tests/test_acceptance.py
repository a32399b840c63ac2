"""Acceptance criteria, one test and one printed PASS/FAIL line each.

Every criterion is evaluated at its stated tolerance through the same
verification suite the ``verify`` subcommand runs; the last criterion runs
the subcommand itself in a subprocess and checks its exit status.
"""

import subprocess
import sys

import pytest

from gedl import checks

ACCEPTANCE_LINES = []

CRITERIA = [
    ("dirichlet-expectations", "four expectation identities vs MC, 1e6 samples x 50 sets, 5e-3 abs, < 60 s", ["dirichlet.expectations_mc"]),
    ("conjugacy", "conjugate and tempered grid densities, K=2, tau in {0.25,1,3}, 1e-4 pointwise, < 10 s", ["dirichlet.conjugacy_grid"]),
    ("closed-form-losses", "nll = 0.5 exactly, KL = ln2 - 1/2 and MSE = 2/3 within 1e-9", ["loss.closed_forms"]),
    ("asymptotic-mi", "decade error ratios in [80,120], MI(500,500) within 2e-6 of 5e-4", ["uncertainty.asymptotic_mi"]),
    ("variance-law", "variance identity exact, doubling ratio in [1.9,2.1]", ["uncertainty.variance_law"]),
    ("gradients", "loss and end-to-end MLP gradients vs central differences, rel 1e-3, 100 cases", ["gradients.loss_alpha", "gradients.mlp_end_to_end"]),
    ("schedules", "W endpoints and 15/11, tau = 2.0 and clamp to 1.0", ["schedules"]),
    ("behaviour", "bench-v1, 5 presets x 5 seeds: acc >= 0.95, GEDL UM-AUPR >= EDL in >= 4/5, OOD UM > ID UM", ["behaviour.bench_v1"]),
    ("monotone-agreement", "um, mi, var_sum rankings identical on 1e3 records", ["uncertainty.monotone_agreement"]),
]


@pytest.fixture(scope="module")
def suite():
    return {r.name: r for r in checks.run_checks()}


def _record(key, passed, text):
    line = f"ACCEPTANCE [{'PASS' if passed else 'FAIL'}] {key}: {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.mark.parametrize("key, statement, names", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_criterion(suite, key, statement, names):
    results = [suite[n] for n in names]
    passed = all(r.passed for r in results)
    measured = "; ".join(f"{r.name} measured={r.measured:.4g} tol={r.tolerance:.4g} time={r.seconds:.1f}s {r.detail}" for r in results)
    _record(key, passed, f"{statement} | {measured}")
    assert passed, measured


def test_verify_subcommand_exit_status(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "gedl", "verify", "--out-dir", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    tail = proc.stdout.strip().splitlines()[-2] if proc.stdout.strip() else proc.stderr[-200:]
    _record("verify-exit-0", proc.returncode == 0, f"`gedl verify` exit status {proc.returncode} ({tail})")
    assert (tmp_path / "verify_report.txt").exists()
    assert proc.returncode == 0, proc.stdout
