"""Verification suite: Monte-Carlo, quadrature, recurrence, asymptotic,
finite-difference and end-to-end behavioural checks.

Every check returns a :class:`CheckResult` carrying the measured error, the
tolerance it was held to and the wall time.  Oracles here never call the
closed form they are checking: the Dirichlet expectations are compared with
sample averages, the conjugate updates with grid-normalised densities, the
loss gradients with central differences.
"""

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import dirichlet, evidential, nnet, specfun, uncertainty
from .training import RunConfig, run

__all__ = ["CheckResult", "CHECKS", "run_checks", "format_report"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: measured={self.measured:.6g} tol={self.tolerance:.6g} "
            f"time={self.seconds:.2f}s {self.detail}".rstrip()
        )


def _timed(fn):
    def wrapper(*args, **kw):
        t = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --- special functions ----------------------------------------------------------


@_timed
def check_specfun_recurrences(seed=0, n=10_000, digamma=None):
    """psi(x+1)-psi(x)=1/x, psi'(x+1)-psi'(x)=-1/x^2, lnG(x+1)-lnG(x)=ln x on (0, 100]."""
    digamma = digamma or specfun.digamma
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 100.0, n)
    x = x[x > 0.0]
    errs = {
        "digamma": np.max(np.abs(digamma(x + 1.0) - digamma(x) - 1.0 / x)),
        "trigamma": np.max(np.abs(specfun.trigamma(x + 1.0) - specfun.trigamma(x) + 1.0 / x**2)),
        "lgamma": np.max(np.abs(specfun.lgamma(x + 1.0) - specfun.lgamma(x) - np.log(x))),
    }
    worst = max(errs.values())
    detail = " ".join(f"{k}={v:.2e}" for k, v in errs.items())
    return CheckResult("specfun.recurrences", bool(worst <= 1e-9), float(worst), 1e-9, detail=detail)


def _euler_gamma_oracle():
    # Euler-Maclaurin: gamma = H_n - ln n - 1/(2n) + 1/(12n^2) - 1/(120n^4) + O(n^-6)
    n = 10_000
    harmonic = math.fsum(1.0 / k for k in range(1, n + 1))
    return harmonic - math.log(n) - 1.0 / (2 * n) + 1.0 / (12 * n**2) - 1.0 / (120 * n**4)


def _zeta2_oracle():
    # partial sum plus Euler-Maclaurin tail; remaining tail < 1/(30 N^5)
    N = 1000
    partial = math.fsum(1.0 / k**2 for k in range(1, N + 1))
    return partial + 1.0 / N - 1.0 / (2 * N**2) + 1.0 / (6 * N**3)


@_timed
def check_specfun_values():
    """Anchored values: lnG(1), lnG(5), lnG(1/2), psi(1), psi(10)-psi(1), psi'(1)."""
    harmonic9 = float(sum(Fraction(1, k) for k in range(1, 10)))
    cases = [
        ("lgamma(1)", specfun.lgamma(1.0), 0.0, 1e-12),
        ("lgamma(5)", specfun.lgamma(5.0), math.log(24.0), 1e-12),
        ("lgamma(0.5)", specfun.lgamma(0.5), 0.5 * math.log(math.pi), 1e-12),
        ("digamma(1)", specfun.digamma(1.0), -_euler_gamma_oracle(), 1e-10),
        ("digamma(10)-digamma(1)", specfun.digamma(10.0) - specfun.digamma(1.0), harmonic9, 1e-10),
        ("digamma(3.5)-digamma(2.5)", specfun.digamma(3.5) - specfun.digamma(2.5), 0.4, 1e-10),
        ("trigamma(1)", specfun.trigamma(1.0), _zeta2_oracle(), 1e-8),
        ("trigamma(3)-trigamma(4)", specfun.trigamma(3.0) - specfun.trigamma(4.0), 1.0 / 9.0, 1e-8),
    ]
    ratios = [abs(v - ref) / tol for _, v, ref, tol in cases]
    worst = max(ratios)
    bad = [name for (name, *_), r in zip(cases, ratios) if r > 1.0]
    return CheckResult("specfun.values", worst <= 1.0, worst, 1.0, detail=f"error/tol; failing={bad}")


@_timed
def check_digamma_derivative(seed=0, n=200):
    """Central differences of digamma against trigamma, relative error <= 1e-5."""
    rng = np.random.default_rng(seed)
    x = np.exp(rng.uniform(np.log(0.05), np.log(1e3), n))
    h = 1e-5 * x
    fd = (specfun.digamma(x + h) - specfun.digamma(x - h)) / (2.0 * h)
    rel = np.max(np.abs(fd - specfun.trigamma(x)) / specfun.trigamma(x))
    return CheckResult("specfun.digamma_derivative", bool(rel <= 1e-5), float(rel), 1e-5)


# --- Dirichlet ------------------------------------------------------------------


def mc_draws(alpha, rng, n):
    """Dirichlet draws built from G_k = Gamma(a_k+1) * U_k**(1/a_k) variates.

    Returns (pi, log_pi, control).  ``control`` has mean exactly zero and
    tracks the fluctuation of ln pi_k, so ``log_pi - control`` is a
    lower-variance estimator of E[ln pi_k].  It is the sum of three terms
    whose means are known without any special function:

    - (ln U_k + 1) / a_k, since E[ln U] = -1 (dominant for small a_k)
    - G'_k / (a_k + 1) - 1, since E[Gamma(a+1)] = a + 1
    - -(sum_j G_j / S - 1), since E[sum_j G_j] = S
    """
    a = np.asarray(alpha, dtype=float)
    g1 = rng.standard_gamma(a + 1.0, size=(n, a.size))
    log_u = np.log(rng.random((n, a.size)))
    log_g = np.log(g1) + log_u / a
    m = log_g.max(axis=1, keepdims=True)
    total = np.exp(log_g - m).sum(axis=1, keepdims=True)
    log_pi = log_g - (m + np.log(total))
    control = (log_u + 1.0) / a + (g1 / (a + 1.0) - 1.0) - (np.exp(m) * total / a.sum() - 1.0)
    return np.exp(log_pi), log_pi, control


@_timed
def check_dirichlet_expectations(seed=0, n_sets=50, n_samples=1_000_000, tol=5e-3):
    """Mean, variance, E[ln pi_k], E[pi_k ln pi_k] against Monte Carlo.

    50 parameter sets, K uniform on {2..10}, alpha_k uniform on (0.2, 20).
    """
    rng = np.random.default_rng(seed)
    worst = dict(mean=0.0, variance=0.0, expected_log=0.0, expected_pi_log_pi=0.0)
    for _ in range(n_sets):
        K = int(rng.integers(2, 11))
        a = rng.uniform(0.2, 20.0, K)
        pi, log_pi, control = mc_draws(a, rng, n_samples)
        est = {
            "mean": pi.mean(axis=0),
            "variance": pi.var(axis=0),
            "expected_log": (log_pi - control).mean(axis=0),
            "expected_pi_log_pi": (pi * log_pi).mean(axis=0),
        }
        closed = {
            "mean": dirichlet.mean(a),
            "variance": dirichlet.variance(a),
            "expected_log": dirichlet.expected_log(a),
            "expected_pi_log_pi": dirichlet.expected_pi_log_pi(a),
        }
        for k in worst:
            worst[k] = max(worst[k], float(np.max(np.abs(est[k] - closed[k]))))
    m = max(worst.values())
    detail = " ".join(f"{k}={v:.2e}" for k, v in worst.items())
    return CheckResult("dirichlet.expectations_mc", m <= tol, m, tol, detail=detail)


def _grid_posterior_error(prior, counts, tau, eps=1e-6, n=100_000):
    x = np.linspace(eps, 1.0 - eps, n)
    a0 = np.asarray(prior, dtype=float)
    c = np.asarray(counts, dtype=float)
    # unnormalised likelihood^tau x prior kernel, normalised by quadrature
    log_kernel = (tau * c[0] + a0[0] - 1.0) * np.log(x) + (tau * c[1] + a0[1] - 1.0) * np.log1p(-x)
    kernel = np.exp(log_kernel - log_kernel.max())
    grid_density = kernel / np.trapezoid(kernel, x)
    post = dirichlet.tempered_update(a0, c, tau) if tau != 1.0 else dirichlet.conjugate_update(a0, c)
    closed = np.exp(dirichlet.log_density(post, np.stack([x, 1.0 - x], axis=1)))
    return float(np.max(np.abs(grid_density - closed)))


@_timed
def check_conjugacy(seed=0, tol=1e-4):
    """Conjugate (tau=1) and tempered (tau in {0.25, 3}) updates against grid-normalised
    likelihood x prior on a 1e5-point grid, K=2."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    cases = 0
    for tau in (0.25, 1.0, 3.0):
        for _ in range(4):
            prior = rng.uniform(1.0, 5.0, 2)
            counts = rng.uniform(0.0, 5.0, 2)
            worst = max(worst, _grid_posterior_error(prior, counts, tau))
            cases += 1
        label = np.eye(2)[int(rng.integers(2))]
        worst = max(worst, _grid_posterior_error(rng.uniform(1.0, 5.0, 2), label, tau))
        cases += 1
    return CheckResult("dirichlet.conjugacy_grid", worst <= tol, worst, tol, detail=f"{cases} cases")


# --- loss closed forms ------------------------------------------------------------


@_timed
def check_closed_form_losses():
    """expected_nll((2,1), 0) = 1/2; KL((2,1)||(1,1)) = ln 2 - 1/2; expected_mse((1,1), e_0) = 2/3."""
    errs = {
        "nll": abs(evidential.expected_nll([2.0, 1.0], 0) - 0.5),
        "kl": abs(dirichlet.kl_divergence([2.0, 1.0], [1.0, 1.0]) - (math.log(2.0) - 0.5)),
        "mse": abs(evidential.expected_mse([1.0, 1.0], [1.0, 0.0]) - 2.0 / 3.0),
    }
    # "exact" for the nll is held to a few ulp of 0.5
    tols = {"nll": 4 * np.finfo(float).eps, "kl": 1e-9, "mse": 1e-9}
    ok = all(errs[k] <= tols[k] for k in errs)
    worst = max(errs[k] / tols[k] for k in errs)
    detail = " ".join(f"{k}={errs[k]:.2e}(tol {tols[k]:.1e})" for k in errs)
    return CheckResult("loss.closed_forms", ok, worst, 1.0, detail=f"error/tol; {detail}")


# --- uncertainty ----------------------------------------------------------------


@_timed
def check_asymptotic_mi(K=10):
    """|MI - (K-1)/(2S)| shrinks ~100x per decade of S; MI((500,500)) near 1/2000."""
    S = np.array([1e2, 1e3, 1e4, 1e5])
    errs = np.array([abs(uncertainty.mutual_information(np.full(K, s / K)) - (K - 1) / (2 * s)) for s in S])
    ratios = errs[:-1] / errs[1:]
    mi500 = abs(uncertainty.mutual_information([500.0, 500.0]) - 5e-4)
    ok = bool(np.all((ratios >= 80) & (ratios <= 120)) and mi500 <= 2e-6)
    detail = f"decade ratios={np.round(ratios, 3).tolist()} |MI(500,500)-5e-4|={mi500:.3e}"
    return CheckResult("uncertainty.asymptotic_mi", ok, float(np.max(np.abs(ratios - 100.0))), 20.0, detail=detail)


@_timed
def check_variance_law(seed=0, n=200):
    """variance_sum equals the per-component variance sum; doubling alpha at S >= 100
    scales it by a factor in [1.9, 2.1]."""
    rng = np.random.default_rng(seed)
    ident = 0.0
    ratios = []
    for _ in range(n):
        K = int(rng.integers(2, 11))
        a = rng.uniform(0.2, 20.0, K)
        closed = uncertainty.variance_sum(a)
        ident = max(ident, abs(closed - float(np.sum(dirichlet.variance(a)))) / closed)
        big = a * (100.0 / a.sum()) * rng.uniform(1.0, 100.0)
        ratios.append(uncertainty.variance_sum(big) / uncertainty.variance_sum(2.0 * big))
    ratios = np.array(ratios)
    ok = bool(ident <= 1e-14 and np.all((ratios >= 1.9) & (ratios <= 2.1)))
    detail = f"identity rel err={ident:.2e} ratio range=[{ratios.min():.4f}, {ratios.max():.4f}]"
    return CheckResult("uncertainty.variance_law", ok, float(np.max(np.abs(ratios - 2.0))), 0.1, detail=detail)


@_timed
def check_monotone_agreement(seed=0, n_directions=10, n_strengths=100):
    """um, mi and var_sum rank 10^3 records identically when only S varies."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_directions):
        K = int(rng.integers(2, 11))
        r = rng.dirichlet(np.full(K, 2.0))
        r = np.maximum(r, 1e-3)
        r /= r.sum()
        S = np.sort(np.exp(rng.uniform(np.log(1.0), np.log(1e4), n_strengths)))
        alpha = S[:, None] * r
        rec = uncertainty.score(alpha, W=float(K))
        ranks = [np.argsort(np.argsort(v, kind="stable"), kind="stable") for v in (rec.um, rec.mi, rec.var_sum)]
        mismatches += int(np.sum(ranks[0] != ranks[1]) + np.sum(ranks[0] != ranks[2]))
    n = n_directions * n_strengths
    return CheckResult("uncertainty.monotone_agreement", mismatches == 0, mismatches, 0, detail=f"{n} records")


# --- schedules ------------------------------------------------------------------


@_timed
def check_schedules():
    """Prior-strength endpoints and worked value; tau schedule value and clamp."""
    errs = {
        "W(sum e=0)=K": abs(evidential.gedl_prior_strength(np.zeros(10), 10, 0.5) - 10.0),
        "W(sum e=1e6)->C_w": abs(evidential.gedl_prior_strength(np.array([1e6]), 10, 0.5) - 0.5),
        "W(K=10,C_w=.5,sum e=1)=15/11": abs(evidential.gedl_prior_strength(np.array([1.0]), 10, 0.5) - 15 / 11),
        "tau(100,50)=2": abs(evidential.gedl_tau_schedule(50.0, 100.0) - 2.0),
        "tau(100,200)=1": abs(evidential.gedl_tau_schedule(200.0, 100.0) - 1.0),
    }
    tols = {k: 1e-12 for k in errs}
    tols["W(sum e=1e6)->C_w"] = 1e-3
    ok = all(errs[k] <= tols[k] for k in errs)
    worst = max(errs[k] / tols[k] for k in errs)
    return CheckResult("schedules", ok, worst, 1.0, detail="error/tol")


# --- gradients ------------------------------------------------------------------


def _rel_err(g, fd):
    return float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12))


@_timed
def check_loss_gradients(seed=0, n_cases=100, tol=1e-3):
    """dL/dalpha for every preset against central differences of the loss."""
    rng = np.random.default_rng(seed)
    worst = {}
    for name, cfg in evidential.PRESETS.items():
        w = 0.0
        for _ in range(n_cases):
            K = int(rng.integers(2, 11))
            a = rng.uniform(0.3, 20.0, K)
            a0 = rng.uniform(0.2, 5.0, K)
            y = int(rng.integers(K))
            tau = float(rng.uniform(1.0, 10.0))
            g = nnet.loss_grad_alpha(a, a0, y, tau, cfg)
            fd = np.empty(K)
            for k in range(K):
                h = 1e-5 * a[k]
                ap, am = a.copy(), a.copy()
                ap[k] += h
                am[k] -= h
                fd[k] = (evidential.variational_loss(ap, a0, y, tau, cfg) - evidential.variational_loss(am, a0, y, tau, cfg)) / (2 * h)
            w = max(w, _rel_err(g, fd))
        worst[name] = w
    m = max(worst.values())
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    return CheckResult("gradients.loss_alpha", m <= tol, m, tol, detail=detail)


def batch_loss(model, x, y, cfg, W, lam):
    """Mean variational loss over a batch with W and the KL weight held fixed."""
    e = nnet.forward(model, x)
    a = evidential.uniform_base_rate(e.shape[1])
    alpha = e + W[:, None] * a
    data, kl = evidential.loss_terms(alpha, W[:, None] * a, y, cfg)
    return float(np.mean(data + np.where(lam > 0.0, lam * kl, 0.0)))


def batch_grads(model, x, y, cfg, W, lam):
    tape = nnet.GradientTape()
    e = nnet.forward(model, x, tape)
    a = evidential.uniform_base_rate(e.shape[1])
    alpha = e + W[:, None] * a
    g_alpha = nnet.loss_grad_alpha(alpha, W[:, None] * a, y, evidential.tau_from_weight(lam), cfg) / len(y)
    return nnet.backward(model, tape, g_alpha)


@_timed
def check_mlp_gradients(seed=0, n_cases=100, tol=1e-3):
    """End-to-end parameter gradients of 2-4-3 MLPs against central differences
    (step 1e-4 relative), parameters of magnitude <= 1."""
    rng = np.random.default_rng(seed)
    names = list(evidential.PRESETS)
    worst = 0.0
    for i in range(n_cases):
        cfg = evidential.PRESETS[names[i % len(names)]]
        model = nnet.MlpModel(
            [rng.uniform(-1, 1, (4, 2)), rng.uniform(-1, 1, (3, 4))],
            [rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 3)],
            ["relu", "identity"],
        )
        x = rng.normal(size=(8, 2))
        y = rng.integers(0, 3, 8)
        e = nnet.forward(model, x)
        W = evidential.prior_strength(cfg, e)
        lam = rng.uniform(0.1, 1.0, 8)
        grads = batch_grads(model, x, y, cfg, W, lam)
        g_all, fd_all = [], []
        for name, p in model.params().items():
            for idx in np.ndindex(p.shape):
                old = p[idx]
                h = 1e-4 * max(1.0, abs(old))
                p[idx] = old + h
                up = batch_loss(model, x, y, cfg, W, lam)
                p[idx] = old - h
                down = batch_loss(model, x, y, cfg, W, lam)
                p[idx] = old
                fd_all.append((up - down) / (2 * h))
                g_all.append(grads[name][idx])
        worst = max(worst, _rel_err(np.array(g_all), np.array(fd_all)))
    return CheckResult("gradients.mlp_end_to_end", worst <= tol, worst, tol, detail=f"{n_cases} models")


# --- behaviour ------------------------------------------------------------------


@_timed
def check_behaviour(seeds=(0, 1, 2, 3, 4), epochs=50, max_run_seconds=120.0):
    """bench-v1 end to end: accuracy >= 0.95 for every preset and seed, GEDL UM-AUPR >=
    EDL's in >= 4/5 seeds, mean OOD UM > mean ID UM for every preset and seed."""
    reports = {}
    slowest = 0.0
    for name in evidential.PRESETS:
        for s in seeds:
            t = time.perf_counter()
            _, _, rep = run(RunConfig(variant=name, seed=s, epochs=epochs))
            slowest = max(slowest, time.perf_counter() - t)
            reports[name, s] = rep
    acc_fail = [f"{n}/{s}" for (n, s), r in reports.items() if r.accuracy < 0.95]
    um_fail = [f"{n}/{s}" for (n, s), r in reports.items() if not r.mean_um_ood > r.mean_um_id]
    wins = sum(reports["gedl", s].ood_um_aupr >= reports["edl", s].ood_um_aupr for s in seeds)
    need = len(seeds) - 1
    ok = not acc_fail and not um_fail and wins >= need and slowest <= max_run_seconds
    per_preset = " ".join(
        f"{n}:acc={np.mean([reports[n, s].accuracy for s in seeds]):.3f},"
        f"umAUPR={np.mean([reports[n, s].ood_um_aupr for s in seeds]):.3f},"
        f"UM id/ood={np.mean([reports[n, s].mean_um_id for s in seeds]):.3f}/"
        f"{np.mean([reports[n, s].mean_um_ood for s in seeds]):.3f}"
        for n in evidential.PRESETS
    )
    detail = (
        f"gedl>=edl UM-AUPR in {wins}/{len(seeds)} seeds; accuracy<0.95: {acc_fail or 'none'}; "
        f"OOD UM <= ID UM: {um_fail or 'none'}; slowest run {slowest:.1f}s; {per_preset}"
    )
    return CheckResult("behaviour.bench_v1", ok, float(len(acc_fail) + len(um_fail)), 0.0, detail=detail)


CHECKS = {
    "specfun.recurrences": check_specfun_recurrences,
    "specfun.values": check_specfun_values,
    "specfun.digamma_derivative": check_digamma_derivative,
    "dirichlet.expectations_mc": check_dirichlet_expectations,
    "dirichlet.conjugacy_grid": check_conjugacy,
    "loss.closed_forms": check_closed_form_losses,
    "uncertainty.asymptotic_mi": check_asymptotic_mi,
    "uncertainty.variance_law": check_variance_law,
    "uncertainty.monotone_agreement": check_monotone_agreement,
    "schedules": check_schedules,
    "gradients.loss_alpha": check_loss_gradients,
    "gradients.mlp_end_to_end": check_mlp_gradients,
    "behaviour.bench_v1": check_behaviour,
}

# wall-time budgets for the suites that carry one
TIME_LIMITS = {"dirichlet.expectations_mc": 60.0, "dirichlet.conjugacy_grid": 10.0}


def run_checks(names=None, skip=(), progress=None):
    results = []
    for name, fn in CHECKS.items():
        if (names and name not in names) or name in skip:
            continue
        res = fn()
        limit = TIME_LIMITS.get(name)
        if limit is not None and res.seconds > limit:
            res.passed = False
            res.detail += f" exceeded time budget {limit:.0f}s"
        results.append(res)
        if progress is not None:
            progress(res)
    return results


def format_report(results):
    lines = [r.line() for r in results]
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
