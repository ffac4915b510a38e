"""End-to-end acceptance checks. Each test records one PASS/FAIL verdict line."""
import filecmp
import time

import numpy as np

from carrytail.analytics import exposure_adjusted_returns, regress_basket_td
from carrytail.baskets import CarrySeries
from carrytail.cli import main
from carrytail.copula import (
    Generator,
    MixtureCopula,
    _frailty,
    copula_density,
    psi,
    psi_deriv,
    psi_inverse,
    sample_copula,
)
from carrytail.fitting import fit_mixture_mle, select_model
from carrytail.marginals import fit_garch11, fit_lggd_profile, lggd_sample, simulate_garch11
from carrytail.synthetic import bundled_data_dir
from carrytail.taildep import (
    archimedean_lower_td,
    archimedean_upper_td,
    mixture_td,
    robust_pairwise_td,
)
from carrytail.taildep import TailDepEstimate

GENERATORS = (
    Generator("clayton", 2.0),
    Generator("gumbel", 2.0),
    Generator("frank", 3.0),
    Generator("op_clayton", 1.0, 1.5),
)


def _elapsed(t0):
    return f"{time.perf_counter() - t0:.1f}s"


def test_criterion_01_generator_derivatives(verdict):
    t0 = time.perf_counter()
    worst, signs_ok = 0.0, True
    for g in GENERATORS:
        for m in range(1, 6):
            for t in (0.1, 1.0, 10.0):
                h = 1e-4 * t
                lower = psi(g, t - h) if m == 1 else psi_deriv(g, t - h, m - 1)
                upper = psi(g, t + h) if m == 1 else psi_deriv(g, t + h, m - 1)
                fd = (upper - lower) / (2 * h)
                exact = psi_deriv(g, t, m)
                worst = max(worst, abs(fd / exact - 1))
        grid = np.geomspace(1e-3, 50, 200)
        for m in range(1, 7):
            signs_ok &= bool(np.all((-1) ** m * psi_deriv(g, grid, m) > 0))
    verdict(1, worst < 1e-6 and signs_ok and time.perf_counter() - t0 < 5,
            f"max rel FD error {worst:.2e}, sign alternation {signs_ok}, {_elapsed(t0)}")


def test_criterion_02_density_normalization(verdict):
    t0 = time.perf_counter()
    m = 400
    x = (np.arange(m) + 0.5) / m
    grid = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
    totals = [copula_density(MixtureCopula.single(g), grid).sum() / m**2 for g in GENERATORS]
    dev = max(abs(s - 1) for s in totals)
    verdict(2, dev < 1e-3 and time.perf_counter() - t0 < 30,
            "integrals " + ", ".join(f"{s:.6f}" for s in totals) + f", {_elapsed(t0)}")


def _mc_lower(g, u, n, seed):
    # conditional on the frailty the coordinates are independent with P(U < u | V) = exp(-V psi^-1(u))
    e = np.exp(-_frailty(g, np.random.default_rng(seed), n) * float(psi_inverse(g, u)))
    return float(np.mean(e * e) / np.mean(e))


def _mc_upper(g, u, n, seed):
    e = -np.expm1(-_frailty(g, np.random.default_rng(seed), n) * float(psi_inverse(g, u)))
    return float(np.mean(e * e) / np.mean(e))


def test_criterion_03_tail_dependence_oracles(verdict):
    t0 = time.perf_counter()
    rows = []
    for i, th in enumerate((1.0, 2.0, 4.0)):
        g = Generator("clayton", th)
        exact = archimedean_lower_td(g, 2, 1)
        mc = _mc_lower(g, 0.001, 10**6, 300 + i)
        emp = robust_pairwise_td(sample_copula(MixtureCopula.single(g), 10**5, 400 + i)).lower
        rows.append(("clayton-lower", th, exact, mc, emp))
    for i, th in enumerate((1.5, 2.0, 3.0)):
        g = Generator("gumbel", th)
        exact = archimedean_upper_td(g, 2, 1)
        mc = _mc_upper(g, 0.999, 10**6, 310 + i)
        emp = robust_pairwise_td(sample_copula(MixtureCopula.single(g), 10**5, 410 + i)).upper
        rows.append(("gumbel-upper", th, exact, mc, emp))
    ok = all(abs(mc - ex) <= 0.03 and abs(emp - ex) <= 0.05 for _, _, ex, mc, emp in rows)
    ok &= time.perf_counter() - t0 < 120
    detail = "; ".join(f"{k}({th:g}) exact {ex:.4f} mc {mc:.4f} emp {emp:.4f}" for k, th, ex, mc, emp in rows)
    verdict(3, ok, detail + f"; {_elapsed(t0)}")


def test_criterion_04_mixture_linearity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        w = rng.dirichlet(np.ones(3))
        comps = (Generator("clayton", rng.uniform(0.1, 8)), Generator("frank", rng.uniform(0.1, 15)),
                 Generator("gumbel", rng.uniform(1, 6)))
        n = int(rng.integers(2, 6))
        est = mixture_td(MixtureCopula(comps, tuple(w), n), n, 1)
        lo = sum(wi * archimedean_lower_td(g, n, 1) for wi, g in zip(w, comps))
        up = sum(wi * archimedean_upper_td(g, n, 1) for wi, g in zip(w, comps))
        worst = max(worst, abs(est.lower - lo), abs(est.upper - up))
    verdict(4, worst <= 1e-12 and time.perf_counter() - t0 < 1, f"max deviation {worst:.1e}, {_elapsed(t0)}")


def test_criterion_05_op_clayton_dimension(verdict):
    t0 = time.perf_counter()
    g = Generator("op_clayton", 1.0, 1.2)
    # one currency conditioned on all the others jointly extreme
    vals = [archimedean_upper_td(g, n, 1) for n in range(2, 6)]
    ok = all(b > a for a, b in zip(vals, vals[1:])) and time.perf_counter() - t0 < 1
    verdict(5, ok, "upper TD n=2..5: " + ", ".join(f"{v:.4f}" for v in vals))


def test_criterion_06_marginal_recovery(verdict):
    t0 = time.perf_counter()
    lggd_hits = 0
    for r in range(20):
        fit = fit_lggd_profile(lggd_sample(1.0, 0.0, 0.5, 5000, np.random.default_rng([6, r])))
        lggd_hits += abs(fit.u) <= 0.05 and abs(fit.b / 0.5 - 1) <= 0.10
    garch_hits = np.zeros(3, dtype=int)
    for r in range(20):
        fit = fit_garch11(simulate_garch11(0.1, 0.1, 0.8, 5000, np.random.default_rng([60, r])))
        garch_hits += [abs(fit.alpha0 - 0.1) <= 0.05, abs(fit.alpha1 - 0.1) <= 0.05, abs(fit.beta1 - 0.8) <= 0.05]
    ok = lggd_hits >= 18 and np.all(garch_hits >= 18) and time.perf_counter() - t0 < 120
    verdict(6, ok, f"lggd {lggd_hits}/20; garch alpha0/alpha1/beta1 "
                   f"{'/'.join(str(h) for h in garch_hits)} of 20, {_elapsed(t0)}")


def test_criterion_07_ifm_recovery(verdict):
    t0 = time.perf_counter()
    truth = MixtureCopula((Generator("clayton", 2.0), Generator("gumbel", 2.0)), (0.5, 0.5), 3)
    w, tc, tg, monotone = [], [], [], True
    for r in range(10):
        fit = fit_mixture_mle(sample_copula(truth, 3000, 700 + r), "CG", seed=r)
        monotone &= fit.loglik_copula >= fit.init_loglik
        w.append(fit.model.weights[0])
        tc.append(fit.model.components[0].theta)
        tg.append(fit.model.components[1].theta)
    mw, mc, mg = np.median(w), np.median(tc), np.median(tg)
    ok = abs(mw - 0.5) <= 0.1 and abs(mc / 2 - 1) <= 0.15 and abs(mg / 2 - 1) <= 0.15 and monotone
    ok &= time.perf_counter() - t0 < 300
    verdict(7, ok, f"median w_C {mw:.3f}, theta_C {mc:.3f}, theta_G {mg:.3f}, "
                   f"loglik >= init {monotone}, {_elapsed(t0)}")


def test_criterion_08_model_selection(verdict):
    t0 = time.perf_counter()
    picks = []
    for r in range(50):
        u = sample_copula(MixtureCopula.single(Generator("clayton", 3.0)), 2000, 800 + r)
        fits = [fit_mixture_mle(u, fam, seed=r) for fam in ("CFG", "CG", "OPC")]
        picks.append(select_model(fits).family)
    share = sum(p in ("CG", "CFG") for p in picks) / len(picks)
    ok = share >= 0.8 and time.perf_counter() - t0 < 600
    counts = {f: picks.count(f) for f in ("CFG", "CG", "OPC")}
    verdict(8, ok, f"CG/CFG preferred in {share:.0%} (counts {counts}), {_elapsed(t0)}")


def test_criterion_09_empirical_exact_cases(verdict):
    rng = np.random.default_rng(9)
    x = rng.uniform(size=500)
    comono = robust_pairwise_td(np.column_stack([x, np.exp(x)]))
    ok_comono = comono.lower == 1.0 and comono.upper == 1.0
    u = sample_copula(MixtureCopula.single(Generator("clayton", 2.0)), 1000, 90)
    a, b = robust_pairwise_td(u), robust_pairwise_td(1.0 - u)
    ok_reflect = a.lower == b.upper and a.upper == b.lower
    mapped = robust_pairwise_td(np.column_stack([np.log(u[:, 0]), np.tan(u[:, 1] - 0.5)]))
    ok_rank = (mapped.lower, mapped.upper) == (a.lower, a.upper)
    verdict(9, ok_comono and ok_reflect and ok_rank,
            f"comonotone {ok_comono}, reflection {ok_reflect}, monotone maps {ok_rank}")


def test_criterion_10_end_to_end_determinism(verdict, tmp_path):
    t0 = time.perf_counter()
    cfg = str(bundled_data_dir() / "synthetic.cfg")
    dirs = [tmp_path / name for name in ("jobs1_a", "jobs1_b", "jobs8")]
    codes = [main(["run", "--config", cfg, "--out", str(d), "--jobs", jobs])
             for d, jobs in zip(dirs, ("1", "1", "8"))]
    names = sorted(p.name for p in dirs[0].iterdir())
    same = all(sorted(p.name for p in d.iterdir()) == names for d in dirs[1:])
    for d in dirs[1:]:
        match, mismatch, errors = filecmp.cmpfiles(dirs[0], d, names, shallow=False)
        same &= not mismatch and not errors
    complete = (dirs[0] / "MANIFEST").read_text().startswith("status: complete")
    ok = codes == [0, 0, 0] and same and complete and time.perf_counter() - t0 < 300
    verdict(10, ok, f"{len(names)} files, identical {same}, exit codes {codes}, {_elapsed(t0)}")


def test_criterion_11_exposure_identities(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    r = rng.normal(0, 0.02, 200)
    dates = np.datetime64("2020-01-01") + 21 * np.arange(r.size)
    carry = CarrySeries(dates, r, np.zeros_like(r), r)

    def td(lower, upper):
        return {d: TailDepEstimate(float(lo), float(up), "p") for d, lo, up in zip(dates, lower, upper)}

    zeros, ones = np.zeros(r.size), np.ones(r.size)
    a = exposure_adjusted_returns(carry, td(zeros, zeros), td(zeros, zeros))
    ok_zero = np.array_equal(a.adj_high, r) and np.array_equal(a.adj_low, r)
    b = exposure_adjusted_returns(carry, td(ones, ones), td(ones, ones))
    ok_one = np.all(b.adj_high == 0) and np.all(b.adj_low == 0)
    lo, up = rng.uniform(size=r.size), rng.uniform(size=r.size)
    c = exposure_adjusted_returns(carry, td(lo, up), td(up, lo))
    ok_bound = np.all(np.abs(c.adj_high) <= np.abs(r)) and np.all(np.abs(c.adj_low) <= np.abs(r))
    ok = ok_zero and ok_one and ok_bound and time.perf_counter() - t0 < 1
    verdict(11, ok, f"TD=0 identity {ok_zero}, TD=1 zero {ok_one}, |adj| <= |raw| {ok_bound}")


def test_criterion_12_ols_oracle(verdict):
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(25):
        n, p = int(rng.integers(10, 30)), int(rng.integers(1, 4))
        X, y = rng.normal(size=(n, p)), rng.normal(size=n)
        fit = regress_basket_td(y, X)
        A = np.column_stack([np.ones(n), X])
        beta = np.linalg.solve(A.T @ A, A.T @ y)
        worst = max(worst, float(np.max(np.abs(np.r_[fit.intercept, fit.coefficients] - beta))))
    x = np.linspace(0, 1, 15)
    perfect = regress_basket_td(0.3 + 2 * x, x[:, None]).r_squared
    verdict(12, worst <= 1e-10 and perfect == 1.0, f"max coefficient deviation {worst:.1e}, perfect-fit R2 {perfect!r}")
