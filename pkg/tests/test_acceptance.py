"""Acceptance gate: 12 criteria at pinned tolerances.

Each test prints one ``CRITERION n: PASS`` / ``FAIL`` line (bypassing
pytest capture) and asserts the criterion. Benchmark datasets are frozen
by seed; the heavy fits are shared through module-scoped fixtures.
"""

import time

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.stats import multivariate_normal

from whittlevb import autodiff as ad
from whittlevb.hmc import (
    GaussianPrior,
    HmcConfig,
    ess,
    leapfrog,
    make_kalman_target,
    make_whittle_target,
    run_hmc,
)
from whittlevb.kalman import kalman_loglik, kalman_loglik_grad
from whittlevb.models import (
    BsvParams,
    LgssParams,
    SvParams,
    estimate_mu_kappa,
    get_model,
    whittle_loglik_freq,
)
from whittlevb.rvga import (
    RvgaConfig,
    VariationalState,
    draw_posterior,
    run_rvga_whittle,
    rvga_update,
)
from whittlevb.sim import SimSpec, simulate
from whittlevb.spectral import TimeSeries, compute_periodogram

LGSS_TRUTH = LgssParams(phi=0.9, sigma_eta=0.7, sigma_eps=0.5)
SV1_TRUTH = SvParams(phi=0.99, sigma_eta=0.1, kappa=2.0)
BSV_TRUTH = BsvParams(
    Phi=np.diag([0.99, 0.98]),
    Sigma_eta=np.array([[0.02, 0.005], [0.005, 0.01]]),
)

LGSS_PRIOR = (np.array([0.0, -1.0, -1.0]), np.eye(3))
HMC_SETTINGS = dict(epsilon=0.05, L=20, J=10000, burnin=1000, n_chains=2, seed=7)


def criterion(request, n: int, ok: bool, detail: str = ""):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    cap = request.config.pluginmanager.getplugin("capturemanager")
    if cap is not None:
        with cap.global_and_fixture_disabled():
            print(line, flush=True)
    else:  # pragma: no cover
        print(line, flush=True)
    assert ok, line


# -- shared benchmark fits -------------------------------------------------


@pytest.fixture(scope="module")
def lgss_data():
    return simulate(SimSpec("lgss", LGSS_TRUTH, 10000, 3))


@pytest.fixture(scope="module")
def lgss_rvga(lgss_data):
    model = get_model("lgss")
    cfg = RvgaConfig(S=1000, n_individual=176, block_size=100, master_seed=0)
    t0 = time.perf_counter()
    state, _ = run_rvga_whittle(model, lgss_data,
                                VariationalState(*LGSS_PRIOR), cfg)
    seconds = time.perf_counter() - t0
    draws = draw_posterior(state, 20000, seed=0)
    return {"state": state, "draws": draws, "seconds": seconds, "model": model}


@pytest.fixture(scope="module")
def lgss_hmc_whittle(lgss_data):
    model = get_model("lgss")
    P = compute_periodogram(lgss_data)
    prior = GaussianPrior(*LGSS_PRIOR)
    target = make_whittle_target(model, P, prior)
    cfg = HmcConfig(**HMC_SETTINGS)
    t0 = time.perf_counter()
    chains = run_hmc(target, cfg, prior)
    seconds = time.perf_counter() - t0
    return {"chains": chains, "seconds": seconds, "model": model}


@pytest.fixture(scope="module")
def lgss_hmc_exact(lgss_data):
    prior = GaussianPrior(*LGSS_PRIOR)
    target = make_kalman_target(lgss_data, prior)
    cfg = HmcConfig(**HMC_SETTINGS)
    t0 = time.perf_counter()
    chains = run_hmc(target, cfg, prior)
    seconds = time.perf_counter() - t0
    return {"chains": chains, "seconds": seconds}


def _chain_draws(chains):
    return np.vstack([c.draws for c in chains])


def _pooled_sd(a, b):
    return np.sqrt(0.5 * (a.std(axis=0, ddof=1) ** 2 + b.std(axis=0, ddof=1) ** 2))


# -- criteria --------------------------------------------------------------


def test_criterion_1_parseval(request):
    t0 = time.perf_counter()
    ok = True
    for T in (64, 1000, 4096):
        rng = np.random.default_rng(T)
        y = rng.standard_normal(T)
        yc = y - y.mean()
        F = np.fft.fft(yc)
        full = np.abs(F) ** 2 / T
        ok &= abs(full.sum() - np.sum(yc**2)) <= 1e-8 * np.sum(yc**2)
        # retained ordinates are the matching slice of the full grid
        P = compute_periodogram(TimeSeries(y))
        ok &= np.allclose(P.ordinates, full[1 : P.K + 1], rtol=1e-10)
    elapsed = time.perf_counter() - t0
    criterion(request, 1, ok and elapsed < 1.0, f"{elapsed:.2f} s")


def test_criterion_2_ad_correctness(request):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    max_rel = 0.0
    max_asym = 0.0
    for family in ("lgss", "sv1", "bsv"):
        model = get_model(family)
        for _ in range(20):
            theta = rng.normal(scale=0.5, size=model.p)
            theta[0] += 1.0
            omega = float(rng.uniform(0.05, 3.0))
            if model.d == 1:
                I_k = float(rng.uniform(0.1, 5.0))
            else:
                z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
                I_k = np.outer(z, np.conj(z))  # Hermitian PSD rank one

            def f(th):
                return whittle_loglik_freq(model, th, omega, I_k)

            exact = ad.grad_hess(f, theta)
            approx = ad.fd_grad_hess(f, theta, h=1e-4)
            gs = max(1.0, np.abs(exact.grad).max())
            hs = max(1.0, np.abs(exact.hess).max())
            max_rel = max(max_rel, np.abs(exact.grad - approx.grad).max() / gs)
            max_rel = max(max_rel, np.abs(exact.hess - approx.hess).max() / hs)
            raw = f(ad.seed(theta)).h
            raw = np.asarray(raw, dtype=float)
            max_asym = max(max_asym, np.abs(raw - raw.T).max() / hs)
    elapsed = time.perf_counter() - t0
    ok = max_rel < 1e-6 and max_asym < 1e-14 and elapsed < 5.0
    criterion(request, 2, ok, f"rel {max_rel:.1e}, asym {max_asym:.1e}, {elapsed:.2f} s")


def test_criterion_3_kalman_oracle(request):
    t0 = time.perf_counter()
    model = get_model("lgss")
    rng = np.random.default_rng(33)
    y = rng.standard_normal(50)
    i = np.arange(50)
    lags = np.abs(i[:, None] - i[None, :])
    worst = 0.0
    for _ in range(10):
        params = LgssParams(
            float(rng.uniform(-0.95, 0.95)),
            float(rng.uniform(0.2, 1.5)),
            float(rng.uniform(0.2, 1.5)),
        )
        C = params.sigma_eta**2 * params.phi**lags / (1 - params.phi**2)
        C += params.sigma_eps**2 * np.eye(50)
        dense = float(multivariate_normal(mean=np.zeros(50), cov=C).logpdf(y))
        kf = float(kalman_loglik(list(model.transform(params)), y))
        worst = max(worst, abs(kf - dense))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 1.0
    criterion(request, 3, ok, f"max abs err {worst:.1e}, {elapsed:.2f} s")


def test_criterion_4_leapfrog(request):
    t0 = time.perf_counter()
    grad = lambda th: -np.asarray(th, dtype=float)
    rng = np.random.default_rng(44)
    theta0 = rng.standard_normal(3)
    r0 = rng.standard_normal(3)
    theta, r = theta0.copy(), r0.copy()
    for _ in range(30):
        theta, r = leapfrog(theta, r, 0.1, grad)
    r = -r
    for _ in range(30):
        theta, r = leapfrog(theta, r, 0.1, grad)
    reversible = (
        np.abs(theta - theta0).max() < 1e-10 and np.abs(-r - r0).max() < 1e-10
    )

    def energy_error(eps):
        L = int(round(1.0 / eps))
        th, rr = theta0.copy(), r0.copy()
        for _ in range(L):
            th, rr = leapfrog(th, rr, eps, grad)
        H0 = 0.5 * float(theta0 @ theta0 + r0 @ r0)
        H1 = 0.5 * float(th @ th + rr @ rr)
        return abs(H1 - H0)

    epss = np.array([0.2, 0.1, 0.05, 0.025])
    errs = np.array([energy_error(e) for e in epss])
    slope = np.polyfit(np.log(epss), np.log(errs), 1)[0]
    elapsed = time.perf_counter() - t0
    ok = reversible and abs(slope - 2.0) < 0.2 and elapsed < 5.0
    criterion(request, 4, ok, f"slope {slope:.3f}, {elapsed:.2f} s")


def test_criterion_5_conjugate_exactness(request):
    t0 = time.perf_counter()
    m0 = np.array([0.3, -0.2])
    S0 = np.array([[1.2, 0.3], [0.3, 0.8]])
    R = np.array([[0.5, 0.1], [0.1, 0.4]])
    x = np.array([1.0, -0.5])
    Rinv = np.linalg.inv(R)
    st = VariationalState(m0, S0)
    out = rvga_update(st, Rinv @ (x - m0), -Rinv, 1.0)
    post_prec = np.linalg.inv(S0) + Rinv
    post_mean = np.linalg.solve(post_prec, np.linalg.solve(S0, m0) + Rinv @ x)
    exact = (
        np.abs(out.Sigma_inv - post_prec).max() < 1e-10
        and np.abs(out.mu - post_mean).max() < 1e-10
    )
    # D damped sub-steps telescope to the full-step precision
    D = 100
    cur = st
    for _ in range(D):
        cur = rvga_update(cur, np.zeros(2), -Rinv, 1.0 / D)
    telescoped = np.abs(cur.Sigma_inv - post_prec).max() < 1e-10
    elapsed = time.perf_counter() - t0
    ok = exact and telescoped and elapsed < 1.0
    criterion(request, 5, ok, f"{elapsed:.2f} s")


def test_criterion_6_lgss_end_to_end(
    request, lgss_rvga, lgss_hmc_whittle, lgss_hmc_exact
):
    model = lgss_rvga["model"]
    nat_rvga = model.natural_draws(lgss_rvga["draws"])
    nat_hw = model.natural_draws(_chain_draws(lgss_hmc_whittle["chains"]))
    nat_he = model.natural_draws(_chain_draws(lgss_hmc_exact["chains"]))
    truth = np.array([0.9, 0.7, 0.5])
    tol = np.array([0.05, 0.10, 0.10])
    means_ok = np.all(np.abs(nat_rvga.mean(axis=0) - truth) < tol)
    dw = np.abs(nat_rvga.mean(axis=0) - nat_hw.mean(axis=0)) / _pooled_sd(
        nat_rvga, nat_hw
    )
    de = np.abs(nat_rvga.mean(axis=0) - nat_he.mean(axis=0)) / _pooled_sd(
        nat_rvga, nat_he
    )
    dwe = np.abs(nat_hw.mean(axis=0) - nat_he.mean(axis=0)) / _pooled_sd(
        nat_hw, nat_he
    )
    agree = max(dw.max(), de.max(), dwe.max()) < 0.5
    t_r = lgss_rvga["seconds"]
    t_w = lgss_hmc_whittle["seconds"]
    t_e = lgss_hmc_exact["seconds"]
    timing = t_r < 120.0 and t_w < 1800.0 and t_e < 1800.0 and t_r < t_w < t_e
    ok = means_ok and agree and timing
    criterion(
        request, 6, ok,
        f"max |dmean|/sd {max(dw.max(), de.max(), dwe.max()):.3f}, "
        f"times {t_r:.0f}/{t_w:.0f}/{t_e:.0f} s",
    )


@pytest.fixture(scope="module")
def sv1_fits():
    model = get_model("sv1")
    y = simulate(SimSpec("sv1", SV1_TRUTH, 10000, 6))
    cfg = RvgaConfig(S=1000, n_individual=75, block_size=100, master_seed=0)
    mean, cov = model.default_prior()
    state, _ = run_rvga_whittle(model, y, VariationalState(mean, cov), cfg)
    draws = draw_posterior(state, 20000, seed=0)
    prior = GaussianPrior(mean, cov)
    P = compute_periodogram(model.prepare(y))
    chains = run_hmc(make_whittle_target(model, P, prior),
                     HmcConfig(**HMC_SETTINGS), prior)
    return {"y": y, "model": model, "rvga": draws, "hmc": _chain_draws(chains)}


def test_criterion_7_sv1_end_to_end(request, sv1_fits):
    model = sv1_fits["model"]
    nat_r = model.natural_draws(sv1_fits["rvga"])
    nat_h = model.natural_draws(sv1_fits["hmc"])
    phi_ok = abs(nat_r[:, 0].mean() - 0.99) < 0.01
    _, kappa_hat = estimate_mu_kappa(sv1_fits["y"])
    kappa_ok = 1.9 <= kappa_hat <= 2.1
    diff = np.abs(nat_r.mean(axis=0) - nat_h.mean(axis=0)) / _pooled_sd(nat_r, nat_h)
    ok = phi_ok and kappa_ok and diff.max() < 0.5
    criterion(
        request, 7, ok,
        f"E[phi] {nat_r[:, 0].mean():.4f}, kappa {kappa_hat:.3f}, "
        f"max diff {diff.max():.3f} sd",
    )


def test_criterion_8_bsv_end_to_end(request):
    model = get_model("bsv")
    y = simulate(SimSpec("bsv", BSV_TRUTH, 5000, 1))
    mean, cov = model.default_prior()
    cfg = RvgaConfig(S=1000, block_size=100, master_seed=0)
    state, _ = run_rvga_whittle(model, y, VariationalState(mean, cov), cfg)
    nat = model.natural_draws(draw_posterior(state, 20000, seed=0))
    truth = np.array([0.99, 0.98, 0.02, 0.005, 0.01])
    z = np.abs(nat.mean(axis=0) - truth) / nat.std(axis=0, ddof=1)
    ok = z.max() < 3.0 and nat[:, 3].mean() > 0
    criterion(request, 8, ok,
              f"max z {z.max():.2f}, E[Sigma_eta21] {nat[:, 3].mean():.4f}")


@pytest.fixture(scope="module")
def lgss_noblock_runs(lgss_data):
    model = get_model("lgss")
    out = []
    for master_seed in range(10):
        cfg = RvgaConfig(S=1000, block_size=None, master_seed=master_seed)
        state, _ = run_rvga_whittle(model, lgss_data,
                                    VariationalState(*LGSS_PRIOR), cfg)
        out.append(state)
    return out


def test_criterion_9_blocking_equivalence(request, lgss_rvga, lgss_noblock_runs):
    model = lgss_rvga["model"]
    blocked = model.natural_draws(lgss_rvga["draws"])
    noblock = model.natural_draws(draw_posterior(lgss_noblock_runs[0], 20000, seed=0))
    diff = np.abs(blocked.mean(axis=0) - noblock.mean(axis=0)) / _pooled_sd(
        blocked, noblock
    )
    ok = diff.max() < 0.1
    criterion(request, 9, ok, f"max diff {diff.max():.3f} pooled sd")


def test_criterion_10_mc_stability(request, lgss_noblock_runs):
    means = np.array([st.mu for st in lgss_noblock_runs])
    sds = np.array([np.sqrt(np.diag(st.Sigma)) for st in lgss_noblock_runs])
    ratio = means.std(axis=0, ddof=1) / sds.mean(axis=0)
    ok = np.all(ratio < 0.05)
    criterion(request, 10, ok,
              "run-to-run sd / posterior sd " + np.array2string(ratio, precision=3))


def test_criterion_11_ess_pattern(request, lgss_hmc_whittle, lgss_hmc_exact):
    # NOTE: expected to fail at this level of the design. The exact-likelihood
    # sampler here targets the Kalman-marginalised 3-parameter posterior, which
    # mixes as well as the Whittle target; an ESS gap favouring the
    # frequency-domain sampler only arises when states are sampled jointly
    # with parameters, which this tool deliberately does not do.
    model = get_model("lgss")

    def total_ess(chains):
        per = [ess(model.natural_draws(c.draws)) for c in chains]
        return np.sum(per, axis=0)

    e_w = total_ess(lgss_hmc_whittle["chains"])
    e_e = total_ess(lgss_hmc_exact["chains"])
    ok = e_w[1] > e_e[1] and e_w[2] > e_e[2]
    criterion(
        request, 11, ok,
        f"whittle ESS (eta, eps) {e_w[1]:.0f}/{e_w[2]:.0f} vs "
        f"exact {e_e[1]:.0f}/{e_e[2]:.0f}",
    )


def test_criterion_12_mle_agreement(request, lgss_data):
    model = get_model("lgss")
    P = compute_periodogram(lgss_data)
    prior = GaussianPrior(np.zeros(3), 1e6 * np.eye(3))  # effectively flat
    whittle = make_whittle_target(model, P, prior)
    obs = lgss_data.values[:, 0]
    theta0 = model.transform(LgssParams(0.5, 1.0, 1.0))

    res_w = minimize(lambda th: -whittle(th)[0], theta0,
                     jac=lambda th: -whittle(th)[1], method="BFGS")
    res_k = minimize(lambda th: -kalman_loglik_grad(th, obs)[0], theta0,
                     jac=lambda th: -kalman_loglik_grad(th, obs)[1], method="BFGS")
    nat_w = model.natural_draws(res_w.x[None, :])[0]
    nat_k = model.natural_draws(res_k.x[None, :])[0]
    diff = np.abs(nat_w - nat_k)
    ok = bool(res_w.success and res_k.success and diff.max() < 0.05)
    criterion(request, 12, ok,
              "natural-parameter diff " + np.array2string(diff, precision=4))
