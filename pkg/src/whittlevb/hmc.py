"""Fixed-step Hamiltonian Monte Carlo over transformed parameters.

Targets are callables ``theta -> (log posterior, gradient)``. The sampler
is plain HMC with a fixed number of leapfrog steps and an optional
dual-averaging warmup of the step size (target acceptance 0.8, frozen
after burn-in). Chains own their RNG streams and can be run independently.

For the scalar AR(1)-plus-noise spectral form (linear Gaussian model and
univariate stochastic volatility) a jitted closed-form value/gradient
kernel is provided; it agrees with the forward-mode differentiation path
to roundoff and is what the CLI uses at scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .kalman import kalman_loglik_grad
from .models import NOISE_FLOOR_SV, whittle_loglik_full
from .spectral import Periodogram

try:
    from numba import njit
except ImportError:  # pragma: no cover

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


__all__ = [
    "GaussianPrior",
    "HmcConfig",
    "Chain",
    "leapfrog",
    "run_hmc",
    "ess",
    "log_posterior_whittle",
    "make_whittle_target",
    "make_kalman_target",
]


class GaussianPrior:
    """Multivariate Gaussian prior with cached factors."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.chol = np.linalg.cholesky(self.cov)
        self.prec = np.linalg.inv(self.cov)
        sign, logdet = np.linalg.slogdet(self.cov)
        self._lognorm = -0.5 * (self.p * np.log(2 * np.pi) + logdet)

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    def logpdf_grad(self, theta):
        delta = np.asarray(theta, dtype=float) - self.mean
        g = -self.prec @ delta
        return self._lognorm + 0.5 * float(delta @ g), g

    def sample(self, rng) -> np.ndarray:
        return self.mean + self.chol @ rng.standard_normal(self.p)


@dataclass
class HmcConfig:
    epsilon: float = 0.1
    L: int = 20
    J: int = 10000
    burnin: int = 1000
    n_chains: int = 2
    mass_diag: np.ndarray | None = None  # defaults to the prior precision diagonal
    seed: int = 0
    adapt_epsilon: bool = True
    target_accept: float = 0.8

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.L < 1 or self.J < 1:
            raise ValueError("L and J must be >= 1")


@dataclass
class Chain:
    draws: np.ndarray  # (J, p)
    accept_rate: float
    log_post: np.ndarray
    divergences: int = 0
    epsilon: float = 0.0


def leapfrog(theta, r, epsilon, grad_fn, mass_diag=None):
    """One leapfrog step: half momentum kick, position drift, half kick."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    m = np.ones_like(theta) if mass_diag is None else np.asarray(mass_diag, dtype=float)
    r_half = r + 0.5 * epsilon * np.asarray(grad_fn(theta), dtype=float)
    theta_star = theta + epsilon * r_half / m
    g = np.asarray(grad_fn(theta_star), dtype=float)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient in leapfrog step")
    r_star = r_half + 0.5 * epsilon * g
    return theta_star, r_star


def run_hmc(target, config: HmcConfig, prior: GaussianPrior, init=None) -> list[Chain]:
    """Run ``n_chains`` independent chains; returns kept draws per chain."""
    chains = []
    for c in range(config.n_chains):
        rng = np.random.default_rng([config.seed, c])
        draws, log_post, divergences, eps, accept_rate = _run_chain_full(
            target, config, prior, rng, init
        )
        chains.append(
            Chain(
                draws=draws,
                accept_rate=accept_rate,
                log_post=log_post,
                divergences=divergences,
                epsilon=eps,
            )
        )
    return chains


def _run_chain_full(target, config, prior, rng, init):
    p = prior.p
    m = (
        np.diag(prior.prec).copy()
        if config.mass_diag is None
        else np.asarray(config.mass_diag, dtype=float)
    )
    theta = prior.sample(rng) if init is None else np.asarray(init, dtype=float)
    val, grad = target(theta)
    if not np.isfinite(val):
        raise FloatingPointError("target not finite at the initial point")
    eps = config.epsilon
    mu_da = np.log(10.0 * eps)
    h_bar, log_eps_bar = 0.0, np.log(eps)
    gamma, t0, kappa = 0.05, 10.0, 0.75
    total = config.burnin + config.J
    draws = np.empty((config.J, p))
    log_post = np.empty(config.J)
    accepted = 0
    divergences = 0
    for j in range(1, total + 1):
        r0 = rng.standard_normal(p) * np.sqrt(m)
        th, r, v, g = theta, r0, val, grad
        diverged = False
        for _ in range(config.L):
            r = r + 0.5 * eps * g
            th = th + eps * r / m
            v, g = target(th)
            if not (np.isfinite(v) and np.all(np.isfinite(g))):
                diverged = True
                break
            r = r + 0.5 * eps * g
        if diverged:
            alpha = 0.0
        else:
            dh = (-val + 0.5 * float(np.sum(r0 * r0 / m))) - (
                -v + 0.5 * float(np.sum(r * r / m))
            )
            if abs(dh) > 1000.0:
                diverged = True
                alpha = 0.0
            else:
                alpha = float(min(1.0, np.exp(min(dh, 0.0))))
        divergences += int(diverged)
        if rng.uniform() < alpha:
            theta, val, grad = th, v, g
            if j > config.burnin:
                accepted += 1
        if config.adapt_epsilon and j <= config.burnin:
            frac = 1.0 / (j + t0)
            h_bar = (1.0 - frac) * h_bar + frac * (config.target_accept - alpha)
            log_eps = mu_da - np.sqrt(j) / gamma * h_bar
            eta = j**-kappa
            log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar
            eps = float(np.exp(log_eps))
            if j == config.burnin:
                eps = float(np.exp(log_eps_bar))
        if j > config.burnin:
            draws[j - config.burnin - 1] = theta
            log_post[j - config.burnin - 1] = val
    return draws, log_post, divergences, eps, accepted / config.J


def ess(draws: np.ndarray) -> np.ndarray:
    """Effective sample size per column, initial-monotone-sequence rule."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    n = draws.shape[0]
    if n < 10:
        raise ValueError("need at least 10 draws")
    out = np.empty(draws.shape[1])
    for col in range(draws.shape[1]):
        x = draws[:, col] - draws[:, col].mean()
        c0 = float(x @ x) / n
        if c0 == 0.0:
            out[col] = 1.0
            continue
        nfft = 1 << int(np.ceil(np.log2(2 * n)))
        f = np.fft.rfft(x, nfft)
        acov = np.fft.irfft(f * np.conj(f))[:n].real / n
        rho = acov / acov[0]
        total = 0.0
        prev = np.inf
        for mpair in range(n // 2):
            gam = rho[2 * mpair] + (rho[2 * mpair + 1] if 2 * mpair + 1 < n else 0.0)
            if gam <= 0.0:
                break
            gam = min(gam, prev)
            prev = gam
            total += gam
        tau = max(2.0 * total - 1.0, 1.0 / n)
        out[col] = max(n / tau, 1.0)
    return out


# -- posterior targets ----------------------------------------------------


def log_posterior_whittle(model, theta, P: Periodogram, prior: GaussianPrior):
    """Whittle log posterior and gradient via forward-mode differentiation."""
    th = ad.seed(np.asarray(theta, dtype=float), order=1)
    out = whittle_loglik_full(model, th, P)
    pv, pg = prior.logpdf_grad(theta)
    return float(out.v) + pv, np.asarray(out.g, dtype=float) + pg


@njit(cache=True, error_model="numpy")
def _ar1_whittle_vg(theta, omega, ords, fixed_noise, has_eps):  # pragma: no cover
    phi = np.tanh(theta[0])
    se = np.exp(theta[1])
    c = np.exp(theta[2]) if has_eps else fixed_noise
    sech2 = 1.0 - phi * phi
    ll = 0.0
    g = np.zeros(3 if has_eps else 2)
    for k in range(omega.shape[0]):
        cw = np.cos(omega[k])
        v = 1.0 + phi * phi - 2.0 * phi * cw
        fx = se / v
        f = fx + c
        I = ords[k]
        ll += -(np.log(f) + I / f)
        w = (1.0 / f) * (1.0 - I / f)  # d(log f + I/f)/df
        df0 = fx * (2.0 * cw - 2.0 * phi) * sech2 / v
        g[0] += -df0 * w
        g[1] += -fx * w
        if has_eps:
            g[2] += -c * w
    return ll, g


def make_whittle_target(model, P: Periodogram, prior: GaussianPrior, fast: bool = True):
    """Build ``theta -> (log posterior, gradient)`` for the Whittle target.

    ``fast=True`` selects the closed-form kernel for the scalar families;
    the bivariate family always uses the generic differentiation path.
    """
    if fast and model.family in ("lgss", "sv1"):
        omega = np.ascontiguousarray(P.frequencies)
        ords = np.ascontiguousarray(P.ordinates, dtype=float)
        has_eps = model.family == "lgss"

        def target(theta):
            theta = np.asarray(theta, dtype=float)
            ll, g = _ar1_whittle_vg(
                np.ascontiguousarray(theta), omega, ords, NOISE_FLOOR_SV, has_eps
            )
            pv, pg = prior.logpdf_grad(theta)
            return ll + pv, g + pg

        return target

    def target(theta):
        return log_posterior_whittle(model, theta, P, prior)

    return target


def make_kalman_target(y, prior: GaussianPrior):
    """Exact-likelihood posterior target for the linear Gaussian model."""
    obs = np.ascontiguousarray(
        y.values[:, 0] if hasattr(y, "values") else np.asarray(y, dtype=float)
    )

    def target(theta):
        theta = np.asarray(theta, dtype=float)
        ll, g = kalman_loglik_grad(theta, obs)
        pv, pg = prior.logpdf_grad(theta)
        return ll + pv, g + pg

    return target
