"""Sequential variational Gaussian engine driven by frequency-domain data.

The engine traverses the retained periodogram ordinates in order of
increasing frequency. The first few frequencies are processed with damped
sub-steps, frequencies up to the power cutoff individually, and the
remainder in blocks, each update moving a Gaussian approximation
``Gau(mu, Sigma)`` over the transformed parameters:

    Sigma_new^{-1} = Sigma^{-1} - a * E_q[hessian of contribution]
    mu_new         = mu + a * Sigma_new * E_q[gradient of contribution]

with the expectations estimated from Monte Carlo samples of the current
Gaussian. Note the mean step uses the already-updated covariance.

If an update would destroy positive definiteness of the precision, the
step factor is halved and the update retried with fresh Monte Carlo
draws, up to ``max_retries`` times.

Randomness is drawn from per-update streams keyed by
(master seed, update index, sub-step, retry), so results are
reproducible regardless of evaluation chunking or thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky

from . import autodiff as ad
from .models import whittle_loglik_block
from .spectral import (
    TimeSeries,
    compute_periodogram,
    find_cutoff,
    make_block_plan,
    welch_smooth,
)

__all__ = [
    "NotPositiveDefiniteError",
    "RvgaAbort",
    "VariationalState",
    "RvgaConfig",
    "TrajectoryPoint",
    "Trajectory",
    "mc_grad_hess_expectation",
    "rvga_update",
    "run_rvga_whittle",
    "draw_posterior",
]

_MC_CHUNK = 256  # fixed so the reduction order never depends on threading


class NotPositiveDefiniteError(Exception):
    """An update produced a precision matrix without a Cholesky factor."""


class RvgaAbort(Exception):
    """The run loop exhausted its retries at some update."""


class VariationalState:
    """Gaussian (mu, Sigma) with cached precision and Cholesky factors."""

    __slots__ = ("mu", "Sigma", "Sigma_inv", "chol_Sigma")

    def __init__(self, mu, Sigma, Sigma_inv=None):
        self.mu = np.asarray(mu, dtype=float)
        self.Sigma = 0.5 * (np.asarray(Sigma, dtype=float) + np.asarray(Sigma, dtype=float).T)
        try:
            self.chol_Sigma = cholesky(self.Sigma, lower=True)
        except np.linalg.LinAlgError as e:
            raise NotPositiveDefiniteError(str(e)) from None
        if Sigma_inv is None:
            Sigma_inv = cho_solve((self.chol_Sigma, True), np.eye(self.p))
        self.Sigma_inv = 0.5 * (Sigma_inv + Sigma_inv.T)

    @property
    def p(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def from_precision(cls, mu, precision):
        precision = 0.5 * (np.asarray(precision) + np.asarray(precision).T)
        try:
            L = cholesky(precision, lower=True)
        except np.linalg.LinAlgError as e:
            raise NotPositiveDefiniteError(str(e)) from None
        Sigma = cho_solve((L, True), np.eye(precision.shape[0]))
        return cls(mu, Sigma, Sigma_inv=precision)


@dataclass
class RvgaConfig:
    S: int = 1000
    n_damp: int = 5
    D: int = 100
    cutoff_ratio: float = 0.5
    block_size: int | None = 100  # None disables blocking
    master_seed: int = 0
    max_retries: int = 8
    n_individual: int | None = None  # override the detected cutoff
    welch_segments: int = 8
    welch_overlap: float = 0.5
    welch_window: str = "hann"
    threads: int = 1
    control_variate: bool = True

    def __post_init__(self):
        if self.S < 1:
            raise ValueError("need at least one Monte Carlo sample")
        if self.D < 1:
            raise ValueError("need at least one damping step")
        if self.block_size is not None and self.block_size < 1:
            raise ValueError("block size must be >= 1")


@dataclass
class TrajectoryPoint:
    index: int
    kind: str  # "individual" or "block"
    mu: np.ndarray
    sigma_diag: np.ndarray
    retries: int


@dataclass
class Trajectory:
    points: list[TrajectoryPoint] = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def mu_matrix(self) -> np.ndarray:
        return np.array([pt.mu for pt in self.points])

    def sigma_diag_matrix(self) -> np.ndarray:
        return np.array([pt.sigma_diag for pt in self.points])


def _eval_chunked(loglik, thetas, threads):
    """Evaluate the contribution on sample chunks; fixed-order reduction."""
    chunks = [thetas[i : i + _MC_CHUNK] for i in range(0, thetas.shape[0], _MC_CHUNK)]

    def one(chunk):
        return loglik(ad.seed_batch(chunk, order=2))

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            outs = list(ex.map(one, chunks))
    else:
        outs = [one(c) for c in chunks]
    return outs


def mc_grad_hess_expectation(state, loglik, S, rng, threads=1, control_variate=True):
    """Monte Carlo estimates of E_q[gradient] and E_q[Hessian].

    ``loglik`` maps a list of seeded parameter numbers to a ``D2`` whose
    value block has one entry per sample.

    With ``control_variate=False`` the estimates are the plain sample
    means over theta^(s) = mu + L z^(s). The default subtracts the
    estimated-Hessian image of the mean sample deviation from the
    gradient estimate; since E_q[H (theta - mu)] = 0 this changes nothing
    in expectation but removes the locally-linear part of the gradient
    noise, which otherwise accumulates over thousands of updates.
    """
    if S < 1:
        raise ValueError("need at least one Monte Carlo sample")
    p = state.p
    z = rng.standard_normal((S, p))
    dev = z @ state.chol_Sigma.T
    thetas = state.mu[None, :] + dev
    gsum = np.zeros(p)
    hsum = np.zeros((p, p))
    for chunk_i, out in enumerate(_eval_chunked(loglik, thetas, threads)):
        g = np.broadcast_to(out.g, out.v.shape + (p,))
        h = np.broadcast_to(out.h, out.v.shape + (p, p))
        if not (np.all(np.isfinite(out.v)) and np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            bad = np.nonzero(~np.isfinite(np.asarray(out.v, dtype=float)))[0]
            s = chunk_i * _MC_CHUNK + (int(bad[0]) if bad.size else 0)
            raise FloatingPointError(
                f"non-finite gradient/Hessian at Monte Carlo sample {s}, theta={thetas[s]}"
            )
        gsum += g.reshape(-1, p).sum(axis=0)
        hsum += h.reshape(-1, p, p).sum(axis=0)
    gbar = gsum / S
    hbar = hsum / S
    hbar = 0.5 * (hbar + hbar.T)
    if control_variate:
        gbar = gbar - hbar @ dev.mean(axis=0)
    return gbar, hbar


def rvga_update(state: VariationalState, gbar, Hbar, a: float) -> VariationalState:
    """One damped natural-gradient update of the Gaussian approximation.

    The precision is updated first; the mean step then uses the new
    covariance. Raises :class:`NotPositiveDefiniteError` when the updated
    precision has no Cholesky factor.
    """
    if not 0.0 < a <= 1.0:
        raise ValueError("step factor a must lie in (0, 1]")
    gbar = np.asarray(gbar, dtype=float)
    Hbar = np.asarray(Hbar, dtype=float)
    if not Hbar.any() and not gbar.any():
        return state
    new = VariationalState.from_precision(state.mu, state.Sigma_inv - a * Hbar)
    new.mu = state.mu + a * (new.Sigma @ gbar)
    return new


def _attempt_update(state, loglik, a, config, stream_key):
    """Run one update with retries; halve the step factor on PD failure."""
    a_eff = a
    for retry in range(config.max_retries + 1):
        rng = np.random.default_rng(list(stream_key) + [retry])
        gbar, hbar = mc_grad_hess_expectation(
            state, loglik, config.S, rng,
            threads=config.threads, control_variate=config.control_variate,
        )
        try:
            return rvga_update(state, gbar, hbar, a_eff), retry
        except NotPositiveDefiniteError:
            a_eff /= 2.0
    raise RvgaAbort(
        f"update {stream_key[1]} failed to keep the precision positive definite "
        f"after {config.max_retries} step halvings"
    )


def plan_frequencies(model, y: TimeSeries, config: RvgaConfig):
    """Periodogram plus the individual/block schedule for a run."""
    z = model.prepare(y)
    P = compute_periodogram(z)
    if config.n_individual is not None:
        n_tilde = min(config.n_individual, P.K)
    else:
        sm = welch_smooth(
            z, config.welch_segments, config.welch_overlap, config.welch_window
        )
        n_tilde = find_cutoff(sm, config.cutoff_ratio)
    if config.block_size is None:
        n_tilde = P.K
    plan = make_block_plan(P.K, n_tilde, config.block_size or 1)
    return P, plan


def run_rvga_whittle(model, y: TimeSeries, prior: VariationalState, config: RvgaConfig):
    """Sequential variational run over the frequency grid.

    Returns the final state and the trajectory (one point per individual
    frequency or block, recorded after the update is accepted).
    """
    P, plan = plan_frequencies(model, y, config)
    state = prior
    traj = Trajectory()
    update = 0
    for k in range(1, plan.n_individual + 1):
        update += 1

        def loglik(th, k=k):
            return whittle_loglik_block(model, th, range(k, k + 1), P)

        retries = 0
        if k <= config.n_damp:
            for sub in range(1, config.D + 1):
                state, r = _attempt_update(
                    state, loglik, 1.0 / config.D, config,
                    (config.master_seed, update, sub),
                )
                retries += r
        else:
            state, retries = _attempt_update(
                state, loglik, 1.0, config, (config.master_seed, update, 0)
            )
        traj.points.append(
            TrajectoryPoint(update, "individual", state.mu.copy(), np.diag(state.Sigma).copy(), retries)
        )
    for block in plan.blocks:
        update += 1

        def loglik(th, block=block):
            return whittle_loglik_block(model, th, block, P)

        state, retries = _attempt_update(
            state, loglik, 1.0, config, (config.master_seed, update, 0)
        )
        traj.points.append(
            TrajectoryPoint(update, "block", state.mu.copy(), np.diag(state.Sigma).copy(), retries)
        )
    return state, traj


def draw_posterior(state: VariationalState, n: int, seed: int) -> np.ndarray:
    """Draw transformed-parameter samples from the final Gaussian."""
    rng = np.random.default_rng([seed, 0xD2A])
    z = rng.standard_normal((n, state.p))
    return state.mu[None, :] + z @ state.chol_Sigma.T
