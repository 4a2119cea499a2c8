"""Exact marginal log-likelihood of the scalar linear Gaussian model.

Two routes are provided: :func:`kalman_loglik` runs the filter recursion
through the generic differentiation helpers (usable with plain floats or
``D2`` numbers, convenient for oracles and small T), and
:func:`kalman_loglik_grad` is a jitted forward-sensitivity recursion that
returns the value and the exact gradient with respect to the transformed
parameters, fast enough to drive HMC at T = 10000.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .spectral import TimeSeries

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


__all__ = ["kalman_loglik", "kalman_loglik_grad"]

_LOG_2PI = float(np.log(2.0 * np.pi))


def kalman_loglik(theta, y):
    """Kalman-filter log-likelihood of the LGSS at transformed parameters.

    theta = (atanh phi, log sigma_eta^2, log sigma_eps^2); the state is
    initialised from its stationary distribution. ``theta`` entries may be
    floats or differentiable numbers.
    """
    obs = y.values[:, 0] if isinstance(y, TimeSeries) else np.asarray(y, dtype=float)
    phi = ad.tanh(theta[0])
    q = ad.exp(theta[1])
    r = ad.exp(theta[2])
    x = 0.0
    P = q / (1.0 - phi * phi)
    ll = 0.0
    for yt in obs:
        S = P + r
        v = yt - x
        ll = ll - 0.5 * (_LOG_2PI + ad.log(S) + v * v / S)
        K = P / S
        xf = x + K * v
        Pf = (1.0 - K) * P
        x = phi * xf
        P = phi * phi * Pf + q
    return ll


@njit(cache=True, error_model="numpy")
def _kalman_value_grad(theta, obs):  # pragma: no cover - exercised via wrapper
    phi = np.tanh(theta[0])
    q = np.exp(theta[1])
    r = np.exp(theta[2])
    # derivatives of (phi, q, r) w.r.t. theta
    dphi = 1.0 - phi * phi
    x = 0.0
    dx = np.zeros(3)
    P = q / (1.0 - phi * phi)
    dP = np.zeros(3)
    dP[0] = 2.0 * phi * q / (1.0 - phi * phi)  # dP/dphi * dphi/dtheta1
    dP[1] = P
    ll = 0.0
    g = np.zeros(3)
    for t in range(obs.shape[0]):
        S = P + r
        dS0 = dP[0]
        dS1 = dP[1]
        dS2 = dP[2] + r
        v = obs[t] - x
        ll += -0.5 * (_LOG_2PI + np.log(S) + v * v / S)
        inv_s = 1.0 / S
        # d ll_t = -0.5 * (dS/S + (2 v dv S - v^2 dS) / S^2)
        g[0] += -0.5 * (dS0 * inv_s + (-2.0 * v * dx[0] * S - v * v * dS0) * inv_s * inv_s)
        g[1] += -0.5 * (dS1 * inv_s + (-2.0 * v * dx[1] * S - v * v * dS1) * inv_s * inv_s)
        g[2] += -0.5 * (dS2 * inv_s + (-2.0 * v * dx[2] * S - v * v * dS2) * inv_s * inv_s)
        K = P * inv_s
        dK0 = (dP[0] * S - P * dS0) * inv_s * inv_s
        dK1 = (dP[1] * S - P * dS1) * inv_s * inv_s
        dK2 = (dP[2] * S - P * dS2) * inv_s * inv_s
        xf = x + K * v
        dxf0 = dx[0] + dK0 * v - K * dx[0]
        dxf1 = dx[1] + dK1 * v - K * dx[1]
        dxf2 = dx[2] + dK2 * v - K * dx[2]
        Pf = (1.0 - K) * P
        dPf0 = -dK0 * P + (1.0 - K) * dP[0]
        dPf1 = -dK1 * P + (1.0 - K) * dP[1]
        dPf2 = -dK2 * P + (1.0 - K) * dP[2]
        x = phi * xf
        dx[0] = dphi * xf + phi * dxf0
        dx[1] = phi * dxf1
        dx[2] = phi * dxf2
        P = phi * phi * Pf + q
        dP[0] = 2.0 * phi * dphi * Pf + phi * phi * dPf0
        dP[1] = phi * phi * dPf1 + q
        dP[2] = phi * phi * dPf2
    return ll, g


def kalman_loglik_grad(theta, y):
    """Value and exact gradient of :func:`kalman_loglik` (fast path).

    Agrees with forward-mode differentiation of the generic recursion to
    floating-point roundoff (asserted in the test suite).
    """
    obs = y.values[:, 0] if isinstance(y, TimeSeries) else np.asarray(y, dtype=float)
    theta = np.ascontiguousarray(theta, dtype=float)
    ll, g = _kalman_value_grad(theta, np.ascontiguousarray(obs))
    return float(ll), np.asarray(g)
