"""Model families: spectral densities, transforms, Whittle log-likelihoods.

Three families are supported:

* ``lgss``  -- AR(1) latent state observed with additive Gaussian noise.
* ``sv1``   -- univariate stochastic volatility, fitted in log-squared form.
* ``bsv``   -- bivariate stochastic volatility with diagonal VAR(1) states
  and a full state-noise covariance, fitted in log-squared form.

All likelihood code is written against the dispatch helpers in
:mod:`whittlevb.autodiff`, so the same expressions run on plain floats,
numpy arrays, or differentiable :class:`~whittlevb.autodiff.D2` blocks.

Sign convention: ``loglik_*`` functions return log-likelihood
contributions, i.e. the negative of (log f + I/f); the variational and
HMC updates add gradients of this quantity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from . import autodiff as ad
from .spectral import Periodogram, TimeSeries

__all__ = [
    "LgssParams",
    "SvParams",
    "BsvParams",
    "LgssModel",
    "Sv1Model",
    "BsvModel",
    "get_model",
    "whittle_loglik_freq",
    "whittle_loglik_block",
    "whittle_loglik_full",
    "estimate_mu_kappa",
    "log_squared_demean",
    "stationary_covariance",
    "LOG_CHI2_MEAN",
    "NOISE_FLOOR_SV",
]

# E(log eps^2) for eps ~ N(0, 1): psi(1/2) + log 2.
LOG_CHI2_MEAN = float(digamma(0.5) + np.log(2.0))
# Var(log eps^2) = trigamma(1/2) = pi^2 / 2, the measurement spectral floor
# of the log-squared stochastic volatility representation.
NOISE_FLOOR_SV = np.pi**2 / 2.0


@dataclass
class LgssParams:
    phi: float
    sigma_eta: float
    sigma_eps: float

    def __post_init__(self):
        if not abs(self.phi) < 1:
            raise ValueError(f"|phi| must be < 1, got {self.phi}")
        if self.sigma_eta <= 0 or self.sigma_eps <= 0:
            raise ValueError("noise standard deviations must be positive")


@dataclass
class SvParams:
    phi: float
    sigma_eta: float
    kappa: float = 1.0

    def __post_init__(self):
        if not abs(self.phi) < 1:
            raise ValueError(f"|phi| must be < 1, got {self.phi}")
        if self.sigma_eta <= 0:
            raise ValueError("sigma_eta must be positive")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")


@dataclass
class BsvParams:
    Phi: np.ndarray  # 2x2 diagonal
    Sigma_eta: np.ndarray  # 2x2 symmetric positive definite

    def __post_init__(self):
        self.Phi = np.asarray(self.Phi, dtype=float)
        self.Sigma_eta = np.asarray(self.Sigma_eta, dtype=float)
        if self.Phi.shape != (2, 2) or self.Sigma_eta.shape != (2, 2):
            raise ValueError("Phi and Sigma_eta must be 2x2")
        if self.Phi[0, 1] != 0 or self.Phi[1, 0] != 0:
            raise ValueError("Phi must be diagonal")
        if not np.all(np.abs(np.diag(self.Phi)) < 1):
            raise ValueError("diagonal entries of Phi must have modulus < 1")
        np.linalg.cholesky(self.Sigma_eta)  # raises if not PD

    @property
    def chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.Sigma_eta)


def log_squared_demean(y: TimeSeries) -> TimeSeries:
    """Map y_t to log(y_t^2) minus its per-column sample mean."""
    v = y.values
    zeros = np.argwhere(v == 0.0)
    if zeros.size:
        t, c = zeros[0]
        raise ValueError(f"observation at row {t}, column {c} is exactly zero")
    z = np.log(v**2)
    z -= z.mean(axis=0)
    return TimeSeries(values=z, label=f"log-squared({y.label})" if y.label else "")


def estimate_mu_kappa(y: TimeSeries) -> tuple[float, float]:
    """Moment estimates of the log-squared level mu and the scale kappa."""
    if y.d != 1:
        raise ValueError("mu/kappa estimation applies to univariate series")
    v = y.values[:, 0]
    zeros = np.nonzero(v == 0.0)[0]
    if zeros.size:
        raise ValueError(f"observation at index {zeros[0]} is exactly zero")
    mu_hat = float(np.mean(np.log(v**2)))
    kappa_hat = float(np.sqrt(np.exp(mu_hat - LOG_CHI2_MEAN)))
    return mu_hat, kappa_hat


def stationary_covariance(Phi: np.ndarray, Sigma_eta: np.ndarray) -> np.ndarray:
    """Solve S = Phi S Phi' + Sigma_eta via the 4x4 vectorised linear system."""
    Phi = np.asarray(Phi, dtype=float)
    Sigma_eta = np.asarray(Sigma_eta, dtype=float)
    if np.max(np.abs(np.linalg.eigvals(Phi))) >= 1:
        raise ValueError("Phi must have spectral radius < 1")
    n = Phi.shape[0]
    A = np.eye(n * n) - np.kron(Phi, Phi)
    S = np.linalg.solve(A, Sigma_eta.reshape(-1, order="F")).reshape((n, n), order="F")
    return 0.5 * (S + S.T)


def _ar1_density(theta_phi, theta_eta, omega):
    phi = ad.tanh(theta_phi)
    denom = 1.0 + phi * phi - phi * (2.0 * np.cos(omega))
    return ad.exp(theta_eta) / denom


class LgssModel:
    """Linear Gaussian state space model: AR(1) state plus white noise."""

    family = "lgss"
    d = 1
    p = 3
    transformed_names = ("theta_phi", "theta_eta", "theta_eps")
    natural_names = ("phi", "sigma_eta", "sigma_eps")

    def transform(self, params: LgssParams) -> np.ndarray:
        return np.array(
            [
                np.arctanh(params.phi),
                np.log(params.sigma_eta**2),
                np.log(params.sigma_eps**2),
            ]
        )

    def inverse_transform(self, theta) -> LgssParams:
        theta = np.asarray(theta, dtype=float)
        return LgssParams(
            phi=float(np.tanh(theta[0])),
            sigma_eta=float(np.exp(theta[1] / 2.0)),
            sigma_eps=float(np.exp(theta[2] / 2.0)),
        )

    def natural_draws(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        return np.column_stack(
            [
                np.tanh(thetas[:, 0]),
                np.exp(thetas[:, 1] / 2.0),
                np.exp(thetas[:, 2] / 2.0),
            ]
        )

    def prepare(self, y: TimeSeries) -> TimeSeries:
        return y

    def spectral_density(self, theta, omega):
        return _ar1_density(theta[0], theta[1], omega) + ad.exp(theta[2])

    def loglik_terms(self, theta, omega, ordinates):
        f = self.spectral_density(theta, omega)
        return -(ad.log(f) + ordinates / f)

    def default_prior(self):
        return np.array([0.0, -1.0, -1.0]), np.eye(3)


class Sv1Model:
    """Univariate stochastic volatility model in log-squared form."""

    family = "sv1"
    d = 1
    p = 2
    transformed_names = ("theta_phi", "theta_eta")
    natural_names = ("phi", "sigma_eta")

    def transform(self, params: SvParams) -> np.ndarray:
        return np.array([np.arctanh(params.phi), np.log(params.sigma_eta**2)])

    def inverse_transform(self, theta) -> SvParams:
        theta = np.asarray(theta, dtype=float)
        return SvParams(
            phi=float(np.tanh(theta[0])),
            sigma_eta=float(np.exp(theta[1] / 2.0)),
        )

    def natural_draws(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        return np.column_stack(
            [np.tanh(thetas[:, 0]), np.exp(thetas[:, 1] / 2.0)]
        )

    def prepare(self, y: TimeSeries) -> TimeSeries:
        return log_squared_demean(y)

    def spectral_density(self, theta, omega):
        return _ar1_density(theta[0], theta[1], omega) + NOISE_FLOOR_SV

    def loglik_terms(self, theta, omega, ordinates):
        f = self.spectral_density(theta, omega)
        return -(ad.log(f) + ordinates / f)

    def default_prior(self):
        return np.array([2.0, -3.0]), 0.5 * np.eye(2)


class BsvModel:
    """Bivariate stochastic volatility: diagonal VAR(1) latent states with
    correlated state noise, fitted to the log-squared de-meaned series.

    Transformed parameters: (atanh Phi_11, atanh Phi_22, log l_11,
    log l_22, l_21) where L is the lower Cholesky factor of Sigma_eta.
    """

    family = "bsv"
    d = 2
    p = 5
    transformed_names = ("theta_11", "theta_22", "gamma_11", "gamma_22", "l_21")
    natural_names = ("Phi_11", "Phi_22", "Sigma_eta_11", "Sigma_eta_21", "Sigma_eta_22")

    def transform(self, params: BsvParams) -> np.ndarray:
        L = params.chol
        return np.array(
            [
                np.arctanh(params.Phi[0, 0]),
                np.arctanh(params.Phi[1, 1]),
                np.log(L[0, 0]),
                np.log(L[1, 1]),
                L[1, 0],
            ]
        )

    def inverse_transform(self, theta) -> BsvParams:
        theta = np.asarray(theta, dtype=float)
        l11 = np.exp(theta[2])
        l22 = np.exp(theta[3])
        l21 = theta[4]
        L = np.array([[l11, 0.0], [l21, l22]])
        return BsvParams(
            Phi=np.diag(np.tanh(theta[:2])),
            Sigma_eta=L @ L.T,
        )

    def natural_draws(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        l11 = np.exp(thetas[:, 2])
        l22 = np.exp(thetas[:, 3])
        l21 = thetas[:, 4]
        return np.column_stack(
            [
                np.tanh(thetas[:, 0]),
                np.tanh(thetas[:, 1]),
                l11**2,
                l21 * l11,
                l21**2 + l22**2,
            ]
        )

    def prepare(self, y: TimeSeries) -> TimeSeries:
        if y.d != 2:
            raise ValueError("bivariate SV model needs a 2-column series")
        return log_squared_demean(y)

    def spectral_density(self, theta, omega):
        """Spectral matrix as ((f11, f12), (f21, f22)); entries are complex."""
        omega = np.asarray(omega)
        phi1 = ad.tanh(theta[0])
        phi2 = ad.tanh(theta[1])
        l11 = ad.exp(theta[2])
        l22 = ad.exp(theta[3])
        l21 = theta[4]
        s11 = l11 * l11
        s21 = l21 * l11
        s22 = l21 * l21 + l22 * l22
        em = np.exp(-1j * omega)
        ep = np.exp(1j * omega)
        a1m = 1.0 - phi1 * em  # I - Phi e^{-iw}, first diagonal entry
        a2m = 1.0 - phi2 * em
        a1p = 1.0 - phi1 * ep  # conjugates (parameters are real)
        a2p = 1.0 - phi2 * ep
        f11 = s11 / (a1m * a1p) + NOISE_FLOOR_SV
        f22 = s22 / (a2m * a2p) + NOISE_FLOOR_SV
        f12 = s21 / (a1m * a2p)
        f21 = s21 / (a2m * a1p)
        return (f11, f12), (f21, f22)

    def loglik_terms(self, theta, omega, ordinates):
        (f11, f12), (f21, f22) = self.spectral_density(theta, omega)
        I11 = np.real(ordinates[..., 0, 0])
        I22 = np.real(ordinates[..., 1, 1])
        I21 = ordinates[..., 1, 0]
        I12 = np.conj(I21)
        det = f11 * f22 - f12 * f21
        trace = (f22 * I11 - f12 * I21 - f21 * I12 + f11 * I22) / det
        out = -(ad.log(det) + trace)
        val = out.v if isinstance(out, ad.D2) else out
        if np.max(np.abs(np.imag(val))) > 1e-8 * (1.0 + np.max(np.abs(val))):
            raise FloatingPointError("Whittle contribution has non-negligible imaginary part")
        return ad.creal(out)

    def default_prior(self):
        return (
            np.array([2.0, 2.0, -2.0, -3.0, 0.0]),
            np.diag([0.5, 0.5, 0.5, 0.05, 0.05]),
        )


_MODELS = {"lgss": LgssModel, "sv1": Sv1Model, "bsv": BsvModel}


def get_model(family: str):
    try:
        return _MODELS[family]()
    except KeyError:
        raise ValueError(f"unknown model family {family!r}") from None


def whittle_loglik_freq(model, theta, omega_k: float, ordinate):
    """Log-likelihood contribution of a single frequency."""
    out = model.loglik_terms(theta, np.asarray(omega_k), ordinate)
    return out


def whittle_loglik_block(model, theta, block: range, P: Periodogram):
    """Summed contribution of a contiguous 1-based index range. Empty -> 0."""
    if len(block) == 0:
        return 0.0
    idx = np.asarray(block) - 1
    out = model.loglik_terms(theta, P.frequencies[idx], P.ordinates[idx])
    if isinstance(out, ad.D2):
        return out.sum(axis=out.v.ndim - 1) if out.v.ndim > 0 else out
    return np.sum(out, axis=-1)


def whittle_loglik_full(model, theta, P: Periodogram):
    """Full Whittle log-likelihood over the retained grid."""
    return whittle_loglik_block(model, theta, range(1, P.K + 1), P)
