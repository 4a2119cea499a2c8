"""Figure rendering for run outputs.

Renders matplotlib figures (Agg backend, PNG files) next to the
delimited output of a fit: the variational trajectory, the marginal
posterior histograms on the natural scale, and the periodogram with its
smoothed spectrum and power cutoff. Everything takes plain arrays, so the
functions work both on in-memory results and on re-parsed CSV files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .spectral import Periodogram, SmoothedSpectrum

__all__ = [
    "plot_trajectory",
    "plot_posteriors",
    "plot_periodogram",
]


def plot_trajectory(mu, sigma_diag, names, path) -> Path:
    """Mean trajectory per parameter with a +-2 posterior-sd band."""
    mu = np.asarray(mu, dtype=float)
    sigma_diag = np.asarray(sigma_diag, dtype=float)
    if mu.shape != sigma_diag.shape:
        raise ValueError("mu and sigma_diag must have matching shapes")
    p = mu.shape[1]
    fig, axes = plt.subplots(p, 1, figsize=(7, 2.2 * p), sharex=True, squeeze=False)
    steps = np.arange(1, mu.shape[0] + 1)
    band = 2.0 * np.sqrt(sigma_diag)
    for j in range(p):
        ax = axes[j, 0]
        ax.fill_between(steps, mu[:, j] - band[:, j], mu[:, j] + band[:, j],
                        alpha=0.25, linewidth=0)
        ax.plot(steps, mu[:, j], lw=1.2)
        ax.set_ylabel(names[j])
    axes[-1, 0].set_xlabel("update")
    fig.suptitle("variational trajectory (transformed scale)")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_posteriors(draws, names, path, truth=None) -> Path:
    """Marginal histograms of posterior draws, one panel per parameter."""
    draws = np.asarray(draws, dtype=float)
    p = draws.shape[1]
    ncol = min(p, 3)
    nrow = -(-p // ncol)
    fig, axes = plt.subplots(nrow, ncol, figsize=(3.2 * ncol, 2.6 * nrow),
                             squeeze=False)
    for j in range(p):
        ax = axes[j // ncol, j % ncol]
        ax.hist(draws[:, j], bins=60, density=True, alpha=0.8)
        if truth is not None:
            ax.axvline(truth[j], color="k", lw=1.0, ls="--")
        ax.set_title(names[j])
        ax.set_yticks([])
    for j in range(p, nrow * ncol):
        axes[j // ncol, j % ncol].set_axis_off()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_periodogram(P: Periodogram, path, smoothed: SmoothedSpectrum | None = None,
                     cutoff_index: int | None = None) -> Path:
    """Raw periodogram (log power), optional smoothed overlay and cutoff."""
    d = P.d
    fig, axes = plt.subplots(d, 1, figsize=(7, 3.0 * d), sharex=True, squeeze=False)
    for j in range(d):
        ax = axes[j, 0]
        raw = P.ordinates if d == 1 else np.real(P.ordinates[:, j, j])
        ax.semilogy(P.frequencies, raw, lw=0.4, alpha=0.55, label="periodogram")
        if smoothed is not None:
            ax.semilogy(smoothed.frequencies, smoothed.power[:, j], lw=1.4,
                        label="smoothed")
        if cutoff_index is not None:
            ax.axvline(P.frequencies[cutoff_index - 1], color="k", lw=1.0,
                       ls="--", label="cutoff")
        ax.set_ylabel(f"power[{j}]" if d > 1 else "power")
        ax.legend(loc="upper right", fontsize=8)
    axes[-1, 0].set_xlabel("frequency (rad)")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
