"""Frequency-domain data: periodograms, Welch smoothing, cutoffs, blocks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeSeries",
    "Periodogram",
    "SmoothedSpectrum",
    "BlockPlan",
    "compute_periodogram",
    "welch_smooth",
    "find_cutoff",
    "make_block_plan",
]


@dataclass
class TimeSeries:
    """A T x d matrix of observations. Columns are series components."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError("time series values must be 1- or 2-dimensional")
        if v.shape[0] < 4:
            raise ValueError(f"need at least 4 observations, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("time series contains non-finite entries")
        self.values = v

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass
class Periodogram:
    """Retained periodogram ordinates on the grid omega_k = 2 pi k / T.

    Only k = 1 .. floor((T-1)/2) is kept: the zero frequency vanishes for
    de-meaned data and the Nyquist ordinate behaves differently from the
    rest. For d = 1 the ordinates are nonnegative reals of shape (K,);
    otherwise complex Hermitian matrices of shape (K, d, d).
    """

    frequencies: np.ndarray
    ordinates: np.ndarray
    T: int

    @property
    def K(self) -> int:
        return self.frequencies.shape[0]

    @property
    def d(self) -> int:
        return 1 if self.ordinates.ndim == 1 else self.ordinates.shape[-1]


@dataclass
class SmoothedSpectrum:
    """Welch-averaged power per component on a coarser frequency grid."""

    frequencies: np.ndarray
    power: np.ndarray  # (K_seg, d)
    T: int  # length of the originating series, for mapping back


@dataclass
class BlockPlan:
    """Individual-update prefix plus balanced contiguous frequency blocks.

    Frequency indices are 1-based (index k corresponds to omega_k).
    """

    n_individual: int
    blocks: list[range] = field(default_factory=list)
    block_size_target: int = 0

    @property
    def n_updates(self) -> int:
        return self.n_individual + len(self.blocks)


def compute_periodogram(y: TimeSeries) -> Periodogram:
    """Periodogram I(omega_k) = (1/T) J(omega_k) J(omega_k)^H on k = 1..K.

    The input is de-meaned per column before transforming, so the zero
    frequency carries no power.
    """
    v = y.values - y.values.mean(axis=0)
    T, d = v.shape
    K = (T - 1) // 2
    F = np.fft.fft(v, axis=0)[1 : K + 1]  # phase offset cancels in J J^H
    freqs = 2.0 * np.pi * np.arange(1, K + 1) / T
    if d == 1:
        ords = (np.abs(F[:, 0]) ** 2) / T
    else:
        ords = F[:, :, None] * np.conj(F[:, None, :]) / T
    return Periodogram(frequencies=freqs, ordinates=ords, T=T)


_WINDOWS = {
    "hann": np.hanning,
    "rectangular": np.ones,
}


def welch_smooth(
    y: TimeSeries,
    n_segments: int = 8,
    overlap_fraction: float = 0.5,
    window: str = "hann",
) -> SmoothedSpectrum:
    """Averaged windowed-segment periodogram (Welch's method).

    The segment length is T // n_segments; overlapping windows slide by
    seg_len * (1 - overlap_fraction). Normalisation is chosen so that
    white noise of variance sigma^2 has expected smoothed power close to
    sigma^2 at interior frequencies. With one rectangular segment this
    reduces to the raw periodogram.
    """
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must be in [0, 1)")
    if window not in _WINDOWS:
        raise ValueError(f"unknown window {window!r}")
    v = y.values - y.values.mean(axis=0)
    T, d = v.shape
    seg = T // n_segments
    if seg < 4:
        raise ValueError(
            f"segment length {seg} after dividing T={T} into {n_segments} segments is too short"
        )
    w = _WINDOWS[window](seg)
    wnorm = float(np.sum(w**2))
    step = max(1, int(round(seg * (1.0 - overlap_fraction))))
    starts = range(0, T - seg + 1, step)
    K = (seg - 1) // 2
    power = np.zeros((K, d))
    for s in starts:
        F = np.fft.fft(w[:, None] * v[s : s + seg], axis=0)[1 : K + 1]
        power += np.abs(F) ** 2 / wnorm
    power /= len(starts)
    freqs = 2.0 * np.pi * np.arange(1, K + 1) / seg
    return SmoothedSpectrum(frequencies=freqs, power=power, T=T)


def find_cutoff(s: SmoothedSpectrum, ratio: float = 0.5) -> int:
    """Index of the first post-peak frequency whose power drops below
    ``ratio`` times the maximum (3 dB point for ratio = 0.5).

    The crossing found on the smoothed grid is mapped to the nearest
    retained frequency index of the raw grid. For multivariate series the
    per-column cutoffs are computed and the highest one returned. If the
    power never crosses the threshold the full grid size K is returned
    (no blocking).
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    K = (s.T - 1) // 2
    cutoff = 0
    for col in range(s.power.shape[1]):
        p = s.power[:, col]
        peak = int(np.argmax(p))
        thr = ratio * p[peak]
        below = np.nonzero(p[peak:] <= thr)[0]
        if below.size == 0:
            n_col = K
        else:
            freq = s.frequencies[peak + below[0]]
            n_col = int(np.clip(np.round(freq * s.T / (2.0 * np.pi)), 1, K))
        cutoff = max(cutoff, n_col)
    return cutoff


def make_block_plan(K: int, n_individual: int, B: int) -> BlockPlan:
    """Partition indices n_individual+1 .. K into ceil((K - n)/B) balanced
    contiguous blocks (lengths differ by at most one)."""
    if not 0 <= n_individual <= K:
        raise ValueError("n_individual must lie in [0, K]")
    if B < 1:
        raise ValueError("block size must be >= 1")
    rest = K - n_individual
    if rest == 0:
        return BlockPlan(n_individual=n_individual, blocks=[], block_size_target=B)
    n_b = -(-rest // B)  # ceiling division
    base, extra = divmod(rest, n_b)
    blocks = []
    start = n_individual + 1
    for b in range(n_b):
        size = base + (1 if b < extra else 0)
        blocks.append(range(start, start + size))
        start += size
    return BlockPlan(n_individual=n_individual, blocks=blocks, block_size_target=B)
