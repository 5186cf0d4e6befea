"""Sliding-window Welch power spectra over the analysis band."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .montage import SAMPLE_RATE


@dataclass(frozen=True)
class SpectralConfig:
    window_s: float = 1.0
    shift_s: float = 0.0625
    band: tuple[float, float] = (4.0, 48.0)
    resolution: float = 2.0
    # Welch internals: Hann-tapered segments, 50% overlap, no detrending
    segment_s: float = 0.5
    overlap: float = 0.5

    def __post_init__(self):
        hops = self.window_s / self.shift_s
        if abs(hops - round(hops)) > 1e-9:
            raise ValueError("shift must divide the window evenly")
        width = self.band[1] - self.band[0]
        if width <= 0 or abs(width / self.resolution - round(width / self.resolution)) > 1e-9:
            raise ValueError("resolution must divide the band width")

    @property
    def n_window(self) -> int:
        return int(round(self.window_s * SAMPLE_RATE))

    @property
    def n_shift(self) -> int:
        return int(round(self.shift_s * SAMPLE_RATE))

    @property
    def nperseg(self) -> int:
        return int(round(self.segment_s * SAMPLE_RATE))

    @property
    def noverlap(self) -> int:
        return int(round(self.nperseg * self.overlap))

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.band[0], self.band[1] + self.resolution / 2,
                         self.resolution)

    @property
    def n_bins(self) -> int:
        return len(self.freqs)


def welch_psd(x: np.ndarray, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    """Welch spectrum of one analysis window, restricted to the band bins.

    Works on any array whose last axis is the 512-sample window; returns
    the same leading shape with the band bins as the last axis.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cfg.n_window:
        raise ValueError(f"expected {cfg.n_window}-sample windows")
    freqs, pxx = sps.welch(x, fs=SAMPLE_RATE, window="hann",
                           nperseg=cfg.nperseg, noverlap=cfg.noverlap,
                           detrend=False, axis=-1)
    sel = np.searchsorted(freqs, cfg.freqs)
    if not np.allclose(freqs[sel], cfg.freqs):
        raise ValueError("band bins not representable at this resolution")
    return pxx[..., sel]


def sliding_windows(data: np.ndarray, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    """(channels, samples) -> (n_windows, channels, window) view with the
    configured hop; empty when the signal is shorter than one window."""
    data = np.asarray(data, dtype=float)
    if data.shape[-1] < cfg.n_window:
        return np.empty((0, data.shape[0], cfg.n_window))
    wins = np.lib.stride_tricks.sliding_window_view(data, cfg.n_window, axis=-1)
    return wins[:, ::cfg.n_shift, :].transpose(1, 0, 2)
