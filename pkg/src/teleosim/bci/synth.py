"""Synthetic EEG with class-dependent band-power modulation.

Every channel carries 1/f background noise; sensorimotor channels carry
narrowband rhythms whose power drops by a configured factor when the
matching imagery class is active (event-related desynchronization).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .montage import CHANNELS, SAMPLE_RATE, EegFrame

LABELS = ("hands", "feet")

Band = tuple[float, float]


@dataclass(frozen=True)
class SyntheticEegConfig:
    trial_s: float = 8.0
    background_amp: float = 4.0
    rhythm_amp: float = 8.0
    # idle rhythms always present: mu over the hand areas, beta at the vertex
    rhythms: tuple[tuple[str, Band], ...] = (
        ("C3", (10.0, 12.0)), ("C4", (10.0, 12.0)), ("Cz", (22.0, 26.0)))
    # per-class power change factors applied to matching rhythms
    hands_mod: tuple[tuple[str, Band, float], ...] = (
        ("C3", (10.0, 12.0), 0.3), ("C4", (10.0, 12.0), 0.3))
    feet_mod: tuple[tuple[str, Band, float], ...] = (
        ("Cz", (22.0, 26.0), 0.3),)

    def __post_init__(self):
        if self.trial_s <= 0 or self.background_amp < 0 or self.rhythm_amp < 0:
            raise ValueError("amplitudes must be >= 0 and trial_s > 0")
        for ch, band, factor in self.hands_mod + self.feet_mod:
            if factor <= 0:
                raise ValueError("power change factors must be > 0")
            if ch not in CHANNELS or band[1] <= band[0]:
                raise ValueError(f"bad modulation entry ({ch}, {band})")

    def modulation(self, label: str) -> dict[tuple[str, Band], float]:
        if label not in LABELS:
            raise ValueError(f"unknown label {label!r}")
        mods = self.hands_mod if label == "hands" else self.feet_mod
        return {(ch, band): factor for ch, band, factor in mods}


def _pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance noise with a 1/f power spectrum."""
    spec = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    f = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    spec *= 1.0 / np.sqrt(np.maximum(f, f[1]))
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    return x / x.std()


def _narrowband(band: Band, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance oscillation: random-phase tones every 0.5 Hz in band."""
    freqs = np.arange(band[0], band[1] + 1e-9, 0.5)
    phases = rng.uniform(0.0, 2.0 * math.pi, len(freqs))
    t = np.arange(n) / SAMPLE_RATE
    x = np.cos(2.0 * math.pi * freqs[:, None] * t[None, :] + phases[:, None]).sum(axis=0)
    return x / math.sqrt(len(freqs) / 2.0)


def generate_trial(cfg: SyntheticEegConfig, label: str,
                   rng: np.random.Generator) -> EegFrame:
    n = int(round(cfg.trial_s * SAMPLE_RATE))
    mods = cfg.modulation(label)
    data = np.empty((len(CHANNELS), n))
    for i in range(len(CHANNELS)):
        data[i] = cfg.background_amp * _pink_noise(n, rng)
    idx = {ch: i for i, ch in enumerate(CHANNELS)}
    for ch, band in cfg.rhythms:
        power_factor = mods.get((ch, band), 1.0)
        amp = cfg.rhythm_amp * math.sqrt(power_factor)
        data[idx[ch]] += amp * _narrowband(band, n, rng)
    return EegFrame(data=data)
