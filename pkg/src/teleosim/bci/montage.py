"""Electrode montage and the Laplacian spatial filter.

The 16 electrodes cover the sensorimotor strip as three rows of five
(FC/C/CP by columns 3, 1, z, 2, 4) plus Fz sitting above FCz. Neighbor
relations are the 4-neighbor cross on that grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 512

CHANNELS = ("Fz", "FC3", "FC1", "FCz", "FC2", "FC4",
            "C3", "C1", "Cz", "C2", "C4",
            "CP3", "CP1", "CPz", "CP2", "CP4")

_GRID = {
    "Fz": (0, 2),
    "FC3": (1, 0), "FC1": (1, 1), "FCz": (1, 2), "FC2": (1, 3), "FC4": (1, 4),
    "C3": (2, 0), "C1": (2, 1), "Cz": (2, 2), "C2": (2, 3), "C4": (2, 4),
    "CP3": (3, 0), "CP1": (3, 1), "CPz": (3, 2), "CP2": (3, 3), "CP4": (3, 4),
}


def neighbor_map() -> dict[str, tuple[str, ...]]:
    """4-neighbor cross on the electrode grid."""
    by_pos = {pos: ch for ch, pos in _GRID.items()}
    out = {}
    for ch, (r, c) in _GRID.items():
        nbrs = []
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            hit = by_pos.get((r + dr, c + dc))
            if hit is not None:
                nbrs.append(hit)
        out[ch] = tuple(nbrs)
    return out


@dataclass
class EegFrame:
    """Multichannel signal block, data[channel, sample] in microvolts."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] != len(CHANNELS):
            raise ValueError(f"expected ({len(CHANNELS)}, n) data")
        if not np.isfinite(self.data).all():
            raise ValueError("non-finite samples")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.data.shape[1] / SAMPLE_RATE


def laplacian_matrix(nmap: dict[str, tuple[str, ...]] | None = None) -> np.ndarray:
    """Channel mixing matrix: out = L @ data subtracts each channel's
    neighbor mean. A channel with no neighbors passes through unchanged."""
    if nmap is None:
        nmap = neighbor_map()
    idx = {ch: i for i, ch in enumerate(CHANNELS)}
    lap = np.eye(len(CHANNELS))
    for ch in CHANNELS:
        nbrs = nmap.get(ch, ())
        if not nbrs:
            continue
        for nb in nbrs:
            lap[idx[ch], idx[nb]] -= 1.0 / len(nbrs)
    return lap


def laplacian(frame: EegFrame, nmap: dict[str, tuple[str, ...]] | None = None) -> EegFrame:
    return EegFrame(data=laplacian_matrix(nmap) @ frame.data)
