"""Calibration and the online decoding loop.

Calibration runs the full chain on labeled synthetic trials: spatial
filter, sliding Welch spectra, Fisher ranking, then the Gaussian model on
the selected (channel, frequency) pairs. The online decoder replays the
same chain one hop at a time and pushes each window's posterior through
the evidence integrator.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import GaussianModel, classify, fisher_scores, select_top_k, train_gaussian
from .montage import CHANNELS, SAMPLE_RATE, EegFrame, laplacian_matrix
from .posterior import PosteriorState, integrate, maybe_emit
from .spectral import SpectralConfig, sliding_windows, welch_psd
from .synth import LABELS, SyntheticEegConfig, generate_trial

MODEL_FORMAT = "bcimodel/1"
LOG_FLOOR = 1e-20


class CalibrationError(RuntimeError):
    pass


@dataclass
class CalibrationResult:
    layout: tuple[tuple[str, float], ...]  # (channel label, frequency Hz)
    model: GaussianModel
    alpha: float
    threshold: float
    holdout_accuracy: float
    spectral: SpectralConfig

    def layout_indices(self) -> tuple[np.ndarray, np.ndarray]:
        ch_idx = np.array([CHANNELS.index(ch) for ch, _ in self.layout])
        freqs = list(self.spectral.freqs)
        bin_idx = np.array([freqs.index(f) for _, f in self.layout])
        return ch_idx, bin_idx


def extract_features(frame: EegFrame, cfg: SpectralConfig = SpectralConfig(),
                     lap: np.ndarray | None = None) -> np.ndarray:
    """(n_windows, channels, band bins) log band power of the filtered
    signal over every analysis window of the frame."""
    if lap is None:
        lap = laplacian_matrix()
    wins = sliding_windows(lap @ frame.data, cfg)
    psd = welch_psd(wins, cfg)
    return np.log(np.maximum(psd, LOG_FLOOR))


def _posteriors(model: GaussianModel, fvs: np.ndarray) -> np.ndarray:
    """classify() over rows; one matrix pass instead of a Python loop."""
    d = fvs[:, None, :] - model.means[None, :, :]
    loglik = -0.5 * np.sum(d * d / model.variances
                           + np.log(2 * np.pi * model.variances), axis=2)
    logp = loglik + np.log(model.priors)
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    return p / p.sum(axis=1, keepdims=True)


def calibrate(cfg: SyntheticEegConfig, rng: np.random.Generator, runs: int = 3,
              trials_per_run: int = 30, k: int = 6,
              spectral: SpectralConfig = SpectralConfig(),
              alpha: float = 0.97, threshold: float = 0.9,
              min_accuracy: float = 0.6) -> CalibrationResult:
    """Run the calibration protocol and fit the decoding model.

    Every fifth trial is held out; the per-window accuracy on those trials
    gates the result, failing loudly when the generator or the chain is
    misconfigured.
    """
    if trials_per_run % 2:
        raise ValueError("trials_per_run must be even to balance classes")
    lap = laplacian_matrix()
    feats, labels, trial_ids = [], [], []
    tid = 0
    for _ in range(runs):
        half = trials_per_run // 2
        order = rng.permutation(np.array([0] * half + [1] * half))
        for cls in order:
            frame = generate_trial(cfg, LABELS[cls], rng)
            f = extract_features(frame, spectral, lap)
            f = f.reshape(f.shape[0], -1)  # (windows, channels*bins)
            feats.append(f)
            labels.append(np.full(len(f), cls))
            trial_ids.append(np.full(len(f), tid))
            tid += 1
    x = np.concatenate(feats)
    y = np.concatenate(labels)
    tids = np.concatenate(trial_ids)
    holdout = (tids % 5) == 4
    scores = fisher_scores(x[~holdout], y[~holdout])
    sel = select_top_k(scores, k)
    model = train_gaussian(x[~holdout][:, sel], y[~holdout])
    pred = np.argmax(_posteriors(model, x[holdout][:, sel]), axis=1)
    acc = float(np.mean(pred == y[holdout]))
    if acc < min_accuracy:
        raise CalibrationError(
            f"holdout accuracy {acc:.2f} below {min_accuracy:.2f}")
    freqs = spectral.freqs
    n_bins = spectral.n_bins
    layout = tuple((CHANNELS[i // n_bins], float(freqs[i % n_bins])) for i in sel)
    return CalibrationResult(layout=layout, model=model, alpha=alpha,
                             threshold=threshold, holdout_accuracy=acc,
                             spectral=spectral)


def save_model(path, result: CalibrationResult) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "layout": [[ch, f] for ch, f in result.layout],
        "means": result.model.means.tolist(),
        "variances": result.model.variances.tolist(),
        "priors": result.model.priors.tolist(),
        "alpha": result.alpha,
        "threshold": result.threshold,
        "holdout_accuracy": result.holdout_accuracy,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(path) -> CalibrationResult:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} file")
    model = GaussianModel(means=np.array(doc["means"]),
                          variances=np.array(doc["variances"]),
                          priors=np.array(doc["priors"]))
    layout = tuple((ch, float(f)) for ch, f in doc["layout"])
    return CalibrationResult(layout=layout, model=model,
                             alpha=float(doc["alpha"]),
                             threshold=float(doc["threshold"]),
                             holdout_accuracy=float(doc.get("holdout_accuracy", 0.0)),
                             spectral=SpectralConfig())


class OnlineDecoder:
    """Streaming decoder: push sample chunks, collect emitted commands.

    Timestamps are stream seconds (samples seen so far / rate), stamped at
    the end of the window that produced the emission.
    """

    def __init__(self, result: CalibrationResult, refractory: float = 1.0):
        self.result = result
        self.refractory = refractory
        self.cfg = result.spectral
        self._lap = laplacian_matrix()
        self._ch_idx, self._bin_idx = result.layout_indices()
        self._buf = np.zeros((len(CHANNELS), self.cfg.n_window))
        self._seen = 0
        self._phase = 0
        self.state = PosteriorState(alpha=result.alpha, threshold=result.threshold)

    @property
    def clock(self) -> float:
        return self._seen / SAMPLE_RATE

    def process(self, samples: np.ndarray) -> list[tuple[float, str]]:
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[0] != len(CHANNELS):
            raise ValueError(f"expected ({len(CHANNELS)}, n) samples")
        out = []
        pos = 0
        n = samples.shape[1]
        hop = self.cfg.n_shift
        while pos < n:
            take = min(n - pos, hop - self._phase)
            chunk = samples[:, pos:pos + take]
            self._buf = np.concatenate([self._buf[:, take:], chunk], axis=1)
            self._phase += take
            self._seen += take
            pos += take
            if self._phase == hop:
                self._phase = 0
                if self._seen >= self.cfg.n_window:
                    cmd = self._hop()
                    if cmd is not None:
                        out.append((self.clock, cmd))
        return out

    def _hop(self) -> str | None:
        psd = welch_psd(self._lap @ self._buf, self.cfg)
        fv = np.log(np.maximum(psd, LOG_FLOOR))[self._ch_idx, self._bin_idx]
        q = classify(self.result.model, fv)
        self.state = integrate(self.state, q)
        self.state, cmd = maybe_emit(self.state, now=self.clock,
                                     refractory=self.refractory)
        return cmd
