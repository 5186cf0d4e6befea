"""Evidence integration and thresholded command emission.

Per analysis hop the classifier posterior q folds into the running
distribution as p <- alpha * p + (1 - alpha) * q; a command fires once
max(p) crosses the threshold, after which p resets to uniform and
emissions pause for a refractory period.

Class order is fixed: index 0 is both-hands (-> left), index 1 is
both-feet (-> right).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

COMMANDS = ("left", "right")


def _uniform() -> np.ndarray:
    return np.array([0.5, 0.5])


@dataclass(frozen=True)
class PosteriorState:
    p: np.ndarray = field(default_factory=_uniform)
    alpha: float = 0.97
    threshold: float = 0.9
    refractory_until: float = -math.inf

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (2,) or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("p must be a 2-class distribution")
        object.__setattr__(self, "p", p)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 0.5 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0.5, 1]")


def integrate(state: PosteriorState, q: np.ndarray) -> PosteriorState:
    q = np.asarray(q, dtype=float)
    if q.shape != (2,) or np.any(q < -1e-12) or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("q must be a 2-class distribution")
    return replace(state, p=state.alpha * state.p + (1.0 - state.alpha) * q)


def maybe_emit(state: PosteriorState, now: float = 0.0,
               refractory: float = 1.0) -> tuple[PosteriorState, str | None]:
    """Emit the command for the winning class once its evidence fills up;
    the accumulator restarts from uniform and holds off for `refractory`."""
    if now < state.refractory_until:
        return state, None
    if state.p.max() < state.threshold:
        return state, None
    cmd = COMMANDS[int(np.argmax(state.p))]
    reset = replace(state, p=_uniform(), refractory_until=now + refractory)
    return reset, cmd


@dataclass(frozen=True)
class PosteriorStreamConfig:
    """Beta-distributed confidence toward the intended class per hop."""
    a: float = 14.0
    b: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("beta parameters must be positive")


class PosteriorStream:
    """Stand-in for the signal chain: draws classifier posteriors directly,
    biased toward the intended command. Used for fast Monte-Carlo runs."""

    def __init__(self, rng: np.random.Generator,
                 cfg: PosteriorStreamConfig = PosteriorStreamConfig()):
        self.rng = rng
        self.cfg = cfg

    def sample(self, intent: str) -> np.ndarray:
        if intent not in COMMANDS:
            raise ValueError(f"unknown intent {intent!r}")
        x = self.rng.beta(self.cfg.a, self.cfg.b)
        return np.array([x, 1.0 - x]) if intent == "left" else np.array([1.0 - x, x])
