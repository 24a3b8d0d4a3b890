"""Motor babbling: random stair-step activations and the dataset they yield.

Each motor gets an independent two-draw process per sample: one uniform
draw decides (with probability 1/sample_rate, an amortized one transition
per second) whether to move to a new level, a second uniform draw picks
that level inside the activation range.  Between transitions the level
holds bit-exactly.
"""

from dataclasses import dataclass

import numpy as np

from .inverse_map import Dataset
from .plant import SimTrace, TONE


@dataclass(frozen=True)
class BabbleConfig:
    duration_s: float = 300.0
    sample_rate: float = 78.0
    activation_low: float = TONE
    activation_high: float = 1.0
    seed: int = 0
    # test override; None means the nominal 1/sample_rate
    transition_prob: float | None = None

    def validate(self):
        if self.duration_s <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample rate must be positive")
        if not (TONE <= self.activation_low <= self.activation_high <= 1.0):
            raise ValueError(f"activation range must sit inside [{TONE}, 1]")
        if self.transition_prob is not None and not (0.0 <= self.transition_prob <= 1.0):
            raise ValueError("transition probability must be in [0, 1]")


def generate(cfg: BabbleConfig) -> np.ndarray:
    """Stair-step activation sequence, shape (round(duration*rate), 3)."""
    cfg.validate()
    n = int(round(cfg.duration_s * cfg.sample_rate))
    p = 1.0 / cfg.sample_rate if cfg.transition_prob is None else cfg.transition_prob
    rng = np.random.default_rng(cfg.seed)
    transition = rng.random((n, 3)) < p
    lo, hi = cfg.activation_low, cfg.activation_high
    levels = lo + (hi - lo) * rng.random((n, 3))
    transition[0, :] = True   # the initial level is itself a fresh draw
    # forward-fill: each sample takes the level of the last transition
    idx = np.where(transition, np.arange(n)[:, None], 0)
    idx = np.maximum.accumulate(idx, axis=0)
    return levels[idx, np.arange(3)]


def transition_counts(a_seq: np.ndarray) -> np.ndarray:
    """Per-motor count of level changes (the initial level is not one)."""
    return (np.diff(a_seq, axis=0) != 0.0).sum(axis=0)


def collect_dataset(trace: SimTrace) -> Dataset:
    """Pair each sample's kinematics with the same-index activation.

    Velocities and accelerations come with the trace (finite differences of
    the recorded angles).  Rows with non-finite entries are dropped.
    """
    if len(trace) == 0:
        raise ValueError("cannot collect a dataset from an empty trace")
    x = trace.kinematics
    y = trace.activations
    keep = np.all(np.isfinite(x), axis=1) & np.all(np.isfinite(y), axis=1)
    if not np.any(keep):
        raise ValueError("trace contains no finite samples")
    return Dataset(x[keep], y[keep])


def limit_occupancy(kinematics: np.ndarray, joint_limits: np.ndarray,
                    margin: float = 0.05) -> float:
    """Fraction of samples with at least one joint within ``margin`` of its
    range of motion (measured as a fraction of that joint's range)."""
    q = np.asarray(kinematics)[:, :2]
    lims = np.asarray(joint_limits, dtype=float).reshape(2, 2)
    span = lims[:, 1] - lims[:, 0]
    near = (q - lims[:, 0] < margin * span) | (lims[:, 1] - q < margin * span)
    return float(np.mean(np.any(near, axis=1)))
