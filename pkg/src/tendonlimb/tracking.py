"""Free cyclical movement experiments, in the air (contact off).

Two questions about refinement, with the treadmill out of the picture:
does repeating one trajectory with per-attempt refinement shrink the
tracking error, and does a map refined on a batch of trajectories do
better on trajectories it never saw?  Error is the mean squared angle
deviation from the desired cycle, over the window that excludes the
leading transient (the same window the refinement data uses).
"""

from dataclasses import dataclass, replace

import numpy as np

from . import babble as babble_mod
from . import inverse_map as im
from . import limit_cycle as lc
from .g2p import (G2PConfig, desired_kinematics, execute_attempt,
                  refine_after_attempt, transient_split)
from .seeding import derive_seed

TRACKING_BOUNDS = (0.2, 0.8)


@dataclass
class FixedTrackingReport:
    feature: np.ndarray
    mse_per_attempt: np.ndarray   # NaN where the attempt diverged
    aborted: bool                 # a divergence cut the replicate short


@dataclass
class GeneralizationReport:
    trajectory_ids: list
    mse_babble: np.ndarray
    mse_refined: np.ndarray
    win_fraction: float
    median_reduction_pct: float
    excluded: list                # test trajectories dropped for divergence


def _attempt_mse(sim, rec, feature, cfg) -> float:
    desired = desired_kinematics(sim, feature, cfg)
    start = transient_split(len(desired), cfg.refine_drop_fraction)
    return im.evaluate_mse(desired[start:], rec.trace.kinematics[start:])


def _babble_and_train(sim, cfg: G2PConfig, seed: int):
    bab_cfg = replace(cfg.babble, seed=derive_seed(seed, 0),
                      sample_rate=sim.sample_rate)
    trace = sim.run(babble_mod.generate(bab_cfg), contact_enabled=False)
    data = babble_mod.collect_dataset(trace)
    imap = im.train_initial(data, cfg.train, derive_seed(seed, 1))
    return imap, data


def run_fixed_tracking(sim, cfg: G2PConfig, feature, n_attempts: int = 5,
                       seed: int = 0) -> FixedTrackingReport:
    """Repeat one desired cycle, refining the map after every attempt
    regardless of its error.  Returns the per-attempt angle MSE."""
    feature = np.asarray(feature, dtype=float)
    imap, cumulative = _babble_and_train(sim, cfg, seed)
    train_seed = derive_seed(seed, 1)
    mses = np.full(n_attempts, np.nan)
    aborted = False
    for k in range(n_attempts):
        rec = execute_attempt(sim, imap, feature, cfg, contact_enabled=False)
        if rec.failed:
            aborted = True
            break
        mses[k] = _attempt_mse(sim, rec, feature, cfg)
        rec.index = k + 1
        imap, cumulative = refine_after_attempt(
            imap, cumulative, rec, cfg, derive_seed(train_seed, k + 1))
    return FixedTrackingReport(feature=feature, mse_per_attempt=mses,
                               aborted=aborted)


def run_generalization(sim, cfg: G2PConfig, n_train: int = 30,
                       n_test: int = 30, seed: int = 0) -> GeneralizationReport:
    """Refine serially on random trajectories, then freeze and compare
    against the babble-only map on unseen ones.

    Both maps are evaluated on identical test features (same sub-seed);
    test attempts never touch the training data.  A divergence under
    either map drops that trajectory from both arms.
    """
    imap, cumulative = _babble_and_train(sim, cfg, seed)
    babble_map = imap.copy()
    train_seed = derive_seed(seed, 1)
    train_rng = np.random.default_rng(derive_seed(seed, 2))

    for k in range(n_train):
        f = lc.sample_uniform(cfg.feature_bounds, train_rng)
        rec = execute_attempt(sim, imap, f, cfg, contact_enabled=False)
        if rec.failed:
            continue
        rec.index = k + 1
        imap, cumulative = refine_after_attempt(
            imap, cumulative, rec, cfg, derive_seed(train_seed, k + 1))
    refined_map = imap

    test_rng = np.random.default_rng(derive_seed(seed, 3))
    ids, mse_b, mse_r, excluded = [], [], [], []
    for k in range(n_test):
        f = lc.sample_uniform(cfg.feature_bounds, test_rng)
        rec_b = execute_attempt(sim, babble_map, f, cfg, contact_enabled=False)
        rec_r = execute_attempt(sim, refined_map, f, cfg, contact_enabled=False)
        if rec_b.failed or rec_r.failed:
            excluded.append(k)
            continue
        ids.append(k)
        mse_b.append(_attempt_mse(sim, rec_b, f, cfg))
        mse_r.append(_attempt_mse(sim, rec_r, f, cfg))

    mse_b = np.array(mse_b)
    mse_r = np.array(mse_r)
    if len(mse_b):
        wins = np.sum(mse_r < mse_b) + 0.5 * np.sum(mse_r == mse_b)
        win_fraction = float(wins / len(mse_b))
        median_reduction = float(np.median(100.0 * (mse_b - mse_r) / mse_b))
    else:
        win_fraction = float("nan")
        median_reduction = float("nan")
    return GeneralizationReport(trajectory_ids=ids, mse_babble=mse_b,
                                mse_refined=mse_r, win_fraction=win_fraction,
                                median_reduction_pct=median_reduction,
                                excluded=excluded)
