"""Reward-driven two-phase learning on top of the inverse map.

A run starts with five minutes of babbling in the air and an initial
inverse map.  Exploration then draws spoke vectors uniformly at random,
plays each candidate cycle twenty times through the map, and banks the
treadmill displacement as reward.  Once an attempt clears the reward
threshold the policy switches to exploitation: Gaussian jumps around the
best spoke vector so far, with a standard deviation that shrinks as the
best reward grows (never below ``sigma_min``).

Every non-failed attempt, rewarded or not, feeds the map: its achieved
kinematics are paired with the commanded activations, the first quarter
(the transient from the start posture into the cycle) is dropped, and the
map is retrained warm-start on everything accumulated so far.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import babble as babble_mod
from . import inverse_map as im
from . import limit_cycle as lc
from .errors import SimulationDiverged
from .plant import SimTrace
from .seeding import derive_seed


@dataclass(frozen=True)
class G2PConfig:
    reward_threshold: float = 25.0         # mm; calibrate_threshold overwrites it
    max_explore_attempts: int = 200
    max_exploit_attempts: int = 15
    cycles_per_attempt: int = 20
    samples_per_cycle: int = 75
    sigma_base: float = 0.2
    sigma_min: float = 0.03
    feature_bounds: tuple = (0.15, 1.0)
    refine_drop_fraction: float = 0.25
    babble: babble_mod.BabbleConfig = field(default_factory=babble_mod.BabbleConfig)
    train: im.TrainConfig = field(default_factory=im.TrainConfig)

    def validate(self):
        if self.sigma_min <= 0:
            raise ValueError("sigma_min must be positive")
        if self.cycles_per_attempt < 1 or self.samples_per_cycle < 20:
            raise ValueError("attempt shape out of range")
        if not (0.0 <= self.refine_drop_fraction < 1.0):
            raise ValueError("refine_drop_fraction must be in [0, 1)")
        if self.max_explore_attempts < 1 or self.max_exploit_attempts < 0:
            raise ValueError("attempt caps out of range")
        self.babble.validate()


@dataclass
class AttemptRecord:
    index: int                 # 1-based attempt ordinal within the run
    phase: str                 # "exploration" | "exploitation"
    feature: np.ndarray
    trace: SimTrace | None
    reward_mm: float           # -inf for a diverged attempt
    mean_watts: float
    best_so_far_mm: float
    sigma: float | None = None # the sigma the feature was drawn with
    failed: bool = False


@dataclass
class RunRecord:
    seed: int
    config: G2PConfig
    babble_trace: SimTrace
    babble_summary: dict
    attempts: list
    crossed_at: int | None     # attempt index that first beat the threshold
    failed: bool               # exploration exhausted without crossing
    final_map: im.InverseMap | None
    initial_map: im.InverseMap | None = None

    @property
    def best_reward_mm(self) -> float:
        rewards = [a.reward_mm for a in self.attempts]
        return max(rewards) if rewards else float("-inf")

    @property
    def crossing_reward_mm(self) -> float | None:
        if self.crossed_at is None:
            return None
        return self.attempts[self.crossed_at - 1].reward_mm


def execute_attempt(sim, imap: im.InverseMap, f, cfg: G2PConfig,
                    contact_enabled: bool = True) -> AttemptRecord:
    """Play one candidate cycle ``cycles_per_attempt`` times through the map.

    A diverged simulation marks the attempt failed with reward -inf; its
    data never enters refinement and it can never become the best.
    """
    traj = lc.feature_to_cycle(f, sim.params.joint_limits,
                               cfg.samples_per_cycle, sim.sample_rate)
    a_cycle = im.predict(imap, traj.kinematics)
    a_seq = np.tile(a_cycle, (cfg.cycles_per_attempt, 1))
    try:
        trace = sim.run(a_seq, contact_enabled=contact_enabled)
    except SimulationDiverged:
        return AttemptRecord(index=0, phase="", feature=np.asarray(f, float),
                             trace=None, reward_mm=float("-inf"),
                             mean_watts=float("nan"),
                             best_so_far_mm=float("-inf"), failed=True)
    return AttemptRecord(index=0, phase="", feature=np.asarray(f, float),
                         trace=trace, reward_mm=trace.reward_mm,
                         mean_watts=trace.mean_watts,
                         best_so_far_mm=trace.reward_mm)


def desired_kinematics(sim, f, cfg: G2PConfig) -> np.ndarray:
    """The attempt-long desired trajectory an attempt at ``f`` tracks."""
    traj = lc.feature_to_cycle(f, sim.params.joint_limits,
                               cfg.samples_per_cycle, sim.sample_rate)
    return np.tile(traj.kinematics, (cfg.cycles_per_attempt, 1))


def transient_split(n: int, drop_fraction: float) -> int:
    """First index kept after dropping the leading transient."""
    return n - math.floor((1.0 - drop_fraction) * n)


def refine_after_attempt(imap: im.InverseMap, cumulative: im.Dataset,
                         attempt: AttemptRecord, cfg: G2PConfig,
                         seed: int) -> tuple[im.InverseMap, im.Dataset]:
    """Append the attempt's usable data and retrain warm-start.

    The achieved kinematics pair with the commanded activations; the first
    ``refine_drop_fraction`` of the attempt is excluded as the transient
    from the start posture into the cycle.
    """
    if attempt.failed:
        raise ValueError("failed attempts contribute no data")
    trace = attempt.trace
    start = transient_split(len(trace), cfg.refine_drop_fraction)
    cumulative = cumulative.extend(trace.kinematics[start:],
                                   trace.activations[start:])
    return im.refine(imap, cumulative, cfg.train, seed), cumulative


def update_sigma(best_reward_mm: float, cfg: G2PConfig) -> float:
    """Perturbation scale, shrinking as the best reward outgrows the
    threshold: sigma_base anchored at the crossing, floored at sigma_min."""
    ratio = cfg.reward_threshold / best_reward_mm if best_reward_mm > 0 else 0.0
    return max(cfg.sigma_min, cfg.sigma_base * ratio)


def run(sim, cfg: G2PConfig, seed: int) -> RunRecord:
    """One full learning run; a pure function of (plant, config, seed).

    Sub-seeds, via the splitmix64 stream of ``seed``: 0 babbling, 1 initial
    training, 2 policy draws, and per-attempt refinements from the stream
    of the training seed.
    """
    cfg.validate()
    babble_seed = derive_seed(seed, 0)
    train_seed = derive_seed(seed, 1)
    policy_seed = derive_seed(seed, 2)

    bab_cfg = replace(cfg.babble, seed=babble_seed,
                      sample_rate=sim.sample_rate)
    a_bab = babble_mod.generate(bab_cfg)
    babble_trace = sim.run(a_bab, contact_enabled=False)
    data = babble_mod.collect_dataset(babble_trace)
    babble_summary = {
        "n_samples": len(data),
        "transitions": babble_mod.transition_counts(a_bab).tolist(),
        "limit_occupancy": babble_mod.limit_occupancy(
            babble_trace.kinematics, sim.params.joint_limits),
    }

    imap = im.train_initial(data, cfg.train, train_seed)
    initial_map = imap.copy()
    policy_rng = np.random.default_rng(policy_seed)

    attempts = []
    best = float("-inf")
    best_feature = None
    crossed_at = None
    index = 0

    def record(rec: AttemptRecord, phase: str, sigma: float | None):
        nonlocal index, best, best_feature, imap
        index += 1
        rec.index = index
        rec.phase = phase
        rec.sigma = sigma
        improved = rec.reward_mm > best
        if improved:
            best = rec.reward_mm
            best_feature = rec.feature
        rec.best_so_far_mm = best
        attempts.append(rec)
        return improved

    cumulative = data
    for _ in range(cfg.max_explore_attempts):
        f = lc.sample_uniform(cfg.feature_bounds, policy_rng)
        rec = execute_attempt(sim, imap, f, cfg)
        record(rec, "exploration", None)
        if not rec.failed:
            imap, cumulative = refine_after_attempt(
                imap, cumulative, rec, cfg, derive_seed(train_seed, rec.index))
        if rec.reward_mm > cfg.reward_threshold:
            crossed_at = rec.index
            break

    if crossed_at is None:
        return RunRecord(seed=seed, config=cfg, babble_trace=babble_trace,
                         babble_summary=babble_summary, attempts=attempts,
                         crossed_at=None, failed=True, final_map=imap,
                         initial_map=initial_map)

    sigma = update_sigma(best, cfg)
    for _ in range(cfg.max_exploit_attempts):
        f = lc.perturb_gaussian(best_feature, sigma, cfg.feature_bounds,
                                policy_rng)
        rec = execute_attempt(sim, imap, f, cfg)
        if record(rec, "exploitation", sigma):
            sigma = update_sigma(best, cfg)
        if not rec.failed:
            imap, cumulative = refine_after_attempt(
                imap, cumulative, rec, cfg, derive_seed(train_seed, rec.index))

    return RunRecord(seed=seed, config=cfg, babble_trace=babble_trace,
                     babble_summary=babble_summary, attempts=attempts,
                     crossed_at=crossed_at, failed=False, final_map=imap,
                     initial_map=initial_map)
