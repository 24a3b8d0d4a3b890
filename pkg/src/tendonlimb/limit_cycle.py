"""Closed joint-space cycles parametrized by ten spoke lengths.

A candidate movement is a smooth closed curve in the (proximal, distal)
angle plane.  Ten spokes leave the center of the joint ranges at equally
spaced directions; the free parameters are the spoke lengths, each a
fraction of the per-joint half-range.  A periodic cubic spline through the
ten spoke endpoints, traversed at constant parameter speed, defines the
desired angles; its analytic derivatives give the velocities and
accelerations.  The samplers at the bottom are the policy's primitives:
uniform draws over the spoke box and clamped Gaussian perturbations around
an incumbent.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

N_SPOKES = 10


@dataclass(frozen=True)
class CycleTrajectory:
    """Sampled desired kinematics for one cycle.

    ``kinematics`` columns are (q0, q1, qd0, qd1, qdd0, qdd1); the first
    sample continues the last one smoothly around the loop.
    """

    kinematics: np.ndarray
    period_s: float
    points: np.ndarray   # the ten interpolated angle pairs

    def __len__(self):
        return self.kinematics.shape[0]


def _check_feature(f: np.ndarray):
    if f.shape != (N_SPOKES,):
        raise ValueError(f"feature vector must have {N_SPOKES} components")
    if not np.all(np.isfinite(f)) or np.any(f < 0.0) or np.any(f > 1.0):
        raise ValueError("spoke lengths must lie in [0, 1]")


def spokes_to_points(f, joint_ranges) -> np.ndarray:
    """Ten angle pairs: center + f_k * half_range * (cos, sin) at spoke k."""
    f = np.asarray(f, dtype=float)
    _check_feature(f)
    lims = np.asarray(joint_ranges, dtype=float).reshape(2, 2)
    center = lims.mean(axis=1)
    half = (lims[:, 1] - lims[:, 0]) / 2.0
    phi = 2.0 * np.pi * np.arange(N_SPOKES) / N_SPOKES
    dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    return center + f[:, None] * dirs * half


def interpolate_cycle(points: np.ndarray, samples_per_cycle: int,
                      sample_rate: float) -> CycleTrajectory:
    """Periodic cubic spline through the ten points, uniformly sampled.

    Equal inter-point duration is realized as equal spline-parameter
    spacing; derivatives are scaled by (2*pi / period) to convert from
    parameter to time.
    """
    points = np.asarray(points, dtype=float)
    if points.shape != (N_SPOKES, 2):
        raise ValueError(f"need {N_SPOKES} angle pairs")
    if samples_per_cycle < 20:
        raise ValueError("need at least 20 samples per cycle")
    if sample_rate <= 0:
        raise ValueError("sample rate must be positive")

    phi = 2.0 * np.pi * np.arange(N_SPOKES + 1) / N_SPOKES
    closed = np.vstack([points, points[:1]])
    spline = CubicSpline(phi, closed, bc_type="periodic", axis=0)

    period = samples_per_cycle / sample_rate
    u = 2.0 * np.pi * np.arange(samples_per_cycle) / samples_per_cycle
    rate = 2.0 * np.pi / period
    ang = spline(u)
    vel = spline(u, 1) * rate
    acc = spline(u, 2) * rate ** 2
    kin = np.concatenate([ang, vel, acc], axis=1)
    return CycleTrajectory(kinematics=kin, period_s=period, points=points.copy())


def feature_to_cycle(f, joint_ranges, samples_per_cycle: int,
                     sample_rate: float) -> CycleTrajectory:
    """Spokes -> points -> spline, with a containment guard.

    Cubic interpolation can overshoot the spoke endpoints; if any sampled
    angle leaves the joint range, the whole cycle is shrunk uniformly about
    the center (which preserves closure and smoothness) until it fits.
    """
    lims = np.asarray(joint_ranges, dtype=float).reshape(2, 2)
    center = lims.mean(axis=1)
    half = (lims[:, 1] - lims[:, 0]) / 2.0
    traj = interpolate_cycle(spokes_to_points(f, lims), samples_per_cycle,
                             sample_rate)
    kin = traj.kinematics
    excursion = np.max(np.abs(kin[:, :2] - center) / half)
    if excursion > 1.0:
        scale = 1.0 / excursion
        kin = kin.copy()
        kin[:, :2] = center + (kin[:, :2] - center) * scale
        kin[:, 2:] *= scale
        points = center + (traj.points - center) * scale
        traj = CycleTrajectory(kinematics=kin, period_s=traj.period_s,
                               points=points)
    return traj


def sample_uniform(bounds, rng: np.random.Generator) -> np.ndarray:
    """Independent uniform spoke lengths within ``bounds = (lo, hi)``."""
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError("feature bounds must satisfy 0 <= lo <= hi <= 1")
    return rng.uniform(lo, hi, N_SPOKES)


def perturb_gaussian(best, sigma: float, bounds,
                     rng: np.random.Generator) -> np.ndarray:
    """Per-dimension Gaussian jump around ``best``, clamped into bounds."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    best = np.asarray(best, dtype=float)
    _check_feature(best)
    lo, hi = float(bounds[0]), float(bounds[1])
    draw = best + rng.normal(0.0, 1.0, N_SPOKES) * sigma
    return np.clip(draw, lo, hi)
