"""Planar tendon-driven double pendulum with treadmill contact.

The limb is a two-link chain hanging from a fixed shoulder at the origin.
Angles are measured from the straight-down posture, counterclockwise
positive; ``q = (0, 0)`` means both links vertical with the endpoint at
``(0, -(l1 + l2))``.  Each link is modeled as a rigid rod with its center
of mass at mid-length; the configured inertia is taken about the link's
proximal joint.

Three motors pull inextensible tendons routed over the joints.  The moment
arm matrix R (2x3, joints x motors) maps tensions to joint torques and,
transposed, joint rates to tendon reel-in rates.  A motor holding
activation ``a`` produces tension ``max(0, f_max*a - c_v*reel_in_rate)``:
backdrivable, never pushing.  Activations carry a 15% baseline tone.

Ground contact is a penalty model at the endpoint: a vertical
spring-damper once the foot dips below the treadmill surface, plus smooth
Coulomb friction against the belt.  The belt is a 1-D inertia with linear
drag, driven by the friction reaction; its displacement (mm, positive in
the direction a counterclockwise joint-space cycle drags it during stance)
is the locomotion reward.

Integration is fixed-step RK4 with ``n_sub`` inner steps per output
sample, which makes every rollout a pure function of its inputs.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .errors import SimulationDiverged

TONE = 0.15  # baseline activation, fraction of maximal
_A_TOL = 1e-9

TRACE_HEADER = "t,a0,a1,a2,q0,q1,qd0,qd1,qdd0,qdd1,belt_mm"


# ---------------------------------------------------------------------------
# parameters and state


@dataclass(frozen=True)
class ContactParams:
    """Penalty-contact and treadmill constants (SI units)."""

    ground_height: float = -0.45   # m, treadmill surface below the shoulder
    normal_stiffness: float = 4000.0   # N/m
    normal_damping: float = 60.0       # N*s/m
    friction_mu: float = 0.9
    smoothing_velocity: float = 0.02   # m/s, tanh scale for friction
    belt_mass: float = 1.0             # kg
    belt_drag: float = 8.0             # N*s/m

    def validate(self):
        if self.normal_stiffness <= 0 or self.belt_mass <= 0:
            raise ValueError("contact stiffness and belt mass must be positive")
        if self.smoothing_velocity <= 0:
            raise ValueError("friction smoothing velocity must be positive")
        if min(self.normal_damping, self.friction_mu, self.belt_drag) < 0:
            raise ValueError("contact damping, friction and drag must be nonnegative")


@dataclass(frozen=True)
class LimbParams:
    """Physical constants of the limb.

    ``moment_arms`` is the signed 2x3 moment arm matrix R, rows = (proximal,
    distal) joints, columns = motors (M0, M1, M2).  The required sign
    pattern: M0 pulls the proximal joint cw and the distal ccw, M1 pulls
    only the proximal joint ccw, M2 pulls both cw.  Together the columns
    must positively span the torque plane so any net torque is reachable
    with pulling tendons only.
    """

    link_lengths: np.ndarray
    link_masses: np.ndarray
    link_inertias: np.ndarray      # about each link's proximal joint
    joint_damping: np.ndarray
    joint_limits: np.ndarray       # (2, 2): [[q0_lo, q0_hi], [q1_lo, q1_hi]]
    moment_arms: np.ndarray        # (2, 3) signed matrix R
    f_max: np.ndarray              # maximal tendon tensions, N
    motor_viscosity: float         # back-drive coefficient, N*s/m
    gravity: float = 9.81
    rated_power: np.ndarray = field(
        default_factory=lambda: np.array([10.0, 10.0, 10.0]))
    contact: ContactParams = field(default_factory=ContactParams)

    def __post_init__(self):
        for name in ("link_lengths", "link_masses", "link_inertias",
                     "joint_damping", "f_max", "rated_power"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "joint_limits",
                           np.asarray(self.joint_limits, dtype=float).reshape(2, 2))
        object.__setattr__(self, "moment_arms",
                           np.asarray(self.moment_arms, dtype=float).reshape(2, 3))
        self.validate()

    def validate(self):
        if not (np.all(self.link_lengths > 0) and np.all(self.link_masses > 0)
                and np.all(self.link_inertias > 0) and np.all(self.f_max > 0)):
            raise ValueError("lengths, masses, inertias and f_max must be positive")
        # rod inertia about the proximal end can never undercut the
        # point-mass bound m*(l/2)^2, or kinetic energy loses definiteness
        bound = self.link_masses * (self.link_lengths / 2.0) ** 2
        if np.any(self.link_inertias <= bound):
            raise ValueError("link inertia about the proximal end must exceed m*(l/2)^2")
        if np.any(self.joint_damping < 0) or self.motor_viscosity < 0:
            raise ValueError("damping coefficients must be nonnegative")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ValueError("joint limit intervals must be nonempty")
        r = self.moment_arms
        if not (r[0, 1] > 0 and r[1, 1] == 0):
            raise ValueError("motor M1 must pull only the proximal joint ccw")
        if not (r[0, 0] < 0 and r[1, 0] > 0):
            raise ValueError("motor M0 must pull the proximal joint cw, distal ccw")
        if not (r[0, 2] < 0 and r[1, 2] < 0):
            raise ValueError("motor M2 must pull both joints cw")
        angles = np.sort(np.arctan2(r[1], r[0]))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
        if np.any(gaps >= np.pi):
            raise ValueError("moment arm columns must positively span the torque plane")
        self.contact.validate()

    @property
    def com_offsets(self) -> np.ndarray:
        """Center-of-mass distance from each proximal joint (mid-link rods)."""
        return self.link_lengths / 2.0

    @property
    def total_weight(self) -> float:
        """Total gravitational force on the limb, N."""
        return float(self.link_masses.sum() * self.gravity)


@dataclass
class LimbState:
    """Joint-space state plus treadmill displacement (mm, mm/s)."""

    q: np.ndarray = field(default_factory=lambda: np.zeros(2))
    q_dot: np.ndarray = field(default_factory=lambda: np.zeros(2))
    belt_position: float = 0.0
    belt_velocity: float = 0.0

    def copy(self) -> "LimbState":
        return LimbState(self.q.copy(), self.q_dot.copy(),
                         self.belt_position, self.belt_velocity)


@dataclass
class SimTrace:
    """One recorded rollout at a fixed sample rate.

    ``kinematics`` columns are (q0, q1, qd0, qd1, qdd0, qdd1); velocities
    and accelerations are finite differences of the recorded angles, like
    an encoder pipeline, not the integrator's internal rates.
    """

    sample_rate: float
    activations: np.ndarray   # (n, 3)
    kinematics: np.ndarray    # (n, 6)
    belt_mm: np.ndarray       # (n,)
    reward_mm: float
    mean_watts: float

    def __len__(self):
        return self.activations.shape[0]


def default_params() -> LimbParams:
    """Desk-scale defaults; feasibility.stroke_sweep validates the sizing."""
    l = np.array([0.25, 0.22])
    m = np.array([0.5, 0.35])
    r = 0.02
    return LimbParams(
        link_lengths=l,
        link_masses=m,
        link_inertias=m * l ** 2 / 3.0,          # uniform rods
        joint_damping=np.array([0.3, 0.2]),
        joint_limits=np.array([[-np.pi / 3, np.pi / 3], [0.0, 2 * np.pi / 3]]),
        moment_arms=np.array([[-r, r, -r],
                              [r, 0.0, -r]]),
        f_max=np.array([60.0, 60.0, 60.0]),
        motor_viscosity=20.0,
        gravity=9.81,
    )


# ---------------------------------------------------------------------------
# kinematics and tendon model (pure numpy surface)


def forward_kinematics(params: LimbParams, q) -> tuple[float, float]:
    """Endpoint of the distal link for joint angles ``q``."""
    l1, l2 = params.link_lengths
    q0, q1 = float(q[0]), float(q[1])
    x = l1 * math.sin(q0) + l2 * math.sin(q0 + q1)
    y = -(l1 * math.cos(q0) + l2 * math.cos(q0 + q1))
    return (x, y)


def jacobian(params: LimbParams, q) -> np.ndarray:
    """d(endpoint)/dq, 2x2.  Singular exactly when the links align."""
    l1, l2 = params.link_lengths
    q0, q1 = float(q[0]), float(q[1])
    c0, s0 = math.cos(q0), math.sin(q0)
    c01, s01 = math.cos(q0 + q1), math.sin(q0 + q1)
    return np.array([[l1 * c0 + l2 * c01, l2 * c01],
                     [l1 * s0 + l2 * s01, l2 * s01]])


def _check_activation(a: np.ndarray):
    if not np.all(np.isfinite(a)):
        raise ValueError("activation must be finite")
    if np.any(a < TONE - _A_TOL) or np.any(a > 1.0 + _A_TOL):
        raise ValueError(f"activation outside [{TONE}, 1]: baseline tone violated")


def tendon_tensions(params: LimbParams, a, q_dot) -> np.ndarray:
    """Tendon tensions for activation ``a`` at joint rates ``q_dot``.

    Reel-in rate of tendon i is ``(R^T q_dot)_i``; back-driving a motor
    sheds tension through the viscosity term, and tendons never push.
    """
    a = np.asarray(a, dtype=float)
    _check_activation(a)
    reel_in = params.moment_arms.T @ np.asarray(q_dot, dtype=float)
    return np.maximum(0.0, params.f_max * a - params.motor_viscosity * reel_in)


def mechanical_energy(params: LimbParams, state: LimbState) -> float:
    """Kinetic plus gravitational potential energy, zero at rest hanging."""
    l1, _ = params.link_lengths
    m1, m2 = params.link_masses
    i1, i2 = params.link_inertias
    lc1, lc2 = params.com_offsets
    g = params.gravity
    q0, q1 = state.q
    qd0, qd1 = state.q_dot
    qd01 = qd0 + qd1
    ke = (0.5 * (i1 + m2 * l1 ** 2) * qd0 ** 2 + 0.5 * i2 * qd01 ** 2
          + m2 * l1 * lc2 * math.cos(q1) * qd0 * qd01)
    pe = g * ((m1 * lc1 + m2 * l1) * (1.0 - math.cos(q0))
              + m2 * lc2 * (1.0 - math.cos(q0 + q1)))
    return ke + pe


# ---------------------------------------------------------------------------
# packed-parameter integrator kernels

(_L1, _L2, _M1, _M2, _LC1, _LC2, _I1, _I2,
 _B0, _B1, _Q0LO, _Q0HI, _Q1LO, _Q1HI,
 _R00, _R01, _R02, _R10, _R11, _R12,
 _F0, _F1, _F2, _CV, _G,
 _ACT, _CONTACT,
 _GROUND, _KN, _CN, _MU, _VS, _MBELT, _CBELT) = range(34)


def _pack(params: LimbParams, actuated: bool, contact_enabled: bool) -> np.ndarray:
    c = params.contact
    r = params.moment_arms
    lc = params.com_offsets
    return np.array([
        params.link_lengths[0], params.link_lengths[1],
        params.link_masses[0], params.link_masses[1],
        lc[0], lc[1],
        params.link_inertias[0], params.link_inertias[1],
        params.joint_damping[0], params.joint_damping[1],
        params.joint_limits[0, 0], params.joint_limits[0, 1],
        params.joint_limits[1, 0], params.joint_limits[1, 1],
        r[0, 0], r[0, 1], r[0, 2], r[1, 0], r[1, 1], r[1, 2],
        params.f_max[0], params.f_max[1], params.f_max[2],
        params.motor_viscosity, params.gravity,
        1.0 if actuated else 0.0, 1.0 if contact_enabled else 0.0,
        c.ground_height, c.normal_stiffness, c.normal_damping,
        c.friction_mu, c.smoothing_velocity, c.belt_mass, c.belt_drag,
    ])


@njit(cache=True)
def _dynamics(y, a0, a1, a2, p, dy):
    q0 = y[0]
    q1 = y[1]
    qd0 = y[2]
    qd1 = y[3]
    bv = y[5]
    s0 = math.sin(q0)
    c0 = math.cos(q0)
    s01 = math.sin(q0 + q1)
    c01 = math.cos(q0 + q1)
    l1 = p[_L1]
    l2 = p[_L2]

    t0 = 0.0
    t1 = 0.0
    t2 = 0.0
    if p[_ACT] != 0.0:
        cv = p[_CV]
        t0 = p[_F0] * a0 - cv * (p[_R00] * qd0 + p[_R10] * qd1)
        t1 = p[_F1] * a1 - cv * (p[_R01] * qd0 + p[_R11] * qd1)
        t2 = p[_F2] * a2 - cv * (p[_R02] * qd0 + p[_R12] * qd1)
        if t0 < 0.0:
            t0 = 0.0
        if t1 < 0.0:
            t1 = 0.0
        if t2 < 0.0:
            t2 = 0.0

    tau0 = p[_R00] * t0 + p[_R01] * t1 + p[_R02] * t2 - p[_B0] * qd0
    tau1 = p[_R10] * t0 + p[_R11] * t1 + p[_R12] * t2 - p[_B1] * qd1

    belt_acc = 0.0
    if p[_CONTACT] != 0.0:
        jx0 = l1 * c0 + l2 * c01
        jx1 = l2 * c01
        jy0 = l1 * s0 + l2 * s01
        jy1 = l2 * s01
        foot_y = -(l1 * c0 + l2 * c01)
        pen = p[_GROUND] - foot_y
        ft = 0.0
        if pen > 0.0:
            vy = jy0 * qd0 + jy1 * qd1
            fn = p[_KN] * pen - p[_CN] * vy
            if fn < 0.0:
                fn = 0.0
            vx = jx0 * qd0 + jx1 * qd1
            ft = -p[_MU] * fn * math.tanh((vx - bv) / p[_VS])
            tau0 += jx0 * ft + jy0 * fn
            tau1 += jx1 * ft + jy1 * fn
        belt_acc = (-ft - p[_CBELT] * bv) / p[_MBELT]

    m2 = p[_M2]
    h = m2 * l1 * p[_LC2]
    cq1 = math.cos(q1)
    sq1 = math.sin(q1)
    m11 = p[_I1] + m2 * l1 * l1 + p[_I2] + 2.0 * h * cq1
    m12 = p[_I2] + h * cq1
    m22 = p[_I2]

    g = p[_G]
    rhs0 = (tau0 + h * sq1 * (2.0 * qd0 * qd1 + qd1 * qd1)
            - g * ((p[_M1] * p[_LC1] + m2 * l1) * s0 + m2 * p[_LC2] * s01))
    rhs1 = tau1 - h * sq1 * qd0 * qd0 - g * m2 * p[_LC2] * s01

    det = m11 * m22 - m12 * m12
    dy[0] = qd0
    dy[1] = qd1
    dy[2] = (m22 * rhs0 - m12 * rhs1) / det
    dy[3] = (m11 * rhs1 - m12 * rhs0) / det
    if p[_CONTACT] != 0.0:
        dy[4] = bv
        dy[5] = belt_acc
    else:
        dy[4] = 0.0
        dy[5] = 0.0


@njit(cache=True)
def _rk4_step(y, a0, a1, a2, dt, p, k1, k2, k3, k4, tmp):
    _dynamics(y, a0, a1, a2, p, k1)
    for i in range(6):
        tmp[i] = y[i] + 0.5 * dt * k1[i]
    _dynamics(tmp, a0, a1, a2, p, k2)
    for i in range(6):
        tmp[i] = y[i] + 0.5 * dt * k2[i]
    _dynamics(tmp, a0, a1, a2, p, k3)
    for i in range(6):
        tmp[i] = y[i] + dt * k3[i]
    _dynamics(tmp, a0, a1, a2, p, k4)
    for i in range(6):
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    # hard joint stops: clamp the angle, kill outward velocity
    if y[0] < p[_Q0LO]:
        y[0] = p[_Q0LO]
        if y[2] < 0.0:
            y[2] = 0.0
    elif y[0] > p[_Q0HI]:
        y[0] = p[_Q0HI]
        if y[2] > 0.0:
            y[2] = 0.0
    if y[1] < p[_Q1LO]:
        y[1] = p[_Q1LO]
        if y[3] < 0.0:
            y[3] = 0.0
    elif y[1] > p[_Q1HI]:
        y[1] = p[_Q1HI]
        if y[3] > 0.0:
            y[3] = 0.0


@njit(cache=True)
def _rollout(y0, a_seq, n_sub, dt, p):
    n = a_seq.shape[0]
    q_hist = np.empty((n, 2))
    belt_hist = np.empty(n)
    y = y0.copy()
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    tmp = np.empty(6)
    for k in range(n):
        a0 = a_seq[k, 0]
        a1 = a_seq[k, 1]
        a2 = a_seq[k, 2]
        for _ in range(n_sub):
            _rk4_step(y, a0, a1, a2, dt, p, k1, k2, k3, k4, tmp)
        if not np.all(np.isfinite(y)):
            return q_hist, belt_hist, y, k
        q_hist[k, 0] = y[0]
        q_hist[k, 1] = y[1]
        belt_hist[k] = y[4]
    return q_hist, belt_hist, y, -1


# ---------------------------------------------------------------------------
# stepping and rollouts


def _state_to_vec(state: LimbState) -> np.ndarray:
    return np.array([state.q[0], state.q[1], state.q_dot[0], state.q_dot[1],
                     state.belt_position / 1000.0, state.belt_velocity / 1000.0])


def _vec_to_state(y: np.ndarray) -> LimbState:
    return LimbState(q=y[0:2].copy(), q_dot=y[2:4].copy(),
                     belt_position=y[4] * 1000.0, belt_velocity=y[5] * 1000.0)


def step(params: LimbParams, state: LimbState, a, dt: float,
         contact_enabled: bool = False) -> LimbState:
    """Advance the plant by one RK4 step of size ``dt``.

    ``a = None`` switches the motors off entirely (zero tensions), which is
    the passive configuration used by energy diagnostics; a real command
    must respect the baseline tone.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if a is None:
        p = _pack(params, actuated=False, contact_enabled=contact_enabled)
        a0 = a1 = a2 = 0.0
    else:
        a = np.asarray(a, dtype=float)
        _check_activation(a)
        p = _pack(params, actuated=True, contact_enabled=contact_enabled)
        a0, a1, a2 = a
    y = _state_to_vec(state)
    scratch = [np.empty(6) for _ in range(5)]
    _rk4_step(y, a0, a1, a2, dt, p, *scratch)
    if not np.all(np.isfinite(y)):
        raise SimulationDiverged(0)
    return _vec_to_state(y)


def differentiate(x: np.ndarray, sample_rate: float) -> np.ndarray:
    """Sample-wise derivative: central differences, one-sided second-order
    stencils at the endpoints."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    d = np.zeros_like(x)
    if n < 2:
        return d
    fs = float(sample_rate)
    if n == 2:
        d[0] = d[1] = (x[1] - x[0]) * fs
        return d
    d[1:-1] = (x[2:] - x[:-2]) * (fs / 2.0)
    d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) * (fs / 2.0)
    d[-1] = (3.0 * x[-1] - 4.0 * x[-2] + x[-3]) * (fs / 2.0)
    return d


def run_sequence(params: LimbParams, initial: LimbState, a_seq: np.ndarray,
                 sample_rate: float, contact_enabled: bool = False,
                 n_sub: int = 12) -> SimTrace:
    """Run an activation sequence under zero-order hold and record a trace.

    Each activation is held for one sample interval, integrated with
    ``n_sub`` RK4 substeps.  Recorded kinematics are the post-interval
    angles with velocities/accelerations from repeated finite differencing
    of those angles.
    """
    a_seq = np.asarray(a_seq, dtype=float)
    if a_seq.ndim != 2 or a_seq.shape[1] != 3 or a_seq.shape[0] == 0:
        raise ValueError("activation sequence must be a nonempty (n, 3) array")
    _check_activation(a_seq)
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    if n_sub < 1:
        raise ValueError("n_sub must be at least 1")

    p = _pack(params, actuated=True, contact_enabled=contact_enabled)
    dt = 1.0 / (sample_rate * n_sub)
    y0 = _state_to_vec(initial)
    q_hist, belt_m, _, bad = _rollout(y0, a_seq, n_sub, dt, p)
    if bad >= 0:
        raise SimulationDiverged(int(bad))

    qd = differentiate(q_hist, sample_rate)
    qdd = differentiate(qd, sample_rate)
    kin = np.concatenate([q_hist, qd, qdd], axis=1)
    belt_mm = belt_m * 1000.0
    reward = float(belt_mm[-1] - belt_mm[0])
    watts = float(np.mean((a_seq ** 2) @ params.rated_power))
    return SimTrace(sample_rate=float(sample_rate), activations=a_seq.copy(),
                    kinematics=kin, belt_mm=belt_mm, reward_mm=reward,
                    mean_watts=watts)


def standing_start(params: LimbParams) -> LimbState:
    """Consistent start posture: proximal vertical, distal flexed just
    enough to rest the foot on the treadmill surface (hanging straight if
    the surface is out of reach)."""
    l1, l2 = params.link_lengths
    depth = -params.contact.ground_height
    q1 = 0.0
    if l1 < depth < l1 + l2:
        q1 = math.acos((depth - l1) / l2)
    lo, hi = params.joint_limits[1]
    q1 = min(max(q1, lo), hi)
    return LimbState(q=np.array([0.0, q1]))


class Plant:
    """A limb bound to a sample rate, always restarted from the same posture.

    ``run`` is what experiment code hands around: it resets to the start
    posture, plays an activation sequence and returns the trace.  Instances
    hold no mutable state, so independent plants can run concurrently.
    """

    def __init__(self, params: LimbParams, sample_rate: float = 78.0,
                 n_sub: int = 12):
        self.params = params
        self.sample_rate = float(sample_rate)
        self.n_sub = int(n_sub)
        self.start_state = standing_start(params)

    def run(self, a_seq: np.ndarray, contact_enabled: bool = False) -> SimTrace:
        return run_sequence(self.params, self.start_state.copy(), a_seq,
                            self.sample_rate, contact_enabled, self.n_sub)


# ---------------------------------------------------------------------------
# trace serialization


def write_trace(trace: SimTrace, path):
    """CSV with 9-significant-digit floats, one row per sample."""
    n = len(trace)
    t = np.arange(n) / trace.sample_rate
    cols = np.column_stack([t, trace.activations, trace.kinematics,
                            trace.belt_mm])
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(TRACE_HEADER + "\n")
        for row in cols:
            f.write(",".join(f"{v:.9g}" for v in row) + "\n")


def read_trace(path, rated_power: np.ndarray | None = None) -> SimTrace:
    """Inverse of write_trace.  ``mean_watts`` needs the motor power
    ratings, which are not part of the CSV; pass them to recompute it."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    if data.shape[1] != 11:
        raise ValueError(f"expected 11 columns, got {data.shape[1]}")
    n = data.shape[0]
    if n > 1:
        sample_rate = (n - 1) / (data[-1, 0] - data[0, 0])
    else:
        sample_rate = 78.0
    a = data[:, 1:4]
    watts = float(np.mean((a ** 2) @ np.asarray(rated_power, dtype=float))) \
        if rated_power is not None else float("nan")
    return SimTrace(sample_rate=float(sample_rate), activations=a,
                    kinematics=data[:, 4:10], belt_mm=data[:, 10],
                    reward_mm=float(data[-1, 10] - data[0, 10]),
                    mean_watts=watts)
