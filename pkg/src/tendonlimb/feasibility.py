"""Feasible endpoint force sets and downforce margins.

At a posture ``q`` the endpoint force reachable with tendon activations
``a`` in the unit cube is ``H a`` with ``H = J^{-T} R diag(f_max)``.  The
image of the cube under this linear map is a convex polygon whose vertices
all come from binary activation patterns, so sizing questions (can the leg
press harder than its own weight anywhere along the propulsive stroke?)
reduce to enumerating the 8 corner images.

The activation lower bound here is 0, not the runtime 15% tone: sizing
asks what the routing can do over the full activation range.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import SingularPosture
from .plant import LimbParams, jacobian

_DET_TOL = 1e-9
_COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class OutputMap:
    """Activation-to-endpoint-force matrix at one posture."""

    h: np.ndarray   # (2, 3), N per unit activation
    q: np.ndarray


@dataclass(frozen=True)
class ForcePolygon:
    """Convex feasible force set; ``vertices`` is (m, 2), counterclockwise."""

    vertices: np.ndarray

    def contains(self, point, tol: float = 1e-9) -> bool:
        v = self.vertices
        p = np.asarray(point, dtype=float)
        nxt = np.roll(v, -1, axis=0)
        cross = (nxt[:, 0] - v[:, 0]) * (p[1] - v[:, 1]) \
            - (nxt[:, 1] - v[:, 1]) * (p[0] - v[:, 0])
        return bool(np.all(cross >= -tol))


def output_map(params: LimbParams, q) -> OutputMap:
    j = jacobian(params, q)
    det = j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
    if abs(det) < _DET_TOL:
        raise SingularPosture(f"|det J| = {abs(det):.3e} at q = {tuple(q)}")
    inv_t = np.array([[j[1, 1], -j[1, 0]], [-j[0, 1], j[0, 0]]]) / det
    h = inv_t @ params.moment_arms @ np.diag(params.f_max)
    return OutputMap(h=h, q=np.asarray(q, dtype=float))


def convex_hull_2d(points: np.ndarray, collinear_tol: float = _COLLINEAR_TOL) -> np.ndarray:
    """Monotone-chain hull, counterclockwise, collinear points merged.

    Intended for the handful-of-points cases in this package (binary force
    vertices, reward-energy scatter); degenerate inputs collapse to the
    distinct extreme points.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if pts.shape[0] <= 2:
        return pts

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                ax, ay = out[-2]
                bx, by = out[-1]
                if (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) <= collinear_tol:
                    out.pop()
                else:
                    break
            out.append((p[0], p[1]))
        return out

    seq = sorted(map(tuple, pts))
    lower = chain(seq)
    upper = chain(reversed(seq))
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] == 0:
        hull = pts[:1]
    return hull


def feasible_force_set(params: LimbParams, q) -> ForcePolygon:
    """Hull of the 8 binary-activation endpoint forces at ``q``."""
    h = output_map(params, q).h
    corners = np.array(list(product((0.0, 1.0), repeat=3)))
    points = corners @ h.T
    return ForcePolygon(vertices=convex_hull_2d(points))


def max_downward_force(params: LimbParams, q) -> float:
    """Largest downward endpoint force (-f_y) over the feasible set.

    A linear objective over the activation cube peaks at a binary vertex,
    so the corner images are all that is needed.
    """
    h = output_map(params, q).h
    corners = np.array(list(product((0.0, 1.0), repeat=3)))
    return float(np.max(-(corners @ h.T)[:, 1]))


@dataclass(frozen=True)
class SweepRow:
    q: tuple
    max_down_n: float
    weight_margin_n: float
    singular: bool


def stroke_sweep(params: LimbParams, postures) -> list[SweepRow]:
    """Downforce and weight margin at each posture, in input order.

    Singular postures are flagged with NaN values rather than aborting the
    sweep.
    """
    weight = params.total_weight
    rows = []
    for q in postures:
        try:
            down = max_downward_force(params, q)
            rows.append(SweepRow(q=(float(q[0]), float(q[1])), max_down_n=down,
                                 weight_margin_n=down - weight, singular=False))
        except SingularPosture:
            rows.append(SweepRow(q=(float(q[0]), float(q[1])),
                                 max_down_n=float("nan"),
                                 weight_margin_n=float("nan"), singular=True))
    return rows


def write_sweep(rows: list[SweepRow], path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("q0,q1,max_down_N,weight_margin_N\n")
        for r in rows:
            f.write(f"{r.q[0]:.9g},{r.q[1]:.9g},"
                    f"{r.max_down_n:.9g},{r.weight_margin_n:.9g}\n")


DEFAULT_STROKE_POSTURES = (
    (0.3, 0.5),
    (0.15, 0.55),
    (0.0, 0.6),
    (-0.15, 0.55),
    (-0.3, 0.5),
)
