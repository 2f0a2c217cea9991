"""Planar linkage kinematics of the variable-contact fingertip.

The fingertip is a three-link chain hung from anchor A: a pillar link l1, a
surface link l2 whose far end C is constrained to slide on the vertical rail
x = p_cx0, and a strip link l3 leaving the elbow at fixed +/- pi/6 offsets
from the l2 direction (apex spoke E above, strip end D below, toward the
camera).  Link angles are measured clockwise from the upward vertical, so a
link of length L at angle t contributes L * (-sin t, cos t).

Pressing the apex down by d mm drives the constraint system

    p_Ey(theta1, theta2) = p_Ey(rest) - d
    p_Cx(theta1, theta2) = p_Cx(rest)

whose branch-followed solution feeds the sensing model.  The nominal anchor
values stored on CavsGeometry are mutually over-determined (the rest endpoint
E0 is slightly out of reach of l1 + l3), so the rest pose is the least-squares
fit to the three endpoint conditions inside the admissible angle box, and the
operating constraints above are anchored to the pose actually achieved.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

SPOKE_HALF_ANGLE = math.pi / 6
# admissible angle box: pillar hangs to the left, elbow opens to the right
THETA1_BOX = (-math.pi, 0.0)
THETA2_BOX = (0.0, math.pi)

_NEWTON_CAP = 200
_JAC_H = 1e-7
_RESIDUAL_TOL = 1e-12  # well inside the 1e-9 contract


class GeometryInfeasible(ValueError):
    """Geometry cannot produce a rest configuration."""


class SolverFailure(RuntimeError):
    """Newton iteration with continuation fallback exceeded its budget or
    left the admissible angle box."""


@dataclass(frozen=True)
class CavsGeometry:
    """Link lengths and frame anchors, all in mm."""

    l1: float = 4.33
    l2: float = 5.77
    l3: float = 5.0
    l_r: float = 5.0
    p_ax: float = -5.0
    p_ay: float = 2.72
    p_cx0: float = 0.0
    p_ex0: float = 2.5
    p_ey0: float = 8.66
    d_sc: float = 3.5

    def __post_init__(self) -> None:
        for name in ("l1", "l2", "l3", "l_r"):
            if not getattr(self, name) > 0.0:
                raise GeometryInfeasible(f"{name} must be positive, got {getattr(self, name)}")
        if not self.d_sc > 0.0:
            raise GeometryInfeasible(f"d_sc must be positive, got {self.d_sc}")


@dataclass(frozen=True)
class JointState:
    theta1: float
    theta2: float
    d: float
    p_C: tuple[float, float]
    p_D: tuple[float, float]
    p_E: tuple[float, float]
    gamma: float


@dataclass(frozen=True)
class RestPose:
    """Least-squares rest configuration and the effective anchors derived
    from it (the operating constraints are measured against these, not the
    nominal p_ey0/p_cx0, which are not exactly reachable)."""

    theta1: float
    theta2: float
    p_ey0_eff: float
    p_cx0_eff: float
    residual: tuple[float, float, float]  # (Ex, Ey, Cx) misfit at rest, mm


def _link(theta: float) -> tuple[float, float]:
    return (-math.sin(theta), math.cos(theta))


def _points(geom: CavsGeometry, theta1: float, theta2: float):
    """Raw endpoint coordinates for the given angles."""
    a = theta1 + theta2
    ex = geom.p_ax - (geom.l1 * math.sin(theta1) + geom.l3 * math.sin(a + SPOKE_HALF_ANGLE))
    ey = geom.p_ay + (geom.l1 * math.cos(theta1) + geom.l3 * math.cos(a + SPOKE_HALF_ANGLE))
    cx = geom.p_ax - (geom.l1 * math.sin(theta1) + geom.l2 * math.sin(a))
    cy = geom.p_ay + (geom.l1 * math.cos(theta1) + geom.l2 * math.cos(a))
    dx = geom.p_ax - (geom.l1 * math.sin(theta1) + geom.l3 * math.sin(a - SPOKE_HALF_ANGLE))
    dy = geom.p_ay + (geom.l1 * math.cos(theta1) + geom.l3 * math.cos(a - SPOKE_HALF_ANGLE))
    gamma = math.pi / 3 + theta1 + theta2
    return (cx, cy), (dx, dy), (ex, ey), gamma


def _rest_misfit(geom: CavsGeometry, theta1: float, theta2: float) -> float:
    (cx, _), _, (ex, ey), _ = _points(geom, theta1, theta2)
    return (ex - geom.p_ex0) ** 2 + (ey - geom.p_ey0) ** 2 + (cx - geom.p_cx0) ** 2


def _rest_gradient(geom: CavsGeometry, t1: float, t2: float) -> tuple[float, float]:
    """Gradient of the rest misfit: 2 * J^T r with the analytic Jacobian of
    the (Ex, Ey, Cx) residuals."""
    a = t1 + t2
    o = SPOKE_HALF_ANGLE
    (cx, _), _, (ex, ey), _ = _points(geom, t1, t2)
    r = (ex - geom.p_ex0, ey - geom.p_ey0, cx - geom.p_cx0)
    j1 = (-(geom.l1 * math.cos(t1) + geom.l3 * math.cos(a + o)),
          -(geom.l1 * math.sin(t1) + geom.l3 * math.sin(a + o)),
          -(geom.l1 * math.cos(t1) + geom.l2 * math.cos(a)))
    j2 = (-geom.l3 * math.cos(a + o), -geom.l3 * math.sin(a + o), -geom.l2 * math.cos(a))
    g1 = 2.0 * sum(ji * ri for ji, ri in zip(j1, r))
    g2 = 2.0 * sum(ji * ri for ji, ri in zip(j2, r))
    return g1, g2


def _polish_rest(geom: CavsGeometry, t1: float, t2: float) -> tuple[float, float]:
    """Newton on the normal equations, numeric Jacobian of the gradient."""
    h = 1e-7
    for _ in range(30):
        g1, g2 = _rest_gradient(geom, t1, t2)
        a11 = (_rest_gradient(geom, t1 + h, t2)[0] - _rest_gradient(geom, t1 - h, t2)[0]) / (2 * h)
        a12 = (_rest_gradient(geom, t1, t2 + h)[0] - _rest_gradient(geom, t1, t2 - h)[0]) / (2 * h)
        a21 = (_rest_gradient(geom, t1 + h, t2)[1] - _rest_gradient(geom, t1 - h, t2)[1]) / (2 * h)
        a22 = (_rest_gradient(geom, t1, t2 + h)[1] - _rest_gradient(geom, t1, t2 - h)[1]) / (2 * h)
        det = a11 * a22 - a12 * a21
        if abs(det) < 1e-12:
            break
        s1 = (-g1 * a22 + g2 * a12) / det
        s2 = (-a11 * g2 + a21 * g1) / det
        t1 += s1
        t2 += s2
        if max(abs(s1), abs(s2)) < 1e-12:
            break
    return t1, t2


_rest_cache: dict[CavsGeometry, RestPose] = {}
_rest_lock = threading.Lock()


def rest_pose(geom: CavsGeometry) -> RestPose:
    """Least-squares root of the three rest endpoint conditions
    {p_Ex = p_ex0, p_Ey = p_ey0, p_Cx = p_cx0} over the angle box.

    Coarse vectorized grid scan followed by compass-search refinement;
    deterministic for a given geometry.
    """
    with _rest_lock:
        hit = _rest_cache.get(geom)
    if hit is not None:
        return hit

    n1, n2 = 700, 700
    t1g = np.linspace(THETA1_BOX[0] + 1e-6, THETA1_BOX[1] - 1e-6, n1)
    t2g = np.linspace(THETA2_BOX[0] + 1e-6, THETA2_BOX[1] - 1e-6, n2)
    T1, T2 = np.meshgrid(t1g, t2g, indexing="ij")
    A = T1 + T2
    ex = geom.p_ax - (geom.l1 * np.sin(T1) + geom.l3 * np.sin(A + SPOKE_HALF_ANGLE))
    ey = geom.p_ay + (geom.l1 * np.cos(T1) + geom.l3 * np.cos(A + SPOKE_HALF_ANGLE))
    cx = geom.p_ax - (geom.l1 * np.sin(T1) + geom.l2 * np.sin(A))
    S = (ex - geom.p_ex0) ** 2 + (ey - geom.p_ey0) ** 2 + (cx - geom.p_cx0) ** 2
    i, j = np.unravel_index(int(np.argmin(S)), S.shape)
    t1, t2 = float(t1g[i]), float(t2g[j])

    # compass search into the basin, then Newton on the normal equations
    step = float(t1g[1] - t1g[0])
    best = _rest_misfit(geom, t1, t2)
    while step > 1e-8:
        moved = False
        for dt1, dt2 in ((step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)):
            c1 = min(max(t1 + dt1, THETA1_BOX[0] + 1e-9), THETA1_BOX[1] - 1e-9)
            c2 = min(max(t2 + dt2, THETA2_BOX[0] + 1e-9), THETA2_BOX[1] - 1e-9)
            val = _rest_misfit(geom, c1, c2)
            if val < best:
                t1, t2, best = c1, c2, val
                moved = True
        if not moved:
            step *= 0.5
    t1, t2 = _polish_rest(geom, t1, t2)

    margin = 1e-6
    if (t1 - THETA1_BOX[0] < margin or THETA1_BOX[1] - t1 < margin
            or t2 - THETA2_BOX[0] < margin or THETA2_BOX[1] - t2 < margin):
        raise GeometryInfeasible("no interior rest configuration in the angle box")

    (cx0, _), _, (ex0, ey0), _ = _points(geom, t1, t2)
    pose = RestPose(
        theta1=t1,
        theta2=t2,
        p_ey0_eff=ey0,
        p_cx0_eff=cx0,
        residual=(ex0 - geom.p_ex0, ey0 - geom.p_ey0, cx0 - geom.p_cx0),
    )
    with _rest_lock:
        _rest_cache[geom] = pose
    return pose


def forward_points(geom: CavsGeometry, theta1: float, theta2: float) -> JointState:
    """Endpoint positions, contact half-angle gamma, and deformation d for
    the given joint angles.  d is the drop of the apex E below its rest
    height.  Total over admissible angles."""
    p_c, p_d, p_e, gamma = _points(geom, theta1, theta2)
    pose = rest_pose(geom)
    return JointState(
        theta1=theta1,
        theta2=theta2,
        d=pose.p_ey0_eff - p_e[1],
        p_C=p_c,
        p_D=p_d,
        p_E=p_e,
        gamma=gamma,
    )


def _in_box(t1: float, t2: float) -> bool:
    return THETA1_BOX[0] < t1 < THETA1_BOX[1] and THETA2_BOX[0] < t2 < THETA2_BOX[1]


def _constraints(geom: CavsGeometry, pose: RestPose, t1: float, t2: float, d: float):
    (cx, _), _, (_, ey), _ = _points(geom, t1, t2)
    return ey - (pose.p_ey0_eff - d), cx - pose.p_cx0_eff


def _newton(geom: CavsGeometry, pose: RestPose, t1: float, t2: float, d: float,
            budget: list[int]) -> tuple[float, float]:
    """Damped Newton on the 2x2 constraint system; central-difference
    Jacobian.  Raises SolverFailure on budget exhaustion or box exit."""
    h = _JAC_H
    for _ in range(_NEWTON_CAP):
        if budget[0] <= 0:
            raise SolverFailure(f"iteration cap {_NEWTON_CAP} exceeded at d={d:g}")
        budget[0] -= 1
        f1, f2 = _constraints(geom, pose, t1, t2, d)
        norm = max(abs(f1), abs(f2))
        if norm < _RESIDUAL_TOL:
            if not _in_box(t1, t2):
                raise SolverFailure(f"solution leaves the admissible angle box at d={d:g}")
            return t1, t2
        a11 = (_constraints(geom, pose, t1 + h, t2, d)[0]
               - _constraints(geom, pose, t1 - h, t2, d)[0]) / (2 * h)
        a12 = (_constraints(geom, pose, t1, t2 + h, d)[0]
               - _constraints(geom, pose, t1, t2 - h, d)[0]) / (2 * h)
        a21 = (_constraints(geom, pose, t1 + h, t2, d)[1]
               - _constraints(geom, pose, t1 - h, t2, d)[1]) / (2 * h)
        a22 = (_constraints(geom, pose, t1, t2 + h, d)[1]
               - _constraints(geom, pose, t1, t2 - h, d)[1]) / (2 * h)
        det = a11 * a22 - a12 * a21
        if abs(det) < 1e-14:
            raise SolverFailure(f"singular Jacobian at d={d:g}")
        s1 = (-f1 * a22 + f2 * a12) / det
        s2 = (-a11 * f2 + a21 * f1) / det
        lam = 1.0
        for _ in range(40):  # damping: accept only residual decrease
            g1, g2 = _constraints(geom, pose, t1 + lam * s1, t2 + lam * s2, d)
            if max(abs(g1), abs(g2)) < norm:
                break
            lam *= 0.5
        t1 += lam * s1
        t2 += lam * s2
    raise SolverFailure(f"iteration cap {_NEWTON_CAP} exceeded at d={d:g}")


_GRID = 0.05  # branch cache spacing in mm
_branch_cache: dict[tuple[CavsGeometry, int], tuple[float, float]] = {}
_branch_lock = threading.Lock()


def _branch_node(geom: CavsGeometry, k: int) -> tuple[float, float]:
    """Angles on the followed branch at d = k * _GRID, memoized."""
    with _branch_lock:
        hit = _branch_cache.get((geom, k))
    if hit is not None:
        return hit
    pose = rest_pose(geom)
    # walk down to the highest cached node, then fill upward iteratively
    start = k - 1
    val: tuple[float, float] | None = None
    while start >= 0:
        with _branch_lock:
            val = _branch_cache.get((geom, start))
        if val is not None:
            break
        start -= 1
    if val is None:
        start, val = 0, (pose.theta1, pose.theta2)
        with _branch_lock:
            _branch_cache[(geom, 0)] = val
    for j in range(start + 1, k + 1):
        val = _continue_to(geom, pose, val[0], val[1], (j - 1) * _GRID, j * _GRID)
        with _branch_lock:
            _branch_cache[(geom, j)] = val
    return val


def _continue_to(geom: CavsGeometry, pose: RestPose, t1: float, t2: float,
                 d_from: float, d_to: float) -> tuple[float, float]:
    """Continuation in d with step bisection on Newton failure."""
    budget = [_NEWTON_CAP]
    d = d_from
    step = d_to - d_from
    while abs(d - d_to) > 0.0:
        target = d + step
        if (step > 0 and target > d_to) or (step < 0 and target < d_to):
            target = d_to
        try:
            t1n, t2n = _newton(geom, pose, t1, t2, target, budget)
        except SolverFailure:
            if budget[0] <= 0:
                raise
            step *= 0.5
            if abs(step) < 1e-6:
                raise SolverFailure(f"continuation stalled near d={d:g}") from None
            continue
        t1, t2, d = t1n, t2n, target
    return t1, t2


def solve_joint_angles(geom: CavsGeometry, d: float) -> JointState:
    """Branch-followed solution of the deformation constraints at depth d.

    Warm-starts from the nearest cached node on the branch from d = 0 and
    continues in steps of at most 0.05 mm, bisecting the continuation step
    whenever a Newton solve stalls.  Residuals are driven below 1e-12 mm.
    """
    if not math.isfinite(d) or d < 0.0:
        raise ValueError(f"deformation must be finite and >= 0, got {d!r}")
    pose = rest_pose(geom)
    k = round(d / _GRID)
    t1, t2 = _branch_node(geom, k)
    if d != k * _GRID:
        t1, t2 = _continue_to(geom, pose, t1, t2, k * _GRID, d)
    return forward_points(geom, t1, t2)


def projected_width_wx(state: JointState, geom: CavsGeometry) -> float:
    """Horizontal extent of the red strip: l_r * cos(gamma), clamped to
    [0, l_r]."""
    return geom.l_r * max(0.0, math.cos(state.gamma))


_limits_cache: dict[CavsGeometry, tuple[float, float]] = {}
_limits_lock = threading.Lock()


def deformation_limits(geom: CavsGeometry) -> tuple[float, float]:
    """(d_min, d_max) for the followed branch.

    d_min = 0.  d_max is the largest depth at which the branch still solves
    with cos(gamma) >= 0 and the strip end stays in front of the camera
    (p_Dy > 0, the sensing validity bound) -- found by an upward 0.001 mm
    scan with bisection refinement.
    """
    with _limits_lock:
        hit = _limits_cache.get(geom)
    if hit is not None:
        return hit

    pose = rest_pose(geom)  # raises GeometryInfeasible when degenerate

    def ok(d: float) -> bool:
        try:
            st = solve_joint_angles(geom, d)
        except SolverFailure:
            return False
        return math.cos(st.gamma) >= 0.0 and st.p_D[1] > 0.0

    if not ok(0.0):
        raise GeometryInfeasible("rest configuration violates the sensing bounds")
    # hard geometric ceiling: apex cannot drop below full extension
    d_hi = pose.p_ey0_eff - geom.p_ay + geom.l1 + geom.l3
    lo, d = 0.0, 0.0
    coarse = 0.05
    while d < d_hi and ok(d + coarse):
        d += coarse
        lo = d
    fine = lo
    while fine < min(lo + coarse, d_hi) and ok(fine + 0.001):
        fine += 0.001
    lo, hi = fine, fine + 0.001
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    limits = (0.0, lo)
    with _limits_lock:
        _limits_cache[geom] = limits
    return limits
