"""Deterministic planar-arm world: kinematics, task stepping, scripted oracle.

The arm is a serial chain of revolute joints in the plane. All operations
are pure functions of their inputs; randomness enters only through
explicitly passed seeds, so rollouts and oracle recordings are exactly
reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    GenerationError,
    ReachabilityError,
    IKConvergenceError,
    ValidationError,
)
from .trajectory import Demonstration, Pose, normalize_angle, state_action_pairs

GRIPPER_OPEN = 1
GRIPPER_CLOSED = 0
GRIPPER_TOGGLE_THRESHOLD = 0.5  # |delta| below this leaves the gripper alone

IK_DEFAULT_TOL = 1e-4
IK_DEFAULT_MAX_ITER = 200
IK_DEFAULT_DAMPING = 0.1
IK_STEP_CAP = 0.5  # rad per iteration, keeps far-off targets from overshooting


@dataclass
class ArmModel:
    """Planar kinematic chain: link lengths, per-joint limits, base position."""

    link_lengths: np.ndarray
    joint_limits: np.ndarray | None = None  # (J, 2) [lo, hi] radians
    base: np.ndarray = field(default_factory=lambda: np.zeros(2))
    home_joints: np.ndarray | None = None  # rest configuration, start of every task

    def __post_init__(self):
        self.link_lengths = np.asarray(self.link_lengths, dtype=float)
        if self.link_lengths.ndim != 1 or self.link_lengths.size == 0:
            raise ConfigError("link_lengths must be a non-empty 1-D array")
        if np.any(self.link_lengths <= 0):
            raise ConfigError("all link lengths must be positive")
        j = self.link_lengths.size
        if self.joint_limits is None:
            self.joint_limits = np.tile([-math.pi, math.pi], (j, 1)).astype(float)
        self.joint_limits = np.asarray(self.joint_limits, dtype=float)
        if self.joint_limits.shape != (j, 2):
            raise ConfigError(f"joint_limits must have shape ({j}, 2)")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ConfigError("each joint limit must satisfy lo < hi")
        self.base = np.asarray(self.base, dtype=float)
        if self.base.shape != (2,):
            raise ConfigError("base must be a 2-vector")
        if self.home_joints is None:
            self.home_joints = np.zeros(j)
        self.home_joints = np.asarray(self.home_joints, dtype=float)
        if self.home_joints.shape != (j,):
            raise ConfigError(f"home_joints must have {j} entries")

    @property
    def joint_count(self) -> int:
        return self.link_lengths.size

    @property
    def max_reach(self) -> float:
        return float(self.link_lengths.sum())

    @property
    def min_reach(self) -> float:
        # Inner annulus radius for a chain free to fold back on itself.
        longest = float(self.link_lengths.max())
        return max(0.0, 2.0 * longest - self.max_reach)

    def clamp(self, joints: np.ndarray) -> np.ndarray:
        return np.clip(joints, self.joint_limits[:, 0], self.joint_limits[:, 1])

    def within_limits(self, joints: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(
            np.all(joints >= self.joint_limits[:, 0] - tol)
            and np.all(joints <= self.joint_limits[:, 1] + tol)
        )


def joint_positions(arm: ArmModel, joints: np.ndarray) -> np.ndarray:
    """Positions of the base and every link tip: shape (J+1, 2)."""
    joints = np.asarray(joints, dtype=float)
    cumulative = np.cumsum(joints)
    pts = np.empty((arm.joint_count + 1, 2))
    pts[0] = arm.base
    for k in range(arm.joint_count):
        pts[k + 1] = pts[k] + arm.link_lengths[k] * np.array(
            [math.cos(cumulative[k]), math.sin(cumulative[k])]
        )
    return pts


def forward_kinematics(arm: ArmModel, joints: np.ndarray, check_limits: bool = True) -> Pose:
    """End-effector pose for a joint configuration."""
    joints = np.asarray(joints, dtype=float)
    if joints.shape != (arm.joint_count,):
        raise ValidationError(
            f"expected {arm.joint_count} joint values, got shape {joints.shape}"
        )
    if check_limits and not arm.within_limits(joints, tol=1e-9):
        raise ValidationError(f"joints {joints} violate the arm's limits")
    pts = joint_positions(arm, joints)
    return Pose(pts[-1], float(np.sum(joints)))


def jacobian(arm: ArmModel, joints: np.ndarray) -> np.ndarray:
    """2 x J position Jacobian of the planar chain."""
    cumulative = np.cumsum(np.asarray(joints, dtype=float))
    jac = np.zeros((2, arm.joint_count))
    # d p / d theta_m = sum over links at or after m of L_k * (-sin, cos).
    sin_terms = arm.link_lengths * np.sin(cumulative)
    cos_terms = arm.link_lengths * np.cos(cumulative)
    for m in range(arm.joint_count):
        jac[0, m] = -np.sum(sin_terms[m:])
        jac[1, m] = np.sum(cos_terms[m:])
    return jac


def solve_ik(
    arm: ArmModel,
    target: np.ndarray,
    seed_joints: np.ndarray,
    tol: float = IK_DEFAULT_TOL,
    max_iter: int = IK_DEFAULT_MAX_ITER,
    damping: float = IK_DEFAULT_DAMPING,
) -> np.ndarray:
    """Damped least-squares inverse kinematics for a 2-D target position.

    Iterates dq = J^T (J J^T + lambda^2 I)^-1 e from ``seed_joints``,
    clamping to joint limits each step. The damping adapts
    Levenberg-Marquardt style, halving after an improving step and growing
    fourfold after a rejected one: a fixed damping stalls near the straight
    configuration where the radial Jacobian component vanishes, which is
    exactly where full-extension targets live. Deterministic given the seed
    configuration.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (2,):
        raise ValidationError("IK target must be a 2-vector")
    radius = float(np.linalg.norm(target - arm.base))
    if radius > arm.max_reach + 1e-9 or radius < arm.min_reach - 1e-9:
        raise ReachabilityError(
            f"target at radius {radius:.4f} m outside reachable annulus "
            f"[{arm.min_reach:.4f}, {arm.max_reach:.4f}]"
        )

    best_residual = math.inf
    for start in _ik_starts(arm, target, np.asarray(seed_joints, dtype=float)):
        joints, residual = _descend(arm, target, start, tol, max_iter, damping)
        if residual <= tol:
            return joints
        best_residual = min(best_residual, residual)
    raise IKConvergenceError(
        f"IK for target {target} did not reach tol {tol:g} in {max_iter} iterations",
        best_residual,
    )


def _ik_starts(arm: ArmModel, target: np.ndarray, seed_joints: np.ndarray):
    """The caller's seed first, then deterministic aiming restarts.

    Greedy descent with limit clamping can stall in a local minimum when
    the target sits far from the seed (e.g. behind the base); restarting
    with the first joint aimed at the target and a few elbow-bend patterns
    recovers those cases without disturbing warm-started calls.
    """
    yield arm.clamp(seed_joints.copy())
    offset = target - arm.base
    heading = math.atan2(offset[1], offset[0])
    radius = float(np.linalg.norm(offset))
    j = arm.joint_count
    if j >= 2:
        # Two-link triangle solution with links 2..J fused into one segment.
        la = float(arm.link_lengths[0])
        lb = float(arm.link_lengths[1:].sum())
        cos_elbow = np.clip((radius**2 - la**2 - lb**2) / (2 * la * lb), -1.0, 1.0)
        for elbow in (math.acos(cos_elbow), -math.acos(cos_elbow)):
            joints = np.zeros(j)
            joints[0] = heading - math.atan2(lb * math.sin(elbow), la + lb * math.cos(elbow))
            joints[1] = elbow
            yield arm.clamp(joints)
    for bend in (0.3, 1.2, 2.6):
        for sign in (1.0, -1.0):
            joints = np.zeros(j)
            joints[0] = heading
            for k in range(1, j):
                joints[k] = sign * bend * (-1.0) ** (k - 1)
            yield arm.clamp(joints)


def _descend(
    arm: ArmModel,
    target: np.ndarray,
    joints: np.ndarray,
    tol: float,
    max_iter: int,
    damping: float,
) -> tuple[np.ndarray, float]:
    lam = damping
    error = target - joint_positions(arm, joints)[-1]
    residual = float(np.linalg.norm(error))
    for _ in range(max_iter):
        if residual <= tol:
            break
        jac = jacobian(arm, joints)
        gram = jac @ jac.T + lam * lam * np.eye(2)
        dq = jac.T @ np.linalg.solve(gram, error)
        step_norm = float(np.linalg.norm(dq))
        if step_norm > IK_STEP_CAP:
            dq *= IK_STEP_CAP / step_norm
        candidate = arm.clamp(joints + dq)
        cand_error = target - joint_positions(arm, candidate)[-1]
        cand_residual = float(np.linalg.norm(cand_error))
        if cand_residual < residual:
            joints, error, residual = candidate, cand_error, cand_residual
            lam = max(lam * 0.5, 1e-9)
        else:
            lam = min(lam * 4.0, 1e6)
    return joints, residual


@dataclass
class TaskSpec:
    """Task geometry: reach waypoints or a pick-and-place object and goal."""

    kind: str  # "three_waypoints" | "pick_and_place"
    waypoints: list[np.ndarray] = field(default_factory=list)
    object_start: np.ndarray | None = None
    goal: np.ndarray | None = None
    grasp_radius: float = 0.08
    success_tolerance: float = 0.05

    def __post_init__(self):
        if self.kind not in ("three_waypoints", "pick_and_place"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        self.waypoints = [np.asarray(w, dtype=float) for w in self.waypoints]
        if self.kind == "three_waypoints" and len(self.waypoints) != 3:
            raise ConfigError("three_waypoints task needs exactly 3 waypoints")
        if self.grasp_radius <= 0:
            raise ConfigError("grasp_radius must be positive")
        if self.object_start is not None:
            self.object_start = np.asarray(self.object_start, dtype=float)
        if self.goal is not None:
            self.goal = np.asarray(self.goal, dtype=float)
        if self.kind == "pick_and_place" and (self.object_start is None or self.goal is None):
            raise ConfigError("pick_and_place task needs object_start and goal")

    @property
    def uses_gripper(self) -> bool:
        return self.kind == "pick_and_place"

    def action_dim(self, joint_count: int) -> int:
        return joint_count + (1 if self.uses_gripper else 0)


@dataclass
class SimState:
    """World state: joints, gripper flag, object position, attachment."""

    joints: np.ndarray
    gripper: int = GRIPPER_OPEN
    object_position: np.ndarray | None = None
    attached: bool = False

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=float)
        if self.object_position is not None:
            self.object_position = np.asarray(self.object_position, dtype=float)
        if self.attached and self.gripper != GRIPPER_CLOSED:
            raise ValidationError("an attached object requires a closed gripper")
        if self.attached and self.object_position is None:
            raise ValidationError("attached flag set but no object present")

    def check_attachment(self, arm: ArmModel, tol: float = 1e-9) -> None:
        if self.attached:
            ee = joint_positions(arm, self.joints)[-1]
            if float(np.linalg.norm(ee - self.object_position)) > tol:
                raise ValidationError("attached object drifted away from the end effector")


def initial_state(task: TaskSpec, arm: ArmModel) -> SimState:
    obj = task.object_start.copy() if task.kind == "pick_and_place" else None
    return SimState(joints=arm.home_joints.copy(), gripper=GRIPPER_OPEN,
                    object_position=obj, attached=False)


def step(state: SimState, action: np.ndarray, arm: ArmModel, task: TaskSpec) -> SimState:
    """Apply one action: joint deltas (clamped) plus an optional gripper channel.

    The gripper channel closes the gripper when the delta is <= -0.5 and
    opens it when >= +0.5. Grasping happens only on an open-to-closed
    transition with the end effector within the task's grasp radius; an
    attached object tracks the end effector until release.
    """
    action = np.asarray(action, dtype=float)
    expected = task.action_dim(arm.joint_count)
    if action.shape != (expected,):
        raise ValidationError(
            f"action must have {expected} entries for this task, got shape {action.shape}"
        )
    joints = arm.clamp(state.joints + action[: arm.joint_count])

    gripper = state.gripper
    if task.uses_gripper:
        delta = action[-1]
        if delta <= -GRIPPER_TOGGLE_THRESHOLD:
            gripper = GRIPPER_CLOSED
        elif delta >= GRIPPER_TOGGLE_THRESHOLD:
            gripper = GRIPPER_OPEN

    ee = joint_positions(arm, joints)[-1]
    attached = state.attached
    object_position = None if state.object_position is None else state.object_position.copy()
    if state.gripper == GRIPPER_OPEN and gripper == GRIPPER_CLOSED:
        if object_position is not None and float(np.linalg.norm(ee - object_position)) <= task.grasp_radius:
            attached = True
    elif state.gripper == GRIPPER_CLOSED and gripper == GRIPPER_OPEN:
        attached = False
    if attached:
        object_position = ee.copy()

    return SimState(joints=joints, gripper=gripper,
                    object_position=object_position, attached=attached)


# ---------------------------------------------------------------------------
# Scripted oracle: stands in for a human giving the one seed demonstration.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleProfile:
    """How the scripted demonstrator moves.

    Each leg between route points is a minimum-jerk position profile, so
    velocity tapers to zero at both ends. ``dwell_steps`` repeats of the
    exact route point are inserted at interior stops (turns, grasp,
    release), producing the dense low-velocity clusters the key-pose
    detector looks for. ``tremor_sigma`` adds hand-tremor noise scaled by
    instantaneous speed, so stops and route points stay exact.
    """

    steps_per_segment: int = 25
    dwell_steps: int = 8
    tremor_sigma: float = 0.0005
    park_position: np.ndarray | None = None

    def __post_init__(self):
        if self.steps_per_segment < 2:
            raise ConfigError("steps_per_segment must be at least 2")
        if self.dwell_steps < 0:
            raise ConfigError("dwell_steps must be non-negative")
        if self.tremor_sigma < 0:
            raise ConfigError("tremor_sigma must be non-negative")
        if self.park_position is not None:
            object.__setattr__(self, "park_position", np.asarray(self.park_position, dtype=float))


def _min_jerk_blend(n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)
    return 10 * t**3 - 15 * t**4 + 6 * t**5


def oracle_route(task: TaskSpec, arm: ArmModel, profile: OracleProfile) -> list[np.ndarray]:
    """Route points the oracle visits, in order, starting at the home pose."""
    start = joint_positions(arm, arm.home_joints)[-1]
    if profile.park_position is not None:
        park = profile.park_position
    else:
        park = start + np.array([0.15, 0.15])
    if task.kind == "three_waypoints":
        stops = list(task.waypoints)
    else:
        stops = [task.object_start, task.goal]
    return [start] + stops + [park]


def oracle_stop_indices(task: TaskSpec, arm: ArmModel, profile: OracleProfile) -> list[int]:
    """Trace index of the dwell center at each interior route stop.

    Stops are the task waypoints (reach) or the grasp and release points
    (pick-and-place), in route order.
    """
    route = oracle_route(task, arm, profile)
    indices = []
    cursor = 0  # index of the last emitted point
    for _ in range(len(route) - 2):
        cursor += profile.steps_per_segment - 1  # leg ends on the stop
        indices.append(cursor + profile.dwell_steps // 2)
        cursor += profile.dwell_steps
    return indices


def oracle_demonstration(
    task: TaskSpec,
    arm: ArmModel,
    profile: OracleProfile | None = None,
    seed: int = 0,
    ik_tol: float = IK_DEFAULT_TOL,
    demo_id: str = "seed-demo",
) -> Demonstration:
    """Record one scripted demonstration of the task.

    The end-effector path interpolates the route with minimum-jerk legs,
    dwells at every interior stop, and is converted to joints with
    damped-least-squares IK chained from the previous configuration.
    Stored poses are recomputed from the solved joints, so the output is
    forward-kinematics consistent by construction.
    """
    profile = profile or OracleProfile()
    rng = np.random.default_rng(seed)
    route = oracle_route(task, arm, profile)
    for point in route:
        radius = float(np.linalg.norm(np.asarray(point) - arm.base))
        if radius > arm.max_reach or radius < arm.min_reach:
            raise ReachabilityError(f"route point {point} is outside the arm's annulus")

    path: list[np.ndarray] = [route[0].copy()]
    speeds: list[float] = [0.0]
    for a, b in zip(route, route[1:]):
        blend = _min_jerk_blend(profile.steps_per_segment)
        leg = a[None, :] + (b - a)[None, :] * blend[:, None]
        velocity = np.diff(blend, prepend=blend[0]) * float(np.linalg.norm(b - a))
        path.extend(leg[1:])
        speeds.extend(np.abs(velocity[1:]))
        is_interior_stop = not np.array_equal(b, route[-1])
        if is_interior_stop:
            path.extend(b.copy() for _ in range(profile.dwell_steps))
            speeds.extend(0.0 for _ in range(profile.dwell_steps))

    # Hand tremor, proportional to speed: exact at stops and route points.
    targets = np.array(path)
    if profile.tremor_sigma > 0:
        noise = rng.normal(0.0, profile.tremor_sigma, size=targets.shape)
        scale = np.minimum(np.asarray(speeds) / max(np.max(speeds), 1e-12), 1.0)
        targets = targets + noise * scale[:, None]

    grasp_at = release_at = None
    if task.kind == "pick_and_place":
        stops = oracle_stop_indices(task, arm, profile)
        grasp_at, release_at = stops[0], stops[1]

    joints_seq = np.empty((len(targets), arm.joint_count))
    grippers = np.full(len(targets), GRIPPER_OPEN, dtype=np.int64)
    current = arm.home_joints.copy()
    for i, target in enumerate(targets):
        try:
            current = solve_ik(arm, target, current, tol=ik_tol)
        except (IKConvergenceError, ReachabilityError) as exc:
            raise GenerationError(f"oracle IK failed at step {i}: {exc}") from exc
        joints_seq[i] = current
        if grasp_at is not None:
            if grasp_at <= i < release_at:
                grippers[i] = GRIPPER_CLOSED

    positions = np.array([joint_positions(arm, q)[-1] for q in joints_seq])
    headings = np.array([normalize_angle(float(np.sum(q))) for q in joints_seq])
    return Demonstration(
        positions=positions,
        headings=headings,
        joints=joints_seq,
        grippers=grippers,
        demo_id=demo_id,
        source="oracle",
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Rollout traces and the task-completion-error metric.
# ---------------------------------------------------------------------------

@dataclass
class Trace:
    """Time series produced by executing actions in the world."""

    ee_positions: np.ndarray  # (T, 2)
    joints: np.ndarray  # (T, J)
    grippers: np.ndarray  # (T,)
    object_positions: np.ndarray | None = None  # (T, 2) for object tasks

    def __len__(self) -> int:
        return self.ee_positions.shape[0]


def trace_from_states(states: Sequence[SimState], arm: ArmModel) -> Trace:
    ee = np.array([joint_positions(arm, s.joints)[-1] for s in states])
    joints = np.array([s.joints for s in states])
    grippers = np.array([s.gripper for s in states], dtype=np.int64)
    objects = None
    if states[0].object_position is not None:
        objects = np.array([s.object_position for s in states])
    return Trace(ee_positions=ee, joints=joints, grippers=grippers, object_positions=objects)


def replay(demo: Demonstration, arm: ArmModel, task: TaskSpec) -> Trace:
    """Re-execute a demonstration's actions through the world dynamics."""
    state = initial_state(task, arm)
    states = [state]
    for _, action in state_action_pairs(demo, include_gripper=task.uses_gripper):
        state = step(state, action, arm, task)
        states.append(state)
    return trace_from_states(states, arm)


def trace_from_demonstration(demo: Demonstration) -> Trace:
    """View a demonstration's recorded poses as a trace (no dynamics)."""
    return Trace(
        ee_positions=demo.positions.copy(),
        joints=demo.joints.copy(),
        grippers=demo.grippers.copy(),
        object_positions=None,
    )


def tce(trace: Trace, task: TaskSpec) -> float:
    """Task completion error in meters.

    Reach: mean over the three waypoints of the minimum end-effector
    distance attained anywhere in the trace. Pick-and-place: distance from
    the object's final position to the goal.
    """
    if len(trace) == 0:
        raise ValidationError("cannot score an empty trace")
    if task.kind == "three_waypoints":
        minima = []
        for w in task.waypoints:
            dists = np.linalg.norm(trace.ee_positions - w[None, :], axis=1)
            minima.append(float(dists.min()))
        return float(np.mean(minima))
    if trace.object_positions is None:
        raise ValidationError("pick_and_place scoring needs object positions in the trace")
    return float(np.linalg.norm(trace.object_positions[-1] - task.goal))
