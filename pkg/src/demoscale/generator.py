"""Candidate-demonstration synthesis from one seed demonstration.

Waypoints are sampled from the seed trace at random intervals, merged with
the detected key poses (so task-critical poses survive the thinning), and
re-planned into new trajectories: joint-space interpolation through
jittered via-points stands in for an external motion planner while keeping
its useful property, diverse waypoint-respecting paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigError, GenerationError, ValidationError
from .keypose import KeyPoseReport
from .simenv import ArmModel, TaskSpec, jacobian, joint_positions, solve_ik
from .simenv import IKConvergenceError, ReachabilityError
from .trajectory import Dataset, Demonstration, Pose, normalize_angle


@dataclass(frozen=True)
class SamplerConfig:
    """Random-interval waypoint sampling: stride drawn uniformly from [j, k]."""

    interval_min: int = 5
    interval_max: int = 15
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.interval_min <= self.interval_max):
            raise ConfigError("need 1 <= interval_min <= interval_max")


@dataclass(frozen=True)
class PlannerConfig:
    """Planner stand-in parameters.

    ``jitter_sigma`` caps the via-point noise. Mimicking a sampling-based
    planner, each candidate first draws its character: with probability
    ``direct_fraction`` it re-plans the path directly (no jitter, like a
    planner returning the near-optimal solution), otherwise it explores
    with an amplitude drawn from the upper range of ``jitter_sigma``. The
    automatic validator later keeps the tighter end of that spread.
    """

    jitter_sigma: float = 0.05  # radians, max std of via-point joint noise
    via_point_count: int = 1  # random via-points per waypoint segment
    steps_per_segment: int = 10  # steps for a nominal (10 source-step) segment
    direct_fraction: float = 0.35  # probability of an un-jittered candidate
    null_sigma: float = 0.0  # radians, std of self-motion lane shifts at waypoints
    dwell_steps: int = 8  # hold steps at key poses, mirrors the demonstrator's stops
    seed: int = 0

    NOMINAL_GAP = 10  # source steps; midpoint of the default sampling interval

    def __post_init__(self):
        if self.jitter_sigma < 0 or self.null_sigma < 0:
            raise ConfigError("jitter_sigma and null_sigma must be non-negative")
        if self.via_point_count < 1 or self.steps_per_segment < 1:
            raise ConfigError("via_point_count and steps_per_segment must be at least 1")
        if not 0 <= self.direct_fraction <= 1:
            raise ConfigError("direct_fraction must lie in [0, 1]")
        if self.dwell_steps < 0:
            raise ConfigError("dwell_steps must be non-negative")

    def draw_amplitude(self, rng: np.random.Generator) -> float:
        """One candidate's jitter std: zero (direct) or a solid wiggle."""
        if rng.uniform() < self.direct_fraction:
            return 0.0
        return self.jitter_sigma * rng.uniform(0.25, 1.0)

    def route_speed(self, waypoints: "WaypointSet") -> float:
        """Constant end-effector speed (meters per step) for one candidate.

        Every candidate of a waypoint set moves at the same speed, set so
        that covering the route's chord length takes as many steps as the
        source demonstration took indices (scaled by ``steps_per_segment``
        over the nominal gap). A shared position-anchored pacing rule means
        candidates agree on the action to take at a given state, however
        their waypoints were drawn.
        """
        chords = [
            float(np.linalg.norm(b.pose.position - a.pose.position))
            for a, b in zip(waypoints.waypoints, waypoints.waypoints[1:])
        ]
        total = sum(chords)
        if total <= 0:
            return 1.0
        steps = (waypoints.source_length - 1) * self.steps_per_segment / self.NOMINAL_GAP
        return total / max(steps, 1.0)

    def segment_steps(self, chord: float, speed: float) -> int:
        return max(1, round(chord / speed))


@dataclass(frozen=True)
class Waypoint:
    index: int  # step index in the source demonstration
    pose: Pose
    gripper: int
    is_key: bool


@dataclass(frozen=True, eq=False)
class WaypointSet:
    """Ordered poses a candidate must visit; always includes both endpoints.

    ``source_positions`` keeps the full source trace so the planner can
    route its via-points along the demonstrated path between waypoints.
    """

    waypoints: tuple[Waypoint, ...]
    source_length: int
    source_positions: np.ndarray | None = None  # (N, 2) of the source demo

    def __eq__(self, other) -> bool:
        if not isinstance(other, WaypointSet):
            return NotImplemented
        same_positions = (
            (self.source_positions is None and other.source_positions is None)
            or (
                self.source_positions is not None
                and other.source_positions is not None
                and bool(np.array_equal(self.source_positions, other.source_positions))
            )
        )
        return (
            self.waypoints == other.waypoints
            and self.source_length == other.source_length
            and same_positions
        )

    def __post_init__(self):
        indices = [w.index for w in self.waypoints]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValidationError("waypoint indices must be strictly increasing")
        if not indices or indices[0] != 0 or indices[-1] != self.source_length - 1:
            raise ValidationError("waypoint set must contain both source endpoints")
        if self.source_positions is not None:
            positions = np.asarray(self.source_positions, dtype=float)
            if positions.shape != (self.source_length, 2):
                raise ValidationError("source_positions must cover every source step")
            object.__setattr__(self, "source_positions", positions)

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(w.index for w in self.waypoints)


def sample_waypoints(
    demo: Demonstration,
    key_report: KeyPoseReport,
    config: SamplerConfig | None = None,
    rng: np.random.Generator | None = None,
) -> WaypointSet:
    """Draw waypoints at random intervals and merge in the key poses.

    Starting at index 0, the cursor advances by a fresh Uniform{j..k} draw
    per step. Key-pose indices and the final index are always included.
    """
    config = config or SamplerConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = len(demo)
    sampled = {0, n - 1}
    cursor = 0
    while True:
        cursor += int(rng.integers(config.interval_min, config.interval_max + 1))
        if cursor >= n - 1:
            break
        sampled.add(cursor)
    keys = {i for i in key_report.key_poses_indices if i < n}
    waypoints = tuple(
        Waypoint(index=i, pose=demo.pose(i), gripper=int(demo.grippers[i]), is_key=i in keys)
        for i in sorted(sampled | keys)
    )
    return WaypointSet(
        waypoints=waypoints, source_length=n, source_positions=demo.positions.copy()
    )


def generate_candidate(
    waypoints: WaypointSet,
    arm: ArmModel,
    task: TaskSpec,
    planner_config: PlannerConfig | None = None,
    seed: int = 0,
    demo_id: str = "candidate",
) -> Demonstration:
    """Plan one new trajectory through a waypoint set.

    Each waypoint is solved with IK seeded from the current configuration.
    The segment to it passes through jittered via-points anchored on the
    source path (IK of the source position midway through the segment), and
    the joints interpolate piecewise-linearly through those knots. Gripper
    values switch on waypoint arrival, which preserves the source's
    grasp/release ordering. Poses are recomputed from the interpolated
    joints, so the result is forward-kinematics consistent.

    Raises GenerationError when IK fails anywhere; failed candidates are
    skipped by the batch layer, never repaired.
    """
    planner_config = planner_config or PlannerConfig()
    rng = np.random.default_rng(seed)
    jitter = planner_config.draw_amplitude(rng)
    speed = planner_config.route_speed(waypoints)
    # One self-motion offset per candidate: the whole trajectory rides a
    # coherent lane parallel to the source branch, so lanes from different
    # candidates thicken the state tube without crossing each other.
    lane_shift = float(rng.normal(0.0, planner_config.null_sigma))
    start = waypoints.waypoints[0]
    try:
        current = solve_ik(arm, start.pose.position, arm.home_joints)
        current = _null_space_variant(arm, current, start.pose.position, lane_shift)
    except (IKConvergenceError, ReachabilityError) as exc:
        raise GenerationError(f"IK failed at the starting waypoint: {exc}") from exc

    joints_seq = [current]
    grippers = [start.gripper]
    for prev, target in zip(waypoints.waypoints, waypoints.waypoints[1:]):
        try:
            goal_joints = solve_ik(arm, target.pose.position, current)
            goal_joints = _null_space_variant(
                arm, goal_joints, target.pose.position, lane_shift
            )
        except (IKConvergenceError, ReachabilityError) as exc:
            raise GenerationError(
                f"IK failed at source index {target.index} of {demo_id}: {exc}"
            ) from exc
        knots = [current]
        for v in range(1, planner_config.via_point_count + 1):
            alpha = v / (planner_config.via_point_count + 1)
            guess = (1 - alpha) * current + alpha * goal_joints
            via = _via_joints(waypoints, arm, prev.index, target.index, alpha, guess, demo_id)
            if jitter > 0:
                via = via + rng.normal(0.0, jitter, size=via.shape)
            knots.append(arm.clamp(via))
        knots.append(goal_joints)

        # Sample the knot polyline at the candidate's constant route speed;
        # the final sample lands exactly on the goal.
        chord = float(np.linalg.norm(target.pose.position - prev.pose.position))
        segment_steps = planner_config.segment_steps(chord, speed)
        for s in range(1, segment_steps + 1):
            joints_seq.append(_polyline_point(knots, s / segment_steps))
            grippers.append(prev.gripper)
        grippers[-1] = target.gripper
        if target.is_key:
            # Hold at the key pose like the demonstrator did: the pause is
            # what lets a learned policy settle before committing to the
            # next leg, and every candidate pauses at the same spot.
            for _ in range(planner_config.dwell_steps):
                joints_seq.append(goal_joints.copy())
                grippers.append(target.gripper)
        current = goal_joints

    joints_arr = np.array(joints_seq)
    positions = np.array([joint_positions(arm, q)[-1] for q in joints_arr])
    headings = np.array([normalize_angle(float(np.sum(q))) for q in joints_arr])
    return Demonstration(
        positions=positions,
        headings=headings,
        joints=joints_arr,
        grippers=np.array(grippers, dtype=np.int64),
        demo_id=demo_id,
        source="generated",
        seed=seed,
    )


def _null_space_variant(
    arm: ArmModel,
    joints: np.ndarray,
    target: np.ndarray,
    shift: float,
) -> np.ndarray:
    """Move along the arm's self-motion manifold, keeping the target position.

    A planar chain with more than two joints has redundant solutions for
    any end-effector position; shifting along the position Jacobian's null
    space and re-polishing with IK lands on a neighboring solution branch.
    This is where candidate diversity at the waypoints themselves comes
    from, standing in for the solution spread of a redundant-arm planner.
    """
    if arm.joint_count <= 2 or shift == 0.0:
        return joints
    _, _, vt = np.linalg.svd(jacobian(arm, joints))
    null = vt[-1]
    # Fix the SVD sign ambiguity so one shift value means one lane side
    # at every waypoint along the route.
    lead = int(np.argmax(np.abs(null)))
    if null[lead] < 0:
        null = -null
    shifted = arm.clamp(joints + shift * null)
    return solve_ik(arm, target, shifted)


def _via_joints(
    waypoints: WaypointSet,
    arm: ArmModel,
    start_index: int,
    end_index: int,
    alpha: float,
    guess: np.ndarray,
    demo_id: str,
) -> np.ndarray:
    """Joint-space via-point for a segment, anchored on the source path.

    Without the source trace the linear-interpolation guess is used as-is;
    with it, the via lands on the source position partway through the
    segment so un-jittered candidates track the demonstrated path instead
    of bowing along joint-space chords.
    """
    if waypoints.source_positions is None:
        return guess.copy()
    src_idx = int(round(start_index + alpha * (end_index - start_index)))
    target = waypoints.source_positions[src_idx]
    try:
        return solve_ik(arm, target, guess)
    except (IKConvergenceError, ReachabilityError) as exc:
        raise GenerationError(
            f"IK failed at via point (source index {src_idx}) of {demo_id}: {exc}"
        ) from exc


def _polyline_point(knots: list[np.ndarray], fraction: float) -> np.ndarray:
    """Point at an arc-length fraction along the joint-space knot polyline."""
    lengths = [float(np.linalg.norm(b - a)) for a, b in zip(knots, knots[1:])]
    total = sum(lengths)
    if total < 1e-12:
        return knots[-1].copy()
    target = min(max(fraction, 0.0), 1.0) * total
    covered = 0.0
    for idx, leg in enumerate(lengths):
        if covered + leg >= target and leg > 1e-12:
            t = (target - covered) / leg
            return (1 - t) * knots[idx] + t * knots[idx + 1]
        covered += leg
    return knots[-1].copy()


def _candidate_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1, np.uint64)[0])


def candidate_stream(
    demo: Demonstration,
    key_report: KeyPoseReport,
    sampler_config: SamplerConfig,
    planner_config: PlannerConfig,
    arm: ArmModel,
    task: TaskSpec,
    seed: int,
    start_index: int = 0,
    id_prefix: str = "cand",
) -> Iterator[Demonstration | None]:
    """Endless stream of candidates; yields None for attempts whose IK failed.

    Every attempt derives its own RNG stream from (seed, attempt index), so
    the stream is reproducible and order-stable no matter how many values
    are consumed.
    """
    index = start_index
    while True:
        attempt_seed = _candidate_seed(seed, index)
        sampler_rng = np.random.default_rng((attempt_seed, 0))
        waypoints = sample_waypoints(demo, key_report, sampler_config, rng=sampler_rng)
        try:
            yield generate_candidate(
                waypoints,
                arm,
                task,
                planner_config,
                seed=attempt_seed,
                demo_id=f"{id_prefix}-{index:05d}",
            )
        except GenerationError:
            yield None
        index += 1


def generate_batch(
    demo: Demonstration,
    key_report: KeyPoseReport,
    n: int,
    sampler_config: SamplerConfig | None = None,
    planner_config: PlannerConfig | None = None,
    arm: ArmModel | None = None,
    task: TaskSpec | None = None,
    seed: int = 0,
) -> Dataset:
    """Produce ``n`` successful candidates, resampling waypoints per candidate.

    Aborts with a diagnostic when more than half of the attempts fail IK,
    which points at an unreachable task or an over-aggressive jitter.
    """
    if n < 1:
        raise ConfigError("batch size must be at least 1")
    if arm is None or task is None:
        raise ConfigError("generate_batch needs the arm model and task spec")
    sampler_config = sampler_config or SamplerConfig()
    planner_config = planner_config or PlannerConfig()

    stream = candidate_stream(
        demo, key_report, sampler_config, planner_config, arm, task, seed
    )
    candidates: list[Demonstration] = []
    attempts = failures = 0
    for candidate in stream:
        attempts += 1
        if candidate is None:
            failures += 1
        else:
            candidates.append(candidate)
        if len(candidates) == n:
            break
        if attempts >= 2 * n and failures > attempts / 2:
            raise GenerationError(
                f"{failures}/{attempts} candidate attempts failed IK; "
                "check task reachability and planner jitter"
            )
    return Dataset(demonstrations=candidates, role="candidates")
