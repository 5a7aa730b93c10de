"""Pipeline configuration: one YAML file drives every stage.

Every key has a default (see docs/config.md); an omitted section means
"all defaults". Seeds for individual stages are derived from the master
seed, so a fixed master seed reproduces the whole headless pipeline
byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .autovalidate import ValidationConfig
from .bc import TrainConfig
from .errors import ConfigError
from .generator import PlannerConfig, SamplerConfig
from .keypose import KeyPoseConfig
from .simenv import ArmModel, OracleProfile, TaskSpec

STAGE_SEED_OFFSETS = {
    "record": 1,
    "generate": 2,
    "autovalidate": 3,
    "train": 4,
    "eval": 5,
}


@dataclass
class ReviewConfig:
    batch_size: int = 15  # candidates shown to the human reviewer
    host: str = "127.0.0.1"
    port: int = 8321
    static_dir: str | None = None  # directory of built UI assets, if any

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("review batch_size must be at least 2 (finalize needs 2 accepts)")


@dataclass
class EvalConfig:
    trials: int = 10
    horizon_factor: float = 2.0  # horizon = factor * seed demo length

    def __post_init__(self):
        if self.trials < 1 or self.horizon_factor <= 0:
            raise ConfigError("trials must be >= 1 and horizon_factor positive")


@dataclass
class PipelineConfig:
    arm: ArmModel
    task: TaskSpec
    oracle: OracleProfile = field(default_factory=OracleProfile)
    keypose: KeyPoseConfig = field(default_factory=KeyPoseConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    review: ReviewConfig = field(default_factory=ReviewConfig)
    scale_target: int = 100
    master_seed: int = 7
    workdir: Path = Path("runs/default")

    def __post_init__(self):
        self.workdir = Path(self.workdir)
        if self.scale_target < 1:
            raise ConfigError("scale_target must be at least 1")
        if self.task.kind == "pick_and_place" and not self.train.include_gripper:
            # Pick-and-place states/actions carry the gripper channel.
            self.train = replace(self.train, include_gripper=True)

    def stage_seed(self, stage: str) -> int:
        offset = STAGE_SEED_OFFSETS[stage]
        return int(
            np.random.SeedSequence((self.master_seed, offset)).generate_state(1, np.uint64)[0]
        )

    # Artifact layout under workdir; stages fail fast when an input is missing.
    @property
    def seed_demo_path(self) -> Path:
        return self.workdir / "seed_demo.txt"

    @property
    def keypose_report_path(self) -> Path:
        return self.workdir / "keyposes.txt"

    @property
    def candidates_path(self) -> Path:
        return self.workdir / "candidates.txt"

    @property
    def decisions_path(self) -> Path:
        return self.workdir / "decisions.jsonl"

    @property
    def accepted_path(self) -> Path:
        return self.workdir / "accepted.txt"

    @property
    def scaled_path(self) -> Path:
        return self.workdir / "scaled.txt"

    @property
    def outcomes_path(self) -> Path:
        return self.workdir / "outcomes.jsonl"

    def policy_path(self, dataset_role: str) -> Path:
        return self.workdir / f"policy_{dataset_role}.json"

    def summary_path(self, stage: str) -> Path:
        return self.workdir / f"{stage}_summary.json"


def default_config(workdir: str | Path = "runs/default", task_kind: str = "three_waypoints") -> PipelineConfig:
    """The stock planar 3-joint arm and task geometry used throughout the docs."""
    arm = ArmModel(
        link_lengths=np.array([1.2, 1.0, 0.8]),
        home_joints=np.array([1.0905, -1.9177, -1.1706]),
    )
    if task_kind == "three_waypoints":
        task = TaskSpec(
            kind="three_waypoints",
            waypoints=[np.array([2.0, 0.6]), np.array([1.1, 1.6]), np.array([2.1, 1.9])],
        )
    else:
        task = TaskSpec(
            kind="pick_and_place",
            object_start=np.array([2.0, 0.6]),
            goal=np.array([1.0, 1.7]),
        )
    oracle = OracleProfile(park_position=np.array([1.1, 0.2]))
    return PipelineConfig(arm=arm, task=task, oracle=oracle, workdir=Path(workdir))


# ---------------------------------------------------------------------------
# YAML loading. Unknown keys are rejected so typos fail loudly.
# ---------------------------------------------------------------------------

def _pick(section: dict, allowed: dict[str, type | tuple], context: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {context} config keys: {sorted(unknown)}")
    return section


def _arm_from(section: dict) -> ArmModel:
    section = _pick(section, {
        "link_lengths": list, "joint_limits": list, "base": list, "home_joints": list,
    }, "arm")
    kwargs = {}
    if "link_lengths" in section:
        kwargs["link_lengths"] = np.asarray(section["link_lengths"], dtype=float)
    else:
        raise ConfigError("arm.link_lengths is required when an arm section is given")
    if "joint_limits" in section:
        kwargs["joint_limits"] = np.asarray(section["joint_limits"], dtype=float)
    if "base" in section:
        kwargs["base"] = np.asarray(section["base"], dtype=float)
    if "home_joints" in section:
        kwargs["home_joints"] = np.asarray(section["home_joints"], dtype=float)
    return ArmModel(**kwargs)


def _task_from(section: dict) -> TaskSpec:
    section = _pick(section, {
        "kind": str, "waypoints": list, "object_start": list, "goal": list,
        "grasp_radius": float, "success_tolerance": float,
    }, "task")
    kwargs = dict(section)
    if "waypoints" in kwargs:
        kwargs["waypoints"] = [np.asarray(w, dtype=float) for w in kwargs["waypoints"]]
    for key in ("object_start", "goal"):
        if key in kwargs:
            kwargs[key] = np.asarray(kwargs[key], dtype=float)
    return TaskSpec(**kwargs)


def _oracle_from(section: dict) -> OracleProfile:
    section = _pick(section, {
        "steps_per_segment": int, "dwell_steps": int, "tremor_sigma": float,
        "park_position": list,
    }, "oracle")
    kwargs = dict(section)
    if "park_position" in kwargs:
        kwargs["park_position"] = np.asarray(kwargs["park_position"], dtype=float)
    return OracleProfile(**kwargs)


def _sampler_from(section: dict) -> SamplerConfig:
    section = _pick(section, {"j": int, "k": int, "interval_min": int, "interval_max": int}, "sampler")
    kwargs = {}
    if "j" in section or "interval_min" in section:
        kwargs["interval_min"] = int(section.get("j", section.get("interval_min")))
    if "k" in section or "interval_max" in section:
        kwargs["interval_max"] = int(section.get("k", section.get("interval_max")))
    return SamplerConfig(**kwargs)


def _simple_section(section: dict, cls, allowed: set[str], context: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} config keys: {sorted(unknown)}")
    kwargs = dict(section)
    if "hidden" in kwargs:
        kwargs["hidden"] = tuple(kwargs["hidden"])
    return cls(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    """Build a PipelineConfig from a YAML file; missing sections use defaults."""
    path = Path(path)
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a mapping at top level")
    known = {
        "arm", "task", "oracle", "keypose", "sampler", "planner", "validation",
        "train", "evaluation", "review", "scale_target", "master_seed", "workdir",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")

    base = default_config(
        workdir=raw.get("workdir", "runs/default"),
        task_kind=raw.get("task", {}).get("kind", "three_waypoints"),
    )
    arm = _arm_from(raw["arm"]) if "arm" in raw else base.arm
    task = _task_from(raw["task"]) if "task" in raw else base.task
    oracle = _oracle_from(raw["oracle"]) if "oracle" in raw else base.oracle
    keypose = _simple_section(
        raw.get("keypose", {}), KeyPoseConfig,
        {"window_length", "sharp_turn_threshold", "dense_region_threshold"}, "keypose")
    sampler = _sampler_from(raw.get("sampler", {}))
    planner = _simple_section(
        raw.get("planner", {}), PlannerConfig,
        {"jitter_sigma", "via_point_count", "steps_per_segment", "seed"}, "planner")
    validation = _simple_section(
        raw.get("validation", {}), ValidationConfig, {"beta", "representation", "seed"}, "validation")
    train = _simple_section(
        raw.get("train", {}), TrainConfig,
        {"epochs", "batch_size", "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon",
         "hidden", "seed", "include_gripper", "loss", "optimizer"}, "train")
    evaluation = _simple_section(
        raw.get("evaluation", {}), EvalConfig, {"trials", "horizon_factor"}, "evaluation")
    review = _simple_section(
        raw.get("review", {}), ReviewConfig, {"batch_size", "host", "port", "static_dir"}, "review")

    return PipelineConfig(
        arm=arm,
        task=task,
        oracle=oracle,
        keypose=keypose,
        sampler=sampler,
        planner=planner,
        validation=validation,
        train=train,
        evaluation=evaluation,
        review=review,
        scale_target=int(raw.get("scale_target", 100)),
        master_seed=int(raw.get("master_seed", 7)),
        workdir=Path(raw.get("workdir", "runs/default")),
    )
