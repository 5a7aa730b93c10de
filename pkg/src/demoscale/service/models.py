"""Request and response schemas for the pipeline HTTP API."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class CandidateSummary(BaseModel):
    id: str
    steps: int
    gripper_events: int
    decided: bool
    verdict: Literal["accept", "reject"] | None = None


class CandidateListResponse(BaseModel):
    candidates: list[CandidateSummary]
    decided_count: int
    accepted_count: int


class CandidateDetail(BaseModel):
    id: str
    source: str
    seed: int | None
    positions: list[list[float]]  # (N, 2) end-effector path
    headings: list[float]
    joints: list[list[float]]
    gripper: list[int]
    gripper_events: list[int]  # indices where the gripper switches


class ArmGeometry(BaseModel):
    link_lengths: list[float]
    base: list[float]
    joint_limits: list[list[float]]
    home_joints: list[float]


class TaskGeometry(BaseModel):
    kind: str
    waypoints: list[list[float]]
    object_start: list[float] | None = None
    goal: list[float] | None = None
    grasp_radius: float


class ContextResponse(BaseModel):
    """Workspace context for rendering: arm, task, seed trace, key poses."""

    arm: ArmGeometry
    task: TaskGeometry
    seed_positions: list[list[float]]
    seed_joints: list[list[float]]
    key_pose_indices: list[int]
    key_pose_positions: list[list[float]]
    review_batch_size: int


class DecisionRequest(BaseModel):
    verdict: Literal["accept", "reject"]
    reason: Literal["unnatural", "hazardous", "preference"] | None = None


class DecisionAck(BaseModel):
    id: str
    verdict: str
    reason: str | None
    decided_count: int
    accepted_count: int


class AcceptedResponse(BaseModel):
    ids: list[str]
    count: int


class FinalizeResponse(BaseModel):
    path: str
    ids: list[str]
    count: int


class StageGenerateRequest(BaseModel):
    n: int | None = Field(default=None, ge=1)


class StageAutovalidateRequest(BaseModel):
    target: int | None = Field(default=None, ge=1)


class StageDatasetRequest(BaseModel):
    dataset_role: Literal["seed", "accepted", "scaled"] = "scaled"


class StagePipelineRequest(BaseModel):
    auto_accept_all: bool = True


class StageSummary(BaseModel):
    """Stage summaries are free-form JSON objects, passed through verbatim."""

    summary: dict


class HealthResponse(BaseModel):
    status: str
    workdir: str
    task_kind: str
