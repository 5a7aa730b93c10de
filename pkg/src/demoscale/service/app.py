"""FastAPI application wrapping the pipeline.

The review endpoints back the browser UI; the stage endpoints expose the
batch pipeline so any client (the bundled CLI included) can drive it over
HTTP. All heavy lifting stays in the core modules; this layer translates
between HTTP and files in the configured workspace.
"""

from __future__ import annotations

import functools
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import pipeline
from ..config import PipelineConfig
from ..errors import DemoScaleError, MissingArtifactError, ValidationError
from ..keypose import detect_key_poses
from ..review import DecisionStore, finalize_accepted
from ..trajectory import Dataset, Demonstration, read_demonstrations
from . import models


def _http_errors(fn):
    """Translate pipeline errors into HTTP responses."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MissingArtifactError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except DemoScaleError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc

    return wrapper


def _gripper_events(demo: Demonstration) -> list[int]:
    changed = np.nonzero(demo.grippers[1:] != demo.grippers[:-1])[0] + 1
    return [int(i) for i in changed]


def create_app(config: PipelineConfig) -> FastAPI:
    app = FastAPI(title="demoscale pipeline", version="0.1.0")
    store = DecisionStore(config.decisions_path)

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def load_candidates() -> Dataset:
        if not config.candidates_path.exists():
            raise MissingArtifactError(config.candidates_path, "run the 'generate' stage first")
        return read_demonstrations(config.candidates_path)

    def find_candidate(dataset: Dataset, candidate_id: str) -> Demonstration:
        for demo in dataset:
            if demo.demo_id == candidate_id:
                return demo
        raise HTTPException(status_code=404, detail=f"unknown candidate id {candidate_id!r}")

    # ------------------------------------------------------------------
    # Review API
    # ------------------------------------------------------------------

    @app.get("/api/candidates", response_model=models.CandidateListResponse)
    @_http_errors
    def list_candidates():
        dataset = load_candidates()
        final = store.latest()
        summaries = []
        for demo in dataset:
            decision = final.get(demo.demo_id)
            summaries.append(
                models.CandidateSummary(
                    id=demo.demo_id,
                    steps=len(demo),
                    gripper_events=len(_gripper_events(demo)),
                    decided=decision is not None,
                    verdict=decision.verdict if decision else None,
                )
            )
        accepted = store.accepted_ids([d.demo_id for d in dataset])
        return models.CandidateListResponse(
            candidates=summaries,
            decided_count=sum(1 for s in summaries if s.decided),
            accepted_count=len(accepted),
        )

    @app.get("/api/candidates/{candidate_id}", response_model=models.CandidateDetail)
    @_http_errors
    def candidate_detail(candidate_id: str):
        demo = find_candidate(load_candidates(), candidate_id)
        return models.CandidateDetail(
            id=demo.demo_id,
            source=demo.source,
            seed=demo.seed,
            positions=demo.positions.tolist(),
            headings=demo.headings.tolist(),
            joints=demo.joints.tolist(),
            gripper=demo.grippers.tolist(),
            gripper_events=_gripper_events(demo),
        )

    @app.post("/api/candidates/{candidate_id}/decision", response_model=models.DecisionAck)
    @_http_errors
    def decide(candidate_id: str, request: models.DecisionRequest):
        dataset = load_candidates()
        find_candidate(dataset, candidate_id)
        store.record(candidate_id, request.verdict, reason=request.reason)
        order = [d.demo_id for d in dataset]
        return models.DecisionAck(
            id=candidate_id,
            verdict=request.verdict,
            reason=request.reason,
            decided_count=len([i for i in order if i in store.latest()]),
            accepted_count=len(store.accepted_ids(order)),
        )

    @app.get("/api/accepted", response_model=models.AcceptedResponse)
    @_http_errors
    def accepted():
        dataset = load_candidates()
        ids = store.accepted_ids([d.demo_id for d in dataset])
        return models.AcceptedResponse(ids=ids, count=len(ids))

    @app.post("/api/finalize", response_model=models.FinalizeResponse)
    @_http_errors
    def finalize():
        dataset = load_candidates()
        try:
            ids = finalize_accepted(dataset, store, config.accepted_path)
        except ValidationError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return models.FinalizeResponse(path=str(config.accepted_path), ids=ids, count=len(ids))

    @app.get("/api/context", response_model=models.ContextResponse)
    @_http_errors
    def context():
        seed_dataset = read_demonstrations(
            pipeline._require(config.seed_demo_path, "run the 'record' stage first")
        )
        seed_demo = seed_dataset.demonstrations[0]
        report = detect_key_poses(seed_demo, config.keypose)
        task = config.task
        return models.ContextResponse(
            arm=models.ArmGeometry(
                link_lengths=config.arm.link_lengths.tolist(),
                base=config.arm.base.tolist(),
                joint_limits=config.arm.joint_limits.tolist(),
                home_joints=config.arm.home_joints.tolist(),
            ),
            task=models.TaskGeometry(
                kind=task.kind,
                waypoints=[w.tolist() for w in task.waypoints],
                object_start=None if task.object_start is None else task.object_start.tolist(),
                goal=None if task.goal is None else task.goal.tolist(),
                grasp_radius=task.grasp_radius,
            ),
            seed_positions=seed_demo.positions.tolist(),
            seed_joints=seed_demo.joints.tolist(),
            key_pose_indices=list(report.key_poses_indices),
            key_pose_positions=[
                seed_demo.positions[i].tolist() for i in report.key_poses_indices
            ],
            review_batch_size=config.review.batch_size,
        )

    # ------------------------------------------------------------------
    # Stage API
    # ------------------------------------------------------------------

    @app.post("/api/stages/record", response_model=models.StageSummary)
    @_http_errors
    def run_record():
        return models.StageSummary(summary=pipeline.stage_record(config))

    @app.post("/api/stages/detect-keyposes", response_model=models.StageSummary)
    @_http_errors
    def run_detect():
        return models.StageSummary(summary=pipeline.stage_detect_keyposes(config))

    @app.post("/api/stages/generate", response_model=models.StageSummary)
    @_http_errors
    def run_generate(request: models.StageGenerateRequest):
        return models.StageSummary(summary=pipeline.stage_generate(config, n=request.n))

    @app.post("/api/stages/auto-accept", response_model=models.StageSummary)
    @_http_errors
    def run_auto_accept():
        return models.StageSummary(summary=pipeline.stage_auto_accept_all(config))

    @app.post("/api/stages/autovalidate", response_model=models.StageSummary)
    @_http_errors
    def run_autovalidate(request: models.StageAutovalidateRequest):
        return models.StageSummary(
            summary=pipeline.stage_autovalidate(config, target=request.target)
        )

    @app.post("/api/stages/train", response_model=models.StageSummary)
    @_http_errors
    def run_train(request: models.StageDatasetRequest):
        return models.StageSummary(
            summary=pipeline.stage_train(config, dataset_role=request.dataset_role)
        )

    @app.post("/api/stages/eval", response_model=models.StageSummary)
    @_http_errors
    def run_eval(request: models.StageDatasetRequest):
        return models.StageSummary(
            summary=pipeline.stage_eval(config, dataset_role=request.dataset_role)
        )

    @app.post("/api/stages/pipeline", response_model=models.StageSummary)
    @_http_errors
    def run_pipeline(request: models.StagePipelineRequest):
        return models.StageSummary(
            summary=pipeline.stage_pipeline(config, auto_accept_all=request.auto_accept_all)
        )

    @app.get("/api/health", response_model=models.HealthResponse)
    def health():
        return models.HealthResponse(
            status="ok", workdir=str(config.workdir), task_kind=config.task.kind
        )

    static_dir = _resolve_static_dir(config)
    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def _resolve_static_dir(config: PipelineConfig) -> Path | None:
    if config.review.static_dir is not None:
        path = Path(config.review.static_dir)
        return path if path.is_dir() else None
    fallback = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    return fallback if fallback.is_dir() else None
