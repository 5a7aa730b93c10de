"""Pipeline stages: pure functions from configuration to files on disk.

Each stage reads the artifacts of earlier stages, writes its own plus a
machine-readable JSON summary, and returns that summary. Stages derive
their seeds from the master seed, so a full headless run is reproducible
byte for byte (human review being the one non-reproducible input, captured
in the decision log).
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autovalidate import build_accepted_set, scale_dataset, write_outcome_log
from .bc import evaluate, rollout, train
from .config import PipelineConfig
from .errors import MissingArtifactError, ValidationError
from .generator import candidate_stream, generate_batch
from .keypose import detect_key_poses, read_report, write_report
from .policy import load_policy, save_policy
from .review import DecisionStore, finalize_accepted
from .simenv import oracle_demonstration, oracle_stop_indices, replay, tce
from .trajectory import Dataset, read_demonstrations, write_demonstrations

DATASET_ROLES = ("seed", "accepted", "scaled")


def _write_summary(config: PipelineConfig, stage: str, summary: dict) -> dict:
    path = config.summary_path(stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(path, hint)
    return path


def _load_seed_demo(config: PipelineConfig):
    dataset = read_demonstrations(
        _require(config.seed_demo_path, "run the 'record' stage first")
    )
    if len(dataset) != 1:
        raise ValidationError(f"seed demonstration file holds {len(dataset)} demos, expected 1")
    return dataset.demonstrations[0]


def stage_record(config: PipelineConfig) -> dict:
    """Record the seed demonstration with the scripted oracle."""
    config.workdir.mkdir(parents=True, exist_ok=True)
    demo = oracle_demonstration(
        config.task, config.arm, config.oracle,
        seed=config.stage_seed("record"), demo_id="seed-demo",
    )
    write_demonstrations(Dataset(demonstrations=[demo], role="seed"), config.seed_demo_path)
    stops = oracle_stop_indices(config.task, config.arm, config.oracle)
    summary = {
        "stage": "record",
        "demo_id": demo.demo_id,
        "steps": len(demo),
        "joint_count": demo.joint_count,
        "stop_indices": stops,
        "gripper_transitions": int(np.sum(demo.grippers[1:] != demo.grippers[:-1])),
        "path": str(config.seed_demo_path),
    }
    return _write_summary(config, "record", summary)


def stage_detect_keyposes(config: PipelineConfig) -> dict:
    demo = _load_seed_demo(config)
    report = detect_key_poses(demo, config.keypose)
    write_report(report, config.keypose_report_path, demo_id=demo.demo_id)
    summary = {
        "stage": "detect-keyposes",
        "grasp_release_indices": list(report.grasp_release_indices),
        "sharp_turn_indices": list(report.sharp_turn_indices),
        "dense_region_indices": list(report.dense_region_indices),
        "key_poses_indices": list(report.key_poses_indices),
        "path": str(config.keypose_report_path),
    }
    return _write_summary(config, "detect_keyposes", summary)


def stage_generate(config: PipelineConfig, n: int | None = None) -> dict:
    """Generate the review batch of candidate demonstrations."""
    demo = _load_seed_demo(config)
    report = detect_key_poses(demo, config.keypose)
    write_report(report, config.keypose_report_path, demo_id=demo.demo_id)
    n = config.review.batch_size if n is None else n
    batch = generate_batch(
        demo, report, n,
        sampler_config=config.sampler,
        planner_config=config.planner,
        arm=config.arm,
        task=config.task,
        seed=config.stage_seed("generate"),
    )
    write_demonstrations(batch, config.candidates_path)
    summary = {
        "stage": "generate",
        "candidates": len(batch),
        "candidate_ids": [d.demo_id for d in batch],
        "mean_steps": float(np.mean([len(d) for d in batch])),
        "path": str(config.candidates_path),
    }
    return _write_summary(config, "generate", summary)


def stage_auto_accept_all(config: PipelineConfig) -> dict:
    """Headless stand-in for human review: accept every candidate."""
    candidates = read_demonstrations(
        _require(config.candidates_path, "run the 'generate' stage first")
    )
    store = DecisionStore(config.decisions_path)
    for demo in candidates:
        store.record(demo.demo_id, "accept", timestamp=0.0)
    accepted_ids = finalize_accepted(candidates, store, config.accepted_path)
    summary = {
        "stage": "auto-accept",
        "accepted": len(accepted_ids),
        "accepted_ids": accepted_ids,
        "path": str(config.accepted_path),
    }
    return _write_summary(config, "auto_accept", summary)


def stage_autovalidate(config: PipelineConfig, target: int | None = None) -> dict:
    """Scale the accepted set with DTW-gated automatic validation."""
    demo = _load_seed_demo(config)
    accepted_dataset = read_demonstrations(
        _require(config.accepted_path, "finalize a review (or run auto-accept) first")
    )
    if config.keypose_report_path.exists():
        report = read_report(config.keypose_report_path)
    else:
        report = detect_key_poses(demo, config.keypose)
    target = config.scale_target if target is None else target

    validation = config.validation
    if validation.seed == 0:
        validation = replace(validation, seed=config.stage_seed("autovalidate"))
    accepted = build_accepted_set(accepted_dataset, validation)
    # Candidate numbering continues after the review batch so ids never clash.
    stream = candidate_stream(
        demo, report, config.sampler, config.planner, config.arm, config.task,
        seed=config.stage_seed("generate"),
        start_index=len(accepted_dataset.demonstrations) + _rejected_count(config),
    )
    scaled, scale_report = scale_dataset(stream, accepted, target, validation)
    write_demonstrations(scaled, config.scaled_path)
    write_outcome_log(scale_report, config.outcomes_path)
    summary = {
        "stage": "autovalidate",
        "target": target,
        "accepted": scale_report.accepted_count,
        "attempts": scale_report.attempts,
        "generation_failures": scale_report.generation_failures,
        "acceptance_rate": scale_report.acceptance_rate,
        "shortfall": scale_report.shortfall,
        "beta": config.validation.beta,
        "min_similarity": accepted.min_similarity,
        "path": str(config.scaled_path),
        "outcome_log": str(config.outcomes_path),
    }
    return _write_summary(config, "autovalidate", summary)


def _rejected_count(config: PipelineConfig) -> int:
    # Candidates that were generated for review but not accepted still
    # consumed stream indices; account for them so ids stay unique.
    if not config.candidates_path.exists():
        return 0
    candidates = read_demonstrations(config.candidates_path)
    accepted = read_demonstrations(config.accepted_path)
    return len(candidates) - len(accepted)


def _load_role_dataset(config: PipelineConfig, role: str) -> Dataset:
    if role == "seed":
        return read_demonstrations(_require(config.seed_demo_path, "run 'record' first"))
    if role == "accepted":
        return read_demonstrations(_require(config.accepted_path, "finalize a review first"))
    if role == "scaled":
        return read_demonstrations(_require(config.scaled_path, "run 'autovalidate' first"))
    raise ValidationError(f"dataset role must be one of {DATASET_ROLES}, got {role!r}")


def stage_train(config: PipelineConfig, dataset_role: str = "scaled") -> dict:
    """Train a behavioral-cloning policy on one of the pipeline datasets."""
    dataset = _load_role_dataset(config, dataset_role)
    train_config = config.train
    if train_config.seed == 0:
        train_config = replace(train_config, seed=config.stage_seed("train"))
    policy, report = train(dataset, train_config)
    path = config.policy_path(dataset_role)
    save_policy(policy, path)
    summary = {
        "stage": "train",
        "dataset_role": dataset_role,
        "demonstrations": len(dataset),
        "pairs": report.pair_count,
        "epochs": len(report.epoch_losses),
        "first_epoch_loss": report.epoch_losses[0],
        "final_epoch_loss": report.epoch_losses[-1],
        "path": str(path),
    }
    return _write_summary(config, f"train_{dataset_role}", summary)


def stage_eval(config: PipelineConfig, dataset_role: str = "scaled") -> dict:
    """Evaluate a trained policy with sample-mode rollouts."""
    policy_file = _require(
        config.policy_path(dataset_role), f"train the {dataset_role!r} policy first"
    )
    policy = load_policy(policy_file)
    seed_demo = _load_seed_demo(config)
    horizon = int(round(config.evaluation.horizon_factor * len(seed_demo)))
    report = evaluate(
        policy, config.task, config.arm, horizon,
        trials=config.evaluation.trials, seed=config.stage_seed("eval"),
    )
    summary = {
        "stage": "eval",
        "dataset_role": dataset_role,
        "trials": config.evaluation.trials,
        "horizon": horizon,
        "tce_mean": report.mean_tce,
        "tce_std": report.std_tce,
        "tces": report.tces,
        "policy": str(policy_file),
    }
    return _write_summary(config, f"eval_{dataset_role}", summary)


def stage_pipeline(config: PipelineConfig, auto_accept_all: bool = True) -> dict:
    """Run every stage headless and compare scaled-dataset vs seed-only policies."""
    stage_record(config)
    stage_generate(config)
    if auto_accept_all:
        stage_auto_accept_all(config)
    else:
        _require(config.accepted_path, "finalize a review before running the pipeline")
    autovalidate_summary = stage_autovalidate(config)
    stage_train(config, "scaled")
    stage_train(config, "seed")
    eval_scaled = stage_eval(config, "scaled")
    eval_seed = stage_eval(config, "seed")
    ratio = (
        eval_scaled["tce_mean"] / eval_seed["tce_mean"]
        if eval_seed["tce_mean"] > 0 else float("inf")
    )
    summary = {
        "stage": "pipeline",
        "scaled_demos": autovalidate_summary["accepted"],
        "tce_scaled_mean": eval_scaled["tce_mean"],
        "tce_scaled_std": eval_scaled["tce_std"],
        "tce_seed_mean": eval_seed["tce_mean"],
        "tce_seed_std": eval_seed["tce_std"],
        "tce_ratio_scaled_over_seed": ratio,
    }
    return _write_summary(config, "pipeline", summary)
