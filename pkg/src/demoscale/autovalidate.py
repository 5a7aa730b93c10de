"""Automatic validation of generated candidates against a user-accepted set.

Once a small set of demonstrations has passed human review, new candidates
are scored without further supervision: a candidate's summed DTW distance
to all but one randomly excluded accepted demonstration must not exceed
``beta`` times the smallest same-kind sum inside the accepted family.
Smaller beta demands closer similarity; the excluded index keeps the two
sums comparable (both run over H-1 terms).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .dtw import dtw_distance
from .errors import ConfigError, FormatError, ValidationError
from .trajectory import Dataset, Demonstration

REPRESENTATIONS = ("ee_position", "joints")


@dataclass(frozen=True)
class ValidationConfig:
    beta: float = 0.95  # acceptance threshold scale; may exceed 1
    representation: str = "ee_position"  # sequence fed to DTW
    seed: int = 0  # drives the leave-one-out draws

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(f"representation must be one of {REPRESENTATIONS}")


def representation_sequence(demo: Demonstration, representation: str) -> np.ndarray:
    if representation == "ee_position":
        return demo.positions
    if representation == "joints":
        return demo.joints
    raise ConfigError(f"unknown representation {representation!r}")


@dataclass
class AcceptedSet:
    """Accepted demonstrations plus their pairwise-DTW similarity sums."""

    demonstrations: list[Demonstration]
    similarity_sums: np.ndarray  # (H,), entry i = sum_{j != i} DTW(tau_i, tau_j)
    representation: str = "ee_position"

    def __post_init__(self):
        if len(self.demonstrations) < 2:
            raise ValidationError(
                "automatic validation needs at least 2 accepted demonstrations; "
                "approve more candidates in review first"
            )
        self.similarity_sums = np.asarray(self.similarity_sums, dtype=float)
        if self.similarity_sums.shape != (len(self.demonstrations),):
            raise ValidationError("similarity array length must match the accepted set")
        if np.any(self.similarity_sums < 0):
            raise ValidationError("similarity sums must be non-negative")

    def __len__(self) -> int:
        return len(self.demonstrations)

    @property
    def min_similarity(self) -> float:
        return float(self.similarity_sums.min())


def build_accepted_set(dataset: Dataset, config: ValidationConfig | None = None) -> AcceptedSet:
    """Compute the pairwise similarity sums over the configured representation."""
    config = config or ValidationConfig()
    demos = list(dataset)
    if len(demos) < 2:
        raise ValidationError(
            f"accepted dataset has {len(demos)} demonstration(s); "
            "automatic validation needs at least 2 user approvals"
        )
    sequences = [representation_sequence(d, config.representation) for d in demos]
    h = len(demos)
    pairwise = np.zeros((h, h))
    for i in range(h):
        for j in range(i + 1, h):
            pairwise[i, j] = pairwise[j, i] = dtw_distance(sequences[i], sequences[j])
    return AcceptedSet(
        demonstrations=demos,
        similarity_sums=pairwise.sum(axis=1),
        representation=config.representation,
    )


@dataclass(frozen=True)
class ValidationOutcome:
    candidate_id: str
    accepted: bool
    delta: float
    threshold: float  # beta * min(similarity sums)
    excluded_index: int

    def __post_init__(self):
        if self.accepted != (self.delta <= self.threshold):
            raise ValidationError("outcome flag disagrees with its own delta/threshold")

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.candidate_id,
                "delta": self.delta,
                "threshold": self.threshold,
                "excluded_index": self.excluded_index,
                "verdict": "accept" if self.accepted else "reject",
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "ValidationOutcome":
        record = json.loads(line)
        return cls(
            candidate_id=record["id"],
            accepted=record["verdict"] == "accept",
            delta=float(record["delta"]),
            threshold=float(record["threshold"]),
            excluded_index=int(record["excluded_index"]),
        )


def validate(
    candidate: Demonstration,
    accepted: AcceptedSet,
    config: ValidationConfig | None = None,
    rng: np.random.Generator | None = None,
) -> ValidationOutcome:
    """Score one candidate against the accepted family.

    Draws the excluded index uniformly, sums DTW distances to the remaining
    H-1 accepted demonstrations, and accepts iff that sum stays within
    beta * min(similarity sums).
    """
    config = config or ValidationConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    excluded = int(rng.integers(0, len(accepted)))
    sequence = representation_sequence(candidate, config.representation)
    delta = 0.0
    for i, other in enumerate(accepted.demonstrations):
        if i == excluded:
            continue
        delta += dtw_distance(sequence, representation_sequence(other, config.representation))
    threshold = config.beta * accepted.min_similarity
    return ValidationOutcome(
        candidate_id=candidate.demo_id,
        accepted=delta <= threshold,
        delta=float(delta),
        threshold=float(threshold),
        excluded_index=excluded,
    )


@dataclass
class ScaleReport:
    target_size: int
    attempts: int = 0
    generation_failures: int = 0
    outcomes: list[ValidationOutcome] = field(default_factory=list)

    @property
    def accepted_count(self) -> int:
        return sum(1 for o in self.outcomes if o.accepted)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted_count / len(self.outcomes) if self.outcomes else 0.0

    @property
    def shortfall(self) -> int:
        return self.target_size - self.accepted_count


def scale_dataset(
    candidates: Iterable[Demonstration | None],
    accepted: AcceptedSet,
    target_size: int,
    config: ValidationConfig | None = None,
    attempt_cap_factor: int = 20,
) -> tuple[Dataset, ScaleReport]:
    """Pull candidates until ``target_size`` acceptances or the attempt cap.

    ``candidates`` may yield None for generation failures (counted but not
    scored). A cap of ``attempt_cap_factor * target_size`` attempts guards
    against a beta too strict to ever satisfy; a shortfall is reported
    explicitly, never padded.
    """
    if target_size < 1:
        raise ConfigError("target_size must be at least 1")
    config = config or ValidationConfig()
    rng = np.random.default_rng(config.seed)
    report = ScaleReport(target_size=target_size)
    kept: list[Demonstration] = []
    cap = attempt_cap_factor * target_size
    iterator: Iterator[Demonstration | None] = iter(candidates)
    while len(kept) < target_size and report.attempts < cap:
        try:
            candidate = next(iterator)
        except StopIteration:
            break
        report.attempts += 1
        if candidate is None:
            report.generation_failures += 1
            continue
        outcome = validate(candidate, accepted, config, rng=rng)
        report.outcomes.append(outcome)
        if outcome.accepted:
            kept.append(candidate)
    return Dataset(demonstrations=kept, role="scaled"), report


def write_outcome_log(report: ScaleReport, path: str | Path) -> None:
    lines = [o.to_json() for o in report.outcomes]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_outcome_log(path: str | Path) -> list[ValidationOutcome]:
    outcomes = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            outcomes.append(ValidationOutcome.from_json(line))
        except (json.JSONDecodeError, KeyError) as exc:
            raise FormatError(f"bad outcome record: {exc}", lineno) from None
    return outcomes
