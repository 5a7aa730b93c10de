"""Human-review bookkeeping: an append-only decision log and finalization.

Candidate trajectories are never mutated; verdicts live in a separate
JSONL log where later decisions supersede earlier ones and the full
history stays auditable. Finalizing writes the accepted subset of the
candidates file, order preserved.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, ValidationError
from .trajectory import Dataset, write_demonstrations

VERDICTS = ("accept", "reject")
REASON_TAGS = ("unnatural", "hazardous", "preference")
MIN_ACCEPTS_TO_FINALIZE = 2


@dataclass(frozen=True)
class ReviewDecision:
    candidate_id: str
    verdict: str
    timestamp: float
    reason: str | None = None

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValidationError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        if self.reason is not None and self.reason not in REASON_TAGS:
            raise ValidationError(f"reason must be one of {REASON_TAGS}, got {self.reason!r}")

    def to_json(self) -> str:
        record = {"id": self.candidate_id, "verdict": self.verdict, "timestamp": self.timestamp}
        if self.reason is not None:
            record["reason"] = self.reason
        return json.dumps(record)

    @classmethod
    def from_json(cls, line: str) -> "ReviewDecision":
        record = json.loads(line)
        return cls(
            candidate_id=record["id"],
            verdict=record["verdict"],
            timestamp=float(record["timestamp"]),
            reason=record.get("reason"),
        )


class DecisionStore:
    """Single-writer decision log; reads are lock-free snapshots."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._history: list[ReviewDecision] = []
        if self.path.exists():
            for lineno, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    self._history.append(ReviewDecision.from_json(line))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise FormatError(f"bad decision record: {exc}", lineno) from None

    def record(
        self,
        candidate_id: str,
        verdict: str,
        reason: str | None = None,
        timestamp: float | None = None,
    ) -> ReviewDecision:
        decision = ReviewDecision(
            candidate_id=candidate_id,
            verdict=verdict,
            timestamp=time.time() if timestamp is None else timestamp,
            reason=reason,
        )
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fp:
                fp.write(decision.to_json() + "\n")
            self._history.append(decision)
        return decision

    @property
    def history(self) -> list[ReviewDecision]:
        return list(self._history)

    def latest(self) -> dict[str, ReviewDecision]:
        """Final verdict per candidate: the last decision wins."""
        final: dict[str, ReviewDecision] = {}
        for decision in self._history:
            final[decision.candidate_id] = decision
        return final

    def accepted_ids(self, candidate_order: list[str]) -> list[str]:
        final = self.latest()
        return [cid for cid in candidate_order
                if cid in final and final[cid].verdict == "accept"]


def finalize_accepted(
    candidates: Dataset, store: DecisionStore, path: str | Path
) -> list[str]:
    """Write the accept-verdict subset of the candidates file, order preserved.

    Refuses to finalize with fewer than two accepts: the automatic
    validation stage cannot form a similarity array from less.
    """
    order = [d.demo_id for d in candidates]
    accepted = store.accepted_ids(order)
    if len(accepted) < MIN_ACCEPTS_TO_FINALIZE:
        raise ValidationError(
            f"only {len(accepted)} candidate(s) accepted; "
            f"at least {MIN_ACCEPTS_TO_FINALIZE} are required to finalize"
        )
    keep = set(accepted)
    subset = Dataset(
        demonstrations=[d for d in candidates if d.demo_id in keep],
        role="accepted",
    )
    write_demonstrations(subset, path)
    return accepted
