"""Demonstration data model and line-delimited serialization.

A demonstration is a time-ordered sequence of (end-effector pose, joint
vector, gripper state) triples. It is the currency every pipeline stage
trades in: the oracle records one, the generator emits candidates, the
validator filters them, and behavioral cloning consumes them as
state-action pairs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

SOURCE_TAGS = ("oracle", "generated")
FK_CONSISTENCY_TOL = 1e-6


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


@dataclass(frozen=True)
class Pose:
    """Planar end-effector pose: xy position in meters, heading in (-pi, pi]."""

    position: np.ndarray
    heading: float

    def __post_init__(self):
        position = np.asarray(self.position, dtype=float)
        if position.shape != (2,):
            raise ValidationError(f"pose position must be a 2-vector, got shape {position.shape}")
        if not np.all(np.isfinite(position)) or not math.isfinite(self.heading):
            raise ValidationError("pose components must be finite")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.position, other.position) and self.heading == other.heading)


@dataclass
class Demonstration:
    """One trajectory: per-step positions, headings, joints, and gripper flags.

    Steps are stored column-wise as arrays for cheap slicing; ``step(i)``
    gives the (Pose, joints, gripper) view of a single step.
    """

    positions: np.ndarray  # (N, 2) meters
    headings: np.ndarray  # (N,) radians in (-pi, pi]
    joints: np.ndarray  # (N, J) radians
    grippers: np.ndarray  # (N,) 0 = closed, 1 = open
    demo_id: str = "demo"
    source: str = "oracle"
    seed: int | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.headings = np.asarray(self.headings, dtype=float)
        self.joints = np.asarray(self.joints, dtype=float)
        self.grippers = np.asarray(self.grippers, dtype=np.int64)
        self.validate()

    def validate(self) -> None:
        n = self.positions.shape[0] if self.positions.ndim == 2 else 0
        if n == 0:
            raise ValidationError("demonstration must contain at least one step")
        if self.positions.shape != (n, 2):
            raise ValidationError(f"positions must have shape (N, 2), got {self.positions.shape}")
        if self.headings.shape != (n,):
            raise ValidationError("headings length must match step count")
        if self.joints.ndim != 2 or self.joints.shape[0] != n:
            raise ValidationError("joints must have shape (N, J)")
        if self.grippers.shape != (n,):
            raise ValidationError("gripper flags length must match step count")
        if not np.all(np.isfinite(self.positions)) or not np.all(np.isfinite(self.joints)):
            raise ValidationError("demonstration contains non-finite values")
        if not np.all((self.grippers == 0) | (self.grippers == 1)):
            raise ValidationError("gripper state must be 0 (closed) or 1 (open)")
        if self.source not in SOURCE_TAGS:
            raise ValidationError(f"source must be one of {SOURCE_TAGS}, got {self.source!r}")

    def validate_kinematics(
        self, fk: Callable[[np.ndarray], np.ndarray], tol: float = FK_CONSISTENCY_TOL
    ) -> None:
        """Check that stored positions agree with forward kinematics of the joints."""
        for i in range(len(self)):
            predicted = fk(self.joints[i])
            err = float(np.linalg.norm(predicted - self.positions[i]))
            if err > tol:
                raise ValidationError(
                    f"step {i} of {self.demo_id!r}: stored position deviates from "
                    f"forward kinematics by {err:.3e} m (tol {tol:g})"
                )

    @property
    def joint_count(self) -> int:
        return self.joints.shape[1]

    def __len__(self) -> int:
        return self.positions.shape[0]

    def step(self, i: int) -> tuple[Pose, np.ndarray, int]:
        return Pose(self.positions[i], float(self.headings[i])), self.joints[i], int(self.grippers[i])

    @property
    def steps(self) -> Iterator[tuple[Pose, np.ndarray, int]]:
        return (self.step(i) for i in range(len(self)))

    def pose(self, i: int) -> Pose:
        return Pose(self.positions[i], float(self.headings[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Demonstration):
            return NotImplemented
        return bool(
            self.demo_id == other.demo_id
            and self.source == other.source
            and self.seed == other.seed
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.headings, other.headings)
            and np.array_equal(self.joints, other.joints)
            and np.array_equal(self.grippers, other.grippers)
        )


@dataclass
class Dataset:
    """A named collection of demonstrations sharing one joint count."""

    demonstrations: list[Demonstration] = field(default_factory=list)
    role: str = "candidates"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ids = [d.demo_id for d in self.demonstrations]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate demonstration identifiers: {dupes}")
        counts = {d.joint_count for d in self.demonstrations}
        if len(counts) > 1:
            raise ValidationError(f"demonstrations disagree on joint count: {sorted(counts)}")

    @property
    def joint_count(self) -> int | None:
        return self.demonstrations[0].joint_count if self.demonstrations else None

    def __len__(self) -> int:
        return len(self.demonstrations)

    def __iter__(self) -> Iterator[Demonstration]:
        return iter(self.demonstrations)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.role == other.role and self.demonstrations == other.demonstrations


def extract_positions(demo: Demonstration) -> np.ndarray:
    """Step-ordered (N, 2) array of end-effector positions."""
    return demo.positions.copy()


def state_action_pairs(
    demo: Demonstration, include_gripper: bool = False
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Convert a demonstration into (state, action) training pairs.

    For steps i = 0..N-2 the state is the joint vector (with the gripper
    value appended when ``include_gripper``) and the action is the joint
    difference to the next step (with the gripper delta appended).
    """
    n = len(demo)
    if n < 2:
        raise ValidationError(
            f"demonstration {demo.demo_id!r} has a single step: no state-action pairs"
        )
    pairs = []
    for i in range(n - 1):
        state = demo.joints[i].astype(float)
        action = demo.joints[i + 1] - demo.joints[i]
        if include_gripper:
            state = np.append(state, float(demo.grippers[i]))
            action = np.append(action, float(demo.grippers[i + 1] - demo.grippers[i]))
        pairs.append((state, action))
    return pairs


# ---------------------------------------------------------------------------
# Serialization: line-delimited text, one step per line, '#'-headers for
# dataset and demonstration boundaries. Floats use repr for exact round trips.
# Format reference: docs/formats.md.
# ---------------------------------------------------------------------------

def _format_floats(values) -> str:
    return "[" + ",".join(repr(float(v)) for v in values) + "]"


def _parse_floats(text: str, line: int) -> list[float]:
    if not (text.startswith("[") and text.endswith("]")):
        raise FormatError(f"expected a bracketed list, got {text!r}", line)
    body = text[1:-1].strip()
    if not body:
        return []
    try:
        return [float(v) for v in body.split(",")]
    except ValueError as exc:
        raise FormatError(f"bad float in {text!r}: {exc}", line) from None


def _parse_header_fields(rest: str, line: int) -> dict[str, str]:
    fields = {}
    for token in rest.split():
        if "=" not in token:
            raise FormatError(f"malformed header field {token!r}", line)
        key, value = token.split("=", 1)
        fields[key] = value
    return fields


def write_demonstrations(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset to a line-delimited demonstration file."""
    path = Path(path)
    lines = [f"#dataset role={dataset.role}"]
    if dataset.joint_count is not None:
        lines[0] += f" joints={dataset.joint_count}"
    for demo in dataset:
        header = f"#demo id={demo.demo_id} source={demo.source}"
        if demo.seed is not None:
            header += f" seed={demo.seed}"
        lines.append(header)
        for i in range(len(demo)):
            p = _format_floats([demo.positions[i, 0], demo.positions[i, 1], demo.headings[i]])
            j = _format_floats(demo.joints[i])
            lines.append(f"p={p} j={j} g={int(demo.grippers[i])}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_demonstrations(path: str | Path) -> Dataset:
    """Read a demonstration file written by :func:`write_demonstrations`."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        logger.warning("demonstration file %s is empty; returning an empty dataset", path)
        return Dataset(demonstrations=[], role="unspecified")

    role = "unspecified"
    joint_count: int | None = None
    demos: list[Demonstration] = []
    current: dict | None = None

    def finish_current():
        nonlocal current
        if current is None:
            return
        if not current["rows"]:
            raise FormatError(f"demonstration {current['id']!r} has no steps", current["line"])
        rows = current["rows"]
        demos.append(
            Demonstration(
                positions=np.array([r[0] for r in rows]),
                headings=np.array([r[1] for r in rows]),
                joints=np.array([r[2] for r in rows]),
                grippers=np.array([r[3] for r in rows]),
                demo_id=current["id"],
                source=current["source"],
                seed=current["seed"],
            )
        )
        current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#dataset"):
            fields = _parse_header_fields(line[len("#dataset"):].strip(), lineno)
            role = fields.get("role", role)
            if "joints" in fields:
                joint_count = int(fields["joints"])
        elif line.startswith("#demo"):
            finish_current()
            fields = _parse_header_fields(line[len("#demo"):].strip(), lineno)
            if "id" not in fields:
                raise FormatError("demo header missing id= field", lineno)
            current = {
                "id": fields["id"],
                "source": fields.get("source", "oracle"),
                "seed": int(fields["seed"]) if "seed" in fields else None,
                "rows": [],
                "line": lineno,
            }
        elif line.startswith("p="):
            if current is None:
                raise FormatError("step record appears before any #demo header", lineno)
            parts = line.split()
            if len(parts) != 3 or not parts[1].startswith("j=") or not parts[2].startswith("g="):
                raise FormatError(f"step record must look like 'p=[..] j=[..] g=0|1', got {line!r}", lineno)
            pvals = _parse_floats(parts[0][2:], lineno)
            if len(pvals) != 3:
                raise FormatError(f"p= field needs [x,y,heading], got {len(pvals)} values", lineno)
            jvals = _parse_floats(parts[1][2:], lineno)
            if joint_count is None:
                joint_count = len(jvals)
            if len(jvals) != joint_count:
                raise ValidationError(
                    f"line {lineno}: record has {len(jvals)} joints, dataset uses {joint_count}"
                )
            try:
                g = int(parts[2][2:])
            except ValueError:
                raise FormatError(f"g= field must be 0 or 1, got {parts[2][2:]!r}", lineno) from None
            if g not in (0, 1):
                raise ValidationError(f"line {lineno}: gripper must be 0 or 1, got {g}")
            current["rows"].append((pvals[:2], pvals[2], jvals, g))
        else:
            raise FormatError(f"unrecognized line {line!r}", lineno)

    finish_current()
    return Dataset(demonstrations=demos, role=role)
