"""Core data model: episodes, streams, aligned steps, and index arithmetic.

A demonstration episode carries two high-rate joint streams (leader and
follower arm) plus one or more low-rate camera frame streams.  Alignment
pairs each camera frame with one high-rate sample; the augmentation layer
chooses which sample via per-frame index offsets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import NonIntegerRatio, ValidationFailure

CHANNELS_PER_JOINT = 3  # angle, velocity, torque


class Method(enum.Enum):
    """Augmentation method selecting the per-frame offset window."""

    DOWNSAMPLE = "downsample"
    FORWARD = "forward"
    DABI = "dabi"

    @classmethod
    def from_name(cls, name: str) -> "Method":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValidationFailure(
                f"unknown method {name!r}; expected one of "
                + ", ".join(m.value for m in cls)
            ) from None


def exact_ratio(robot_rate_hz: int, frame_rate_hz: int) -> int:
    """Return robot_rate/frame_rate, requiring an exact integer >= 1."""
    if robot_rate_hz < 1 or frame_rate_hz < 1:
        raise ValidationFailure(
            f"rates must be positive, got robot={robot_rate_hz} frame={frame_rate_hz}"
        )
    if robot_rate_hz % frame_rate_hz != 0:
        raise NonIntegerRatio(
            f"robot rate {robot_rate_hz} Hz is not an integer multiple of "
            f"frame rate {frame_rate_hz} Hz"
        )
    return robot_rate_hz // frame_rate_hz


def frame_anchor_index(frame_seq: int, ratio: int) -> int:
    """High-rate index captured at the same instant as frame `frame_seq`."""
    if frame_seq < 0 or ratio < 1:
        raise ValidationFailure(f"bad anchor args frame_seq={frame_seq} ratio={ratio}")
    return frame_seq * ratio


def clamp_index(index: int, length: int) -> int:
    """Clamp an index into [0, length - 1]."""
    if length < 1:
        raise ValidationFailure(f"cannot clamp into empty range, length={length}")
    return min(max(index, 0), length - 1)


def _as_readonly_f64(data: Any, shape_desc: str, ndim: int) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, order="C")
    if arr.ndim != ndim:
        raise ValidationFailure(f"{shape_desc}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationFailure(f"{shape_desc}: contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class JointSample:
    """One joint at one instant."""

    angle: float
    velocity: float
    torque: float

    def __post_init__(self) -> None:
        for name in ("angle", "velocity", "torque"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationFailure(f"JointSample.{name} is not finite: {v}")


@dataclass(frozen=True, eq=False)
class RobotStream:
    """Uniform high-rate joint recording, shape (samples, joints, 3).

    Channel order per joint is (angle, velocity, torque).  The array is
    stored as read-only float64.
    """

    rate_hz: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.rate_hz < 1:
            raise ValidationFailure(f"robot rate must be >= 1 Hz, got {self.rate_hz}")
        arr = _as_readonly_f64(self.data, "RobotStream.data", 3)
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] != CHANNELS_PER_JOINT:
            raise ValidationFailure(
                f"RobotStream.data must be (T>=1, J>=1, {CHANNELS_PER_JOINT}), got {arr.shape}"
            )
        object.__setattr__(self, "data", arr)

    @property
    def sample_count(self) -> int:
        return self.data.shape[0]

    @property
    def joints(self) -> int:
        return self.data.shape[1]

    def sample(self, index: int, joint: int) -> JointSample:
        a, v, t = self.data[index, joint]
        return JointSample(float(a), float(v), float(t))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RobotStream):
            return NotImplemented
        return self.rate_hz == other.rate_hz and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class FrameRecord:
    """One camera frame: sequence number plus opaque payload bytes."""

    seq: int
    payload: bytes

    def __post_init__(self) -> None:
        if self.seq < 0:
            raise ValidationFailure(f"frame seq must be >= 0, got {self.seq}")


@dataclass(frozen=True)
class FrameStream:
    """Uniform low-rate frame recording from one camera."""

    camera_id: str
    rate_hz: int
    records: tuple[FrameRecord, ...]

    def __post_init__(self) -> None:
        if not self.camera_id:
            raise ValidationFailure("camera_id must be non-empty")
        if self.rate_hz < 1:
            raise ValidationFailure(f"frame rate must be >= 1 Hz, got {self.rate_hz}")
        object.__setattr__(self, "records", tuple(self.records))
        if len(self.records) < 1:
            raise ValidationFailure("frame stream must hold at least one frame")
        for i, rec in enumerate(self.records):
            if rec.seq != i:
                raise ValidationFailure(
                    f"camera {self.camera_id}: frame seqs must be 0..F-1 in order, "
                    f"got seq {rec.seq} at position {i}"
                )

    @property
    def frame_count(self) -> int:
        return len(self.records)


@dataclass(frozen=True, eq=False)
class Episode:
    """One bilateral demonstration: leader + follower streams plus cameras.

    Invariants enforced here:
      * leader and follower share rate, joint count, and sample count
      * every frame stream shares one rate and one frame count F
      * the robot rate is an integer multiple R of the frame rate
      * sample count T covers every frame anchor: T >= (F - 1) * R + 1
    """

    episode_id: str
    leader: RobotStream
    follower: RobotStream
    frame_streams: tuple[FrameStream, ...]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.episode_id:
            raise ValidationFailure("episode_id must be non-empty")
        if self.leader.rate_hz != self.follower.rate_hz:
            raise ValidationFailure(
                f"leader rate {self.leader.rate_hz} != follower rate {self.follower.rate_hz}"
            )
        if self.leader.data.shape != self.follower.data.shape:
            raise ValidationFailure(
                f"leader shape {self.leader.data.shape} != follower shape "
                f"{self.follower.data.shape}"
            )
        object.__setattr__(self, "frame_streams", tuple(self.frame_streams))
        if len(self.frame_streams) < 1:
            raise ValidationFailure("episode needs at least one frame stream")
        ids = [fs.camera_id for fs in self.frame_streams]
        if len(set(ids)) != len(ids):
            raise ValidationFailure(f"duplicate camera ids: {ids}")
        rates = {fs.rate_hz for fs in self.frame_streams}
        if len(rates) != 1:
            raise ValidationFailure(f"frame streams disagree on rate: {sorted(rates)}")
        counts = {fs.frame_count for fs in self.frame_streams}
        if len(counts) != 1:
            raise ValidationFailure(f"frame streams disagree on frame count: {sorted(counts)}")
        ratio = exact_ratio(self.leader.rate_hz, self.frame_streams[0].rate_hz)
        t_min = (self.frame_count - 1) * ratio + 1
        if self.sample_count < t_min:
            raise ValidationFailure(
                f"sample count {self.sample_count} too short for {self.frame_count} frames "
                f"at ratio {ratio}; need at least {t_min}"
            )
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def ratio(self) -> int:
        return self.leader.rate_hz // self.frame_streams[0].rate_hz

    @property
    def sample_count(self) -> int:
        return self.leader.sample_count

    @property
    def frame_count(self) -> int:
        return self.frame_streams[0].frame_count

    @property
    def joints(self) -> int:
        return self.leader.joints

    @property
    def camera_ids(self) -> tuple[str, ...]:
        return tuple(fs.camera_id for fs in self.frame_streams)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Episode):
            return NotImplemented
        return (
            self.episode_id == other.episode_id
            and self.leader == other.leader
            and self.follower == other.follower
            and self.frame_streams == other.frame_streams
            and self.meta == other.meta
        )


@dataclass(frozen=True)
class OffsetSet:
    """Per-frame index offsets that one augmentation method applies."""

    method: Method
    offsets: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        offs = self.offsets
        if len(offs) < 1:
            raise ValidationFailure("offset set must be non-empty")
        if list(offs) != list(range(offs[0], offs[0] + len(offs))):
            raise ValidationFailure(f"offsets must be consecutive, got {offs}")
        if self.method is Method.DOWNSAMPLE:
            if offs != (0,):
                raise ValidationFailure(f"downsample offsets must be (0,), got {offs}")
        elif self.method is Method.FORWARD:
            if offs[0] != 0:
                raise ValidationFailure(f"forward offsets must start at 0, got {offs}")
        else:
            between = len(offs) - 1  # samples strictly between adjacent frames
            if offs[0] != -(between // 2) or offs[-1] != between - between // 2:
                raise ValidationFailure(
                    f"dabi offsets must span [-(n//2), n - n//2] for n={between}, got {offs}"
                )

    @property
    def ratio(self) -> int:
        return len(self.offsets)


@dataclass(frozen=True)
class FrameRef:
    """Pointer to one frame inside a source episode."""

    camera_id: str
    seq: int


@dataclass(frozen=True, eq=False)
class AlignedStep:
    """One training pair: camera frames plus follower observation and leader action.

    Observation and action are flat float64 vectors of length 3 * joints,
    joint-major: (angle, velocity, torque) for joint 0, then joint 1, ...
    `source_index` records which high-rate sample supplied the vectors.
    """

    frame_refs: tuple[FrameRef, ...]
    observation: np.ndarray
    action: np.ndarray
    source_index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "frame_refs", tuple(self.frame_refs))
        obs = _as_readonly_f64(self.observation, "AlignedStep.observation", 1)
        act = _as_readonly_f64(self.action, "AlignedStep.action", 1)
        if obs.shape != act.shape:
            raise ValidationFailure(
                f"observation shape {obs.shape} != action shape {act.shape}"
            )
        if obs.shape[0] < CHANNELS_PER_JOINT or obs.shape[0] % CHANNELS_PER_JOINT != 0:
            raise ValidationFailure(
                f"step vectors must have length 3*joints, got {obs.shape[0]}"
            )
        if len(self.frame_refs) < 1:
            raise ValidationFailure("aligned step needs at least one frame ref")
        if self.source_index < 0:
            raise ValidationFailure(f"source_index must be >= 0, got {self.source_index}")
        object.__setattr__(self, "observation", obs)
        object.__setattr__(self, "action", act)

    @property
    def joints(self) -> int:
        return self.observation.shape[0] // CHANNELS_PER_JOINT

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AlignedStep):
            return NotImplemented
        return (
            self.frame_refs == other.frame_refs
            and self.source_index == other.source_index
            and np.array_equal(self.observation, other.observation)
            and np.array_equal(self.action, other.action)
        )


@dataclass(frozen=True)
class Provenance:
    """Where one aligned sub-episode came from."""

    source_episode_id: str
    method: Method
    offset: int


@dataclass(frozen=True, eq=False)
class AlignedEpisode:
    """One aligned sub-episode: exactly one step per source frame."""

    steps: tuple[AlignedStep, ...]
    provenance: Provenance

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        if len(self.steps) < 1:
            raise ValidationFailure("aligned episode must hold at least one step")
        joints = {s.joints for s in self.steps}
        if len(joints) != 1:
            raise ValidationFailure(f"steps disagree on joint count: {sorted(joints)}")
        cams = {tuple(r.camera_id for r in s.frame_refs) for s in self.steps}
        if len(cams) != 1:
            raise ValidationFailure("steps disagree on camera ids")
        for k, step in enumerate(self.steps):
            if any(r.seq != k for r in step.frame_refs):
                raise ValidationFailure(
                    f"step {k} must reference frame seq {k}, got "
                    f"{[r.seq for r in step.frame_refs]}"
                )

    @property
    def step_count(self) -> int:
        return len(self.steps)

    @property
    def joints(self) -> int:
        return self.steps[0].joints

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AlignedEpisode):
            return NotImplemented
        return self.provenance == other.provenance and self.steps == other.steps


def aligned_content_equal(a: AlignedEpisode, b: AlignedEpisode) -> bool:
    """Step-level equality that ignores which method produced the episodes.

    Offsets and source ids must still agree; only `provenance.method` may
    differ.  Used to compare method outputs that share an offset (every
    method's offset-0 sub-episode carries identical steps).
    """
    return (
        a.provenance.source_episode_id == b.provenance.source_episode_id
        and a.provenance.offset == b.provenance.offset
        and a.steps == b.steps
    )


@dataclass(frozen=True)
class DatasetManifest:
    """Summary of how an augmented dataset was produced."""

    method: Method
    ratio: int
    source_episode_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "source_episode_ids", tuple(self.source_episode_ids)
        )
        if self.ratio < 1:
            raise ValidationFailure(f"ratio must be >= 1, got {self.ratio}")
        if len(self.source_episode_ids) < 1:
            raise ValidationFailure("dataset needs at least one source episode id")
        if len(set(self.source_episode_ids)) != len(self.source_episode_ids):
            raise ValidationFailure("source episode ids must be unique")


@dataclass(frozen=True, eq=False)
class AugmentedDataset:
    """All aligned sub-episodes produced from one batch of source episodes.

    Cardinality is fixed by the manifest: downsample keeps one sub-episode
    per source, forward and dabi keep `ratio` per source.  Sub-episodes are
    ordered source-major, then by ascending offset.
    """

    episodes: tuple[AlignedEpisode, ...]
    manifest: DatasetManifest

    def __post_init__(self) -> None:
        object.__setattr__(self, "episodes", tuple(self.episodes))
        per_source = 1 if self.manifest.method is Method.DOWNSAMPLE else self.manifest.ratio
        expected = per_source * len(self.manifest.source_episode_ids)
        if len(self.episodes) != expected:
            raise ValidationFailure(
                f"dataset holds {len(self.episodes)} sub-episodes, expected {expected} "
                f"({per_source} per source x {len(self.manifest.source_episode_ids)} sources)"
            )
        for ep in self.episodes:
            if ep.provenance.method is not self.manifest.method:
                raise ValidationFailure(
                    f"sub-episode method {ep.provenance.method.value} != manifest "
                    f"method {self.manifest.method.value}"
                )
            if ep.provenance.source_episode_id not in self.manifest.source_episode_ids:
                raise ValidationFailure(
                    f"sub-episode source {ep.provenance.source_episode_id!r} not in manifest"
                )

    @property
    def episode_count(self) -> int:
        return len(self.episodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AugmentedDataset):
            return NotImplemented
        return self.manifest == other.manifest and self.episodes == other.episodes
