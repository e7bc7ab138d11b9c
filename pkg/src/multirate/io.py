"""On-disk persistence for episodes and augmented datasets.

Byte layout is specified in docs/format.md.  Every artifact is a directory
holding one manifest.json plus raw binary payload files; manifests carry a
crc32 per payload file.  Writers are deterministic (no timestamps, no
absolute paths, sorted JSON keys) so identical inputs produce identical
bytes, and they publish atomically: payloads land in a sibling temp
directory that is renamed into place under an exclusive lock file.
"""

from __future__ import annotations

import json
import os
import shutil
import struct
import zlib
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    ChecksumMismatch,
    IoFailure,
    ParseFailure,
    ValidationFailure,
)
from .model import (
    AlignedEpisode,
    AlignedStep,
    AugmentedDataset,
    CHANNELS_PER_JOINT,
    DatasetManifest,
    Episode,
    FrameRecord,
    FrameRef,
    FrameStream,
    Method,
    Provenance,
    RobotStream,
)

FORMAT_VERSION = 1

_LEADER_FILE = "leader.f64"
_FOLLOWER_FILE = "follower.f64"
_FRAME_REC_HEADER = struct.Struct("<QQ")  # seq, payload length
_STEP_INDEX = struct.Struct("<Q")


def _json_bytes(obj: object) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _crc(data: bytes) -> str:
    return f"{zlib.crc32(data) & 0xFFFFFFFF:08x}"


@contextmanager
def _publish_lock(target: Path) -> Iterator[None]:
    lock = target.parent / (target.name + ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise IoFailure(f"{target} is locked by another writer ({lock} exists)") from None
    except OSError as exc:
        raise IoFailure(f"cannot create lock for {target}: {exc}") from exc
    try:
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock)
        except OSError:
            pass


def _publish_dir(target: Path, files: dict[str, bytes], overwrite: bool) -> Path:
    """Write `files` into `target` atomically (temp dir + rename)."""
    target = Path(target)
    if target.exists() and not overwrite:
        raise IoFailure(f"{target} already exists (pass overwrite to replace it)")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create parent of {target}: {exc}") from exc
    with _publish_lock(target):
        tmp = target.parent / (target.name + ".tmp")
        try:
            if tmp.exists():
                shutil.rmtree(tmp)
            tmp.mkdir()
            for name, data in files.items():
                (tmp / name).write_bytes(data)
            if target.exists():
                shutil.rmtree(target)
            os.replace(tmp, target)
        except OSError as exc:
            shutil.rmtree(tmp, ignore_errors=True)
            raise IoFailure(f"failed to publish {target}: {exc}") from exc
    return target


def _as_directory(path: str | Path) -> Path:
    """Accept either an artifact directory or its manifest.json path."""
    path = Path(path)
    return path.parent if path.name == "manifest.json" else path


def load_manifest(directory: str | Path) -> dict:
    """Parse a manifest.json, checking format version but not payloads."""
    directory = _as_directory(directory)
    path = directory / "manifest.json"
    if not directory.is_dir():
        raise IoFailure(f"{directory} is not a directory")
    if not path.is_file():
        raise IoFailure(f"{directory} has no manifest.json")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseFailure(f"{path} must hold a JSON object")
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseFailure(
            f"{path}: unsupported format_version {version!r} (this build reads {FORMAT_VERSION})"
        )
    if raw.get("kind") not in ("episode", "dataset"):
        raise ParseFailure(f"{path}: unknown kind {raw.get('kind')!r}")
    return raw


def verify_checksums(directory: str | Path, manifest: dict) -> None:
    """Check every payload file the manifest declares; raise on any defect."""
    directory = Path(directory)
    files = manifest.get("files")
    if not isinstance(files, dict):
        raise ParseFailure(f"{directory}/manifest.json: missing files table")
    for name in sorted(files):
        stamp = files[name]
        path = directory / name
        if not path.is_file():
            raise ValidationFailure(f"{directory}: declared file {name} is missing")
        data = path.read_bytes()
        if len(data) != stamp.get("bytes"):
            raise ChecksumMismatch(
                f"{path}: size {len(data)} != declared {stamp.get('bytes')}"
            )
        crc = _crc(data)
        if crc != stamp.get("crc32"):
            raise ChecksumMismatch(f"{path}: crc32 {crc} != declared {stamp.get('crc32')}")


@dataclass(frozen=True)
class EpisodeManifest:
    """Typed view of an episode directory's manifest."""

    episode_id: str
    robot_rate_hz: int
    frame_rate_hz: int
    joints: int
    sample_count: int
    frame_count: int
    cameras: tuple[str, ...]
    meta: dict[str, str]
    checksums: dict[str, str]

    @classmethod
    def from_dict(cls, raw: dict) -> "EpisodeManifest":
        try:
            files = raw.get("files", {})
            return cls(
                episode_id=str(raw["episode_id"]),
                robot_rate_hz=int(raw["robot_rate_hz"]),
                frame_rate_hz=int(raw["frame_rate_hz"]),
                joints=int(raw["joints"]),
                sample_count=int(raw["sample_count"]),
                frame_count=int(raw["frame_count"]),
                cameras=tuple(raw["cameras"]),
                meta={str(k): str(v) for k, v in raw.get("meta", {}).items()},
                checksums={str(k): str(v["crc32"]) for k, v in files.items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseFailure(f"bad episode manifest: {exc!r}") from exc


def _robot_bytes(stream: RobotStream) -> bytes:
    flat = stream.data.reshape(stream.sample_count, stream.joints * CHANNELS_PER_JOINT)
    return np.ascontiguousarray(flat, dtype="<f8").tobytes()


def _frames_bytes(fs: FrameStream) -> bytes:
    parts = []
    for rec in fs.records:
        parts.append(_FRAME_REC_HEADER.pack(rec.seq, len(rec.payload)))
        parts.append(rec.payload)
    return b"".join(parts)


def write_episode(episode: Episode, out_dir: str | Path, overwrite: bool = False) -> Path:
    """Persist one episode; returns the path of the manifest written."""
    files: dict[str, bytes] = {
        _LEADER_FILE: _robot_bytes(episode.leader),
        _FOLLOWER_FILE: _robot_bytes(episode.follower),
    }
    for fs in episode.frame_streams:
        files[f"frames_{fs.camera_id}.bin"] = _frames_bytes(fs)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "episode",
        "episode_id": episode.episode_id,
        "robot_rate_hz": episode.leader.rate_hz,
        "frame_rate_hz": episode.frame_streams[0].rate_hz,
        "joints": episode.joints,
        "sample_count": episode.sample_count,
        "frame_count": episode.frame_count,
        "cameras": list(episode.camera_ids),
        "meta": dict(episode.meta),
        "files": {
            name: {"bytes": len(data), "crc32": _crc(data)}
            for name, data in sorted(files.items())
        },
    }
    files["manifest.json"] = _json_bytes(manifest)
    return _publish_dir(Path(out_dir), files, overwrite) / "manifest.json"


def _parse_robot(path: Path, sample_count: int, joints: int, rate_hz: int) -> RobotStream:
    data = path.read_bytes()
    width = joints * CHANNELS_PER_JOINT
    expected = sample_count * width * 8
    if len(data) != expected:
        # Size disagreements between manifest counts and payload length are a
        # content violation, not a syntax problem.
        raise ValidationFailure(
            f"{path}: {len(data)} bytes, manifest implies {expected} "
            f"({sample_count} samples x {width} channels)"
        )
    arr = np.frombuffer(data, dtype="<f8").reshape(sample_count, joints, CHANNELS_PER_JOINT)
    return RobotStream(rate_hz=rate_hz, data=arr)


def _parse_frames(path: Path, camera_id: str, rate_hz: int, frame_count: int) -> FrameStream:
    data = path.read_bytes()
    records = []
    pos = 0
    while pos < len(data):
        if pos + _FRAME_REC_HEADER.size > len(data):
            raise ParseFailure(f"{path}: truncated record header at byte {pos}")
        seq, length = _FRAME_REC_HEADER.unpack_from(data, pos)
        pos += _FRAME_REC_HEADER.size
        if pos + length > len(data):
            raise ParseFailure(f"{path}: record {seq} payload runs past end of file")
        records.append(FrameRecord(seq=seq, payload=data[pos : pos + length]))
        pos += length
    if len(records) != frame_count:
        raise ValidationFailure(
            f"{path}: holds {len(records)} frames, manifest declares {frame_count}"
        )
    return FrameStream(camera_id=camera_id, rate_hz=rate_hz, records=tuple(records))


def read_episode(in_dir: str | Path) -> Episode:
    """Load one episode directory, verifying checksums and invariants.

    Accepts either the directory or its manifest.json path.
    """
    in_dir = _as_directory(in_dir)
    raw = load_manifest(in_dir)
    if raw["kind"] != "episode":
        raise ParseFailure(f"{in_dir}: expected kind 'episode', found {raw['kind']!r}")
    verify_checksums(in_dir, raw)
    man = EpisodeManifest.from_dict(raw)
    leader = _parse_robot(in_dir / _LEADER_FILE, man.sample_count, man.joints, man.robot_rate_hz)
    follower = _parse_robot(
        in_dir / _FOLLOWER_FILE, man.sample_count, man.joints, man.robot_rate_hz
    )
    streams = tuple(
        _parse_frames(
            in_dir / f"frames_{cam}.bin", cam, man.frame_rate_hz, man.frame_count
        )
        for cam in man.cameras
    )
    return Episode(
        episode_id=man.episode_id,
        leader=leader,
        follower=follower,
        frame_streams=streams,
        meta=man.meta,
    )


def _steps_bytes(sub: AlignedEpisode) -> bytes:
    parts = []
    for step in sub.steps:
        parts.append(_STEP_INDEX.pack(step.source_index))
        parts.append(np.ascontiguousarray(step.observation, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(step.action, dtype="<f8").tobytes())
    return b"".join(parts)


def _parse_steps(
    path: Path, step_count: int, joints: int, cameras: tuple[str, ...]
) -> tuple[AlignedStep, ...]:
    data = path.read_bytes()
    vec = joints * CHANNELS_PER_JOINT
    row = _STEP_INDEX.size + 2 * vec * 8
    if len(data) != step_count * row:
        raise ValidationFailure(
            f"{path}: {len(data)} bytes, manifest implies {step_count * row} "
            f"({step_count} steps of {row} bytes)"
        )
    steps = []
    for k in range(step_count):
        base = k * row
        (source_index,) = _STEP_INDEX.unpack_from(data, base)
        body = np.frombuffer(data, dtype="<f8", count=2 * vec, offset=base + _STEP_INDEX.size)
        steps.append(
            AlignedStep(
                frame_refs=tuple(FrameRef(camera_id=c, seq=k) for c in cameras),
                observation=body[:vec],
                action=body[vec:],
                source_index=source_index,
            )
        )
    return tuple(steps)


def write_dataset(dataset: AugmentedDataset, out_dir: str | Path, overwrite: bool = False) -> Path:
    """Persist an augmented dataset; returns the path of the manifest written."""
    files: dict[str, bytes] = {}
    entries = []
    for i, sub in enumerate(dataset.episodes):
        name = f"steps-{i:05d}.bin"
        files[name] = _steps_bytes(sub)
        entries.append(
            {
                "file": name,
                "source_episode_id": sub.provenance.source_episode_id,
                "offset": sub.provenance.offset,
                "step_count": sub.step_count,
                "joints": sub.joints,
                "cameras": [r.camera_id for r in sub.steps[0].frame_refs],
            }
        )
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "dataset",
        "method": dataset.manifest.method.value,
        "ratio": dataset.manifest.ratio,
        "source_episode_ids": list(dataset.manifest.source_episode_ids),
        "episodes": entries,
        "files": {
            name: {"bytes": len(data), "crc32": _crc(data)}
            for name, data in sorted(files.items())
        },
    }
    files["manifest.json"] = _json_bytes(manifest)
    return _publish_dir(Path(out_dir), files, overwrite) / "manifest.json"


def read_dataset(in_dir: str | Path) -> AugmentedDataset:
    """Load a dataset directory, verifying checksums, counts, and invariants.

    Accepts either the directory or its manifest.json path.
    """
    in_dir = _as_directory(in_dir)
    raw = load_manifest(in_dir)
    if raw["kind"] != "dataset":
        raise ParseFailure(f"{in_dir}: expected kind 'dataset', found {raw['kind']!r}")
    verify_checksums(in_dir, raw)
    try:
        method = Method.from_name(str(raw["method"]))
        ratio = int(raw["ratio"])
        source_ids = tuple(str(s) for s in raw["source_episode_ids"])
        entries = list(raw["episodes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseFailure(f"{in_dir}/manifest.json: {exc!r}") from exc
    subs = []
    for entry in entries:
        try:
            steps = _parse_steps(
                in_dir / str(entry["file"]),
                int(entry["step_count"]),
                int(entry["joints"]),
                tuple(entry["cameras"]),
            )
            prov = Provenance(
                source_episode_id=str(entry["source_episode_id"]),
                method=method,
                offset=int(entry["offset"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseFailure(f"{in_dir}/manifest.json: bad episode entry: {exc!r}") from exc
        subs.append(AlignedEpisode(steps=steps, provenance=prov))
    return AugmentedDataset(
        episodes=tuple(subs),
        manifest=DatasetManifest(method=method, ratio=ratio, source_episode_ids=source_ids),
    )
