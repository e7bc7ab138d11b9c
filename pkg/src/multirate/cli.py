"""Command line front end: simulate, augment, validate, stats.

Exit codes: 0 success, 1 operation or validation failure, 2 usage error.
Reports written via --report contain no filesystem paths or timestamps so
that identical inputs yield byte-identical report files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .augment import augment, evenness_report, make_offsets, slice_episode
from .errors import MultirateError
from .io import load_manifest, read_dataset, read_episode, write_dataset, write_episode
from .model import (
    CHANNELS_PER_JOINT,
    AugmentedDataset,
    Episode,
    Method,
    aligned_content_equal,
    clamp_index,
    frame_anchor_index,
)
from .sim import TRAJECTORY_NAMES, default_sim_config, load_sim_config, run_simulation


def _write_report(path: str | None, report: dict) -> None:
    if path:
        Path(path).write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_sim_config(args.config) if args.config else default_sim_config()
    out_root = Path(args.out)
    written = []
    for i in range(args.count):
        cfg = replace(config, seed=args.base_seed + i)
        result = run_simulation(cfg, args.trajectory)
        ep = result.episode
        dest = write_episode(ep, out_root / ep.episode_id, overwrite=args.force).parent
        written.append(ep.episode_id)
        print(
            f"wrote {dest}  samples={ep.sample_count} frames={ep.frame_count} "
            f"ratio={ep.ratio} max_gap={result.max_position_gap:.3e} rad"
        )
    report = {
        "command": "simulate",
        "trajectory": args.trajectory,
        "episode_ids": written,
        "count": len(written),
    }
    _write_report(args.report, report)
    return 0


def _collect_episode_dirs(inputs: list[str]) -> list[Path]:
    found = []
    for raw in inputs:
        path = Path(raw)
        if (path / "manifest.json").is_file():
            found.append(path)
            continue
        if path.is_dir():
            kids = sorted(
                p for p in path.iterdir() if (p / "manifest.json").is_file()
            )
            if kids:
                found.extend(kids)
                continue
        raise MultirateError(f"{path}: no episode directories found")
    return found


def cmd_augment(args: argparse.Namespace) -> int:
    method = Method.from_name(args.method)
    episodes = [read_episode(d) for d in _collect_episode_dirs(args.inputs)]
    dataset = augment(episodes, method)
    dest = write_dataset(dataset, args.out, overwrite=args.force).parent
    print(
        f"{len(episodes)} episodes -> {dataset.episode_count} sub-episodes  "
        f"method={method.value} ratio={dataset.manifest.ratio}"
    )
    print(f"wrote {dest}")
    _write_report(
        args.report,
        {
            "command": "augment",
            "method": method.value,
            "ratio": dataset.manifest.ratio,
            "sources": len(episodes),
            "sub_episodes": dataset.episode_count,
        },
    )
    return 0


def _find_source_episodes(dataset_dir: Path, extra: list[str]) -> dict[str, Episode]:
    """Index candidate source episodes by id, nearest directories first."""
    candidates = []
    for raw in extra:
        path = Path(raw)
        if (path / "manifest.json").is_file():
            candidates.append(path)
        elif path.is_dir():
            candidates.extend(sorted(p for p in path.iterdir() if p.is_dir()))
    parent = dataset_dir.resolve().parent
    for level in (parent.glob("*"), parent.glob("*/*")):
        for p in sorted(level):
            if p.resolve() == dataset_dir.resolve():
                continue
            candidates.append(p)
    out: dict[str, Episode] = {}
    for path in candidates:
        if not (path / "manifest.json").is_file():
            continue
        try:
            man = load_manifest(path)
        except MultirateError:
            continue
        if man.get("kind") != "episode":
            continue
        eid = str(man.get("episode_id"))
        if eid not in out:
            try:
                out[eid] = read_episode(path)
            except MultirateError:
                continue
    return out


class _Checks:
    def __init__(self) -> None:
        self.rows: list[dict[str, str]] = []
        self.failed = 0

    def add(self, name: str, status: str, detail: str = "") -> None:
        self.rows.append({"name": name, "status": status, "detail": detail})
        if status == "fail":
            self.failed += 1
        tag = {"ok": "ok  ", "fail": "FAIL", "skip": "skip"}[status]
        line = f"{tag} {name}"
        if detail:
            line += f": {detail}"
        print(line)

    def run(self, name: str, fn) -> bool:
        try:
            detail = fn()
        except MultirateError as exc:
            self.add(name, "fail", f"{type(exc).__name__}: {exc}")
            return False
        self.add(name, "ok", detail or "")
        return True


def _expected_counts(episode: Episode, method: Method, ratio: int) -> tuple[np.ndarray, int]:
    counts = np.zeros(episode.sample_count, dtype=np.int64)
    clamped = 0
    for off in make_offsets(method, ratio).offsets:
        for k in range(episode.frame_count):
            raw = frame_anchor_index(k, ratio) + off
            idx = clamp_index(raw, episode.sample_count)
            counts[idx] += 1
            if idx != raw:
                clamped += 1
    return counts, clamped


def _validate_dataset(dataset_dir: Path, args: argparse.Namespace, checks: _Checks) -> None:
    manifest = load_manifest(dataset_dir)
    checks.add("manifest-parse", "ok", f"kind=dataset method={manifest.get('method')}")
    if not checks.run("checksums", lambda: _checksum_detail(dataset_dir, manifest)):
        return
    holder: dict[str, AugmentedDataset] = {}

    def _read() -> str:
        holder["ds"] = read_dataset(dataset_dir)
        ds = holder["ds"]
        return (
            f"{ds.episode_count} sub-episodes from "
            f"{len(ds.manifest.source_episode_ids)} sources"
        )

    if not checks.run("read", _read):
        return
    ds = holder["ds"]
    method, ratio = ds.manifest.method, ds.manifest.ratio
    expected_offsets = make_offsets(method, ratio).offsets

    def _offsets() -> str:
        for src in ds.manifest.source_episode_ids:
            got = tuple(
                sub.provenance.offset
                for sub in ds.episodes
                if sub.provenance.source_episode_id == src
            )
            if tuple(sorted(got)) != expected_offsets:
                raise MultirateError(
                    f"source {src}: offsets {sorted(got)} != expected {list(expected_offsets)}"
                )
        return f"window {expected_offsets[0]}..{expected_offsets[-1]} per source"

    checks.run("offset-window", _offsets)

    def _ordering() -> str:
        want = [
            (src, off)
            for src in ds.manifest.source_episode_ids
            for off in expected_offsets
        ]
        got = [
            (sub.provenance.source_episode_id, sub.provenance.offset)
            for sub in ds.episodes
        ]
        if got != want:
            raise MultirateError("sub-episodes are not source-major, offset-ascending")
        return "source-major, offsets ascending"

    checks.run("ordering", _ordering)

    sources = _find_source_episodes(dataset_dir, args.sources)
    located = [eid for eid in ds.manifest.source_episode_ids if eid in sources]
    missing = [eid for eid in ds.manifest.source_episode_ids if eid not in sources]
    if not located:
        checks.add("re-derivation", "skip", "no source episodes located")
        checks.add("coverage", "skip", "no source episodes located")
        return

    def _rederive() -> str:
        n = 0
        for eid in located:
            ep = sources[eid]
            for sub in ds.episodes:
                if sub.provenance.source_episode_id != eid:
                    continue
                fresh = slice_episode(ep, sub.provenance.offset, method)
                if not aligned_content_equal(sub, fresh):
                    raise MultirateError(
                        f"source {eid} offset {sub.provenance.offset}: stored steps "
                        "differ from re-derived steps"
                    )
                n += 1
        note = f"re-derived {n} sub-episodes from {len(located)} sources"
        if missing:
            note += f" ({len(missing)} sources not located)"
        return note

    checks.run("re-derivation", _rederive)

    def _coverage() -> str:
        for eid in located:
            ep = sources[eid]
            rep = evenness_report(ds, ep)
            want, want_clamped = _expected_counts(ep, method, ratio)
            if not np.array_equal(rep.counts, want) or rep.clamped_steps != want_clamped:
                raise MultirateError(f"source {eid}: coverage counts mismatch")
            # indices referenced only without clamping must be hit exactly once
            unclamped_only = np.ones_like(want, dtype=bool)
            for off in expected_offsets:
                for k in range(ep.frame_count):
                    raw = frame_anchor_index(k, ratio) + off
                    if raw != clamp_index(raw, ep.sample_count):
                        unclamped_only[clamp_index(raw, ep.sample_count)] = False
            bad = np.nonzero((rep.counts != 1) & unclamped_only & (want > 0))[0]
            if bad.size and method is not Method.DOWNSAMPLE:
                raise MultirateError(
                    f"source {eid}: unclamped index {int(bad[0])} referenced "
                    f"{int(rep.counts[bad[0]])} times"
                )
        return f"coverage exact for {len(located)} sources"

    checks.run("coverage", _coverage)


def _checksum_detail(directory: Path, manifest: dict) -> str:
    from .io import verify_checksums

    verify_checksums(directory, manifest)
    return f"{len(manifest.get('files', {}))} files"


def _validate_episode(ep_dir: Path, checks: _Checks) -> None:
    manifest = load_manifest(ep_dir)
    checks.add("manifest-parse", "ok", f"kind=episode id={manifest.get('episode_id')}")
    if not checks.run("checksums", lambda: _checksum_detail(ep_dir, manifest)):
        return

    def _read() -> str:
        ep = read_episode(ep_dir)
        return (
            f"samples={ep.sample_count} frames={ep.frame_count} ratio={ep.ratio} "
            f"joints={ep.joints}"
        )

    checks.run("stream-invariants", _read)


def cmd_validate(args: argparse.Namespace) -> int:
    target = Path(args.dir)
    checks = _Checks()
    try:
        manifest = load_manifest(target)
    except MultirateError as exc:
        checks.add("manifest-parse", "fail", f"{type(exc).__name__}: {exc}")
        _write_report(args.report, {"command": "validate", "checks": checks.rows})
        return 1
    if manifest["kind"] == "dataset":
        _validate_dataset(target, args, checks)
    else:
        _validate_episode(target, checks)
    _write_report(args.report, {"command": "validate", "checks": checks.rows})
    if checks.failed:
        print(f"{checks.failed} check(s) failed")
        return 1
    return 0


_CHANNEL_NAMES = ("angle", "velocity", "torque")


def _channel_summary(data: np.ndarray) -> dict:
    """Per-joint min/max/mean for each channel of a (samples, joints, 3) block."""
    out: dict[str, dict] = {}
    for j in range(data.shape[1]):
        out[f"joint{j}"] = {
            name: {
                "min": float(data[:, j, c].min()),
                "max": float(data[:, j, c].max()),
                "mean": float(data[:, j, c].mean()),
            }
            for c, name in enumerate(_CHANNEL_NAMES)
        }
    return out


def _dataset_stats(ds: AugmentedDataset) -> dict:
    offsets: dict[str, int] = {}
    clamped = 0
    joints = ds.episodes[0].joints
    rows = []
    for sub in ds.episodes:
        key = str(sub.provenance.offset)
        offsets[key] = offsets.get(key, 0) + 1
        for k, step in enumerate(sub.steps):
            raw = frame_anchor_index(k, ds.manifest.ratio) + sub.provenance.offset
            if raw != step.source_index:
                clamped += 1
            rows.append(step.observation)
    obs = np.stack(rows).reshape(len(rows), joints, CHANNELS_PER_JOINT)
    return {
        "command": "stats",
        "kind": "dataset",
        "method": ds.manifest.method.value,
        "ratio": ds.manifest.ratio,
        "sources": len(ds.manifest.source_episode_ids),
        "sub_episodes": ds.episode_count,
        "steps": len(rows),
        "joints": joints,
        "clamped_steps": clamped,
        "offsets": offsets,
        "observed": _channel_summary(obs),
    }


def _episode_stats(ep: Episode) -> dict:
    return {
        "command": "stats",
        "kind": "episode",
        "episode_id": ep.episode_id,
        "robot_rate_hz": ep.leader.rate_hz,
        "frame_rate_hz": ep.frame_streams[0].rate_hz,
        "ratio": ep.ratio,
        "samples": ep.sample_count,
        "frames": ep.frame_count,
        "joints": ep.joints,
        "cameras": list(ep.camera_ids),
        "leader": _channel_summary(ep.leader.data),
        "follower": _channel_summary(ep.follower.data),
    }


def _print_channel_summary(prefix: str, summary: dict) -> None:
    for joint, channels in summary.items():
        for name, s in channels.items():
            print(
                f"{prefix}{joint} {name}: min={s['min']:.6f} max={s['max']:.6f} "
                f"mean={s['mean']:.6f}"
            )


def _print_stats(stats: dict) -> None:
    for key, value in stats.items():
        if key == "command":
            continue
        if key == "offsets":
            for off in sorted(value, key=int):
                print(f"offset {off}: {value[off]} sub-episode(s)")
        elif key == "observed":
            _print_channel_summary("", value)
        elif key in ("leader", "follower"):
            _print_channel_summary(f"{key} ", value)
        else:
            print(f"{key}: {value}")


def cmd_stats(args: argparse.Namespace) -> int:
    target = Path(args.dir)
    manifest = load_manifest(target)
    if manifest["kind"] == "dataset":
        stats = _dataset_stats(read_dataset(target))
    else:
        stats = _episode_stats(read_episode(target))
    _print_stats(stats)
    _write_report(args.report, stats)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multirate",
        description="Simulate, augment, and inspect multirate demonstration data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate bilateral demonstration episodes")
    p_sim.add_argument("--config", help="simulation config JSON (default: built-in rig)")
    p_sim.add_argument(
        "--trajectory", required=True, choices=TRAJECTORY_NAMES, help="operator schedule"
    )
    p_sim.add_argument("--out", required=True, help="directory to hold episode directories")
    p_sim.add_argument("--count", type=int, default=1, help="number of episodes")
    p_sim.add_argument("--base-seed", type=int, default=0, help="seed of the first episode")
    p_sim.add_argument("--force", action="store_true", help="overwrite existing episodes")
    p_sim.add_argument("--report", help="write a JSON run report to this path")
    p_sim.set_defaults(fn=cmd_simulate)

    p_aug = sub.add_parser("augment", help="expand episodes into an aligned dataset")
    p_aug.add_argument("inputs", nargs="+", help="episode dirs, or dirs of episode dirs")
    p_aug.add_argument(
        "--method",
        required=True,
        choices=[m.value for m in Method],
        help="offset window to apply",
    )
    p_aug.add_argument("--out", required=True, help="dataset directory to write")
    p_aug.add_argument("--force", action="store_true", help="overwrite an existing dataset")
    p_aug.add_argument("--report", help="write a JSON run report to this path")
    p_aug.set_defaults(fn=cmd_augment)

    p_val = sub.add_parser("validate", help="check an episode or dataset directory")
    p_val.add_argument("dir", help="directory to validate")
    p_val.add_argument(
        "--sources",
        action="append",
        default=[],
        help="extra directories to search for source episodes",
    )
    p_val.add_argument("--report", help="write a JSON check report to this path")
    p_val.set_defaults(fn=cmd_validate)

    p_st = sub.add_parser("stats", help="summarize an episode or dataset directory")
    p_st.add_argument("dir", help="directory to summarize")
    p_st.add_argument("--report", help="write a JSON stats report to this path")
    p_st.set_defaults(fn=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "count", 1) < 1:
        parser.error("--count must be >= 1")
    try:
        return args.fn(args)
    except MultirateError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
