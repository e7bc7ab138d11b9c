"""Offset-window augmentation of multirate episodes.

With robot samples R times denser than camera frames, each frame has R - 1
samples strictly between itself and the next frame.  Pairing a frame with a
nearby sample instead of its own anchor yields a new, equally valid aligned
episode.  Three windows are supported:

  downsample  keep only the anchor sample            offsets {0}
  forward     anchor plus everything up to the next  offsets {0 .. R-1}
  dabi        window centred on the anchor, biased   offsets {-(R-1)//2 ..
              forward when R - 1 is odd                       R-1 - (R-1)//2}

Every offset in the window produces one sub-episode, so forward and dabi
expand a batch R-fold while downsample keeps it at size.  Indices that fall
outside the recording are clamped to its ends, never dropped.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, MixedRatio, ProvenanceMismatch, ValidationFailure
from .model import (
    AlignedEpisode,
    AlignedStep,
    AugmentedDataset,
    DatasetManifest,
    Episode,
    FrameRef,
    Method,
    OffsetSet,
    Provenance,
    clamp_index,
    exact_ratio,
    frame_anchor_index,
)


def compute_ratio(episode: Episode) -> int:
    """Samples per frame interval for one episode (always an integer >= 1)."""
    return exact_ratio(episode.leader.rate_hz, episode.frame_streams[0].rate_hz)


def make_offsets(method: Method, ratio: int) -> OffsetSet:
    """Build the offset window one method uses at one rate ratio."""
    if ratio < 1:
        raise ValidationFailure(f"ratio must be >= 1, got {ratio}")
    between = ratio - 1  # samples strictly between adjacent frame anchors
    if method is Method.DOWNSAMPLE:
        offsets: Sequence[int] = (0,)
    elif method is Method.FORWARD:
        offsets = range(0, ratio)
    elif method is Method.DABI:
        back = between // 2
        offsets = range(-back, between - back + 1)
    else:
        raise ValidationFailure(f"unknown method {method!r}")
    return OffsetSet(method=method, offsets=tuple(offsets))


def slice_episode(episode: Episode, offset: int, method: Method) -> AlignedEpisode:
    """Extract one aligned sub-episode at a fixed per-frame offset.

    Frame k pairs with high-rate sample clamp(k * R + offset); the follower
    sample becomes the observation, the leader sample the action, both
    flattened joint-major to length 3 * joints.  The result always has
    exactly frame_count steps regardless of clamping.
    """
    ratio = compute_ratio(episode)
    t_len = episode.sample_count
    cams = episode.camera_ids
    steps = []
    for k in range(episode.frame_count):
        idx = clamp_index(frame_anchor_index(k, ratio) + offset, t_len)
        steps.append(
            AlignedStep(
                frame_refs=tuple(FrameRef(camera_id=c, seq=k) for c in cams),
                observation=episode.follower.data[idx].reshape(-1),
                action=episode.leader.data[idx].reshape(-1),
                source_index=idx,
            )
        )
    return AlignedEpisode(
        steps=tuple(steps),
        provenance=Provenance(
            source_episode_id=episode.episode_id, method=method, offset=offset
        ),
    )


def augment(episodes: Sequence[Episode], method: Method) -> AugmentedDataset:
    """Expand a batch of episodes into aligned sub-episodes.

    All inputs must share one rate ratio (MixedRatio otherwise) and the
    batch must be non-empty (EmptyInput).  Output order is source-major,
    offsets ascending within each source.
    """
    episodes = list(episodes)
    if not episodes:
        raise EmptyInput("augment() needs at least one episode")
    ratios = sorted({compute_ratio(ep) for ep in episodes})
    if len(ratios) != 1:
        raise MixedRatio(f"episodes mix rate ratios {ratios}")
    ratio = ratios[0]
    ids = [ep.episode_id for ep in episodes]
    if len(set(ids)) != len(ids):
        raise ValidationFailure(f"duplicate episode ids in batch: {ids}")
    offsets = make_offsets(method, ratio)
    subs = [
        slice_episode(ep, off, method) for ep in episodes for off in offsets.offsets
    ]
    return AugmentedDataset(
        episodes=tuple(subs),
        manifest=DatasetManifest(
            method=method, ratio=ratio, source_episode_ids=tuple(ids)
        ),
    )


@dataclass(frozen=True, eq=False)
class CoverageReport:
    """How often each high-rate index of one source episode was used.

    counts[i] is the number of (sub-episode, step) pairs whose source_index
    is i.  clamped_steps counts steps whose raw index k * R + offset fell
    outside the recording and was clamped to an end.
    """

    source_episode_id: str
    method: Method
    ratio: int
    counts: np.ndarray
    clamped_steps: int

    def __post_init__(self) -> None:
        arr = np.array(self.counts, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @property
    def referenced_once(self) -> int:
        return int(np.count_nonzero(self.counts == 1))

    @property
    def unreferenced(self) -> int:
        return int(np.count_nonzero(self.counts == 0))


def evenness_report(dataset: AugmentedDataset, episode: Episode) -> CoverageReport:
    """Tally which high-rate samples of `episode` the dataset references.

    Raises ProvenanceMismatch when the dataset does not actually derive
    from the episode: id absent from the manifest, ratio disagreement, or
    sub-episode offsets/step counts inconsistent with the declared method.
    """
    if episode.episode_id not in dataset.manifest.source_episode_ids:
        raise ProvenanceMismatch(
            f"episode {episode.episode_id!r} is not a source of this dataset"
        )
    ratio = compute_ratio(episode)
    if dataset.manifest.ratio != ratio:
        raise ProvenanceMismatch(
            f"dataset ratio {dataset.manifest.ratio} != episode ratio {ratio}"
        )
    subs = [
        ep
        for ep in dataset.episodes
        if ep.provenance.source_episode_id == episode.episode_id
    ]
    expected = make_offsets(dataset.manifest.method, ratio).offsets
    got = tuple(ep.provenance.offset for ep in subs)
    if tuple(sorted(got)) != expected:
        raise ProvenanceMismatch(
            f"sub-episode offsets {sorted(got)} do not match method "
            f"{dataset.manifest.method.value} at ratio {ratio} (expected {list(expected)})"
        )
    t_len = episode.sample_count
    counts = np.zeros(t_len, dtype=np.int64)
    clamped = 0
    for sub in subs:
        if sub.step_count != episode.frame_count:
            raise ProvenanceMismatch(
                f"sub-episode at offset {sub.provenance.offset} has "
                f"{sub.step_count} steps, episode has {episode.frame_count} frames"
            )
        for k, step in enumerate(sub.steps):
            if not 0 <= step.source_index < t_len:
                raise ProvenanceMismatch(
                    f"source_index {step.source_index} outside episode of length {t_len}"
                )
            counts[step.source_index] += 1
            raw = frame_anchor_index(k, ratio) + sub.provenance.offset
            if raw != step.source_index:
                clamped += 1
    return CoverageReport(
        source_episode_id=episode.episode_id,
        method=dataset.manifest.method,
        ratio=ratio,
        counts=counts,
        clamped_steps=clamped,
    )
