"""Shared episode builders and hypothesis strategies."""

import struct

import numpy as np
from hypothesis import strategies as st

from multirate.model import Episode, FrameRecord, FrameStream, RobotStream

BASE_FRAME_HZ = 10


def make_episode(
    t_len: int,
    joints: int,
    ratio: int,
    frame_count: int | None = None,
    episode_id: str = "ep-0",
    seed: int = 0,
    cameras: tuple[str, ...] = ("cam",),
) -> Episode:
    """Synthetic episode with gaussian streams; frame_count defaults to max."""
    if frame_count is None:
        frame_count = (t_len - 1) // ratio + 1
    rng = np.random.default_rng(seed)
    leader = rng.normal(size=(t_len, joints, 3))
    follower = rng.normal(size=(t_len, joints, 3))
    records = tuple(
        FrameRecord(seq=k, payload=struct.pack("<II", seed & 0xFFFFFFFF, k))
        for k in range(frame_count)
    )
    streams = tuple(
        FrameStream(camera_id=c, rate_hz=BASE_FRAME_HZ, records=records) for c in cameras
    )
    return Episode(
        episode_id=episode_id,
        leader=RobotStream(rate_hz=BASE_FRAME_HZ * ratio, data=leader),
        follower=RobotStream(rate_hz=BASE_FRAME_HZ * ratio, data=follower),
        frame_streams=streams,
        meta={"origin": "synthetic"},
    )


@st.composite
def episode_strategy(draw, max_ratio: int = 12, max_joints: int = 6):
    ratio = draw(st.integers(min_value=1, max_value=max_ratio))
    joints = draw(st.integers(min_value=1, max_value=max_joints))
    frame_count = draw(st.integers(min_value=1, max_value=8))
    extra = draw(st.integers(min_value=0, max_value=ratio))
    t_len = (frame_count - 1) * ratio + 1 + extra
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    return make_episode(
        t_len, joints, ratio, frame_count=frame_count, seed=seed,
        episode_id=f"ep-{seed:08x}",
    )
