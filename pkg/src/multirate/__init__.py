"""Multirate demonstration data: bilateral simulation, alignment, augmentation."""

from . import errors
from .augment import (
    CoverageReport,
    augment,
    compute_ratio,
    evenness_report,
    make_offsets,
    slice_episode,
)
from .io import (
    EpisodeManifest,
    read_dataset,
    read_episode,
    write_dataset,
    write_episode,
)
from .model import (
    AlignedEpisode,
    AlignedStep,
    AugmentedDataset,
    DatasetManifest,
    Episode,
    FrameRecord,
    FrameRef,
    FrameStream,
    JointSample,
    Method,
    OffsetSet,
    Provenance,
    RobotStream,
    aligned_content_equal,
    clamp_index,
    exact_ratio,
    frame_anchor_index,
)
from .sim import (
    ArmState,
    ControllerGains,
    Disturbance,
    JointModel,
    ObserverState,
    OperatorSchedule,
    SimConfig,
    SimResult,
    StepResult,
    bilateral_step,
    control_commands,
    default_sim_config,
    dob_update,
    load_sim_config,
    plant_step,
    rfob_update,
    run_simulation,
    scripted_trajectories,
    simulate_episode,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "AlignedEpisode",
    "AlignedStep",
    "ArmState",
    "AugmentedDataset",
    "ControllerGains",
    "CoverageReport",
    "DatasetManifest",
    "Disturbance",
    "Episode",
    "EpisodeManifest",
    "FrameRecord",
    "FrameRef",
    "FrameStream",
    "JointModel",
    "JointSample",
    "Method",
    "ObserverState",
    "OffsetSet",
    "OperatorSchedule",
    "Provenance",
    "RobotStream",
    "SimConfig",
    "SimResult",
    "StepResult",
    "aligned_content_equal",
    "augment",
    "bilateral_step",
    "clamp_index",
    "compute_ratio",
    "control_commands",
    "default_sim_config",
    "dob_update",
    "evenness_report",
    "exact_ratio",
    "frame_anchor_index",
    "load_sim_config",
    "make_offsets",
    "plant_step",
    "read_dataset",
    "read_episode",
    "rfob_update",
    "run_simulation",
    "scripted_trajectories",
    "simulate_episode",
    "slice_episode",
    "write_dataset",
    "write_episode",
]
