"""Synthetic confounded benchmarks (pendulum, cartpole, rotating glyph)."""

from .confounding import (
    T1,
    T2,
    ConfoundingSpec,
    action_categories,
    action_category,
    confounded_policy,
    confounded_reward,
    corrupt,
    sample_extra_reward,
    sample_extra_rewards,
)
from .dataset import (
    SPLITS,
    DatasetFormatError,
    SequenceDataset,
    Trajectory,
    generate_dataset,
    generate_split,
    read_header,
    read_split,
    split_path,
    write_split,
)
from .kernels import (
    ActionRangeError,
    CartPoleState,
    GlyphState,
    PendulumState,
    render,
    rotate_nearest,
    step_cartpole,
    step_glyph,
    step_pendulum,
    wrap_angle,
)

__all__ = [
    "T1",
    "T2",
    "SPLITS",
    "ActionRangeError",
    "CartPoleState",
    "ConfoundingSpec",
    "DatasetFormatError",
    "GlyphState",
    "PendulumState",
    "SequenceDataset",
    "Trajectory",
    "action_categories",
    "action_category",
    "confounded_policy",
    "confounded_reward",
    "corrupt",
    "generate_dataset",
    "generate_split",
    "read_header",
    "read_split",
    "render",
    "rotate_nearest",
    "sample_extra_reward",
    "sample_extra_rewards",
    "split_path",
    "step_cartpole",
    "step_glyph",
    "step_pendulum",
    "wrap_angle",
    "write_split",
]
