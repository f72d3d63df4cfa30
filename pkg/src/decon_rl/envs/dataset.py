"""Confounded sequence datasets: generation and the binary file format.

File layout (little-endian)::

    b"DRLD" | uint32 header length | JSON header | N fixed-size records

Each record holds frames (T*H*W float32, row-major), actions (T*D_a float64),
rewards (T float64), u (uint8) and block_start (uint16).
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .confounding import ConfoundingSpec, confounded_policy, confounded_reward, corrupt

MAGIC = b"DRLD"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")
SQUARE = 2
BLOCK_LEN = 3
FLIP_PROB = 0.2


class DatasetFormatError(ValueError):
    pass


@dataclass
class Trajectory:
    obs: np.ndarray  # (T, H, W)
    actions: np.ndarray  # (T, D_a)
    rewards: np.ndarray  # (T,) rewards r_2..r_{T+1}
    u_true: int
    block_start: int
    clean_obs: np.ndarray | None = None  # noise-free frames, kept in memory only

    def __post_init__(self):
        T = self.obs.shape[0]
        if self.actions.shape[0] != T or self.rewards.shape[0] != T:
            raise ValueError(
                f"inconsistent trajectory lengths: obs {T}, actions {self.actions.shape[0]}, rewards {self.rewards.shape[0]}"
            )


@dataclass
class SequenceDataset:
    """A whole split held in memory as stacked arrays."""

    obs: np.ndarray  # (N, T, H, W) float64
    actions: np.ndarray  # (N, T, D_a)
    rewards: np.ndarray  # (N, T)
    u: np.ndarray  # (N,)
    block_start: np.ndarray  # (N,)
    header: dict

    def __len__(self) -> int:
        return self.obs.shape[0]

    @property
    def env_kind(self) -> str:
        return self.header["env_kind"]

    @property
    def reward_range(self) -> tuple[float, float]:
        return float(self.header["reward_min"]), float(self.header["reward_max"])

    def subset(self, idx) -> SequenceDataset:
        idx = np.asarray(idx)
        return SequenceDataset(
            self.obs[idx], self.actions[idx], self.rewards[idx], self.u[idx], self.block_start[idx], dict(self.header)
        )


def action_dim(kind: str) -> int:
    return 1


def add_square_block(frames: np.ndarray, start: int) -> np.ndarray:
    """Overwrite the top-left 2x2 patch of three consecutive frames with intensity 1."""
    out = frames.copy()
    out[start : start + BLOCK_LEN, :SQUARE, :SQUARE] = 1.0
    return out


def simulate_trajectory(
    kind: str, spec: ConfoundingSpec, T: int, H: int, W: int, rng: np.random.Generator
) -> Trajectory:
    if T < BLOCK_LEN:
        raise ValueError(f"T must be at least {BLOCK_LEN} to hold the square block, got {T}")
    if H < 8 or W < 8:
        raise ValueError(f"frames must be at least 8x8, got {H}x{W}")
    u = int(rng.random() < spec.p_u)
    state = kernels.reset(kind, rng)
    frames = np.empty((T, H, W))
    clean = np.empty((T, H, W))
    actions = np.empty((T, action_dim(kind)))
    rewards = np.empty(T)
    for t in range(T):
        clean[t] = kernels.render(kind, state, H, W)
        frames[t] = corrupt(clean[t], rng, FLIP_PROB)
        a = confounded_policy(u, spec, rng, kind)
        if kind == "pendulum":
            state, r_o = kernels.step_pendulum(state, a)
        elif kind == "glyph":
            state, r_o = kernels.step_glyph(state, a)
        else:
            state, r_o, done = kernels.step_cartpole(state, int(a))
            if done:
                state = kernels.reset_cartpole(rng)
        actions[t] = a
        rewards[t] = confounded_reward(r_o, a, u, spec, rng, kind)
    start = int(rng.integers(0, T - BLOCK_LEN + 1))
    return Trajectory(
        add_square_block(frames, start), actions, rewards, u, start, (add_square_block(clean, start) >= 0.5).astype(np.float64)
    )


def _child_rng(seed: int, split: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, split, index]))


def _simulate_indexed(args) -> Trajectory:
    kind, spec_dict, T, H, W, seed, split, index = args
    spec = ConfoundingSpec.from_dict(spec_dict)
    return simulate_trajectory(kind, spec, T, H, W, _child_rng(seed, split, index))


def generate_split(
    kind: str, spec: ConfoundingSpec, n: int, T: int, H: int, W: int, seed: int, split: int = 0, workers: int = 1
) -> list[Trajectory]:
    """Sequence i always uses the child seed (seed, split, i); order is by index."""
    if kind not in kernels.ENV_KINDS:
        raise ValueError(f"unknown env kind {kind!r}; expected one of {kernels.ENV_KINDS}")
    jobs = [(kind, spec.to_dict(), T, H, W, seed, split, i) for i in range(n)]
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_simulate_indexed, jobs, chunksize=max(1, n // (4 * workers))))
    return [_simulate_indexed(j) for j in jobs]


def _record_dtype(T: int, H: int, W: int, d_a: int) -> np.dtype:
    return np.dtype(
        [
            ("frames", "<f4", (T, H, W)),
            ("actions", "<f8", (T, d_a)),
            ("rewards", "<f8", (T,)),
            ("u", "u1"),
            ("block_start", "<u2"),
        ]
    )


def write_split(path: str | Path, trajectories: list[Trajectory], header: dict) -> None:
    T, H, W = header["T"], header["H"], header["W"]
    rec = np.zeros(len(trajectories), dtype=_record_dtype(T, H, W, header["D_a"]))
    for i, tr in enumerate(trajectories):
        rec[i] = (tr.obs.astype(np.float32), tr.actions, tr.rewards, tr.u_true, tr.block_start)
    head = json.dumps({**header, "n_records": len(trajectories)}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(rec.tobytes())


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def _read_header(fh, path) -> dict:
    if fh.read(4) != MAGIC:
        raise DatasetFormatError(f"{path}: not a dataset file (bad magic)")
    (n,) = struct.unpack("<I", fh.read(4))
    header = json.loads(fh.read(n).decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format version {header.get('format_version')}")
    return header


def read_split(path: str | Path) -> SequenceDataset:
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        body = fh.read()
    dtype = _record_dtype(header["T"], header["H"], header["W"], header["D_a"])
    if len(body) != dtype.itemsize * header["n_records"]:
        raise DatasetFormatError(f"{path}: expected {header['n_records']} records, body has {len(body)} bytes")
    rec = np.frombuffer(body, dtype=dtype)
    return SequenceDataset(
        obs=rec["frames"].astype(np.float64),
        actions=rec["actions"].copy(),
        rewards=rec["rewards"].copy(),
        u=rec["u"].astype(np.int64),
        block_start=rec["block_start"].astype(np.int64),
        header=header,
    )


def split_path(out_dir: str | Path, split: str) -> Path:
    return Path(out_dir) / f"{split}.drld"


def generate_dataset(
    kind: str,
    spec: ConfoundingSpec,
    counts: tuple[int, int, int] | dict[str, int],
    T: int,
    H: int,
    W: int,
    seed: int,
    out_dir: str | Path,
    workers: int = 1,
) -> dict[str, Path]:
    """Write train/val/test files; reward normalisation bounds come from the train split."""
    if isinstance(counts, dict):
        counts = tuple(int(counts[s]) for s in SPLITS)
    if any(c < 0 for c in counts):
        raise ValueError("split counts must be non-negative")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = [generate_split(kind, spec, n, T, H, W, seed, i, workers) for i, n in enumerate(counts)]
    train_rewards = np.concatenate([tr.rewards for tr in splits[0]]) if splits[0] else np.zeros(1)
    header = {
        "format_version": FORMAT_VERSION,
        "env_kind": kind,
        "spec": spec.to_dict(),
        "T": T,
        "H": H,
        "W": W,
        "D_a": action_dim(kind),
        "counts": dict(zip(SPLITS, counts)),
        "seed": seed,
        "reward_min": float(train_rewards.min()),
        "reward_max": float(train_rewards.max()),
    }
    paths = {}
    for name, trajs in zip(SPLITS, splits):
        paths[name] = split_path(out_dir, name)
        write_split(paths[name], trajs, {**header, "split": name})
    return paths
