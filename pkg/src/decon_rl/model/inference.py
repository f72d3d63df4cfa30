"""Using a fitted model: reconstruction, posterior u, counterfactual rollouts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import autodiff as ad
from ..numerics.autodiff import Tensor
from ..numerics.distributions import reparam_sample
from .elbo import Batch
from .networks import Model


def posterior_u(model: Model, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of q(u | x, a, r) for every sequence in the batch."""
    with ad.no_grad():
        q = model.infer_u(*batch.time_major(), batch.T)
    return q.mean.data.copy(), q.var.data.copy()


def sample_posterior(model: Model, batch: Batch, rng: np.random.Generator) -> tuple[list[np.ndarray], np.ndarray | None]:
    """One ancestral draw of z_1..z_T (and u) from the inference network."""
    B, T = batch.B, batch.T
    with ad.no_grad():
        x_tm, a_tm, r_tm = batch.time_major()
        u = reparam_sample(model.infer_u(x_tm, a_tm, r_tm, T), rng).data if model.use_u else None
        h_left, h_right = model.z_states(x_tm, a_tm, r_tm, T)
        zs: list[np.ndarray] = []
        for t in range(T):
            if t == 0:
                q = model.infer_z_step(None, None, h_left[0], h_right[0])
            else:
                q = model.infer_z_step(zs[-1], batch.a[:, t - 1], h_left[t], h_right[t])
            zs.append(reparam_sample(q, rng).data)
    return zs, u


def reconstruct(model: Model, batch: Batch, rng: np.random.Generator) -> np.ndarray:
    """Decoded means of p(x_t | z_t, u) with z, u drawn from the posterior; shape of ``batch.x``."""
    zs, u = sample_posterior(model, batch, rng)
    with ad.no_grad():
        frames = [model.gen_x(z, u).mean.data for z in zs]
    return np.stack(frames, axis=1)


@dataclass
class Rollout:
    frames: np.ndarray  # (N, horizon, D_x) predicted frames
    rewards: np.ndarray  # (N, horizon) predicted rewards, denormalised
    actions: np.ndarray  # (N, horizon, D_a) actions driving each transition
    inferred_action: np.ndarray  # (N, D_a) aux-network guess for the input frame
    inferred_reward: np.ndarray  # (N,) aux-network guess, denormalised


def counterfactual_rollout(
    model: Model,
    frames: np.ndarray,
    horizon: int,
    rng: np.random.Generator,
    actions: np.ndarray | None = None,
    sample: bool = False,
) -> Rollout:
    """Predict ``horizon`` future frames from single unseen frames (shape (N, D_x)).

    The aux networks fill in the missing action and reward, z (and u) are inferred
    from that length-1 evidence, and the transition model is then rolled forward
    under ``actions`` (shape (N, horizon, D_a)), or uniformly random actions when
    none are given. Transitions use their mean unless ``sample`` is set.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    n, d_a = x.shape[0], model.dims.D_a
    if actions is None:
        actions = rng.uniform(-model.action_bound, model.action_bound, size=(n, horizon, d_a))
    actions = np.asarray(actions, dtype=np.float64).reshape(n, horizon, d_a)
    with ad.no_grad():
        xt = Tensor(x)
        a_hat = model.aux_a(xt).mean
        r_hat = model.aux_r(xt, a_hat).mean
        if model.use_u:
            u = model.infer_u(xt, a_hat, r_hat, 1).mean
        else:
            u = None
        h_left, h_right = model.z_states(xt, a_hat, r_hat, 1)
        z = model.infer_z_step(None, None, h_left[0], h_right[0]).mean
        out_frames, out_rewards = [], []
        for k in range(horizon):
            a = Tensor(actions[:, k])
            out_rewards.append(model.gen_r(z, a, u).mean.data[:, 0])
            p = model.gen_z_transition(z, a)
            z = reparam_sample(p, rng) if sample else p.mean
            out_frames.append(model.gen_x(z, u).mean.data)
    return Rollout(
        frames=np.stack(out_frames, axis=1),
        rewards=model.denormalise_reward(np.stack(out_rewards, axis=1)),
        actions=actions,
        inferred_action=a_hat.data.copy(),
        inferred_reward=model.denormalise_reward(r_hat.data[:, 0]),
    )


def square_present(frames: np.ndarray, shape: tuple[int, int], size: int = 2, threshold: float = 0.5) -> np.ndarray:
    """Whether the top-left ``size`` x ``size`` patch is lit; works on (..., D_x) arrays."""
    f = np.asarray(frames).reshape(frames.shape[:-1] + tuple(shape))
    return f[..., :size, :size].mean(axis=(-1, -2)) >= threshold


def violates_consecutiveness(on: np.ndarray) -> np.ndarray:
    """True where a lit run re-appears after going dark (an on, off, on pattern); (..., T) -> (...)."""
    on = np.asarray(on, dtype=bool)
    seen_on = np.logical_or.accumulate(on, axis=-1)
    went_off = np.logical_or.accumulate(seen_on & ~on, axis=-1)
    came_back = went_off[..., :-1] & on[..., 1:]
    return came_back.any(axis=-1)
