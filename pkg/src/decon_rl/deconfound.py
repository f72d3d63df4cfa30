"""Interventional (do-operator) rewards and the conditional rewards a naive learner sees.

Two reward models share one small interface:

* ``TableRewardModel`` wraps an exact discrete table (confounder -> action
  category -> reward component). The state z is ignored, so it doubles as the
  contextual oracle environment and as ground truth for the Monte-Carlo path.
* ``LearnedRewardModel`` wraps a fitted sequence model and reads rewards off the
  mean of p(r | z, a, u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .causal import EXPECTATION, DiscreteCPT, default_cpt
from .numerics import autodiff as ad

U_SOURCES = ("prior", "posterior")
DEFAULT_N_U = 200


class MissingEvidenceError(ValueError):
    pass


class InfiniteConfounderSpaceError(ValueError):
    pass


@dataclass
class DoRewardEstimate:
    """Monte-Carlo do-reward; ``mean`` and ``std_error`` are arrays when queried for a batch of states."""

    mean: float | np.ndarray
    std_error: float | np.ndarray
    n_samples: int
    u_source: str

    def to_dict(self) -> dict:
        return {
            "mean": np.asarray(self.mean).tolist(),
            "std_error": np.asarray(self.std_error).tolist(),
            "n_samples": self.n_samples,
            "u_source": self.u_source,
        }


def _as_batch(z, a) -> tuple[np.ndarray, np.ndarray, bool]:
    z = np.asarray(z, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    single = z.ndim <= 1
    z2 = np.atleast_2d(z) if z.ndim else z.reshape(1, 1)
    a2 = a.reshape(z2.shape[0], -1)
    return z2, a2, single


class TableRewardModel:
    """Exact reward model over a discrete table; actions are mapped to table columns.

    ``categorise`` turns raw actions (shape (B, D_a)) into column indices; by
    default the action's first coordinate is already the column index.
    """

    def __init__(self, cpt: DiscreteCPT | None = None, categorise: Callable[[np.ndarray], np.ndarray] | None = None):
        self.cpt = cpt if cpt is not None else default_cpt()
        self.categorise = categorise or (lambda a: np.asarray(a)[..., 0].astype(np.int64))
        self.strata = self.cpt.stratum_values(EXPECTATION)  # (n_u, n_a)

    @property
    def n_u(self) -> int:
        return self.cpt.confounder_probs.shape[0]

    def columns(self, a: np.ndarray) -> np.ndarray:
        cols = np.asarray(self.categorise(np.asarray(a, dtype=np.float64)), dtype=np.int64)
        if np.any(cols < 0) or np.any(cols >= self.cpt.n_actions):
            raise ValueError(f"action categories out of range for a table with {self.cpt.n_actions} actions")
        return cols

    def reward_means(self, z: np.ndarray, a: np.ndarray, u: np.ndarray) -> np.ndarray:
        """E[r | a, u] for B states and N confounder draws each: u has shape (B, N) -> (B, N)."""
        cols = self.columns(a).reshape(-1)
        return self.strata[np.asarray(u, dtype=np.int64), cols[:, None]]

    def sample_prior_u(self, b: int, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.n_u, size=(b, n), p=self.cpt.confounder_probs)

    def posterior_u_probs(self, evidence: np.ndarray) -> np.ndarray:
        """p(u | observed action categories) for each row of ``evidence`` (B, K)."""
        ev = np.atleast_2d(np.asarray(evidence, dtype=np.int64))
        log_p = np.log(self.cpt.confounder_probs)[None, :] + np.log(self.cpt.action_probs[:, ev]).sum(axis=-1).T
        log_p -= log_p.max(axis=-1, keepdims=True)
        p = np.exp(log_p)
        return p / p.sum(axis=-1, keepdims=True)

    def sample_posterior_u(self, evidence, b: int, n: int, rng: np.random.Generator) -> np.ndarray:
        p = self.posterior_u_probs(evidence)
        if p.shape[0] == 1 and b > 1:
            p = np.repeat(p, b, axis=0)
        cdf = np.cumsum(p, axis=-1)
        draws = rng.random((b, n))
        return (draws[..., None] > cdf[:, None, :]).sum(axis=-1).clip(max=self.n_u - 1)

    def exact_do(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        return self.cpt.confounder_probs @ self.strata[:, self.columns(a).reshape(-1)]

    def exact_conditional(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        """E[r | observed action category]: u weighted by p(u | a) instead of p(u)."""
        cols = self.columns(a).reshape(-1)
        joint = self.cpt.confounder_probs[:, None] * self.cpt.action_probs[:, cols]
        return (joint * self.strata[:, cols]).sum(axis=0) / joint.sum(axis=0)


class LearnedRewardModel:
    """Reward queries against a fitted model (``decon_rl.model.Model``); rewards are denormalised."""

    def __init__(self, model):
        self.model = model

    @property
    def has_u(self) -> bool:
        return self.model.use_u

    def _gen_r(self, z: np.ndarray, a: np.ndarray, u: np.ndarray | None) -> np.ndarray:
        with ad.no_grad():
            m = self.model.gen_r(z, a, u).mean.data[:, 0]
        return self.model.denormalise_reward(m)

    def reward_means(self, z: np.ndarray, a: np.ndarray, u: np.ndarray) -> np.ndarray:
        """u has shape (B, N, D_u) -> (B, N) reward means."""
        b, n = u.shape[:2]
        zz = np.repeat(z, n, axis=0)
        aa = np.repeat(a, n, axis=0)
        return self._gen_r(zz, aa, u.reshape(b * n, -1)).reshape(b, n)

    def sample_prior_u(self, b: int, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.model.sample_prior_u(b * n, rng).reshape(b, n, -1)

    def sample_posterior_u(self, evidence, b: int, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draws from q(u | x, a, r); ``evidence`` is a ``Batch`` of one or B sequences."""
        with ad.no_grad():
            q = self.model.infer_u(*evidence.time_major(), evidence.T)
        mean, var = q.mean.data, q.var.data
        if mean.shape[0] == 1 and b > 1:
            mean, var = np.repeat(mean, b, axis=0), np.repeat(var, b, axis=0)
        eps = rng.standard_normal((b, n, mean.shape[-1]))
        return mean[:, None, :] + np.sqrt(var)[:, None, :] * eps

    def u_codes(self) -> tuple[np.ndarray, np.ndarray]:
        """All hard codes of a Bernoulli-prior u and their prior probabilities."""
        if self.model.u_prior != "bernoulli":
            raise InfiniteConfounderSpaceError("exact do-reward needs a finite confounder space (Bernoulli u prior)")
        d, p = self.model.dims.D_u, self.model.u_prior_p
        codes = ((np.arange(2**d)[:, None] >> np.arange(d)[None, :]) & 1).astype(np.float64)
        k = codes.sum(axis=1)
        return codes, p**k * (1.0 - p) ** (d - k)

    def exact_do(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        codes, probs = self.u_codes()
        u = np.broadcast_to(codes, (z.shape[0],) + codes.shape)
        return self.reward_means(z, a, u) @ probs


def do_reward_mc(
    model,
    z,
    a,
    n: int = DEFAULT_N_U,
    u_source: str = "prior",
    rng: np.random.Generator | None = None,
    evidence=None,
) -> DoRewardEstimate:
    """Average of E[r | z, a, u_i] over N confounder draws u_i (prior by default).

    ``z`` / ``a`` may be single vectors or batches of B rows; the result is then
    per row. The posterior source needs ``evidence`` (a ``Batch`` for learned
    models, observed action categories for tables).
    """
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    if u_source not in U_SOURCES:
        raise ValueError(f"u_source must be one of {U_SOURCES}")
    rng = rng if rng is not None else np.random.default_rng()
    z2, a2, single = _as_batch(z, a)
    b = z2.shape[0]
    if isinstance(model, LearnedRewardModel) and not model.has_u:
        r = model.reward_means(z2, a2, np.zeros((b, 1, 0)))
        means, se = r[:, 0], np.zeros(b)
    else:
        if u_source == "posterior":
            if evidence is None:
                raise MissingEvidenceError("posterior u sampling needs an evidence sequence")
            u = model.sample_posterior_u(evidence, b, n, rng)
        else:
            u = model.sample_prior_u(b, n, rng)
        r = model.reward_means(z2, a2, u)
        means = r.mean(axis=1)
        se = r.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(b)
    if single:
        return DoRewardEstimate(float(means[0]), float(se[0]), n, u_source)
    return DoRewardEstimate(means, se, n, u_source)


def do_reward_exact(model, z, a) -> float | np.ndarray:
    """Sum over a finite confounder space of p(u) E[r | z, a, u]."""
    if not hasattr(model, "exact_do"):
        raise InfiniteConfounderSpaceError(f"{type(model).__name__} has no finite confounder space")
    z2, a2, single = _as_batch(z, a)
    out = np.asarray(model.exact_do(z2, a2), dtype=np.float64)
    return float(out[0]) if single else out


def conditional_reward(
    model, z, a, evidence=None, n: int = DEFAULT_N_U, rng: np.random.Generator | None = None
) -> float | np.ndarray:
    """Expected reward without the do-adjustment: what a learner that ignores confounding uses.

    Tables weight u by p(u | a). Learned models without u return the gen_r mean
    directly; with u, u is averaged under q(u | evidence).
    """
    z2, a2, single = _as_batch(z, a)
    if isinstance(model, TableRewardModel):
        out = model.exact_conditional(z2, a2)
    elif not model.has_u:
        out = model.reward_means(z2, a2, np.zeros((z2.shape[0], 1, 0)))[:, 0]
    else:
        if evidence is None:
            raise MissingEvidenceError("a model with u needs evidence to condition on")
        rng = rng if rng is not None else np.random.default_rng()
        out = model.reward_means(z2, a2, model.sample_posterior_u(evidence, z2.shape[0], n, rng)).mean(axis=1)
    return float(out[0]) if single else out
