"""Variational objectives: ELBO with and without u, the auxiliary-augmented loss,
and an importance-sampling log-likelihood estimate used as a test oracle."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..numerics import autodiff as ad
from ..numerics.autodiff import Tensor
from ..numerics.distributions import gaussian_logpdf, kl_diag_gaussians, reparam_sample
from .networks import Model

TERMS = ("recon_x", "recon_a", "recon_r", "kl_u", "kl_z1", "kl_z_transitions", "aux_a", "aux_r")
KL_TERMS = ("kl_u", "kl_z1", "kl_z_transitions")
OBJECTIVES = ("elbo", "drl")


class NonFiniteTermError(FloatingPointError):
    def __init__(self, term: str):
        self.term = term
        super().__init__(f"non-finite value in ELBO term {term!r}")


@dataclass
class Batch:
    """Aligned arrays for B sequences; rewards are already normalised to [0, 1]."""

    x: np.ndarray  # (B, T, D_x)
    a: np.ndarray  # (B, T, D_a)
    r: np.ndarray  # (B, T, D_r)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64)
        if self.r.ndim == 2:
            self.r = self.r[..., None]
        if not (self.x.shape[:2] == self.a.shape[:2] == self.r.shape[:2]):
            raise ValueError(
                f"sequence length mismatch: x {self.x.shape[:2]}, a {self.a.shape[:2]}, r {self.r.shape[:2]}"
            )

    @property
    def B(self) -> int:
        return self.x.shape[0]

    @property
    def T(self) -> int:
        return self.x.shape[1]

    def time_major(self) -> tuple[Tensor, Tensor, Tensor]:
        """(T * B, D) tensors with step t occupying rows t*B .. (t+1)*B."""

        def tm(v: np.ndarray) -> Tensor:
            return Tensor(np.ascontiguousarray(v.transpose(1, 0, 2)).reshape(-1, v.shape[2]))

        return tm(self.x), tm(self.a), tm(self.r)

    def take(self, idx) -> Batch:
        return Batch(self.x[idx], self.a[idx], self.r[idx])

    def repeat(self, k: int) -> Batch:
        return Batch(np.repeat(self.x, k, axis=0), np.repeat(self.a, k, axis=0), np.repeat(self.r, k, axis=0))

    @classmethod
    def from_dataset(cls, model: Model, ds, idx=None) -> Batch:
        idx = np.arange(len(ds)) if idx is None else np.asarray(idx)
        obs = ds.obs[idx]
        return cls(obs.reshape(obs.shape[0], obs.shape[1], -1), ds.actions[idx], model.normalise_reward(ds.rewards[idx]))


@dataclass
class ElboBreakdown:
    recon_x: float
    recon_a: float
    recon_r: float
    kl_u: float
    kl_z1: float
    kl_z_transitions: float
    aux_a: float
    aux_r: float
    total: float
    objective: str = "elbo"

    @property
    def loss(self) -> float:
        return -self.total

    def values(self) -> dict[str, float]:
        d = asdict(self)
        d.pop("objective")
        return d


def _per_time_sum(t: Tensor, T: int) -> Tensor:
    """(T * B,) time-major values -> (B,) sums over time."""
    return ad.sum_(ad.reshape(t, (T, t.shape[0] // T)), axis=0)


def sequence_terms(model: Model, batch: Batch, rng: np.random.Generator, log_weights: bool = False) -> dict[str, Tensor]:
    """Per-sequence (shape (B,)) ELBO pieces from one reparameterised sample per latent.

    With ``log_weights`` the result also holds ``log_w`` = log p(x, a, r, z, u) - log q(z, u),
    the single-proposal importance weight for the same samples.
    """
    B, T = batch.B, batch.T
    x_tm, a_tm, r_tm = batch.time_major()
    zero = Tensor(np.zeros(B))
    out: dict[str, Tensor] = {}
    log_ratio = zero

    if model.use_u:
        qu = model.infer_u(x_tm, a_tm, r_tm, T)
        u = reparam_sample(qu, rng)
        pu = model.prior_u(B)
        out["kl_u"] = kl_diag_gaussians(qu, pu, axis=-1)
        if log_weights:
            log_ratio = log_ratio + gaussian_logpdf(u, pu, axis=-1) - gaussian_logpdf(u, qu, axis=-1)
        u_tm = ad.concat([u] * T, axis=0)
    else:
        u_tm = None
        out["kl_u"] = zero

    h_left, h_right = model.z_states(x_tm, a_tm, r_tm, T)
    zs: list[Tensor] = []
    kl_trans = zero
    for t in range(T):
        if t == 0:
            q = model.infer_z_step(None, None, h_left[0], h_right[0])
            p = model.prior_z(B)
        else:
            a_prev = Tensor(batch.a[:, t - 1])
            q = model.infer_z_step(zs[-1], a_prev, h_left[t], h_right[t])
            p = model.gen_z_transition(zs[-1], a_prev)
        z = reparam_sample(q, rng)
        kl = kl_diag_gaussians(q, p, axis=-1)
        if t == 0:
            out["kl_z1"] = kl
        else:
            kl_trans = kl_trans + kl
        if log_weights:
            log_ratio = log_ratio + gaussian_logpdf(z, p, axis=-1) - gaussian_logpdf(z, q, axis=-1)
        zs.append(z)
    out["kl_z_transitions"] = kl_trans

    z_tm = ad.concat(zs, axis=0)
    out["recon_x"] = _per_time_sum(gaussian_logpdf(x_tm, model.gen_x(z_tm, u_tm), axis=-1), T)
    if model.include_action_likelihood:
        out["recon_a"] = _per_time_sum(gaussian_logpdf(a_tm, model.gen_a(z_tm, u_tm), axis=-1), T)
    else:
        out["recon_a"] = zero
    out["recon_r"] = _per_time_sum(gaussian_logpdf(r_tm, model.gen_r(z_tm, a_tm, u_tm), axis=-1), T)
    out["aux_a"] = _per_time_sum(gaussian_logpdf(a_tm, model.aux_a(x_tm), axis=-1), T)
    out["aux_r"] = _per_time_sum(gaussian_logpdf(r_tm, model.aux_r(x_tm, a_tm), axis=-1), T)
    if log_weights:
        out["log_w"] = out["recon_x"] + out["recon_a"] + out["recon_r"] + log_ratio
    return out


def per_item_elbo(terms: dict[str, Tensor]) -> Tensor:
    return terms["recon_x"] + terms["recon_a"] + terms["recon_r"] - terms["kl_u"] - terms["kl_z1"] - terms["kl_z_transitions"]


def compute_elbo(
    model: Model,
    batch: Batch,
    rng: np.random.Generator,
    objective: str = "elbo",
    kl_weight: float = 1.0,
) -> tuple[ElboBreakdown, Tensor]:
    """Batch-mean objective (to be maximised) and its breakdown.

    ``kl_weight`` scales the KL terms inside the returned tensor only (KL warm-up);
    the breakdown always reports the unweighted bound.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    terms = sequence_terms(model, batch, rng)
    means = {k: ad.mean(terms[k]) for k in TERMS}
    values = {}
    for k in TERMS:
        v = float(means[k].data)
        if not math.isfinite(v):
            raise NonFiniteTermError(k)
        if k in KL_TERMS and v < -1e-9:
            raise FloatingPointError(f"negative KL term {k}: {v}")
        values[k] = v
    recon = means["recon_x"] + means["recon_a"] + means["recon_r"]
    kl = means["kl_u"] + means["kl_z1"] + means["kl_z_transitions"]
    total = recon - kl_weight * kl
    total_value = values["recon_x"] + values["recon_a"] + values["recon_r"] - sum(values[k] for k in KL_TERMS)
    if objective == "drl":
        total = total + means["aux_a"] + means["aux_r"]
        total_value += values["aux_a"] + values["aux_r"]
    return ElboBreakdown(**values, total=total_value, objective=objective), total


def elbo_decon(model: Model, batch: Batch, rng: np.random.Generator) -> tuple[ElboBreakdown, Tensor]:
    if not model.include_u:
        raise ValueError("elbo_decon needs a model built with include_u=True")
    return compute_elbo(model, batch, rng, "elbo")


def elbo_alt(model: Model, batch: Batch, rng: np.random.Generator) -> tuple[ElboBreakdown, Tensor]:
    if model.include_u:
        raise ValueError("elbo_alt needs a model built with include_u=False")
    return compute_elbo(model, batch, rng, "elbo")


def loss_drl(
    model: Model, batch: Batch, rng: np.random.Generator, include_aux: bool = True, kl_weight: float = 1.0
) -> tuple[Tensor, ElboBreakdown]:
    """Negative (ELBO + auxiliary log-likelihoods), averaged over the batch."""
    bd, total = compute_elbo(model, batch, rng, "drl" if include_aux else "elbo", kl_weight)
    return -total, bd


def _log_mean_exp(v: np.ndarray) -> tuple[float, float]:
    """log mean exp(v) and its delta-method standard error."""
    m = float(np.max(v))
    w = np.exp(v - m)
    est = m + math.log(float(np.mean(w)))
    se = float(np.std(w, ddof=1) / (np.mean(w) * math.sqrt(v.size))) if v.size > 1 else float("inf")
    return est, se


def importance_log_likelihood(
    model: Model, seq: Batch, n_proposals: int, rng: np.random.Generator
) -> tuple[float, float]:
    """log p(x, a, r) of a single sequence by importance sampling from the inference network."""
    if seq.B != 1:
        raise ValueError("importance_log_likelihood takes a single sequence")
    with ad.no_grad():
        lw = sequence_terms(model, seq.repeat(n_proposals), rng, log_weights=True)["log_w"].data
    return _log_mean_exp(lw)


def elbo_samples(model: Model, seq: Batch, n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent single-sample ELBO values for one sequence."""
    if seq.B != 1:
        raise ValueError("elbo_samples takes a single sequence")
    with ad.no_grad():
        return per_item_elbo(sequence_terms(model, seq.repeat(n), rng)).data.copy()
