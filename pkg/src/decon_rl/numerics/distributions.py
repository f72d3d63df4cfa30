"""Diagonal Gaussians: log-density, closed-form KL and reparameterized draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

VAR_FLOOR = 1e-8
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class DiagGaussian:
    mean: Tensor
    var: Tensor

    def __post_init__(self):
        if self.mean.shape != self.var.shape:
            raise ad.ShapeError("DiagGaussian", self.mean.shape, self.var.shape)

    @classmethod
    def from_head(cls, mean: Tensor, raw_var: Tensor) -> DiagGaussian:
        """Build from an unconstrained variance head (softplus, floored at 1e-8)."""
        return cls(mean, ad.clamp_min(ad.softplus(raw_var), VAR_FLOOR))

    @classmethod
    def standard(cls, shape: tuple[int, ...]) -> DiagGaussian:
        return cls(Tensor(np.zeros(shape)), Tensor(np.ones(shape)))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mean.shape

    def detach(self) -> DiagGaussian:
        return DiagGaussian(self.mean.detach(), self.var.detach())


def _reduce(t: Tensor, axis) -> Tensor:
    return ad.sum_(t) if axis is None else ad.sum_(t, axis=axis)


def gaussian_logpdf(x, g: DiagGaussian, axis=None) -> Tensor:
    """Sum of per-coordinate log N(x | mean, var); ``axis`` limits the reduction."""
    x = ad.as_tensor(x)
    if x.shape != g.mean.shape:
        raise ad.ShapeError("gaussian_logpdf", x.shape, g.mean.shape)
    var = ad.clamp_min(g.var, VAR_FLOOR)
    terms = -0.5 * (ad.log(var) + LOG_2PI) - ad.square(x - g.mean) / (2.0 * var)
    return _reduce(terms, axis)


def kl_diag_gaussians(q: DiagGaussian, p: DiagGaussian, axis=None) -> Tensor:
    if q.shape != p.shape:
        raise ad.ShapeError("kl_diag_gaussians", q.shape, p.shape)
    qv = ad.clamp_min(q.var, VAR_FLOOR)
    pv = ad.clamp_min(p.var, VAR_FLOOR)
    terms = 0.5 * (ad.log(pv) - ad.log(qv)) + (qv + ad.square(q.mean - p.mean)) / (2.0 * pv) - 0.5
    return _reduce(terms, axis)


def reparam_sample(g: DiagGaussian, rng: np.random.Generator) -> Tensor:
    """mean + sqrt(var) * eps; eps is drawn from ``rng`` and carries no gradient."""
    eps = rng.standard_normal(g.shape)
    return g.mean + ad.sqrt(ad.clamp_min(g.var, VAR_FLOOR)) * eps


def logpdf_np(x: np.ndarray, mean: np.ndarray, var: np.ndarray, axis=-1) -> np.ndarray:
    var = np.maximum(var, VAR_FLOOR)
    return np.sum(-0.5 * (np.log(var) + LOG_2PI) - (x - mean) ** 2 / (2.0 * var), axis=axis)
