"""Reverse-mode autodiff, Gaussian utilities, Adam and a few layers."""

from .autodiff import ShapeError, Tensor, backward, no_grad
from .distributions import DiagGaussian, gaussian_logpdf, kl_diag_gaussians, reparam_sample
from .optim import AdamState, NonFiniteGradientError, adam_step

__all__ = [
    "AdamState",
    "DiagGaussian",
    "NonFiniteGradientError",
    "ShapeError",
    "Tensor",
    "adam_step",
    "backward",
    "gaussian_logpdf",
    "kl_diag_gaussians",
    "no_grad",
    "reparam_sample",
]
