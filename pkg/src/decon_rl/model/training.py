"""Minibatch training of the model with Adam."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..numerics.autodiff import backward
from ..numerics.optim import AdamState, adam_step
from .elbo import TERMS, Batch, ElboBreakdown, loss_drl
from .networks import Model

CSV_COLUMNS = TERMS + ("loss",)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 1e-4
    seed: int = 0
    objective: str = "drl"
    kl_warmup_frac: float = 0.0
    clip_norm: float = 5.0


def _mean_breakdown(rows: list[ElboBreakdown], objective: str) -> ElboBreakdown:
    keys = TERMS + ("total",)
    return ElboBreakdown(**{k: float(np.mean([getattr(r, k) for r in rows])) for k in keys}, objective=objective)


def train_step(
    model: Model, batch: Batch, state: AdamState, cfg: TrainConfig, rng: np.random.Generator, kl_weight: float = 1.0
) -> ElboBreakdown:
    loss, bd = loss_drl(model, batch, rng, include_aux=cfg.objective == "drl", kl_weight=kl_weight)
    backward(loss)
    grads = model.params.grads()
    adam_step(model.params.arrays(), grads, state, cfg.lr, clip_norm=cfg.clip_norm)
    model.params.zero_grad()
    return bd


def train_model(
    model: Model,
    data: Batch,
    cfg: TrainConfig,
    log_csv: str | Path | None = None,
    on_epoch: Callable[[int, ElboBreakdown], None] | None = None,
) -> list[ElboBreakdown]:
    """Train for ``cfg.epochs`` passes over ``data``; one averaged breakdown per epoch.

    Shuffling and the reparameterisation noise both come from ``cfg.seed``, so
    reruns are bit-identical.
    """
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    history: list[ElboBreakdown] = []
    warm_steps = int(cfg.kl_warmup_frac * cfg.epochs)
    writer = None
    fh = None
    if log_csv is not None:
        fh = open(log_csv, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
    try:
        for epoch in range(cfg.epochs):
            kl_weight = min(1.0, (epoch + 1) / warm_steps) if warm_steps > 0 else 1.0
            perm = rng.permutation(data.B)
            rows = []
            for start in range(0, data.B, cfg.batch_size):
                rows.append(train_step(model, data.take(perm[start : start + cfg.batch_size]), state, cfg, rng, kl_weight))
            bd = _mean_breakdown(rows, cfg.objective)
            history.append(bd)
            if writer is not None:
                writer.writerow([repr(getattr(bd, k)) for k in TERMS] + [repr(bd.loss)])
                fh.flush()
            if on_epoch is not None:
                on_epoch(epoch, bd)
    finally:
        if fh is not None:
            fh.close()
    return history
