"""Parametric functions of the sequential confounder model.

Naming follows the roles of the heads rather than their indices:

    dec_x   p(x_t | z_t, u)            sigmoid mean
    dec_a   p(a_t | z_t, u)            bound * tanh mean
    dec_r   p(r_t+1 | z_t, a_t, u)     sigmoid mean over normalised reward
    trans   p(z_t | z_t-1, a_t-1)      unconstrained mean
    enc_u   q(u | x, a, r)             bidirectional LSTM summary
    enc_z   q(z_t | z_t-1, a_t-1, .)   bidirectional LSTM + averaging combiner
    aux_a   q(a_t | x_t)
    aux_r   q(r_t+1 | x_t, a_t)

Every pair of (mean, variance) outputs shares all layers except the last
projection. Hidden layers use softplus.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from ..numerics import autodiff as ad
from ..numerics.autodiff import Tensor
from ..numerics.distributions import DiagGaussian
from ..numerics.nn import LSTM, MLP, Conv2d, LayerNorm, Linear, ParamSet

U_PRIORS = ("gaussian", "bernoulli")
# Raw bias of the posterior variance heads: softplus(-6) ~ 2.5e-3. Starting q(z), q(u)
# near-deterministic keeps the encoder signal above the sampling noise early on,
# otherwise the decoder learns to ignore z before the encoder has anything to say.
POSTERIOR_RAW_VAR_INIT = -6.0
# Pixels that are nearly deterministic (the lit block) otherwise drive the frame
# variance to the global 1e-8 floor, after which one wrong pixel costs ~1e7 nats.
FRAME_VAR_FLOOR = 1e-3


@dataclass(frozen=True)
class ModelDims:
    D_x: int
    D_a: int = 1
    D_r: int = 1
    D_z: int = 50
    D_u: int = 2
    T: int = 5
    frame_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.frame_shape is not None:
            object.__setattr__(self, "frame_shape", tuple(int(v) for v in self.frame_shape))
        for name in ("D_x", "D_a", "D_r", "D_z", "T"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.D_u < 0:
            raise ValueError(f"D_u must be non-negative, got {self.D_u}")
        if self.D_z >= self.D_x:
            raise ValueError(f"D_z must be smaller than D_x (got D_z={self.D_z}, D_x={self.D_x})")
        if self.frame_shape is not None and self.frame_shape[0] * self.frame_shape[1] != self.D_x:
            raise ValueError(f"frame_shape {self.frame_shape} does not match D_x={self.D_x}")

    @classmethod
    def for_frames(cls, h: int, w: int, **kw) -> ModelDims:
        return cls(D_x=h * w, frame_shape=(h, w), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frame_shape"] = list(self.frame_shape) if self.frame_shape else None
        return d


@dataclass(frozen=True)
class ModelArch:
    hidden: int = 100
    lstm_hidden: int = 100
    dec_hidden: int = 256
    conv_channels: tuple[int, ...] = (16, 32)
    kernel: int = 5
    layer_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d


class FC:
    """Linear layer followed by softplus (and a layer norm when ``norm``)."""

    def __init__(self, params: ParamSet, name: str, n_in: int, n_out: int, norm: bool = False):
        self.lin = Linear(params, name, n_in, n_out)
        self.ln = LayerNorm(params, f"{name}.ln", n_out) if norm else None
        self.out_dim = n_out

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.softplus(self.lin(x))
        return self.ln(y) if self.ln is not None else y


class FrameEncoder:
    """Strided convolutions (or an MLP for flat inputs) followed by one FC layer."""

    def __init__(self, params: ParamSet, name: str, dims: ModelDims, arch: ModelArch):
        self.shape = dims.frame_shape
        self.out_dim = arch.hidden
        if self.shape is None:
            self.mlp = MLP(params, f"{name}.mlp", dims.D_x, [arch.hidden], norm=arch.layer_norm)
            return
        self.convs, self.norms, self.maps = [], [], []
        h, w = self.shape
        c_in, pad = 1, arch.kernel // 2
        for i, c in enumerate(arch.conv_channels):
            self.convs.append(Conv2d(params, f"{name}.conv{i}", c_in, c, arch.kernel, stride=2, padding=pad))
            h = (h + 2 * pad - arch.kernel) // 2 + 1
            w = (w + 2 * pad - arch.kernel) // 2 + 1
            c_in = c
            self.maps.append((c, h, w))
            if arch.layer_norm:
                self.norms.append(LayerNorm(params, f"{name}.conv{i}.ln", c * h * w))
        self.flat = c_in * h * w
        self.fc = FC(params, f"{name}.fc", self.flat, arch.hidden, arch.layer_norm)

    def __call__(self, x: Tensor) -> Tensor:
        if self.shape is None:
            return self.mlp(x)
        n = x.shape[0]
        y = ad.reshape(x, (n, 1) + self.shape)
        for i, conv in enumerate(self.convs):
            y = ad.softplus(conv(y))
            if self.norms:
                # normalise each item's whole feature map
                y = ad.reshape(self.norms[i](ad.reshape(y, (n, -1))), (n,) + self.maps[i])
        return self.fc(ad.reshape(y, (n, self.flat)))


class GaussianHead:
    """Parallel branches -> concat -> FC body -> paired mean / variance projections."""

    def __init__(
        self,
        params: ParamSet,
        name: str,
        branches: dict[str, Callable],
        body: list[int],
        out_dim: int,
        mean_act: str | None,
        bound: float = 1.0,
        norm: bool = False,
    ):
        self.branches = branches
        n_in = sum(b.out_dim for b in branches.values())
        self.body = MLP(params, f"{name}.body", n_in, body, norm=norm)
        self.mean = Linear(params, f"{name}.mean", self.body.out_dim, out_dim)
        self.var = Linear(params, f"{name}.var", self.body.out_dim, out_dim)
        self.mean_act = mean_act
        self.bound = bound

    def __call__(self, **inputs: Tensor) -> DiagGaussian:
        feats = [branch(inputs[key]) for key, branch in self.branches.items()]
        h = self.body(feats[0] if len(feats) == 1 else ad.concat(feats, axis=-1))
        m = self.mean(h)
        if self.mean_act == "sigmoid":
            m = ad.sigmoid(m)
        elif self.mean_act == "tanh":
            m = self.bound * ad.tanh(m)
        return DiagGaussian.from_head(m, self.var(h))


class SequenceEncoder:
    """Per-step features of (x_t, a_t, r_t+1) fed through forward and backward LSTMs.

    Action and reward features are a quarter of the frame width and go straight
    into the LSTMs; a wide merge network in between let them swamp the frame
    signal and slowed learning several-fold.
    """

    def __init__(self, params: ParamSet, name: str, dims: ModelDims, arch: ModelArch):
        side = max(1, arch.hidden // 4)
        self.frames = FrameEncoder(params, f"{name}.x", dims, arch)
        self.fa = FC(params, f"{name}.a", dims.D_a, side, arch.layer_norm)
        self.fr = FC(params, f"{name}.r", dims.D_r, side, arch.layer_norm)
        n_in = self.frames.out_dim + 2 * side
        self.fwd = LSTM(params, f"{name}.fwd", n_in, arch.lstm_hidden)
        self.bwd = LSTM(params, f"{name}.bwd", n_in, arch.lstm_hidden)

    def __call__(self, x_tm: Tensor, a_tm: Tensor, r_tm: Tensor, T: int) -> tuple[list[Tensor], list[Tensor]]:
        feats = ad.concat([self.frames(x_tm), self.fa(a_tm), self.fr(r_tm)], axis=-1)
        return self.fwd.run_stacked(feats, T), self.bwd.run_stacked(feats, T, reverse=True)


def combine(tz: Tensor, ta: Tensor, h_left: Tensor, h_right: Tensor) -> Tensor:
    """Average of the four hidden contributions used by q(z_t | ...)."""
    return 0.25 * (tz + ta + h_left + h_right)


class Model:
    """The confounder model (``include_u=True``) or its ablation without u."""

    def __init__(
        self,
        dims: ModelDims,
        arch: ModelArch | None = None,
        include_u: bool = True,
        include_action_likelihood: bool = True,
        action_bound: float = 2.0,
        reward_range: tuple[float, float] = (0.0, 1.0),
        u_prior: str = "gaussian",
        u_prior_p: float = 0.5,
        seed: int = 0,
    ):
        if u_prior not in U_PRIORS:
            raise ValueError(f"u_prior must be one of {U_PRIORS}")
        lo, hi = float(reward_range[0]), float(reward_range[1])
        if not hi > lo:
            raise ValueError(f"reward_range must satisfy max > min, got {reward_range}")
        self.dims = dims
        self.arch = arch or ModelArch()
        self.include_u = include_u
        self.use_u = include_u and dims.D_u > 0
        self.include_action_likelihood = include_action_likelihood
        self.action_bound = float(action_bound)
        self.reward_range = (lo, hi)
        self.u_prior = u_prior
        self.u_prior_p = float(u_prior_p)
        self.seed = seed
        self.params = ParamSet(np.random.default_rng(seed))
        self._build()

    def _build(self) -> None:
        P, d, arch = self.params, self.dims, self.arch
        h, lh = arch.hidden, arch.lstm_hidden

        ln = arch.layer_norm

        def branches(prefix: str, **named: int) -> dict[str, FC]:
            return {k: FC(P, f"{prefix}.{k}", n, h, ln) for k, n in named.items()}

        u_dim = {"u": d.D_u} if self.use_u else {}
        self.dec_x = GaussianHead(
            P, "dec_x", branches("dec_x", z=d.D_z, **u_dim), [arch.dec_hidden], d.D_x, "sigmoid", norm=ln
        )
        self.dec_a = GaussianHead(
            P, "dec_a", branches("dec_a", z=d.D_z, **u_dim), [2 * h, 2 * h], d.D_a, "tanh", self.action_bound, ln
        )
        self.dec_r = GaussianHead(
            P, "dec_r", branches("dec_r", z=d.D_z, a=d.D_a, **u_dim), [h, h], d.D_r, "sigmoid", norm=ln
        )
        self.trans = GaussianHead(P, "trans", branches("trans", z=d.D_z, a=d.D_a), [h, h], d.D_z, None, norm=ln)
        if self.use_u:
            self.enc_u = SequenceEncoder(P, "enc_u", d, arch)
            self.enc_u_mean = Linear(P, "enc_u.mean", 2 * lh, d.D_u)
            self.enc_u_var = Linear(P, "enc_u.var", 2 * lh, d.D_u)
        self.enc_z = SequenceEncoder(P, "enc_z", d, arch)
        self.comb_z = Linear(P, "enc_z.comb_z", d.D_z, lh)
        self.comb_a = Linear(P, "enc_z.comb_a", d.D_a, lh)
        self.init_z = P.zeros("enc_z.init_z", (lh,))
        self.init_a = P.zeros("enc_z.init_a", (lh,))
        self.enc_z_mean = Linear(P, "enc_z.mean", lh, d.D_z)
        self.enc_z_var = Linear(P, "enc_z.var", lh, d.D_z)
        self.enc_z_var.b.data[:] = POSTERIOR_RAW_VAR_INIT
        if self.use_u:
            self.enc_u_var.b.data[:] = POSTERIOR_RAW_VAR_INIT
        self.aux_a_net = GaussianHead(
            P, "aux_a", {"x": FrameEncoder(P, "aux_a.x", d, arch)}, [], d.D_a, "tanh", self.action_bound
        )
        aux_r_in = {"x": FrameEncoder(P, "aux_r.x", d, arch), "a": FC(P, "aux_r.a", d.D_a, h, ln)}
        self.aux_r_net = GaussianHead(P, "aux_r", aux_r_in, [h], d.D_r, "sigmoid", norm=ln)

    # ------------------------------------------------------------ priors

    def prior_z(self, n: int) -> DiagGaussian:
        return DiagGaussian.standard((n, self.dims.D_z))

    def prior_u(self, n: int) -> DiagGaussian:
        return DiagGaussian.standard((n, self.dims.D_u))

    def sample_prior_u(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draws of u for the do-reward average (Bernoulli variant gives hard 0/1 codes)."""
        if self.u_prior == "bernoulli":
            return (rng.random((n, self.dims.D_u)) < self.u_prior_p).astype(np.float64)
        return rng.standard_normal((n, self.dims.D_u))

    # -------------------------------------------------------- generative

    def _u(self, u):
        return {"u": ad.as_tensor(u)} if self.use_u else {}

    def gen_x(self, z, u=None) -> DiagGaussian:
        g = self.dec_x(z=ad.as_tensor(z), **self._u(u))
        return DiagGaussian(g.mean, ad.clamp_min(g.var, FRAME_VAR_FLOOR))

    def gen_a(self, z, u=None) -> DiagGaussian:
        return self.dec_a(z=ad.as_tensor(z), **self._u(u))

    def gen_r(self, z, a, u=None) -> DiagGaussian:
        return self.dec_r(z=ad.as_tensor(z), a=ad.as_tensor(a), **self._u(u))

    def gen_z_transition(self, z_prev, a_prev) -> DiagGaussian:
        return self.trans(z=ad.as_tensor(z_prev), a=ad.as_tensor(a_prev))

    # --------------------------------------------------------- inference

    def infer_u(self, x_tm: Tensor, a_tm: Tensor, r_tm: Tensor, T: int) -> DiagGaussian:
        if not self.use_u:
            raise RuntimeError("this model has no confounder u")
        _check_time_major(x_tm, a_tm, r_tm, T)
        fwd, bwd = self.enc_u(x_tm, a_tm, r_tm, T)
        summary = ad.concat([fwd[-1], bwd[0]], axis=-1)
        return DiagGaussian.from_head(self.enc_u_mean(summary), self.enc_u_var(summary))

    def z_states(self, x_tm: Tensor, a_tm: Tensor, r_tm: Tensor, T: int) -> tuple[list[Tensor], list[Tensor]]:
        _check_time_major(x_tm, a_tm, r_tm, T)
        return self.enc_z(x_tm, a_tm, r_tm, T)

    def infer_z_step(self, z_prev, a_prev, h_left: Tensor, h_right: Tensor) -> DiagGaussian:
        if z_prev is None:
            tz, ta = self.init_z, self.init_a
        else:
            tz = ad.tanh(self.comb_z(ad.as_tensor(z_prev)))
            ta = ad.tanh(self.comb_a(ad.as_tensor(a_prev)))
        h = combine(tz, ta, h_left, h_right)
        return DiagGaussian.from_head(self.enc_z_mean(h), self.enc_z_var(h))

    def aux_a(self, x) -> DiagGaussian:
        return self.aux_a_net(x=ad.as_tensor(x))

    def aux_r(self, x, a) -> DiagGaussian:
        return self.aux_r_net(x=ad.as_tensor(x), a=ad.as_tensor(a))

    # ------------------------------------------------------------ helpers

    def normalise_reward(self, r: np.ndarray) -> np.ndarray:
        lo, hi = self.reward_range
        return (np.asarray(r, dtype=np.float64) - lo) / (hi - lo)

    def denormalise_reward(self, r: np.ndarray) -> np.ndarray:
        lo, hi = self.reward_range
        return np.asarray(r, dtype=np.float64) * (hi - lo) + lo

    @property
    def variant(self) -> str:
        return "decon" if self.include_u else "alt"

    def config(self) -> dict:
        return {
            "dims": self.dims.to_dict(),
            "arch": self.arch.to_dict(),
            "include_u": self.include_u,
            "include_action_likelihood": self.include_action_likelihood,
            "action_bound": self.action_bound,
            "reward_range": list(self.reward_range),
            "u_prior": self.u_prior,
            "u_prior_p": self.u_prior_p,
            "seed": self.seed,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> Model:
        dims = dict(cfg["dims"])
        if dims.get("frame_shape") is not None:
            dims["frame_shape"] = tuple(dims["frame_shape"])
        return cls(
            ModelDims(**dims),
            ModelArch(**cfg["arch"]),
            include_u=cfg["include_u"],
            include_action_likelihood=cfg["include_action_likelihood"],
            action_bound=cfg["action_bound"],
            reward_range=tuple(cfg["reward_range"]),
            u_prior=cfg["u_prior"],
            u_prior_p=cfg["u_prior_p"],
            seed=cfg["seed"],
        )


def _check_time_major(x_tm: Tensor, a_tm: Tensor, r_tm: Tensor, T: int) -> None:
    n = x_tm.shape[0]
    if T < 1 or n % T or a_tm.shape[0] != n or r_tm.shape[0] != n:
        raise ValueError(
            f"sequence length mismatch: x has {x_tm.shape[0]} rows, a {a_tm.shape[0]}, r {r_tm.shape[0]}, T={T}"
        )

