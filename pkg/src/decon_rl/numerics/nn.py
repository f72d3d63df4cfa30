"""Small layer library on top of the autodiff engine.

Layers register their weights into a shared ``ParamSet`` under dotted names so
that a whole model is one ordered name -> Tensor mapping (checkpoint order is
registration order).
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

Activation = Callable[[Tensor], Tensor]


class ParamSet(OrderedDict):
    """Ordered name -> Tensor registry with deterministic Glorot initialisation."""

    def __init__(self, rng: np.random.Generator | None = None):
        super().__init__()
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def create(self, name: str, shape: tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        t = Tensor(self.rng.uniform(-limit, limit, size=shape), requires_grad=True)
        self[name] = t
        return t

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.zeros(shape), requires_grad=True)
        self[name] = t
        return t

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {k: v.grad for k, v in self.items() if v.grad is not None}

    def zero_grad(self) -> None:
        for v in self.values():
            v.grad = None

    def count(self) -> int:
        return int(sum(v.size for v in self.values()))


class Linear:
    def __init__(self, params: ParamSet, name: str, n_in: int, n_out: int):
        self.w = params.create(f"{name}.w", (n_in, n_out), n_in, n_out)
        self.b = params.zeros(f"{name}.b", (n_out,))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.matmul(x, self.w) + self.b


class LayerNorm:
    """Per-item normalisation over the last axis with a learned gain and bias."""

    def __init__(self, params: ParamSet, name: str, dim: int, eps: float = 1e-5):
        self.gain = params.zeros(f"{name}.gain", (dim,))
        self.gain.data[:] = 1.0
        self.bias = params.zeros(f"{name}.bias", (dim,))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        centred = x - ad.mean(x, axis=-1, keepdims=True)
        var = ad.mean(ad.square(centred), axis=-1, keepdims=True)
        return centred / ad.sqrt(var + self.eps) * self.gain + self.bias


class MLP:
    """Stack of Linear layers, each followed by ``act`` (softplus by default).

    With ``norm`` every activation is followed by a ``LayerNorm``.
    """

    def __init__(
        self,
        params: ParamSet,
        name: str,
        n_in: int,
        widths: Sequence[int],
        act: Activation = ad.softplus,
        norm: bool = False,
    ):
        self.layers = []
        self.norms = []
        for i, w in enumerate(widths):
            self.layers.append(Linear(params, f"{name}.{i}", n_in, w))
            if norm:
                self.norms.append(LayerNorm(params, f"{name}.{i}.ln", w))
            n_in = w
        self.out_dim = n_in
        self.act = act

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = self.act(layer(x))
            if self.norms:
                x = self.norms[i](x)
        return x


class Conv2d:
    def __init__(
        self,
        params: ParamSet,
        name: str,
        c_in: int,
        c_out: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
    ):
        fan_in = c_in * kernel * kernel
        self.w = params.create(f"{name}.w", (c_out, c_in, kernel, kernel), fan_in, c_out * kernel * kernel)
        self.b = params.zeros(f"{name}.b", (c_out,))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class LSTM:
    """Single-layer LSTM unrolled over a python list of (B, n_in) inputs."""

    def __init__(self, params: ParamSet, name: str, n_in: int, hidden: int):
        self.hidden = hidden
        self.w = params.create(f"{name}.w", (n_in, 4 * hidden), n_in, 4 * hidden)
        self.u = params.create(f"{name}.u", (hidden, 4 * hidden), hidden, 4 * hidden)
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0  # forget-gate bias
        self.b = params.zeros(f"{name}.b", (4 * hidden,))
        self.b.data[:] = bias

    def __call__(self, inputs: Sequence[Tensor], reverse: bool = False) -> list[Tensor]:
        return self.run_stacked(ad.concat(list(inputs), axis=0), len(inputs), reverse)

    def run_stacked(self, stacked: Tensor, n_steps: int, reverse: bool = False) -> list[Tensor]:
        """Same as ``__call__`` for time-major input of shape (n_steps * B, n_in)."""
        batch = stacked.shape[0] // n_steps
        H = self.hidden
        # project all steps with one matmul
        proj = ad.matmul(stacked, self.w) + self.b
        h = Tensor(np.zeros((batch, H)))
        c = Tensor(np.zeros((batch, H)))
        outs: list[Tensor | None] = [None] * n_steps
        order = range(n_steps - 1, -1, -1) if reverse else range(n_steps)
        for t in order:
            gates = proj[t * batch : (t + 1) * batch] + ad.matmul(h, self.u)
            i = ad.sigmoid(gates[:, :H])
            f = ad.sigmoid(gates[:, H : 2 * H])
            g = ad.tanh(gates[:, 2 * H : 3 * H])
            o = ad.sigmoid(gates[:, 3 * H :])
            c = f * c + i * g
            h = o * ad.tanh(c)
            outs[t] = h
        return outs  # type: ignore[return-value]
