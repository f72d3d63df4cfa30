"""Binary-confounder machinery shared by every benchmark.

Category 0 is T1 (the better treatment) and category 1 is T2. Component 0 of the
extra-reward mixture is R1, component 1 is R2.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..causal import DiscreteCPT

T1, T2 = 0, 1

ACTION_BOUND = {"pendulum": 2.0, "glyph": math.pi / 4, "cartpole": 1.0}
CATEGORY_BOUNDARY = {"pendulum": 1.0, "glyph": math.pi / 8, "cartpole": 0.5}


@dataclass(frozen=True)
class ConfoundingSpec:
    p_u: float = 0.2
    p_T1_given_u: tuple[float, float] = (0.24, 0.77)
    # p(R1 | category, u) indexed [category][u]
    mixture_probs: tuple[tuple[float, float], tuple[float, float]] = ((0.93, 0.73), (0.87, 0.69))
    mu_R1: float = -1.0
    mu_R2: float = -200.0
    sigma: float = 2.0
    action_category_boundary: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "p_T1_given_u", tuple(float(p) for p in self.p_T1_given_u))
        object.__setattr__(self, "mixture_probs", tuple(tuple(float(p) for p in row) for row in self.mixture_probs))
        probs = [self.p_u, *self.p_T1_given_u, *(p for row in self.mixture_probs for p in row)]
        if len(self.p_T1_given_u) != 2 or len(self.mixture_probs) != 2 or any(len(r) != 2 for r in self.mixture_probs):
            raise ValueError("p_T1_given_u must have 2 entries and mixture_probs must be 2x2")
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("ConfoundingSpec probabilities must lie in [0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def boundary(self, kind: str) -> float:
        if self.action_category_boundary is not None:
            return self.action_category_boundary
        return CATEGORY_BOUNDARY[kind]

    def p_R1(self, category: int, u: int) -> float:
        return self.mixture_probs[category][u]

    def expected_extra_reward(self, category: int, u: int) -> float:
        p = self.p_R1(category, u)
        return p * self.mu_R1 + (1.0 - p) * self.mu_R2

    def to_cpt(self) -> DiscreteCPT:
        """The same structure as an exact table: u -> category -> component."""
        pu = [1.0 - self.p_u, self.p_u]
        pa = [[p, 1.0 - p] for p in self.p_T1_given_u]
        py = [[[self.p_R1(c, u), 1.0 - self.p_R1(c, u)] for c in (T1, T2)] for u in (0, 1)]
        return DiscreteCPT(pu, pa, py, [self.mu_R1, self.mu_R2], ("T1", "T2"), ("R1", "R2"))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_T1_given_u"] = list(self.p_T1_given_u)
        d["mixture_probs"] = [list(r) for r in self.mixture_probs]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ConfoundingSpec:
        return cls(**d)


def action_category(action, kind: str, spec: ConfoundingSpec) -> int:
    a = float(np.asarray(action).reshape(-1)[0])
    if kind == "cartpole":
        return T1 if a >= 0.5 else T2
    return T1 if abs(a) >= spec.boundary(kind) else T2


def action_categories(actions: np.ndarray, kind: str, spec: ConfoundingSpec) -> np.ndarray:
    """Vectorised ``action_category`` over an array of scalar actions."""
    a = np.asarray(actions, dtype=np.float64)
    if kind == "cartpole":
        return np.where(a >= 0.5, T1, T2)
    return np.where(np.abs(a) >= spec.boundary(kind), T1, T2)


def confounded_policy(u: int, spec: ConfoundingSpec, rng: np.random.Generator, kind: str = "pendulum") -> float:
    """Behaviour policy: the category depends on u only; magnitude uniform inside its band."""
    category = T1 if rng.random() < spec.p_T1_given_u[u] else T2
    if kind == "cartpole":
        return 1.0 if category == T1 else 0.0
    bound, edge = ACTION_BOUND[kind], spec.boundary(kind)
    magnitude = rng.uniform(edge, bound) if category == T1 else rng.uniform(0.0, edge)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return sign * magnitude


def sample_extra_reward(category: int, u: int, spec: ConfoundingSpec, rng: np.random.Generator) -> float:
    component_r1 = rng.random() < spec.p_R1(category, u)
    mu = spec.mu_R1 if component_r1 else spec.mu_R2
    return mu + spec.sigma * rng.standard_normal()


def sample_extra_rewards(
    categories: np.ndarray, u: np.ndarray | int, spec: ConfoundingSpec, rng: np.random.Generator
) -> np.ndarray:
    """Vectorised ``sample_extra_reward`` over arrays of categories and confounder bits."""
    cat = np.asarray(categories, dtype=np.int64)
    uu = np.broadcast_to(np.asarray(u, dtype=np.int64), cat.shape)
    p = np.asarray(spec.mixture_probs)[cat, uu]
    mu = np.where(rng.random(cat.shape) < p, spec.mu_R1, spec.mu_R2)
    return mu + spec.sigma * rng.standard_normal(cat.shape)


def confounded_reward(
    r_o: float, action, u: int, spec: ConfoundingSpec, rng: np.random.Generator, kind: str = "pendulum"
) -> float:
    """r = r_o + r_c with r_c drawn from the (category, u) Gaussian mixture."""
    return r_o + sample_extra_reward(action_category(action, kind, spec), u, spec, rng)


def corrupt(frame: np.ndarray, rng: np.random.Generator, flip_prob: float = 0.2) -> np.ndarray:
    """Binarise at 0.5, then flip every pixel independently with ``flip_prob``."""
    binary = (np.asarray(frame) >= 0.5).astype(np.float64)
    flips = rng.random(binary.shape) < flip_prob
    return np.where(flips, 1.0 - binary, binary)

