"""Physical kernels and renderers for the three confounding benchmarks.

Pendulum and cartpole use the classic-control update equations (Euler steps);
the glyph kernel rotates one of eight fixed stencils. All renderers are pure
functions of the state and return float64 frames in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# pendulum
PEND_G = 10.0
PEND_M = 1.0
PEND_L = 1.0
PEND_DT = 0.05
PEND_MAX_SPEED = 8.0
PEND_MAX_TORQUE = 2.0

# cartpole
CP_GRAVITY = 9.8
CP_MASSCART = 1.0
CP_MASSPOLE = 0.1
CP_TOTAL_MASS = CP_MASSCART + CP_MASSPOLE
CP_HALF_LENGTH = 0.5
CP_POLEMASS_LENGTH = CP_MASSPOLE * CP_HALF_LENGTH
CP_FORCE = 10.0
CP_TAU = 0.02
CP_X_LIMIT = 2.4
CP_THETA_LIMIT = 12 * 2 * math.pi / 360

GLYPH_MAX_ACTION = math.pi / 4

ENV_KINDS = ("pendulum", "cartpole", "glyph")


class ActionRangeError(ValueError):
    pass


def wrap_angle(x: float) -> float:
    """Map an angle to (-pi, pi]."""
    y = math.fmod(x + math.pi, 2 * math.pi)
    if y <= 0:
        y += 2 * math.pi
    return y - math.pi


# ------------------------------------------------------------------ pendulum


@dataclass(frozen=True)
class PendulumState:
    theta: float
    theta_dot: float


def step_pendulum(state: PendulumState, a: float) -> tuple[PendulumState, float]:
    if abs(a) > PEND_MAX_TORQUE:
        raise ActionRangeError(f"pendulum torque {a} outside [-2, 2]")
    th, thdot = state.theta, state.theta_dot
    r_o = -(wrap_angle(th) ** 2 + 0.1 * thdot**2 + 0.001 * a**2)
    accel = -3 * PEND_G / (2 * PEND_L) * math.sin(th + math.pi) + 3.0 / (PEND_M * PEND_L**2) * a
    new_thdot = min(max(thdot + accel * PEND_DT, -PEND_MAX_SPEED), PEND_MAX_SPEED)
    new_th = wrap_angle(th + new_thdot * PEND_DT)
    return PendulumState(new_th, new_thdot), r_o


def reset_pendulum(rng: np.random.Generator) -> PendulumState:
    return PendulumState(wrap_angle(rng.uniform(-math.pi, math.pi)), rng.uniform(-1.0, 1.0))


# ------------------------------------------------------------------ cartpole


@dataclass(frozen=True)
class CartPoleState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float


def step_cartpole(state: CartPoleState, a: int) -> tuple[CartPoleState, float, bool]:
    if a not in (0, 1):
        raise ActionRangeError(f"cartpole action must be 0 or 1, got {a}")
    force = CP_FORCE if a == 1 else -CP_FORCE
    cos, sin = math.cos(state.theta), math.sin(state.theta)
    temp = (force + CP_POLEMASS_LENGTH * state.theta_dot**2 * sin) / CP_TOTAL_MASS
    theta_acc = (CP_GRAVITY * sin - cos * temp) / (
        CP_HALF_LENGTH * (4.0 / 3.0 - CP_MASSPOLE * cos**2 / CP_TOTAL_MASS)
    )
    x_acc = temp - CP_POLEMASS_LENGTH * theta_acc * cos / CP_TOTAL_MASS
    new = CartPoleState(
        state.x + CP_TAU * state.x_dot,
        state.x_dot + CP_TAU * x_acc,
        state.theta + CP_TAU * state.theta_dot,
        state.theta_dot + CP_TAU * theta_acc,
    )
    done = abs(new.x) > CP_X_LIMIT or abs(new.theta) > CP_THETA_LIMIT
    return new, 1.0, done


def reset_cartpole(rng: np.random.Generator) -> CartPoleState:
    return CartPoleState(*rng.uniform(-0.05, 0.05, size=4))


# --------------------------------------------------------------------- glyph


@dataclass(frozen=True)
class GlyphState:
    rotation: float
    glyph_id: int


def step_glyph(state: GlyphState, a: float) -> tuple[GlyphState, float]:
    if abs(a) > GLYPH_MAX_ACTION + 1e-12:
        raise ActionRangeError(f"glyph rotation {a} outside [-pi/4, pi/4]")
    rot = wrap_angle(state.rotation + a)
    return GlyphState(rot, state.glyph_id), -abs(rot)


def reset_glyph(rng: np.random.Generator) -> GlyphState:
    return GlyphState(wrap_angle(rng.uniform(-math.pi, math.pi)), int(rng.integers(8)))


_GLYPH_ART = [
    [".XXXXX.", "XX...XX", "XX...XX", "XX...XX", "XX...XX", "XX...XX", ".XXXXX."],
    ["...XX..", "..XXX..", ".XXXX..", "...XX..", "...XX..", "...XX..", ".XXXXXX"],
    [".XXXXX.", "XX...XX", ".....XX", "...XXX.", ".XXX...", "XX.....", "XXXXXXX"],
    ["XXXXXX.", ".....XX", ".....XX", "..XXXX.", ".....XX", ".....XX", "XXXXXX."],
    ["XX..XX.", "XX..XX.", "XX..XX.", "XXXXXXX", "....XX.", "....XX.", "....XX."],
    ["XXXXXXX", "XX.....", "XXXXXX.", ".....XX", ".....XX", "XX...XX", ".XXXXX."],
    [".XXXXX.", "XX.....", "XX.....", "XXXXXX.", "XX...XX", "XX...XX", ".XXXXX."],
    ["XXXXXXX", ".....XX", "....XX.", "...XX..", "..XX...", "..XX...", "..XX..."],
]

GLYPH_STENCILS = np.array(
    [[[1.0 if c == "X" else 0.0 for c in row] for row in art] for art in _GLYPH_ART]
)


def glyph_canvas(glyph_id: int, h: int, w: int) -> np.ndarray:
    """Unrotated stencil scaled (nearest neighbour) into the middle of an h x w frame."""
    side = max(3, int(round(0.6 * min(h, w))))
    stencil = GLYPH_STENCILS[glyph_id]
    idx = (np.arange(side) * stencil.shape[0] // side).astype(int)
    scaled = stencil[np.ix_(idx, idx)]
    canvas = np.zeros((h, w))
    top, left = (h - side) // 2, (w - side) // 2
    canvas[top : top + side, left : left + side] = scaled
    return canvas


def rotate_nearest(img: np.ndarray, angle: float) -> np.ndarray:
    """Rotate ``img`` about its centre by ``angle`` (counter-clockwise on screen)."""
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = math.cos(angle), math.sin(angle)
    # inverse map: output pixel -> source pixel (screen y axis points down)
    sx = cx + c * dx - s * dy
    sy = cy + s * dx + c * dy
    si, sj = np.rint(sy).astype(int), np.rint(sx).astype(int)
    inside = (si >= 0) & (si < h) & (sj >= 0) & (sj < w)
    out = np.zeros_like(img)
    out[inside] = img[si[inside], sj[inside]]
    return out


def _segment_intensity(h: int, w: int, p0: tuple[float, float], p1: tuple[float, float], width: float) -> np.ndarray:
    """Anti-aliased line: intensity falls off linearly with distance to the segment."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    (y0, x0), (y1, x1) = p0, p1
    vy, vx = y1 - y0, x1 - x0
    length2 = vy * vy + vx * vx
    t = np.clip(((yy - y0) * vy + (xx - x0) * vx) / max(length2, 1e-12), 0.0, 1.0)
    d = np.hypot(yy - (y0 + t * vy), xx - (x0 + t * vx))
    return np.clip(width + 0.5 - d, 0.0, 1.0)


def render(kind: str, state, h: int, w: int) -> np.ndarray:
    if h < 8 or w < 8:
        raise ValueError(f"frames must be at least 8x8, got {h}x{w}")
    if kind == "pendulum":
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        length = 0.4 * min(h, w)
        tip = (cy - length * math.cos(state.theta), cx + length * math.sin(state.theta))
        return _segment_intensity(h, w, (cy, cx), tip, width=0.75)
    if kind == "cartpole":
        frame = np.zeros((h, w))
        row = 0.75 * (h - 1)
        col = (w - 1) / 2.0 * (1.0 + state.x / CP_X_LIMIT)
        half = max(1.0, w / 10.0)
        cart = _segment_intensity(h, w, (row, col - half), (row, col + half), width=0.75)
        length = 0.45 * h
        tip = (row - length * math.cos(state.theta), col + length * math.sin(state.theta))
        pole = _segment_intensity(h, w, (row, col), tip, width=0.5)
        return np.maximum(frame, np.maximum(cart, pole))
    if kind == "glyph":
        return rotate_nearest(glyph_canvas(state.glyph_id, h, w), state.rotation)
    raise ValueError(f"unknown env kind {kind!r}")


def reset(kind: str, rng: np.random.Generator):
    if kind == "pendulum":
        return reset_pendulum(rng)
    if kind == "cartpole":
        return reset_cartpole(rng)
    if kind == "glyph":
        return reset_glyph(rng)
    raise ValueError(f"unknown env kind {kind!r}")
