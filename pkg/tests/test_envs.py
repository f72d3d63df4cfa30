import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decon_rl.envs import (
    T1,
    T2,
    ActionRangeError,
    CartPoleState,
    ConfoundingSpec,
    GlyphState,
    PendulumState,
    action_categories,
    action_category,
    confounded_policy,
    confounded_reward,
    corrupt,
    generate_dataset,
    generate_split,
    read_split,
    render,
    rotate_nearest,
    sample_extra_reward,
    sample_extra_rewards,
    step_cartpole,
    step_glyph,
    step_pendulum,
    wrap_angle,
)
from decon_rl.envs.kernels import glyph_canvas

SPEC = ConfoundingSpec()


# ------------------------------------------------------------------ kernels


def test_pendulum_equilibrium_and_goal_reward():
    s, _ = step_pendulum(PendulumState(math.pi, 0.0), 0.0)
    assert s.theta_dot == pytest.approx(0.0, abs=1e-12)
    _, r = step_pendulum(PendulumState(0.0, 0.0), 0.0)
    assert r == 0.0


def test_pendulum_one_step_by_hand():
    s, r = step_pendulum(PendulumState(0.0, 0.0), 2.0)
    assert s.theta_dot == pytest.approx(0.3, abs=1e-12)
    assert s.theta == pytest.approx(0.015, abs=1e-12)
    assert r == pytest.approx(-0.004, abs=1e-12)


def test_pendulum_rejects_large_torque():
    with pytest.raises(ActionRangeError):
        step_pendulum(PendulumState(0.0, 0.0), 2.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(-8, 8), st.floats(-2, 2))
def test_pendulum_state_stays_bounded(th, thdot, a):
    s, _ = step_pendulum(PendulumState(th, thdot), a)
    assert -math.pi < s.theta <= math.pi
    assert -8.0 <= s.theta_dot <= 8.0


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_cartpole_first_step_exact_fractions():
    s, r, done = step_cartpole(CartPoleState(0.0, 0.0, 0.0, 0.0), 1)
    # temp = 100/11, theta_acc = -600/41, x_acc = 4400/451
    assert s.x == 0.0 and s.theta == 0.0
    assert s.x_dot == pytest.approx(0.02 * 4400 / 451, abs=1e-12)
    assert s.theta_dot == pytest.approx(-0.02 * 600 / 41, abs=1e-12)
    assert r == 1.0 and not done


def test_cartpole_alternating_is_stable_and_falls_from_edge():
    s = CartPoleState(0.0, 0.0, 0.0, 0.0)
    for a in (1, 0):
        s, _, done = step_cartpole(s, a)
        assert not done
    s = CartPoleState(0.0, 0.0, math.radians(11.9), 2.0)
    for _ in range(10):
        s, _, done = step_cartpole(s, 0)
        if done:
            break
    assert done


def test_glyph_rewards():
    assert step_glyph(GlyphState(0.0, 0), 0.0)[1] == 0.0
    assert step_glyph(GlyphState(math.pi / 4, 0), math.pi / 4)[1] == pytest.approx(-math.pi / 2)
    assert step_glyph(GlyphState(-math.pi / 4, 0), -math.pi / 4)[1] == pytest.approx(-math.pi / 2)
    assert step_glyph(GlyphState(math.pi / 8, 0), -math.pi / 8)[1] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ActionRangeError):
        step_glyph(GlyphState(0.0, 0), 1.0)


# ---------------------------------------------------------------- rendering


def test_pendulum_upright_rod_is_above_centre():
    f = render("pendulum", PendulumState(0.0, 0.0), 16, 16)
    assert f[:8].sum() > f[8:].sum()
    assert f.min() >= 0.0 and f.max() <= 1.0
    np.testing.assert_array_equal(f, render("pendulum", PendulumState(0.0, 0.0), 16, 16))


@pytest.mark.parametrize("glyph_id", range(8))
def test_glyph_half_turn_matches_array_rotation(glyph_id):
    canvas = glyph_canvas(glyph_id, 16, 16)
    np.testing.assert_array_equal(render("glyph", GlyphState(math.pi, glyph_id), 16, 16), np.rot90(canvas, 2))
    np.testing.assert_array_equal(render("glyph", GlyphState(0.0, glyph_id), 16, 16), canvas)


def test_quarter_turn_matches_rot90():
    canvas = glyph_canvas(3, 16, 16)
    # counter-clockwise on screen is np.rot90 with k=1
    np.testing.assert_array_equal(rotate_nearest(canvas, math.pi / 2), np.rot90(canvas, 1))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["pendulum", "cartpole", "glyph"]), st.floats(-math.pi, math.pi), st.integers(0, 7))
def test_renderers_keep_corner_clear(kind, angle, gid):
    state = {
        "pendulum": PendulumState(angle, 0.0),
        "cartpole": CartPoleState(angle / 2, 0.0, angle / 15, 0.0),
        "glyph": GlyphState(angle, gid),
    }[kind]
    f = render(kind, state, 16, 16)
    assert f.min() >= 0.0 and f.max() <= 1.0
    # the square block lives in the top-left 2x2 corner
    assert np.all(f[:2, :2] < 0.5)


def test_render_rejects_tiny_frames():
    with pytest.raises(ValueError):
        render("pendulum", PendulumState(0.0, 0.0), 4, 16)


# ------------------------------------------------------------------ corrupt


def test_corrupt_without_noise_binarises(rng):
    f = rng.random((16, 16))
    np.testing.assert_array_equal(corrupt(f, rng, flip_prob=0.0), (f >= 0.5).astype(float))


def test_corrupt_flip_fraction(rng):
    out = corrupt(np.zeros((100, 100)), rng)
    assert abs(out.mean() - 0.2) < 0.02


def test_double_corruption_hamming_profile(rng):
    f = (rng.random((200, 200)) > 0.5).astype(float)
    twice = corrupt(corrupt(f, rng), rng)
    # two independent flips disagree with the original w.p. 2 p (1 - p)
    assert abs(np.mean(twice != f) - 2 * 0.2 * 0.8) < 0.01


# ---------------------------------------------------------------- confounding


def test_spec_defaults_equal_table():
    assert SPEC.p_u == 0.2
    assert SPEC.p_T1_given_u == (0.24, 0.77)
    assert SPEC.mixture_probs == ((0.93, 0.73), (0.87, 0.69))
    assert (SPEC.mu_R1, SPEC.mu_R2, SPEC.sigma) == (-1.0, -200.0, 2.0)


def test_spec_rejects_bad_probability():
    with pytest.raises(ValueError):
        ConfoundingSpec(p_u=1.2)


@pytest.mark.parametrize("u,expected", [(0, 0.24), (1, 0.77)])
def test_policy_category_frequencies(u, expected):
    rng = np.random.default_rng(u)
    acts = np.array([confounded_policy(u, SPEC, rng) for _ in range(100_000)])
    assert abs(np.mean(action_categories(acts, "pendulum", SPEC) == T1) - expected) < 0.01
    assert np.all(np.abs(acts) <= 2.0)


def test_degenerate_policy_stays_in_band(rng):
    spec = ConfoundingSpec(p_T1_given_u=(1.0, 1.0))
    for kind, lo, hi in (("pendulum", 1.0, 2.0), ("glyph", math.pi / 8, math.pi / 4)):
        acts = np.array([confounded_policy(0, spec, rng, kind) for _ in range(2000)])
        assert np.all((np.abs(acts) >= lo) & (np.abs(acts) <= hi))
    assert {confounded_policy(0, spec, rng, "cartpole") for _ in range(50)} == {1.0}


def test_degenerate_reward_is_exact(rng):
    spec = ConfoundingSpec(mixture_probs=((1.0, 1.0), (1.0, 1.0)), sigma=0.0)
    assert confounded_reward(-0.5, 1.5, 1, spec, rng) == -1.5


CELL_MEANS = [(T1, 0, -14.93), (T2, 1, -62.69), (T1, 1, -54.73), (T2, 0, -26.87)]


@pytest.mark.parametrize("cat,u,expected", CELL_MEANS)
def test_extra_reward_cell_means(cat, u, expected):
    # oracle: p mu_R1 + (1 - p) mu_R2
    p = SPEC.mixture_probs[cat][u]
    assert p * -1 + (1 - p) * -200 == pytest.approx(expected, abs=1e-12)
    assert SPEC.expected_extra_reward(cat, u) == pytest.approx(expected, abs=1e-12)
    rng = np.random.default_rng(10 * cat + u)
    draws = np.array([sample_extra_reward(cat, u, SPEC, rng) for _ in range(100_000)])
    assert abs(draws.mean() - expected) < 5 * draws.std() / math.sqrt(draws.size)


@pytest.mark.parametrize("cat,u,expected", CELL_MEANS[:2])
def test_extra_reward_mean_within_tenth(cat, u, expected):
    # the r_c std is up to ~92, so +-0.1 needs ~1e7 draws to sit beyond 3 standard errors
    draws = sample_extra_rewards(np.full(10_000_000, cat), u, SPEC, np.random.default_rng(7))
    assert abs(draws.mean() - expected) < 0.1


def test_category_boundaries():
    assert action_category(1.0, "pendulum", SPEC) == T1
    assert action_category(-0.999, "pendulum", SPEC) == T2
    assert action_category(math.pi / 8, "glyph", SPEC) == T1
    assert action_category(1, "cartpole", SPEC) == T1
    assert action_category(0, "cartpole", SPEC) == T2


def test_spec_to_cpt_matches_bundled_table():
    from decon_rl.causal import default_cpt

    a, b = SPEC.to_cpt(), default_cpt()
    np.testing.assert_allclose(a.confounder_probs, b.confounder_probs, atol=1e-15)
    np.testing.assert_allclose(a.action_probs, b.action_probs, atol=1e-15)
    np.testing.assert_allclose(a.outcome_probs, b.outcome_probs, atol=1e-15)


# ------------------------------------------------------------------ datasets


def test_dataset_structure(tmp_path):
    paths = generate_dataset("pendulum", SPEC, (10, 3, 2), 5, 16, 16, seed=3, out_dir=tmp_path)
    ds = read_split(paths["train"])
    assert len(ds) == 10
    assert ds.obs.shape == (10, 5, 16, 16)
    assert ds.actions.shape == (10, 5, 1)
    assert ds.rewards.shape == (10, 5)
    assert ds.u.shape == (10,)
    assert ds.header["format_version"] == 1
    assert ds.header["counts"] == {"train": 10, "val": 3, "test": 2}
    assert ds.reward_range[0] == ds.rewards.min()
    assert len(read_split(paths["test"])) == 2


def test_dataset_is_byte_identical(tmp_path):
    digests = []
    for run in ("a", "b"):
        paths = generate_dataset("glyph", SPEC, (8, 2, 2), 5, 16, 16, seed=11, out_dir=tmp_path / run)
        digests.append([hashlib.sha256(p.read_bytes()).hexdigest() for p in paths.values()])
    assert digests[0] == digests[1]


def test_parallel_generation_matches_serial():
    a = generate_split("glyph", SPEC, 6, 4, 8, 8, seed=2, workers=1)
    b = generate_split("glyph", SPEC, 6, 4, 8, 8, seed=2, workers=2)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.obs, y.obs)
        np.testing.assert_array_equal(x.rewards, y.rewards)


def test_block_squares_three_consecutive_frames():
    for tr in generate_split("pendulum", SPEC, 50, 5, 16, 16, seed=5):
        on = np.all(tr.obs[:, :2, :2] == 1.0, axis=(1, 2))
        assert on[tr.block_start : tr.block_start + 3].all()
        assert 0 <= tr.block_start <= 2


def test_confounder_marginal_and_category_marginal():
    trajs = generate_split("glyph", SPEC, 10_000, 3, 8, 8, seed=9)
    u = np.array([t.u_true for t in trajs])
    assert abs(u.mean() - 0.2) < 0.012
    acts = np.concatenate([t.actions[:, 0] for t in trajs])
    n = acts.size
    freq = np.mean(action_categories(acts, "glyph", SPEC) == T1)
    assert abs(freq - 0.346) < 5 * math.sqrt(0.346 * 0.654 / n)


def test_invalid_dims_raise(tmp_path):
    with pytest.raises(ValueError):
        generate_dataset("pendulum", SPEC, (2, 1, 1), 2, 16, 16, seed=0, out_dir=tmp_path)
    with pytest.raises(ValueError):
        generate_dataset("teapot", SPEC, (2, 1, 1), 5, 16, 16, seed=0, out_dir=tmp_path)
