import numpy as np
import pytest

from decon_rl.causal import DiscreteCPT, default_cpt
from decon_rl.deconfound import (
    DoRewardEstimate,
    InfiniteConfounderSpaceError,
    LearnedRewardModel,
    MissingEvidenceError,
    TableRewardModel,
    conditional_reward,
    do_reward_exact,
    do_reward_mc,
)
from decon_rl.model import Batch, Model, ModelArch, ModelDims

# Enumeration over the bundled table (see test_causal for the independent oracle):
DO_T1, DO_T2 = -22.890, -34.034
COND_T1, COND_T2 = -11.294980 / 0.346, -19.220700 / 0.654

Z = np.zeros(3)


def tiny_model(include_u=True, u_prior="gaussian", d_u=1, seed=0):
    dims = ModelDims(D_x=4, D_z=2, D_u=d_u if include_u else 0, T=3)
    arch = ModelArch(hidden=8, lstm_hidden=8, dec_hidden=8)
    return Model(dims, arch, include_u=include_u, reward_range=(-10.0, 5.0), u_prior=u_prior, seed=seed)


def tiny_batch(b=2, seed=0):
    r = np.random.default_rng(seed)
    return Batch(r.random((b, 3, 4)), r.uniform(-1, 1, (b, 3, 1)), r.random((b, 3)))


# ------------------------------------------------------------------ table


def test_exact_do_reward_on_bundled_table():
    m = TableRewardModel()
    assert do_reward_exact(m, Z, [0]) == pytest.approx(DO_T1, abs=1e-9)
    assert do_reward_exact(m, Z, [1]) == pytest.approx(DO_T2, abs=1e-9)


def test_conditional_reward_on_bundled_table():
    m = TableRewardModel()
    assert conditional_reward(m, Z, [0]) == pytest.approx(COND_T1, abs=1e-9)
    assert conditional_reward(m, Z, [1]) == pytest.approx(COND_T2, abs=1e-9)


def test_preference_reversal():
    m = TableRewardModel()
    do = [do_reward_exact(m, Z, [a]) for a in (0, 1)]
    cond = [conditional_reward(m, Z, [a]) for a in (0, 1)]
    assert int(np.argmax(do)) != int(np.argmax(cond))


def test_uniform_u_with_symmetric_rewards_gives_zero():
    cpt = DiscreteCPT(
        [0.5, 0.5],
        [[0.3, 0.7], [0.6, 0.4]],
        [[[1.0, 0.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]],
        [5.0, -5.0],
    )
    m = TableRewardModel(cpt)
    assert do_reward_exact(m, Z, [0]) == pytest.approx(0.0, abs=1e-12)
    assert do_reward_exact(m, Z, [1]) == pytest.approx(0.0, abs=1e-12)


def test_conditional_equals_do_without_confounding():
    base = default_cpt()
    cpt = DiscreteCPT(base.confounder_probs, [[0.4, 0.6], [0.4, 0.6]], base.outcome_probs, base.outcome_values)
    m = TableRewardModel(cpt)
    for a in (0, 1):
        assert conditional_reward(m, Z, [a]) == pytest.approx(do_reward_exact(m, Z, [a]), abs=1e-12)


def test_mc_single_draw_equals_that_draws_stratum():
    m = TableRewardModel()
    est = do_reward_mc(m, Z, [0], n=1, rng=np.random.default_rng(5))
    u = np.random.default_rng(5).choice(2, size=(1, 1), p=m.cpt.confounder_probs)[0, 0]
    assert est.mean == m.strata[u, 0]
    assert est.std_error == 0.0
    assert est.n_samples == 1


def test_mc_large_n_matches_enumeration():
    m = TableRewardModel()
    est = do_reward_mc(m, Z, [0], n=100_000, rng=np.random.default_rng(0))
    assert abs(est.mean - DO_T1) <= 5 * est.std_error


@pytest.mark.parametrize("n", [100, 1000, 10_000])
def test_mc_coverage_over_seeds(n):
    m = TableRewardModel()
    hits = 0
    for seed in range(100):
        est = do_reward_mc(m, Z, [1], n=n, rng=np.random.default_rng(seed))
        hits += abs(est.mean - DO_T2) <= 5 * est.std_error
    assert hits >= 99


def test_std_error_shrinks_as_inverse_sqrt_n():
    m = TableRewardModel()
    small = [do_reward_mc(m, Z, [0], n=100, rng=np.random.default_rng(s)).std_error for s in range(50)]
    big = [do_reward_mc(m, Z, [0], n=10_000, rng=np.random.default_rng(1000 + s)).std_error for s in range(50)]
    assert 8.0 <= np.mean(small) / np.mean(big) <= 12.5


def test_std_error_definition():
    m = TableRewardModel()
    rng = np.random.default_rng(3)
    est = do_reward_mc(m, Z, [0], n=50, rng=rng)
    u = np.random.default_rng(3).choice(2, size=(1, 50), p=m.cpt.confounder_probs)[0]
    r = m.strata[u, 0]
    assert est.mean == pytest.approx(r.mean())
    assert est.std_error == pytest.approx(r.std(ddof=1) / np.sqrt(50))


def test_batched_queries_match_single_ones():
    m = TableRewardModel()
    z = np.zeros((4, 3))
    a = np.array([[0], [1], [1], [0]])
    exact = do_reward_exact(m, z, a)
    assert exact == pytest.approx([DO_T1, DO_T2, DO_T2, DO_T1])
    est = do_reward_mc(m, z, a, n=10, rng=np.random.default_rng(0))
    assert isinstance(est, DoRewardEstimate) and est.mean.shape == (4,)


def test_posterior_source_needs_evidence():
    with pytest.raises(MissingEvidenceError):
        do_reward_mc(TableRewardModel(), Z, [0], n=10, u_source="posterior", rng=np.random.default_rng(0))


def test_table_posterior_matches_bayes():
    m = TableRewardModel()
    p = m.posterior_u_probs([[0, 1, 0]])[0]
    pu, pa = m.cpt.confounder_probs, m.cpt.action_probs
    unnorm = pu * pa[:, 0] * pa[:, 1] * pa[:, 0]
    assert p == pytest.approx(unnorm / unnorm.sum(), abs=1e-12)


def test_table_posterior_sampling_frequencies():
    m = TableRewardModel()
    ev = [[0, 0, 0, 0]]
    draws = m.sample_posterior_u(ev, 1, 200_000, np.random.default_rng(0))
    p1 = m.posterior_u_probs(ev)[0, 1]
    se = np.sqrt(p1 * (1 - p1) / draws.size)
    assert abs(draws.mean() - p1) < 5 * se


def test_unknown_u_source_rejected():
    with pytest.raises(ValueError):
        do_reward_mc(TableRewardModel(), Z, [0], u_source="guess")
    with pytest.raises(ValueError):
        do_reward_mc(TableRewardModel(), Z, [0], n=0)


# ---------------------------------------------------------------- learned


def test_model_ignoring_u_has_no_confounding_gap():
    model = tiny_model()
    # cut the u branch of the reward head: its features become constant in u
    model.params["dec_r.u.w"].data[:] = 0.0
    lm = LearnedRewardModel(model)
    z, a = np.array([0.3, -0.2]), np.array([0.5])
    est = do_reward_mc(lm, z, a, n=64, rng=np.random.default_rng(0))
    cond = conditional_reward(lm, z, a, evidence=tiny_batch(1), n=16, rng=np.random.default_rng(1))
    assert est.mean == pytest.approx(cond, abs=1e-9)
    assert est.std_error == pytest.approx(0.0, abs=1e-9)


def test_model_without_u_conditional_is_gen_r_mean():
    model = tiny_model(include_u=False)
    lm = LearnedRewardModel(model)
    z, a = np.array([0.3, -0.2]), np.array([0.5])
    expected = model.denormalise_reward(model.gen_r(z[None], a[None]).mean.data[0, 0])
    assert conditional_reward(lm, z, a) == pytest.approx(expected, abs=1e-12)
    assert do_reward_mc(lm, z, a).mean == pytest.approx(expected, abs=1e-12)


def test_learned_mc_matches_exact_for_bernoulli_u():
    model = tiny_model(u_prior="bernoulli", d_u=2, seed=3)
    lm = LearnedRewardModel(model)
    z, a = np.array([0.1, 0.4]), np.array([-0.3])
    exact = do_reward_exact(lm, z, a)
    est = do_reward_mc(lm, z, a, n=20_000, rng=np.random.default_rng(0))
    assert abs(est.mean - exact) <= 5 * est.std_error + 1e-12


def test_exact_needs_finite_u():
    with pytest.raises(InfiniteConfounderSpaceError):
        do_reward_exact(LearnedRewardModel(tiny_model()), np.zeros(2), [0.0])


def test_learned_posterior_source_uses_evidence():
    model = tiny_model()
    lm = LearnedRewardModel(model)
    est = do_reward_mc(lm, np.zeros(2), [0.2], n=32, u_source="posterior", rng=np.random.default_rng(0), evidence=tiny_batch(1))
    assert np.isfinite(est.mean) and est.u_source == "posterior"
    with pytest.raises(MissingEvidenceError):
        conditional_reward(lm, np.zeros(2), [0.2])
