import numpy as np
import pytest

from dcbacktest.hmm import (
    VARIANCE_FLOOR,
    DegenerateDataError,
    GaussianHmm,
    RegimeLabel,
    fit_baum_welch,
    label_regimes,
    predict_regime,
    read_model,
    state_posteriors,
    viterbi,
    write_model,
)
from oracles import viterbi_bruteforce


def _two_regime_obs(rng, n_blocks=10, block=50):
    parts = []
    for b in range(n_blocks):
        if b % 2 == 0:
            parts.append(rng.normal(1e-5, 1e-6, block))
        else:
            parts.append(rng.normal(1e-4, 1e-5, block))
    return np.abs(np.concatenate(parts))


def _random_model(rng, k=2):
    pi = rng.dirichlet(np.ones(k))
    a = np.vstack([rng.dirichlet(np.ones(k)) for _ in range(k)])
    means = rng.normal(0.0, 1.0, k)
    variances = np.exp(rng.uniform(-2, 1, k))
    return GaussianHmm(k, pi, a, means, variances)


def test_fit_recovers_block_means():
    rng = np.random.default_rng(42)
    obs = _two_regime_obs(rng)
    fit = fit_baum_welch(obs, seed=0)
    got = np.sort(fit.model.emission_means)
    assert abs(got[0] - 1e-5) / 1e-5 < 0.10
    assert abs(got[1] - 1e-4) / 1e-4 < 0.10
    fit.model.validate()


def test_fit_loglik_monotone():
    rng = np.random.default_rng(7)
    for trial in range(10):
        obs = _two_regime_obs(rng, n_blocks=6, block=30)
        fit = fit_baum_welch(obs, seed=trial)
        diffs = np.diff(fit.ll_history)
        assert (diffs >= -1e-8).all()


def test_fit_zero_iterations_returns_seeded_init():
    obs = np.array([1e-5, 5e-5, 1e-4])
    fit = fit_baum_welch(obs, n_states=2, max_iters=0, seed=3)
    m = fit.model
    # Deterministic start: sorted-half means in original units, uniform
    # start probabilities, 0.9 self-transitions.
    srt = np.sort(obs)
    np.testing.assert_allclose(m.initial_probs, [0.5, 0.5])
    np.testing.assert_allclose(m.transitions, [[0.9, 0.1], [0.1, 0.9]])
    assert m.emission_means[0] == pytest.approx(srt[:1].mean())
    assert m.emission_means[1] == pytest.approx(srt[1:].mean())
    assert fit.n_iters_run == 0 and fit.ll_history == []


def test_fit_rejects_too_few_or_bad_observations():
    with pytest.raises(ValueError):
        fit_baum_welch(np.array([1e-5, 2e-5, 3e-5]), n_states=2)
    with pytest.raises(ValueError):
        fit_baum_welch(np.array([1e-5, np.nan, 3e-5, 4e-5]))
    with pytest.raises(ValueError):
        fit_baum_welch(np.array([1e-5, -2e-5, 3e-5, 4e-5]))
    with pytest.raises(DegenerateDataError):
        fit_baum_welch(np.full(10, 3.3e-5))


def test_variance_floor_respected():
    rng = np.random.default_rng(0)
    obs = np.concatenate([np.full(20, 1e-5), rng.normal(1e-4, 1e-5, 20)])
    fit = fit_baum_welch(np.abs(obs), seed=0)
    sd = np.abs(obs).std()
    assert (fit.model.emission_vars >= VARIANCE_FLOOR * sd * sd * (1 - 1e-12)).all()


def test_posteriors_sum_to_one():
    rng = np.random.default_rng(9)
    model = _random_model(rng)
    obs = rng.normal(0, 1, 200)
    gamma = state_posteriors(model, obs)
    np.testing.assert_allclose(gamma.sum(axis=1), 1.0, atol=1e-9)


def test_viterbi_single_observation():
    model = GaussianHmm(
        2,
        np.array([0.7, 0.3]),
        np.array([[0.5, 0.5], [0.5, 0.5]]),
        np.array([0.0, 1.0]),
        np.array([1.0, 1.0]),
    )
    # argmax_k log pi_k + log N(o | mu_k, var_k)
    assert viterbi(model, np.array([0.0]))[0] == 0
    assert viterbi(model, np.array([5.0]))[0] == 1


def test_viterbi_identity_transitions_pin_state():
    model = GaussianHmm(
        2,
        np.array([1.0, 0.0]),
        np.eye(2),
        np.array([0.0, 0.0]),
        np.array([1.0, 1.0]),
    )
    path = viterbi(model, np.zeros(8))
    assert (path == 0).all()


def test_viterbi_matches_bruteforce_small():
    rng = np.random.default_rng(13)
    for _ in range(40):
        model = _random_model(rng)
        t_len = int(rng.integers(1, 9))
        obs = rng.normal(0, 1, t_len)
        got = viterbi(model, obs)
        ref = viterbi_bruteforce(
            model.initial_probs, model.transitions, model.emission_means, model.emission_vars, obs
        )
        assert np.array_equal(got, ref)


def test_label_regimes_rules():
    m = GaussianHmm(2, np.array([0.5, 0.5]), np.full((2, 2), 0.5), np.array([1e-5, 1e-4]), np.array([1e-12, 1e-12]))
    assert label_regimes(m)[1] is RegimeLabel.ABNORMAL
    assert label_regimes(m)[0] is RegimeLabel.NORMAL
    # exact mean tie: larger variance is abnormal
    m2 = GaussianHmm(2, np.array([0.5, 0.5]), np.full((2, 2), 0.5), np.array([2e-5, 2e-5]), np.array([1e-12, 1e-10]))
    assert label_regimes(m2)[1] is RegimeLabel.ABNORMAL


def test_label_regimes_permutation_invariant():
    rng = np.random.default_rng(3)
    m = _random_model(rng)
    labels = label_regimes(m)
    perm = GaussianHmm(
        2,
        m.initial_probs[::-1].copy(),
        m.transitions[::-1, ::-1].copy(),
        m.emission_means[::-1].copy(),
        m.emission_vars[::-1].copy(),
    )
    swapped = label_regimes(perm)
    assert labels[0] is swapped[1] and labels[1] is swapped[0]


def test_predict_regime_flips_on_extreme_observation():
    rng = np.random.default_rng(4)
    obs = _two_regime_obs(rng)
    fit = fit_baum_welch(obs, seed=0)
    calm = np.full(30, 1e-5)
    assert predict_regime(fit.model, calm) is RegimeLabel.NORMAL
    burst = np.concatenate([calm, np.full(3, 2e-4)])
    assert predict_regime(fit.model, burst) is RegimeLabel.ABNORMAL
    # determinism
    assert predict_regime(fit.model, burst) is predict_regime(fit.model, burst)


def test_predict_regime_single_observation():
    rng = np.random.default_rng(4)
    fit = fit_baum_welch(_two_regime_obs(rng), seed=0)
    one = np.array([1e-4])
    path = viterbi(fit.model, one)
    assert predict_regime(fit.model, one) is label_regimes(fit.model)[int(path[0])]


def test_model_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    fit = fit_baum_welch(_two_regime_obs(rng), seed=1)
    path = tmp_path / "model.txt"
    write_model(path, fit.model)
    text = path.read_text()
    assert "abnormal_state" in text and "pi_0" in text and "a_01" in text
    loaded = read_model(path)
    np.testing.assert_allclose(loaded.transitions, fit.model.transitions)
    np.testing.assert_allclose(loaded.emission_means, fit.model.emission_means)
