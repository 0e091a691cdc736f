import math

import numpy as np
import pytest

from udslab.modules.gmm_oracle import (
    UNCONDITIONAL,
    AnalyticDenoiser,
    Condition,
    ConditionRegistry,
    GaussianMixture,
    epsilon_star,
    marginal_params,
    registry_from_entries,
    sample_x0,
)
from udslab.modules.reference_oracles import fd_score, mixture_log_density_bruteforce


def _mixture():
    return GaussianMixture.from_components(
        [(0.3, (-1.0, 0.5), (0.4, 0.2)), (0.7, (1.5, -0.5), 0.8)]
    )


def test_mixture_validation():
    with pytest.raises(ValueError, match="summieren"):
        GaussianMixture.from_components([(0.5, (0.0,), 1.0), (0.6, (1.0,), 1.0)])
    with pytest.raises(ValueError):
        GaussianMixture.from_components([(1.0, (0.0, 0.0), -1.0)])
    with pytest.raises(ValueError):
        GaussianMixture(weights=np.ones(1), means=np.array([[np.nan]]), variances=np.ones((1, 1)))


def test_log_density_matches_component_sum():
    mixture = _mixture()
    rng = np.random.default_rng(0)
    for x in rng.normal(scale=3.0, size=(50, 2)):
        expected = mixture_log_density_bruteforce(x, mixture.weights, mixture.means, mixture.variances)
        assert mixture.log_density(x) == pytest.approx(expected, abs=1e-10)


def test_log_density_single_gaussian_at_mean():
    gaussian = GaussianMixture.single((2.0, -1.0, 0.5), 1.0)
    assert gaussian.log_density(np.array([2.0, -1.0, 0.5])) == pytest.approx(-1.5 * math.log(2.0 * math.pi))


def test_score_matches_finite_differences():
    mixture = _mixture()
    rng = np.random.default_rng(1)
    for x in rng.normal(scale=1.0, size=(30, 2)):
        np.testing.assert_allclose(mixture.score(x), fd_score(mixture.log_density, x, h=1e-4), atol=1e-5)


def test_score_is_stable_far_in_the_tails():
    mixture = _mixture()
    far = np.array([400.0, -300.0])
    score = mixture.score(far)
    assert np.all(np.isfinite(score))
    assert np.isfinite(mixture.log_density(far))


def test_batched_queries_match_single_queries():
    mixture = _mixture()
    batch = np.random.default_rng(2).standard_normal((5, 2))
    np.testing.assert_allclose(mixture.score(batch), np.array([mixture.score(row) for row in batch]))
    np.testing.assert_allclose(mixture.log_density(batch), [mixture.log_density(row) for row in batch])
    with pytest.raises(ValueError):
        mixture.score(np.zeros(3))


def test_sample_moments():
    gaussian = GaussianMixture.single((1.0, -2.0), (0.25, 4.0))
    samples = gaussian.sample(np.random.default_rng(3), 20000)
    np.testing.assert_allclose(samples.mean(axis=0), [1.0, -2.0], atol=0.06)
    np.testing.assert_allclose(samples.var(axis=0), [0.25, 4.0], rtol=0.05)


def test_marginal_params(sched):
    mixture = _mixture()
    np.testing.assert_allclose(marginal_params(mixture, 0, sched).means, mixture.means)
    ab = sched.alpha_bars[300]
    marginal = marginal_params(mixture, 300, sched)
    np.testing.assert_allclose(marginal.means, math.sqrt(ab) * mixture.means)
    np.testing.assert_allclose(marginal.variances, ab * mixture.variances + 1.0 - ab)


def test_epsilon_star_single_gaussian_closed_form(sched):
    registry = ConditionRegistry(prompts={"g": GaussianMixture.single((0.5, -1.0), 0.3)})
    x_t = np.array([0.2, 0.7])
    for t in (1, 10, 250, 1000):
        ab = sched.alpha_bars[t]
        expected = math.sqrt(1.0 - ab) * (x_t - math.sqrt(ab) * np.array([0.5, -1.0])) / (0.3 * ab + 1.0 - ab)
        np.testing.assert_allclose(epsilon_star(x_t, t, Condition.prompt("g"), sched, registry), expected, rtol=1e-12)


def test_epsilon_star_vanishes_at_t0(registry, sched, tgt):
    np.testing.assert_array_equal(epsilon_star(np.array([0.3, 0.1]), 0, tgt, sched, registry), 0.0)


def test_registry_union_and_prior(registry):
    union = registry.unconditional_mixture
    assert union.n_components == 4
    assert union.weights.sum() == pytest.approx(1.0)
    assert registry.prior_weights == {"src": 0.5, "tgt": 0.5}
    assert registry.resolve(UNCONDITIONAL) is union
    assert registry.resolve(Condition.negative("tgt")) is registry.prompts["tgt"]
    with pytest.raises(ValueError, match="Unbekannte"):
        registry.resolve(Condition.prompt("missing"))


def test_registry_prior_weights_are_normalised():
    registry = registry_from_entries(
        [
            {"id": "a", "mixture": {"components": [{"weight": 1.0, "mean": [0.0], "var": 1.0}]}, "prior_weight": 3.0},
            {"id": "b", "mixture": {"components": [{"weight": 1.0, "mean": [5.0], "var": 1.0}]}},
        ]
    )
    assert registry.prior_weights["a"] == pytest.approx(0.75)
    np.testing.assert_allclose(registry.unconditional_mixture.weights, [0.75, 0.25])


def test_registry_rejects_mixed_dimensions():
    with pytest.raises(ValueError, match="Dimension"):
        ConditionRegistry(
            prompts={"a": GaussianMixture.single((0.0,), 1.0), "b": GaussianMixture.single((0.0, 1.0), 1.0)}
        )


def test_condition_validation():
    with pytest.raises(ValueError):
        Condition.prompt("")
    assert str(Condition.negative("cat")) == "-cat"
    assert str(UNCONDITIONAL) == "∅"


def test_sample_x0_and_analytic_denoiser(registry, sched, tgt):
    rng = np.random.default_rng(4)
    sample = sample_x0(tgt, rng, registry)
    assert sample.shape == (2,)
    denoiser = AnalyticDenoiser(registry, sched)
    np.testing.assert_array_equal(denoiser.predict(sample, 40, tgt), epsilon_star(sample, 40, tgt, sched, registry))
