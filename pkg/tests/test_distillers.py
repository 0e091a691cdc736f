import numpy as np
import pytest

from udslab.modules.distillers import (
    DistillerConfig,
    Method,
    Omega,
    PromptPair,
    assemble_unified,
    compute_delta,
    delta_pds,
    pds_coefficients,
    timestep_bounds,
    timestep_weight,
)
from udslab.modules.gmm_oracle import UNCONDITIONAL, AnalyticDenoiser, Condition, ConditionRegistry, GaussianMixture
from udslab.modules.latent_ops import NoisingMode, X0ApproxMode
from udslab.modules.reference_oracles import gaussian_posterior_mean, pds_coeff_check, uds_rewrite_check
from udslab.modules.schedule import forward_noise


class _UnconditionalOnly:
    """Answers every query with the unconditional prediction."""

    def __init__(self, inner):
        self.inner = inner

    def predict(self, x_t, t, cond):
        return self.inner.predict(x_t, t, UNCONDITIONAL)


@pytest.fixture
def pair(src, tgt):
    return PromptPair(tgt=tgt, src=src, neg=Condition.negative("src"))


def _case(seed):
    rng = np.random.default_rng(seed)
    return 2.0 * rng.standard_normal(2), 2.0 * rng.standard_normal(2), rng.standard_normal(2)


def test_method_parse():
    assert Method.parse("uds_gen") is Method.UDS_GEN
    assert Method.parse(Method.PDS) is Method.PDS
    with pytest.raises(ValueError, match="erlaubt"):
        Method.parse("VSD")
    assert Method.UDS_EDIT.is_editing and not Method.UDS_GEN.is_editing
    assert Method.ISM.uses_interval and not Method.SDS.uses_interval


@pytest.mark.parametrize(
    "method, weight",
    [("SDS", 100.0), ("DDS", 100.0), ("PDS", 100.0), ("ISM", 7.5), ("UDS_EDIT", 7.5), ("UDS_GEN", 7.5)],
)
def test_for_method_default_weights(method, weight):
    assert DistillerConfig.for_method(method).w == weight
    assert DistillerConfig.for_method(method, w=3.0).w == 3.0


def test_config_dict_roundtrip():
    raw = {
        "method": "ism",
        "w": None,
        "c": 25,
        "x0_mode": {"kind": "ddim", "n_steps": 3},
        "omega": "one_minus_alpha_bar",
    }
    config = DistillerConfig.from_dict(raw, sigma_form="literal")
    assert config.method is Method.ISM
    assert config.w == 7.5
    assert config.x0_mode == X0ApproxMode.ddim(3)
    assert config.omega is Omega.ONE_MINUS_ALPHA_BAR
    assert config.sigma_form == "literal"
    assert DistillerConfig.from_dict(config.to_dict(), sigma_form="literal") == config


@pytest.mark.parametrize(
    "kwargs",
    [{"w": -1.0}, {"c": 0}, {"t_min": 0}, {"t_min": 100, "t_max": 50}, {"inversion_condition": "negative"}],
)
def test_config_rejects_invalid_values(kwargs):
    with pytest.raises(ValueError):
        DistillerConfig(**kwargs)


def test_timestep_bounds(sched):
    assert timestep_bounds(DistillerConfig.for_method("SDS"), sched) == (20, 1000)
    assert timestep_bounds(DistillerConfig.for_method("ISM"), sched) == (51, 1000)
    assert timestep_bounds(DistillerConfig.for_method("PDS", t_min=1), sched) == (2, 1000)
    assert timestep_bounds(DistillerConfig.for_method("UDS_EDIT", t_max=980), sched) == (20, 980)
    ddim_gen = DistillerConfig.for_method("UDS_GEN", c=50, t_min=1, x0_mode=X0ApproxMode.ddim(10))
    assert timestep_bounds(ddim_gen, sched) == (60, 1000)
    ddim_edit = DistillerConfig.for_method("UDS_EDIT", t_min=1, x0_mode=X0ApproxMode.ddim(30))
    assert timestep_bounds(ddim_edit, sched) == (30, 1000)


def test_timestep_bounds_rejects_empty_range(sched):
    with pytest.raises(ValueError, match="Kein zulässiger Zeitschritt"):
        timestep_bounds(DistillerConfig.for_method("ISM", c=50, t_max=40), sched)
    with pytest.raises(ValueError):
        timestep_bounds(DistillerConfig.for_method("SDS", t_max=2000), sched)


@pytest.mark.parametrize("method", list(Method))
def test_total_reassembles_from_terms(method, denoiser, pair, sched):
    weights = np.random.default_rng(99).uniform(0.0, 100.0, size=150)
    for seed, w in enumerate(weights):
        x0_src, x0, eps = _case(seed)
        t = 60 + (37 * seed) % 941
        config = DistillerConfig.for_method(method, w=float(w), omega=Omega.ONE_MINUS_ALPHA_BAR)
        terms = compute_delta(x0, t, eps, denoiser, pair, config, sched, x0_src=x0_src)
        tolerance = 1e-10 if method is Method.PDS else 1e-12
        assert terms.reassembly_error() <= tolerance * terms.scale()
        assert terms.omega_t == pytest.approx(1.0 - sched.alpha_bars[t])


@pytest.mark.parametrize("method", [Method.DDS, Method.PDS, Method.UDS_EDIT])
def test_editing_fixed_point_is_exactly_zero(method, denoiser, src, sched):
    pair = PromptPair(tgt=src, src=src)
    for seed in range(10):
        x0, _, eps = _case(seed)
        terms = compute_delta(x0, 2 + 97 * seed, eps, denoiser, pair, DistillerConfig.for_method(method), sched, x0_src=x0)
        assert np.all(terms.total == 0.0)


def test_sds_terms(denoiser, tgt, sched):
    x0, _, eps = _case(3)
    config = DistillerConfig.for_method("SDS", w=4.0)
    terms = compute_delta(x0, 300, eps, denoiser, PromptPair(tgt=tgt), config, sched)
    assert np.all(terms.identity == 0.0)
    x_t = sched.sqrt_alpha_bar(300) * x0 + sched.sqrt_one_minus_alpha_bar(300) * eps
    uncond = denoiser.predict(x_t, 300, UNCONDITIONAL)
    np.testing.assert_allclose(terms.recon, uncond - eps, atol=1e-12)
    np.testing.assert_allclose(terms.cls, denoiser.predict(x_t, 300, tgt) - uncond, atol=1e-12)


def test_uds_slots(denoiser, pair, sched):
    x0_src, x0, eps = _case(5)
    edit = compute_delta(x0, 400, eps, denoiser, pair, DistillerConfig.for_method("UDS_EDIT"), sched, x0_src=x0_src)
    assert np.all(edit.recon == 0.0)
    assert np.any(edit.identity != 0.0)
    gen = compute_delta(x0, 400, eps, denoiser, pair, DistillerConfig.for_method("UDS_GEN"), sched)
    assert np.all(gen.identity == 0.0)
    assert np.any(gen.recon != 0.0)


def test_uds_gen_neg_uses_negative_baseline(denoiser, pair, tgt, sched):
    x0, _, eps = _case(7)
    terms = compute_delta(x0, 500, eps, denoiser, pair, DistillerConfig.for_method("UDS_GEN_NEG"), sched)
    x_t = sched.sqrt_alpha_bar(500) * x0 + sched.sqrt_one_minus_alpha_bar(500) * eps
    expected = denoiser.predict(x_t, 500, tgt) - denoiser.predict(x_t, 500, pair.neg)
    np.testing.assert_allclose(terms.cls, expected, atol=1e-12)
    with pytest.raises(ValueError, match="negativen Prompt"):
        compute_delta(x0, 500, eps, denoiser, PromptPair(tgt=tgt), DistillerConfig.for_method("UDS_GEN_NEG"), sched)


def test_negative_condition_is_pushed_away(denoiser, sched):
    """``eps(y_neg)`` is the conditional prediction of the negated prompt."""

    x_t = np.array([0.1, 0.2])
    np.testing.assert_array_equal(
        denoiser.predict(x_t, 100, Condition.negative("src")),
        denoiser.predict(x_t, 100, Condition.prompt("src")),
    )


def test_editing_methods_require_source(denoiser, pair, tgt, sched):
    x0, _, eps = _case(1)
    for method in ("DDS", "PDS", "UDS_EDIT"):
        with pytest.raises(ValueError, match="Quellbild"):
            compute_delta(x0, 100, eps, denoiser, pair, DistillerConfig.for_method(method), sched)
        with pytest.raises(ValueError, match="Quell-Prompt"):
            compute_delta(x0, 100, eps, denoiser, PromptPair(tgt=tgt), DistillerConfig.for_method(method), sched, x0_src=x0)


def test_interval_methods_reject_small_t(denoiser, pair, sched):
    x0, _, eps = _case(2)
    with pytest.raises(ValueError, match="t - c"):
        compute_delta(x0, 50, eps, denoiser, pair, DistillerConfig.for_method("ISM", c=50), sched)


@pytest.mark.parametrize("sigma_form", ["ddpm", "literal"])
def test_pds_c0_vanishes(sched, sigma_form):
    for t in (2, 10, 250, 999, 1000):
        c0, c1 = pds_coefficients(t, sched, sigma_form)
        assert abs(c0) < 1e-9
        assert c1 > 0.0


def test_pds_decomposition_matches_direct_difference(denoiser, src, tgt, sched):
    for seed in range(10):
        x0_src, x0, eps = _case(seed)
        deviation = pds_coeff_check(x0_src, x0, eps, 2 + 99 * seed, denoiser, (src, tgt), sched, w=1.0 + seed)
        assert deviation <= 1e-10


def test_pds_identical_prompts_still_moves_perturbed_target(denoiser, src, sched):
    x0_src = np.array([-2.5, 1.0])
    x0 = x0_src + np.array([0.4, -0.3])
    eps = np.array([0.2, -0.6])
    pair = PromptPair(tgt=src, src=src)
    config = DistillerConfig.for_method("PDS", w=1.0)
    terms = delta_pds(x0, 300, eps, denoiser, pair, config, sched, x0_src=x0_src)
    assert np.linalg.norm(terms.total) > 1e-6
    unconditional = delta_pds(x0, 300, eps, _UnconditionalOnly(denoiser), pair, config, sched, x0_src=x0_src)
    assert np.linalg.norm(terms.total - unconditional.total) > 1e-6


def test_pds_ignores_ddim_noising(denoiser, pair, sched):
    x0_src, x0, eps = _case(4)
    forward = DistillerConfig.for_method("PDS")
    inverted = DistillerConfig.for_method("PDS", noising=NoisingMode.ddim_inverse(5))
    a = compute_delta(x0, 400, eps, denoiser, pair, forward, sched, x0_src=x0_src)
    b = compute_delta(x0, 400, eps, denoiser, pair, inverted, sched, x0_src=x0_src)
    np.testing.assert_array_equal(a.total, b.total)


def test_uds_edit_rewrite_identity(denoiser, src, tgt, sched):
    for seed in range(10):
        x0_src, x0, eps = _case(seed)
        assert uds_rewrite_check(x0_src, x0, eps, 1 + 99 * seed, denoiser, (src, tgt), sched) <= 1e-12
    x0_src, x0, eps = _case(11)
    assert uds_rewrite_check(x0_src, x0, eps, 500, denoiser, (src, tgt), sched, w=2.0) > 1e-6


def test_ddim_x0_mode_changes_uds_delta(denoiser, pair, sched):
    x0_src, x0, eps = _case(8)
    tweedie = DistillerConfig.for_method("UDS_EDIT")
    multi = DistillerConfig.for_method("UDS_EDIT", x0_mode=X0ApproxMode.ddim(4))
    a = compute_delta(x0, 600, eps, denoiser, pair, tweedie, sched, x0_src=x0_src)
    b = compute_delta(x0, 600, eps, denoiser, pair, multi, sched, x0_src=x0_src)
    np.testing.assert_array_equal(a.cls, b.cls)
    assert not np.allclose(a.identity, b.identity)


def test_ddim_inverse_noising_runs(denoiser, pair, sched):
    x0_src, x0, eps = _case(9)
    config = DistillerConfig.for_method("DDS", noising=NoisingMode.ddim_inverse(5), inversion_condition="prompt")
    terms = compute_delta(x0, 200, eps, denoiser, pair, config, sched, x0_src=x0_src)
    assert np.all(np.isfinite(terms.total))


def test_omega_weighting(sched):
    assert timestep_weight(Omega.CONSTANT, 700, sched) == 1.0
    assert timestep_weight(Omega.ONE_MINUS_ALPHA_BAR, 700, sched) == pytest.approx(1.0 - sched.alpha_bars[700])
    assert timestep_weight(Omega.ONE_MINUS_ALPHA_BAR, 0, sched) == 0.0


def test_assemble_unified_rejects_unknown_slot():
    with pytest.raises(ValueError):
        assemble_unified(np.zeros(2), np.zeros(2), 1.0, 1.0, slot="cls")


def _single_prompt(sched, mean, var, name="blob"):
    registry = ConditionRegistry(prompts={name: GaussianMixture.single(mean, var)})
    return AnalyticDenoiser(registry, sched), PromptPair(tgt=Condition.prompt(name))


def test_sds_without_prompt_signal_is_pure_recon(denoiser, tgt, sched):
    x0, _, eps = _case(6)
    config = DistillerConfig.for_method("SDS", omega=Omega.ONE_MINUS_ALPHA_BAR)
    terms = compute_delta(x0, 250, eps, _UnconditionalOnly(denoiser), PromptPair(tgt=tgt), config, sched)
    assert np.all(terms.cls == 0.0)
    np.testing.assert_allclose(terms.total, terms.omega_t * terms.recon, rtol=0.0, atol=1e-15)


def test_dds_is_difference_of_two_sds_deltas(denoiser, src, tgt, sched):
    for seed in range(10):
        x0_src, x0, eps = _case(seed)
        t = 20 + 97 * seed
        config = DistillerConfig.for_method("DDS", w=1.0 + 9.0 * seed, omega=Omega.ONE_MINUS_ALPHA_BAR)
        sds = DistillerConfig.for_method("SDS", w=config.w, omega=config.omega)
        dds = compute_delta(x0, t, eps, denoiser, PromptPair(tgt=tgt, src=src), config, sched, x0_src=x0_src)
        towards = compute_delta(x0, t, eps, denoiser, PromptPair(tgt=tgt), sds, sched)
        away = compute_delta(x0_src, t, eps, denoiser, PromptPair(tgt=src), sds, sched)
        np.testing.assert_allclose(
            dds.total / dds.omega_t, (towards.total - away.total) / towards.omega_t, rtol=1e-12, atol=1e-10
        )


def test_ism_recon_on_standard_normal_prior(sched):
    denoiser, prompts = _single_prompt(sched, (0.0, 0.0), 1.0)
    x0, eps = np.array([0.7, -1.2]), np.array([0.3, 0.9])
    config = DistillerConfig.for_method("ISM", c=50)
    for t in (60, 300, 1000):
        terms = compute_delta(x0, t, eps, denoiser, prompts, config, sched)
        expected = np.zeros(2)
        for step, sign in ((t, 1.0), (t - 50, -1.0)):
            x_step = sched.sqrt_alpha_bar(step) * x0 + sched.sqrt_one_minus_alpha_bar(step) * eps
            expected += sign * sched.sqrt_one_minus_alpha_bar(step) * x_step
        np.testing.assert_allclose(terms.recon, expected, atol=1e-12)
        np.testing.assert_allclose(terms.cls, 0.0, atol=1e-12)


def test_uds_edit_identity_vanishes_for_identical_point_masses(sched):
    mass = np.array([0.5, -1.5])
    registry = ConditionRegistry(
        prompts={"cat": GaussianMixture.single(mass, 1e-10), "dog": GaussianMixture.single(mass, 1e-10)}
    )
    pair = PromptPair(tgt=Condition.prompt("dog"), src=Condition.prompt("cat"))
    x0_src, x0, eps = mass + np.array([-0.8, 0.4]), mass + np.array([1.2, 0.3]), np.array([0.6, -0.2])
    denoiser = AnalyticDenoiser(registry, sched)
    config = DistillerConfig.for_method("UDS_EDIT")
    for t in (50, 400, 900):
        terms = compute_delta(x0, t, eps, denoiser, pair, config, sched, x0_src=x0_src)
        assert np.max(np.abs(terms.identity)) < 1e-6


def test_uds_gen_point_mass_leaves_only_guidance(sched):
    mass = np.array([1.0, -0.5])
    denoiser, prompts = _single_prompt(sched, mass, 1e-10)
    config = DistillerConfig.for_method("UDS_GEN", omega=Omega.ONE_MINUS_ALPHA_BAR)
    for t in (60, 300, 1000):
        terms = compute_delta(mass, t, np.array([0.4, -1.1]), denoiser, prompts, config, sched)
        assert np.max(np.abs(terms.recon)) < 1e-6
        np.testing.assert_allclose(terms.total, terms.omega_t * terms.w * terms.cls, atol=1e-6)


def test_uds_gen_without_guidance_matches_posterior_means(sched):
    mean, s2 = np.array([0.5, -1.0]), 0.3
    denoiser, prompts = _single_prompt(sched, mean, s2)
    config = DistillerConfig.for_method("UDS_GEN", w=0.0, c=50, omega=Omega.ONE_MINUS_ALPHA_BAR)
    x0, eps = np.array([1.0, 0.2]), np.array([0.4, -0.7])
    for t in (80, 300, 700):
        terms = compute_delta(x0, t, eps, denoiser, prompts, config, sched)
        upper = gaussian_posterior_mean(mean, s2, forward_noise(x0, t, eps, sched), t, sched)
        lower = gaussian_posterior_mean(mean, s2, forward_noise(x0, t - 50, eps, sched), t - 50, sched)
        np.testing.assert_allclose(terms.total, terms.omega_t * (upper - lower), atol=1e-10)


def test_uds_gen_neg_collapses_to_special_cases(denoiser, tgt, sched):
    x0, _, eps = _case(12)
    config = DistillerConfig.for_method("UDS_GEN_NEG", w=7.5)
    same = compute_delta(x0, 300, eps, denoiser, PromptPair(tgt=tgt, neg=Condition.negative("tgt")), config, sched)
    assert np.all(same.cls == 0.0)
    empty = compute_delta(x0, 300, eps, denoiser, PromptPair(tgt=tgt, neg=UNCONDITIONAL), config, sched)
    generation = DistillerConfig.for_method("UDS_GEN", w=7.5)
    plain = compute_delta(x0, 300, eps, denoiser, PromptPair(tgt=tgt), generation, sched)
    for name in ("recon", "cls", "identity", "total"):
        np.testing.assert_array_equal(getattr(empty, name), getattr(plain, name))


def test_uds_gen_neg_descent_points_from_negative_to_prompt(sched):
    registry = ConditionRegistry(
        prompts={"a": GaussianMixture.single((2.0, -2.0), 0.1), "b": GaussianMixture.single((-2.0, 2.0), 0.1)}
    )
    pair = PromptPair(tgt=Condition.prompt("a"), neg=Condition.negative("b"))
    config = DistillerConfig.for_method("UDS_GEN_NEG")
    for t in (60, 120, 200):
        terms = compute_delta(np.zeros(2), t, np.zeros(2), AnalyticDenoiser(registry, sched), pair, config, sched)
        np.testing.assert_array_equal(np.sign(-terms.cls), [1.0, -1.0])


@pytest.mark.parametrize("method", list(Method))
def test_delta_depends_on_the_shared_noise(method, denoiser, pair, sched):
    x0_src, x0, eps = _case(13)
    config = DistillerConfig.for_method(method)
    first = compute_delta(x0, 400, eps, denoiser, pair, config, sched, x0_src=x0_src)
    second = compute_delta(x0, 400, eps + 0.5, denoiser, pair, config, sched, x0_src=x0_src)
    assert not np.array_equal(first.total, second.total)
