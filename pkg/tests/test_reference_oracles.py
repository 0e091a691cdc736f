import math

import numpy as np
import pytest

from udslab.modules.reference_oracles import (
    FAULTS,
    ConstantDenoiser,
    VerificationSuite,
    cfg_decomposition_check,
    cumulative_alpha,
    ddim_roundtrip_check,
    ddpm_posterior_bruteforce,
    fd_score,
    gaussian_posterior_mean,
    mixture_log_density_bruteforce,
    uds_rewrite_unshifted_gap,
)
from udslab.modules.schedule import make_linear_schedule


def test_cumulative_alpha_two_step_example():
    sched = make_linear_schedule(2, 0.1, 0.2)
    assert cumulative_alpha(sched, 0) == 1.0
    assert cumulative_alpha(sched, 2) == pytest.approx(0.9 * 0.8, abs=1e-15)


def test_fd_score_of_standard_normal():
    density = lambda x: -0.5 * float(np.sum(x * x))  # noqa: E731
    np.testing.assert_allclose(fd_score(density, np.array([0.5, -2.0])), [-0.5, 2.0], atol=1e-8)
    with pytest.raises(ValueError):
        fd_score(density, np.zeros(2), h=0.0)
    with pytest.raises(ValueError):
        fd_score(lambda x: math.inf, np.zeros(1))


def test_gaussian_posterior_mean_limits(sched):
    mean = np.array([1.0, 2.0])
    x_t = np.array([5.0, -5.0])
    at_one = gaussian_posterior_mean(mean, 1e-12, x_t, 1, sched)
    np.testing.assert_allclose(at_one, mean, atol=1e-6)
    with pytest.raises(ValueError):
        gaussian_posterior_mean(mean, 0.0, x_t, 10, sched)


def test_ddpm_posterior_bruteforce_variance(sched):
    _, variance = ddpm_posterior_bruteforce(np.zeros(2), np.zeros(2), 500, sched)
    ab, ab_prev = cumulative_alpha(sched, 500), cumulative_alpha(sched, 499)
    assert variance == pytest.approx((1.0 - ab_prev) / (1.0 - ab) * float(sched.betas[500]), rel=1e-10)
    with pytest.raises(ValueError):
        ddpm_posterior_bruteforce(np.zeros(2), np.zeros(2), 1, sched)


def test_mixture_bruteforce_single_component():
    value = mixture_log_density_bruteforce([0.0], [1.0], [[0.0]], [[1.0]])
    assert value == pytest.approx(-0.5 * math.log(2.0 * math.pi))


def test_cfg_decomposition_with_constant_denoiser(sched, tgt):
    denoiser = ConstantDenoiser(np.array([0.3, -0.1]))
    assert cfg_decomposition_check(np.ones(2), np.zeros(2), 100, 7.5, denoiser, tgt, sched) == 0.0


def test_ddim_roundtrip_reports_errors(denoiser, src, sched):
    result = ddim_roundtrip_check(np.array([-2.0, 0.8]), 200, 50, denoiser, src, sched)
    assert result.rel_error <= 1e-2
    assert result.abs_error >= 0.0


def test_unshifted_coefficient_form_leaves_a_gap(denoiser, src, tgt, sched):
    gap = uds_rewrite_unshifted_gap(np.array([-2.0, 1.0]), np.array([2.0, -1.0]), np.array([0.3, 0.4]), 500, denoiser, (src, tgt), sched)
    assert gap > 1e-6


def test_suite_passes():
    report = VerificationSuite(trials=40, seed=1).run()
    assert report.all_passed, [result.name for result in report.failed]
    names = [result.name for result in report.results]
    assert "uds_rewrite_identity" in names
    assert "delta_reassembly" in names
    assert report.to_dict()["all_passed"] is True


def test_delta_reassembly_runs_every_trial(monkeypatch):
    from udslab.modules.reference_oracles import suite as suite_module

    calls = []
    original = suite_module.compute_delta

    def counting(*args, **kwargs):
        calls.append(args[5].method)
        return original(*args, **kwargs)

    monkeypatch.setattr(suite_module, "compute_delta", counting)
    result = VerificationSuite(trials=1000, seed=2).check_delta_reassembly()
    assert result.passed, result.deviation
    assert len(calls) == 1000
    assert len(set(calls)) == 7


def test_fault_injection_is_detected():
    assert FAULTS == ("uds_edit_sign",)
    report = VerificationSuite(trials=20, fault="uds_edit_sign").run()
    assert not report.all_passed
    assert "uds_rewrite_identity" in [result.name for result in report.failed]
    assert report.to_dict()["fault"] == "uds_edit_sign"


def test_unknown_fault_is_rejected():
    with pytest.raises(ValueError, match="Fehlerinjektion"):
        VerificationSuite(fault="swap_prompts")
