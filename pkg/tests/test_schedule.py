import math

import numpy as np
import pytest

from udslab.modules.reference_oracles import ddpm_posterior_bruteforce
from udslab.modules.schedule import NoiseSchedule, forward_noise, make_linear_schedule, posterior_coeffs


def test_default_schedule_tables(sched):
    assert sched.T == 1000
    assert sched.alpha_bars[0] == 1.0
    assert np.all(np.diff(sched.alpha_bars) < 0.0)
    np.testing.assert_allclose(sched.alpha_bars[1:], sched.alpha_bars[:-1] * sched.alphas[1:], rtol=1e-12)
    assert sched.betas[1] == pytest.approx(0.00085)
    assert sched.betas[1000] == pytest.approx(0.012)


def test_default_terminal_alpha_bar_is_reported_not_enforced(sched):
    assert 1e-3 < sched.alpha_bars[1000] < 2e-3
    assert sched.terminal_ok is False


def test_two_step_schedule_by_hand():
    small = make_linear_schedule(2, 0.5, 0.5)
    np.testing.assert_allclose(small.alpha_bars, [1.0, 0.5, 0.25])


def test_schedule_rejects_invalid_parameters():
    with pytest.raises(ValueError):
        make_linear_schedule(1)
    with pytest.raises(ValueError):
        make_linear_schedule(10, 0.02, 0.01)
    with pytest.raises(ValueError):
        make_linear_schedule(10, 0.0, 0.01)
    with pytest.raises(ValueError):
        make_linear_schedule(10, 0.01, math.nan)


def test_schedule_rejects_broken_tables():
    betas = np.array([0.0, 0.1, 0.1])
    alphas = 1.0 - betas
    with pytest.raises(ValueError, match="monoton"):
        NoiseSchedule(T=2, betas=betas, alphas=alphas, alpha_bars=np.array([1.0, 0.9, 0.95]))
    with pytest.raises(ValueError, match="alpha_bar_0"):
        NoiseSchedule(T=2, betas=betas, alphas=alphas, alpha_bars=np.array([0.99, 0.9, 0.81]))


def test_check_timestep_bounds(sched):
    assert sched.check_timestep(np.int64(5)) == 5
    for bad in (0, 1001, 2.5, True):
        with pytest.raises(ValueError):
            sched.check_timestep(bad)
    assert sched.check_timestep(0, lower=0) == 0


def test_forward_noise_endpoints(sched):
    x0 = np.array([1.0, -2.0])
    eps = np.array([0.3, 0.4])
    np.testing.assert_array_equal(forward_noise(x0, 0, eps, sched), x0)
    x_t = forward_noise(x0, 500, eps, sched)
    expected = math.sqrt(sched.alpha_bars[500]) * x0 + math.sqrt(1.0 - sched.alpha_bars[500]) * eps
    np.testing.assert_allclose(x_t, expected, rtol=1e-15)
    with pytest.raises(ValueError):
        forward_noise(x0, 10, np.zeros(3), sched)


@pytest.mark.parametrize("t", [2, 3, 50, 500, 999, 1000])
def test_posterior_coeffs_match_gaussian_conditioning(sched, t):
    rng = np.random.default_rng(t)
    x0 = rng.standard_normal(3)
    x_t = rng.standard_normal(3)
    coeffs = posterior_coeffs(t, sched)
    mean, variance = ddpm_posterior_bruteforce(x0, x_t, t, sched)
    np.testing.assert_allclose(coeffs.partial * x0 + coeffs.psi * x_t, mean, rtol=1e-10, atol=1e-12)
    assert coeffs.sigma**2 == pytest.approx(variance, rel=1e-10)


def test_posterior_coeffs_literal_sigma(sched):
    ddpm = posterior_coeffs(100, sched)
    literal = posterior_coeffs(100, sched, "literal")
    assert literal.partial == ddpm.partial and literal.psi == ddpm.psi
    expected = (1.0 - sched.alpha_bars[99]) / (1.0 - sched.alphas[100]) * sched.betas[100]
    assert literal.sigma == pytest.approx(expected)
    assert literal.sigma != pytest.approx(ddpm.sigma)


def test_posterior_coeffs_reject_t1_and_unknown_form(sched):
    with pytest.raises(ValueError):
        posterior_coeffs(1, sched)
    with pytest.raises(ValueError):
        posterior_coeffs(10, sched, "other")
