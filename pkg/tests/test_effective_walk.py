import math

import numpy as np
import pytest

from app.application.errors import DivergenceError, DomainError
from app.application.models import EffectiveExcursion
from app.application.services.effective_walk import (
    LAMBDA_HAT,
    G_of_lambda,
    K_exact,
    K_hat,
    K_star_pmf,
    excursion_stats,
    kernel_G,
    lambda_double_star_doubling,
    lambda_star_solve,
    laplace_mgf_abs,
    laplace_pmf,
    martingale_residual,
    moments,
    solve_lambda_hat,
    truncate,
)
from app.application.services.scaling import covariance_B, speed_c


def test_kernel_values():
    assert K_exact(1) == 0.5
    assert K_exact(2) == 0.25
    assert K_exact(4) == 2 / 16
    with pytest.raises(DomainError):
        K_exact(0)


def test_laplace_increment_law():
    total = math.fsum(laplace_pmf(x) for x in range(-60, 61))
    assert total == pytest.approx(1.0, abs=1e-15)
    lam = 0.7
    direct = math.fsum(laplace_pmf(x) * math.exp(-lam * abs(x)) for x in range(-200, 201))
    assert laplace_mgf_abs(lam) == pytest.approx(direct, rel=1e-12)


def test_lambda_hat_closed_form():
    assert martingale_residual(LAMBDA_HAT) == pytest.approx(0.0, abs=1e-12)
    assert solve_lambda_hat(1e-12) == pytest.approx(LAMBDA_HAT, abs=1e-9)
    assert math.exp(-LAMBDA_HAT) / 2 == pytest.approx(math.sqrt(2) - 1, abs=1e-15)


def test_tilt_constants(params):
    assert params.lambda_star == pytest.approx(0.215593, abs=1e-5)
    assert params.y_star == pytest.approx(0.40303, abs=1e-5)
    assert params.growth_constant == pytest.approx(2.4812, abs=1e-3)
    assert params.lambda_double_star < params.lambda_hat < params.lambda_star
    assert params.alpha_star == pytest.approx(math.log(1.5) - params.lambda_star)


def test_generating_function_identities(params):
    value, tail = K_hat(params.lambda_star)
    assert value == pytest.approx(1.0, abs=1e-8)
    assert 0.0 <= tail < 1e-8
    for route in ("dp", "series", "kernel"):
        assert G_of_lambda(params.lambda_star, route=route) == pytest.approx(0.5, abs=1e-8)
    lam = params.lambda_hat
    assert kernel_G(lam) == pytest.approx(0.5 + math.exp(-2 * lam) / 8, abs=1e-10)
    assert kernel_G(lam) == pytest.approx(2 - math.sqrt(2), abs=1e-10)


def test_kernel_at_branch_point():
    assert kernel_G(LAMBDA_HAT) == 2 - math.sqrt(2)
    assert kernel_G(LAMBDA_HAT + 5e-10) == 2 - math.sqrt(2)
    assert kernel_G(solve_lambda_hat()) == pytest.approx(0.5 + math.exp(-2 * LAMBDA_HAT) / 8, abs=1e-12)
    assert kernel_G(LAMBDA_HAT + 1e-6) == pytest.approx(2 - math.sqrt(2), abs=1e-2)
    assert kernel_G(LAMBDA_HAT + 1e-6) < 2 - math.sqrt(2)
    assert kernel_G(0.5) == pytest.approx(G_of_lambda(0.5, route="dp"), abs=1e-12)


def test_double_star_estimates_agree():
    horizon = 600
    ratio = lambda_star_solve(t_max=horizon).lambda_double_star
    doubling = lambda_double_star_doubling(horizon)
    assert LAMBDA_HAT - 3.0 / horizon < ratio < doubling < LAMBDA_HAT


def test_series_diverges_below_threshold():
    with pytest.raises(DivergenceError):
        K_hat(0.1)
    with pytest.raises(ValueError):
        G_of_lambda(0.3, route="contour")


def test_tilted_pmf(params):
    assert K_star_pmf(0) == 0.0
    assert K_star_pmf(1) == pytest.approx(params.y_star)
    assert K_star_pmf(4) == pytest.approx(K_exact(4) * math.exp(-4 * params.lambda_star))


def test_moments_and_scaling_constants(params):
    m = moments(params)
    assert 0 < m.mean_N < m.mean_T
    assert m.mean_T2 > m.mean_T**2 and m.mean_N2 > m.mean_N**2
    c = speed_c(m)
    assert 0 < c < 0.5
    sigma = covariance_B(m)
    assert sigma.shape == (2, 2)
    assert sigma[0, 1] == sigma[1, 0]
    assert sigma[0, 0] > 0 and np.linalg.det(sigma) >= -1e-12


def test_sampled_excursions_have_requested_length(law, rng):
    for T in (1, 2, 5, 17, 60):
        V = EffectiveExcursion(tuple(law.sample_levels(T, rng)))
        assert V.T == T
        assert V.is_nonnegative_bridge


def test_excursion_draws(law, rng):
    for _ in range(50):
        V = law.sample(rng)
        assert V.is_nonnegative_bridge
    T = law.sample_T_array(500, rng)
    assert T.min() >= 1
    N = law.sample_N_array(T, rng)
    assert np.all((N >= 1) & (N <= T))
    # Stretches of an excursion sum to zero, so T - N is even.
    assert np.all((T - N) % 2 == 0)
    assert law.mean_T == pytest.approx(moments().mean_T, rel=1e-6)


def test_truncate():
    assert truncate((0, 1, 3, 0), 2).values == (0, 1, 2)
    assert truncate((0, 1, 0), 2).values == (0, 1, 0)
    with pytest.raises(DomainError):
        truncate((0, 1), -1)


def test_excursion_stats():
    V = EffectiveExcursion((0, 2, 0))
    assert excursion_stats(V, 3) == (6, 2, 0)
    assert excursion_stats(EffectiveExcursion((0, 0)), 0) == (1, 1, 1)
    assert excursion_stats(EffectiveExcursion((0, 1, 2)), 2) == (4, 2, 1)
