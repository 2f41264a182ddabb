"""Tests for the training-proportion designer.

The closed-form reference value comes from clearing denominators in the
compensated efficiency equation (quadratic formula, inline below); the
optimizer reference alpha* was frozen from an exhaustive 1e-5 grid scan.
"""

import math

import pytest

from replicamud.training_designer import (
    TrainingProblem,
    optimize_alpha,
    spectral_efficiency,
)

# Exhaustive 1e-5 grid scan at M=200, SNR=5 dB, beta=1.
GRID_ALPHA_STAR = 0.049361138830084195
GRID_VALUE = 0.768208624123217


def quadratic_value(alpha, coherence_time, snr_db, beta):
    """Reference objective via the explicit quadratic root for eta."""
    sigma_n2 = 10.0 ** (-snr_db / 10.0)
    delta = sigma_n2 / (alpha * coherence_time)
    c = 1.0 + delta + beta * delta / sigma_n2
    b = c * sigma_n2 + beta - 1.0
    eta = (-b + math.sqrt(b * b + 4.0 * c * sigma_n2)) / (2.0 * c)
    return (1.0 - alpha) * math.log1p(eta / sigma_n2)


class TestSpectralEfficiency:
    def test_matches_quadratic_oracle(self):
        problem = TrainingProblem(coherence_time=100, snr_db=5.0, beta=0.5)
        got = spectral_efficiency(problem, 0.1)
        assert got == pytest.approx(quadratic_value(0.1, 100, 5.0, 0.5), abs=1e-12)
        assert got == pytest.approx(0.9755439776350582, abs=1e-10)

    def test_vanishes_as_alpha_approaches_one(self):
        problem = TrainingProblem(coherence_time=100, snr_db=5.0, beta=0.5)
        assert spectral_efficiency(problem, 1.0 - 1e-9) < 1e-8

    def test_long_coherence_reaches_perfect_csi(self):
        # M -> infinity at fixed alpha: estimation error vanishes and the
        # value approaches (1 - alpha) log(1 + eta0 SNR) with eta0 the
        # error-free efficiency root.
        problem = TrainingProblem(coherence_time=10**9, snr_db=5.0, beta=0.5)
        sigma_n2 = problem.sigma_n2
        b = sigma_n2 + 0.5 - 1.0
        eta0 = (-b + math.sqrt(b * b + 4.0 * sigma_n2)) / 2.0
        want = 0.8 * math.log1p(eta0 / sigma_n2)
        assert spectral_efficiency(problem, 0.2) == pytest.approx(want, abs=1e-6)

    def test_units_flag(self):
        problem = TrainingProblem(coherence_time=100, snr_db=5.0, beta=0.5)
        nats = spectral_efficiency(problem, 0.1)
        bits = spectral_efficiency(problem, 0.1, units="bits")
        assert bits == pytest.approx(nats / math.log(2.0))
        with pytest.raises(ValueError):
            spectral_efficiency(problem, 0.1, units="dB")

    def test_snr_override(self):
        problem = TrainingProblem(coherence_time=100, snr_db=5.0, beta=0.5)
        default = spectral_efficiency(problem, 0.1)
        explicit = spectral_efficiency(
            problem, 0.1, snr_override=1.0 / problem.sigma_n2
        )
        assert explicit == default
        assert spectral_efficiency(problem, 0.1, snr_override=1.0) < default
        with pytest.raises(ValueError):
            spectral_efficiency(problem, 0.1, snr_override=-2.0)

    def test_infeasible_alpha_names_minimum(self):
        # M=2 at 5 dB: error variance reaches 1 at alpha = sigma_n2/2.
        problem = TrainingProblem(coherence_time=2, snr_db=5.0, beta=0.5)
        with pytest.raises(ValueError) as excinfo:
            spectral_efficiency(problem, 0.1)
        assert f"{problem.min_alpha:.6g}" in str(excinfo.value)
        # Just inside the feasible region is fine.
        assert spectral_efficiency(problem, problem.min_alpha * 1.01) > 0.0

    def test_alpha_domain(self):
        problem = TrainingProblem(coherence_time=100, snr_db=5.0, beta=0.5)
        for bad in (0.0, 1.0, -0.5, math.nan):
            with pytest.raises(ValueError):
                spectral_efficiency(problem, bad)


class TestOptimizeAlpha:
    def test_matches_exhaustive_grid(self):
        problem = TrainingProblem(coherence_time=200, snr_db=5.0, beta=1.0)
        alpha_star, value = optimize_alpha(problem)
        assert alpha_star == pytest.approx(GRID_ALPHA_STAR, abs=2e-5)
        assert value >= GRID_VALUE - 1e-9

    def test_never_below_coarse_grid(self):
        problem = TrainingProblem(
            coherence_time=50, snr_db=5.0, beta=2.0, alpha_grid=37
        )
        _, value = optimize_alpha(problem)
        lower = problem.min_alpha
        step = (1.0 - lower) / 38
        for i in range(1, 38):
            assert value >= spectral_efficiency(problem, lower + i * step) - 1e-12

    def test_monotone_in_coherence_time(self):
        alphas = [
            optimize_alpha(TrainingProblem(coherence_time=m, snr_db=5.0, beta=0.5))[0]
            for m in (100, 1000)
        ]
        assert alphas[1] < alphas[0]

    def test_low_load_needs_less_training(self):
        low = optimize_alpha(TrainingProblem(coherence_time=50, snr_db=5.0, beta=0.5))
        high = optimize_alpha(TrainingProblem(coherence_time=50, snr_db=5.0, beta=1.0))
        assert high[0] > low[0]

    def test_no_feasible_alpha(self):
        # At -10 dB, sigma_n2 = 10: a block of 5 symbols can never train.
        with pytest.raises(ValueError):
            optimize_alpha(TrainingProblem(coherence_time=5, snr_db=-10.0, beta=0.5))

    def test_tiny_feasible_window(self):
        # Feasible alpha is (sigma_n2/M, 1) with sigma_n2 ~ 3.16, M = 4:
        # the window (0.79, 1) is narrow but the optimizer must cope.
        problem = TrainingProblem(coherence_time=4, snr_db=-5.0, beta=0.5)
        alpha_star, value = optimize_alpha(problem)
        assert problem.min_alpha < alpha_star < 1.0
        assert value > 0.0


class TestValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(coherence_time=0, snr_db=5.0, beta=0.5),
            dict(coherence_time=100, snr_db=math.inf, beta=0.5),
            dict(coherence_time=100, snr_db=5.0, beta=0.0),
            dict(coherence_time=100, snr_db=5.0, beta=0.5, alpha_grid=1),
        ],
    )
    def test_bad_problem(self, kwargs):
        with pytest.raises(ValueError):
            TrainingProblem(**kwargs)

    def test_wrong_types(self):
        with pytest.raises(TypeError):
            spectral_efficiency("problem", 0.1)
        with pytest.raises(TypeError):
            optimize_alpha(42)
