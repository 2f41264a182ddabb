"""Training-overhead optimization for channel-estimated MMSE receivers.

A block-fading system spends a proportion alpha of each coherence block
(M symbol periods) on training. More training sharpens the channel
estimate (error variance sigma_n^2 / (alpha M)) but crowds out data
symbols, so the spectral efficiency

    (1 - alpha) * log(1 + eta * SNR)

has an interior optimum. eta is the multiuser efficiency of the
error-compensated linear MMSE receiver at that estimation error, from
:func:`replicamud.linear_turbo.solve_linear`.

Defaults documented here (both overridable): SNR in the log is 1/sigma_n^2,
and the logarithm is natural (value in nats per symbol; pass units="bits"
for log base 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .linear_turbo import multiuser_efficiency, solve_linear
from .replica_solvers import Estimator, Mode, SystemParams

__all__ = ["TrainingProblem", "spectral_efficiency", "optimize_alpha"]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_ALPHA_TOL = 1e-5


@dataclass(frozen=True)
class TrainingProblem:
    """System whose training proportion is being designed.

    Attributes
    ----------
    coherence_time : int
        Block length M in symbol periods; alpha*M of them are training.
    snr_db : float
        Signal-to-noise ratio in dB; sigma_n^2 = 10^(-snr_db/10).
    beta : float
        System load K/N.
    alpha_grid : int
        Number of coarse-scan points used to bracket the global maximum
        before the local refinement (the objective is not assumed
        unimodal).
    """

    coherence_time: int
    snr_db: float
    beta: float
    alpha_grid: int = 200

    def __post_init__(self):
        if (
            not isinstance(self.coherence_time, int)
            or isinstance(self.coherence_time, bool)
            or self.coherence_time < 1
        ):
            raise ValueError(
                f"coherence_time must be a positive integer, got {self.coherence_time!r}"
            )
        if not math.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")
        if not (math.isfinite(self.beta) and self.beta > 0.0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if (
            not isinstance(self.alpha_grid, int)
            or isinstance(self.alpha_grid, bool)
            or self.alpha_grid < 2
        ):
            raise ValueError(f"alpha_grid must be an integer >= 2, got {self.alpha_grid!r}")

    @property
    def sigma_n2(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def min_alpha(self) -> float:
        """Smallest training proportion with an admissible error variance.

        The estimation-error variance sigma_n^2/(alpha M) must stay below
        the unit channel energy; below this alpha the training is too
        short to say anything about the channel.
        """
        return self.sigma_n2 / self.coherence_time


def spectral_efficiency(
    problem: TrainingProblem,
    alpha: float,
    *,
    units: str = "nats",
    snr_override: float | None = None,
) -> float:
    """Spectral efficiency of the data symbols at training proportion alpha.

    Sets the estimation-error variance to sigma_n^2/(alpha M), solves the
    compensated linear-receiver efficiency at that error, and returns
    ``(1 - alpha) * log(1 + eta * SNR)``.

    Parameters
    ----------
    problem : TrainingProblem
    alpha : float
        Training proportion, strictly inside (0, 1).
    units : {"nats", "bits"}
        Base of the logarithm (natural by default).
    snr_override : float, optional
        Replaces the default SNR = 1/sigma_n^2 inside the logarithm
        (the efficiency solve always uses the problem's sigma_n^2).

    Returns
    -------
    float

    Raises
    ------
    ValueError
        If alpha is outside (0, 1), or too small for an admissible
        error variance (the message names the minimum feasible alpha).
    """
    if not isinstance(problem, TrainingProblem):
        raise TypeError(f"problem must be a TrainingProblem, got {problem!r}")
    if units not in ("nats", "bits"):
        raise ValueError(f'units must be "nats" or "bits", got {units!r}')
    if not (math.isfinite(alpha) and 0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    sigma_n2 = problem.sigma_n2
    delta_h2 = sigma_n2 / (alpha * problem.coherence_time)
    if delta_h2 >= 1.0:
        raise ValueError(
            f"alpha = {alpha} gives estimation-error variance {delta_h2:.6g} >= 1; "
            f"the minimum feasible alpha is {problem.min_alpha:.6g}"
        )
    params = SystemParams(beta=problem.beta, sigma_n2=sigma_n2, delta_h2=delta_h2)
    state = solve_linear(params, Mode.COMPENSATED, estimator=Estimator.ML)
    eta = multiuser_efficiency(state, sigma_n2)
    snr = 1.0 / sigma_n2 if snr_override is None else float(snr_override)
    if not (math.isfinite(snr) and snr > 0.0):
        raise ValueError(f"snr_override must be positive, got {snr_override}")
    value = (1.0 - alpha) * math.log1p(eta * snr)
    return value / math.log(2.0) if units == "bits" else value


def optimize_alpha(
    problem: TrainingProblem,
    *,
    units: str = "nats",
    snr_override: float | None = None,
) -> tuple[float, float]:
    """Training proportion maximizing the spectral efficiency.

    Scans a coarse grid of ``problem.alpha_grid`` points across the
    feasible range to bracket the global maximum, then refines with
    golden-section search to an alpha resolution of 1e-5. The returned
    value is the best over every point evaluated, so it is never below
    any coarse-grid value.

    Returns
    -------
    (alpha_star, value) : tuple of float

    Raises
    ------
    ValueError
        If no alpha in (0, 1) is feasible.
    """
    if not isinstance(problem, TrainingProblem):
        raise TypeError(f"problem must be a TrainingProblem, got {problem!r}")
    lower = problem.min_alpha
    if lower >= 1.0:
        raise ValueError(
            f"no feasible training proportion: even alpha -> 1 leaves the "
            f"estimation-error variance at {problem.min_alpha:.6g} >= 1 "
            f"(coherence_time {problem.coherence_time} is too short at this SNR)"
        )

    def value_at(alpha: float) -> float:
        return spectral_efficiency(
            problem, alpha, units=units, snr_override=snr_override
        )

    best_alpha = math.nan
    best_value = -math.inf

    def track(alpha: float, value: float) -> float:
        nonlocal best_alpha, best_value
        if value > best_value:
            best_alpha, best_value = alpha, value
        return value

    n = problem.alpha_grid
    step = (1.0 - lower) / (n + 1)
    grid = [lower + step * (i + 1) for i in range(n)]
    values = [track(a, value_at(a)) for a in grid]
    center = int(max(range(n), key=values.__getitem__))

    a = grid[center - 1] if center > 0 else max(lower * (1.0 + 1e-12), grid[0] - step)
    b = grid[center + 1] if center < n - 1 else min(1.0 - 1e-12, grid[-1] + step)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = track(x1, value_at(x1))
    f2 = track(x2, value_at(x2))
    while b - a > _ALPHA_TOL:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = track(x1, value_at(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = track(x2, value_at(x2))
    return best_alpha, best_value
