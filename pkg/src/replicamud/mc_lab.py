"""Finite-system Monte Carlo laboratory.

Generates synchronous DS-CDMA instances over frequency-selective fading
channels, injects ML- or MMSE-type channel-estimation errors, runs the
exact posterior-mean detector (via the enumeration kernel), the linear
MMSE detector and the matched-filter bank, and estimates bit error rates
with confidence information. Everything is deterministic given the
scenario seed; see ``_streams`` for how the seed is split.

Conventions: a system has K users, spreading gain N (so load beta = K/N)
and delay spread P chips. Codes are stored row-major, one user per row.
The received vector for symbol b is ``r = codes.T @ b / sqrt(N) + n`` with
noise variance sigma_n^2 per chip.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _streams
from ._kernels import io_soft_outputs
from .errors import ResourceLimitError
from .replica_solvers import Estimator, Mode

__all__ = [
    "CodeModel",
    "Detector",
    "Scenario",
    "Instance",
    "McResult",
    "generate_instance",
    "simulate_symbol",
    "detect_io",
    "detect_linear_mmse",
    "detect_mf",
    "run_ber_experiment",
]

# 2^24 hypotheses per symbol is the largest enumeration worth waiting for.
_MAX_IO_USERS = 24


class CodeModel(enum.Enum):
    """How the equivalent spreading codes are generated.

    CONVOLUTION builds them the physical way: i.i.d. +/-1 chips convolved
    (circularly, standing in for the chips of the neighbouring symbol
    periods) with Gaussian channel taps of variance 1/P. INDEPENDENT
    replaces each code by i.i.d. unit-variance Gaussian chips with the
    same error-correlation structure, the idealization the asymptotic
    analysis rests on.
    """

    CONVOLUTION = "convolution"
    INDEPENDENT = "independent"


class Detector(enum.Enum):
    """Receiver run by :func:`run_ber_experiment`."""

    IO_EXACT = "io_exact"
    LINEAR_MMSE = "linear_mmse"
    MF = "mf"


@dataclass(frozen=True)
class Scenario:
    """Complete description of one simulated system.

    Attributes
    ----------
    n_users, spreading_gain, delay_spread : int
        K, N and P. The delay spread may not exceed the spreading gain.
    sigma_n2 : float
        Noise variance per chip (inverse SNR).
    delta_h2 : float
        Per-chip variance of the equivalent-code estimation error;
        must be < 1 for the MMSE estimator.
    code_model : CodeModel
    estimator : Estimator
        Which estimation-error geometry is injected (ML: error
        independent of the truth; MMSE: error independent of the
        estimate).
    seed : int
        64-bit experiment seed; fixes every draw of the experiment.
    """

    n_users: int
    spreading_gain: int
    delay_spread: int
    sigma_n2: float
    delta_h2: float = 0.0
    code_model: CodeModel = CodeModel.CONVOLUTION
    estimator: Estimator = Estimator.ML
    seed: int = 0

    def __post_init__(self):
        for name in ("n_users", "spreading_gain", "delay_spread"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.delay_spread > self.spreading_gain:
            raise ValueError(
                f"delay_spread ({self.delay_spread}) must not exceed "
                f"spreading_gain ({self.spreading_gain})"
            )
        if not (math.isfinite(self.sigma_n2) and self.sigma_n2 > 0.0):
            raise ValueError(f"sigma_n2 must be positive, got {self.sigma_n2}")
        if not (math.isfinite(self.delta_h2) and self.delta_h2 >= 0.0):
            raise ValueError(f"delta_h2 must be >= 0, got {self.delta_h2}")
        if self.estimator is Estimator.MMSE and self.delta_h2 >= 1.0:
            raise ValueError(
                "MMSE estimation requires delta_h2 < 1 "
                f"(estimate variance 1 - delta_h2 must stay positive), got {self.delta_h2}"
            )
        if not isinstance(self.code_model, CodeModel):
            raise TypeError(f"code_model must be a CodeModel, got {self.code_model!r}")
        if not isinstance(self.estimator, Estimator):
            raise TypeError(f"estimator must be an Estimator, got {self.estimator!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not (
            0 <= self.seed < 2**64
        ):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

    @property
    def beta(self) -> float:
        """System load K/N."""
        return self.n_users / self.spreading_gain


@dataclass(frozen=True)
class Instance:
    """One realized system: true and estimated equivalent spreading codes.

    Attributes
    ----------
    true_codes, est_codes : np.ndarray, shape (K, N)
        Rows are per-user codes, normalized so the average chip energy
        is 1 (``||h_k||^2 / N`` concentrates on 1 for large P).
    noise_scale : float
        Noise standard deviation sigma_n per chip.
    delta_h2 : float
        Error variance the codes were generated with; carried so the
        compensated detectors can form their control parameters.
    """

    true_codes: np.ndarray
    est_codes: np.ndarray
    noise_scale: float
    delta_h2: float = 0.0

    def __post_init__(self):
        true_codes = np.ascontiguousarray(self.true_codes, dtype=np.float64)
        est_codes = np.ascontiguousarray(self.est_codes, dtype=np.float64)
        if true_codes.ndim != 2 or true_codes.shape != est_codes.shape:
            raise ValueError(
                "true_codes and est_codes must be equal-shape (K, N) matrices"
            )
        if not (np.isfinite(true_codes).all() and np.isfinite(est_codes).all()):
            raise ValueError("codes must be finite")
        if not (math.isfinite(self.noise_scale) and self.noise_scale >= 0.0):
            raise ValueError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if not (math.isfinite(self.delta_h2) and self.delta_h2 >= 0.0):
            raise ValueError(f"delta_h2 must be >= 0, got {self.delta_h2}")
        true_codes.setflags(write=False)
        est_codes.setflags(write=False)
        object.__setattr__(self, "true_codes", true_codes)
        object.__setattr__(self, "est_codes", est_codes)

    @property
    def n_users(self) -> int:
        return self.true_codes.shape[0]

    @property
    def spreading_gain(self) -> int:
        return self.true_codes.shape[1]


@dataclass(frozen=True)
class McResult:
    """Bit-error-rate estimate with confidence information.

    ``std_err`` is the binomial standard error sqrt(ber(1-ber)/trials)
    over all counted bit decisions. ``per_instance_ber`` keeps the BER of
    each instance redraw so callers can also form the (more conservative)
    standard error of the mean across redraws, which includes
    instance-to-instance variation.
    """

    ber: float
    trials: int
    std_err: float
    per_instance_ber: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not (0.0 <= self.ber <= 1.0):
            raise ValueError(f"ber must be in [0, 1], got {self.ber}")
        if not isinstance(self.trials, int) or isinstance(self.trials, bool) or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        expected = math.sqrt(self.ber * (1.0 - self.ber) / self.trials)
        if abs(self.std_err - expected) > 1e-12 + 1e-9 * expected:
            raise ValueError(
                f"std_err {self.std_err} inconsistent with ber/trials (expected {expected})"
            )

    @property
    def instance_sem(self) -> float:
        """Standard error of the mean over instance redraws (NaN if < 2)."""
        if len(self.per_instance_ber) < 2:
            return float("nan")
        arr = np.asarray(self.per_instance_ber)
        return float(arr.std(ddof=1) / math.sqrt(len(arr)))


def _circular_convolve(chips: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Length-N circular convolution of +/-1 chips with P channel taps."""
    full = np.convolve(chips, taps)  # length N + P - 1
    n = chips.shape[0]
    out = full[:n].copy()
    out[: full.shape[0] - n] += full[n:]
    return out


def generate_instance(scenario: Scenario, redraw: int = 0) -> Instance:
    """Draw one system instance from the scenario's instance stream.

    CONVOLUTION model: per user, draws the +/-1 chips, then the channel
    taps (variance 1/P), then the estimation error; the equivalent codes
    are the circular convolution of chips and taps, so the average chip
    energy is exactly 1 in expectation. ML estimation subtracts an
    independent error from the true taps (error variance delta_h2/P);
    MMSE estimation draws the estimate first (variance (1-delta_h2)/P)
    and adds an independent error to form the truth, so the error is
    uncorrelated with the estimate. INDEPENDENT model: the same joint
    law, chip by chip, with unit-variance Gaussian codes.

    Parameters
    ----------
    scenario : Scenario
    redraw : int
        Index of the instance substream; each value gives an independent
        instance under the same seed.

    Returns
    -------
    Instance
    """
    if not isinstance(scenario, Scenario):
        raise TypeError(f"scenario must be a Scenario, got {scenario!r}")
    if not isinstance(redraw, int) or isinstance(redraw, bool) or redraw < 0:
        raise ValueError(f"redraw must be a nonnegative integer, got {redraw!r}")
    rng = _streams.instance_stream(scenario.seed, redraw)
    n_users = scenario.n_users
    gain = scenario.spreading_gain
    spread = scenario.delay_spread
    delta = scenario.delta_h2

    if scenario.code_model is CodeModel.CONVOLUTION:
        chips = 2.0 * rng.integers(0, 2, size=(n_users, gain)) - 1.0
        if scenario.estimator is Estimator.ML:
            taps = _streams.normal(rng, (n_users, spread)) / math.sqrt(spread)
            err = _streams.normal(rng, (n_users, spread)) * math.sqrt(delta / spread)
            est_taps = taps - err
        else:
            est_taps = _streams.normal(rng, (n_users, spread)) * math.sqrt(
                (1.0 - delta) / spread
            )
            err = _streams.normal(rng, (n_users, spread)) * math.sqrt(delta / spread)
            taps = est_taps + err
        true_codes = np.empty((n_users, gain))
        est_codes = np.empty((n_users, gain))
        for k in range(n_users):
            true_codes[k] = _circular_convolve(chips[k], taps[k])
            est_codes[k] = _circular_convolve(chips[k], est_taps[k])
    else:
        if scenario.estimator is Estimator.ML:
            true_codes = _streams.normal(rng, (n_users, gain))
            err = _streams.normal(rng, (n_users, gain)) * math.sqrt(delta)
            est_codes = true_codes - err
        else:
            est_codes = _streams.normal(rng, (n_users, gain)) * math.sqrt(1.0 - delta)
            err = _streams.normal(rng, (n_users, gain)) * math.sqrt(delta)
            true_codes = est_codes + err

    return Instance(
        true_codes=true_codes,
        est_codes=est_codes,
        noise_scale=math.sqrt(scenario.sigma_n2),
        delta_h2=delta,
    )


def simulate_symbol(instance: Instance, bits, noise) -> np.ndarray:
    """Received chips for one symbol period: ``codes.T @ b / sqrt(N) + n``.

    Parameters
    ----------
    instance : Instance
    bits : array-like, shape (K,)
        Transmitted +/-1 symbols, one per user.
    noise : int or np.random.Generator
        Noise stream (or a seed for a fresh one); the noise is
        ``noise_scale`` times standard normal per chip.

    Returns
    -------
    np.ndarray, shape (N,)
    """
    bits = np.asarray(bits, dtype=np.float64)
    if bits.shape != (instance.n_users,):
        raise ValueError(
            f"bits must have shape ({instance.n_users},), got {bits.shape}"
        )
    if not np.all(np.abs(bits) == 1.0):
        raise ValueError("bits must all be +1 or -1")
    if isinstance(noise, (int, np.integer)) and not isinstance(noise, bool):
        rng = _streams.symbol_stream(int(noise), 0, 0)
    elif isinstance(noise, np.random.Generator):
        rng = noise
    else:
        raise TypeError(f"noise must be an int seed or a Generator, got {noise!r}")
    gain = instance.spreading_gain
    clean = instance.true_codes.T @ bits / math.sqrt(gain)
    return clean + instance.noise_scale * _streams.normal(rng, gain)


def _control_parameters(
    instance: Instance, mode: Mode, estimator: Estimator, sigma2_override
) -> tuple[np.ndarray, float]:
    """Code matrix and control sigma^2 the detector should run with."""
    if not isinstance(mode, Mode):
        raise TypeError(f"mode must be a Mode, got {mode!r}")
    if not isinstance(estimator, Estimator):
        raise TypeError(f"estimator must be an Estimator, got {estimator!r}")
    if mode is Mode.PERFECT:
        raise ValueError("perfect CSI is Mode.DIRECT with delta_h2 = 0")
    sigma_n2 = instance.noise_scale**2
    if mode is Mode.DIRECT:
        sigma2 = sigma_n2 if sigma2_override is None else float(sigma2_override)
        if not (math.isfinite(sigma2) and sigma2 >= 0.0):
            raise ValueError(f"sigma2_override must be >= 0, got {sigma2_override}")
        return instance.est_codes, sigma2
    if sigma2_override is not None:
        raise ValueError("sigma2_override only applies to Mode.DIRECT")
    beta = instance.n_users / instance.spreading_gain
    delta = instance.delta_h2
    if estimator is Estimator.ML:
        codes = instance.est_codes / (1.0 + delta)
        sigma2 = sigma_n2 + beta * delta / (1.0 + delta)
    else:
        codes = instance.est_codes
        sigma2 = sigma_n2 + beta * delta
    return codes, sigma2


def _as_symbol_batch(received, gain: int) -> tuple[np.ndarray, bool]:
    received = np.asarray(received, dtype=np.float64)
    single = received.ndim == 1
    if single:
        received = received[None, :]
    if received.ndim != 2 or received.shape[1] != gain:
        raise ValueError(f"received must have {gain} chips per symbol")
    return received, single


def detect_io(
    instance: Instance,
    received,
    mode: Mode = Mode.DIRECT,
    *,
    estimator: Estimator = Estimator.ML,
    sigma2_override: float | None = None,
) -> np.ndarray:
    """Soft outputs of the exact posterior-mean detector.

    Enumerates all 2^K bit vectors per symbol (log-sum-exp stabilized)
    and returns the posterior mean of each bit, computed from the
    estimated codes with the mode's scaling and control variance:
    DIRECT uses the estimates as-is with sigma^2 = sigma_n^2 (or the
    override, e.g. 0 for jointly-optimal decisions); COMPENSATED applies
    the error-aware control parameters (ML estimation: codes scaled by
    1/(1+delta_h2), sigma^2 = sigma_n2 + beta*delta_h2/(1+delta_h2);
    MMSE estimation: codes unscaled, sigma^2 = sigma_n2 + beta*delta_h2),
    with beta = K/N of the instance.

    Parameters
    ----------
    instance : Instance
    received : array-like, shape (N,) or (T, N)
        One symbol or a batch.
    mode : Mode
    estimator : Estimator
        Which compensation to apply (ignored for DIRECT).
    sigma2_override : float, optional
        Replaces the control variance; DIRECT mode only.

    Returns
    -------
    np.ndarray
        Soft outputs in [-1, 1]; shape (K,) for a single symbol,
        (T, K) for a batch.
    """
    if instance.n_users > _MAX_IO_USERS:
        raise ResourceLimitError(
            f"exact detection enumerates 2^K hypotheses; K = {instance.n_users} "
            f"exceeds the supported limit of {_MAX_IO_USERS}"
        )
    codes, sigma2 = _control_parameters(instance, mode, estimator, sigma2_override)
    received, single = _as_symbol_batch(received, instance.spreading_gain)
    gain = instance.spreading_gain
    if sigma2 == 0.0:
        # Jointly-optimal limit: harden via a variance far below the
        # coldest log-weight gap instead of dividing by zero.
        sigma2 = 1e-12
    corr = received @ codes.T / (math.sqrt(gain) * sigma2)
    quad = codes @ codes.T / (2.0 * gain * sigma2)
    soft = io_soft_outputs(corr, quad)
    return soft[0] if single else soft


def detect_linear_mmse(
    instance: Instance,
    received,
    mode: Mode = Mode.DIRECT,
    *,
    estimator: Estimator = Estimator.ML,
) -> np.ndarray:
    """Outputs of the linear MMSE filter bank built from the estimates.

    Returns ``(G + sigma^2 I)^{-1} codes @ r / sqrt(N)`` with
    ``G = codes @ codes.T / N``, using the same mode-dependent code
    scaling and control variance as :func:`detect_io`. Decisions are by
    sign. The normal matrix is positive definite whenever sigma^2 > 0;
    a singular system (possible only at sigma^2 = 0) surfaces as
    ``numpy.linalg.LinAlgError``.
    """
    codes, sigma2 = _control_parameters(instance, mode, estimator, None)
    received, single = _as_symbol_batch(received, instance.spreading_gain)
    gain = instance.spreading_gain
    gram = codes @ codes.T / gain
    gram = gram + sigma2 * np.eye(instance.n_users)
    matched = received @ codes.T / math.sqrt(gain)
    soft = np.linalg.solve(gram, matched.T).T
    return soft[0] if single else soft


def detect_mf(instance: Instance, received) -> np.ndarray:
    """Matched-filter bank ``est_codes @ r / sqrt(N)`` (the infinite-
    control-variance limit of the posterior ratio; sign decisions)."""
    received, single = _as_symbol_batch(received, instance.spreading_gain)
    soft = received @ instance.est_codes.T / math.sqrt(instance.spreading_gain)
    return soft[0] if single else soft


def run_ber_experiment(
    scenario: Scenario,
    detector: Detector,
    mode: Mode = Mode.DIRECT,
    trials: int = 1000,
    instance_redraws: int = 1,
    *,
    estimator: Estimator | None = None,
) -> McResult:
    """Estimate the bit error rate of a detector on a scenario.

    Averages over ``instance_redraws`` independent instances with
    ``trials`` symbol periods each (fresh bits and noise per symbol,
    from fixed per-trial substreams), counting sign errors across all
    users. Deterministic given the scenario seed and independent of any
    batching or parallel scheduling.

    Parameters
    ----------
    scenario : Scenario
    detector : Detector
    mode : Mode
        Control-parameter mode for IO_EXACT / LINEAR_MMSE (MF has none).
    trials : int
        Symbols per instance; at least 1000 (below that the binomial
        error bar is too wide to mean anything).
    instance_redraws : int
        Independent instance draws to average over.
    estimator : Estimator, optional
        Compensation to apply in COMPENSATED mode; defaults to the
        scenario's estimator.

    Returns
    -------
    McResult
    """
    if not isinstance(scenario, Scenario):
        raise TypeError(f"scenario must be a Scenario, got {scenario!r}")
    if not isinstance(detector, Detector):
        raise TypeError(f"detector must be a Detector, got {detector!r}")
    if not isinstance(trials, int) or isinstance(trials, bool) or trials < 1000:
        raise ValueError(f"trials must be an integer >= 1000, got {trials!r}")
    if (
        not isinstance(instance_redraws, int)
        or isinstance(instance_redraws, bool)
        or instance_redraws < 1
    ):
        raise ValueError(
            f"instance_redraws must be a positive integer, got {instance_redraws!r}"
        )
    if detector is Detector.IO_EXACT and scenario.n_users > _MAX_IO_USERS:
        raise ResourceLimitError(
            f"exact detection enumerates 2^K hypotheses; K = {scenario.n_users} "
            f"exceeds the supported limit of {_MAX_IO_USERS}"
        )
    if estimator is None:
        estimator = scenario.estimator

    n_users = scenario.n_users
    gain = scenario.spreading_gain
    per_instance = []
    total_errors = 0
    for redraw in range(instance_redraws):
        instance = generate_instance(scenario, redraw)
        bits = np.empty((trials, n_users))
        received = np.empty((trials, gain))
        for trial in range(trials):
            rng = _streams.symbol_stream(scenario.seed, redraw, trial)
            b = 2.0 * rng.integers(0, 2, size=n_users) - 1.0
            bits[trial] = b
            received[trial] = simulate_symbol(instance, b, rng)
        if detector is Detector.IO_EXACT:
            soft = detect_io(instance, received, mode, estimator=estimator)
        elif detector is Detector.LINEAR_MMSE:
            soft = detect_linear_mmse(instance, received, mode, estimator=estimator)
        else:
            soft = detect_mf(instance, received)
        errors = int(np.sum((soft > 0.0) != (bits > 0.0)))
        total_errors += errors
        per_instance.append(errors / (trials * n_users))

    count = trials * n_users * instance_redraws
    ber = total_errors / count
    return McResult(
        ber=ber,
        trials=count,
        std_err=math.sqrt(ber * (1.0 - ber) / count),
        per_instance_ber=tuple(per_instance),
    )
