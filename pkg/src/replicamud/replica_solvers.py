"""Fixed-point solvers for the large-system analysis of the optimal detector.

The individually optimal (posterior-mean) multiuser detector in the
large-system limit is characterized by four coupled order parameters:

* ``m`` - overlap of the soft output with the transmitted bit,
* ``q`` - self-overlap (second moment) of the soft output,
* ``E`` - effective single-user channel gain,
* ``F`` - effective single-user noise level,

solved self-consistently: (m, q) are Gaussian expectations of tanh and
tanh^2 at argument sqrt(F) z + E, while (E, F) are rational functions of
(m, q) whose exact shape depends on how the receiver treats its channel
estimates:

* ``Mode.PERFECT`` - receiver knows the channel exactly.
* ``Mode.DIRECT`` - receiver plugs the (noisy) estimates in as if exact.
* ``Mode.COMPENSATED`` - receiver additionally rescales the estimated
  codes and inflates its noise variance to account for the estimation
  error statistics; this is the posterior-mean detector that is actually
  optimal given the estimates. The effective noise variance is forced
  internally in this mode (``sigma_n^2 + beta D/(1+D)`` for ML estimation
  with D = delta_h2, ``sigma_n^2 + beta D`` for MMSE estimation).

The two estimation models differ in their error geometry: ML estimation
errors are uncorrelated with the true channel (estimate energy 1 + D),
MMSE estimation errors are uncorrelated with the estimate itself
(estimate energy 1 - D, requiring D < 1).

Once a state is solved, closed forms give the bit error rate Q(E/sqrt(F)),
the detector output SINR, the multiuser efficiency, and the free energy
used to rank coexisting solution branches (the thermodynamically dominant
branch maximizes it).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from scipy.special import erfc

from .errors import ConvergenceError
from .gauss_quad import Integrand, QuadratureRule, gauss_expect, make_rule

__all__ = [
    "Estimator",
    "Mode",
    "SystemParams",
    "ReplicaState",
    "ReceiverSpec",
    "SolverConfig",
    "BranchResult",
    "solve_fixed_point",
    "solve_all_branches",
    "ber",
    "sinr",
    "free_energy",
    "multiuser_efficiency",
]

# Residual a state must satisfy before free_energy / sinr accept it.
_STATE_RESIDUAL_TOL = 1e-6

# States closer than this (max-norm) are considered the same branch.
_BRANCH_DEDUP_TOL = 1e-6


class Estimator(enum.Enum):
    """Channel estimation model assumed by the receiver."""

    ML = "ml"
    MMSE = "mmse"


class Mode(enum.Enum):
    """How the receiver uses its channel estimates."""

    PERFECT = "perfect"
    DIRECT = "direct"
    COMPENSATED = "compensated"


def _check_positive_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite real, got {value}")
    return value


@dataclass(frozen=True)
class SystemParams:
    """System load and noise description.

    Attributes
    ----------
    beta : float
        Load (users per chip), > 0.
    sigma_n2 : float
        True channel noise variance, > 0.
    delta_h2 : float
        Per-chip channel estimation error variance, >= 0 (and < 1 whenever
        an MMSE-estimation receiver is solved).
    sigma2 : float
        Noise variance assumed by the detector, > 0 and finite. The
        zero-noise and infinite-noise detector limits are approximated by
        callers with small/large finite values (e.g. 1e-6 / 1e6);
        compensated modes override this field internally.
    """

    beta: float
    sigma_n2: float
    delta_h2: float = 0.0
    sigma2: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", _check_positive_finite("beta", self.beta))
        object.__setattr__(self, "sigma_n2", _check_positive_finite("sigma_n2", self.sigma_n2))
        delta = float(self.delta_h2)
        if not math.isfinite(delta) or delta < 0.0:
            raise ValueError(f"delta_h2 must be a finite real >= 0, got {delta}")
        object.__setattr__(self, "delta_h2", delta)
        sigma2 = self.sigma_n2 if self.sigma2 is None else self.sigma2
        object.__setattr__(self, "sigma2", _check_positive_finite("sigma2", sigma2))


@dataclass(frozen=True)
class ReplicaState:
    """Order-parameter vector (m, q, E, F)."""

    m: float
    q: float
    E: float
    F: float

    def __post_init__(self):
        for name in ("m", "q", "E", "F"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.q < self.m * self.m - 1e-9:
            raise ValueError(f"q must satisfy q >= m^2 (got m={self.m}, q={self.q})")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.m, self.q, self.E, self.F)


@dataclass(frozen=True)
class ReceiverSpec:
    """Receiver description: estimation model and how estimates are used.

    ``estimator`` is ignored in ``Mode.PERFECT``.
    """

    estimator: Estimator = Estimator.ML
    mode: Mode = Mode.DIRECT

    def __post_init__(self):
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        object.__setattr__(self, "mode", Mode(self.mode))


@dataclass(frozen=True)
class SolverConfig:
    """Damped fixed-point iteration controls."""

    tol: float = 1e-12
    max_iter: int = 10_000
    damping: float = 0.5
    quad_order: int = 61
    init: ReplicaState | None = None

    def __post_init__(self):
        if not (0.0 < float(self.tol) < math.inf):
            raise ValueError(f"tol must be positive and finite, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not (0.0 < float(self.damping) <= 1.0):
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if int(self.quad_order) < 1:
            raise ValueError(f"quad_order must be >= 1, got {self.quad_order}")


@dataclass(frozen=True)
class BranchResult:
    """All converged solution branches plus the selected (dominant) one."""

    states: tuple[ReplicaState, ...]
    free_energies: tuple[float, ...]
    selected_index: int

    @property
    def selected(self) -> ReplicaState:
        return self.states[self.selected_index]


def _effective_sigma2(params: SystemParams, spec: ReceiverSpec) -> float:
    """Detector noise variance actually used by the given receiver."""
    if spec.mode is Mode.COMPENSATED:
        d = params.delta_h2
        if spec.estimator is Estimator.ML:
            return params.sigma_n2 + params.beta * d / (1.0 + d)
        return params.sigma_n2 + params.beta * d
    return params.sigma2


def _validate_estimator(params: SystemParams, spec: ReceiverSpec) -> None:
    if (
        spec.mode is not Mode.PERFECT
        and spec.estimator is Estimator.MMSE
        and params.delta_h2 >= 1.0
    ):
        raise ValueError(
            "MMSE estimation requires delta_h2 < 1 "
            f"(estimate energy 1 - delta_h2 must stay positive), got {params.delta_h2}"
        )


def _ef_update(params: SystemParams, spec: ReceiverSpec, cmmse_form: str):
    """Return the (m, q) -> (E, F) map for this receiver variant.

    All variants share the template E = gain / den, F = level / den^2 with
    den affine in q; the coefficients encode how estimation error enters
    the effective single-user channel.
    """
    beta = params.beta
    b0 = beta / params.sigma_n2
    d = params.delta_h2
    b = beta / _effective_sigma2(params, spec)
    inv_beta = 1.0 / beta

    if spec.mode is Mode.PERFECT:

        def update(m: float, q: float) -> tuple[float, float]:
            den = 1.0 + b * (1.0 - q)
            e = inv_beta * b / den
            f = inv_beta * b * b * (1.0 / b0 + 1.0 - 2.0 * m + q) / (den * den)
            return e, f

        return update

    if spec.mode is Mode.DIRECT:
        if spec.estimator is Estimator.ML:

            def update(m: float, q: float) -> tuple[float, float]:
                den = 1.0 + b * (1.0 - q) * (1.0 + d)
                e = inv_beta * b / den
                f = (
                    (1.0 + d)
                    * inv_beta
                    * b
                    * b
                    * (1.0 / b0 + 1.0 - 2.0 * m + (1.0 + d) * q)
                    / (den * den)
                )
                return e, f

            return update

        def update(m: float, q: float) -> tuple[float, float]:
            den = 1.0 + b * (1.0 - q) * (1.0 - d)
            e = inv_beta * b * (1.0 - d) / den
            f = (
                inv_beta
                * b
                * b
                * (1.0 - d)
                * (1.0 / b0 + 1.0 - (1.0 - d) * (2.0 * m - q))
                / (den * den)
            )
            return e, f

        return update

    # Compensated modes: written in terms of b0 (the forced sigma^2 is
    # already folded into these shapes).
    if spec.estimator is Estimator.ML:

        def update(m: float, q: float) -> tuple[float, float]:
            den = 1.0 + d + b0 * (1.0 + d - q)
            e = inv_beta * b0 / den
            f = (
                inv_beta
                * b0
                * b0
                * ((1.0 / b0 + 1.0) * (1.0 + d) - 2.0 * m + q)
                / (den * den)
            )
            return e, f

        return update

    if cmmse_form == "consistent":

        def update(m: float, q: float) -> tuple[float, float]:
            den = 1.0 + b0 * (1.0 - (1.0 - d) * q)
            e = inv_beta * b0 * (1.0 - d) / den
            f = (
                inv_beta
                * b0
                * b0
                * (1.0 - d)
                * (1.0 / b0 + 1.0 - (1.0 - d) * (2.0 * m - q))
                / (den * den)
            )
            return e, f

        return update

    if cmmse_form == "truncated":
        # Variant that drops the additive unit term from the F numerator.
        # Kept selectable for comparison; it does not reduce to the
        # perfect-CSI equations as delta_h2 -> 0 (the numerator can even go
        # negative, clamped here), so "consistent" is the default.

        def update(m: float, q: float) -> tuple[float, float]:
            den = 1.0 + b0 * (1.0 - (1.0 - d) * q)
            e = inv_beta * b0 * (1.0 - d) / den
            f = (
                inv_beta
                * b0
                * b0
                * (1.0 - d)
                * max(1.0 / b0 - (1.0 - d) * (2.0 * m - q), 0.0)
                / (den * den)
            )
            return e, f

        return update

    raise ValueError(f"cmmse_form must be 'consistent' or 'truncated', got {cmmse_form!r}")


def _mq_update(rule: QuadratureRule, E: float, F: float) -> tuple[float, float]:
    m = gauss_expect(rule, Integrand.TANH, E, F)
    q = gauss_expect(rule, Integrand.TANH_SQ, E, F)
    return m, q


def _default_init(update_ef) -> ReplicaState:
    e, f = update_ef(0.5, 0.5)
    return ReplicaState(m=0.5, q=0.5, E=e, F=f)


def solve_fixed_point(
    params: SystemParams,
    spec: ReceiverSpec,
    config: SolverConfig | None = None,
    *,
    cmmse_form: str = "consistent",
) -> ReplicaState:
    """Solve the coupled (m, q, E, F) equations by damped iteration.

    Each sweep updates (m, q) from the current (E, F) via Gaussian
    quadrature, then (E, F) from the damped (m, q); new values are blended
    as x <- (1 - damping) x + damping * proposal. The iteration stops once
    the maximum absolute mismatch of all four update maps within a sweep
    falls below ``config.tol``.

    Raises
    ------
    ConvergenceError
        If the residual does not reach tol within max_iter sweeps; the
        exception carries the last state and residual.
    """
    config = config or SolverConfig()
    _validate_estimator(params, spec)
    update_ef = _ef_update(params, spec, cmmse_form)
    rule = make_rule(config.quad_order)
    state = config.init if config.init is not None else _default_init(update_ef)

    m, q, e, f = state.m, state.q, state.E, state.F
    damping = config.damping
    residual = math.inf
    for _ in range(int(config.max_iter)):
        m_prop, q_prop = _mq_update(rule, e, f)
        residual = max(abs(m_prop - m), abs(q_prop - q))
        m += damping * (m_prop - m)
        q += damping * (q_prop - q)
        e_prop, f_prop = update_ef(m, q)
        residual = max(residual, abs(e_prop - e), abs(f_prop - f))
        e += damping * (e_prop - e)
        f += damping * (f_prop - f)
        if residual < config.tol:
            return ReplicaState(m=m, q=q, E=e, F=f)
    raise ConvergenceError(
        f"fixed point not converged after {config.max_iter} sweeps "
        f"(residual {residual:.3e}, tol {config.tol:.3e})",
        state=ReplicaState(m=m, q=q, E=e, F=f),
        residual=residual,
    )


_BRANCH_INITS = ((0.01, 0.01), (0.5, 0.5), (0.99, 0.99))


def solve_all_branches(
    params: SystemParams,
    spec: ReceiverSpec,
    config: SolverConfig | None = None,
    *,
    cmmse_form: str = "consistent",
) -> BranchResult:
    """Solve from several initializations and rank coexisting branches.

    Runs the damped iteration from (m, q) in {(0.01, 0.01), (0.5, 0.5),
    (0.99, 0.99)} (with (E, F) seeded from the variant's map), deduplicates
    states agreeing within 1e-6 (max-norm), and selects the branch with the
    largest free energy. Initializations that fail to converge are dropped;
    if none converge the last failure is re-raised.
    """
    config = config or SolverConfig()
    update_ef = _ef_update(params, spec, cmmse_form)
    states: list[ReplicaState] = []
    last_failure: ConvergenceError | None = None
    for m0, q0 in _BRANCH_INITS:
        e0, f0 = update_ef(m0, q0)
        init = ReplicaState(m=m0, q=q0, E=e0, F=f0)
        try:
            state = solve_fixed_point(
                params, spec, replace(config, init=init), cmmse_form=cmmse_form
            )
        except ConvergenceError as exc:
            last_failure = exc
            continue
        if not any(
            max(
                abs(a - b)
                for a, b in zip(state.as_tuple(), known.as_tuple())
            )
            < _BRANCH_DEDUP_TOL
            for known in states
        ):
            states.append(state)
    if not states:
        assert last_failure is not None
        raise last_failure
    energies = [
        free_energy(params, spec, s, quad_order=config.quad_order, cmmse_form=cmmse_form)
        for s in states
    ]
    selected = max(range(len(states)), key=energies.__getitem__)
    return BranchResult(tuple(states), tuple(energies), selected)


def ber(state: ReplicaState) -> float:
    """Bit error rate of the equivalent single-user channel, Q(E/sqrt(F)).

    Requires F > 0, or the degenerate noiseless cases F = 0 with E > 0
    (error-free) and E = F = 0 (blind guessing).
    """
    if state.F < 0.0:
        raise ValueError(f"F must be >= 0, got {state.F}")
    if state.F == 0.0:
        if state.E > 0.0:
            return 0.0
        if state.E == 0.0:
            return 0.5
        raise ValueError(f"F = 0 requires E >= 0, got E={state.E}")
    # Q(x) = erfc(x / sqrt(2)) / 2
    return 0.5 * float(erfc(state.E / math.sqrt(state.F) / math.sqrt(2.0)))


def _residual(
    params: SystemParams,
    spec: ReceiverSpec,
    state: ReplicaState,
    rule: QuadratureRule,
    cmmse_form: str = "consistent",
) -> float:
    update_ef = _ef_update(params, spec, cmmse_form)
    m_prop, q_prop = _mq_update(rule, state.E, state.F)
    e_prop, f_prop = update_ef(state.m, state.q)
    return max(
        abs(m_prop - state.m),
        abs(q_prop - state.q),
        abs(e_prop - state.E),
        abs(f_prop - state.F),
    )


def _require_solved(
    params: SystemParams,
    spec: ReceiverSpec,
    state: ReplicaState,
    quad_order: int,
    caller: str,
    cmmse_form: str = "consistent",
) -> None:
    res = _residual(params, spec, state, make_rule(quad_order), cmmse_form)
    if res > _STATE_RESIDUAL_TOL:
        raise ValueError(
            f"{caller} requires a solved state for these parameters "
            f"(fixed-point residual {res:.3e} exceeds {_STATE_RESIDUAL_TOL:.1e})"
        )


def sinr(params: SystemParams, spec: ReceiverSpec, state: ReplicaState) -> float:
    """Output SINR of the detector's equivalent single-user channel.

    Evaluates the closed form of the receiver variant at the solved state
    (the state is verified against the fixed-point equations first). For
    compensated receivers this coincides with E^2/F of the state.
    """
    _validate_estimator(params, spec)
    _require_solved(params, spec, state, 61, "sinr")
    beta, sn2, d = params.beta, params.sigma_n2, params.delta_h2
    m, q = state.m, state.q
    if spec.mode is Mode.PERFECT:
        return 1.0 / (sn2 + beta * (1.0 - 2.0 * m + q))
    if spec.mode is Mode.DIRECT:
        if spec.estimator is Estimator.ML:
            return 1.0 / ((1.0 + d) * (sn2 + beta * (1.0 - 2.0 * m + (1.0 + d) * q)))
        return (1.0 - d) / (sn2 + beta * (1.0 - (1.0 - d) * (2.0 * m - q)))
    if spec.estimator is Estimator.ML:
        return 1.0 / (sn2 * (1.0 + d) + beta * d + beta * (1.0 - q))
    return (1.0 - d) / (sn2 + beta * (1.0 - (1.0 - d) * q))


def free_energy(
    params: SystemParams,
    spec: ReceiverSpec,
    state: ReplicaState,
    *,
    quad_order: int = 61,
    cmmse_form: str = "consistent",
) -> float:
    """Free energy of a solved state; larger values mark the dominant branch.

    The expression is the Gaussian log cosh average minus the order
    parameter couplings minus a variant-specific noise term. The state must
    satisfy the fixed-point equations within 1e-6.
    """
    _validate_estimator(params, spec)
    _require_solved(params, spec, state, quad_order, "free_energy", cmmse_form)
    rule = make_rule(quad_order)
    beta, sn2, d = params.beta, params.sigma_n2, params.delta_h2
    b0 = beta / sn2
    m, q, e, f = state.as_tuple()
    common = (
        gauss_expect(rule, Integrand.LOG_COSH, e, f)
        - e * m
        - f * (1.0 - q) / 2.0
    )
    b = beta / _effective_sigma2(params, spec)
    if spec.mode is Mode.PERFECT:
        noise_term = math.log1p((1.0 - q) * b) + b * (1.0 / b0 + 1.0 - 2.0 * m + q) / (
            1.0 + b * (1.0 - q)
        )
    elif spec.mode is Mode.DIRECT:
        if spec.estimator is Estimator.ML:
            noise_term = math.log1p((1.0 + d) * (1.0 - q) * b) + b * (
                1.0 / b0 + 1.0 - 2.0 * m + (1.0 + d) * q
            ) / (1.0 + b * (1.0 - q) * (1.0 + d))
        else:
            noise_term = math.log1p((1.0 - d) * (1.0 - q) * b) + b * (
                1.0 / b0 + 1.0 - (1.0 - d) * (2.0 * m - q)
            ) / (1.0 + b * (1.0 - q) * (1.0 - d))
    elif spec.estimator is Estimator.ML:
        noise_term = math.log1p(b * (1.0 - q) / (1.0 + d)) + b * (
            (1.0 / b0 + 1.0) * (1.0 + d) - 2.0 * m + q
        ) / (1.0 + d + b * (1.0 - q))
    else:
        noise_term = math.log1p((1.0 - d) * (1.0 - q) * b) + b * (
            1.0 / b0 + 1.0 - (1.0 - d) * (2.0 * m - q)
        ) / (1.0 + b * (1.0 - q) * (1.0 - d))
    return common - noise_term / (2.0 * beta)


def multiuser_efficiency(
    params: SystemParams,
    estimator: Estimator,
    config: SolverConfig | None = None,
) -> float:
    """Multiuser efficiency of the compensated receiver.

    Solves the scalar implicit equation

        1/eta + (beta/sigma_n^2) * E[tanh^2(sqrt(eta/sigma_n^2) z + eta/sigma_n^2)] = rhs

    with rhs = (1 + delta_h2)(1 + beta/sigma_n^2) for ML estimation and
    (1 + beta/sigma_n^2)/(1 - delta_h2) for MMSE estimation, by damped
    iteration on eta. The root equals sigma_n^2 * E of the corresponding
    compensated fixed point and lies in (0, 1].
    """
    config = config or SolverConfig()
    estimator = Estimator(estimator)
    _validate_estimator(params, ReceiverSpec(estimator=estimator, mode=Mode.COMPENSATED))
    b0 = params.beta / params.sigma_n2
    d = params.delta_h2
    if estimator is Estimator.ML:
        rhs = (1.0 + d) * (1.0 + b0)
    else:
        rhs = (1.0 + b0) / (1.0 - d)
    rule = make_rule(config.quad_order)
    sn2 = params.sigma_n2
    eta = 0.5
    for _ in range(int(config.max_iter)):
        arg = eta / sn2
        q = gauss_expect(rule, Integrand.TANH_SQ, arg, arg)
        eta_prop = 1.0 / (rhs - b0 * q)
        residual = abs(eta_prop - eta)
        eta += config.damping * (eta_prop - eta)
        if residual < config.tol:
            return eta
    raise ConvergenceError(
        f"multiuser efficiency not converged after {config.max_iter} sweeps",
        state=eta,
        residual=residual,
    )
