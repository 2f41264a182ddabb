"""Acceptance gate: one test per shipped guarantee, one verdict line each.

Run with ``pytest -v tests/test_acceptance.py``: each criterion is a
single test, so the -v output is the pass/fail report. Monte Carlo
criteria (5, 6, 7) share one cached measurement grid at the reference
geometry (10 users, gain 150, delay spread 50, noise 0.2) with 2e5 bits
and 20 instance redraws per point, twice the stated floor.

Two criteria are measurements we keep honestly red rather than widen:

* Criterion 6 expects the physical convolution code construction to be
  statistically indistinguishable from the independent-chip
  idealization. At delay spread P = N/3 it is not: the convolved codes
  share chips between users' effective sequences and fluctuate in
  received power, sitting 10-13% relative above the independent model
  in BER -- about 5 combined standard errors once the instance spread
  is resolved (1.6e6 bits, 160 redraws), at estimation error 0 through
  0.4. At the shared survey budget the per-point z-scores straddle 3
  and the verdict would depend on the seed, so the test re-measures
  five grid points at 8x redraws and fails on those decisively.

* Criterion 10 expects the optimal training fraction to be
  nondecreasing in the load beta. The optimized objective actually
  peaks near beta ~ 1.3 at 5 dB: alpha* rises from beta 0.5 to 1 and
  then falls slightly by beta 2, for every coherence time and both
  estimator variants, at 80x the optimizer's resolution. The
  monotone-in-coherence-time half holds and is asserted; the
  monotone-in-load half fails with the measured table in the message.

Criterion 5 passes at its stated budget. For calibration: the
independent-chip model itself sits a few percent relative above the
asymptotic predictions at 10 users (a real finite-size correction,
resolvable only beyond the stated budget); the criterion's error bars
bracket it by design ("agreement within error" at >= 1e5 bits).
"""

from __future__ import annotations

import functools
import itertools
import math

import numpy as np
import pytest

from replicamud import linear_turbo
from replicamud.gauss_quad import make_rule
from replicamud.linear_turbo import (
    FeedbackModel,
    FilterKind,
    PowerDistribution,
    solve_flat_fading,
    solve_linear,
    solve_pic,
)
from replicamud.mc_lab import (
    CodeModel,
    Detector,
    Instance,
    Scenario,
    detect_io,
    run_ber_experiment,
)
from replicamud.replica_solvers import (
    Estimator,
    Mode,
    ReceiverSpec,
    SystemParams,
    _ef_update,
    _mq_update,
    ber,
    solve_all_branches,
    solve_fixed_point,
)
from replicamud.training_designer import TrainingProblem, optimize_alpha

BETAS = (0.25, 0.5, 1.0, 2.0)
NOISES = (0.1, 0.2, 0.5)
DELTAS = (0.05, 0.1, 0.2, 0.4)

# Shared Monte Carlo grid (criteria 5, 6, 7a).
FIG_SYSTEM = dict(n_users=10, spreading_gain=150, delay_spread=50, sigma_n2=0.2)
FIG_BETA = FIG_SYSTEM["n_users"] / FIG_SYSTEM["spreading_gain"]
MC_GRID = (0.0, 0.1, 0.2, 0.3, 0.4)
MC_TRIALS = 1000
MC_REDRAWS = 20
MC_SEED = 2026
MC_COMBOS = tuple(
    (estimator, mode)
    for estimator in (Estimator.ML, Estimator.MMSE)
    for mode in (Mode.DIRECT, Mode.COMPENSATED)
)


@functools.lru_cache(maxsize=None)
def _mc(delta, detector, estimator, mode, code_model):
    if delta == 0.0:
        # With no estimation error every estimator/mode pair is the same
        # detector; collapse to one run so the cache stays small.
        estimator, mode = Estimator.ML, Mode.DIRECT
    scenario = Scenario(
        **FIG_SYSTEM,
        delta_h2=delta,
        code_model=code_model,
        estimator=estimator,
        seed=MC_SEED,
    )
    return run_ber_experiment(scenario, detector, mode, MC_TRIALS, MC_REDRAWS)


def _mc_se(result) -> float:
    """Standard error of one MC point: the binomial error bar or the
    spread across instance redraws, whichever is wider."""
    sem = result.instance_sem
    if math.isfinite(sem):
        return max(result.std_err, sem)
    return result.std_err


def _replica_ber(delta, detector, estimator, mode) -> float:
    params = SystemParams(beta=FIG_BETA, sigma_n2=FIG_SYSTEM["sigma_n2"], delta_h2=delta)
    if detector is Detector.IO_EXACT:
        spec = ReceiverSpec(estimator=estimator, mode=mode)
        return ber(solve_all_branches(params, spec).selected)
    state = solve_linear(params, mode, estimator=estimator)
    return linear_turbo.ber(state)


def test_criterion_01_perfect_csi_identities():
    worst_mq = worst_ef = 0.0
    for beta, sigma_n2 in itertools.product(BETAS, NOISES):
        params = SystemParams(beta=beta, sigma_n2=sigma_n2)
        spec = ReceiverSpec(estimator=Estimator.ML, mode=Mode.PERFECT)
        state = solve_all_branches(params, spec).selected
        worst_mq = max(worst_mq, abs(state.m - state.q))
        worst_ef = max(worst_ef, abs(state.E - state.F))
    print(f"criterion 1: max|m-q|={worst_mq:.2e} max|E-F|={worst_ef:.2e}")
    assert worst_mq < 1e-10
    assert worst_ef < 1e-10


def test_criterion_02_compensated_identity_restoration():
    worst_mq = worst_ef = 0.0
    for estimator, beta, delta in itertools.product(
        (Estimator.ML, Estimator.MMSE), BETAS, DELTAS
    ):
        params = SystemParams(beta=beta, sigma_n2=0.2, delta_h2=delta)
        spec = ReceiverSpec(estimator=estimator, mode=Mode.COMPENSATED)
        state = solve_all_branches(params, spec).selected
        worst_mq = max(worst_mq, abs(state.m - state.q))
        worst_ef = max(worst_ef, abs(state.E - state.F))
    print(f"criterion 2: max|m-q|={worst_mq:.2e} max|E-F|={worst_ef:.2e}")
    assert worst_mq < 1e-8
    assert worst_ef < 1e-8


def test_criterion_03_zero_error_reduction():
    # The selectable "truncated" compensated-MMSE form is excluded on
    # purpose: it is kept only for comparison and does not reduce, which
    # is precisely why the reducing "consistent" form is the default this
    # criterion pins.
    variants = [
        (Estimator.ML, Mode.DIRECT),
        (Estimator.MMSE, Mode.DIRECT),
        (Estimator.ML, Mode.COMPENSATED),
        (Estimator.MMSE, Mode.COMPENSATED),
    ]
    worst = 0.0
    for beta, sigma_n2 in itertools.product(BETAS, NOISES):
        params = SystemParams(beta=beta, sigma_n2=sigma_n2, delta_h2=0.0)
        reference = solve_all_branches(
            params, ReceiverSpec(estimator=Estimator.ML, mode=Mode.PERFECT)
        ).selected
        for estimator, mode in variants:
            state = solve_all_branches(
                params, ReceiverSpec(estimator=estimator, mode=mode)
            ).selected
            gap = max(
                abs(state.m - reference.m),
                abs(state.q - reference.q),
                abs(state.E - reference.E),
                abs(state.F - reference.F),
            )
            worst = max(worst, gap)
    print(f"criterion 3: max state gap vs perfect-CSI = {worst:.2e}")
    assert worst < 1e-10


def test_criterion_04_closed_form_linear_efficiency():
    params0 = SystemParams(beta=0.5, sigma_n2=0.2, delta_h2=0.0)
    eta0 = linear_turbo.multiuser_efficiency(
        solve_linear(params0, Mode.COMPENSATED, estimator=Estimator.ML), 0.2
    )
    root0 = (0.3 + math.sqrt(0.89)) / 2.0
    params1 = SystemParams(beta=0.5, sigma_n2=0.2, delta_h2=0.1)
    eta1 = linear_turbo.multiuser_efficiency(
        solve_linear(params1, Mode.COMPENSATED, estimator=Estimator.ML), 0.2
    )
    root1 = (0.23 + math.sqrt(0.23**2 + 4.0 * 1.35 * 0.2)) / (2.0 * 1.35)
    print(
        f"criterion 4: |eta-root| = {abs(eta0 - root0):.2e} (no error), "
        f"{abs(eta1 - root1):.2e} (error 0.1)"
    )
    assert eta0 == pytest.approx(root0, abs=1e-10)
    assert eta1 == pytest.approx(root1, abs=1e-10)


def test_criterion_05_monte_carlo_matches_predictions():
    worst = (0.0, None)
    lines = []
    for detector in (Detector.IO_EXACT, Detector.LINEAR_MMSE):
        for delta in MC_GRID:
            for estimator, mode in MC_COMBOS:
                result = _mc(delta, detector, estimator, mode, CodeModel.INDEPENDENT)
                predicted = _replica_ber(delta, detector, estimator, mode)
                sigmas = abs(result.ber - predicted) / _mc_se(result)
                label = (
                    f"{detector.name} d={delta} {estimator.name}/{mode.name}: "
                    f"mc={result.ber:.5f} pred={predicted:.5f} ({sigmas:.2f} se)"
                )
                lines.append(label)
                if sigmas > worst[0]:
                    worst = (sigmas, label)
    print("\n".join(lines))
    print(f"criterion 5: worst deviation {worst[0]:.2f} se at [{worst[1]}]")
    assert worst[0] < 3.0, f"worst MC-vs-prediction deviation: {worst[1]}"


# Grid points re-measured with 8x the instance redraws for criterion 6:
# at the shared budget the verdict on the code-model gap depends on the
# seed (2-5 combined standard errors), so these settle it.
BOOSTED_POINTS = (
    (Detector.IO_EXACT, 0.0, Estimator.ML, Mode.DIRECT),
    (Detector.IO_EXACT, 0.1, Estimator.ML, Mode.DIRECT),
    (Detector.IO_EXACT, 0.4, Estimator.ML, Mode.DIRECT),
    (Detector.LINEAR_MMSE, 0.1, Estimator.ML, Mode.DIRECT),
    (Detector.LINEAR_MMSE, 0.4, Estimator.MMSE, Mode.DIRECT),
)
BOOSTED_REDRAWS = 160


def test_criterion_06_code_model_equivalence():
    violations = []
    worst = (0.0, None)
    # Survey: every grid point of criterion 5, at the shared budget.
    for detector in (Detector.IO_EXACT, Detector.LINEAR_MMSE):
        for delta in MC_GRID:
            for estimator, mode in MC_COMBOS:
                conv = _mc(delta, detector, estimator, mode, CodeModel.CONVOLUTION)
                indep = _mc(delta, detector, estimator, mode, CodeModel.INDEPENDENT)
                combined = math.hypot(_mc_se(conv), _mc_se(indep))
                sigmas = abs(conv.ber - indep.ber) / combined
                label = (
                    f"survey  {detector.name} d={delta} {estimator.name}/{mode.name}: "
                    f"conv={conv.ber:.5f} indep={indep.ber:.5f} ({sigmas:.2f} se)"
                )
                if sigmas > worst[0]:
                    worst = (sigmas, label)
                if sigmas >= 3.0:
                    violations.append(label)
    # Verdict: the boosted points resolve the instance-to-instance spread
    # of the convolution construction, making the comparison seed-stable.
    for detector, delta, estimator, mode in BOOSTED_POINTS:
        pair = {}
        for model in (CodeModel.CONVOLUTION, CodeModel.INDEPENDENT):
            scenario = Scenario(
                **FIG_SYSTEM,
                delta_h2=delta,
                code_model=model,
                estimator=estimator,
                seed=MC_SEED,
            )
            pair[model] = run_ber_experiment(
                scenario, detector, mode, MC_TRIALS, BOOSTED_REDRAWS
            )
        conv = pair[CodeModel.CONVOLUTION]
        indep = pair[CodeModel.INDEPENDENT]
        combined = math.hypot(_mc_se(conv), _mc_se(indep))
        sigmas = abs(conv.ber - indep.ber) / combined
        label = (
            f"boosted {detector.name} d={delta} {estimator.name}/{mode.name}: "
            f"conv={conv.ber:.5f} indep={indep.ber:.5f} ({sigmas:.2f} se)"
        )
        if sigmas > worst[0]:
            worst = (sigmas, label)
        if sigmas >= 3.0:
            violations.append(label)
    print(f"criterion 6: worst code-model gap {worst[0]:.2f} se at [{worst[1]}]")
    assert not violations, (
        "convolution and independent code models are NOT statistically "
        f"equivalent at this geometry ({len(violations)} comparison(s) "
        "beyond 3 combined standard errors). With delay spread = gain/3 the "
        "convolved codes share chips and their received power fluctuates "
        "(chi-squared, ~2P effective degrees of freedom), lifting the BER "
        "10-13% relative above the independent-chip construction at every "
        "boosted point:\n" + "\n".join(violations)
    )


def test_criterion_07_orderings():
    # (a) compensation never hurts, measured; strictly better for ML
    #     estimation once the error is large.
    for detector in (Detector.IO_EXACT,):
        for delta in MC_GRID:
            for estimator in (Estimator.ML, Estimator.MMSE):
                direct = _mc(delta, detector, estimator, Mode.DIRECT, CodeModel.INDEPENDENT)
                comp = _mc(
                    delta, detector, estimator, Mode.COMPENSATED, CodeModel.INDEPENDENT
                )
                slack = 3.0 * math.hypot(_mc_se(direct), _mc_se(comp))
                assert comp.ber <= direct.ber + slack, (
                    f"compensated IO worse than direct at d={delta} {estimator.name}: "
                    f"{comp.ber:.5f} vs {direct.ber:.5f} (slack {slack:.5f})"
                )
                if estimator is Estimator.ML and delta >= 0.2:
                    assert comp.ber < direct.ber, (
                        f"no strict compensation gain at d={delta}: "
                        f"{comp.ber:.5f} vs {direct.ber:.5f}"
                    )
    # (b) predicted compensated BER: shipping the less informative (MMSE)
    #     error model never beats the ML one.
    worst = -1.0
    for beta in (FIG_BETA, 0.5, 2.0):
        for delta in (0.0, 0.05, 0.1, 0.2, 0.3, 0.4):
            params = SystemParams(beta=beta, sigma_n2=0.2, delta_h2=delta)
            ber_ml = ber(
                solve_all_branches(
                    params, ReceiverSpec(estimator=Estimator.ML, mode=Mode.COMPENSATED)
                ).selected
            )
            ber_mmse = ber(
                solve_all_branches(
                    params, ReceiverSpec(estimator=Estimator.MMSE, mode=Mode.COMPENSATED)
                ).selected
            )
            worst = max(worst, ber_ml - ber_mmse)
            assert ber_mmse >= ber_ml - 1e-12, (
                f"MMSE-estimation BER below ML at beta={beta}, d={delta}: "
                f"{ber_mmse:.6f} < {ber_ml:.6f}"
            )
    print(f"criterion 7: orderings hold (max ML-over-MMSE excess {worst:.2e})")


def test_criterion_08_unconditional_pic_equivalence():
    params = SystemParams(beta=0.5, sigma_n2=0.2)
    feedback = FeedbackModel(delta_b2=0.3, filter_kind=FilterKind.UNCONDITIONAL)
    shapes = [
        PowerDistribution.from_true_powers([0.5, 1.5], [0.5, 0.5]),
        PowerDistribution.from_true_powers([0.2, 0.6, 2.6], [0.25, 0.5, 0.25]),
        PowerDistribution.from_true_powers([0.1, 1.0, 1.9], [1 / 3, 1 / 3, 1 / 3]),
    ]
    etas = [
        linear_turbo.multiuser_efficiency(
            solve_pic(params, shape, feedback, estimator=Estimator.ML), 0.2, 0.3
        )
        for shape in shapes
    ]
    eta_equal = linear_turbo.multiuser_efficiency(
        solve_pic(params, PowerDistribution.equal_power(), feedback,
                  estimator=Estimator.ML),
        0.2,
        0.3,
    )
    spread = max(abs(eta - eta_equal) for eta in etas)
    print(f"criterion 8: unconditional-filter eta spread {spread:.2e}")
    for eta in etas:
        assert eta == pytest.approx(eta_equal, abs=1e-8)


def test_criterion_09_flat_fading_jensen_loss():
    rayleigh = PowerDistribution.rayleigh(64)
    equal = PowerDistribution.equal_power()
    lines = []
    for snr_db in (0.0, 4.0, 8.0, 12.0, 16.0, 20.0):
        sigma_n2 = 10.0 ** (-snr_db / 10.0)
        known = solve_flat_fading(0.5, sigma_n2, rayleigh, mismatched=False)
        mismatched = solve_flat_fading(0.5, sigma_n2, rayleigh, mismatched=True)
        eq = solve_flat_fading(0.5, sigma_n2, equal, mismatched=False)
        lines.append(
            f"snr={snr_db:4.1f} dB: known={known:.6f} "
            f"mismatched={mismatched:.6f} equal={eq:.6f}"
        )
        assert 0.0 < mismatched <= 1.0 and 0.0 < known <= 1.0
        # Ignoring the power spread costs efficiency at every SNR...
        assert mismatched <= known + 1e-12
        # ...and collapses exactly onto the equal-power system, while the
        # informed receiver benefits from the fading spread.
        assert mismatched == pytest.approx(eq, abs=1e-10)
        assert known >= eq - 1e-12
    print("criterion 9:\n" + "\n".join(lines))


def test_criterion_10_training_fraction_monotonicity():
    coherence_times = (50, 100, 200, 400, 800, 1600)
    loads = (0.5, 1.0, 2.0)
    tol = 2e-5  # twice the optimizer's alpha resolution
    alpha = {}
    for coherence_time in coherence_times:
        for beta in loads:
            problem = TrainingProblem(
                coherence_time=coherence_time, snr_db=5.0, beta=beta
            )
            alpha[coherence_time, beta] = optimize_alpha(problem)[0]
    lines = [
        f"M={coherence_time:5d}: "
        + "  ".join(
            f"beta={beta}: {alpha[coherence_time, beta]:.6f}" for beta in loads
        )
        for coherence_time in coherence_times
    ]
    print("criterion 10:\n" + "\n".join(lines))
    for beta in loads:
        for small, large in itertools.pairwise(coherence_times):
            assert alpha[large, beta] <= alpha[small, beta] + tol, (
                f"alpha* increased with coherence time at beta={beta}: "
                f"M={small}: {alpha[small, beta]:.6f} -> "
                f"M={large}: {alpha[large, beta]:.6f}"
            )
    violations = []
    for coherence_time in coherence_times:
        for low, high in itertools.pairwise(loads):
            if alpha[coherence_time, high] < alpha[coherence_time, low] - tol:
                violations.append(
                    f"M={coherence_time}: beta={low}: "
                    f"{alpha[coherence_time, low]:.6f} -> beta={high}: "
                    f"{alpha[coherence_time, high]:.6f}"
                )
    assert not violations, (
        "alpha* is NOT nondecreasing in the load: it peaks near beta ~ 1.3 "
        "at 5 dB and falls again by beta = 2, at every coherence time and "
        "at 80x the optimizer's resolution (verified against exhaustive "
        "1e-5 grids). Measured decreases:\n" + "\n".join(violations)
    )


def _naive_io_soft_outputs(instance: Instance, received, mode, estimator):
    """First-principles posterior mean: explicit sum over all bit vectors
    using the documented control-parameter transform."""
    codes = instance.est_codes
    sigma2 = instance.noise_scale**2
    if mode is Mode.COMPENSATED:
        beta = instance.n_users / instance.spreading_gain
        delta = instance.delta_h2
        if estimator is Estimator.ML:
            codes = codes / (1.0 + delta)
            sigma2 = sigma2 + beta * delta / (1.0 + delta)
        else:
            sigma2 = sigma2 + beta * delta
    n_users, gain = codes.shape
    exponents = []
    for bits in itertools.product((-1.0, 1.0), repeat=n_users):
        vector = np.array(bits)
        residual = received - codes.T @ vector / math.sqrt(gain)
        exponents.append((-float(residual @ residual) / (2.0 * sigma2), vector))
    shift = max(exponent for exponent, _ in exponents)
    total = 0.0
    mean = np.zeros(n_users)
    for exponent, vector in exponents:
        weight = math.exp(exponent - shift)
        total += weight
        mean += weight * vector
    return mean / total


def test_criterion_11_oracle_equivalence():
    # (a) the production posterior-mean detector vs explicit enumeration.
    rng = np.random.default_rng(110)
    mode_cycle = itertools.cycle(
        [
            (Mode.DIRECT, Estimator.ML),
            (Mode.COMPENSATED, Estimator.ML),
            (Mode.COMPENSATED, Estimator.MMSE),
        ]
    )
    worst_io = 0.0
    for _ in range(100):
        n_users = int(rng.integers(1, 9))
        gain = int(rng.integers(8, 17))
        true_codes = rng.normal(size=(n_users, gain))
        delta = float(rng.uniform(0.0, 0.5))
        est_codes = true_codes + rng.normal(scale=math.sqrt(delta + 1e-3), size=true_codes.shape)
        instance = Instance(
            true_codes=true_codes,
            est_codes=est_codes,
            noise_scale=float(rng.uniform(0.4, 1.0)),
            delta_h2=delta,
        )
        received = rng.normal(size=gain)
        mode, estimator = next(mode_cycle)
        got = detect_io(instance, received, mode, estimator=estimator)
        want = _naive_io_soft_outputs(instance, received, mode, estimator)
        worst_io = max(worst_io, float(np.max(np.abs(got - want))))
    assert worst_io < 1e-10, f"detector vs enumeration oracle: {worst_io:.2e}"

    # (b) the damped fixed-point solver vs a grid search over (m, q) that
    #     minimizes the residual of the self-consistency maps, refined by
    #     zooming five decades.
    points = [
        (SystemParams(beta=0.25, sigma_n2=0.2),
         ReceiverSpec(estimator=Estimator.ML, mode=Mode.PERFECT)),
        (SystemParams(beta=0.5, sigma_n2=0.2, delta_h2=0.1),
         ReceiverSpec(estimator=Estimator.ML, mode=Mode.DIRECT)),
        (SystemParams(beta=0.5, sigma_n2=0.25, delta_h2=0.2),
         ReceiverSpec(estimator=Estimator.MMSE, mode=Mode.DIRECT)),
        (SystemParams(beta=1.0, sigma_n2=0.5, delta_h2=0.1),
         ReceiverSpec(estimator=Estimator.ML, mode=Mode.COMPENSATED)),
        (SystemParams(beta=1.0, sigma_n2=0.4, delta_h2=0.3),
         ReceiverSpec(estimator=Estimator.MMSE, mode=Mode.COMPENSATED)),
    ]
    rule = make_rule(61)
    worst_fp = 0.0
    for params, spec in points:
        update_ef = _ef_update(params, spec, "consistent")

        def residual(m: float, q: float) -> float:
            e, f = update_ef(m, q)
            if f < 0.0:  # (m, q) outside the map's domain cannot be a root
                return math.inf
            m_next, q_next = _mq_update(rule, e, f)
            return max(abs(m_next - m), abs(q_next - q))

        best = (math.inf, 0.5, 0.5)
        for m in np.linspace(1e-6, 1.0 - 1e-6, 81):
            for q in np.linspace(1e-6, 1.0 - 1e-6, 81):
                value = residual(m, q)
                if value < best[0]:
                    best = (value, m, q)
        span = 1.0 / 80.0
        for _ in range(5):
            _, m0, q0 = best
            for m in np.linspace(max(m0 - 2 * span, 0.0), min(m0 + 2 * span, 1.0), 41):
                for q in np.linspace(max(q0 - 2 * span, 0.0), min(q0 + 2 * span, 1.0), 41):
                    value = residual(m, q)
                    if value < best[0]:
                        best = (value, m, q)
            span /= 10.0
        _, m_star, q_star = best
        e_star, f_star = update_ef(m_star, q_star)
        state = solve_fixed_point(params, spec)
        gap = max(
            abs(state.m - m_star),
            abs(state.q - q_star),
            abs(state.E - e_star),
            abs(state.F - f_star),
        )
        worst_fp = max(worst_fp, gap)
        assert gap < 1e-6, (
            f"solver vs grid oracle at beta={params.beta}, "
            f"sigma_n2={params.sigma_n2}, d={params.delta_h2}, "
            f"{spec.estimator.name}/{spec.mode.name}: gap {gap:.2e}"
        )
    print(
        f"criterion 11: detector oracle gap {worst_io:.2e}, "
        f"fixed-point oracle gap {worst_fp:.2e}"
    )
