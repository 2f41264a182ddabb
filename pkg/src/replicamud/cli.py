"""Command-line front end: parameter sweeps over the solvers and the
Monte Carlo lab, emitted as CSV series.

Every subcommand writes one CSV document: a comment header of
``# key = value`` lines echoing the full resolved configuration (so the
run can be reproduced from the file alone), a column-name row, then data
rows ordered by the swept parameter. Output goes to --out (default
standard output); progress and error messages go to standard error only.

Exit codes: 0 on success, 1 when a solver fails at some parameter point
(the point is named on standard error, and no output file is written),
2 on usage errors.

A plain-text config file (``key = value`` per line, ``#`` comments) can
be passed with --config; explicit flags override file values.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import sys

import numpy as np

from . import linear_turbo, replica_solvers
from .linear_turbo import (
    FeedbackModel,
    FilterKind,
    PowerDistribution,
    solve_flat_fading,
    solve_linear,
    solve_pic,
)
from .mc_lab import CodeModel, Detector, Scenario, run_ber_experiment
from .replica_solvers import (
    Estimator,
    Mode,
    ReceiverSpec,
    SystemParams,
    free_energy,
    sinr,
    solve_all_branches,
)
from .training_designer import TrainingProblem, optimize_alpha

__all__ = ["main"]

_ESTIMATORS = {"ml": Estimator.ML, "mmse": Estimator.MMSE}
_MODES = {
    "perfect": Mode.PERFECT,
    "direct": Mode.DIRECT,
    "compensated": Mode.COMPENSATED,
}
_DETECTORS = {
    "io": Detector.IO_EXACT,
    "mmse": Detector.LINEAR_MMSE,
    "mf": Detector.MF,
}
_FILTERS = {
    "conditional": FilterKind.CONDITIONAL,
    "unconditional": FilterKind.UNCONDITIONAL,
    "oracle": FilterKind.ORACLE,
}
_CODE_MODELS = {
    "convolution": CodeModel.CONVOLUTION,
    "independent": CodeModel.INDEPENDENT,
}


class _Range:
    """A swept parameter: either a single value or start:stop:steps."""

    def __init__(self, text: str):
        parts = text.split(":")
        try:
            if len(parts) == 1:
                self.start = self.stop = float(parts[0])
                self.steps = 1
            elif len(parts) == 3:
                self.start = float(parts[0])
                self.stop = float(parts[1])
                self.steps = int(parts[2])
            else:
                raise ValueError
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"expected a number or start:stop:steps, got {text!r}"
            ) from None
        if self.steps < 1:
            raise argparse.ArgumentTypeError(f"steps must be >= 1, got {self.steps}")

    def values(self) -> list[float]:
        if self.steps == 1:
            return [self.start]
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]

    def __str__(self) -> str:
        if self.steps == 1:
            return repr(self.start)
        return f"{self.start!r}:{self.stop!r}:{self.steps}"


def _float_list(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers, got {text!r}"
        ) from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _powers(text: str) -> PowerDistribution:
    if text == "equal":
        return PowerDistribution.equal_power()
    if text == "rayleigh" or text.startswith("rayleigh:"):
        n_points = 64 if text == "rayleigh" else int(text.split(":", 1)[1])
        return PowerDistribution.rayleigh(n_points)
    try:
        points = []
        for chunk in text.split(","):
            p_true, p_est, weight = (float(v) for v in chunk.split(":"))
            points.append((p_true, p_est, weight))
        return PowerDistribution(points=tuple(points))
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(
            f"expected 'equal', 'rayleigh[:n]' or 'pt:pe:w,...' triples: {exc}"
        ) from None


def _powers_spec(text: str) -> str:
    """Validate a power-law string at parse time but keep the raw text."""
    _powers(text)
    return text


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class _PointFailure(Exception):
    """A solver failed at one point of the sweep; message names the point."""


@contextlib.contextmanager
def _at(name: str, value):
    try:
        yield
    except _PointFailure:
        raise
    except Exception as exc:
        raise _PointFailure(f"at {name}={value!r}: {exc}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replicamud",
        description="Asymptotic multiuser-detection solvers and a finite-system "
        "Monte Carlo lab, swept from the command line into CSV series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default="-", help="output CSV path ('-' = stdout)")
        p.add_argument(
            "--config",
            metavar="FILE",
            default=None,
            help="key = value file supplying defaults; flags override it",
        )

    p = sub.add_parser(
        "replica-sweep", help="binary-prior fixed points vs estimation error"
    )
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--sigma-n2", type=float, default=0.2)
    p.add_argument("--delta-h2", type=_Range, default=_Range("0:0.4:9"))
    p.add_argument("--estimator", choices=sorted(_ESTIMATORS), default="ml")
    p.add_argument("--mode", choices=sorted(_MODES), default="direct")
    common(p)

    p = sub.add_parser(
        "linear-sweep", help="linear-receiver six-parameter states vs estimation error"
    )
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--sigma-n2", type=float, default=0.2)
    p.add_argument("--delta-h2", type=_Range, default=_Range("0:0.4:9"))
    p.add_argument("--estimator", choices=sorted(_ESTIMATORS), default="ml")
    p.add_argument("--mode", choices=["compensated", "direct"], default="direct")
    common(p)

    p = sub.add_parser(
        "pic-sweep", help="interference-cancellation states vs feedback error"
    )
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--sigma-n2", type=float, default=0.2)
    p.add_argument("--delta-h2", type=float, default=0.0)
    p.add_argument("--delta-b2", type=_Range, default=_Range("0.1:1:10"))
    p.add_argument("--estimator", choices=sorted(_ESTIMATORS), default="ml")
    p.add_argument("--filter", choices=sorted(_FILTERS), default="conditional")
    p.add_argument(
        "--powers",
        type=_powers_spec,
        default="equal",
        help="received-power law: equal, rayleigh[:n], or pt:pe:w,... triples",
    )
    common(p)

    p = sub.add_parser(
        "fading-sweep", help="flat-fading efficiency (known vs mean-only powers)"
    )
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--snr-db", type=_Range, default=_Range("0:20:6"))
    p.add_argument(
        "--power-law",
        type=_powers_spec,
        default="rayleigh:64",
        help="received-power law: equal or rayleigh[:n]",
    )
    common(p)

    p = sub.add_parser(
        "training-sweep", help="optimal training proportion vs coherence time and load"
    )
    p.add_argument("--coherence-time", type=_int_list, default=[50, 100, 200, 400, 800])
    p.add_argument("--beta", type=_float_list, default=[0.5])
    p.add_argument("--snr-db", type=float, default=5.0)
    p.add_argument("--units", choices=["bits", "nats"], default="nats")
    common(p)

    def mc_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--users", type=int, default=10)
        p.add_argument("--gain", type=int, default=150)
        p.add_argument("--spread", type=int, default=50)
        p.add_argument("--sigma-n2", type=float, default=0.2)
        p.add_argument("--delta-h2", type=_Range, default=_Range("0:0.4:5"))
        p.add_argument("--estimator", choices=sorted(_ESTIMATORS), default="ml")
        p.add_argument("--mode", choices=["compensated", "direct"], default="direct")
        p.add_argument("--trials", type=int, default=2000)
        p.add_argument("--redraws", type=int, default=10)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("mc-sweep", help="finite-system BER measurements")
    mc_flags(p)
    p.add_argument("--detector", choices=sorted(_DETECTORS), default="io")
    p.add_argument(
        "--code-model",
        choices=sorted(_CODE_MODELS),
        default="convolution",
        help="physical convolution codes, or the independent-chip idealization",
    )
    common(p)

    p = sub.add_parser(
        "compare", help="replica predictions vs Monte Carlo at each grid point"
    )
    mc_flags(p)
    p.add_argument("--detector", choices=["io", "mmse"], default="io")
    p.add_argument(
        "--code-model",
        choices=sorted(_CODE_MODELS),
        default="independent",
        help="default independent: the chip law the asymptotic analysis assumes",
    )
    common(p)

    return parser


def _run_replica_sweep(ns) -> tuple[list[str], list[list], list[tuple[str, str]]]:
    estimator = _ESTIMATORS[ns.estimator]
    mode = _MODES[ns.mode]
    rows = []
    for delta in ns.delta_h2.values():
        with _at("delta_h2", delta):
            params = SystemParams(beta=ns.beta, sigma_n2=ns.sigma_n2, delta_h2=delta)
            spec = ReceiverSpec(estimator=estimator, mode=mode)
            result = solve_all_branches(params, spec)
            state = result.selected
            rows.append(
                [
                    delta,
                    ns.estimator,
                    ns.mode,
                    state.m,
                    state.q,
                    state.E,
                    state.F,
                    replica_solvers.ber(state),
                    sinr(params, spec, state),
                    free_energy(params, spec, state),
                    len(result.states),
                ]
            )
    schema = [
        "delta_h2", "estimator", "mode", "m", "q", "E", "F",
        "ber", "sinr", "free_energy", "branches",
    ]
    echo = [
        ("beta", repr(ns.beta)),
        ("sigma_n2", repr(ns.sigma_n2)),
        ("delta_h2", str(ns.delta_h2)),
        ("estimator", ns.estimator),
        ("mode", ns.mode),
    ]
    return schema, rows, echo


def _run_linear_sweep(ns):
    estimator = _ESTIMATORS[ns.estimator]
    mode = _MODES[ns.mode]
    rows = []
    for delta in ns.delta_h2.values():
        with _at("delta_h2", delta):
            params = SystemParams(beta=ns.beta, sigma_n2=ns.sigma_n2, delta_h2=delta)
            state = solve_linear(params, mode, estimator=estimator)
            rows.append(
                [
                    delta,
                    ns.estimator,
                    ns.mode,
                    state.m,
                    state.q,
                    state.p,
                    state.E,
                    state.F,
                    state.G,
                    linear_turbo.ber(state),
                    linear_turbo.multiuser_efficiency(state, ns.sigma_n2),
                ]
            )
    schema = [
        "delta_h2", "estimator", "mode", "m", "q", "p", "E", "F", "G",
        "ber", "efficiency",
    ]
    echo = [
        ("beta", repr(ns.beta)),
        ("sigma_n2", repr(ns.sigma_n2)),
        ("delta_h2", str(ns.delta_h2)),
        ("estimator", ns.estimator),
        ("mode", ns.mode),
    ]
    return schema, rows, echo


def _run_pic_sweep(ns):
    estimator = _ESTIMATORS[ns.estimator]
    powers = _powers(ns.powers)
    rows = []
    for delta_b2 in ns.delta_b2.values():
        with _at("delta_b2", delta_b2):
            params = SystemParams(
                beta=ns.beta, sigma_n2=ns.sigma_n2, delta_h2=ns.delta_h2
            )
            feedback = FeedbackModel(delta_b2=delta_b2, filter_kind=_FILTERS[ns.filter])
            state = solve_pic(params, powers, feedback, estimator=estimator)
            rows.append(
                [
                    delta_b2,
                    ns.filter,
                    ns.estimator,
                    state.m,
                    state.q,
                    state.p,
                    state.E,
                    state.F,
                    state.G,
                    linear_turbo.ber(state, delta_b2),
                    linear_turbo.multiuser_efficiency(state, ns.sigma_n2, delta_b2),
                ]
            )
    schema = [
        "delta_b2", "filter", "estimator", "m", "q", "p", "E", "F", "G",
        "ber", "efficiency",
    ]
    echo = [
        ("beta", repr(ns.beta)),
        ("sigma_n2", repr(ns.sigma_n2)),
        ("delta_h2", repr(ns.delta_h2)),
        ("delta_b2", str(ns.delta_b2)),
        ("estimator", ns.estimator),
        ("filter", ns.filter),
        ("powers", ns.powers),
    ]
    return schema, rows, echo


def _run_fading_sweep(ns):
    dist = _powers(ns.power_law)
    equal = PowerDistribution.equal_power()
    rows = []
    for snr_db in ns.snr_db.values():
        with _at("snr_db", snr_db):
            sigma_n2 = 10.0 ** (-snr_db / 10.0)
            rows.append(
                [
                    snr_db,
                    solve_flat_fading(ns.beta, sigma_n2, dist, mismatched=False),
                    solve_flat_fading(ns.beta, sigma_n2, dist, mismatched=True),
                    solve_flat_fading(ns.beta, sigma_n2, equal, mismatched=False),
                ]
            )
    schema = ["snr_db", "eta_known", "eta_mismatched", "eta_equal_power"]
    echo = [
        ("beta", repr(ns.beta)),
        ("snr_db", str(ns.snr_db)),
        ("power_law", ns.power_law),
    ]
    return schema, rows, echo


def _run_training_sweep(ns):
    rows = []
    for coherence_time in ns.coherence_time:
        for beta in ns.beta:
            with _at("(M, beta)", (coherence_time, beta)):
                problem = TrainingProblem(
                    coherence_time=coherence_time, snr_db=ns.snr_db, beta=beta
                )
                alpha_star, value = optimize_alpha(problem, units=ns.units)
                rows.append([coherence_time, beta, ns.snr_db, alpha_star, value])
    schema = ["M", "beta", "snr_db", "alpha_star", "spectral_efficiency"]
    echo = [
        ("coherence_time", ",".join(str(m) for m in ns.coherence_time)),
        ("beta", ",".join(repr(b) for b in ns.beta)),
        ("snr_db", repr(ns.snr_db)),
        ("units", ns.units),
    ]
    return schema, rows, echo


def _mc_scenario(ns, delta: float) -> Scenario:
    return Scenario(
        n_users=ns.users,
        spreading_gain=ns.gain,
        delay_spread=ns.spread,
        sigma_n2=ns.sigma_n2,
        delta_h2=delta,
        code_model=_CODE_MODELS[ns.code_model],
        estimator=_ESTIMATORS[ns.estimator],
        seed=ns.seed,
    )


def _mc_echo(ns) -> list[tuple[str, str]]:
    return [
        ("users", str(ns.users)),
        ("gain", str(ns.gain)),
        ("spread", str(ns.spread)),
        ("sigma_n2", repr(ns.sigma_n2)),
        ("delta_h2", str(ns.delta_h2)),
        ("estimator", ns.estimator),
        ("mode", ns.mode),
        ("detector", ns.detector),
        ("code_model", ns.code_model),
        ("trials", str(ns.trials)),
        ("redraws", str(ns.redraws)),
        ("seed", str(ns.seed)),
    ]


def _run_mc_sweep(ns):
    mode = _MODES[ns.mode]
    deltas = ns.delta_h2.values()
    rows = []
    for i, delta in enumerate(deltas):
        with _at("delta_h2", delta):
            result = run_ber_experiment(
                _mc_scenario(ns, delta),
                _DETECTORS[ns.detector],
                mode,
                ns.trials,
                ns.redraws,
            )
        print(
            f"[{i + 1}/{len(deltas)}] delta_h2={delta:g} ber={result.ber:.4g}",
            file=sys.stderr,
        )
        rows.append(
            [
                delta,
                ns.estimator,
                ns.mode,
                ns.detector,
                result.ber,
                result.std_err,
                result.instance_sem,
                result.trials,
            ]
        )
    schema = [
        "delta_h2", "estimator", "mode", "detector",
        "ber", "std_err", "instance_sem", "trials",
    ]
    return schema, rows, _mc_echo(ns)


def _run_compare(ns):
    estimator = _ESTIMATORS[ns.estimator]
    mode = _MODES[ns.mode]
    deltas = ns.delta_h2.values()
    rows = []
    for i, delta in enumerate(deltas):
        with _at("delta_h2", delta):
            params = SystemParams(
                beta=ns.users / ns.gain, sigma_n2=ns.sigma_n2, delta_h2=delta
            )
            if ns.detector == "io":
                spec = ReceiverSpec(estimator=estimator, mode=mode)
                ber_replica = replica_solvers.ber(
                    solve_all_branches(params, spec).selected
                )
            else:
                state = solve_linear(params, mode, estimator=estimator)
                ber_replica = linear_turbo.ber(state)
            result = run_ber_experiment(
                _mc_scenario(ns, delta),
                _DETECTORS[ns.detector],
                mode,
                ns.trials,
                ns.redraws,
            )
        print(
            f"[{i + 1}/{len(deltas)}] delta_h2={delta:g} "
            f"replica={ber_replica:.4g} mc={result.ber:.4g}",
            file=sys.stderr,
        )
        rows.append(
            [
                delta,
                ns.estimator,
                ns.mode,
                ber_replica,
                result.ber,
                result.std_err,
                result.trials,
            ]
        )
    schema = [
        "delta_h2", "estimator", "mode",
        "ber_replica", "ber_mc", "mc_std_err", "trials",
    ]
    return schema, rows, _mc_echo(ns)


_RUNNERS = {
    "replica-sweep": _run_replica_sweep,
    "linear-sweep": _run_linear_sweep,
    "pic-sweep": _run_pic_sweep,
    "fading-sweep": _run_fading_sweep,
    "training-sweep": _run_training_sweep,
    "mc-sweep": _run_mc_sweep,
    "compare": _run_compare,
}

def _load_config_tokens(path: str) -> list[str]:
    tokens = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or key == "config":
                raise ValueError(f"{path}:{lineno}: invalid key {key!r}")
            tokens.extend([f"--{key.replace('_', '-')}", value])
    return tokens


def _inject_config(argv: list[str]) -> list[str]:
    """Splice config-file tokens after the subcommand so flags override them."""
    argv = list(argv)
    for i, token in enumerate(argv):
        if token == "--config":
            if i + 1 >= len(argv):
                return argv  # let argparse report the missing value
            path, rest = argv[i + 1], argv[:i] + argv[i + 2 :]
            break
        if token.startswith("--config="):
            path, rest = token.split("=", 1)[1], argv[:i] + argv[i + 1 :]
            break
    else:
        return argv
    return rest[:1] + _load_config_tokens(path) + rest[1:]


def _emit(ns, command: str, schema, rows, echo) -> None:
    buffer = io.StringIO()
    buffer.write(f"# command = {command}\n")
    for key, value in echo:
        buffer.write(f"# {key} = {value}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(schema)
    for row in rows:
        writer.writerow([_fmt(value) for value in row])
    text = buffer.getvalue()
    if ns.out == "-":
        sys.stdout.write(text)
    else:
        with open(ns.out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _inject_config(argv)
    except (OSError, ValueError) as exc:
        print(f"replicamud: config: {exc}", file=sys.stderr)
        return 2
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        schema, rows, echo = _RUNNERS[ns.command](ns)
    except _PointFailure as exc:
        print(f"replicamud: {ns.command}: {exc}", file=sys.stderr)
        return 1
    _emit(ns, ns.command, schema, rows, echo)
    return 0


if __name__ == "__main__":
    sys.exit(main())
