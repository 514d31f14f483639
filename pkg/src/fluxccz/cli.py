"""Command-line front end. Every subcommand writes CSV tables into the output directory.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    RangeTooNarrow,
    TwoPulseSpec,
    calibrate_two_pulse,
    calibrate_single_pulse,
    compose_two_pulse,
    evaluate_pulse,
    raw_gate,
    transition_frequency,
)
from .composite import SUBSYSTEMS, DressedModel, LabelingError, coupler_transition_table, dressed_model
from .config import ConfigError, RunConfig, load_config
from .dynamics import (
    DegenerateGateError,
    DrivePulse,
    StepSizeError,
    ccz,
    pauli_basis,
    to_ptm,
    two_level_2pi_amplitude,
    two_level_sweep,
    unitary_fidelity,
)
from .noise import IntegrationError, decoherence_budget
from .robustness import MonteCarloSpec, cdf_rows, monte_carlo
from .spectrum import GridError, solve_fluxonium, solve_transmon

OUT_ENV = "FLUXCCZ_OUT"
CACHE_ENV = "FLUXCCZ_CACHE"
LINDBLAD_LEVELS = 32
NUMERICAL_ERRORS = (
    StepSizeError,
    LabelingError,
    GridError,
    RangeTooNarrow,
    IntegrationError,
    DegenerateGateError,
    np.linalg.LinAlgError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class Outputs:
    """Collects tables in memory; :meth:`commit` writes them all at the end."""

    def __init__(self, cfg: RunConfig, seed: int | None):
        self.meta = f"# fluxccz {__version__} seed={seed if seed is not None else '-'} config={cfg.digest()}"
        self.tables: dict[str, str] = {}

    def table(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        buf.write(self.meta + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        self.tables[name] = buf.getvalue()

    def commit(self, out_dir: Path) -> list[Path]:
        out_dir.mkdir(parents=True, exist_ok=True)
        staged = []
        for name, text in self.tables.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            staged.append((tmp, out_dir / name))
        for tmp, final in staged:
            os.replace(tmp, final)
        return [final for _, final in staged]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _dt(args, cfg: RunConfig) -> float | None:
    if args.dt is not None:
        return args.dt * 1e-3
    return cfg.numerics.dt


def _dressed(cfg: RunConfig, levels: int, n_keep: int | None = None) -> DressedModel:
    n_keep = n_keep or cfg.numerics.n_keep
    cache = os.environ.get(CACHE_ENV)
    path = None
    if cache:
        path = Path(cache) / f"dressed-{cfg.digest()}-{levels}-{n_keep}.npz"
        if path.exists():
            return DressedModel.load(path)
    n = cfg.numerics
    model = dressed_model(cfg.device, levels, n_keep, n.grid, n.charge_cutoff)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        model.save(path)
    return model


def _phase_columns(phases: dict) -> list[float]:
    return [phases[k] for k in ("011", "101", "110", "111")]


PHASE_HEADER = ["phi_011_rad", "phi_101_rad", "phi_110_rad", "phi_111_rad"]


def cmd_spectrum(args, cfg: RunConfig, out: Outputs) -> None:
    n = cfg.numerics
    rows = []
    for name, p in zip(SUBSYSTEMS, cfg.device.fluxoniums):
        s = solve_fluxonium(p, 3, n.grid)
        rows.append((name, s.f01, s.anharmonicity))
    s = solve_transmon(cfg.device.transmon, 3, n.charge_cutoff)
    rows.append(("T", s.f01, s.anharmonicity))
    out.table("subsystems.csv", ["subsystem", "f01_GHz", "anharmonicity_GHz"], rows)

    dressed = _dressed(cfg, args.levels or n.levels, min(n.n_keep, 32))
    summary = coupler_transition_table(dressed)
    shared = [*summary.zeta_zz, summary.zeta_zzz, summary.delta * 1e3]
    out.table(
        "transitions.csv",
        ["state", "f_GHz", "zeta_zz_12_Hz", "zeta_zz_13_Hz", "zeta_zz_23_Hz", "zeta_zzz_Hz", "delta_MHz"],
        [(f"{k:03b}", f, *shared) for k, f in enumerate(summary.f_xyz)],
    )


def _gate_tables(out: Outputs, U: np.ndarray, fidelity: float, leak: float, phases: dict, extra=()):
    out.table(
        "gate.csv",
        ["row", "col", "re", "im"],
        [(i, j, U[i, j].real, U[i, j].imag) for i in range(8) for j in range(8)],
    )
    names = pauli_basis(3)[0]
    R = to_ptm(U)
    out.table("ptm.csv", ["P", *names], [(names[i], *R[i]) for i in range(64)])
    out.table(
        "summary.csv",
        ["quantity", "value"],
        [("fidelity", fidelity), ("leakage", leak), *zip(PHASE_HEADER, _phase_columns(phases)), *extra],
    )


def _two_pulse(cfg: RunConfig) -> TwoPulseSpec:
    return TwoPulseSpec(cfg.point("ccphase_star"), cfg.point("ccphase"))


def cmd_gate(args, cfg: RunConfig, out: Outputs) -> None:
    levels = args.levels or cfg.numerics.levels
    dt = _dt(args, cfg)
    if args.two_pulse:
        spec = _two_pulse(cfg)
        dressed = _dressed(cfg, levels)
        gate = compose_two_pulse(raw_gate(dressed, spec.pulse_b, dt), raw_gate(dressed, spec.pulse_a, dt))
        fid = float(unitary_fidelity(gate.U, ccz()))
        leak = 1.0 - float(np.sum(np.abs(gate.U) ** 2)) / 8
        extra = [("total_pulse_ns", spec.total_duration)]
        _gate_tables(out, gate.U, fid, leak, gate.conditional_phases, extra)
        return
    pulse = _pulse_from_args(args, cfg)
    dressed = _dressed(cfg, levels)
    if args.calibrate:
        f111 = transition_frequency(dressed, "111")
        result = calibrate_single_pulse(
            dressed,
            pulse.amplitude,
            (pulse.duration - args.tau_window, pulse.duration + args.tau_window),
            (f111 - 0.010, f111 + 0.003),
            dt=dt,
        )
        pulse = result.pulse
    gate, fid, leak = evaluate_pulse(dressed, pulse, ccz(), dt)
    extra = [("amplitude_GHz", pulse.amplitude), ("tau_ns", pulse.duration), ("f_GHz", pulse.frequency)]
    _gate_tables(out, gate.U, fid, leak, gate.conditional_phases, extra)


def _pulse_from_args(args, cfg: RunConfig) -> DrivePulse:
    explicit = (args.amplitude, args.tau, args.frequency)
    if all(v is not None for v in explicit):
        return DrivePulse(*explicit)
    if any(v is not None for v in explicit):
        raise UsageError("--amplitude, --tau and --frequency must be given together")
    return cfg.point(args.point)


CALIBRATION_HEADER = ["amplitude_GHz", "tau_ns", "f_GHz", "fidelity", "leakage", *PHASE_HEADER]


def _calibration_row(r):
    return (r.amplitude, r.tau, r.frequency, r.fidelity, r.leakage, *_phase_columns(r.phases))


def cmd_calibrate(args, cfg: RunConfig, out: Outputs) -> None:
    levels = args.levels or cfg.numerics.levels
    dt = _dt(args, cfg)
    if args.two_pulse:
        spec = _two_pulse(cfg)
        dressed = _dressed(cfg, levels)
        results = calibrate_two_pulse(dressed, spec, args.tau_window, 0.008, dt)
        rows = [(name, *_calibration_row(r)) for name, r in zip(("ccphase_star", "ccphase"), results)]
        out.table("calibration.csv", ["pulse", *CALIBRATION_HEADER], rows)
        return
    ref = cfg.point(args.point)
    if args.amplitudes:
        # equal pulse area: tau scales inversely with amplitude
        scale = ref.amplitude * ref.duration
        targets = [(a, scale / a) for a in sorted(args.amplitudes, reverse=True)]
    else:
        targets = [(ref.amplitude, ref.duration)]
    dressed = _dressed(cfg, levels)
    f111 = transition_frequency(dressed, "111")
    rows = []
    for amp, tau0 in targets:
        r = calibrate_single_pulse(
            dressed, amp, (np.floor(tau0 - args.tau_window), np.ceil(tau0 + args.tau_window)),
            (f111 - 0.010, f111 + 0.003), dt=dt,
        )
        rows.append(_calibration_row(r))
    out.table("calibration.csv", CALIBRATION_HEADER, rows)


def cmd_lindblad(args, cfg: RunConfig, out: Outputs) -> None:
    if args.two_pulse:
        spec = _two_pulse(cfg)
        pulses, duration = [spec.pulse_b, spec.pulse_a], spec.total_duration
    else:
        pulse = cfg.point(args.point)
        pulses, duration = [pulse], pulse.duration
    dressed = _dressed(cfg, args.levels or cfg.numerics.levels).truncate(LINDBLAD_LEVELS)
    budget = decoherence_budget(dressed, pulses, ccz(), cfg.noise.channels(), _dt(args, cfg))
    rows = [("noiseless_fidelity", duration, budget.pop("noiseless"))]
    rows += [(name, duration, 100.0 * value) for name, value in budget.items()]
    out.table("budget.csv", ["channel", "gate_ns", "value"], rows)


def cmd_montecarlo(args, cfg: RunConfig, out: Outputs) -> None:
    mc = cfg.montecarlo
    epsilons = args.epsilon if args.epsilon else list(mc.epsilons)
    rows, counts = [], []
    for eps in epsilons:
        spec = MonteCarloSpec(
            eps, args.samples or mc.n_samples, args.seed if args.seed is not None else mc.seed,
            args.mc_levels or mc.levels,
        )
        result = monte_carlo(cfg.device, spec, workers=args.workers)
        rows.extend(cdf_rows(result))
        counts.append((eps, len(result.outcomes), len(result.failures)))
    out.table("cdf.csv", ["quantity", "value", "cumulative_probability", "epsilon", "designed"], rows)
    out.table("samples.csv", ["epsilon", "completed", "failed"], counts)


def cmd_twolevel(args, cfg: RunConfig, out: Outputs) -> None:
    tl = cfg.twolevel
    duration = args.duration or tl.duration
    pulse = DrivePulse(two_level_2pi_amplitude(duration), duration, 1.0)
    detunings = np.linspace(tl.detuning_min, tl.detuning_max, args.points or tl.n_points)
    sweep = two_level_sweep(pulse, detunings)
    out.table(
        "twolevel.csv",
        ["delta_GHz", "population", "phase_rad"],
        zip(sweep.detunings, sweep.population, sweep.phase),
    )


COMMANDS = {
    "spectrum": cmd_spectrum,
    "gate": cmd_gate,
    "calibrate": cmd_calibrate,
    "lindblad": cmd_lindblad,
    "montecarlo": cmd_montecarlo,
    "twolevel": cmd_twolevel,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (default: bundled device)")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./out)")
    common.add_argument("--levels", type=int, help="levels per subsystem in the composite model")
    common.add_argument("--dt", type=float, help="time step in ps")
    common.add_argument("--seed", type=int, help="random seed (montecarlo)")

    parser = _Parser(prog="fluxccz", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fluxccz {__version__}")
    parser.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    parser.add_argument("--config", dest="top_config", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sub.add_parser("spectrum", parents=[common], help="subsystem and coupler-transition spectra")

    def pulse_args(p):
        p.add_argument("--point", default="single_78", help="operating point name from the config")
        p.add_argument("--amplitude", type=float, help="drive amplitude, GHz")
        p.add_argument("--tau", type=float, help="pulse duration, ns")
        p.add_argument("--frequency", type=float, help="carrier frequency, GHz")
        p.add_argument("--two-pulse", action="store_true", help="two-pulse CCZ from the config points")
        p.add_argument("--tau-window", type=float, default=3.0, help="half-width of the tau search, ns")

    g = sub.add_parser("gate", parents=[common], help="simulate one pulse and extract the gate")
    pulse_args(g)
    g.add_argument("--calibrate", action="store_true", help="grid-search tau and f first")

    c = sub.add_parser("calibrate", parents=[common], help="grid-search calibration")
    pulse_args(c)
    c.add_argument("--amplitudes", type=float, nargs="+", help="amplitude sweep, GHz")

    lb = sub.add_parser("lindblad", parents=[common], help="decoherence budget")
    lb.add_argument("--point", default="single_78")
    lb.add_argument("--two-pulse", action="store_true")

    mc = sub.add_parser("montecarlo", parents=[common], help="fabrication-spread Monte Carlo")
    mc.add_argument("--epsilon", type=float, nargs="+", help="relative spreads")
    mc.add_argument("--samples", type=int)
    mc.add_argument("--mc-levels", type=int, help="levels per subsystem for each sample")
    mc.add_argument("--workers", type=int, default=None)

    tl = sub.add_parser("twolevel", parents=[common], help="two-level detuning sweep")
    tl.add_argument("--duration", type=float)
    tl.add_argument("--points", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config_path = getattr(args, "config", None) or args.top_config
        cfg = load_config(config_path)
        if args.dump_config:
            sys.stdout.write(cfg.dump())
            return 0
        if args.command is None:
            raise UsageError("a subcommand is required")
        out = Outputs(cfg, getattr(args, "seed", None))
        COMMANDS[args.command](args, cfg, out)
    except (UsageError, ConfigError) as exc:
        print(exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"fluxccz: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"fluxccz {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"fluxccz {args.command}: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out or os.environ.get(OUT_ENV) or "out")
    for path in out.commit(out_dir):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
