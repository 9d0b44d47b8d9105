import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

# Add current directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import asymptotics
import core_stats
import fieldsim
import pickands
from asymptotics import PValueKind
from core_stats import HypothesisParams, ObservationSeries, StatKind
from errors import ChangePointError, DomainError, InputError, ParameterError
from reporting import RunReport, write_report, write_table
from rng import ReplicateRunner, check_seed
from settings import __version__, load_config, setup_logging

logger = logging.getLogger(__name__)


def read_observations(path: str, skip_header: bool = False) -> pd.Series:
    """One number per line; blank lines are ignored."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"Cannot read input file {path}: {e}")

    raw = pd.Series(lines, index=np.arange(1, len(lines) + 1), dtype=object)
    if skip_header and len(raw):
        raw = raw.iloc[1:]
    raw = raw.str.strip()
    raw = raw[raw != ""]
    if raw.empty:
        raise InputError(f"Input file {path} contains no observations")

    values = pd.to_numeric(raw, errors='coerce')
    bad = values[values.isna()]
    if len(bad):
        line = int(bad.index[0])
        raise InputError(f"Input file {path}, line {line}: {raw[line]!r} is not a number")
    return values.astype(float)


def _runner(config: Dict, args) -> ReplicateRunner:
    return ReplicateRunner.from_config(config.get('runtime', {}), threads=args.threads)


def _note_tail(report: RunReport, label: str, tail: asymptotics.TailApprox):
    if tail.pre_asymptotic:
        report.flag(f"{label}: pre-asymptotic: value > 1")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_stat(args, config: Dict) -> RunReport:
    values = read_observations(args.input, args.skip_header)
    x = ObservationSeries(values.to_numpy())
    kinds = list(StatKind) if args.kind == 'all' else [StatKind.parse(args.kind)]

    report = RunReport("stat", {"input": args.input, "kind": args.kind, "mu0": args.mu0,
                                "delta": args.delta, "skip_header": args.skip_header, "m": x.m},
                       [], None, __version__)
    if args.skip_header:
        report.flag("header line skipped")

    for kind in kinds:
        label = kind.value.lower()
        try:
            h = None if kind == StatKind.Z4 else HypothesisParams(mu0=args.mu0, delta=args.delta)
            stat = core_stats.compute(kind, x, h)
        except ParameterError as e:
            if args.kind != 'all':
                raise
            report.flag(f"{label} skipped: {e}")
            continue

        entry = {"statistic": stat, "p_value": None, "continuous": None}
        try:
            if kind == StatKind.Z4:
                entry["p_value"] = asymptotics.p4_tail(stat.value)
            elif args.delta is not None:
                q = asymptotics.discrete_to_continuous(x.m, h.delta, stat.value, kind)
                entry["continuous"] = q
                entry["p_value"] = asymptotics.tail_for(asymptotics.STAT_TO_PVALUE[kind.value], q.c, q.d, q.u)
        except DomainError as e:
            report.flag(f"{label} p-value unavailable: {e}")
        if entry["p_value"] is not None:
            _note_tail(report, label, entry["p_value"])
        report.results.append(entry)
    return report


def cmd_pvalue(args, config: Dict) -> RunReport:
    kind = PValueKind.parse(args.kind)
    tail = asymptotics.tail_for(kind, args.c, args.d, args.u)
    lags = asymptotics.critical_lags(kind, args.c, args.d)
    report = RunReport("pvalue", {"kind": kind.value, "c": args.c, "d": args.d, "u": args.u},
                       {"tail": tail, "critical_lags": list(lags)}, None, __version__)
    _note_tail(report, kind.value, tail)
    return report


def cmd_constants(args, config: Dict) -> RunReport:
    section = config.get('pickands', {})
    kind = args.kind.upper()
    alpha = args.alpha
    step = args.step
    if step is None:
        step = section.get('step', 0.01) if alpha >= 1 else section.get('rough_step', 0.002)
    reps = args.reps if args.reps is not None else section.get('reps', 10000)
    seed = check_seed(args.seed)
    runner = _runner(config, args)

    if kind == 'H':
        lam = args.lam if args.lam is not None else section.get('lambda_h', 8.0)
        form = pickands.EstimateKind.H_RATE if args.form == 'rate' else pickands.EstimateKind.H_OF_LAMBDA
        coarse, fine = pickands.estimate_H_two_grids(alpha, lam, step, reps, seed, form, runner, section)
        inputs = {"kind": kind, "alpha": alpha, "lambda": lam, "step": step, "reps": reps, "form": args.form}
    elif kind in ('P', 'Q'):
        lam = args.lam if args.lam is not None else section.get('lambda_p', 4.0)
        lam1 = args.lambda1 if args.lambda1 is not None else section.get('lambda1_p', 2.0)
        inputs = {"kind": kind, "alpha": alpha, "lambda": lam, "lambda1": lam1, "step": step, "reps": reps}
        if kind == 'P':
            inputs.update({"b_over_a": args.b_over_a, "c_over_sqrt_a": args.c_over_sqrt_a})
            coarse, fine = pickands.estimate_P_two_grids(alpha, args.b_over_a, args.c_over_sqrt_a, lam, lam1,
                                                         step, reps, seed, runner, section)
        else:
            coarse, fine = pickands.estimate_Q_two_grids(alpha, lam, lam1, step, reps, seed, runner, section)
    else:
        raise ParameterError(f"Unknown constant kind {args.kind!r}; expected H, P or Q")

    results = {"coarse": coarse, "fine": fine, "drift": fine.value - coarse.value}
    report = RunReport("constants", inputs, results, seed, __version__)
    if kind == 'H' and args.form == 'rate':
        try:
            reference, source = asymptotics.TableConstantProvider(
                config.get('asymptotics', {}).get('pickands_table')).h(alpha)
            results["reference"] = {"value": reference, "source": source}
        except ParameterError:
            pass
    if fine.n_replicates and fine.value < coarse.value:
        report.flag("estimate decreased under grid refinement; increase reps")
    return report


def _field_kind(args) -> fieldsim.FieldKind:
    return fieldsim.FieldKind(PValueKind.parse(args.kind), args.c, args.d)


def _threshold(kind: fieldsim.FieldKind, args) -> float:
    if kind.tag == PValueKind.P4:
        if args.d is None:
            raise ParameterError("p4 requires --d")
        return args.d
    if args.u is None:
        raise ParameterError(f"{kind.tag.value} requires --u")
    return args.u


def cmd_simulate(args, config: Dict) -> RunReport:
    section = config.get('fieldsim', {})
    kind = _field_kind(args)
    threshold = _threshold(kind, args)
    grid = args.grid if args.grid is not None else section.get('grid', 2000)
    reps = args.reps if args.reps is not None else section.get('reps', 10000)
    seed = check_seed(args.seed)

    est = fieldsim.simulate_sup(kind, threshold, grid, reps, seed, _runner(config, args), section)
    results = {"estimate": est, "analytic": None, "kuiper": None}
    report = RunReport("simulate", {**kind.to_dict(), "u": args.u, "grid": grid, "reps": reps},
                       results, seed, __version__)
    for flag in est.flags:
        report.flag(flag)
    try:
        results["analytic"] = kind.analytic(threshold)
    except DomainError as e:
        report.flag(f"analytic value unavailable: {e}")
    if kind.tag == PValueKind.FREE2 and kind.c == 0 and threshold > 0.5:
        results["kuiper"] = fieldsim.kuiper_half_tail(threshold, section.get('kuiper_terms', 5))
    return report


def cmd_curve(args, config: Dict) -> RunReport:
    kind = PValueKind.parse(args.kind)
    if args.u_min is None or args.u_max is None:
        raise ParameterError("curve requires --u-min and --u-max")
    if not args.u_min < args.u_max:
        raise ParameterError(f"curve requires u_min < u_max, got {args.u_min} >= {args.u_max}")
    if args.points < 2:
        raise ParameterError(f"curve requires points >= 2, got {args.points}")

    grid_u = np.linspace(args.u_min, args.u_max, args.points)
    if kind == PValueKind.P4:
        analytic = [asymptotics.p4_tail(u).value for u in grid_u]
    else:
        analytic = [asymptotics.tail_for(kind, args.c, args.d, u).value for u in grid_u]
    table = pd.DataFrame({"u": grid_u, "analytic": analytic})

    seed = None
    inputs = {"kind": kind.value, "c": args.c, "d": args.d, "u_min": args.u_min,
              "u_max": args.u_max, "points": args.points, "empirical": args.empirical}
    report = RunReport("curve", inputs, None, None, __version__)
    if args.empirical:
        section = config.get('fieldsim', {})
        grid = args.grid if args.grid is not None else section.get('grid', 2000)
        reps = args.reps if args.reps is not None else section.get('reps', 10000)
        seed = check_seed(args.seed)
        inputs.update({"grid": grid, "reps": reps})
        estimates = fieldsim.simulate_thresholds(fieldsim.FieldKind(kind, args.c, args.d), grid_u,
                                                 grid, reps, seed, _runner(config, args), section)
        table["empirical"] = [e.p_hat for e in estimates]
        for flag in estimates[0].flags:
            report.flag(flag)
        report.seed = seed

    report.results = table
    write_table(table, args.out)
    return report


COMMANDS = {
    "stat": cmd_stat,
    "pvalue": cmd_pvalue,
    "constants": cmd_constants,
    "simulate": cmd_simulate,
    "curve": cmd_curve,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

class CliParser(argparse.ArgumentParser):
    """Usage errors exit with the parameter-error code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(ParameterError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument('--config', help="Path to config.json")
    common.add_argument('--log-level', help="Override the configured log level")
    common.add_argument('--out', help="Write the report (or, for curve, the table) to this path")
    common.add_argument('--threads', type=int, help="Worker threads for Monte Carlo replicates")
    common.add_argument('--seed', type=int, help="Unsigned 64-bit seed; drawn from system entropy if omitted")

    parser = CliParser(
        prog="changepoint",
        description="Change-point statistics, asymptotic p-values and their Monte Carlo checks.")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', required=True, parser_class=CliParser)

    p = sub.add_parser('stat', parents=[common], help="Compute Z1-Z4 for a data file")
    p.add_argument('--input', required=True, help="Text file, one observation per line")
    p.add_argument('--kind', default='all', choices=['z1', 'z2', 'z3', 'z4', 'all'])
    p.add_argument('--mu0', type=float)
    p.add_argument('--delta', type=float)
    p.add_argument('--skip-header', action='store_true')

    p = sub.add_parser('pvalue', parents=[common], help="Closed-form tail approximation")
    p.add_argument('--kind', required=True, choices=[k.value for k in PValueKind])
    p.add_argument('--c', type=float)
    p.add_argument('--d', type=float)
    p.add_argument('--u', type=float)

    p = sub.add_parser('constants', parents=[common], help="Monte Carlo Pickands-type constants")
    p.add_argument('--kind', required=True, choices=['H', 'P', 'Q', 'h', 'p', 'q'])
    p.add_argument('--alpha', type=float, required=True)
    p.add_argument('--lambda', dest='lam', type=float)
    p.add_argument('--lambda1', type=float)
    p.add_argument('--step', type=float)
    p.add_argument('--reps', type=int)
    p.add_argument('--form', choices=['rate', 'lambda'], default='rate', help="H estimator form")
    p.add_argument('--b-over-a', type=float, default=0.0)
    p.add_argument('--c-over-sqrt-a', type=float, default=0.0)

    for name, text in (('simulate', "Simulate a field supremum tail"),
                       ('curve', "Analytic tail over a threshold range as CSV")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument('--kind', required=True, choices=[k.value for k in PValueKind])
        p.add_argument('--c', type=float)
        p.add_argument('--d', type=float)
        p.add_argument('--grid', type=int)
        p.add_argument('--reps', type=int)
        if name == 'simulate':
            p.add_argument('--u', type=float)
        else:
            p.add_argument('--u-min', type=float)
            p.add_argument('--u-max', type=float)
            p.add_argument('--points', type=int, default=50)
            p.add_argument('--empirical', action='store_true', help="Add a simulated column")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        setup_logging(config.get('logging', {}), args.log_level)
        if args.seed is not None:
            check_seed(args.seed)
        report = COMMANDS[args.command](args, config)
        if args.command == 'curve':
            if args.out:
                write_report(report)
        else:
            write_report(report, args.out)
        return 0
    except ChangePointError as e:
        logger.error(str(e))
        return e.exit_code
    except MemoryError as e:
        logger.error(f"Out of memory: {e}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
