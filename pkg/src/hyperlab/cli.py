"""Command-line entry point: ``hyperlab {simulate,bounds,verify,report,kernel}``.

Exit codes: 0 all checks pass, 1 some bound failed, 2 configuration error,
3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bounds as bd
from . import experiment as ex
from . import kernel
from .diagnostics import splitting_radius
from .config import ConfigError, _coerce, load_config, parse_text
from .dynamics import NumericalAbort, SnapshotWriteError
from .experiment import fmt

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

PARAM_KEYS = {
    "n": "int", "kappa": "float", "M": "float", "delta": "float", "alpha": "float", "nu": "float",
    "c_grad_u": "float", "beta": "float?", "epsilon": "float",
    "c": "float?", "c_grad": "float?", "c1": "float?", "c2": "float?", "A": "float?",
}
CONSTANT_KEYS = ("c", "c_grad", "c1", "c2", "A")


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.strip("[]").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _window(text: str) -> list:
    w = _float_list(text)
    if len(w) != 2:
        raise argparse.ArgumentTypeError(f"window must be 'start,end', got {text!r}")
    return w


def load_params(path) -> bd.BoundParams:
    path = Path(path)
    try:
        raw = parse_text(path.read_text(), str(path))
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    errors, vals = [], {}
    for key in raw:
        if key not in PARAM_KEYS:
            errors.append(f"{key}: unknown parameter")
    for key, kind in PARAM_KEYS.items():
        if key not in raw:
            if not kind.endswith("?") and key != "epsilon":
                errors.append(f"{key}: required")
            continue
        value, err = _coerce(key, kind, raw[key])
        if err:
            errors.append(err)
        else:
            vals[key] = value
    if errors:
        raise ConfigError(errors)
    c_fit = {k: vals.pop(k) for k in CONSTANT_KEYS if vals.get(k) is not None}
    for k in CONSTANT_KEYS:
        vals.pop(k, None)
    try:
        return bd.BoundParams(c_fit=c_fit, **vals)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    out = args.out or cfg["output.directory"]
    record, _ = ex.simulate(cfg, out, override_horizon=args.override_horizon)
    print(f"config hash {record.config_hash}")
    print(f"wrote {Path(out) / record.csv_path} ({record.steps} steps, {record.wall_time:.1f} s)")
    for name, value in record.fitted_exponents.items():
        print(f"  exponent {name:10s} {fmt(value) if value is not None else 'n/a'}")
    _print_verdicts(record.verdicts)
    return EXIT_OK if record.all_passed else EXIT_FAIL


def bounds_table(p: bd.BoundParams, times) -> tuple:
    """Rows of every oracle at ``times``; hypothesis failures become text cells."""
    cls = bd.classify_table1(p.n, p.nu, p.c_grad_u)

    def cell(fn, *args):
        try:
            return fn(*args)
        except bd.HypothesisError as exc:
            return f"hypothesis violated ({exc})"
        except ValueError as exc:
            return f"unavailable ({exc})"

    if not p.alpha > 0.75:
        thm1_note = "hypothesis violated (alpha <= 3/4)"
    else:
        thm1_note = None
    onset = cell(bd.onset_time_t1, p) if thm1_note is None else thm1_note
    header = ["t", "theorem1_lower", "lemma2_lower", "lemma1_upper", "lemma3_perturbation",
              "lemma4_gradient", "f_nabla_u", "thm2_hminus1", "thm2_lambda", "h_alpha",
              "splitting_radius", "onset_t1", "table1_f_inf", "table1_g_inf"]
    rows = []
    for t in times:
        thm2 = cell(bd.theorem2_lower_bounds, p, t)
        h1, lam = (thm2, thm2) if isinstance(thm2, str) else thm2
        rows.append([
            t,
            thm1_note if thm1_note else cell(bd.theorem1_lower_bound, p, t),
            cell(bd.lemma2_lower_bound, p, t),
            cell(bd.lemma1_upper_bound, p, t),
            cell(bd.lemma3_perturbation_bound, p, t),
            cell(bd.lemma4_gradient_bound, p, t),
            cell(bd.f_nabla_u, p.c_grad_u, p.nu, t),
            h1, lam,
            cell(bd.h_func, p.alpha, p.epsilon, t) if math.isfinite(p.alpha) else "unavailable (alpha infinite)",
            splitting_radius(p.beta, p.kappa, t),
            onset, cls.f_inf, cls.g_inf,
        ])
    return header, rows


def cmd_bounds(args) -> int:
    p = load_params(args.params)
    header, rows = bounds_table(p, args.t)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def _print_verdicts(verdicts) -> None:
    for v in verdicts:
        margin = "n/a" if v["worst_margin"] is None else f"{v['worst_margin']:+.4g}"
        const = "" if v["constant"] is None else f" const={v['constant']:.6g}"
        at = "" if v["t_worst"] is None else f" at t={v['t_worst']:.6g}"
        status = "PASS" if v["passed"] else "FAIL"
        note = f"  ({v['note']})" if v["note"] else ""
        print(f"  {status} {v['name']:24s} {v['direction']:9s} margin={margin}{at}{const}{note}")


def cmd_verify(args) -> int:
    record, cfg, cols = ex.load_run(args.run)
    train = args.train or cfg["bounds.fit_window_train"]
    test = args.test or cfg["bounds.fit_window_test"]
    if train[1] > test[0]:
        raise ConfigError([f"windows overlap: train {train} and test {test}; refusing to verify"])
    params = ex.params_for(cfg)
    verdicts, fitted, t1 = ex.verify_columns(cols, params, train, test, exponent=args.energy_exponent)
    claimed = -ex.energy_rate(params, args.energy_exponent)
    print(f"run {args.run}: config hash {record['config_hash']}")
    print(f"train window {train}, test window {test}, energy exponent {claimed:.6g}")
    _print_verdicts([asdict(v) for v in verdicts])
    ok = all(v.passed for v in verdicts)
    print("overall:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_report(args) -> int:
    out = args.out or Path(args.run) / "report"
    for path in ex.report(args.run, out):
        print(path)
    return EXIT_OK


def cmd_kernel_tabulate(args) -> int:
    if not args.step > 0 or not args.eta_max > 0:
        raise ConfigError(["--step and --eta-max must be positive"])
    eta = np.arange(0.0, args.eta_max + 0.5 * args.step, args.step)
    f = kernel.profile_f(args.n, eta)
    params = kernel.kernel_params(args.n) if args.n in (2, 3) else None
    env = kernel.envelope(params, eta) if params else np.full_like(eta, np.nan)
    res = kernel.recurrence_residual(args.n, eta)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["eta", "f_n", "envelope", "residual"])
        for row in zip(eta, f, env, res):
            w.writerow([fmt(x) for x in row])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hyperlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log one line per sample")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run an experiment and write diagnostics")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (default: output.directory)")
    s.add_argument("--override-horizon", action="store_true",
                   help="allow t_end beyond the finite-domain validity horizons")
    s.add_argument("--seed", type=int, help="recorded in the run record and config hash")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bounds", help="tabulate every oracle at the given times")
    b.add_argument("--params", required=True, help="flat key = value file with bound parameters")
    b.add_argument("--t", type=_float_list, default=[0.0, 1.0, 10.0, 100.0, 1000.0])
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("verify", help="check a finished run against the oracles")
    v.add_argument("--run", required=True, help="run directory written by simulate")
    v.add_argument("--train", type=_window)
    v.add_argument("--test", type=_window)
    v.add_argument("--energy-exponent", type=float,
                   help="replace the claimed energy decay exponent -n/8 (falsifiability check)")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="write gnuplot data files for a run")
    r.add_argument("--run", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    k = sub.add_parser("kernel", help="biharmonic kernel utilities")
    ksub = k.add_subparsers(dest="kernel_command", required=True)
    kt = ksub.add_parser("tabulate", help="tabulate f_n, its envelope and the recurrence residual")
    kt.add_argument("--n", type=int, required=True)
    kt.add_argument("--eta-max", type=float, default=10.0)
    kt.add_argument("--step", type=float, default=0.1)
    kt.add_argument("--out")
    kt.set_defaults(func=cmd_kernel_tabulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        where = f" (step {exc.step_index})" if exc.step_index is not None else ""
        print(f"numerical abort{where}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except SnapshotWriteError as exc:
        print(f"run aborted, partial results kept in memory only: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
