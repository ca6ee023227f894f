"""Experiment orchestration: build, simulate, fit constants, verify, report.

A run directory holds ``diagnostics.csv`` (one row per sample) and
``run.json`` (the run record).  Constants hidden behind ``<~`` in the
estimates are fitted on the train window only; verdicts use the test window
only.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import bounds as bd
from . import dynamics as dy
from . import flows, spectral
from .config import ExperimentConfig, build_config, check_horizon, diffusive_horizon, floor_horizon

CSV_COLUMNS = [
    "t", "l2", "grad_l2", "hminus1", "lambda", "zero_mode_re", "zero_mode_im",
    "low_mode_energy", "eta_l2", "thm1_bound", "lemma3_bound", "lemma4_bound",
    "thm2_hminus1_bound", "thm2_lambda_bound",
    # extras beyond the core schema
    "T_l2", "lap_l2", "lemma1_bound", "lemma2_bound", "splitting_radius",
    "energy_residual", "advective_production", "interpolation_slack",
]

# tolerance on |fitted - claimed| for the energy decay exponent check
EXPONENT_CHECK_TOL = 0.05


def fmt(x) -> str:
    """Full-precision decimal (17 significant digits)."""
    if isinstance(x, str):
        return x
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".17g")


@dataclass
class Setup:
    config: ExperimentConfig
    grid: spectral.Grid
    theta0_hat: np.ndarray
    descriptor: dict
    flow: object
    scheme: dy.SchemeConfig
    params: bd.BoundParams
    horizons: dict


def build(cfg: ExperimentConfig, override_horizon: bool = False) -> Setup:
    g = spectral.make_grid(cfg["grid.n"], cfg["grid.N"], cfg["grid.L"])
    values, desc = flows.gaussian_theta0(g, cfg["initial_data.sigma"], cfg["initial_data.amplitude"])
    theta0_hat = spectral.forward(g, values)
    if override_horizon:
        horizons = {"diffusive": diffusive_horizon(cfg),
                    "zero_mode_floor": floor_horizon(g, theta0_hat, cfg["scheme.kappa"])}
    else:
        horizons = check_horizon(cfg, g, theta0_hat)
    profile = cfg["flow.profile"]
    if profile == "none":
        flow = flows.make_flow(g, "taylor_green", a0=0.0, alpha=0.0, m=1)
        alpha, nu, c_grad = math.inf, 1.0, 0.0
    elif profile == "snapshot":
        flow = flows.SnapshotFlow.from_directory(cfg["flow.snapshot_dir"])
        if not flow.grid.same_as(g):
            raise flows.FlowError("snapshot grid differs from grid.* settings")
        fit = flows.measure_flow_decay(flow, flow.times)
        alpha, nu, c_grad = fit.alpha, fit.nu, fit.c_grad_u
    else:
        a0 = cfg["flow.a0"]
        flow = flows.make_flow(g, profile, a0=a0 if a0 is not None else 1.0, alpha=cfg["flow.alpha"],
                               m=cfg["flow.m"], c_grad_u=cfg["flow.c_grad_u"] if a0 is None else None)
        if flow.is_zero:
            alpha, nu, c_grad = math.inf, 1.0, 0.0
        else:
            alpha, nu, c_grad = flow.alpha, flow.nu, flow.c_grad_u
    scheme = dy.SchemeConfig(kappa=cfg["scheme.kappa"], cfl=cfg["scheme.cfl"], dealias=cfg["scheme.dealias"],
                             max_dt_fraction=cfg["scheme.max_dt_fraction"])
    M = flows.certify_M(g, theta0_hat, cfg["initial_data.delta"], unitary=True)
    params = bd.BoundParams(n=g.n, kappa=cfg["scheme.kappa"], M=M, delta=cfg["initial_data.delta"],
                            alpha=alpha, nu=nu, c_grad_u=c_grad, beta=cfg["bounds.beta"],
                            epsilon=cfg["bounds.epsilon"])
    return Setup(cfg, g, theta0_hat, desc, flow, scheme, params, horizons)


# -- samples -------------------------------------------------------------------

def samples_from_result(result: dy.RunResult, params: bd.BoundParams) -> dict:
    cols = {name: result.column(name) for name in
            ("t", "l2", "grad_l2", "hminus1", "lam", "low_mode_energy", "eta_l2", "T_l2", "lap_l2")}
    zm = result.column("zero_mode")
    cols["lambda"] = cols.pop("lam")
    cols["zero_mode_re"], cols["zero_mode_im"] = zm.real, zm.imag
    cols["splitting_radius"] = np.array([dy.dg.splitting_radius(params.beta, params.kappa, t) for t in cols["t"]])
    cols["energy_residual"] = np.array(result.energy_residual)
    cols["advective_production"] = np.array(result.production)
    cols["interpolation_slack"] = np.array(result.interpolation_slack)
    return cols


def _window_mask(t, window, exclusive_start: bool = False):
    lo, hi = window
    start = (t > lo) if exclusive_start else (t >= lo)
    return start & (t <= hi)


def holdout_mask(t, train, test):
    # a shared endpoint belongs to the train window only
    return _window_mask(t, test, exclusive_start=test[0] <= train[1])


def energy_rate(params: bd.BoundParams, exponent: float | None) -> float:
    """Claimed energy decay rate (positive); ``exponent`` overrides ``-n/8``."""
    return params.n / 8 if exponent is None else -exponent


def _shape(name: str, p: bd.BoundParams, t: float, rate: float) -> float:
    """Bound divided by its prefactor."""
    s = 1 + t
    if name == "A":
        return s ** (-rate)
    if name == "c":
        return s ** bd.lemma3_exponent(p.n, p.alpha)
    if name == "c_grad":
        return s ** (-p.n / 8 - 0.25) * bd.gronwall_factor(p.c_grad_u, p.nu, t)
    f = bd.f_nabla_u(p.c_grad_u, p.nu, t)
    if name == "c1":
        return s ** (0.25 - p.n / 8) * f
    if name == "c2":
        return s**0.25 * f
    raise KeyError(name)


# constant name -> (measured column, direction)
FITTED = {"A": ("l2", "upper"), "c": ("eta_l2", "upper"), "c_grad": ("grad_l2", "upper"),
          "c1": ("hminus1", "lower"), "c2": ("lambda", "lower")}


def fit_constants(cols: dict, p: bd.BoundParams, train, exponent: float | None = None) -> dict:
    """Tightest prefactor on the train window: sup of ratios for upper bounds, inf for lower."""
    rate = energy_rate(p, exponent)
    mask = _window_mask(cols["t"], train)
    out = {}
    for name, (col, direction) in FITTED.items():
        try:
            ratios = np.array([m / _shape(name, p, t, rate)
                               for t, m in zip(cols["t"][mask], cols[col][mask])])
        except bd.HypothesisError:
            continue
        if ratios.size == 0:
            continue
        value = ratios.max() if direction == "upper" else ratios.min()
        if value > 0 and math.isfinite(value):
            out[name] = float(value)
    return out


def onset(p: bd.BoundParams) -> float:
    if "c" not in p.c_fit:
        return 0.0  # no perturbation: the bound holds from the start
    return bd.onset_time_t1(p)


def _safe(fn, *args, **kwargs) -> float:
    try:
        return fn(*args, **kwargs)
    except (bd.HypothesisError, ValueError):
        return math.nan


def bound_columns(cols: dict, p: bd.BoundParams, exponent: float | None = None) -> dict:
    rate = energy_rate(p, exponent)

    def scale(t):
        # rescales the -n/8 energy oracles to the claimed exponent
        return (1 + t) ** (p.n / 8 - rate)

    out = {k: [] for k in ("thm1_bound", "lemma3_bound", "lemma4_bound", "thm2_hminus1_bound",
                           "thm2_lambda_bound", "lemma1_bound", "lemma2_bound")}
    for t in cols["t"]:
        out["thm1_bound"].append(_safe(bd.theorem1_lower_bound, p, t) * scale(t))
        out["lemma2_bound"].append(_safe(bd.lemma2_lower_bound, p, t) * scale(t))
        out["lemma1_bound"].append(_safe(bd.lemma1_upper_bound, p, t, rate=rate))
        out["lemma3_bound"].append(_safe(bd.lemma3_perturbation_bound, p, t))
        out["lemma4_bound"].append(_safe(bd.lemma4_gradient_bound, p, t))
        pair = _safe(bd.theorem2_lower_bounds, p, t)
        h1, lam = (math.nan, math.nan) if isinstance(pair, float) else pair
        out["thm2_hminus1_bound"].append(h1)
        out["thm2_lambda_bound"].append(lam)
    return {k: np.array(v) for k, v in out.items()}


def write_csv(path: Path, cols: dict) -> None:
    n = len(cols["t"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i in range(n):
            w.writerow([fmt(cols[c][i]) for c in CSV_COLUMNS])


def read_csv(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"diagnostics CSV not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[j]) for r in body]) for j, name in enumerate(header)}


# -- verification --------------------------------------------------------------

@dataclass
class Verdict:
    name: str
    quantity: str
    direction: str
    constant: float | None
    worst_margin: float | None
    t_worst: float | None
    samples: int
    passed: bool
    note: str = ""


def _margin_check(name, quantity, direction, constant, t, measured, bound, note="") -> Verdict:
    ok = np.isfinite(bound) & (bound > 0)
    t, measured, bound = t[ok], measured[ok], bound[ok]
    if t.size == 0:
        return Verdict(name, quantity, direction, constant, None, None, 0, False,
                       note or "no test samples where the bound applies")
    ratio = measured / bound
    margin = ratio - 1 if direction == "lower" else 1 - ratio
    i = int(np.argmin(margin))
    return Verdict(name, quantity, direction, constant, float(margin[i]), float(t[i]), int(t.size),
                   bool(margin[i] >= 0), note)


def verify_columns(cols: dict, p: bd.BoundParams, train, test, exponent: float | None = None) -> tuple:
    """Return ``(verdicts, fitted_params, t1)``; constants come from the train window only."""
    if train[1] > test[0]:
        raise ValueError(f"train window {train} overlaps test window {test}")
    fitted = p.with_constants(**fit_constants(cols, p, train, exponent))
    t1 = onset(fitted) if p.alpha > 0.75 else math.nan
    b = bound_columns(cols, fitted, exponent)
    t = cols["t"]
    te = holdout_mask(t, train, test)
    verdicts = []
    if p.alpha > 0.75:
        m = te & (t >= t1)
        verdicts.append(_margin_check("theorem1_lower", "l2", "lower", None, t[m], cols["l2"][m],
                                      b["thm1_bound"][m], note=f"onset t1 = {t1:.6g}"))
    else:
        verdicts.append(Verdict("theorem1_lower", "l2", "lower", None, None, None, 0, False,
                                "hypothesis violated (alpha <= 3/4)"))
    m = te & (t >= 1)
    verdicts.append(_margin_check("lemma2_lower", "T_l2", "lower", None, t[m], cols["T_l2"][m],
                                  b["lemma2_bound"][m]))
    for name, key, col in (("lemma1_upper", "A", "l2"), ("lemma3_upper", "c", "eta_l2"),
                           ("lemma4_upper", "c_grad", "grad_l2")):
        bcol = {"A": "lemma1_bound", "c": "lemma3_bound", "c_grad": "lemma4_bound"}[key]
        if key not in fitted.c_fit:
            note = ("perturbation identically zero" if key == "c" and np.all(cols["eta_l2"] == 0)
                    else "constant could not be fitted (hypothesis violated or no train samples)")
            verdicts.append(Verdict(name, col, "upper", None, None, None, 0,
                                    bool(key == "c" and np.all(cols["eta_l2"] == 0)), note))
            continue
        verdicts.append(_margin_check(name, col, "upper", fitted.c_fit[key], t[te], cols[col][te],
                                      b[bcol][te]))
    for name, key, col, bcol in (("theorem2_hminus1_lower", "c1", "hminus1", "thm2_hminus1_bound"),
                                 ("theorem2_lambda_lower", "c2", "lambda", "thm2_lambda_bound")):
        if key not in fitted.c_fit:
            verdicts.append(Verdict(name, col, "lower", None, None, None, 0, False, "constant not fitted"))
            continue
        verdicts.append(_margin_check(name, col, "lower", fitted.c_fit[key], t[te], cols[col][te], b[bcol][te]))
    claimed = -energy_rate(p, exponent)
    try:
        fit = bd.fit_power_law(t[te], cols["l2"][te])
        margin = EXPONENT_CHECK_TOL - abs(fit.exponent - claimed)
        verdicts.append(Verdict("energy_exponent", "l2", "two-sided", fit.exponent, margin, None,
                                fit.count, margin >= 0, f"claimed {claimed:.6g}, tolerance {EXPONENT_CHECK_TOL}"))
    except ValueError as exc:
        verdicts.append(Verdict("energy_exponent", "l2", "two-sided", None, None, None, 0, False, str(exc)))
    return verdicts, fitted, t1


def fitted_exponents(cols: dict, train, test) -> dict:
    te = holdout_mask(cols["t"], train, test)
    out = {}
    for name in ("l2", "grad_l2", "hminus1", "lambda", "eta_l2"):
        try:
            out["theta_l2" if name == "l2" else name] = bd.fit_power_law(cols["t"][te], cols[name][te]).exponent
        except ValueError:
            out["theta_l2" if name == "l2" else name] = None
    return out


# -- run records ---------------------------------------------------------------

@dataclass
class RunRecord:
    config_hash: str
    config: dict
    csv_path: str
    fitted_exponents: dict
    constants: dict
    onset_t1: float | None
    verdicts: list
    horizons: dict
    wall_time: float
    steps: int
    max_energy_residual: float
    max_advective_production: float
    max_mean_drift: float
    min_interpolation_slack: float
    snapshots: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts)


def _jsonable(x):
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def simulate(cfg: ExperimentConfig, out_dir=None, override_horizon: bool = False):
    """Run the experiment and write ``diagnostics.csv`` and ``run.json``; returns ``(record, cols)``."""
    start = time.perf_counter()
    setup = build(cfg, override_horizon=override_horizon)
    out = Path(out_dir if out_dir is not None else cfg["output.directory"])
    out.mkdir(parents=True, exist_ok=True)
    snaps = cfg["times.snapshot_times"] if cfg["output.emit_snapshots"] else []
    times = dy.sample_times(cfg["times.t_end"], extra=snaps, ratio=cfg["times.sample_ratio"])
    result = dy.run(setup.grid, setup.theta0_hat, setup.flow, setup.scheme, cfg["times.t_end"],
                    times=times, beta=setup.params.beta, snapshot_times=snaps,
                    snapshot_dir=out / "snapshots" if snaps else None)
    cols = samples_from_result(result, setup.params)
    train, test = cfg["bounds.fit_window_train"], cfg["bounds.fit_window_test"]
    verdicts, fitted, t1 = verify_columns(cols, setup.params, train, test)
    cols.update(bound_columns(cols, fitted))
    csv_path = out / "diagnostics.csv"
    write_csv(csv_path, cols)
    record = RunRecord(
        config_hash=cfg.hash, config=cfg.values, csv_path=csv_path.name,
        fitted_exponents=fitted_exponents(cols, train, test), constants=fitted.c_fit,
        onset_t1=t1, verdicts=[asdict(v) for v in verdicts], horizons=setup.horizons,
        wall_time=time.perf_counter() - start, steps=result.steps,
        max_energy_residual=float(np.max(cols["energy_residual"])),
        max_advective_production=float(np.max(cols["advective_production"])),
        max_mean_drift=result.max_mean_drift,
        min_interpolation_slack=float(np.min(cols["interpolation_slack"])),
        snapshots=[str(p.relative_to(out)) for p in result.snapshots],
    )
    (out / "run.json").write_text(json.dumps(_jsonable(asdict(record)), indent=1))
    return record, cols


def load_run(run_dir) -> tuple:
    """Return ``(record_dict, config, cols)`` for a finished run directory."""
    run_dir = Path(run_dir)
    rec_path = run_dir / "run.json"
    if not rec_path.exists():
        raise FileNotFoundError(f"run record not found: {rec_path}")
    record = json.loads(rec_path.read_text())
    cfg = build_config(record["config"])
    cols = read_csv(run_dir / record["csv_path"])
    return record, cfg, cols


def params_for(cfg: ExperimentConfig) -> bd.BoundParams:
    return build(cfg, override_horizon=True).params


# -- report --------------------------------------------------------------------

REPORT_FILES = {
    "l2.dat": ("l2", "thm1_bound", "lemma1_bound", "T_l2", "lemma2_bound"),
    "grad_l2.dat": ("grad_l2", "lemma4_bound"),
    "hminus1.dat": ("hminus1", "thm2_hminus1_bound"),
    "lambda.dat": ("lambda", "thm2_lambda_bound"),
    "eta_l2.dat": ("eta_l2", "lemma3_bound"),
    "splitting.dat": ("splitting_radius", "low_mode_fraction"),
}


def report(run_dir, out_dir) -> list:
    """Write gnuplot-ready whitespace-separated files, first column ``t``."""
    record, cfg, cols = load_run(run_dir)
    if len(cols.get("t", [])) == 0:
        raise ValueError(f"{run_dir}: run has no samples; nothing to report")
    with np.errstate(divide="ignore", invalid="ignore"):
        cols["low_mode_fraction"] = cols["low_mode_energy"] / cols["l2"] ** 2
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, columns in REPORT_FILES.items():
        path = out / name
        with open(path, "w") as fh:
            fh.write("# t " + " ".join(columns) + "\n")
            for i in range(len(cols["t"])):
                fh.write(" ".join(fmt(cols[c][i]) for c in ("t",) + columns) + "\n")
        written.append(path)
    return written
