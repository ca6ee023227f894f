"""Acceptance criteria, one PASS/FAIL line each (collected in the terminal summary)."""

import math

import numpy as np
import pytest
from scipy import integrate

from conftest import record_criterion
from hyperlab import bounds as bd
from hyperlab import cli, dynamics, experiment as ex, flows, kernel, spectral
from hyperlab import diagnostics as dg


def _check(number, ok, detail):
    record_criterion(number, bool(ok), detail)
    assert ok, detail


def _slope(run, window):
    cols = run["cols"]
    return bd.fit_power_law(cols["t"], cols["l2"], window=window).exponent


# 1 -- hyperdiffusive decay exponent ---------------------------------------------

def test_criterion_1_decay_exponent_2d(hyperdiffusion_2d):
    slope = _slope(hyperdiffusion_2d, (10.0, 1e4))
    _check("1 (n=2)", abs(slope + 0.25) <= 0.02,
           f"fitted ||theta||_2 exponent {slope:.4f} on [10, 1e4], target -0.25 +/- 0.02")


def test_criterion_1_decay_exponent_3d(hyperdiffusion_3d):
    slope = _slope(hyperdiffusion_3d, (10.0, 1e4))
    _check("1 (n=3)", abs(slope + 0.375) <= 0.03,
           f"fitted ||theta||_2 exponent {slope:.4f} on [10, 1e4], target -0.375 +/- 0.03")


# 2 -- lower bounds ----------------------------------------------------------------

def test_criterion_2a_lemma2_lower_bound(hyperdiffusion_2d, hyperdiffusion_3d):
    worst, count = math.inf, 0
    for run in (hyperdiffusion_2d, hyperdiffusion_3d):
        p = ex.params_for(run["cfg"])
        assert p.delta == 0.5
        cols = run["cols"]
        for t, T in zip(cols["t"], cols["T_l2"]):
            if 1 <= t <= 1e4:
                worst = min(worst, T / bd.lemma2_lower_bound(p, t) - 1)
                count += 1
    _check("2a", worst >= 0 and count > 0,
           f"Lemma 2 bound holds at {count} samples in [1, 1e4], worst margin {worst:+.4g}")


def test_criterion_2b_theorem1_after_onset(default_advected):
    rec = default_advected["record"]
    v = next(v for v in rec.verdicts if v["name"] == "theorem1_lower")
    _check("2b", v["passed"] and v["samples"] > 0,
           f"Theorem 1 bound beyond onset t1 = {rec.onset_t1:.4g}: {v['samples']} test samples, "
           f"worst margin {v['worst_margin']:+.4g}")


# 3 -- kernel versus spectral propagator -----------------------------------------

def test_criterion_3_kernel_solver_consistency():
    g = spectral.make_grid(2, 128, 64.0)
    values, _ = flows.gaussian_theta0(g, 1.5)
    conv = kernel.kernel_convolve(g, values, 1.0)
    propagated = spectral.inverse(g, dynamics.hyperdiff_propagate(g, spectral.forward(g, values), 1.0, 1.0))
    rel = math.sqrt(np.sum((conv - propagated) ** 2) / np.sum(propagated**2))
    _check(3, rel <= 1e-6, f"relative L2 discrepancy {rel:.3g} at kappa t = 1 (limit 1e-6)")


# 4 -- kernel identities -----------------------------------------------------------

def test_criterion_4_kernel_identities():
    eta = np.linspace(0.0, 5.0, 201)
    recurrence = max(float(np.max(np.abs(kernel.recurrence_residual(n, eta)))) for n in (1, 2, 3))
    f20 = abs(kernel.profile_f(2, 0.0) - math.sqrt(math.pi) / 4)
    grid = np.linspace(0.0, 10.0, 2001)
    envelope_ok = all(np.all(np.abs(kernel.profile_f(n, grid)) <= kernel.envelope(kernel.kernel_params(n), grid))
                      for n in (2, 3))
    worst_lp = 0.0
    for n in (2, 3):
        for p in (1, 2, 4):
            norms = [kernel.kernel_lp_norm(n, p, t)[0] for t in (1.0, 10.0, 100.0)]
            measured = np.polyfit(np.log([1.0, 10.0, 100.0]), np.log(norms), 1)[0]
            predicted = -(n / 4) * (1 - 1 / p)
            scale = abs(predicted) if predicted else 1.0
            worst_lp = max(worst_lp, abs(measured - predicted) / scale)
    ok = recurrence <= 1e-6 and f20 <= 1e-8 and envelope_ok and worst_lp <= 0.01
    _check(4, ok, f"recurrence {recurrence:.2g}, |f2(0) - sqrt(pi)/4| {f20:.2g}, "
                  f"envelope {'holds' if envelope_ok else 'violated'}, Lp exponent error {100 * worst_lp:.3g}%")


# 5 -- energy identity ---------------------------------------------------------------

def test_criterion_5_energy_identity(default_advected):
    rec = default_advected["record"]
    ok = rec.max_energy_residual <= 1e-6 and rec.max_advective_production <= 1e-8
    _check(5, ok, f"max energy residual {rec.max_energy_residual:.3g} (limit 1e-6), "
                  f"max advective production {rec.max_advective_production:.3g} (limit 1e-8)")


# 6 -- interpolation inequality ----------------------------------------------------

def test_criterion_6_interpolation(hyperdiffusion_2d, hyperdiffusion_3d, default_advected):
    worst, checked = math.inf, 0
    for run in (hyperdiffusion_2d, hyperdiffusion_3d, default_advected):
        assert run["record"].snapshots
        for rel in run["record"].snapshots:
            g, values, _ = spectral.read_field(run["dir"] / rel)
            c = spectral.forward(g, values)
            worst = min(worst, dg.interpolation_slack(g, c) / dg.nonzero_l2_sq(g, c))
            checked += 1
    g = spectral.make_grid(2, 64, 2 * math.pi)
    x, y = g.coords()
    tight = 0.0
    for k in (1, 4, 9):
        c = spectral.forward(g, np.cos(k * x) - 0.5 * np.sin(k * y))
        tight = max(tight, abs(dg.interpolation_slack(g, c)) / dg.nonzero_l2_sq(g, c))
    ok = checked > 0 and worst >= -1e-12 and tight <= 1e-12
    _check(6, ok, f"{checked} snapshots, minimum relative slack {worst:.3g}; single-shell defect {tight:.2g}")


# 7 -- oracle suite ----------------------------------------------------------------

TABLE1 = {
    (2, 0.5, 1 / 16): ("zero", "zero"), (2, 1.0, 1 / 8): ("const", "infinity"),
    (2, 2.0, 1 / 16): ("infinity", "infinity"), (2, 2.0, 1 / 4): ("infinity", "infinity"),
    (3, 0.5, 1 / 8): ("zero", "zero"), (3, 1.0, 1 / 4): ("zero", "infinity"),
    (3, 2.0, 1 / 16): ("zero", "infinity"), (3, 2.0, 1 / 8): ("const", "infinity"),
    (3, 2.0, 1 / 4): ("infinity", "infinity"), (2, 0.5, 1 / 4): ("zero", "zero"),
    (2, 1.0, 1 / 16): ("const", "infinity"), (3, 1.0, 1 / 16): ("zero", "infinity"),
}


def test_criterion_7_oracle_suite():
    cells = sum((lambda c: (c.f_inf, c.g_inf))(bd.classify_table1(*key)) == want
                for key, want in TABLE1.items())
    seq = bd.gamma_iteration(2, 0.6)
    gamma_ok = np.allclose(seq.sequence, (0.0, 0.1, 0.2)) and seq.final_rate == 0.25
    for n in (2, 3):
        for alpha in np.round(np.arange(0.0, 1.0001, 0.025), 6):
            terminates = True
            try:
                bd.gamma_iteration(n, alpha, enforce=False, max_steps=10_000)
            except bd.NonTerminationError:
                terminates = False
            gamma_ok &= terminates == (alpha > (6 - n) / 8)
    rng = np.random.default_rng(2024)
    dominated = 0
    for _ in range(100):
        s, t = float(rng.uniform(0.05, 3.0)), float(10 ** rng.uniform(-2, 5))
        exact, _ = integrate.quad(lambda r: (1 + r) ** (-s), 0, t, limit=200)
        dominated += exact <= bd.h_func(s, 0.01, t) * (1 + 1e-12)
    ok = cells == 12 and gamma_ok and dominated == 100
    _check(7, ok, f"Table 1 {cells}/12 cells, gamma iteration {'matches' if gamma_ok else 'differs'}, "
                  f"h dominates quadrature at {dominated}/100 pairs")


# 8 -- gradient bound ------------------------------------------------------------------

def test_criterion_8_gradient_bound(default_advected):
    v = next(v for v in default_advected["record"].verdicts if v["name"] == "lemma4_upper")
    _check(8, v["passed"] and v["samples"] > 0,
           f"||grad theta|| / Lemma 4 oracle <= 1 on the test window: worst margin {v['worst_margin']:+.4g} "
           f"(constant {v['constant']:.4g} fitted on train)")


# 9 -- falsifiability ------------------------------------------------------------------

def test_criterion_9_falsifiability(default_advected, capsys):
    code = cli.main(["verify", "--run", str(default_advected["dir"]), "--energy-exponent", "-0.5"])
    out = capsys.readouterr().out
    line = next(l for l in out.splitlines() if "energy_exponent" in l)
    margin = float(line.split("margin=")[1].split()[0])
    _check(9, code == 1 and margin < 0,
           f"verify with claimed exponent -n/4 exits {code}, energy_exponent margin {margin:+.4g}")
