import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperlab import diagnostics as dg
from hyperlab import dynamics as dy
from hyperlab import flows, spectral
from hyperlab.spectral import make_grid


@pytest.fixture(scope="module")
def g():
    return make_grid(2, 32, 2 * math.pi)


@pytest.fixture(scope="module")
def smooth(g):
    x, y = g.coords()
    return spectral.forward(g, np.exp(np.cos(x)) * np.sin(2 * y) + np.cos(x + y) + 0.5)



def zero_flow(grid):
    return flows.make_flow(grid, "taylor_green", a0=0.0, alpha=1.0)


# -- linear propagator ----------------------------------------------------------

def test_propagator_identity_and_semigroup(g, smooth):
    np.testing.assert_array_equal(dy.hyperdiff_propagate(g, smooth, 0.3, 0.0), smooth)
    two = dy.hyperdiff_propagate(g, dy.hyperdiff_propagate(g, smooth, 0.3, 0.7), 0.3, 1.1)
    one = dy.hyperdiff_propagate(g, smooth, 0.3, 1.8)
    assert np.max(np.abs(two - one)) <= 1e-14 * np.max(np.abs(smooth))
    with pytest.raises(ValueError):
        dy.hyperdiff_symbol(g, 1.0, -1.0)


def test_single_mode_decay(g):
    x, _ = g.coords()
    c = spectral.forward(g, np.sin(x))
    out = spectral.inverse(g, dy.hyperdiff_propagate(g, c, 1.0, 1.0))
    np.testing.assert_allclose(out, math.exp(-1) * np.sin(x), atol=1e-15)


# -- advection term ---------------------------------------------------------------

def test_advection_rhs_trivial_cases(g, smooth):
    cfg = dy.SchemeConfig(kappa=1.0)
    zero_u = [np.zeros(g.shape)] * 2
    assert np.max(np.abs(dy.advection_rhs(g, smooth, zero_u, cfg))) == 0.0
    const = spectral.forward(g, np.full(g.shape, 3.0))
    u = flows.taylor_green(g, 1)
    assert np.max(np.abs(dy.advection_rhs(g, const, u, cfg))) <= 1e-12
    with pytest.raises(ValueError, match="grid"):
        dy.advection_rhs(g, smooth, [np.zeros((8, 8))] * 2, cfg)


def test_advection_rhs_shear_product(g):
    x, y = g.coords()
    theta = np.cos(x)
    u = [np.sin(y), np.zeros(g.shape)]
    cfg = dy.SchemeConfig(kappa=1.0)
    rhs = spectral.inverse(g, dy.advection_rhs(g, spectral.forward(g, theta), u, cfg))
    np.testing.assert_allclose(rhs, np.sin(y) * np.sin(x), atol=1e-12)


def test_advection_conserves_energy(g, smooth):
    cfg = dy.SchemeConfig(kappa=1.0)
    u = flows.taylor_green(g, 1)
    rhs = dy.advection_rhs(g, smooth, u, cfg)
    assert dy.energy_production(g, smooth, rhs, 1.0) <= 1e-12


# -- single steps -----------------------------------------------------------------

def test_zero_flow_step_is_exact(g, smooth):
    cfg = dy.SchemeConfig(kappa=0.2)
    s = dy.step(g, dy.initial_state(smooth, dt=0.4), zero_flow(g), cfg)
    np.testing.assert_allclose(s.theta_hat, dy.hyperdiff_propagate(g, smooth, 0.2, 0.4), rtol=1e-14, atol=1e-14)
    np.testing.assert_array_equal(s.theta_hat, s.T_hat)
    assert s.t == pytest.approx(0.4) and s.step_count == 1


def test_cfl_violation(g, smooth):
    flow = flows.make_flow(g, "taylor_green", a0=10.0, alpha=0.0)
    cfg = dy.SchemeConfig(kappa=0.01)
    limit = dy.cfl_limit(g, flow, 0.0, cfg)
    assert limit == pytest.approx(0.5 * g.dx / 10.0)
    with pytest.raises(dy.CFLError) as err:
        dy.step(g, dy.initial_state(smooth, dt=2 * limit), flow, cfg)
    assert err.value.step_index == 1


class _BlowUp:
    """Divergence-free velocity that turns into NaN after ``t = 0.2``."""

    is_zero = False

    def __init__(self, grid):
        self.grid = grid
        self.v = flows.taylor_green(grid, 1)

    def velocity(self, t):
        return [c * (np.nan if t > 0.2 else 1.0) for c in self.v]

    def max_speed(self, t):
        return 1.0


def test_non_finite_abort_reports_step(g, smooth):
    cfg = dy.SchemeConfig(kappa=0.01, max_dt_fraction=0.05)
    with pytest.raises(dy.NumericalAbort) as err:
        dy.run(g, smooth, _BlowUp(g), cfg, 0.5)
    # steps of 0.05 reach t = 0.2 after 4 steps; the 5th uses the NaN field
    assert err.value.step_index == 5
    partial = err.value.partial
    assert partial is not None and partial.final_state.step_count == 4
    assert partial.samples[-1].t == pytest.approx(0.2)


def test_non_finite_initial_data(g, smooth):
    bad = smooth.copy()
    bad[3, 3] = np.nan
    with pytest.raises(dy.NumericalAbort) as err:
        dy.run(g, bad, zero_flow(g), dy.SchemeConfig(kappa=0.01), 0.5)
    assert err.value.step_index == 0


def test_scheme_config_validation():
    with pytest.raises(ValueError):
        dy.SchemeConfig(kappa=0.0)
    with pytest.raises(ValueError):
        dy.SchemeConfig(kappa=1.0, cfl=1.5)
    with pytest.raises(ValueError):
        dy.SchemeConfig(kappa=1.0, rk_stages=3)


def test_fourth_order_convergence():
    grid = make_grid(2, 64, 2 * math.pi)
    x, y = grid.coords()
    th0 = spectral.forward(grid, np.exp(np.cos(x)) * np.sin(2 * y) + np.cos(x + y))
    flow = flows.make_flow(grid, "taylor_green", a0=1.0, alpha=0.5, m=1)
    cfg = dy.SchemeConfig(kappa=0.01)

    def solve(nsteps):
        s = dy.initial_state(th0, dt=1.0 / nsteps)
        for _ in range(nsteps):
            s = dy.step(grid, s, flow, cfg)
        return s.theta_hat

    a, b, c = (solve(n) for n in (100, 200, 400))
    order = math.log2(dg.l2_norm(grid, a - b) / dg.l2_norm(grid, b - c))
    assert order >= 3.8


# -- sampled runs -----------------------------------------------------------------

def test_sample_times():
    ts = dy.sample_times(100.0, extra=[7.25])
    assert ts[0] == 0.0 and ts[-1] == 100.0 and 7.25 in ts
    assert np.all(np.diff(ts) > 0)
    assert np.allclose(ts[:11], np.linspace(0, 1, 11))
    with pytest.raises(ValueError):
        dy.sample_times(0.0)


@pytest.fixture(scope="module")
def advected_run(g, smooth):
    flow = flows.make_flow(g, "taylor_green", a0=1.0, alpha=0.875, m=1)
    return dy.run(g, smooth, flow, dy.SchemeConfig(kappa=0.01, max_dt_fraction=0.01), 3.0, beta=2.0)


def test_run_conserves_mean_and_dissipates(advected_run):
    r = advected_run
    assert r.max_mean_drift <= 1e-12
    l2 = r.column("l2")
    assert np.all(np.diff(l2) <= 1e-12 * l2[0])
    assert max(r.energy_residual) <= 1e-5
    assert max(r.production) <= 1e-12
    scale = r.column("l2") ** 2
    assert np.all(np.array(r.interpolation_slack) >= -1e-12 * scale)
    assert r.times[-1] == 3.0 and r.steps > 0


def test_run_is_deterministic(g, smooth, advected_run):
    flow = flows.make_flow(g, "taylor_green", a0=1.0, alpha=0.875, m=1)
    again = dy.run(g, smooth, flow, dy.SchemeConfig(kappa=0.01, max_dt_fraction=0.01), 3.0, beta=2.0)
    np.testing.assert_array_equal(again.final_state.theta_hat, advected_run.final_state.theta_hat)
    np.testing.assert_array_equal(again.column("l2"), advected_run.column("l2"))


def test_perturbation_triangle_inequality(g, advected_run):
    for d in advected_run.samples:
        assert d.eta_l2 <= d.l2 + d.T_l2 + 1e-12
        assert abs(d.l2 - d.T_l2) <= d.eta_l2 + 1e-12
    s = advected_run.final_state
    assert dy.perturbation_norm(g, s) == pytest.approx(advected_run.samples[-1].eta_l2)


def test_zero_flow_run_matches_closed_form(g, smooth):
    r = dy.run(g, smooth, zero_flow(g), dy.SchemeConfig(kappa=0.05), 10.0)
    exact = dy.hyperdiff_propagate(g, smooth, 0.05, 10.0)
    assert np.max(np.abs(r.final_state.theta_hat - exact)) <= 1e-12 * np.max(np.abs(smooth))
    assert max(r.energy_residual) <= 1e-12
    assert all(d.eta_l2 == 0.0 for d in r.samples)


@settings(max_examples=10, deadline=None)
@given(kappa=st.floats(1e-3, 1.0), t=st.floats(0.1, 50.0))
def test_zero_flow_energy_is_non_increasing(g, smooth, kappa, t):
    r = dy.run(g, smooth, zero_flow(g), dy.SchemeConfig(kappa=kappa), t)
    l2 = r.column("l2")
    assert np.all(np.diff(l2) <= 0)


def test_snapshots_written(tmp_path, g, smooth):
    flow = flows.make_flow(g, "shear", a0=0.5, alpha=1.0)
    r = dy.run(g, smooth, flow, dy.SchemeConfig(kappa=0.01), 1.0,
               snapshot_times=[0.5, 1.0], snapshot_dir=tmp_path)
    assert [p.name for p in r.snapshots] == ["theta_t0.5.bin", "theta_t1.bin"]
    grid, values, meta = spectral.read_field(r.snapshots[-1])
    assert grid.same_as(g) and meta["time"] == 1.0
    np.testing.assert_allclose(values, spectral.inverse(g, r.final_state.theta_hat), atol=1e-15)
    with pytest.raises(ValueError, match="snapshot_dir"):
        dy.run(g, smooth, flow, dy.SchemeConfig(kappa=0.01), 1.0, snapshot_times=[0.5])


def test_snapshot_failure_keeps_partial_result(tmp_path, g, smooth):
    (tmp_path / "theta_t0.5.bin").mkdir()
    flow = flows.make_flow(g, "shear", a0=0.5, alpha=1.0)
    with pytest.raises(dy.SnapshotWriteError) as err:
        dy.run(g, smooth, flow, dy.SchemeConfig(kappa=0.01), 1.0,
               snapshot_times=[0.5], snapshot_dir=tmp_path)
    partial = err.value.partial
    assert partial.final_state.t == pytest.approx(0.5)
    assert partial.samples[-1].t == pytest.approx(0.5)


def test_flow_free_exponent_matches_whole_space(hyperdiffusion_2d):
    # over [10, 1e4] a sigma = 2 Gaussian is still pre-asymptotic even on R^2
    from scipy import integrate
    from hyperlab import bounds as bd

    ts = np.geomspace(10, 1e4, 40)

    def energy(t):
        return integrate.quad(lambda r: r * math.exp(-4 * r * r - 2 * t * r**4), 0, np.inf, limit=400)[0]

    whole_space = np.polyfit(np.log1p(ts), [0.5 * math.log(energy(t)) for t in ts], 1)[0]
    cols = hyperdiffusion_2d["cols"]
    torus = bd.fit_power_law(cols["t"], cols["l2"], window=(10, 1e4)).exponent
    assert torus == pytest.approx(whole_space, abs=2e-3)
