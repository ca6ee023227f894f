import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperlab import diagnostics as dg
from hyperlab import spectral
from hyperlab.spectral import make_grid


@pytest.fixture(scope="module")
def g():
    return make_grid(2, 32, 2 * math.pi)


def _hat(g, values):
    return spectral.forward(g, values)


def test_single_mode_norms(g):
    x, _ = g.coords()
    c = _hat(g, np.sin(x))
    assert dg.l2_norm(g, c) == pytest.approx(math.pi * math.sqrt(2), rel=1e-12)
    assert dg.grad_norm(g, c) == pytest.approx(math.pi * math.sqrt(2), rel=1e-12)
    assert dg.hminus1_norm(g, c) == pytest.approx(dg.l2_norm(g, c), rel=1e-12)
    c2 = _hat(g, np.sin(2 * x))
    assert dg.grad_norm(g, c2) == pytest.approx(2 * dg.l2_norm(g, c2), rel=1e-12)
    lam = dg.filamentation_length(dg.hminus1_norm(g, c2), dg.l2_norm(g, c2))
    assert lam == pytest.approx(0.5, rel=1e-12)


def test_constant_field(g):
    c = _hat(g, np.full(g.shape, 2.0))
    assert dg.grad_norm(g, c) == 0.0
    assert dg.hminus1_norm(g, c) == 0.0
    assert dg.l2_norm(g, c) == pytest.approx(2 * 2 * math.pi)


def test_two_mode_mixture_filamentation(g):
    x, _ = g.coords()
    c = _hat(g, np.sin(x) + np.sin(2 * x))
    lam = dg.filamentation_length(dg.hminus1_norm(g, c), dg.l2_norm(g, c))
    assert lam == pytest.approx(math.sqrt(0.625), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(1e-3, 1e3))
def test_filamentation_scale_invariant_and_interpolation(g, seed, scale):
    f = np.random.default_rng(seed).standard_normal(g.shape)
    c = _hat(g, f)
    lam = dg.filamentation_length(dg.hminus1_norm(g, c), dg.l2_norm(g, c))
    lam3 = dg.filamentation_length(dg.hminus1_norm(g, scale * c), dg.l2_norm(g, scale * c))
    assert lam3 == pytest.approx(lam, rel=1e-12)
    assert lam >= 0
    slack = dg.interpolation_slack(g, c)
    assert slack >= -1e-12 * dg.nonzero_l2_sq(g, c)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_interpolation_is_tight_on_a_single_shell(g, k):
    x, y = g.coords()
    c = _hat(g, np.sin(k * x) + 0.3 * np.cos(k * y))
    assert abs(dg.interpolation_slack(g, c)) <= 1e-12 * dg.nonzero_l2_sq(g, c)


def test_filamentation_zero_field():
    with pytest.raises(ZeroDivisionError):
        dg.filamentation_length(0.0, 0.0)


def test_splitting_radius():
    kappa = 0.3
    assert dg.splitting_radius(2 * kappa, kappa, 0.0) == pytest.approx(1.0)
    assert dg.splitting_radius(2 * kappa, kappa, 15.0) == pytest.approx(0.5)
    for beta, t in [(1.7, 3.0), (5.0, 1e4)]:
        r = dg.splitting_radius(beta, kappa, t)
        assert r**4 * 2 * kappa * (1 + t) == pytest.approx(beta, rel=1e-13)
    with pytest.raises(ValueError):
        dg.splitting_radius(-1.0, kappa, 0.0)
    with pytest.raises(ValueError):
        dg.splitting_radius(1.0, kappa, -1.0)


def test_low_mode_energy_limits(g):
    f = np.random.default_rng(3).standard_normal(g.shape)
    c = _hat(g, f)
    assert dg.low_mode_energy(g, c, 0.5) == pytest.approx(g.plancherel * abs(c[0, 0]) ** 2)
    assert dg.low_mode_energy(g, c, 100.0) == pytest.approx(dg.l2_norm(g, c) ** 2, rel=1e-12)
    with pytest.raises(ValueError):
        dg.low_mode_energy(g, c, 0.0)


@pytest.mark.parametrize("n,N", [(2, 256), (3, 64)])
def test_ball_moment_matches_continuum(n, N):
    grid = make_grid(n, N, 2 * math.pi)
    for r in (10.0, 15.0, 20.0):
        exact = dg.sphere_measure(n) * r ** (n + 2) / (n + 2)
        assert dg.ball_moment(grid, r) == pytest.approx(exact, rel=0.05)


def test_sphere_measure():
    assert dg.sphere_measure(2) == pytest.approx(2 * math.pi)
    assert dg.sphere_measure(3) == pytest.approx(4 * math.pi)
    for n in (2, 3):
        assert dg.sphere_measure(n) == pytest.approx(2 * math.pi ** (n / 2) / math.gamma(n / 2))
    with pytest.raises(ValueError):
        dg.sphere_measure(4)


def test_diagnose_record(g):
    x, y = g.coords()
    theta = 1.0 + np.sin(x)
    T = np.sin(x)
    d = dg.diagnose(g, 2.0, _hat(g, theta), _hat(g, T), split_radius=0.5)
    assert d.t == 2.0
    assert d.zero_mode == pytest.approx(4 * math.pi**2)
    assert d.eta_l2 == pytest.approx(2 * math.pi)
    assert d.T_l2 == pytest.approx(math.pi * math.sqrt(2))
    assert d.low_mode_energy == pytest.approx(4 * math.pi**2)
    assert d.names()[:5] == ["t", "l2", "grad_l2", "hminus1", "lam"]
    assert len(d.as_tuple()) == len(d.names())
    bare = dg.diagnose(g, 0.0, _hat(g, theta))
    assert math.isnan(bare.eta_l2) and math.isnan(bare.low_mode_energy)
