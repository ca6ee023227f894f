"""Time integration of the advection-hyperdiffusion equation.

The hyperdiffusive part is propagated exactly by the Fourier multiplier
``exp(-kappa |xi|^4 t)``.  Advection is treated explicitly with a Lawson
(integrating-factor) RK4 scheme, pseudo-spectrally with 2/3 dealiasing.  The
flow-free reference ``T`` is co-evolved exactly so that the perturbation
``eta = theta - T`` is available at every sample.
"""

from __future__ import annotations

import functools
import logging
import math
import weakref
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import spectral
from .spectral import Grid

log = logging.getLogger(__name__)


class NumericalAbort(RuntimeError):
    """Non-finite values or a violated stability limit; carries partial results."""

    def __init__(self, message: str, step_index: int | None = None, partial=None):
        super().__init__(message)
        self.step_index = step_index
        self.partial = partial


class CFLError(NumericalAbort):
    pass


class SnapshotWriteError(OSError):
    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SchemeConfig:
    kappa: float
    cfl: float = 0.5
    dealias: bool = True
    rk_stages: int = 4
    max_dt_fraction: float = 5e-3

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.rk_stages != 4:
            raise ValueError("only the 4-stage integrating-factor scheme is implemented")
        if not self.max_dt_fraction > 0:
            raise ValueError("max_dt_fraction must be positive")


@dataclass(frozen=True)
class SolverState:
    t: float
    theta_hat: np.ndarray = field(repr=False)
    T_hat: np.ndarray = field(repr=False)
    dt: float = 0.0
    step_count: int = 0


def initial_state(theta0_hat: np.ndarray, dt: float = 0.0) -> SolverState:
    c = np.array(theta0_hat, dtype=complex)
    return SolverState(t=0.0, theta_hat=c, T_hat=c.copy(), dt=dt, step_count=0)


def hyperdiff_symbol(grid: Grid, kappa: float, dt: float) -> np.ndarray:
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    return np.exp(-kappa * grid.k2**2 * dt)


def hyperdiff_propagate(grid: Grid, coeffs: np.ndarray, kappa: float, dt: float) -> np.ndarray:
    """Exact solution operator of ``d/dt theta + kappa Delta^2 theta = 0`` over ``dt``."""
    return spectral.apply_multiplier(grid, coeffs, hyperdiff_symbol(grid, kappa, dt))


@functools.lru_cache(maxsize=8)
def _mask(grid: Grid) -> np.ndarray:
    return spectral.dealias_mask(grid)


def _half(grid: Grid, full: np.ndarray) -> np.ndarray:
    return full[..., : grid.N // 2 + 1]


def _to_physical(grid: Grid, full: np.ndarray) -> np.ndarray:
    # the slice of a Hermitian spectrum is exactly what irfftn expects
    return np.fft.irfftn(_half(grid, full), s=grid.shape, axes=grid.axes)


def _dealias_physical(grid: Grid, values: np.ndarray) -> np.ndarray:
    half = np.fft.rfftn(values) * _half(grid, _mask(grid))
    return np.fft.irfftn(half, s=grid.shape, axes=grid.axes)


def advection_rhs(grid: Grid, theta_hat: np.ndarray, u: list, cfg: SchemeConfig,
                  u_dealiased: bool = False) -> np.ndarray:
    """Spectral coefficients of ``-u . grad theta``, dealiased on input and output.

    ``u_dealiased=True`` promises that ``u`` already carries no modes above N/3.
    """
    if len(u) != grid.n or any(c.shape != grid.shape for c in u):
        raise ValueError("velocity does not match the scalar's grid")
    if cfg.dealias:
        mask = _mask(grid)
        theta_hat = theta_hat * mask
        if not u_dealiased:
            u = [_dealias_physical(grid, c) for c in u]
    product = sum(uj * _to_physical(grid, g) for uj, g in zip(u, spectral.gradient(grid, theta_hat)))
    out = -np.fft.fftn(product)
    if cfg.dealias:
        out *= mask
    return out


_PROFILE_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def dealiased_velocity(grid: Grid, flow, t: float) -> list:
    """Velocity at ``t`` with the 2/3 rule applied; separable flows reuse a cached profile."""
    if hasattr(flow, "shape_field") and hasattr(flow, "amplitude"):
        try:
            prof = _PROFILE_CACHE[flow]
        except KeyError:
            prof = [_dealias_physical(grid, c) for c in flow.shape_field]
            _PROFILE_CACHE[flow] = prof
        amp = flow.amplitude(t)
        return [amp * c for c in prof]
    return [_dealias_physical(grid, c) for c in flow.velocity(t)]


def energy_production(grid: Grid, theta_hat: np.ndarray, rhs_hat: np.ndarray, u_max: float) -> float:
    """``|<theta, u.grad theta>| / (||theta|| ||u||_inf ||grad theta||)``; 0 for trivial inputs."""
    inner = grid.plancherel * float(np.sum((np.conj(theta_hat) * rhs_hat).real))
    scale = dg.l2_norm(grid, theta_hat) * u_max * dg.grad_norm(grid, theta_hat)
    return abs(inner) / scale if scale > 0 else 0.0


def cfl_limit(grid: Grid, flow, t: float, cfg: SchemeConfig) -> float:
    vmax = flow.max_speed(t)
    return math.inf if vmax == 0 else cfg.cfl * grid.dx / vmax


def _check_finite(arr: np.ndarray, step_index: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalAbort(f"non-finite values at step {step_index}", step_index=step_index)


def step(grid: Grid, state: SolverState, flow, cfg: SchemeConfig) -> SolverState:
    """Advance ``theta`` by Lawson RK4 and ``T`` exactly over ``state.dt``."""
    h = state.dt
    index = state.step_count + 1
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    limit = cfl_limit(grid, flow, state.t, cfg)
    if h > limit * (1 + 1e-12):
        raise CFLError(f"dt={h:.6g} exceeds CFL limit {limit:.6g} at step {index}", step_index=index)
    E_half = hyperdiff_symbol(grid, cfg.kappa, h / 2)
    E = E_half * E_half
    th = state.theta_hat
    if flow.is_zero:
        new = E * th
    else:
        t = state.t

        def N(c, s):
            if cfg.dealias:
                return advection_rhs(grid, c, dealiased_velocity(grid, flow, s), cfg, u_dealiased=True)
            return advection_rhs(grid, c, flow.velocity(s), cfg)

        k1 = N(th, t)
        k2 = N(E_half * (th + 0.5 * h * k1), t + h / 2)
        k3 = N(E_half * th + 0.5 * h * k2, t + h / 2)
        k4 = N(E * th + h * E_half * k3, t + h)
        new = E * th + (h / 6.0) * (E * k1 + 2.0 * E_half * (k2 + k3) + k4)
    _check_finite(new, index)
    return SolverState(t=state.t + h, theta_hat=new, T_hat=E * state.T_hat, dt=h, step_count=index)


def perturbation_norm(grid: Grid, state: SolverState) -> float:
    return dg.l2_norm(grid, state.theta_hat - state.T_hat)


# -- sampled runs --------------------------------------------------------------

def sample_times(t_end: float, extra=(), early_step: float = 0.1, ratio: float = 1.1) -> np.ndarray:
    """Uniform samples up to ``t = 1`` then geometric with ``ratio``; always includes ``t_end``."""
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    ts = list(np.round(np.arange(0.0, min(1.0, t_end) + 1e-12, early_step), 12))
    t = 1.0
    while t * ratio < t_end:
        t *= ratio
        ts.append(t)
    ts.append(float(t_end))
    ts.extend(float(x) for x in extra if 0 <= x <= t_end)
    return np.unique(np.array(ts, dtype=float))


def _exact_dissipation(grid: Grid, coeffs: np.ndarray, kappa: float, h: float) -> float:
    """``int_0^h ||Delta T||^2 ds`` for the flow-free evolution of ``coeffs``."""
    k4 = grid.k2**2
    weight = np.where(k4 > 0, -np.expm1(-2 * kappa * k4 * h) / np.where(k4 > 0, 2 * kappa * k4, 1.0), 0.0)
    return float(grid.plancherel * np.sum(k4 * weight * np.abs(coeffs) ** 2))


@dataclass
class RunResult:
    grid: Grid
    samples: list = field(default_factory=list)
    energy_residual: list = field(default_factory=list)
    production: list = field(default_factory=list)
    interpolation_slack: list = field(default_factory=list)
    steps: int = 0
    mean0: complex = 0j
    max_mean_drift: float = 0.0
    snapshots: list = field(default_factory=list)
    final_state: SolverState | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")


def _write_snapshot(directory: Path, grid: Grid, state: SolverState) -> Path:
    path = directory / f"theta_t{state.t:.6g}.bin"
    spectral.write_field(path, grid, spectral.inverse(grid, state.theta_hat), time=state.t, name="theta")
    return path


def run(grid: Grid, theta0_hat: np.ndarray, flow, cfg: SchemeConfig, t_end: float, *,
        times=None, beta: float | None = None, snapshot_times=(), snapshot_dir=None,
        track_production: bool = True) -> RunResult:
    """Integrate to ``t_end`` recording diagnostics at every sample time.

    Between samples the step size is ``min(CFL, max_dt_fraction (1+t), distance
    to next sample)``.  With an identically zero flow the propagator is exact, so
    only the sample times limit the step and the dissipation integral is exact.
    The energy residual of each sample interval is
    ``|Delta ||theta||^2 + 2 kappa int ||Delta theta||^2| / ||theta(t_start)||^2``.
    """
    times = sample_times(t_end, extra=snapshot_times) if times is None else np.unique(np.asarray(times, float))
    snap_set = {float(s) for s in snapshot_times}
    if snap_set and snapshot_dir is None:
        raise ValueError("snapshot_times given without snapshot_dir")
    if snapshot_dir is not None:
        snapshot_dir = Path(snapshot_dir)
        snapshot_dir.mkdir(parents=True, exist_ok=True)
    state = initial_state(theta0_hat)
    _check_finite(state.theta_hat, 0)
    result = RunResult(grid=grid, mean0=complex(state.theta_hat.flat[0]))
    exact = flow.is_zero

    def record(st: SolverState, residual: float, production: float) -> None:
        r = dg.splitting_radius(beta, cfg.kappa, st.t) if beta else None
        d = dg.diagnose(grid, st.t, st.theta_hat, st.T_hat, r)
        result.samples.append(d)
        result.energy_residual.append(residual)
        result.production.append(production)
        result.interpolation_slack.append(dg.interpolation_slack(grid, st.theta_hat))
        drift = abs(st.theta_hat.flat[0] - result.mean0) / max(abs(result.mean0), 1e-300)
        result.max_mean_drift = max(result.max_mean_drift, drift)
        log.info("step=%d t=%.6g dt=%.3g l2=%.6e cfl=%.3f", st.step_count, st.t, st.dt, d.l2,
                 st.dt / cfl_limit(grid, flow, st.t, cfg) if st.dt else 0.0)
        if any(abs(st.t - s) <= 1e-9 * max(1.0, s) for s in snap_set):
            try:
                result.snapshots.append(_write_snapshot(snapshot_dir, grid, st))
            except OSError as exc:
                result.final_state = st
                raise SnapshotWriteError(f"snapshot at t={st.t:.6g} failed: {exc}", partial=result) from exc

    if times[0] > 0:
        times = np.concatenate([[0.0], times])
    record(state, 0.0, 0.0)
    for t_next in times[1:]:
        e_start = dg.l2_norm(grid, state.theta_hat) ** 2
        dissipation = 0.0
        lap_prev = dg.laplacian_norm(grid, state.theta_hat) ** 2
        prod = 0.0
        while state.t < t_next - 1e-12 * max(1.0, t_next):
            gap = t_next - state.t
            if exact:
                h = gap
            else:
                h = min(cfl_limit(grid, flow, state.t, cfg), cfg.max_dt_fraction * (1 + state.t), gap)
                # avoid a sliver step just before the sample
                if gap - h < 1e-3 * h:
                    h = gap
                elif gap < 2 * h:
                    h = gap / 2
            prev = state
            try:
                state = step(grid, replace(state, dt=h), flow, cfg)
            except NumericalAbort as exc:
                result.final_state = prev
                exc.partial = result
                raise
            if exact:
                dissipation += _exact_dissipation(grid, prev.theta_hat, cfg.kappa, h)
            else:
                lap = dg.laplacian_norm(grid, state.theta_hat) ** 2
                dissipation += 0.5 * h * (lap_prev + lap)
                lap_prev = lap
        state = replace(state, t=float(t_next))
        if track_production and not exact:
            u = flow.velocity(state.t)
            vmax = float(np.max(np.sqrt(sum(c**2 for c in u))))
            rhs = advection_rhs(grid, state.theta_hat, u, cfg)
            prod = energy_production(grid, state.theta_hat, rhs, vmax)
        e_end = dg.l2_norm(grid, state.theta_hat) ** 2
        residual = abs(e_end - e_start + 2 * cfg.kappa * dissipation) / e_start if e_start > 0 else 0.0
        record(state, residual, prod)
    result.steps = state.step_count
    result.final_state = state
    return result
