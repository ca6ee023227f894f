"""Initial data and divergence-free velocity fields.

Built-in flows are separable, ``u(x, t) = a0 (1+t)**(-alpha) v(x)``, so the
L2 and gradient decay laws hold as equalities with ``nu = alpha`` and
``c_grad_u = a0 * ||grad v||_inf``.  Flows with independent exponents have to
come from velocity snapshots on disk (see :class:`SnapshotFlow`).
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import spectral
from .spectral import Grid

DIVERGENCE_TOL = 1e-10


class FlowError(ValueError):
    pass


# -- initial data --------------------------------------------------------------

def gaussian_theta0(grid: Grid, sigma: float, amplitude: float = 1.0) -> tuple:
    """Gaussian bump centred in the box.

    Returns ``(values, descriptor)``; the descriptor carries the continuum
    transform ``hat0 * exp(-sigma^2 |xi|^2 / 2)`` (ordinary convention) so
    callers can compare grid values with closed forms.
    """
    if grid.L < 12 * sigma:
        raise ValueError(f"box L={grid.L} too small for sigma={sigma}: need L >= 12 sigma")
    center = grid.L / 2
    r2 = sum((x - center) ** 2 for x in grid.coords())
    values = amplitude * np.exp(-r2 / (2 * sigma**2))
    descriptor = {
        "kind": "gaussian",
        "sigma": sigma,
        "amplitude": amplitude,
        "center": center,
        "hat0": amplitude * (2 * math.pi) ** (grid.n / 2) * sigma**grid.n,
        "l2_sq": amplitude**2 * (math.pi * sigma**2) ** (grid.n / 2),
    }
    return values, descriptor


def gaussian_hat(descriptor: dict, n: int, xi) -> np.ndarray:
    """Continuum (ordinary) transform magnitude of a :func:`gaussian_theta0` field."""
    xi = np.asarray(xi, dtype=float)
    return descriptor["hat0"] * np.exp(-descriptor["sigma"] ** 2 * xi**2 / 2)


def certify_M(grid: Grid, theta0_hat: np.ndarray, delta: float, unitary: bool = False) -> float:
    """Smallest continuum-normalized ``|theta0_hat|`` over grid modes with ``|xi| <= delta``.

    With ``unitary=False`` the value approximates the ordinary transform
    ``int theta0 exp(-i xi.x) dx``.  The energy bounds are stated through
    Plancherel, which needs the unitary normalization: pass ``unitary=True``
    to divide by ``(2 pi)^(n/2)``.
    """
    if delta < grid.dk * (1 - 1e-12):
        raise ValueError(
            f"delta={delta} is below the smallest nonzero wavenumber {grid.dk:.6g}; "
            "no nonzero mode to certify"
        )
    inside = grid.kmag <= delta * (1 + 1e-12)
    M = grid.cell * float(np.min(np.abs(theta0_hat[inside])))
    if unitary:
        M /= (2 * math.pi) ** (grid.n / 2)
    return M


# -- velocity profiles -----------------------------------------------------------

def _check_mode(grid: Grid, m: int) -> None:
    if int(m) != m or m < 1:
        raise ValueError(f"wavenumber m must be a positive integer, got {m}")
    if m >= grid.N // 2:
        raise ValueError(f"wavenumber m={m} is not resolved by N={grid.N}")


def taylor_green(grid: Grid, m: int = 1) -> list:
    _check_mode(grid, m)
    X = grid.coords()
    a = 2 * math.pi * m / grid.L
    v1 = np.sin(a * X[0]) * np.cos(a * X[1])
    v2 = -np.cos(a * X[0]) * np.sin(a * X[1])
    comps = [v1, v2]
    if grid.n == 3:
        comps.append(np.zeros(grid.shape))
    return comps


def shear(grid: Grid, m: int = 1) -> list:
    _check_mode(grid, m)
    X = grid.coords()
    comps = [np.sin(2 * math.pi * m / grid.L * X[1])]
    comps += [np.zeros(grid.shape) for _ in range(grid.n - 1)]
    return comps


PROFILES = {"taylor_green": taylor_green, "shear": shear}


def velocity_l2(grid: Grid, u: list) -> float:
    return math.sqrt(sum(spectral.physical_l2_sq(grid, c) for c in u))


def velocity_grad_inf(grid: Grid, u: list) -> float:
    """Largest absolute entry of the velocity gradient matrix on the grid."""
    worst = 0.0
    for comp in u:
        for d in spectral.gradient(grid, spectral.forward(grid, comp)):
            worst = max(worst, float(np.max(np.abs(spectral.inverse(grid, d)))))
    return worst


def max_divergence(grid: Grid, u: list) -> float:
    return float(np.max(np.abs(spectral.divergence(grid, u))))


def _certify_divergence_free(grid: Grid, u: list, what: str) -> None:
    scale = max(1.0, max(float(np.max(np.abs(c))) for c in u))
    div = max_divergence(grid, u)
    if div > DIVERGENCE_TOL * scale:
        raise FlowError(f"{what} is not divergence-free: max |div u| = {div:.3g}")


@dataclass(frozen=True, eq=False)
class FlowSpec:
    """Separable flow ``a0 (1+t)^(-alpha) v(x)`` with a fixed profile ``v``."""

    grid: Grid
    profile: str
    a0: float
    alpha: float
    m: int = 1
    shape_field: list = field(default=None, repr=False)
    profile_l2: float = 0.0
    profile_grad_inf: float = 0.0

    @property
    def nu(self) -> float:
        return self.alpha

    @property
    def c_grad_u(self) -> float:
        return self.a0 * self.profile_grad_inf

    @property
    def is_zero(self) -> bool:
        return self.a0 == 0

    def amplitude(self, t: float) -> float:
        return self.a0 * (1.0 + t) ** (-self.alpha)

    def velocity(self, t: float) -> list:
        amp = self.amplitude(t)
        return [amp * c for c in self.shape_field]

    def max_speed(self, t: float) -> float:
        return abs(self.amplitude(t)) * self._vmax

    @functools.cached_property
    def _vmax(self) -> float:
        return float(np.max(np.sqrt(sum(c**2 for c in self.shape_field))))


def make_flow(grid: Grid, profile: str = "taylor_green", a0: float = 1.0, alpha: float = 1.0,
              m: int = 1, c_grad_u: float | None = None) -> FlowSpec:
    """Separable built-in flow; pass ``c_grad_u`` instead of ``a0`` to fix the gradient constant."""
    if profile not in PROFILES:
        raise ValueError(f"unknown flow profile {profile!r}; choose from {sorted(PROFILES)}")
    if alpha < 0:
        raise ValueError(f"decay exponent alpha must be >= 0, got {alpha}")
    v = PROFILES[profile](grid, m)
    _certify_divergence_free(grid, v, f"{profile} profile")
    grad_inf = velocity_grad_inf(grid, v)
    if c_grad_u is not None:
        a0 = c_grad_u / grad_inf
    return FlowSpec(grid=grid, profile=profile, a0=float(a0), alpha=float(alpha), m=int(m),
                    shape_field=v, profile_l2=velocity_l2(grid, v), profile_grad_inf=grad_inf)


def evaluate_flow(flow, t: float) -> list:
    return flow.velocity(t)


class CompositeFlow:
    """Sum of flows sharing one grid (e.g. two separable flows with different alpha)."""

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ValueError("CompositeFlow needs at least one part")
        self.grid = parts[0].grid
        if any(not p.grid.same_as(self.grid) for p in parts):
            raise ValueError("all flow parts must share a grid")
        self.parts = parts
        self.is_zero = all(p.is_zero for p in parts)

    def velocity(self, t: float) -> list:
        fields = [p.velocity(t) for p in self.parts]
        return [sum(comp) for comp in zip(*fields)]

    def max_speed(self, t: float) -> float:
        u = self.velocity(t)
        return float(np.max(np.sqrt(sum(c**2 for c in u))))


class SnapshotFlow:
    """Velocity read from snapshot files, linearly interpolated in time.

    Directory layout: ``manifest.json`` with ``{"snapshots": [{"t": ...,
    "components": ["u0_x.bin", "u0_y.bin"]}, ...]}``; each component file is
    in the snapshot format of :func:`hyperlab.spectral.write_field`.
    """

    profile = "user_snapshot"

    def __init__(self, grid: Grid, times, fields):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 1 or np.any(np.diff(times) <= 0):
            raise FlowError("snapshot times must be strictly increasing")
        self.grid = grid
        self.times = times
        self.fields = [list(f) for f in fields]
        for t, u in zip(times, self.fields):
            if len(u) != grid.n:
                raise FlowError(f"snapshot at t={t} has {len(u)} components, expected {grid.n}")
            _certify_divergence_free(grid, u, f"snapshot at t={t}")
        self.is_zero = all(np.all(c == 0) for u in self.fields for c in u)

    @classmethod
    def from_directory(cls, directory) -> "SnapshotFlow":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        grid = None
        times, fields = [], []
        for entry in manifest["snapshots"]:
            comps = []
            for name in entry["components"]:
                g, values, _ = spectral.read_field(directory / name)
                if grid is None:
                    grid = g
                elif not g.same_as(grid):
                    raise FlowError(f"{name}: grid differs from earlier snapshots")
                comps.append(values)
            times.append(entry["t"])
            fields.append(comps)
        if grid is None:
            raise FlowError(f"{directory}: manifest lists no snapshots")
        return cls(grid, times, fields)

    def velocity(self, t: float) -> list:
        if t < self.times[0] or t > self.times[-1]:
            raise FlowError(f"t={t} outside snapshot range [{self.times[0]}, {self.times[-1]}]")
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        if j >= len(self.times) - 1:
            return [c.copy() for c in self.fields[-1]]
        w = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        return [(1 - w) * a + w * b for a, b in zip(self.fields[j], self.fields[j + 1])]

    def max_speed(self, t: float) -> float:
        u = self.velocity(t)
        return float(np.max(np.sqrt(sum(c**2 for c in u))))


def write_snapshot_flow(directory, grid: Grid, times, fields) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (t, u) in enumerate(zip(times, fields)):
        names = []
        for j, comp in enumerate(u):
            name = f"u{i}_{j}.bin"
            spectral.write_field(directory / name, grid, comp, time=t, name=f"u_{j}")
            names.append(name)
        entries.append({"t": float(t), "components": names})
    (directory / "manifest.json").write_text(json.dumps({"snapshots": entries}, indent=1))
    return directory


class FlowDecayFit(NamedTuple):
    alpha: float
    nu: float
    c_grad_u: float
    residual: float
    violated: bool


def measure_flow_decay(flow, times, tol: float = 1e-3) -> FlowDecayFit:
    """Log-log fit of ``||u(t)||_2`` and ``||grad u(t)||_inf`` against ``1+t``.

    ``violated`` is set when the RMS log residual of either fit exceeds ``tol``.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 8:
        raise ValueError("need at least 8 sample times")
    if (1 + times.max()) / (1 + times.min()) < 10:
        raise ValueError("sample times must span a decade in 1+t")
    l2, gi = [], []
    for t in times:
        u = flow.velocity(t)
        l2.append(velocity_l2(flow.grid, u))
        gi.append(velocity_grad_inf(flow.grid, u))
    l2, gi = np.array(l2), np.array(gi)
    if np.any(l2 <= 0) or np.any(gi <= 0):
        raise ValueError("flow norms vanish at some sample time; decay exponents undefined")
    x = np.log1p(times)
    sa, ia = np.polyfit(x, np.log(l2), 1)
    sn, inn = np.polyfit(x, np.log(gi), 1)
    res = max(
        float(np.sqrt(np.mean((np.log(l2) - (sa * x + ia)) ** 2))),
        float(np.sqrt(np.mean((np.log(gi) - (sn * x + inn)) ** 2))),
    )
    return FlowDecayFit(alpha=float(-sa), nu=float(-sn), c_grad_u=float(math.exp(inn)),
                        residual=res, violated=res > tol)
