"""Mixing-norm diagnostics computed from spectral coefficients.

All norms are continuum-normalized through Plancherel, i.e. they
approximate the whole-space norms for
``d/dt theta + u.grad theta + kappa Delta^2 theta = 0``.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .spectral import Grid


def _weighted(grid: Grid, coeffs: np.ndarray, weight) -> float:
    return float(grid.plancherel * np.sum(weight * np.abs(coeffs) ** 2))


def l2_norm(grid: Grid, coeffs: np.ndarray) -> float:
    return math.sqrt(_weighted(grid, coeffs, 1.0))


def grad_norm(grid: Grid, coeffs: np.ndarray) -> float:
    return math.sqrt(_weighted(grid, coeffs, grid.k2))


def laplacian_norm(grid: Grid, coeffs: np.ndarray) -> float:
    return math.sqrt(_weighted(grid, coeffs, grid.k2**2))


def _inverse_k2(grid: Grid) -> np.ndarray:
    inv = np.zeros(grid.shape)
    nz = grid.k2 > 0
    inv[nz] = 1.0 / grid.k2[nz]
    return inv


def hminus1_norm(grid: Grid, coeffs: np.ndarray) -> float:
    """Homogeneous H^-1 norm ``|| |xi|^-1 theta_hat ||``; the zero mode is excluded."""
    return math.sqrt(_weighted(grid, coeffs, _inverse_k2(grid)))


def nonzero_l2_sq(grid: Grid, coeffs: np.ndarray) -> float:
    return _weighted(grid, coeffs, grid.k2 > 0)


def filamentation_length(hminus1: float, l2: float) -> float:
    if not l2 > 1e-300:
        raise ZeroDivisionError(f"filamentation length undefined: ||theta||_2 = {l2}")
    return hminus1 / l2


def splitting_radius(beta: float, kappa: float, t: float) -> float:
    """Fourier-splitting radius ``(beta / (2 kappa (1+t)))^(1/4)``."""
    if not (beta > 0 and kappa > 0):
        raise ValueError("beta and kappa must be positive")
    if t < 0:
        raise ValueError("t must be >= 0")
    return (beta / (2.0 * kappa * (1.0 + t))) ** 0.25


def low_mode_energy(grid: Grid, coeffs: np.ndarray, r: float) -> float:
    """``||theta_hat||^2`` restricted to the ball ``|xi| <= r`` (zero mode included)."""
    if not r > 0:
        raise ValueError("radius must be positive")
    return _weighted(grid, coeffs, grid.k2 <= r * r)


def ball_moment(grid: Grid, r: float) -> float:
    """Riemann sum of ``int_{|xi|<=r} |xi|^2 d xi`` over the grid's wavenumber lattice."""
    inside = grid.k2 <= r * r
    return float(grid.dk**grid.n * np.sum(grid.k2[inside]))


def sphere_measure(n: int) -> float:
    """Measure of the unit (n-1)-sphere for n = 2, 3."""
    if n not in (2, 3):
        raise ValueError(f"sphere_measure supports n = 2, 3 only, got {n}")
    return {2: 2 * math.pi, 3: 4 * math.pi}[n]


def interpolation_slack(grid: Grid, coeffs: np.ndarray) -> float:
    """``||grad theta|| ||grad^-1 theta|| - sum_{xi != 0} |theta_hat|^2``; never negative."""
    return grad_norm(grid, coeffs) * hminus1_norm(grid, coeffs) - nonzero_l2_sq(grid, coeffs)


@dataclass(frozen=True)
class MixingDiagnostics:
    t: float
    l2: float
    grad_l2: float
    hminus1: float
    lam: float
    zero_mode: complex
    low_mode_energy: float
    eta_l2: float
    T_l2: float = math.nan
    lap_l2: float = math.nan

    @classmethod
    def names(cls) -> list:
        return [f.name for f in fields(cls)]

    def as_tuple(self) -> tuple:
        return astuple(self)


def diagnose(grid: Grid, t: float, theta_hat: np.ndarray, T_hat: np.ndarray | None = None,
             split_radius: float | None = None) -> MixingDiagnostics:
    """Snapshot of every mixing diagnostic for one state."""
    l2 = l2_norm(grid, theta_hat)
    h1 = hminus1_norm(grid, theta_hat)
    if T_hat is not None:
        eta_l2 = l2_norm(grid, theta_hat - T_hat)
        T_l2 = l2_norm(grid, T_hat)
    else:
        eta_l2 = T_l2 = math.nan
    low = low_mode_energy(grid, theta_hat, split_radius) if split_radius else math.nan
    return MixingDiagnostics(
        t=float(t),
        l2=l2,
        grad_l2=grad_norm(grid, theta_hat),
        hminus1=h1,
        lam=filamentation_length(h1, l2),
        zero_mode=complex(grid.cell * theta_hat.flat[0]),
        low_mode_energy=low,
        eta_l2=eta_l2,
        T_l2=T_l2,
        lap_l2=laplacian_norm(grid, theta_hat),
    )
