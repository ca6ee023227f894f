"""Biharmonic heat kernel: radial profile, normalization, envelope, Lp norms.

The kernel of ``d/dt T + Delta^2 T = 0`` is

    G(t, x) = alpha_n * t**(-n/4) * f_n(|x| / t**(1/4)),
    f_n(eta) = eta**(1-n) * int_0^inf exp(-s**4) (eta*s)**(n/2) J_{(n-2)/2}(eta*s) ds.

Writing ``Lambda_nu(z) = z**(-nu) J_nu(z)`` (an entire function) gives

    f_n(eta) = int_0^inf exp(-s**4) s**(n-1) Lambda_nu(eta*s) ds,

which is how it is evaluated here: no division by ``eta`` and the
``eta -> 0`` limit comes out of ``Lambda_nu(0) = 1 / (2**nu Gamma(nu+1))``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import spectral

SUPPORTED_ORDERS = (-0.5, 0.0, 0.5, 1.0, 1.5)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class QuadratureError(RuntimeError):
    pass


class KernelSupportError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    s_max: float = 6.0
    base_panels: int = 64
    eta_density: float = 2.0
    order: int = 16
    tol: float = 1e-9
    max_doublings: int = 4

    def __post_init__(self):
        if self.s_max < 4:
            raise ValueError("s_max must be >= 4")
        if self.base_panels < 64:
            raise ValueError("base_panels must be >= 64")
        if self.max_doublings < 1:
            raise ValueError("max_doublings must be >= 1 (convergence needs one comparison)")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class KernelParams:
    n: int
    alpha_n: float
    K_n: float
    mu_n: float

    def __post_init__(self):
        if not (self.alpha_n > 0 and self.K_n > 0 and self.mu_n > 0):
            raise ValueError(f"kernel parameters must be positive: {self}")


def _order_for(n: int) -> float:
    nu = (n - 2) / 2
    if nu not in SUPPORTED_ORDERS:
        raise ValueError(f"dimension n={n} needs unsupported Bessel order {nu}")
    return nu


def _check_order(order: float) -> float:
    order = float(order)
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported Bessel order {order}; supported: {SUPPORTED_ORDERS}")
    return order


def bessel_j(order, z):
    """First-kind Bessel function for orders -1/2, 0, 1/2, 1, 3/2 and ``z >= 0``."""
    order = _check_order(order)
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("bessel_j requires z >= 0")
    if order == 0.0:
        out = special.j0(z)
    elif order == 1.0:
        out = special.j1(z)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            pref = np.sqrt(2.0 / (np.pi * z))
            if order == 0.5:
                out = np.where(z == 0, 0.0, pref * np.sin(z))
            elif order == 1.5:
                out = np.where(z == 0, 0.0, pref * (np.sin(z) / z - np.cos(z)))
            else:
                if np.any(z == 0):
                    raise ValueError("J_{-1/2} is singular at z = 0")
                out = pref * np.cos(z)
    return out[()] if out.ndim == 0 else out


def bessel_lambda(order, z):
    """``z**(-order) * J_order(z)`` with its removable singularity filled in."""
    order = _check_order(order)
    z = np.abs(np.asarray(z, dtype=float))
    if order == -0.5:
        return _SQRT_2_OVER_PI * np.cos(z)
    if order == 0.0:
        return special.j0(z)
    if order == 0.5:
        safe = np.where(z == 0, 1.0, z)
        return _SQRT_2_OVER_PI * np.where(z == 0, 1.0, np.sin(safe) / safe)
    if order == 1.0:
        safe = np.where(z == 0, 1.0, z)
        return np.where(z == 0, 0.5, special.j1(safe) / safe)
    # order 3/2: (sin z - z cos z) / z**3 cancels badly for small z; use the series there
    small = z < 0.5
    zs = np.where(small, z, 0.0)
    z2 = zs * zs
    series = 1 / 3 - z2 / 30 + z2**2 / 840 - z2**3 / 45360 + z2**4 / 3991680 - z2**5 / 518918400
    zl = np.where(small, 1.0, z)
    direct = (np.sin(zl) - zl * np.cos(zl)) / zl**3
    return _SQRT_2_OVER_PI * np.where(small, series, direct)


@functools.lru_cache(maxsize=64)
def _gauss_panels(a: float, b: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def _profile_fixed(n: int, eta: np.ndarray, panels: int, quad: QuadratureSpec) -> np.ndarray:
    nu = _order_for(n)
    s, w = _gauss_panels(0.0, quad.s_max, panels, quad.order)
    base = w * np.exp(-s**4) * s ** (n - 1)
    return bessel_lambda(nu, eta[:, None] * s[None, :]) @ base


def _profile_chunk(n: int, eta: np.ndarray, quad: QuadratureSpec) -> np.ndarray:
    panels = quad.base_panels + int(math.ceil(quad.eta_density * float(np.max(eta, initial=0.0))))
    coarse = _profile_fixed(n, eta, panels, quad)
    for _ in range(quad.max_doublings):
        panels *= 2
        fine = _profile_fixed(n, eta, panels, quad)
        err = float(np.max(np.abs(fine - coarse)))
        if err <= quad.tol:
            return fine
        coarse = fine
    raise QuadratureError(
        f"f_{n} quadrature did not settle to {quad.tol:g} (last change {err:.3g}, "
        f"eta up to {np.max(eta):.3g}, {panels} panels)"
    )


def profile_f(n: int, eta, quad: QuadratureSpec = DEFAULT_QUAD):
    """Radial profile ``f_n(eta)``; even in ``eta``, vectorized.

    Raises :class:`QuadratureError` when panel doubling fails to stabilize.
    """
    eta_arr = np.abs(np.asarray(eta, dtype=float))
    flat = eta_arr.ravel()
    out = np.empty_like(flat)
    order = np.argsort(flat)
    chunk = 512
    for start in range(0, flat.size, chunk):
        idx = order[start:start + chunk]
        out[idx] = _profile_chunk(n, flat[idx], quad)
    out = out.reshape(eta_arr.shape)
    return out[()] if out.ndim == 0 else out


def sphere_area(n: int) -> float:
    """Measure of the unit (n-1)-sphere, any n >= 1."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


# -- normalization and envelope -----------------------------------------------

ETA_CUTOFF = 40.0


@functools.lru_cache(maxsize=None)
def normalization_alpha(n: int) -> float:
    """``alpha_n`` such that ``G(t, .)`` integrates to one.

    Calibrated by quadrature of ``omega_{n-1} int f_n(eta) eta^(n-1) d eta``.
    """
    total = 0.0
    for panels in (80, 160):
        eta, w = _gauss_panels(0.0, ETA_CUTOFF, panels, 16)
        prev, total = total, float(np.sum(w * profile_f(n, eta) * eta ** (n - 1)))
    if abs(total - prev) > 1e-12 * abs(total):
        raise QuadratureError(f"normalization integral for n={n} not converged")
    return 1.0 / (sphere_area(n) * total)


def _peak_indices(values: np.ndarray) -> np.ndarray:
    """Local maxima on a closed sample window; endpoints count against their one neighbour."""
    padded = np.concatenate(([-np.inf], values, [-np.inf]))
    is_peak = (padded[1:-1] > padded[:-2]) & (padded[1:-1] >= padded[2:])
    return np.nonzero(is_peak)[0]


def envelope_fit(n: int, spacing: float = 1e-2, window=(0.5, 8.0), cover=(0.0, 10.0),
                 margin: float = 1e-3) -> tuple:
    """Fit ``|f_n(eta)| <= K exp(-mu eta^(4/3))``.

    ``log|f_n|`` at the local maxima of ``|f_n|`` inside ``window`` is fitted
    by least squares against ``eta^(4/3)``; ``K`` is then raised until the
    envelope covers every sample of ``cover`` at the given spacing, plus a
    relative ``margin`` for points between samples.
    """
    eta = np.arange(window[0], window[1] + 0.5 * spacing, spacing)
    mag = np.abs(profile_f(n, eta))
    peaks = _peak_indices(mag)
    if peaks.size < 2 or np.any(mag[peaks] < 1e-290):
        raise ValueError(f"envelope fit for n={n} is degenerate ({peaks.size} usable peaks)")
    slope, intercept = np.polyfit(eta[peaks] ** (4 / 3), np.log(mag[peaks]), 1)
    mu = -slope
    if not mu > 0:
        raise ValueError(f"envelope fit for n={n} gave non-positive rate {mu}")
    grid = np.arange(cover[0], cover[1] + 0.5 * spacing, spacing)
    needed = np.max(np.abs(profile_f(n, grid)) * np.exp(mu * grid ** (4 / 3)))
    K = max(math.exp(intercept), float(needed)) * (1.0 + margin)
    return K, float(mu)


@functools.lru_cache(maxsize=None)
def kernel_params(n: int) -> KernelParams:
    K, mu = envelope_fit(n)
    return KernelParams(n=n, alpha_n=normalization_alpha(n), K_n=K, mu_n=mu)


def envelope(params: KernelParams, eta):
    eta = np.asarray(eta, dtype=float)
    return params.K_n * np.exp(-params.mu_n * np.abs(eta) ** (4 / 3))


# -- kernel -------------------------------------------------------------------

def kernel_radial(n: int, t: float, r, params: KernelParams | None = None,
                  quad: QuadratureSpec = DEFAULT_QUAD):
    if not t > 0:
        raise ValueError(f"kernel time must be positive, got {t}")
    alpha = params.alpha_n if params is not None else normalization_alpha(n)
    scale = t**0.25
    return alpha * t ** (-n / 4) * profile_f(n, np.asarray(r, dtype=float) / scale, quad)


def kernel_value(n: int, t: float, x, params: KernelParams | None = None,
                 quad: QuadratureSpec = DEFAULT_QUAD):
    """``G(t, x)`` for points ``x`` with trailing axis of length ``n``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"points must have trailing dimension {n}")
    return kernel_radial(n, t, np.linalg.norm(x, axis=-1), params, quad)


def recurrence_residual(n: int, eta, step: float = 1e-4, quad: QuadratureSpec = DEFAULT_QUAD):
    """``f_n'(eta) + eta f_{n+2}(eta)`` with ``f_n'`` by central differences."""
    eta = np.asarray(eta, dtype=float)
    deriv = (profile_f(n, eta + step, quad) - profile_f(n, eta - step, quad)) / (2 * step)
    return deriv + eta * profile_f(n + 2, eta, quad)


@functools.lru_cache(maxsize=32)
def _radial_samples(n: int, t: float, width: float):
    # panels of fixed physical width, so nodes do not co-scale with t^(1/4)
    r_max = ETA_CUTOFF * t**0.25
    r, w = _gauss_panels(0.0, r_max, max(16, math.ceil(r_max / width)), 16)
    return r, w, np.abs(kernel_radial(n, t, r))


def kernel_lp_norm(n: int, p: float, t: float, width: float = 0.05) -> tuple:
    """``(||G(t)||_p, predicted exponent -(n/4)(1-1/p))`` by radial quadrature."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    r, w, g = _radial_samples(n, float(t), width)
    norm_p = sphere_area(n) * float(np.sum(w * g**p * r ** (n - 1)))
    return norm_p ** (1.0 / p), -(n / 4) * (1 - 1 / p)


def _periodic_radius(grid) -> np.ndarray:
    dist = []
    for x in grid.coords():
        dist.append(np.minimum(x, grid.L - x))
    return np.sqrt(sum(d**2 for d in dist))


def kernel_on_grid(grid, kappa_t: float, params: KernelParams | None = None) -> np.ndarray:
    """Sample ``G(kappa_t, .)`` at minimum-image distances from the origin."""
    params = params or kernel_params(grid.n)
    scale = kappa_t**0.25
    edge = envelope(params, (grid.L / 2) / scale) * params.alpha_n * kappa_t ** (-grid.n / 4)
    if edge > 1e-14:
        raise KernelSupportError(
            f"kernel at kappa*t={kappa_t} is not negligible at distance L/2 "
            f"(envelope {edge:.3g} > 1e-14); enlarge the box"
        )
    r = _periodic_radius(grid)
    r_unique, inverse_idx = np.unique(r, return_inverse=True)
    g = kernel_radial(grid.n, kappa_t, r_unique, params)
    return g[inverse_idx].reshape(grid.shape)


def kernel_convolve(grid, values: np.ndarray, kappa_t: float,
                    params: KernelParams | None = None) -> np.ndarray:
    """Periodic convolution ``G(kappa_t, .) * values`` on the grid."""
    if not kappa_t > 0:
        raise ValueError(f"kappa_t must be positive, got {kappa_t}")
    g = kernel_on_grid(grid, kappa_t, params)
    conv = spectral.forward(grid, g) * spectral.forward(grid, values)
    return grid.cell * spectral.inverse(grid, conv)
