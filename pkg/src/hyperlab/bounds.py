"""Closed-form bound oracles and the asymptotic classification of mixing bounds.

Every function here is a pure function of its arguments.  The hidden
``<~`` constants of the estimates are carried explicitly in
``BoundParams.c_fit``:

* ``"c"``  perturbation constant, shared by the ``||eta||`` bound and the onset time;
* ``"c_grad"``  prefactor of the gradient bound;
* ``"c1"``, ``"c2"``  prefactors of the H^-1 and filamentation-length bounds;
* ``"A"``  prefactor of the energy upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .diagnostics import sphere_measure


class HypothesisError(ValueError):
    """A parameter lies outside the range where an estimate is proved."""


ZERO, CONST, INFINITY = "zero", "const", "infinity"

# exponent comparisons against exact rationals (1/8, 3/4, ...) use this slack
EXPONENT_TOL = 1e-12


def default_beta(n: int, c_grad_u: float) -> float:
    return 1.0 + max(n / 4 + 0.5, 0.25 + n / 8 + c_grad_u)


@dataclass(frozen=True)
class BoundParams:
    n: int
    kappa: float
    M: float
    delta: float
    alpha: float
    nu: float
    c_grad_u: float
    beta: float | None = None
    epsilon: float = 0.01
    c_fit: dict = field(default_factory=dict)
    omega: float | None = None

    def __post_init__(self):
        bad = [name for name in ("kappa", "M", "delta", "alpha", "nu")
               if not getattr(self, name) > 0]
        if self.n not in (2, 3):
            bad.append("n")
        if not self.c_grad_u >= 0:
            bad.append("c_grad_u")
        if not 0 < self.epsilon <= 0.1:
            bad.append("epsilon")
        if bad:
            raise ValueError(f"invalid BoundParams fields: {', '.join(bad)}")
        if self.omega is None:
            object.__setattr__(self, "omega", sphere_measure(self.n))
        if self.beta is None:
            object.__setattr__(self, "beta", default_beta(self.n, self.c_grad_u))
        floors = (self.n / 4 + 0.5, 0.25 + self.n / 8 + self.c_grad_u)
        if not self.beta > max(floors):
            raise ValueError(f"beta={self.beta} must exceed {max(floors)}")
        object.__setattr__(self, "c_fit", dict(self.c_fit))

    @property
    def data_level(self) -> float:
        """``M delta^(n/2) exp(-kappa delta^4)``."""
        return self.M * self.delta ** (self.n / 2) * math.exp(-self.kappa * self.delta**4)

    def constant(self, key: str) -> float:
        try:
            value = float(self.c_fit[key])
        except KeyError:
            raise ValueError(f"missing fitted constant {key!r} in c_fit") from None
        if not value > 0:
            raise ValueError(f"fitted constant {key!r} must be positive, got {value}")
        return value

    def with_constants(self, **constants) -> "BoundParams":
        merged = {**self.c_fit, **constants}
        return BoundParams(self.n, self.kappa, self.M, self.delta, self.alpha, self.nu,
                           self.c_grad_u, self.beta, self.epsilon, merged, self.omega)


def _check_t(t: float) -> float:
    t = float(t)
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return t


# -- energy lower bounds -------------------------------------------------------

def theorem1_lower_bound(p: BoundParams, t: float) -> float:
    """``(omega^(1/2) / (2 n^(1/2))) M delta^(n/2) e^(-kappa delta^4) (1+t)^(-n/8)``."""
    if not p.alpha > 0.75:
        raise HypothesisError(f"energy lower bound needs alpha > 3/4, got {p.alpha}")
    t = _check_t(t)
    return math.sqrt(p.omega) / (2 * math.sqrt(p.n)) * p.data_level * (1 + t) ** (-p.n / 8)


def lemma2_lower_bound(p: BoundParams, t: float) -> float:
    """Flow-free lower bound, twice the advected constant; valid for ``t >= 1``."""
    t = float(t)
    if not t >= 1:
        raise HypothesisError(f"flow-free lower bound holds for t >= 1, got {t}")
    return math.sqrt(p.omega / p.n) * p.data_level * (1 + t) ** (-p.n / 8)


def lemma1_upper_bound(p: BoundParams, t: float, rate: float | None = None) -> float:
    """``A (1+t)^(-rate)``; the rate defaults to the bootstrapped value ``n/8``."""
    if rate is None:
        rate = gamma_iteration(p.n, p.alpha).final_rate
    return p.constant("A") * (1 + _check_t(t)) ** (-rate)


def onset_time_t1(p: BoundParams) -> float:
    """Time after which the energy lower bound dominates the perturbation bound.

    Solves ``M delta^(n/2) e^(-kappa delta^4) = (c/2) (1+t1)^(3/8 - min(alpha/2, 5/8))``
    and clamps negative solutions to 0.
    """
    if not p.alpha > 0.75:
        raise HypothesisError(f"onset time needs alpha > 3/4, got {p.alpha}")
    c = p.constant("c")
    rate = min(p.alpha / 2, 0.625) - 0.375
    t1 = (c / (2 * p.data_level)) ** (1 / rate) - 1
    return max(t1, 0.0)


def lemma3_exponent(n: int, alpha: float) -> float:
    if not alpha > 1 - n / 8:
        raise HypothesisError(f"perturbation bound needs alpha > {1 - n / 8}, got {alpha}")
    if alpha < 1.25:
        return 0.375 - n / 8 - alpha / 2
    return -0.25 - n / 8


def lemma3_perturbation_bound(p: BoundParams, t: float) -> float:
    """``c (1+t)^e`` with the two-branch perturbation exponent ``e``."""
    exponent = lemma3_exponent(p.n, p.alpha)
    return p.constant("c") * (1 + _check_t(t)) ** exponent


# -- flow-dependent factors ----------------------------------------------------

def f_nabla_u(c_grad_u: float, nu: float, t: float) -> float:
    """Stretching factor multiplying the mixing-norm lower bounds; equals 1 at t = 0."""
    if not nu > 0:
        raise HypothesisError(f"nu must be positive, got {nu}")
    if not c_grad_u >= 0:
        raise ValueError(f"c_grad_u must be >= 0, got {c_grad_u}")
    s = 1 + _check_t(t)
    c = c_grad_u
    if nu == 1:
        return 1.0
    if nu < 1:
        return math.exp(-c / (1 - nu) * (s ** (1 - nu) - 1))
    return s**c * math.exp(-c / (nu - 1) * (1 - s ** (-(nu - 1))))


def gronwall_factor(c_grad_u: float, nu: float, t: float) -> float:
    """Flow factor of the gradient bound (without the hyperdiffusive power)."""
    if not nu > 0:
        raise HypothesisError(f"nu must be positive, got {nu}")
    s = 1 + _check_t(t)
    c = c_grad_u
    if nu == 1:
        return 1.0
    if nu < 1:
        # past exp's range the bound is vacuous
        exponent = c / (1 - nu) * (s ** (1 - nu) - 1)
        return math.exp(exponent) if exponent < 709 else math.inf
    return s ** (-c) * math.exp(c / (nu - 1) * (1 - s ** (-(nu - 1))))


def lemma4_gradient_bound(p: BoundParams, t: float) -> float:
    """``c (1+t)^(-n/8 - 1/4)`` times the three-branch flow factor."""
    t = _check_t(t)
    return (p.constant("c_grad") * (1 + t) ** (-p.n / 8 - 0.25)
            * gronwall_factor(p.c_grad_u, p.nu, t))


def theorem2_lower_bounds(p: BoundParams, t: float) -> tuple:
    """``(c1 (1+t)^(1/4 - n/8) f, c2 (1+t)^(1/4) f)`` with ``f = f_nabla_u``."""
    c1, c2 = p.constant("c1"), p.constant("c2")
    t = _check_t(t)
    f = f_nabla_u(p.c_grad_u, p.nu, t)
    return c1 * (1 + t) ** (0.25 - p.n / 8) * f, c2 * (1 + t) ** 0.25 * f


# -- Fourier-splitting bookkeeping --------------------------------------------

def h_func(s: float, epsilon: float, t: float) -> float:
    """Upper bound for ``int_0^t (1+r)^(-s) dr`` used in the splitting argument."""
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    if not 0 < epsilon <= 0.1:
        raise ValueError(f"epsilon must lie in (0, 0.1], got {epsilon}")
    t = _check_t(t)
    if s < 1:
        return (1 + t) ** (1 - s) / (1 - s)
    if s == 1:
        return (1 + t) ** epsilon / epsilon
    return 1 / (s - 1)


class NonTerminationError(RuntimeError):
    pass


class GammaIteration(NamedTuple):
    sequence: tuple
    final_rate: float
    steps: int


def gamma_iteration(n: int, alpha: float, gamma0: float = 0.0, *, enforce: bool = True,
                    max_steps: int = 100_000) -> GammaIteration:
    """Bootstrap the decay rate ``gamma_(j+1) = n/8 - 3/4 + alpha + gamma_j``.

    Iteration stops at the first ``gamma_j`` with ``alpha + gamma_j >= 3/4``;
    the rate is then capped at ``n/8``.  With ``enforce=False`` the hypothesis
    check is skipped and a non-increasing sequence hits ``max_steps``.
    """
    threshold = (6 - n) / 8
    if enforce and not alpha > threshold:
        raise HypothesisError(f"alpha must exceed (6-n)/8 = {threshold}, got {alpha}")
    increment = n / 8 - 0.75 + alpha
    seq = [float(gamma0)]
    while alpha + seq[-1] < 0.75 - EXPONENT_TOL:
        if len(seq) >= max_steps:
            raise NonTerminationError(f"no termination after {max_steps} steps (increment {increment})")
        seq.append(seq[-1] + increment)
    return GammaIteration(tuple(seq), n / 8, len(seq))


# -- Table 1 classification ----------------------------------------------------

@dataclass(frozen=True)
class AsymptoticClass:
    f_inf: str
    g_inf: str


def _sign_class(exponent: float) -> str:
    if exponent > EXPONENT_TOL:
        return INFINITY
    if exponent < -EXPONENT_TOL:
        return ZERO
    return CONST


def classify_table1(n: int, nu: float, c_grad_u: float) -> AsymptoticClass:
    """Long-time limits of the H^-1 bound (f) and the filamentation bound (g).

    For nu < 1 the flow factor decays like a stretched exponential; otherwise it
    behaves like ``(1+t)^e`` with ``e = 0`` (nu = 1) or ``e = c_grad_u`` (nu > 1).
    """
    if n not in (2, 3):
        raise ValueError(f"n must be 2 or 3, got {n}")
    if not nu > 0:
        raise HypothesisError(f"nu must be positive, got {nu}")
    if nu < 1 and c_grad_u > 0:
        return AsymptoticClass(ZERO, ZERO)
    flow_exp = 0.0 if nu <= 1 else c_grad_u
    return AsymptoticClass(_sign_class(0.25 - n / 8 + flow_exp), _sign_class(0.25 + flow_exp))


# -- power-law fitting ---------------------------------------------------------

class PowerLawFit(NamedTuple):
    exponent: float
    prefactor: float
    residual: float
    count: int


HALF_DECADE = math.sqrt(10.0)


def fit_power_law(times, values, window=None) -> PowerLawFit:
    """Least-squares fit of ``log(value)`` against ``log(1+t)`` inside ``window``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise ValueError("times and values differ in shape")
    if window is not None:
        lo, hi = window
        keep = (times >= lo) & (times <= hi)
        times, values = times[keep], values[keep]
    if times.size < 8:
        raise ValueError(f"need at least 8 samples in the window, found {times.size}")
    if np.any(~(values > 0)):
        raise ValueError("values must be positive for a log-log fit")
    x = np.log1p(times)
    if np.exp(x.max() - x.min()) < HALF_DECADE * (1 - 1e-12):
        raise ValueError("fit window spans less than half a decade in 1+t")
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return PowerLawFit(float(slope), float(math.exp(intercept)),
                       float(np.sqrt(np.mean(resid**2))), int(times.size))
