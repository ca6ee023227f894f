"""Periodic grids, Fourier transforms and spectral multipliers.

Fields are plain numpy arrays paired with a :class:`Grid`.  Physical fields
are real ``(N,)*n`` arrays; spectral fields are complex arrays of the same
shape in numpy's FFT ordering (zero mode at index 0).

Normalization: :func:`forward` is the unnormalized DFT sum and
:func:`inverse` divides by ``N**n``.  Continuum-normalized quantities are
obtained with two weights stored on the grid:

* ``grid.cell`` = ``(L/N)**n`` turns a DFT coefficient into an
  approximation of the ordinary transform ``int f(x) exp(-i xi.x) dx``;
* ``grid.plancherel`` = ``L**n / N**(2n)`` makes ``plancherel * sum |c|**2``
  equal the physical L2 norm squared.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Grid:
    n: int
    N: int
    L: float
    k_axis: np.ndarray = field(repr=False, compare=False)
    k: tuple = field(repr=False, compare=False)
    k2: np.ndarray = field(repr=False, compare=False)
    k_deriv: tuple = field(repr=False, compare=False)
    int_modes: tuple = field(repr=False, compare=False)

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def axes(self) -> tuple:
        return tuple(range(self.n))

    @property
    def cell(self) -> float:
        return self.dx**self.n

    @property
    def plancherel(self) -> float:
        return self.L**self.n / float(self.N) ** (2 * self.n)

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / self.L

    @property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    def coords(self) -> list:
        x = np.arange(self.N) * self.dx
        return np.meshgrid(*([x] * self.n), indexing="ij")

    def same_as(self, other: "Grid") -> bool:
        return (self.n, self.N, self.L) == (other.n, other.N, other.L)


def _is_power_of_two(N: int) -> bool:
    return N > 0 and (N & (N - 1)) == 0


def make_grid(n: int, N: int, L: float) -> Grid:
    """Build an ``n``-dimensional periodic grid with ``N`` points per axis on ``[0, L)``."""
    if n not in (2, 3):
        raise ValueError(f"dimension n must be 2 or 3, got {n}")
    if int(N) != N or N < 8 or not _is_power_of_two(int(N)):
        raise ValueError(f"N must be a power of two >= 8, got {N}")
    if not L > 0:
        raise ValueError(f"box length L must be positive, got {L}")
    N = int(N)
    L = float(L)
    ints = np.fft.fftfreq(N, d=1.0 / N)
    k_axis = 2.0 * np.pi / L * ints
    k = tuple(np.meshgrid(*([k_axis] * n), indexing="ij"))
    int_modes = tuple(np.meshgrid(*([ints] * n), indexing="ij"))
    k2 = sum(kj**2 for kj in k)
    # the Nyquist mode has no Hermitian partner; odd derivatives drop it
    k_deriv = tuple(np.where(m == -(N // 2), 0.0, kj) for kj, m in zip(k, int_modes))
    return Grid(n=n, N=N, L=L, k_axis=k_axis, k=k, k2=k2, k_deriv=k_deriv, int_modes=int_modes)


def _check_shape(grid: Grid, arr: np.ndarray) -> None:
    if arr.shape != grid.shape:
        raise ValueError(f"field shape {arr.shape} does not match grid {grid.shape}")


def forward(grid: Grid, values: np.ndarray) -> np.ndarray:
    _check_shape(grid, values)
    return np.fft.fftn(values)


def inverse(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    _check_shape(grid, coeffs)
    return np.fft.ifftn(coeffs).real


def gradient(grid: Grid, coeffs: np.ndarray) -> list:
    """Spectral gradient: component ``j`` is ``i*xi_j*coeffs``."""
    _check_shape(grid, coeffs)
    return [1j * kj * coeffs for kj in grid.k_deriv]


def divergence(grid: Grid, components: list) -> np.ndarray:
    """Physical-space divergence of a vector field given in physical space."""
    div_hat = sum(1j * kj * forward(grid, c) for kj, c in zip(grid.k_deriv, components))
    return inverse(grid, div_hat)


def apply_multiplier(grid: Grid, coeffs: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    _check_shape(grid, coeffs)
    symbol = np.asarray(symbol)
    if np.iscomplexobj(symbol):
        raise ValueError("multiplier symbol must be real")
    if not np.all(np.isfinite(symbol)):
        raise ValueError("multiplier symbol contains NaN or Inf")
    return coeffs * symbol


def dealias_mask(grid: Grid) -> np.ndarray:
    keep = np.ones(grid.shape, dtype=bool)
    for m in grid.int_modes:
        keep &= np.abs(m) <= grid.N // 3
    return keep


def dealias_two_thirds(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Zero every mode with some ``|k_j| > N/3``."""
    _check_shape(grid, coeffs)
    return np.where(dealias_mask(grid), coeffs, 0.0)


def hermitian_defect(grid: Grid, coeffs: np.ndarray) -> float:
    """Max of ``|c(-k) - conj(c(k))|`` relative to max ``|c|``."""
    flipped = coeffs
    for ax in range(grid.n):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    scale = np.max(np.abs(coeffs))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(flipped - np.conj(coeffs))) / scale)


def spectral_l2_sq(grid: Grid, coeffs: np.ndarray) -> float:
    return float(grid.plancherel * np.sum(np.abs(coeffs) ** 2))


def physical_l2_sq(grid: Grid, values: np.ndarray) -> float:
    return float(grid.cell * np.sum(values**2))


# -- snapshot I/O -------------------------------------------------------------

def write_field(path, grid: Grid, values: np.ndarray, time: float = 0.0, name: str = "") -> Path:
    """Write ``values`` as raw little-endian float64 plus a JSON sidecar.

    ``path`` is the binary file; the sidecar is ``path`` with ``.json`` appended.
    """
    _check_shape(grid, values)
    path = Path(path)
    np.ascontiguousarray(values, dtype="<f8").tofile(path)
    meta = {"n": grid.n, "N": grid.N, "L": grid.L, "time": float(time), "name": name}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=1))
    return path


def read_field(path) -> tuple:
    """Return ``(grid, values, meta)`` for a snapshot written by :func:`write_field`."""
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    grid = make_grid(meta["n"], meta["N"], meta["L"])
    values = np.fromfile(path, dtype="<f8")
    if values.size != grid.N**grid.n:
        raise ValueError(f"{path}: expected {grid.N**grid.n} values, found {values.size}")
    return grid, values.reshape(grid.shape), meta
