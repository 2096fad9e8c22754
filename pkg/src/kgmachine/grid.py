"""Periodic grids, fields, state pairs, spectral multipliers and norms.

Everything downstream lives on a uniform periodic lattice covering
``[-half_extent, half_extent)`` in each of ``dim`` axes with ``num_points``
points per axis (a power of two, so FFTs stay fast and block centers land on
dyadic frequencies).  Integrals are plain Riemann sums with weight ``h**dim``,
which is spectrally accurate for smooth periodic integrands.

Two pairing conventions coexist on purpose:

* :func:`l2_inner` is the sesquilinear inner product (conjugate-first) used
  for norms and orthonormality checks;
* :func:`l2_pairing` and :func:`symplectic_product` are bilinear, matching
  the real Hamiltonian structure of the wave system.  Complex fields are
  allowed everywhere and are treated as complexified real pairs, so no
  conjugation appears in the symplectic form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "StatePair",
    "quintic_step",
    "bessel_power",
    "dyadic_block",
    "block_count",
    "besov_norm",
    "energy_norm",
    "l2_norm",
    "l2_inner",
    "l2_pairing",
    "symplectic_product",
    "weighted_local_norm",
    "weighted_component_norms",
    "translate",
    "fourier_interpolate",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on ``[-half_extent, half_extent)**dim``.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1, 2 or 3.  Dimensions 2 and 3 are meant for
        small cross-check grids; the long-horizon machinery runs in 1d.
    num_points : int
        Points per axis; must be a power of two.
    half_extent : float
        Half box length.  Spacing is ``2 * half_extent / num_points``.
    """

    dim: int
    num_points: int
    half_extent: float

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not _is_power_of_two(self.num_points):
            raise ValueError(
                f"num_points must be a power of two >= 2, got {self.num_points}"
            )
        if not self.half_extent > 0:
            raise ValueError("half_extent must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / self.num_points

    @property
    def quadrature_weight(self) -> float:
        """Weight of the Riemann sum, ``spacing**dim``."""
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.num_points,) * self.dim

    @cached_property
    def axis_coords(self) -> np.ndarray:
        """Coordinates along one axis, ``[-half_extent, half_extent)``."""
        return -self.half_extent + self.spacing * np.arange(self.num_points)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Meshgrid coordinate arrays, one per axis (ij indexing)."""
        axes = (self.axis_coords,) * self.dim
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.num_points, d=self.spacing)

    @cached_property
    def axis_wavenumbers_odd(self) -> np.ndarray:
        """Axis wavenumbers with the unpaired Nyquist mode zeroed.

        First-derivative multipliers must use this array: the Nyquist mode
        has no conjugate partner, so keeping ``i k`` there would make the
        derivative of a real field complex.  Zeroing it is the convention
        under which the spectral derivative matrix is real, and every
        first-derivative in the package uses it so that symbol-space and
        dense-matrix computations agree on arbitrary data.
        """
        k = self.axis_wavenumbers.copy()
        k[self.num_points // 2] = 0.0
        return k

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        axes = (self.axis_wavenumbers,) * self.dim
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for k in self.wavenumbers:
            out = out + k**2
        return out

    @property
    def nyquist(self) -> float:
        """Largest resolved axis wavenumber, ``pi / spacing``."""
        return np.pi / self.spacing

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values)

    def ifft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(values)

    def integrate(self, values: np.ndarray) -> complex:
        return complex(values.sum() * self.quadrature_weight)


@dataclass(frozen=True)
class Field:
    """Scalar field on a :class:`Grid`, tagged physical or spectral.

    The tag records which representation ``values`` holds; conversion is a
    plain (inverse) FFT and round-trips to machine precision.
    """

    grid: Grid
    values: np.ndarray
    space: str = "physical"

    def __post_init__(self) -> None:
        if self.space not in ("physical", "spectral"):
            raise ValueError(f"space must be 'physical' or 'spectral', got {self.space!r}")
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )

    def to_physical(self) -> "Field":
        if self.space == "physical":
            return self
        return Field(self.grid, self.grid.ifft(self.values), "physical")

    def to_spectral(self) -> "Field":
        if self.space == "spectral":
            return self
        return Field(self.grid, self.grid.fft(self.values), "spectral")

    def _binary(self, other, op) -> "Field":
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            if other.space != self.space:
                other = other.to_physical() if self.space == "physical" else other.to_spectral()
            return Field(self.grid, op(self.values, other.values), self.space)
        return Field(self.grid, op(self.values, other), self.space)

    def __add__(self, other) -> "Field":
        return self._binary(other, np.add)

    def __sub__(self, other) -> "Field":
        return self._binary(other, np.subtract)

    def __mul__(self, scalar) -> "Field":
        return Field(self.grid, self.values * scalar, self.space)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values, self.space)


@dataclass(frozen=True)
class StatePair:
    """State of the first-order system: (displacement, velocity) fields."""

    first: Field
    second: Field

    def __post_init__(self) -> None:
        if self.first.grid != self.second.grid:
            raise ValueError("state components live on different grids")

    @property
    def grid(self) -> Grid:
        return self.first.grid

    def to_physical(self) -> "StatePair":
        return StatePair(self.first.to_physical(), self.second.to_physical())

    def __add__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.first + other.first, self.second + other.second)

    def __sub__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.first - other.first, self.second - other.second)

    def __mul__(self, scalar) -> "StatePair":
        return StatePair(self.first * scalar, self.second * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "StatePair":
        return StatePair(-self.first, -self.second)


def quintic_step(q: np.ndarray) -> np.ndarray:
    """Quintic smoothstep: 0 for q <= 0, 1 for q >= 1, C^2 monotone between.

    Shared mollifier: the dyadic block cutoffs and the channel cutoffs are
    both built from this one profile so their smoothness class matches.
    """
    q = np.clip(q, 0.0, 1.0)
    return q * q * q * (q * (6.0 * q - 15.0) + 10.0)


def _low_cutoff(radius: np.ndarray) -> np.ndarray:
    """Smooth radial cutoff: 1 for |xi| <= 1, 0 for |xi| >= 2."""
    return 1.0 - quintic_step(radius - 1.0)


def block_count(grid: Grid) -> int:
    """Number of dyadic blocks needed to reconstruct any field exactly.

    Blocks ``0 .. block_count-1`` telescope to a cutoff that equals one on
    the whole resolved band (radius ``sqrt(dim) * nyquist``), so their sum
    reproduces the input to rounding error.
    """
    k_max = math.sqrt(grid.dim) * grid.nyquist
    j = 1
    while 2.0**j < k_max:
        j += 1
    return j + 1


def _block_symbol(grid: Grid, j: int) -> np.ndarray:
    radius = np.sqrt(grid.k_squared)
    if j == 0:
        return _low_cutoff(radius)
    return _low_cutoff(radius / 2.0**j) - _low_cutoff(radius / 2.0 ** (j - 1))


def dyadic_block(field: Field, j: int) -> Field:
    """Littlewood-Paley block: smooth restriction to the j-th dyadic shell.

    Block 0 collects everything at radius <= 2; block j >= 1 is supported in
    the shell ``2**(j-1) <= |xi| <= 2**(j+1)``.  Requesting a block whose
    shell lies entirely beyond the resolved band raises ``ValueError``.
    """
    if j < 0:
        raise ValueError("block index must be nonnegative")
    n_blocks = block_count(field.grid)
    if j >= n_blocks:
        raise ValueError(
            f"block {j} lies beyond the resolved band (grid supports blocks 0..{n_blocks - 1})"
        )
    spec = field.to_spectral()
    out = Field(field.grid, spec.values * _block_symbol(field.grid, j), "spectral")
    return out.to_physical() if field.space == "physical" else out


def _apply_symbol(field: Field, symbol: np.ndarray) -> Field:
    spec = field.to_spectral()
    out = Field(field.grid, spec.values * symbol, "spectral")
    return out.to_physical() if field.space == "physical" else out


def bessel_power(field: Field, order: float) -> Field:
    """Apply the multiplier ``(1 + |k|^2)**(order/2)`` (Bessel potential).

    ``order=1`` is the square root of the mass-shifted Laplacian driving the
    free evolution; negative orders smooth.  Powers compose additively.
    """
    symbol = (1.0 + field.grid.k_squared) ** (order / 2.0)
    return _apply_symbol(field, symbol)


def l2_norm(field: Field) -> float:
    f = field.to_physical()
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * field.grid.quadrature_weight))


def l2_inner(a: Field, b: Field) -> complex:
    """Sesquilinear inner product (conjugation on the first argument)."""
    fa, fb = a.to_physical(), b.to_physical()
    return complex(np.sum(np.conj(fa.values) * fb.values) * a.grid.quadrature_weight)


def l2_pairing(a: StatePair, b: StatePair) -> complex:
    """Bilinear duality pairing ``int a1 b1 + a2 b2`` (no conjugation)."""
    pa, pb = a.to_physical(), b.to_physical()
    total = np.sum(pa.first.values * pb.first.values)
    total = total + np.sum(pa.second.values * pb.second.values)
    return complex(total * a.grid.quadrature_weight)


def symplectic_product(a: StatePair, b: StatePair) -> complex:
    """Symplectic form ``omega(a, b) = int a2 b1 - a1 b2`` (bilinear)."""
    pa, pb = a.to_physical(), b.to_physical()
    total = np.sum(pa.second.values * pb.first.values)
    total = total - np.sum(pa.first.values * pb.second.values)
    return complex(total * a.grid.quadrature_weight)


def energy_norm(state: StatePair) -> float:
    """Energy-space norm: ``sqrt(||<D> u1||^2 + ||u2||^2)``."""
    du1 = bessel_power(state.first, 1.0)
    return float(np.sqrt(l2_norm(du1) ** 2 + l2_norm(state.second) ** 2))


def besov_norm(field: Field, smoothness: float, p: float, q: float) -> float:
    """Besov norm from the dyadic blocks: ``l^q_j of 2**(j s) ||block_j||_p``.

    ``p`` and ``q`` may be ``math.inf``.  The block family telescopes to an
    exact partition of the resolved band, so ``s=0, p=q=2`` is equivalent to
    the plain L2 norm up to the overlap of adjacent shells.
    """
    grid = field.grid
    phys = field.to_physical()
    spec = phys.to_spectral()
    weights = []
    for j in range(block_count(grid)):
        block = Field(grid, spec.values * _block_symbol(grid, j), "spectral").to_physical()
        if math.isinf(p):
            block_norm = float(np.max(np.abs(block.values)))
        else:
            block_norm = float(
                (np.sum(np.abs(block.values) ** p) * grid.quadrature_weight) ** (1.0 / p)
            )
        weights.append(2.0 ** (j * smoothness) * block_norm)
    arr = np.asarray(weights)
    if math.isinf(q):
        return float(np.max(arr))
    return float(np.sum(arr**q) ** (1.0 / q))


def _bracket_weight(grid: Grid, center: Sequence[float], power: float) -> np.ndarray:
    """Sampled ``<x - center>**(-power)`` on the grid."""
    r2 = np.zeros(grid.shape)
    for axis, x in enumerate(grid.coords):
        r2 = r2 + (x - center[axis]) ** 2
    return (1.0 + r2) ** (-power / 2.0)


def weighted_component_norms(
    state: StatePair,
    centers: Sequence[Sequence[float]],
    weight_power: float,
    smoothing_order: float,
) -> list[tuple[float, float]]:
    """Per-center localized norms of the smoothed state components.

    For each center y the pair is
    ``(||<x-y>^-sigma D^{-nu/2} D u1||_L2, ||<x-y>^-sigma D^{-nu/2} u2||_L2)``
    with sigma = ``weight_power`` and nu = ``smoothing_order``; the weight is
    applied after the smoothing multiplier, matching the local-energy
    functional the long-horizon diagnostics integrate in time.
    """
    grid = state.grid
    smooth_first = bessel_power(state.first, 1.0 - smoothing_order / 2.0).to_physical()
    smooth_second = bessel_power(state.second, -smoothing_order / 2.0).to_physical()
    out = []
    for center in centers:
        w = _bracket_weight(grid, center, weight_power)
        n1 = float(
            np.sqrt(np.sum((w * np.abs(smooth_first.values)) ** 2) * grid.quadrature_weight)
        )
        n2 = float(
            np.sqrt(np.sum((w * np.abs(smooth_second.values)) ** 2) * grid.quadrature_weight)
        )
        out.append((n1, n2))
    return out


def weighted_local_norm(
    state: StatePair,
    centers: Sequence[Sequence[float]],
    weight_power: float = 15.0,
    smoothing_order: float = 0.1,
) -> float:
    """Sum over centers of the localized smoothed-component norms."""
    pairs = weighted_component_norms(state, centers, weight_power, smoothing_order)
    return float(sum(n1 + n2 for n1, n2 in pairs))


def translate(field: Field, shift: Sequence[float]) -> Field:
    """Periodic translation ``f(. + shift)`` via a Fourier phase."""
    grid = field.grid
    phase = np.zeros(grid.shape)
    for axis, k in enumerate(grid.wavenumbers):
        phase = phase + k * shift[axis]
    spec = field.to_spectral()
    out = Field(grid, spec.values * np.exp(1j * phase), "spectral")
    return out.to_physical() if field.space == "physical" else out


def fourier_interpolate(field: Field, points: np.ndarray) -> np.ndarray:
    """Band-limited evaluation of a 1d field at arbitrary points.

    Direct evaluation of the trigonometric interpolant; O(N * P) but vector
    sized, which is fine at desk scale.  Only needed when an eigenfunction
    has no closed form and must be resampled at boosted coordinates.
    """
    if field.grid.dim != 1:
        raise ValueError("fourier_interpolate supports 1d grids only")
    grid = field.grid
    spec = field.to_spectral().values / grid.num_points
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    # DFT phases are relative to the grid origin at -half_extent, so the
    # interpolant is f(x) = sum_k c_k exp(i k (x + half_extent)).
    rel = pts + grid.half_extent
    k = grid.axis_wavenumbers
    out = np.zeros(pts.shape, dtype=complex)
    chunk = 4096
    for start in range(0, pts.size, chunk):
        sl = slice(start, min(start + chunk, pts.size))
        phases = np.exp(1j * np.outer(rel[sl], k))
        out[sl] = phases @ spec
    return out.reshape(np.shape(points))
