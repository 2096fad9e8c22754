"""Traveling bound-state pairs, their duals, and biorthogonal projections.

Each negative eigenvalue ``-rate**2`` of the scalar operator of a well yields
a growing/decaying pair of traveling states of the first-order system; each
zero eigenvalue yields a kernel state and its secular partner.  The recipes
(all in the co-moving picture at velocity ``beta``, center ``y``, with
``xi = gamma (x - y)`` the boosted coordinate and ``phi`` the scalar state):

* growing:  ``exp(-rate*beta*xi) * (phi, -gamma beta phi' + gamma rate phi)``
* decaying: ``exp(+rate*beta*xi) * (phi, -gamma beta phi' - gamma rate phi)``
* kernel:   ``(phi0, -gamma beta phi0')``
* secular:  ``(-beta xi phi0, gamma phi0 + gamma beta^2 xi phi0')``

(arguments of ``phi`` are ``xi`` throughout; the exponential prefactor is a
function of the lab coordinate, ``-gamma rate beta (x - y) = -rate beta xi``).
The growing/decaying pairs are eigenstates of the co-moving generator with
eigenvalues ``+-rate/gamma``; the kernel state is annihilated and the secular
state is mapped to ``(1/gamma)`` times the kernel state, so only its second
power vanishes.

Duals are the symplectic partners rotated by ``J = [[0, 1], [-1, 0]]``: the
functional detecting a mode is built from the mode it pairs with under the
symplectic form (growing with decaying, kernel with secular).  Projections
never assume any normalization: the full Gram matrix of duals against modes
is inverted, which makes the family of sub-projections exactly idempotent
and mutually orthogonal at the discrete level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .grid import Field, Grid, StatePair, energy_norm, fourier_interpolate
from .potentials import (
    BoundStateForm,
    PotentialSpec,
    closed_form_bound_states,
    lorentz_gamma,
)

__all__ = [
    "ScalarState",
    "ClosedFormScalar",
    "GridScalar",
    "TravelingMode",
    "ModeBundle",
    "build_modes",
    "apply_comoving_generator",
    "measured_secular_constant",
    "ProjectionSet",
    "build_projections",
]

MODE_KINDS = ("growing", "decaying", "kernel", "secular")


class ScalarState:
    """Scalar bound state samplable with an exponential prefactor folded in.

    ``scaled(x, extra)`` returns ``exp(extra(x)) * phi(x)`` computed without
    overflow even where ``exp(extra)`` alone would not be representable;
    ``scaled_derivative`` does the same for ``phi'``.
    """

    eigenvalue: float
    rate: float

    def scaled(self, x: np.ndarray, extra: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def scaled_derivative(self, x: np.ndarray, extra: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ClosedFormScalar(ScalarState):
    """Closed-form scalar state: exact combined-exponent evaluation."""

    def __init__(self, form: BoundStateForm):
        self.form = form
        self.eigenvalue = form.eigenvalue
        self.rate = form.rate

    def scaled(self, x, extra):
        x = np.asarray(x, dtype=float)
        return np.exp(self.form.log_smooth(x) + extra) * self.form.factor(x)

    def scaled_derivative(self, x, extra):
        x = np.asarray(x, dtype=float)
        return np.exp(self.form.log_smooth(x) + extra) * self.form.dfactor(x)


class GridScalar(ScalarState):
    """Grid eigenfunction resampled band-limitedly, with tail clamping.

    The product ``exp(extra) * phi`` is evaluated only where the analytic
    envelope ``peak * exp(-decay_rate |x|) * exp(extra)`` is within a factor
    ``exp(-40)`` of its own maximum and where the resampled values have not
    sunk into eigensolver noise; elsewhere it is clamped to zero.  Points
    beyond the box (where a periodic interpolant would wrap around) are
    clamped unconditionally, and if the envelope says the function is
    genuinely needed there the constructor of the traveling mode has chosen
    too small a box, which raises ``MODE_BOX``.

    Accuracy is limited by the eigensolver noise floor (about 1e-16 of the
    peak) amplified by the prefactor: use closed forms where they exist.
    """

    def __init__(self, function: Field, eigenvalue: float, decay_rate: float):
        if function.grid.dim != 1:
            raise ValueError("GridScalar supports 1d grids only")
        self.function = function
        self.eigenvalue = eigenvalue
        self.rate = math.sqrt(max(-eigenvalue, 0.0))
        self.decay_rate = decay_rate
        self.peak = float(np.max(np.abs(function.values)))
        spec = function.to_spectral()
        k = function.grid.axis_wavenumbers
        self.dfunction = Field(function.grid, spec.values * (1j * k), "spectral").to_physical()

    def _clamped(self, base: Field, x, extra):
        x = np.asarray(x, dtype=float)
        extra = np.broadcast_to(np.asarray(extra, dtype=float), x.shape)
        grid = base.grid
        inside = np.abs(x) <= grid.half_extent - 2.0 * grid.spacing
        log_peak = math.log(self.peak + 1e-300)
        score = extra + log_peak - self.decay_rate * np.abs(x)
        reference = float(np.max(score))
        outside_needed = (~inside) & (score > reference - 30.0)
        if np.any(outside_needed):
            raise ValueError(
                "MODE_BOX: a traveling mode needs the scalar state beyond the box "
                f"(half_extent {grid.half_extent}); enlarge the box or lower the speed"
            )
        vals = np.zeros(x.shape, dtype=complex)
        vals[inside] = fourier_interpolate(base, x[inside])
        keep = inside & (score > reference - 40.0)
        noise = (np.abs(vals) < 1e-12 * self.peak) & (extra > 0.0)
        keep &= ~noise
        out = np.zeros(x.shape, dtype=complex)
        safe_extra = np.where(keep, extra, 0.0)
        out[keep] = (np.exp(safe_extra) * vals)[keep]
        return out

    def scaled(self, x, extra):
        return self._clamped(self.function, x, extra)

    def scaled_derivative(self, x, extra):
        return self._clamped(self.dfunction, x, extra)


@dataclass(frozen=True)
class TravelingMode:
    """One traveling discrete mode with the functional that detects it."""

    kind: str  # 'growing' | 'decaying' | 'kernel' | 'secular'
    rate: float  # scalar rate nu (0 for kernel/secular)
    eigenvalue: float  # co-moving generator eigenvalue: +-rate/gamma or 0
    pair: StatePair
    dual: StatePair  # J applied to the symplectic partner; detects this mode


@dataclass(frozen=True)
class ModeBundle:
    """All discrete modes of one well at one (velocity, center)."""

    grid: Grid
    potential: PotentialSpec
    beta: float
    center: float
    gamma: float
    modes: tuple[TravelingMode, ...]

    def by_kind(self, kind: str) -> list[TravelingMode]:
        return [m for m in self.modes if m.kind == kind]


def _rotate(pair: StatePair) -> StatePair:
    """Apply J = [[0, 1], [-1, 0]] componentwise: (a, b) -> (b, -a)."""
    return StatePair(pair.second, -pair.first)


def _field(grid: Grid, values: np.ndarray) -> Field:
    return Field(grid, np.asarray(values, dtype=complex), "physical")


def _tail_check(grid: Grid, pair: StatePair, kind: str, tolerance: float) -> None:
    scale = max(
        float(np.max(np.abs(pair.first.values))),
        float(np.max(np.abs(pair.second.values))),
    )
    edge = [0, -1]
    worst = max(
        float(np.max(np.abs(pair.first.values[edge]))),
        float(np.max(np.abs(pair.second.values[edge]))),
    )
    if worst > tolerance * scale:
        raise ValueError(
            f"MODE_BOX: {kind} mode tail is {worst / scale:.2e} of its peak at the box "
            f"edge (half_extent {grid.half_extent}); enlarge the box"
        )


def build_modes(
    grid: Grid,
    potential: PotentialSpec,
    beta: float,
    center: float = 0.0,
    scalar_states: Optional[Sequence[ScalarState]] = None,
    zero_band: float = 1e-6,
    tail_tolerance: float = 1e-12,
) -> ModeBundle:
    """Construct the traveling modes of one well on a 1d grid.

    ``scalar_states`` defaults to the closed forms for PT-family wells;
    other families must pass :class:`GridScalar` wrappers of solved
    eigenfunctions.  Raises ``MODE_BOX`` when a mode has not decayed to
    ``tail_tolerance`` (relative) at the box edge, and ``MODE_GAP`` when a
    scalar state sits inside the spectral gap.
    """
    if grid.dim != 1:
        raise ValueError("build_modes supports 1d grids only")
    gamma = lorentz_gamma(beta)
    if scalar_states is None:
        forms = closed_form_bound_states(potential)
        if not forms:
            raise ValueError(
                "no closed-form scalar states for this family; pass scalar_states"
            )
        scalar_states = [ClosedFormScalar(f) for f in forms]

    x = grid.axis_coords
    xi = gamma * (x - center)
    modes: list[TravelingMode] = []
    hyperbolic: list[tuple[float, StatePair, StatePair]] = []
    neutral: list[tuple[StatePair, StatePair]] = []

    for state in scalar_states:
        lam = state.eigenvalue
        if lam < -zero_band:
            nu = state.rate
            zero_extra = np.zeros_like(xi)
            grow_first = state.scaled(xi, -nu * beta * xi)
            grow_phi = grow_first
            grow_dphi = state.scaled_derivative(xi, -nu * beta * xi)
            grow = StatePair(
                _field(grid, grow_phi),
                _field(grid, -gamma * beta * grow_dphi + gamma * nu * grow_phi),
            )
            dec_phi = state.scaled(xi, +nu * beta * xi)
            dec_dphi = state.scaled_derivative(xi, +nu * beta * xi)
            decay = StatePair(
                _field(grid, dec_phi),
                _field(grid, -gamma * beta * dec_dphi - gamma * nu * dec_phi),
            )
            del zero_extra, grow_first
            hyperbolic.append((nu, grow, decay))
        elif abs(lam) <= zero_band:
            zero = np.zeros_like(xi)
            phi0 = state.scaled(xi, zero)
            dphi0 = state.scaled_derivative(xi, zero)
            kernel = StatePair(_field(grid, phi0), _field(grid, -gamma * beta * dphi0))
            secular = StatePair(
                _field(grid, -beta * xi * phi0),
                _field(grid, gamma * phi0 + gamma * beta**2 * xi * dphi0),
            )
            neutral.append((kernel, secular))
        else:
            raise ValueError(
                f"MODE_GAP: scalar eigenvalue {lam:.6e} lies inside the spectral gap; "
                "the mode construction is only defined for negative and zero eigenvalues"
            )

    for nu, grow, decay in hyperbolic:
        _tail_check(grid, grow, "growing", tail_tolerance)
        _tail_check(grid, decay, "decaying", tail_tolerance)
        modes.append(
            TravelingMode("growing", nu, +nu / gamma, grow, dual=_rotate(decay))
        )
    for nu, grow, decay in hyperbolic:
        modes.append(
            TravelingMode("decaying", nu, -nu / gamma, decay, dual=_rotate(grow))
        )
    for kernel, secular in neutral:
        _tail_check(grid, kernel, "kernel", tail_tolerance)
        _tail_check(grid, secular, "secular", tail_tolerance)
        modes.append(TravelingMode("kernel", 0.0, 0.0, kernel, dual=_rotate(secular)))
    for kernel, secular in neutral:
        modes.append(TravelingMode("secular", 0.0, 0.0, secular, dual=_rotate(kernel)))

    return ModeBundle(
        grid=grid,
        potential=potential,
        beta=float(beta),
        center=float(center),
        gamma=gamma,
        modes=tuple(modes),
    )


def apply_comoving_generator(
    state: StatePair, beta: float, potential_values: np.ndarray
) -> StatePair:
    """Apply the co-moving first-order generator.

    ``(u1, u2) -> (beta d/dx u1 + u2, (Lap - 1 - V) u1 + beta d/dx u2)``
    with ``V`` the boosted well sampled at its co-moving position (the
    caller provides ``potential_values``, e.g. from ``sample_lab``).
    """
    grid = state.grid
    if grid.dim != 1:
        raise ValueError("apply_comoving_generator supports 1d grids only")
    k_odd = grid.axis_wavenumbers_odd

    def ddx(f: Field) -> np.ndarray:
        return Field(grid, f.to_spectral().values * (1j * k_odd), "spectral").to_physical().values

    u1 = state.first.to_physical()
    u2 = state.second.to_physical()
    lap_u1 = (
        Field(grid, u1.to_spectral().values * (-grid.k_squared), "spectral")
        .to_physical()
        .values
    )
    first = beta * ddx(u1) + u2.values
    second = lap_u1 - (1.0 + potential_values) * u1.values + beta * ddx(u2)
    return StatePair(_field(grid, first), _field(grid, second))


def measured_secular_constant(
    bundle: ModeBundle, potential_values: np.ndarray
) -> complex:
    """Measure c in ``generator(secular) = c * kernel`` (expected ``1/gamma``).

    Uses the kernel detector functional, so contamination along other
    directions does not bias the measurement.
    """
    kernels = bundle.by_kind("kernel")
    seculars = bundle.by_kind("secular")
    if not kernels or not seculars:
        raise ValueError("bundle has no kernel/secular pair")
    from .grid import l2_pairing

    image = apply_comoving_generator(seculars[0].pair, bundle.beta, potential_values)
    num = l2_pairing(kernels[0].dual, image)
    den = l2_pairing(kernels[0].dual, kernels[0].pair)
    return num / den


class ProjectionSet:
    """Biorthogonal projections onto discrete-mode spans.

    Built from one or more bundles; the Gram matrix of all duals against all
    modes is LU-factored once.  Component selection by kind and well index
    then shares the same coefficient solve, which makes the family of
    projections exactly compatible: ``project(S) o project(T) =
    project(S & T)`` to rounding error.
    """

    def __init__(self, bundles: Sequence[ModeBundle]):
        if not bundles:
            raise ValueError("need at least one bundle")
        self.grid = bundles[0].grid
        for b in bundles:
            if b.grid != self.grid:
                raise ValueError("bundles live on different grids")
        self.bundles = tuple(bundles)
        labels: list[tuple[int, str, float]] = []
        pairs: list[np.ndarray] = []
        duals: list[np.ndarray] = []
        for well, bundle in enumerate(bundles):
            for mode in bundle.modes:
                labels.append((well, mode.kind, mode.rate))
                pairs.append(
                    np.stack([mode.pair.first.values, mode.pair.second.values])
                )
                duals.append(
                    np.stack([mode.dual.first.values, mode.dual.second.values])
                )
        self.labels = labels
        self.pair_stack = np.stack(pairs)  # (n, 2, N)
        self.dual_stack = np.stack(duals)
        weight = self.grid.quadrature_weight
        n = len(labels)
        gram = np.empty((n, n), dtype=complex)
        for a in range(n):
            gram[a] = np.tensordot(self.dual_stack[a], self.pair_stack, axes=([0, 1], [1, 2]))
        gram *= weight
        self.gram = gram
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > 1e12:
            u_, s_, vt_ = np.linalg.svd(gram)
            bad = np.abs(vt_[-1])
            a, b = np.argsort(bad)[-2:]
            la, lb = labels[a], labels[b]
            raise ValueError(
                "PROJECTION_GRAM_SINGULAR: Gram condition number "
                f"{cond:.2e}; most collinear pair is well {la[0]} {la[1]} "
                f"(rate {la[2]:.3f}) with well {lb[0]} {lb[1]} (rate {lb[2]:.3f})"
            )
        self._lu = lu_factor(gram)

    def select(
        self, kinds: Optional[Sequence[str]] = None, wells: Optional[Sequence[int]] = None
    ) -> list[int]:
        out = []
        for i, (well, kind, _) in enumerate(self.labels):
            if kinds is not None and kind not in kinds:
                continue
            if wells is not None and well not in wells:
                continue
            out.append(i)
        return out

    def _state_arrays(self, state: StatePair) -> np.ndarray:
        phys = state.to_physical()
        return np.stack([phys.first.values, phys.second.values])

    def pairings(self, state: StatePair) -> np.ndarray:
        arr = self._state_arrays(state)
        return np.tensordot(self.dual_stack, arr, axes=([1, 2], [0, 1])) * self.grid.quadrature_weight

    def coefficients(self, state: StatePair) -> np.ndarray:
        return lu_solve(self._lu, self.pairings(state))

    def reconstruct(self, coefficients: np.ndarray) -> StatePair:
        """The state ``sum_a c_a * mode_a`` from a coefficient vector."""
        vals = np.tensordot(coefficients, self.pair_stack, axes=(0, 0))
        return StatePair(_field(self.grid, vals[0]), _field(self.grid, vals[1]))

    def component(
        self,
        state: StatePair,
        kinds: Optional[Sequence[str]] = None,
        wells: Optional[Sequence[int]] = None,
    ) -> StatePair:
        """The projection of ``state`` onto the selected mode span."""
        coeffs = self.coefficients(state)
        idx = self.select(kinds, wells)
        vals = np.tensordot(coeffs[idx], self.pair_stack[idx], axes=(0, 0))
        return StatePair(_field(self.grid, vals[0]), _field(self.grid, vals[1]))

    def remove(
        self,
        state: StatePair,
        kinds: Optional[Sequence[str]] = None,
        wells: Optional[Sequence[int]] = None,
    ) -> StatePair:
        """``state`` minus its component in the selected span."""
        return state - self.component(state, kinds, wells)

    def discrete_part(self, state: StatePair) -> StatePair:
        return self.component(state)

    def continuous_part(self, state: StatePair) -> StatePair:
        return self.remove(state)

    def removal_norm(
        self,
        state: StatePair,
        kinds: Optional[Sequence[str]] = None,
        wells: Optional[Sequence[int]] = None,
    ) -> float:
        """Energy norm of the removed component (projection leakage meter)."""
        return energy_norm(self.component(state, kinds, wells))


def build_projections(bundles: Sequence[ModeBundle]) -> ProjectionSet:
    """Assemble the biorthogonal projection family over several wells."""
    return ProjectionSet(bundles)
