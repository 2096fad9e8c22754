"""Well profiles, Lorentz boosts, trajectories and their reduction.

A well is described in its rest frame by a smooth, exponentially decaying
profile ``V(x)`` centered at the origin; in the lab it appears contracted by
the Lorentz map of its instantaneous velocity and carried along a trajectory.
The reduction step rewrites a nearly-linear trajectory as ``y(t) = beta0 t +
c(t)`` with the frozen launch velocity ``beta0 = beta(0)``; the residual
drift ``a = c'`` and the frozen-velocity remainder of the potential are what
the perturbative evolution operators consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gammaln

from .grid import Field, Grid, fourier_interpolate

__all__ = [
    "PotentialSpec",
    "BoundStateForm",
    "closed_form_bound_states",
    "lorentz_gamma",
    "lorentz_matrix",
    "boost_points",
    "boost_function",
    "Trajectory",
    "TrajectoryReport",
    "validate_trajectory",
    "TrajectoryReduction",
    "reduce_trajectory",
    "shift_operator_apply",
    "log_sech",
]

SUPPORTED_FAMILIES = ("poeschl_teller", "gaussian", "tabulated")


def log_sech(x: np.ndarray) -> np.ndarray:
    """``log(sech(x))`` computed without overflow for large ``|x|``."""
    ax = np.abs(x)
    return math.log(2.0) - ax - np.log1p(np.exp(-2.0 * ax))


@dataclass(frozen=True)
class PotentialSpec:
    """Rest-frame well profile.

    Families:

    * ``poeschl_teller``: ``V(x) = -depth * sech(x / width)**2``; the
      dimensionless index ``s`` with ``s (s + 1) = depth * width**2``
      determines the bound states, which are closed-form for the two deepest
      levels.
    * ``gaussian``: ``V(x) = -depth * exp(-x^2 / (2 width^2))``; decays
      faster than any exponential, so ``decay_rate`` is ``inf``.
    * ``tabulated``: samples on a 1d grid with a caller-supplied decay rate.
    """

    family: str
    depth: float
    width: float = 1.0
    samples: Optional[Field] = None
    tabulated_decay_rate: Optional[float] = None

    def __post_init__(self) -> None:
        if self.family not in SUPPORTED_FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}")
        if self.family != "tabulated" and self.depth <= 0:
            raise ValueError("depth must be positive (wells are attractive)")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.family == "tabulated":
            if self.samples is None or self.tabulated_decay_rate is None:
                raise ValueError("tabulated family needs samples and a decay rate")

    @property
    def decay_rate(self) -> float:
        """Exponential decay rate of the profile tail."""
        if self.family == "poeschl_teller":
            return 2.0 / self.width
        if self.family == "gaussian":
            return math.inf
        return float(self.tabulated_decay_rate)

    @property
    def pt_index(self) -> float:
        """Index ``s > 0`` with ``s (s + 1) = depth * width**2``."""
        if self.family != "poeschl_teller":
            raise ValueError("pt_index is defined for the poeschl_teller family only")
        return 0.5 * (-1.0 + math.sqrt(1.0 + 4.0 * self.depth * self.width**2))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the rest-frame profile at (radial) coordinates ``x``."""
        x = np.asarray(x, dtype=float)
        if self.family == "poeschl_teller":
            return -self.depth * np.exp(2.0 * log_sech(x / self.width))
        if self.family == "gaussian":
            return -self.depth * np.exp(-(x**2) / (2.0 * self.width**2))
        return np.real(fourier_interpolate(self.samples, x))

    def sample_lab(self, grid: Grid, beta: np.ndarray, center: np.ndarray) -> np.ndarray:
        """Sample the boosted, recentered well ``V(Lambda_beta (x - center))``.

        In 1d the boost contracts the argument by gamma; in higher dimension
        only the component along ``beta`` contracts.  Radial profiles are
        evaluated at the boosted radius.
        """
        beta = _as_vector(beta, grid.dim)
        center = _as_vector(center, grid.dim)
        shifted = [x - center[axis] for axis, x in enumerate(grid.coords)]
        boosted = boost_points(shifted, beta)
        r2 = np.zeros(grid.shape)
        for comp in boosted:
            r2 = r2 + comp**2
        return self(np.sqrt(r2)) if grid.dim > 1 else self(boosted[0])


@dataclass(frozen=True)
class BoundStateForm:
    """Closed-form bound state of the scalar operator ``-d2/dx2 + 1 + V``.

    ``eigenvalue`` is the eigenvalue of the full (mass-shifted) operator;
    negative values carry ``rate = sqrt(-eigenvalue)``.  The function is
    factored as ``profile(x) = exp(log_smooth(x)) * factor(x)`` with
    ``factor`` bounded, and likewise ``derivative(x) = exp(log_smooth(x)) *
    dfactor(x)``.  The split lets callers fold exponential prefactors into
    the exponent before exponentiating, so products that are tiny on paper
    never overflow in floating point.
    """

    eigenvalue: float
    rate: float
    parity: str
    log_smooth: Callable[[np.ndarray], np.ndarray]
    factor: Callable[[np.ndarray], np.ndarray]
    dfactor: Callable[[np.ndarray], np.ndarray]

    def profile(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.exp(self.log_smooth(x)) * self.factor(x)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.exp(self.log_smooth(x)) * self.dfactor(x)


def _pt_norms(a: float, width: float) -> tuple[float, float]:
    """L2 normalizers: ``int sech(x/w)^{2a}`` and ``int sech^{2a} tanh^2``."""
    log_i = lambda aa: 0.5 * math.log(math.pi) + gammaln(aa) - gammaln(aa + 0.5)
    i_a = math.exp(log_i(a))
    i_a1 = math.exp(log_i(a + 1.0))
    return width * i_a, width * (i_a - i_a1)


def closed_form_bound_states(spec: PotentialSpec) -> list[BoundStateForm]:
    """Closed-form bound states of ``-d2/dx2 + 1 + V`` for PT-family wells.

    Returns the two deepest levels (all that exist for index ``s <= 2``, and
    all any scenario here uses): ``sech^s`` and ``sech^{s-1} tanh`` in the
    scaled variable.  Other families return an empty list; callers fall back
    to grid eigenfunctions.
    """
    if spec.family != "poeschl_teller":
        return []
    s = spec.pt_index
    w = spec.width
    out: list[BoundStateForm] = []

    norm0_sq, _ = _pt_norms(s, w)
    c0 = 1.0 / math.sqrt(norm0_sq)
    lam0 = 1.0 - (s / w) ** 2
    out.append(
        BoundStateForm(
            eigenvalue=lam0,
            rate=math.sqrt(max(-lam0, 0.0)),
            parity="even",
            log_smooth=lambda x, _c=c0, _s=s, _w=w: (
                math.log(_c) + _s * log_sech(np.asarray(x, dtype=float) / _w)
            ),
            factor=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            dfactor=lambda x, _s=s, _w=w: (
                -(_s / _w) * np.tanh(np.asarray(x, dtype=float) / _w)
            ),
        )
    )

    if s > 1.0:
        _, norm1_sq = _pt_norms(s - 1.0, w)
        c1 = 1.0 / math.sqrt(norm1_sq)
        lam1 = 1.0 - ((s - 1.0) / w) ** 2

        def dfactor1(x, _s=s, _w=w):
            x = np.asarray(x, dtype=float)
            t = np.tanh(x / _w)
            sech2 = np.exp(2.0 * log_sech(x / _w))
            return (sech2 - (_s - 1.0) * t * t) / _w

        out.append(
            BoundStateForm(
                eigenvalue=lam1,
                rate=math.sqrt(max(-lam1, 0.0)),
                parity="odd",
                log_smooth=lambda x, _c=c1, _s=s, _w=w: (
                    math.log(_c) + (_s - 1.0) * log_sech(np.asarray(x, dtype=float) / _w)
                ),
                factor=lambda x, _w=w: np.tanh(np.asarray(x, dtype=float) / _w),
                dfactor=dfactor1,
            )
        )
    return out


def lorentz_gamma(beta: np.ndarray | float) -> float:
    """``1 / sqrt(1 - |beta|^2)``; raises for superluminal speeds."""
    b2 = float(np.sum(np.square(np.atleast_1d(np.asarray(beta, dtype=float)))))
    if b2 >= 1.0:
        raise ValueError(f"TRAJECTORY_SUPERLUMINAL: |beta|^2 = {b2:.6f} >= 1")
    return 1.0 / math.sqrt(1.0 - b2)


def lorentz_matrix(beta: np.ndarray) -> np.ndarray:
    """Spatial boost matrix: identity + (gamma - 1) projector along beta."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    gamma = lorentz_gamma(beta)
    b2 = float(beta @ beta)
    eye = np.eye(beta.size)
    if b2 == 0.0:
        return eye
    return eye + (gamma - 1.0) * np.outer(beta, beta) / b2


def boost_points(points: Sequence[np.ndarray], beta: np.ndarray) -> list[np.ndarray]:
    """Apply the boost matrix to a list of coordinate arrays."""
    mat = lorentz_matrix(beta)
    return [sum(mat[i, j] * points[j] for j in range(len(points))) for i in range(len(points))]


def boost_function(profile, beta: np.ndarray):
    """Boost a spatial profile: ``f_beta(x) = f(Lambda_beta x)``.

    ``profile`` may be a callable of coordinate arrays (any dimension, one
    argument per axis) or a 1d :class:`Field` (resampled band-limitedly).
    Returns the same kind of object family: a callable in both cases.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    lorentz_gamma(beta)  # validation

    if isinstance(profile, Field):
        if profile.grid.dim != 1:
            raise ValueError("Field boosting is implemented for 1d grids")

        def boosted_field(*coords):
            (pts,) = coords
            scaled = boost_points([np.asarray(pts, dtype=float)], beta)[0]
            return fourier_interpolate(profile, scaled)

        return boosted_field

    def boosted(*coords):
        arrays = [np.asarray(c, dtype=float) for c in coords]
        return profile(*boost_points(arrays, beta))

    return boosted


def _as_vector(value, dim: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1 and dim > 1:
        raise ValueError(f"expected a {dim}-vector, got a scalar")
    if arr.size != dim:
        raise ValueError(f"expected a {dim}-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Trajectory:
    """Trajectory of one well: position and velocity as functions of time.

    ``position(t)`` and ``velocity(t)`` return length-``dim`` arrays;
    ``velocity_rate`` (the time derivative of velocity) is optional and is
    finite-differenced when absent.  The carried velocity is allowed to
    differ from the path derivative (slip); validation measures both.
    """

    dim: int
    position: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]
    velocity_rate: Optional[Callable[[float], np.ndarray]] = None

    @staticmethod
    def linear(beta, start=None, dim: int = 1) -> "Trajectory":
        beta_v = _as_vector(beta, dim)
        start_v = np.zeros(dim) if start is None else _as_vector(start, dim)
        return Trajectory(
            dim=dim,
            position=lambda t: start_v + beta_v * t,
            velocity=lambda t: beta_v.copy(),
            velocity_rate=lambda t: np.zeros(dim),
        )

    @staticmethod
    def from_samples(times: np.ndarray, positions: np.ndarray) -> "Trajectory":
        """Cubic-spline trajectory through sampled positions (velocity = path
        derivative, so the slip is zero by construction)."""
        times = np.asarray(times, dtype=float)
        positions = np.asarray(positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, None]
        spline = CubicSpline(times, positions, axis=0)
        dspline = spline.derivative()
        ddspline = dspline.derivative()
        return Trajectory(
            dim=positions.shape[1],
            position=lambda t: np.atleast_1d(spline(t)),
            velocity=lambda t: np.atleast_1d(dspline(t)),
            velocity_rate=lambda t: np.atleast_1d(ddspline(t)),
        )

    def velocity_rate_at(self, t: float, fd_step: float = 1e-5) -> np.ndarray:
        if self.velocity_rate is not None:
            return np.atleast_1d(self.velocity_rate(t))
        vp = np.atleast_1d(self.velocity(t + fd_step))
        vm = np.atleast_1d(self.velocity(t - fd_step))
        return (vp - vm) / (2.0 * fd_step)


@dataclass(frozen=True)
class TrajectoryReport:
    """Measured trajectory norms over a time window."""

    max_speed: float
    velocity_rate_l1: float
    velocity_rate_linf: float
    slip_l1: float
    slip_linf: float

    @property
    def perturbation_size(self) -> float:
        """The budget the wiggle bound is checked against:
        ``||beta'||_{L1 cap Linf} + ||y' - beta||_{L1 cap Linf}``."""
        return (
            max(self.velocity_rate_l1, self.velocity_rate_linf)
            + max(self.slip_l1, self.slip_linf)
        )


def _time_grid(horizon: float, samples: int) -> np.ndarray:
    return np.linspace(0.0, horizon, samples)


def validate_trajectory(
    trajectory: Trajectory,
    horizon: float,
    budget: Optional[float] = None,
    samples: int = 2001,
) -> TrajectoryReport:
    """Check subluminality and measure the wiggle norms on ``[0, horizon]``.

    Raises ``ValueError`` with code ``TRAJECTORY_SUPERLUMINAL`` if any
    sampled speed reaches 1, and with code ``TRAJECTORY_BUDGET`` if a budget
    is given and ``perturbation_size`` exceeds it.
    """
    ts = _time_grid(horizon, samples)
    speeds = np.empty(ts.size)
    rates = np.empty(ts.size)
    slips = np.empty(ts.size)
    fd = max(1e-6 * max(horizon, 1.0), 1e-9)
    for i, t in enumerate(ts):
        beta = np.atleast_1d(trajectory.velocity(t))
        speeds[i] = float(np.linalg.norm(beta))
        rates[i] = float(np.linalg.norm(trajectory.velocity_rate_at(t)))
        yp = (
            np.atleast_1d(trajectory.position(t + fd))
            - np.atleast_1d(trajectory.position(t - fd))
        ) / (2.0 * fd)
        slips[i] = float(np.linalg.norm(yp - beta))
    if float(np.max(speeds)) >= 1.0:
        worst = ts[int(np.argmax(speeds))]
        raise ValueError(
            f"TRAJECTORY_SUPERLUMINAL: speed {np.max(speeds):.6f} >= 1 at t = {worst:.3f}"
        )
    report = TrajectoryReport(
        max_speed=float(np.max(speeds)),
        velocity_rate_l1=float(np.trapezoid(rates, ts)),
        velocity_rate_linf=float(np.max(rates)),
        slip_l1=float(np.trapezoid(slips, ts)),
        slip_linf=float(np.max(slips)),
    )
    if budget is not None and report.perturbation_size > budget:
        raise ValueError(
            f"TRAJECTORY_BUDGET: perturbation size {report.perturbation_size:.3e} "
            f"exceeds budget {budget:.3e}"
        )
    return report


@dataclass(frozen=True)
class TrajectoryReduction:
    """Frozen-velocity rewrite ``y(t) = beta0 t + c(t)``.

    ``center_offset`` is ``c``, ``drift`` is ``a = c'`` (slip folded in), and
    ``accumulated_shift(t, s) = c(t) - c(s)`` needs no quadrature because
    ``c`` is available in closed form from the position callable.
    ``envelope_constant`` bounds the frozen-velocity remainder of the lab
    potential pointwise: ``|V_{beta(t)}(x - y) - V_{beta0}(x - y)| <=
    envelope_constant`` for all sampled t, x.
    """

    beta0: np.ndarray
    trajectory: Trajectory
    drift_l1: float
    drift_linf: float
    envelope_constant: float

    def center_offset(self, t: float) -> np.ndarray:
        return np.atleast_1d(self.trajectory.position(t)) - self.beta0 * t

    def drift(self, t: float, fd_step: float = 1e-6) -> np.ndarray:
        yp = (
            np.atleast_1d(self.trajectory.position(t + fd_step))
            - np.atleast_1d(self.trajectory.position(t - fd_step))
        ) / (2.0 * fd_step)
        return yp - self.beta0

    def accumulated_shift(self, t: float, s: float) -> np.ndarray:
        return self.center_offset(t) - self.center_offset(s)


def reduce_trajectory(
    trajectory: Trajectory,
    horizon: float,
    potential: Optional[PotentialSpec] = None,
    samples: int = 2001,
) -> TrajectoryReduction:
    """Freeze the launch velocity and package the residual drift.

    When a potential is supplied the envelope constant of the boosted-well
    remainder is evaluated by sampling ``|V_beta(t) - V_beta0|`` over the
    encountered velocity segment (1d wells; higher-d wells are boosted along
    the velocity axis, same bound).
    """
    beta0 = np.atleast_1d(trajectory.velocity(0.0))
    lorentz_gamma(beta0)
    ts = _time_grid(horizon, samples)
    fd = max(1e-6 * max(horizon, 1.0), 1e-9)
    drifts = np.empty(ts.size)
    speeds = np.empty(ts.size)
    for i, t in enumerate(ts):
        yp = (
            np.atleast_1d(trajectory.position(t + fd))
            - np.atleast_1d(trajectory.position(t - fd))
        ) / (2.0 * fd)
        drifts[i] = float(np.linalg.norm(yp - beta0))
        speeds[i] = float(np.linalg.norm(np.atleast_1d(trajectory.velocity(t))))

    envelope = 0.0
    if potential is not None:
        beta0_speed = float(np.linalg.norm(beta0))
        lo = min(float(np.min(speeds)), beta0_speed)
        hi = max(float(np.max(speeds)), beta0_speed)
        xs = np.linspace(-60.0, 60.0, 4801)
        base = potential(lorentz_gamma(beta0_speed) * xs)
        for b in np.linspace(lo, hi, 17):
            cand = potential(lorentz_gamma(b) * xs)
            envelope = max(envelope, float(np.max(np.abs(cand - base))))

    return TrajectoryReduction(
        beta0=beta0,
        trajectory=trajectory,
        drift_l1=float(np.trapezoid(drifts, ts)),
        drift_linf=float(np.max(drifts)),
        envelope_constant=envelope,
    )


def shift_operator_apply(state, reduction: TrajectoryReduction, t: float, s: float):
    """Translate by the accumulated drift: ``(U(t,s) f)(x) = f(x + b(t,s))``.

    Acts on a :class:`Field` or componentwise on a :class:`StatePair`.
    """
    from .grid import StatePair, translate

    shift = reduction.accumulated_shift(t, s)
    if isinstance(state, StatePair):
        return StatePair(translate(state.first, shift), translate(state.second, shift))
    return translate(state, shift)
