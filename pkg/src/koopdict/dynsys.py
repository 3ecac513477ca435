"""Benchmark dynamical systems and trajectory utilities.

Two desk-scale systems drive the whole toolkit: a Van der Pol oscillator
ensemble started from a sampled segment of initial conditions, and a 1-D
two-species reaction-diffusion PDE solved by the method of lines.  This
module also owns the small pieces of trajectory plumbing everything else
builds on: a fixed-step RK4 integrator, the quadratic lift of planar
trajectories into 3-D, per-column min-max scaling, and CSV export.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "IntegrationDivergedError",
    "RecurrenceError",
    "StabilityError",
    "Trajectory",
    "TrajectoryGrid",
    "VdpParams",
    "RdParams",
    "LambdaSegment",
    "ScaleRecord",
    "integrate_rk4",
    "vdp_field",
    "simulate_vdp_ensemble",
    "lift_vdp_3d",
    "simulate_rd",
    "minmax_scale",
    "minmax_unscale",
    "sample_lambda_segment",
    "min_return_distances",
    "write_trajectory_csv",
]


class IntegrationDivergedError(RuntimeError):
    """Raised when an integration produces a non-finite state."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"integration diverged at step {step}")


class RecurrenceError(ValueError):
    """Raised when a trajectory row returns to its starting point."""


class StabilityError(ValueError):
    """Raised when explicit-scheme parameters violate the diffusion bound."""


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled solution of an ODE: ``states[j]`` is the state at
    ``t0 + j*dt``."""

    states: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2:
            raise ValueError(f"states must be 2-D (samples, dim), got shape {states.shape}")
        if states.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 samples")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.isfinite(states).all():
            raise ValueError("trajectory contains non-finite states")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)


@dataclass(frozen=True)
class TrajectoryGrid:
    """An ensemble of trajectories on a shared uniform time grid.

    Row ``i`` is the trajectory started from the ``i``-th sample of the
    initial segment; ``points[i, j]`` is that row's state at ``times[j]``.
    Rows must not revisit their own starting state during the sampled
    epoch: when ``recurrence_tol`` is a number, construction fails if any
    row comes closer than that to its start at any later sample.  Pass
    ``recurrence_tol=None`` to skip the check (the caller then owns the
    non-recurrence assumption).
    """

    points: np.ndarray
    times: np.ndarray
    recurrence_tol: float | None = 1e-3

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if points.ndim != 3:
            raise ValueError(f"points must be 3-D (rows, samples, dim), got shape {points.shape}")
        n, m_plus_1, _ = points.shape
        if n < 2:
            raise ValueError("a trajectory grid needs at least 2 rows")
        if m_plus_1 < 2:
            raise ValueError("a trajectory grid needs at least 2 time samples")
        if times.shape != (m_plus_1,):
            raise ValueError(f"times shape {times.shape} does not match {m_plus_1} samples")
        if times[0] != 0.0:
            raise ValueError("time grid must start at 0")
        steps = np.diff(times)
        if not (steps > 0).all():
            raise ValueError("time grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("time grid must be uniform")
        if not np.isfinite(points).all():
            raise ValueError("grid contains non-finite states")
        if self.recurrence_tol is not None:
            dists = min_return_distances(points)
            worst = int(np.argmin(dists))
            if dists[worst] <= self.recurrence_tol:
                raise RecurrenceError(
                    f"row {worst} returns within {dists[worst]:.3e} of its start "
                    f"(tolerance {self.recurrence_tol:.3e}); the sampled epoch is not non-recurrent"
                )
        points.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "times", times)

    @property
    def n_rows(self) -> int:
        return self.points.shape[0]

    @property
    def n_samples(self) -> int:
        return self.points.shape[1]

    @property
    def dim(self) -> int:
        return self.points.shape[2]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def from_trajectories(
        cls, trajectories: Sequence[Trajectory], recurrence_tol: float | None = 1e-3
    ) -> "TrajectoryGrid":
        if len(trajectories) < 2:
            raise ValueError("need at least 2 trajectories")
        first = trajectories[0]
        for t in trajectories[1:]:
            if t.n_samples != first.n_samples or t.dt != first.dt or t.dim != first.dim:
                raise ValueError("trajectories do not share a common time grid and dimension")
        points = np.stack([t.states for t in trajectories])
        times = first.dt * np.arange(first.n_samples)
        return cls(points, times, recurrence_tol)


def min_return_distances(points: np.ndarray) -> np.ndarray:
    """Per row, the minimum distance from the starting state to any later
    sample of the same row."""
    diffs = points[:, 1:, :] - points[:, :1, :]
    return np.linalg.norm(diffs, axis=2).min(axis=1)


@dataclass(frozen=True)
class VdpParams:
    """Van der Pol simulation settings: damping ``mu``, step ``dt`` and
    step count ``n_steps`` for each ensemble member."""

    mu: float = 1.0
    dt: float = 0.02
    n_steps: int = 100

    def __post_init__(self):
        if not np.isfinite(self.mu) or self.mu <= 0:
            raise ValueError(f"mu must be a positive finite number, got {self.mu}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")


@dataclass(frozen=True)
class RdParams:
    """Reaction-diffusion settings for

        du1/dt = D u1_xx + (1/epsilon) (u2 - f(u1))
        du2/dt = D u2_xx - u1 + alpha

    on x in [0, 1] with both endpoint values of u1 and u2 held fixed at
    their initial values.  ``dt`` is the integration step and must satisfy
    the explicit-diffusion bound D*dt/dx^2 <= 0.5; ``save_every`` decimates
    the stored samples so long epochs stay desk-sized.  ``nonlinearity``
    selects f: "cubic" (u^3 - u) or "identity" (u).  ``reaction=False``
    drops both reaction terms, leaving two decoupled heat equations.
    """

    D: float = 0.0322
    epsilon: float = 0.01
    alpha: float = 0.01
    n_x: int = 100
    dt: float = 1.5e-3
    t_end: float = 60.0
    save_every: int = 1
    nonlinearity: str = "cubic"
    reaction: bool = True

    def __post_init__(self):
        if self.D < 0 or not np.isfinite(self.D):
            raise ValueError(f"D must be non-negative and finite, got {self.D}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.n_x < 3:
            raise ValueError(f"n_x must be >= 3, got {self.n_x}")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.save_every < 1:
            raise ValueError(f"save_every must be >= 1, got {self.save_every}")
        if self.nonlinearity not in ("cubic", "identity"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        number = self.D * self.dt / self.dx**2
        if number > 0.5:
            raise StabilityError(
                f"D*dt/dx^2 = {number:.4f} exceeds the explicit stability bound 0.5; "
                f"reduce dt below {0.5 * self.dx**2 / self.D:.3e}"
            )

    @property
    def dx(self) -> float:
        return 1.0 / (self.n_x - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_x)

    def f(self, u: np.ndarray) -> np.ndarray:
        if self.nonlinearity == "cubic":
            return u**3 - u
        return u


@dataclass(frozen=True)
class LambdaSegment:
    """A straight segment of initial conditions, the sampled piece of the
    co-dimension-one starting manifold.  Points are ``a + s*(b - a)`` for
    ``n`` uniform parameters s in [0, 1]."""

    a: tuple[float, ...]
    b: tuple[float, ...]
    n: int = 50

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        b = tuple(float(v) for v in self.b)
        if len(a) != len(b):
            raise ValueError("segment endpoints must have the same dimension")
        if a == b:
            raise ValueError("segment endpoints must differ")
        if self.n < 2:
            raise ValueError(f"need at least 2 samples on the segment, got {self.n}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return len(self.a)

    @property
    def s_values(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)


def sample_lambda_segment(seg: LambdaSegment) -> np.ndarray:
    """Uniformly sample the segment, endpoints included; shape (n, dim)."""
    a = np.asarray(seg.a)
    b = np.asarray(seg.b)
    s = seg.s_values[:, None]
    return a[None, :] + s * (b - a)[None, :]


def integrate_rk4(
    f: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    dt: float,
    n_steps: int,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate ``xdot = f(x)`` with classical 4th-order Runge-Kutta.

    Returns ``n_steps + 1`` states starting at ``x0``.  Raises
    :class:`IntegrationDivergedError` (naming the step) as soon as a state
    stops being finite.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((n_steps + 1, x.size))
    states[0] = x
    for step in range(1, n_steps + 1):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(x).all():
            raise IntegrationDivergedError(step)
        states[step] = x
    return Trajectory(states, dt, t0)


def vdp_field(mu: float) -> Callable[[np.ndarray], np.ndarray]:
    """Van der Pol vector field x1' = x2, x2' = mu (1 - x1^2) x2 - x1."""

    def f(x: np.ndarray) -> np.ndarray:
        return np.array([x[1], mu * (1.0 - x[0] ** 2) * x[1] - x[0]])

    return f


def simulate_vdp_ensemble(
    params: VdpParams, seg: LambdaSegment, recurrence_tol: float | None = 1e-3
) -> TrajectoryGrid:
    """One RK4 trajectory per segment sample, all on the shared time grid."""
    if seg.dim != 2:
        raise ValueError(f"Van der Pol initial segment must be 2-D, got dimension {seg.dim}")
    f = vdp_field(params.mu)
    rows = [integrate_rk4(f, x0, params.dt, params.n_steps) for x0 in sample_lambda_segment(seg)]
    return TrajectoryGrid.from_trajectories(rows, recurrence_tol)


def lift_vdp_3d(traj: Trajectory) -> Trajectory:
    """Lift a planar trajectory to 3-D via (x1, x2) -> (x1, x2, x1^2 + x2^2)."""
    if traj.dim != 2:
        raise ValueError(f"lift expects a 2-D trajectory, got dimension {traj.dim}")
    x1 = traj.states[:, 0]
    x2 = traj.states[:, 1]
    lifted = np.column_stack([x1, x2, x1**2 + x2**2])
    return Trajectory(lifted, traj.dt, traj.t0)


def _rd_rhs(params: RdParams) -> Callable[[np.ndarray], np.ndarray]:
    n = params.n_x
    inv_dx2 = 1.0 / params.dx**2
    inv_eps = 1.0 / params.epsilon

    def rhs(state: np.ndarray) -> np.ndarray:
        u1 = state[:n]
        u2 = state[n:]
        du = np.zeros_like(state)
        du1 = du[:n]
        du2 = du[n:]
        du1[1:-1] = params.D * (u1[2:] - 2.0 * u1[1:-1] + u1[:-2]) * inv_dx2
        du2[1:-1] = params.D * (u2[2:] - 2.0 * u2[1:-1] + u2[:-2]) * inv_dx2
        if params.reaction:
            du1[1:-1] += inv_eps * (u2[1:-1] - params.f(u1[1:-1]))
            du2[1:-1] += -u1[1:-1] + params.alpha
        # endpoints stay at their initial values: zero time derivative
        return du

    return rhs


def default_rd_initial_conditions(params: RdParams) -> tuple[np.ndarray, np.ndarray]:
    """Small smooth excitation: u1 = 0.1 sin(2 pi x) + 0.1, u2 = 0."""
    x = params.x
    return 0.1 * np.sin(2.0 * np.pi * x) + 0.1, np.zeros_like(x)


def simulate_rd(
    params: RdParams,
    u1_0: np.ndarray | None = None,
    u2_0: np.ndarray | None = None,
) -> tuple[Trajectory, Trajectory]:
    """Method-of-lines solve of the reaction-diffusion system.

    Second-order central differences in space, RK4 in time, endpoint
    values of both fields held fixed at their initial values.  Returns one
    trajectory per field; each stored sample is ``save_every`` integration
    steps apart, so the trajectories' ``dt`` is ``params.dt * save_every``.
    """
    if u1_0 is None or u2_0 is None:
        d1, d2 = default_rd_initial_conditions(params)
        u1_0 = d1 if u1_0 is None else u1_0
        u2_0 = d2 if u2_0 is None else u2_0
    u1_0 = np.asarray(u1_0, dtype=float)
    u2_0 = np.asarray(u2_0, dtype=float)
    if u1_0.shape != (params.n_x,) or u2_0.shape != (params.n_x,):
        raise ValueError(f"initial conditions must have length n_x = {params.n_x}")

    rhs = _rd_rhs(params)
    n_steps = int(round(params.t_end / params.dt))
    keep = params.save_every
    n_kept = n_steps // keep + 1
    state = np.concatenate([u1_0, u2_0])
    saved = np.empty((n_kept, state.size))
    saved[0] = state
    dt = params.dt
    for step in range(1, n_steps + 1):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * dt * k1)
        k3 = rhs(state + 0.5 * dt * k2)
        k4 = rhs(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(state).all():
            raise IntegrationDivergedError(step)
        if step % keep == 0:
            saved[step // keep] = state
    sample_dt = dt * keep
    return (
        Trajectory(saved[:, : params.n_x], sample_dt),
        Trajectory(saved[:, params.n_x :], sample_dt),
    )


@dataclass(frozen=True)
class ScaleRecord:
    """Per-column affine map used by :func:`minmax_scale`; enough to invert
    exactly.  Columns whose min equals their max carry the degenerate flag
    and map to the constant 0.5."""

    mins: np.ndarray
    maxs: np.ndarray
    degenerate: np.ndarray | None = None

    def __post_init__(self):
        mins = np.atleast_1d(np.asarray(self.mins, dtype=float))
        maxs = np.atleast_1d(np.asarray(self.maxs, dtype=float))
        degenerate = self.degenerate
        if degenerate is None:
            degenerate = mins == maxs
        degenerate = np.atleast_1d(np.asarray(degenerate, dtype=bool))
        for arr in (mins, maxs, degenerate):
            arr.setflags(write=False)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "degenerate", degenerate)

    @property
    def spans(self) -> np.ndarray:
        return np.where(self.degenerate, 1.0, self.maxs - self.mins)


def minmax_scale(data: np.ndarray) -> tuple[np.ndarray, ScaleRecord]:
    """Affinely map each column of ``data`` onto [0, 1].

    Constant columns cannot be stretched; they map to 0.5 and are flagged
    in the returned record so the information loss is visible.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError(f"expected 2-D data (samples, columns), got shape {data.shape}")
    mins = data.min(axis=0)
    maxs = data.max(axis=0)
    record = ScaleRecord(mins, maxs)
    scaled = (data - record.mins) / record.spans
    scaled[:, record.degenerate] = 0.5
    return scaled, record


def minmax_unscale(scaled: np.ndarray, record: ScaleRecord) -> np.ndarray:
    """Invert :func:`minmax_scale`.  Degenerate columns recover their
    original constant exactly."""
    scaled = np.asarray(scaled, dtype=float)
    out = scaled * record.spans + record.mins
    out[..., record.degenerate] = record.mins[record.degenerate]
    return out


def write_trajectory_csv(path, grid: TrajectoryGrid) -> None:
    """Write a trajectory grid as ``row,step,t,x0,x1,...`` lines in full
    precision scientific notation."""
    dim = grid.dim
    header = "row,step,t," + ",".join(f"x{k}" for k in range(dim))
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for i in range(grid.n_rows):
            for j in range(grid.n_samples):
                coords = ",".join(f"{v:.17e}" for v in grid.points[i, j])
                fh.write(f"{i},{j},{grid.times[j]:.17e},{coords}\n")
