"""Koopman eigenpair extraction on non-recurrent trajectory grids.

The data is a grid of observable samples: n trajectories started along a
parametrized segment of initial conditions, each sampled at the same
uniform times r_0 = 0 < r_1 < ... < r_m.  A candidate eigenvalue lam
predicts the rank-one pattern  psi[i, j] = exp(lam * r_j) * h[i],  and
the best initial-data vector h for a fixed lam is an ordinary least
squares problem.  Because the design matrix is the Kronecker product of
the time profile with the identity, that problem decouples row by row
into the closed form

    h[i] = sum_j conj(exp(lam r_j)) q[i, j] / sum_j |exp(lam r_j)|^2,

which this module exploits; tests pin it against a dense generic solver.
Scanning lam over a grid and keeping the argmin of the residual gives one
eigenpair; modes beyond the first are extracted greedily by subtracting
each fitted pattern from the data and re-scanning the residual.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynsys import TrajectoryGrid

__all__ = [
    "LambdaOverflowError",
    "LambdaScanError",
    "ObservableGrid",
    "LambdaGrid",
    "EigenPair",
    "LambdaScanCurve",
    "ModeDecomposition",
    "evaluate_observable",
    "exponential_profile",
    "solve_initial_data",
    "scan_lambda",
    "greedy_decompose",
    "reconstruct",
    "grid_to_stacked",
    "stacked_to_grid",
]

# exp overflows float64 just above exp(709); reject with margin
_OVERFLOW_EXPONENT = 700.0


class LambdaOverflowError(OverflowError):
    """Raised when exp(lam * r_m) cannot be represented."""

    def __init__(self, lam: complex, reach: float):
        self.lam = lam
        super().__init__(
            f"candidate lambda {lam} overflows: |Re(lambda)| * r_m = {reach:.1f} > "
            f"{_OVERFLOW_EXPONENT:.0f}"
        )


class LambdaScanError(RuntimeError):
    """Raised when no candidate eigenvalue produced a usable fit."""


def _check_times(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("need a 1-D time grid with at least 2 samples")
    if times[0] != 0.0:
        raise ValueError("time grid must start at 0")
    steps = np.diff(times)
    if not (steps > 0).all():
        raise ValueError("time grid must be strictly increasing")
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError("time grid must be uniform")
    return times


@dataclass(frozen=True)
class ObservableGrid:
    """Samples q[i, j] of a scalar observable over a trajectory grid.

    Row i follows the trajectory with segment parameter ``s_params[i]``;
    column j is the shared sample time ``times[j]``.  Values may be real
    or complex.
    """

    values: np.ndarray
    times: np.ndarray
    s_params: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D (rows, samples), got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("observable grid contains non-finite values")
        times = _check_times(self.times)
        if times.shape[0] != values.shape[1]:
            raise ValueError(
                f"time grid length {times.shape[0]} does not match {values.shape[1]} columns"
            )
        s_params = np.asarray(self.s_params, dtype=float)
        if s_params.shape != (values.shape[0],):
            raise ValueError(
                f"s_params shape {s_params.shape} does not match {values.shape[0]} rows"
            )
        for arr in (values, times, s_params):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "s_params", s_params)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LambdaGrid:
    """Ordered candidate eigenvalues for the scan."""

    candidates: np.ndarray

    def __post_init__(self):
        candidates = np.asarray(self.candidates, dtype=complex).ravel()
        if candidates.size == 0:
            raise ValueError("lambda grid must not be empty")
        if np.unique(candidates).size != candidates.size:
            raise ValueError("lambda grid contains duplicate candidates")
        candidates.setflags(write=False)
        object.__setattr__(self, "candidates", candidates)

    def __len__(self) -> int:
        return self.candidates.size

    @property
    def is_real(self) -> bool:
        return bool((self.candidates.imag == 0).all())

    @classmethod
    def real_line(cls, start: float = -5.0, stop: float = 5.0, count: int = 401) -> "LambdaGrid":
        if count < 1:
            raise ValueError("count must be >= 1")
        return cls(np.linspace(start, stop, count).astype(complex))

    @classmethod
    def complex_rectangle(
        cls,
        re_start: float,
        re_stop: float,
        re_count: int,
        im_start: float,
        im_stop: float,
        im_count: int,
    ) -> "LambdaGrid":
        re = np.linspace(re_start, re_stop, re_count)
        im = np.linspace(im_start, im_stop, im_count)
        grid = re[:, None] + 1j * im[None, :]
        return cls(grid.ravel())


@dataclass(frozen=True)
class EigenPair:
    """One extracted mode: eigenvalue, initial data h on the segment, the
    rank-one mode grid psi[i, j] = exp(lam r_j) h[i], and the residual
    norm of its least-squares fit."""

    eigenvalue: complex
    h: np.ndarray
    psi: np.ndarray
    fit_error: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape[0] != h.shape[0]:
            raise ValueError("psi rows must match h length")
        if self.fit_error < 0:
            raise ValueError("fit error must be non-negative")
        h.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "psi", psi)


@dataclass(frozen=True)
class LambdaScanCurve:
    """Fit error at every candidate, in grid order.  Candidates rejected
    by the overflow guard keep their slot with an infinite error and a
    raised flag."""

    lambdas: np.ndarray
    fit_errors: np.ndarray
    rejected: np.ndarray

    def __post_init__(self):
        if not (self.lambdas.shape == self.fit_errors.shape == self.rejected.shape):
            raise ValueError("curve arrays must share one shape")
        for arr in (self.lambdas, self.fit_errors, self.rejected):
            arr.setflags(write=False)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.fit_errors))


@dataclass(frozen=True)
class ModeDecomposition:
    """Greedily extracted modes with the residual ladder.

    ``residual_norms[k]`` is the 2-norm of the data minus the first k
    modes, so the entry at 0 is the norm of the raw data and the ladder
    never increases.  One scan curve is kept per mode for reporting.
    """

    modes: tuple[EigenPair, ...]
    residual_norms: np.ndarray
    times: np.ndarray
    s_params: np.ndarray
    curves: tuple[LambdaScanCurve, ...] = ()
    observable_name: str = ""

    def __post_init__(self):
        norms = np.asarray(self.residual_norms, dtype=float)
        if norms.shape != (len(self.modes) + 1,):
            raise ValueError("need one residual norm per extracted mode plus the initial one")
        drops = np.diff(norms)
        if (drops > 1e-12 * np.maximum(norms[:-1], 1e-300)).any():
            raise ValueError("residual norms must be non-increasing")
        if self.curves and len(self.curves) != len(self.modes):
            raise ValueError("need one scan curve per mode")
        norms.setflags(write=False)
        object.__setattr__(self, "residual_norms", norms)

    @property
    def n_modes(self) -> int:
        return len(self.modes)


def evaluate_observable(
    grid: TrajectoryGrid,
    q_fn: Callable[[np.ndarray], np.ndarray],
    s_params: np.ndarray | None = None,
) -> ObservableGrid:
    """Sample a scalar state function over every grid point.

    ``q_fn`` must accept a (..., dim) array and return values over the
    leading axes.  ``s_params`` defaults to uniform parameters in [0, 1].
    """
    values = np.asarray(q_fn(grid.points))
    if values.shape != (grid.n_rows, grid.n_samples):
        raise ValueError(
            f"observable returned shape {values.shape}, expected "
            f"({grid.n_rows}, {grid.n_samples})"
        )
    if not np.isfinite(values).all():
        raise ValueError("observable evaluated to non-finite values on the grid")
    if s_params is None:
        s_params = np.linspace(0.0, 1.0, grid.n_rows)
    return ObservableGrid(values, grid.times.copy(), s_params)


def exponential_profile(lam: complex, times: np.ndarray) -> np.ndarray:
    """The time profile [exp(lam r_0), ..., exp(lam r_m)]; entry 0 is 1."""
    times = np.asarray(times, dtype=float)
    reach = abs(complex(lam).real) * float(np.max(np.abs(times)))
    if reach > _OVERFLOW_EXPONENT:
        raise LambdaOverflowError(complex(lam), reach)
    return np.exp(complex(lam) * times)


def grid_to_stacked(values: np.ndarray) -> np.ndarray:
    """Stack an (n, m+1) grid into the (m+1)*n working vector, row index
    fastest, one time block after another."""
    return np.asarray(values).flatten(order="F")


def stacked_to_grid(stacked: np.ndarray, n_rows: int) -> np.ndarray:
    """Inverse of :func:`grid_to_stacked`."""
    stacked = np.asarray(stacked)
    if stacked.size % n_rows:
        raise ValueError(f"vector of size {stacked.size} does not split into {n_rows} rows")
    return stacked.reshape((n_rows, stacked.size // n_rows), order="F")


def solve_initial_data(
    lam: complex, values: np.ndarray, times: np.ndarray
) -> tuple[np.ndarray, float]:
    """Best initial data h for a fixed eigenvalue, with its residual norm.

    Solves min_h || exp(lam r_j) h_i - q_ij || over the whole grid using
    the row-decoupled closed form; the returned error is the 2-norm of
    the actual residual grid (not a normal-equations shortcut, so exact
    fits report errors at roundoff scale).
    """
    values = np.asarray(values)
    profile = exponential_profile(lam, times)
    weight = float(np.sum(profile.real**2 + profile.imag**2))
    if weight <= 0.0:  # unreachable for finite lam: the r_0 = 0 entry is 1
        raise ZeroDivisionError("degenerate time profile")
    h = (values @ np.conj(profile)) / weight
    residual = values - np.outer(h, profile)
    return h, float(np.linalg.norm(residual))


def _scan(
    values: np.ndarray,
    times: np.ndarray,
    grid: LambdaGrid,
    refine: bool,
) -> tuple[EigenPair, LambdaScanCurve]:
    lams = grid.candidates
    errors = np.full(lams.shape, np.inf)
    rejected = np.zeros(lams.shape, dtype=bool)
    best_h: np.ndarray | None = None
    best_idx = -1
    for k, lam in enumerate(lams):
        try:
            h, err = solve_initial_data(lam, values, times)
        except LambdaOverflowError:
            rejected[k] = True
            continue
        errors[k] = err
        # strict < keeps the first candidate on ties
        if best_idx < 0 or err < errors[best_idx]:
            best_idx = k
            best_h = h
    if best_idx < 0:
        raise LambdaScanError("every candidate eigenvalue was rejected by the overflow guard")

    best_lam = complex(lams[best_idx])
    best_err = float(errors[best_idx])
    if refine and grid.is_real and 0 < best_idx < len(lams) - 1:
        if not (rejected[best_idx - 1] or rejected[best_idx + 1]):
            lo = float(lams[best_idx - 1].real)
            hi = float(lams[best_idx + 1].real)
            lam_r, err_r, h_r = _golden_section(values, times, lo, hi)
            if err_r < best_err:
                best_lam, best_err, best_h = complex(lam_r), err_r, h_r

    psi = np.outer(best_h, exponential_profile(best_lam, times))
    pair = EigenPair(best_lam, np.asarray(best_h, dtype=complex), psi, best_err)
    curve = LambdaScanCurve(lams.copy(), errors, rejected)
    return pair, curve


def _golden_section(
    values: np.ndarray, times: np.ndarray, lo: float, hi: float, iters: int = 40
) -> tuple[float, float, np.ndarray]:
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = solve_initial_data(c, values, times)[1]
    fd = solve_initial_data(d, values, times)[1]
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = solve_initial_data(c, values, times)[1]
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = solve_initial_data(d, values, times)[1]
    x = c if fc < fd else d
    h, err = solve_initial_data(x, values, times)
    return float(x), err, h


def scan_lambda(
    grid: ObservableGrid, lambdas: LambdaGrid, refine: bool = False
) -> tuple[EigenPair, LambdaScanCurve]:
    """Fit every candidate eigenvalue and keep the best one.

    Ties keep the earliest candidate in grid order.  With ``refine`` a
    golden-section pass narrows the bracket around the coarse argmin
    (real grids only); the reported curve stays the coarse grid.
    """
    return _scan(grid.values, grid.times, lambdas, refine)


def greedy_decompose(
    grid: ObservableGrid,
    lambdas: LambdaGrid,
    n_modes: int,
    refine: bool = False,
    observable_name: str = "",
) -> ModeDecomposition:
    """Extract ``n_modes`` eigenpairs by repeated scan-and-subtract.

    Mode 1 fits the data itself; mode k+1 fits whatever the first k modes
    left behind.  The zero vector is always an admissible fit, so the
    residual ladder cannot increase.
    """
    if n_modes < 1:
        raise ValueError(f"need at least one mode, got {n_modes}")
    stacked = grid_to_stacked(grid.values).astype(complex)
    norms = [float(np.linalg.norm(stacked))]
    modes: list[EigenPair] = []
    curves: list[LambdaScanCurve] = []
    for _ in range(n_modes):
        residual_grid = stacked_to_grid(stacked, grid.n_rows)
        pair, curve = _scan(residual_grid, grid.times, lambdas, refine)
        stacked = stacked - grid_to_stacked(pair.psi)
        norms.append(float(np.linalg.norm(stacked)))
        modes.append(pair)
        curves.append(curve)
    return ModeDecomposition(
        modes=tuple(modes),
        residual_norms=np.asarray(norms),
        times=grid.times.copy(),
        s_params=grid.s_params.copy(),
        curves=tuple(curves),
        observable_name=observable_name,
    )


def reconstruct(decomp: ModeDecomposition) -> np.ndarray:
    """Entrywise sum of the mode grids; its distance to the original data
    equals the last residual norm."""
    if not decomp.modes:
        raise ValueError("decomposition has no modes")
    total = np.zeros_like(decomp.modes[0].psi)
    for mode in decomp.modes:
        total = total + mode.psi
    return total
