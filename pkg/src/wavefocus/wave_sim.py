"""Self-adjoint spatial discretization, leapfrog stepping, and the measurement oracle.

The semi-discrete Neumann problem reads ``M u'' + S u = -B f`` with ``M``
the diagonal volume weights, ``S`` a symmetric flux-form stiffness (plus
``diag(q dV)``), and ``B`` injecting boundary data with the boundary
weights.  Leapfrog with a half-weight first source sample and zero history
gives the discrete trace ``(Lambda f)^n = u^n`` on the boundary for
``n = 0, ..., 2N``.  With trapezoid time weights this discrete map
satisfies ``Lambda* = R Lambda R`` exactly.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .domain import Grid
from .signals import BoundarySignal, SignalLattice

DEFAULT_CFL = 0.95
DEFAULT_MEMORY_BUDGET = 1 << 30


class CFLError(ValueError):
    """Raised when the time step exceeds the leapfrog stability limit."""

    def __init__(self, dt: float, dt_max: float):
        self.suggested_dt = DEFAULT_CFL * dt_max
        super().__init__(
            f"dt={dt:.6g} exceeds the stability limit {dt_max:.6g}; "
            f"suggested dt={self.suggested_dt:.6g}"
        )


class ResourceBudgetError(RuntimeError):
    """Raised when a cached operator would exceed the memory budget."""


@dataclass(frozen=True, eq=False)
class DiscreteElliptic:
    """``A = M^{-1} (S + diag(q dV))`` with symmetric ``S`` and diagonal ``M``."""

    stiffness: sp.csr_matrix
    dv: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.stiffness @ v
        return out / (self.dv if out.ndim == 1 else self.dv[:, None])

    def form(self, v: np.ndarray, w: np.ndarray) -> float:
        """``<A v, w>_dV``, symmetric in its arguments by construction."""
        return float(v @ (self.stiffness @ w))

    def spectral_bound(self) -> float:
        """Gershgorin bound on the largest eigenvalue of ``A``."""
        row = np.asarray(abs(self.stiffness).sum(axis=1)).ravel()
        return float(np.max(row / self.dv))

    def stable_dt(self) -> float:
        """Leapfrog stability limit ``2 / sqrt(lambda_max)`` from the Gershgorin bound."""
        return 2.0 / np.sqrt(self.spectral_bound())


def _face_pairs(grid: Grid):
    """Adjacent node pairs with their face conductances."""
    shape = grid.shape
    idx = np.arange(grid.n_nodes).reshape(shape)
    flux_coef = grid.density * grid.speed ** (2 - grid.dim)
    rows, cols, vals = [], [], []
    for axis in range(grid.dim):
        lo = np.take(idx, np.arange(shape[axis] - 1), axis=axis)
        hi = np.take(idx, np.arange(1, shape[axis]), axis=axis)
        lo, hi = lo.ravel(), hi.ravel()
        coef = 0.5 * (flux_coef[lo] + flux_coef[hi]) / grid.spacing[axis]
        # Face area: product of the transverse dual-cell widths.
        for other in range(grid.dim):
            if other == axis:
                continue
            pos = np.unravel_index(lo, shape)[other]
            width = np.full(lo.shape, grid.spacing[other])
            width[(pos == 0) | (pos == shape[other] - 1)] *= 0.5
            coef = coef * width
        rows.append(lo)
        cols.append(hi)
        vals.append(coef)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def assemble_operator(grid: Grid) -> DiscreteElliptic:
    """Flux-form discretization of ``A``, exactly self-adjoint in the ``dV`` pairing."""
    lo, hi, coef = _face_pairs(grid)
    n = grid.n_nodes
    off = sp.coo_matrix((-coef, (lo, hi)), shape=(n, n))
    diag = np.zeros(n)
    np.add.at(diag, lo, coef)
    np.add.at(diag, hi, coef)
    diag += grid.potential * grid.dv
    stiffness = (off + off.T + sp.diags(diag)).tocsr()
    stiffness.sort_indices()
    return DiscreteElliptic(stiffness=stiffness, dv=np.asarray(grid.dv))


def make_lattice(
    grid: Grid, horizon: float, *, cfl: float = DEFAULT_CFL, dt: float | None = None
) -> SignalLattice:
    """Time lattice over ``[0, 2 * horizon]`` with ``horizon`` an exact multiple of ``dt``.

    ``dt`` defaults to ``cfl`` times the stability limit of the assembled
    operator, rounded down so that it divides the horizon.  For constant
    speed this is ``cfl * h / c`` in 1D and ``cfl * h / (c * sqrt(2))`` on a
    square 2D grid.
    """
    op = assemble_operator(grid)
    dt_max = op.stable_dt()
    target = cfl * dt_max if dt is None else dt
    if target > dt_max * (1 + 1e-12):
        raise CFLError(target, dt_max)
    steps = int(np.ceil(horizon / target - 1e-9))
    return SignalLattice(
        points=grid.boundary_points, ds=grid.ds, dt=horizon / steps, half_steps=steps
    )


@dataclass(frozen=True, eq=False)
class InteriorState:
    """Displacement and velocity per node at a lattice time."""

    u: np.ndarray
    ut: np.ndarray
    time: float
    dv: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.dv * self.u**2)))

    def velocity_norm(self) -> float:
        return float(np.sqrt(np.sum(self.dv * self.ut**2)))

    def l1_norm(self) -> float:
        return float(np.sum(self.dv * np.abs(self.u)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded displacement snapshots."""

    times: np.ndarray
    snapshots: np.ndarray


class WaveSolver:
    """Leapfrog solver for the Neumann problem on a fixed lattice.

    This handle sees the interior coefficients and is meant for verification.
    Control algorithms receive a :class:`MeasurementOracle` instead.
    """

    def __init__(self, grid: Grid, lattice: SignalLattice):
        if lattice.n_boundary != grid.n_boundary or not np.array_equal(lattice.ds, grid.ds):
            raise ValueError("lattice does not match the grid boundary")
        self.grid = grid
        self.lattice = lattice
        self.operator = assemble_operator(grid)
        dt_max = self.operator.stable_dt()
        if lattice.dt > dt_max * (1 + 1e-12):
            raise CFLError(lattice.dt, dt_max)

    @property
    def dv(self) -> np.ndarray:
        return self.operator.dv

    def _source_values(self, f) -> np.ndarray:
        if isinstance(f, BoundarySignal):
            self.lattice.require(f.lattice)
            return f.values
        values = np.asarray(f, dtype=float)
        if values.shape[:2] != self.lattice.shape:
            raise ValueError("source array does not match the lattice")
        return values

    def march(self, f, n_end: int, *, trace: bool = False, record_every: int | None = None):
        """Advance to level ``n_end`` and one step beyond.

        ``f`` may carry a trailing batch axis.  Returns the levels
        ``(u^{n_end-1}, u^{n_end}, u^{n_end+1})``, the boundary trace for
        levels ``0..n_end`` when requested, and snapshots every
        ``record_every`` levels.
        """
        values = self._source_values(f)
        batch = values.shape[2:]
        if not 0 <= n_end <= self.lattice.n_times - 1:
            raise ValueError("n_end outside the lattice")
        dt2 = self.lattice.dt**2
        stiff = self.operator.stiffness
        inv_dv = 1.0 / self.operator.dv
        if batch:
            inv_dv = inv_dv[:, None]
        bidx = self.grid.boundary
        src_scale = (self.grid.ds / self.grid.dv[bidx]).reshape((-1,) + (1,) * len(batch))

        u_prev = np.zeros((self.grid.n_nodes,) + batch)
        u = np.zeros_like(u_prev)
        out_trace = np.zeros((self.grid.n_boundary, n_end + 1) + batch) if trace else None
        snaps, snap_t = [], []
        for n in range(n_end + 1):
            if out_trace is not None:
                out_trace[:, n] = u[bidx]
            if record_every and n % record_every == 0:
                snaps.append(u.copy())
                snap_t.append(n * self.lattice.dt)
            accel = (stiff @ u) * inv_dv
            weight = 0.5 if n == 0 else 1.0
            accel[bidx] += weight * src_scale * values[:, n]
            u_next = 2.0 * u - u_prev - dt2 * accel
            if n < n_end:
                u_prev, u = u, u_next
        traj = Trajectory(np.array(snap_t), np.array(snaps)) if record_every else None
        return (u_prev, u, u_next), out_trace, traj

    def state(self, f, t_end: float | None = None, velocity: str = "centered") -> InteriorState:
        """Interior state at a lattice time (default ``T``).

        ``velocity="centered"`` uses ``(u^{n+1} - u^{n-1}) / 2dt``;
        ``"backward"`` uses ``(u^n - u^{n-1}) / dt``.
        """
        n_end = self._level(t_end)
        (u_prev, u, u_next), _, _ = self.march(f, n_end)
        dt = self.lattice.dt
        if velocity == "centered":
            ut = (u_next - u_prev) / (2 * dt)
        elif velocity == "backward":
            ut = (u - u_prev) / dt
        else:
            raise ValueError(f"unknown velocity rule {velocity!r}")
        return InteriorState(u=u, ut=ut, time=n_end * dt, dv=self.dv)

    def trace(self, f) -> np.ndarray:
        _, tr, _ = self.march(f, self.lattice.n_times - 1, trace=True)
        return tr

    def _level(self, t_end: float | None) -> int:
        if t_end is None:
            return self.lattice.half_steps
        n = int(round(t_end / self.lattice.dt))
        if abs(n * self.lattice.dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
            raise ValueError("t_end is not a lattice time")
        return n

    def energy(self, u_prev: np.ndarray, u: np.ndarray) -> float:
        """Conserved leapfrog energy between two adjacent levels."""
        dt = self.lattice.dt
        vel = (u - u_prev) / dt
        return 0.5 * (float(np.sum(self.dv * vel**2)) + self.operator.form(u, u_prev))


def solve_wave(
    grid: Grid, f: BoundarySignal, t_end: float, *, record_every: int | None = None
) -> tuple[InteriorState, Trajectory | None]:
    """Leapfrog solution with zero initial data, reported at ``t_end``."""
    solver = WaveSolver(grid, f.lattice)
    n_end = solver._level(t_end)
    (u_prev, u, u_next), _, traj = solver.march(f, n_end, record_every=record_every)
    ut = (u_next - u_prev) / (2 * f.lattice.dt)
    return InteriorState(u=u, ut=ut, time=n_end * f.lattice.dt, dv=solver.dv), traj


class _OnTheFlyBackend:
    name = "on_the_fly"

    def __init__(self, solver: WaveSolver):
        self._solver = solver

    def respond(self, values: np.ndarray) -> np.ndarray:
        return self._solver.trace(values)


class _ToeplitzBackend:
    """Cached boundary-to-boundary impulse responses applied by FFT convolution.

    The discrete map is time-invariant apart from the half-weight first
    sample, so one impulse response per boundary node determines it fully.
    """

    name = "cached"

    def __init__(self, solver: WaveSolver, memory_budget: int):
        lat = solver.lattice
        nb, nt = lat.shape
        self._n_fft = 1 << int(np.ceil(np.log2(2 * nt)))
        n_freq = self._n_fft // 2 + 1
        need = nb * nb * (nt * 8 + n_freq * 16)
        if need > memory_budget:
            raise ResourceBudgetError(
                f"cached oracle needs {need / 2**20:.1f} MiB, budget is {memory_budget / 2**20:.1f} MiB"
            )
        impulses = np.zeros((nb, nt, nb))
        impulses[np.arange(nb), 0, np.arange(nb)] = 1.0
        # Response to a unit full-weight sample is twice that of the half-weight start.
        kernel = 2.0 * solver.trace(impulses)
        self._kernel_hat = np.ascontiguousarray(
            np.transpose(np.fft.rfft(kernel, n=self._n_fft, axis=1), (1, 0, 2))
        )
        self._scale = lat.time_weights / lat.dt
        self._nt = nt

    def respond(self, values: np.ndarray) -> np.ndarray:
        batch = values.ndim == 3
        v = values if batch else values[:, :, None]
        v = v * self._scale[None, :, None]
        v_hat = np.transpose(np.fft.rfft(v, n=self._n_fft, axis=1), (1, 0, 2))
        out_hat = np.matmul(self._kernel_hat, v_hat)
        out = np.fft.irfft(np.transpose(out_hat, (1, 0, 2)), n=self._n_fft, axis=1)[:, : self._nt]
        return out if batch else out[:, :, 0]


class MeasurementOracle:
    """Boundary measurement map with an invocation counter.

    Only the lattice and the response to boundary sources are exposed.  The
    counter is protected by a lock so concurrent applies count exactly.
    """

    def __init__(self, lattice: SignalLattice, backend):
        self.lattice = lattice
        self.__backend = backend
        self.__count = 0
        self.__lock = threading.Lock()

    @property
    def backend(self) -> str:
        return self.__backend.name

    @property
    def count(self) -> int:
        return self.__count

    def _bump(self, n: int) -> None:
        with self.__lock:
            self.__count += n

    def apply(self, f: BoundarySignal) -> BoundarySignal:
        self.lattice.require(f.lattice)
        self._bump(1)
        return BoundarySignal(self.__backend.respond(f.values), self.lattice)

    def apply_many(self, signals: Sequence[BoundarySignal]) -> list[BoundarySignal]:
        """Apply to several signals in one batched sweep; counts one per signal."""
        if not signals:
            return []
        for s in signals:
            self.lattice.require(s.lattice)
        self._bump(len(signals))
        stacked = np.stack([s.values for s in signals], axis=2)
        out = self.__backend.respond(stacked)
        return [BoundarySignal(out[:, :, k], self.lattice) for k in range(len(signals))]

    def view(self) -> "OracleView":
        return OracleView(self)


class OracleView:
    """Counting view of a shared oracle.

    Calls are forwarded to the parent, which keeps its own total; the view
    counts only its own calls, so concurrent runs can each audit theirs.
    """

    def __init__(self, parent: MeasurementOracle):
        self._parent = parent
        self.lattice = parent.lattice
        self._count = 0
        self._lock = threading.Lock()

    @property
    def backend(self) -> str:
        return self._parent.backend

    @property
    def count(self) -> int:
        return self._count

    def _bump(self, n: int) -> None:
        with self._lock:
            self._count += n

    def apply(self, f: BoundarySignal) -> BoundarySignal:
        out = self._parent.apply(f)
        self._bump(1)
        return out

    def apply_many(self, signals: Sequence[BoundarySignal]) -> list[BoundarySignal]:
        out = self._parent.apply_many(signals)
        self._bump(len(signals))
        return out


def build_oracle(
    grid: Grid,
    lattice: SignalLattice,
    mode: str = "on_the_fly",
    *,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> MeasurementOracle:
    """Measurement oracle for ``grid`` on ``lattice``.

    ``mode="cached"`` precomputes one impulse response per boundary node
    (``n_boundary`` leapfrog sweeps batched into one) and stores their
    spectra, ``n_boundary**2 * (n_t * 8 + n_fft * 8)`` bytes in total.
    """
    solver = WaveSolver(grid, lattice)
    if mode == "on_the_fly":
        backend = _OnTheFlyBackend(solver)
    elif mode == "cached":
        backend = _ToeplitzBackend(solver, memory_budget)
    else:
        raise ValueError(f"unknown oracle mode {mode!r}")
    return MeasurementOracle(lattice, backend)


def nd_map(oracle: MeasurementOracle, f: BoundarySignal) -> BoundarySignal:
    """Boundary trace of the wave driven by Neumann data ``f`` over ``[0, 2T]``."""
    return oracle.apply(f)
