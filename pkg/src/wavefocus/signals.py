"""Boundary-time lattice and sampled boundary signals.

A signal lives on the product of the boundary nodes and the uniform time
samples ``t_n = n * dt`` for ``n = 0, ..., 2N`` covering the window
``[0, 2T]`` with ``T = N * dt``.  Pairings use the boundary weights ``ds``
and trapezoid weights in time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np


class LatticeMismatchError(ValueError):
    """Raised when two signals or masks do not share a lattice."""


@dataclass(frozen=True, eq=False)
class SignalLattice:
    """Boundary node by time sample lattice over ``[0, 2T]``.

    Parameters
    ----------
    points : ndarray, shape (n_boundary, m)
        Coordinates of the boundary nodes, in the grid's enumeration order.
    ds : ndarray, shape (n_boundary,)
        Boundary measure carried by each node.
    dt : float
        Time step.
    half_steps : int
        Number of steps ``N`` in the half window, so ``T = N * dt``.
    """

    points: np.ndarray
    ds: np.ndarray
    dt: float
    half_steps: int

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        ds = np.asarray(self.ds, dtype=float)
        if points.shape[0] != ds.shape[0]:
            raise ValueError("points and ds disagree on the boundary node count")
        if np.any(ds <= 0):
            raise ValueError("boundary weights must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.half_steps) < 1:
            raise ValueError("half_steps must be at least 1")
        points.setflags(write=False)
        ds.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "ds", ds)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "half_steps", int(self.half_steps))

    @property
    def n_boundary(self) -> int:
        return self.ds.shape[0]

    @property
    def n_times(self) -> int:
        return 2 * self.half_steps + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_boundary, self.n_times)

    @property
    def horizon(self) -> float:
        """The half window ``T``."""
        return self.half_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_times) * self.dt

    @property
    def time_weights(self) -> np.ndarray:
        """Trapezoid weights over the full window."""
        w = np.full(self.n_times, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def conforms(self, other: "SignalLattice") -> bool:
        if self is other:
            return True
        return (
            self.dt == other.dt
            and self.half_steps == other.half_steps
            and self.points.shape == other.points.shape
            and np.array_equal(self.ds, other.ds)
            and np.array_equal(self.points, other.points)
        )

    def require(self, other: "SignalLattice") -> None:
        if not self.conforms(other):
            raise LatticeMismatchError("signals live on different lattices")

    def zeros(self) -> "BoundarySignal":
        return BoundarySignal(np.zeros(self.shape), self)

    def signal(self, values) -> "BoundarySignal":
        return BoundarySignal(values, self)

    def from_time_profile(self, profile: np.ndarray, nodes=None) -> "BoundarySignal":
        """Signal equal to ``profile`` on the selected boundary nodes, zero elsewhere."""
        values = np.zeros(self.shape)
        sel = slice(None) if nodes is None else nodes
        values[sel] = np.asarray(profile, dtype=float)
        return BoundarySignal(values, self)

    def pairing(self, x: np.ndarray, y: np.ndarray) -> float:
        """``sum ds_i w_n x_in y_in`` on raw value arrays."""
        return float(np.einsum("i,n,in,in->", self.ds, self.time_weights, x, y))


@dataclass(frozen=True, eq=False)
class BoundarySignal:
    """Values on the boundary-time lattice, shape ``(n_boundary, n_times)``."""

    values: np.ndarray
    lattice: SignalLattice

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.lattice.shape:
            raise LatticeMismatchError(
                f"values have shape {values.shape}, lattice expects {self.lattice.shape}"
            )
        object.__setattr__(self, "values", values)

    def _values_of(self, other: "BoundarySignal") -> np.ndarray:
        self.lattice.require(other.lattice)
        return other.values

    def __add__(self, other):
        return BoundarySignal(self.values + self._values_of(other), self.lattice)

    def __sub__(self, other):
        return BoundarySignal(self.values - self._values_of(other), self.lattice)

    def __neg__(self):
        return BoundarySignal(-self.values, self.lattice)

    def __mul__(self, scalar):
        return BoundarySignal(self.values * float(scalar), self.lattice)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return BoundarySignal(self.values / float(scalar), self.lattice)

    def inner(self, other: "BoundarySignal") -> float:
        return self.lattice.pairing(self.values, self._values_of(other))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def with_values(self, values) -> "BoundarySignal":
        return BoundarySignal(values, self.lattice)


class Oracle(Protocol):
    """What the control path may know about the medium: boundary responses."""

    lattice: SignalLattice

    @property
    def count(self) -> int: ...

    def apply(self, f: BoundarySignal) -> BoundarySignal: ...

    def apply_many(self, signals: Sequence[BoundarySignal]) -> list[BoundarySignal]: ...


def smooth_bump(t: np.ndarray, start: float, stop: float) -> np.ndarray:
    """C-infinity bump supported on ``(start, stop)`` with peak value 1."""
    s = (np.asarray(t, dtype=float) - start) / (stop - start)
    out = np.zeros_like(s)
    inside = (s > 0) & (s < 1)
    si = s[inside]
    out[inside] = np.exp(4.0 - 1.0 / (si * (1.0 - si)))
    return out


def random_smooth_signal(
    lattice: SignalLattice,
    rng: np.random.Generator,
    *,
    n_modes: int = 6,
    support: tuple[float, float] | None = None,
) -> BoundarySignal:
    """Random signal smooth in space and time, times a smooth time window.

    The draw depends only on ``rng`` and ``n_modes``, never on the lattice,
    so the same seed samples the same function at every resolution.  The
    window vanishes to all orders at the support ends.
    """
    t = lattice.times
    start, stop = support if support is not None else (0.0, lattice.horizon * 2.0)
    span = stop - start
    dim = lattice.dim
    k = np.arange(1, n_modes + 1)
    coeffs = rng.standard_normal(n_modes) / k
    phases = rng.uniform(0, 2 * np.pi, n_modes)
    wavevectors = rng.uniform(-1.0, 1.0, (n_modes, dim))
    offsets = rng.uniform(0, 2 * np.pi, n_modes)
    spatial = np.cos(2 * np.pi * lattice.points @ wavevectors.T + offsets)
    temporal = np.cos(np.pi * k[:, None] * (t[None, :] - start) / span + phases[:, None])
    values = (spatial * coeffs) @ temporal
    return BoundarySignal(values * smooth_bump(t, start, stop)[None, :], lattice)
