"""Operator algebra on boundary-time signals: R, J, Q, P, K, time derivatives.

All pairings use the lattice's boundary weights and trapezoid time weights.
Two rules are offered for the integral filter J:

``"lattice"``
    ``(J f)^n = dt * (f^{n+1} + f^{n+3} + ... + f^{2N-1-n})`` for ``n < N``.
    With this rule ``<K f, h> = <u^f(T), u^h(T)>_dV`` holds exactly for the
    leapfrog solution, so the control operator is exactly symmetric and
    non-negative.
``"trapezoid"``
    Half of the trapezoid integral of ``f`` over ``[t, 2T - t]``; second
    order accurate for the continuum filter.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .signals import BoundarySignal, LatticeMismatchError, Oracle, SignalLattice


def time_reverse(f: BoundarySignal) -> BoundarySignal:
    """``(R f)(t) = f(2T - t)`` by index reflection."""
    return f.with_values(f.values[:, ::-1].copy())


def _j_lattice(values: np.ndarray, half_steps: int, dt: float) -> np.ndarray:
    nb, nt = values.shape
    csum = np.zeros((nb, nt + 2))
    for parity in (0, 1):
        csum[:, 2 + parity :: 2] = np.cumsum(values[:, parity::2], axis=1)
    n = np.arange(half_steps)
    out = np.zeros_like(values)
    # csum[:, k + 2] sums the same-parity samples up to index k.
    out[:, :half_steps] = dt * (csum[:, 2 * half_steps - 1 - n + 2] - csum[:, n + 1])
    return out


def _j_trapezoid(values: np.ndarray, half_steps: int, dt: float) -> np.ndarray:
    nb, nt = values.shape
    csum = np.concatenate([np.zeros((nb, 1)), np.cumsum(values, axis=1)], axis=1)
    n = np.arange(half_steps)
    upper = 2 * half_steps - n
    total = csum[:, upper + 1] - csum[:, n] - 0.5 * values[:, n] - 0.5 * values[:, upper]
    out = np.zeros_like(values)
    out[:, :half_steps] = 0.5 * dt * total
    return out


def filter_J(f: BoundarySignal, rule: str = "lattice") -> BoundarySignal:
    """``(J f)(t) = 1/2 * integral of f over [t, 2T - t]`` for ``t < T``, zero after."""
    lat = f.lattice
    if rule == "lattice":
        out = _j_lattice(f.values, lat.half_steps, lat.dt)
    elif rule == "trapezoid":
        out = _j_trapezoid(f.values, lat.half_steps, lat.dt)
    else:
        raise ValueError(f"unknown J rule {rule!r}")
    return f.with_values(out)


@lru_cache(maxsize=8)
def _q_bands(n_times: int, dt: float) -> np.ndarray:
    inv = 1.0 / dt**2
    bands = np.zeros((3, n_times))
    bands[1] = 1.0 + 2.0 * inv
    bands[0, 1:] = -inv
    bands[2, :-1] = -inv
    # Mirrored ghost samples at both ends.
    bands[0, 1] = -2.0 * inv
    bands[2, -2] = -2.0 * inv
    bands.setflags(write=False)
    return bands


@lru_cache(maxsize=4)
def _q_kernel(n_times: int, dt: float, dispersion: str) -> np.ndarray:
    """Green's function of ``1 - d^2/dt^2`` with Neumann ends, times trapezoid weights."""
    steps = n_times - 1
    if dispersion == "lattice":
        kappa = np.arccosh(1.0 + 0.5 * dt**2)
        scale = dt / (np.sinh(kappa) * np.sinh(steps * kappa))
    elif dispersion == "continuum":
        kappa = dt
        scale = 1.0 / np.sinh(steps * dt)
    else:
        raise ValueError(f"unknown dispersion {dispersion!r}")
    n = np.arange(n_times)
    lo = np.minimum.outer(n, n)
    hi = np.maximum.outer(n, n)
    green = scale * np.cosh(kappa * lo) * np.cosh(kappa * (steps - hi))
    w = np.full(n_times, dt)
    w[0] = w[-1] = 0.5 * dt
    kernel = green * w[None, :]
    kernel.setflags(write=False)
    return kernel


def filter_Q(
    a: BoundarySignal, method: str = "tridiagonal", dispersion: str = "lattice"
) -> BoundarySignal:
    """Solve ``(I - D^2) x = a`` per boundary node with Neumann ends in time.

    ``method="kernel"`` integrates against the closed-form Green's function
    instead.  Its ``dispersion="lattice"`` variant uses the lattice
    wavenumber ``arccosh(1 + dt^2/2)`` and reproduces the tridiagonal solve
    to round-off; ``"continuum"`` uses the continuum kernel and agrees to
    ``O(dt^2)``.
    """
    lat = a.lattice
    if method == "tridiagonal":
        out = solve_banded((1, 1), _q_bands(lat.n_times, lat.dt), a.values.T).T
    elif method == "kernel":
        out = a.values @ _q_kernel(lat.n_times, lat.dt, dispersion).T
    else:
        raise ValueError(f"unknown Q method {method!r}")
    return a.with_values(np.ascontiguousarray(out))


def apply_Q_inverse(a: BoundarySignal) -> BoundarySignal:
    """``(I - D^2) a`` with the same mirrored-ghost second difference."""
    v = a.values
    dt2 = a.lattice.dt**2
    lap = np.empty_like(v)
    lap[:, 1:-1] = v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]
    lap[:, 0] = 2 * (v[:, 1] - v[:, 0])
    lap[:, -1] = 2 * (v[:, -2] - v[:, -1])
    return a.with_values(v - lap / dt2)


@dataclass(frozen=True, eq=False)
class BoundaryTimeMask:
    """Indicator on the boundary-time lattice, zero for ``t >= T``."""

    values: np.ndarray
    lattice: SignalLattice

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=bool)
        if vals.shape != self.lattice.shape:
            raise LatticeMismatchError("mask shape does not match the lattice")
        if vals[:, self.lattice.half_steps :].any():
            raise ValueError("mask must vanish for t >= T")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_rectangles(
        cls, lattice: SignalLattice, rectangles: Sequence[tuple[np.ndarray, float]]
    ) -> "BoundaryTimeMask":
        """Union of ``Gamma_j x (T - s_j, T)`` over ``(subset_j, s_j)`` pairs."""
        T = lattice.horizon
        t = lattice.times
        slack = 1e-9 * max(1.0, T)
        values = np.zeros(lattice.shape, dtype=bool)
        for subset, duration in rectangles:
            subset = np.asarray(subset, dtype=bool)
            if subset.shape != (lattice.n_boundary,):
                raise ValueError("boundary subset must have one entry per boundary node")
            if not 0 <= duration <= T:
                raise ValueError("rectangle duration must lie in [0, T]")
            window = (t > T - duration + slack) & (t < T - slack)
            values |= np.outer(subset, window)
        return cls(values, lattice)

    @classmethod
    def full(cls, lattice: SignalLattice) -> "BoundaryTimeMask":
        return cls.from_rectangles(lattice, [(np.ones(lattice.n_boundary, bool), lattice.horizon)])

    def union(self, other: "BoundaryTimeMask") -> "BoundaryTimeMask":
        self.lattice.require(other.lattice)
        return BoundaryTimeMask(self.values | other.values, self.lattice)

    def contains(self, other: "BoundaryTimeMask") -> bool:
        return bool(np.all(self.values >= other.values))

    def measure(self) -> float:
        """Area in the boundary-weight times trapezoid-time measure."""
        return self.lattice.pairing(self.values.astype(float), np.ones(self.lattice.shape))


def restrict_P(mask: BoundaryTimeMask, f: BoundarySignal) -> BoundarySignal:
    """Multiply by the mask indicator."""
    mask.lattice.require(f.lattice)
    return f.with_values(np.where(mask.values, f.values, 0.0))


@lru_cache(maxsize=16)
def _derivative_matrices(n_times: int, dt: float, kind: str):
    n = n_times
    if kind == "centered":
        rows, cols, vals = [], [], []
        for k in range(1, n - 1):
            rows += [k, k]
            cols += [k + 1, k - 1]
            vals += [0.5, -0.5]
        rows += [0, 0, 0, n - 1, n - 1, n - 1]
        cols += [0, 1, 2, n - 1, n - 2, n - 3]
        vals += [-1.5, 2.0, -0.5, 1.5, -2.0, 0.5]
        mat = sp.csr_matrix((np.array(vals) / dt, (rows, cols)), shape=(n, n))
    elif kind == "causal":
        # Backward difference of the signal extended by zero for t < 0, with
        # the half-weight start of the leapfrog source absorbed in row 1.
        main = np.ones(n)
        lower = -np.ones(n - 1)
        lower[0] = -0.5
        mat = sp.diags([main, lower], [0, -1], format="csr") / dt
    else:
        raise ValueError(f"unknown derivative {kind!r}")
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    adjoint = (sp.diags(1.0 / w) @ mat.T @ sp.diags(w)).tocsr()
    return mat, adjoint


def _apply_rows(mat: sp.csr_matrix, f: BoundarySignal) -> BoundarySignal:
    return f.with_values(np.ascontiguousarray((mat @ f.values.T).T))


def time_derivative(f: BoundarySignal) -> BoundarySignal:
    """Centered differences inside, one-sided second order at the two ends."""
    mat, _ = _derivative_matrices(f.lattice.n_times, f.lattice.dt, "centered")
    return _apply_rows(mat, f)


def adjoint_time_derivative(g: BoundarySignal) -> BoundarySignal:
    """Exact adjoint of :func:`time_derivative` in the boundary-time pairing."""
    _, adj = _derivative_matrices(g.lattice.n_times, g.lattice.dt, "centered")
    return _apply_rows(adj, g)


def causal_time_derivative(f: BoundarySignal) -> BoundarySignal:
    """Backward difference of the zero-extended signal.

    The leapfrog solution driven by this derivative equals the backward
    difference in time of the solution driven by ``f``, including the jump
    from zero at ``t = 0``.
    """
    mat, _ = _derivative_matrices(f.lattice.n_times, f.lattice.dt, "causal")
    return _apply_rows(mat, f)


def adjoint_causal_time_derivative(g: BoundarySignal) -> BoundarySignal:
    _, adj = _derivative_matrices(g.lattice.n_times, g.lattice.dt, "causal")
    return _apply_rows(adj, g)


DERIVATIVES = {
    "causal": (causal_time_derivative, adjoint_causal_time_derivative),
    "centered": (time_derivative, adjoint_time_derivative),
}


def connecting_K_many(
    oracle: Oracle, signals: Sequence[BoundarySignal], rule: str = "lattice"
) -> list[BoundarySignal]:
    """``K = R Lambda R J - J Lambda`` for several signals, two oracle calls each."""
    if not signals:
        return []
    n = len(signals)
    first = [time_reverse(filter_J(f, rule)) for f in signals]
    responses = oracle.apply_many(first + list(signals))
    return [
        time_reverse(responses[k]) - filter_J(responses[n + k], rule) for k in range(n)
    ]


def connecting_K(oracle: Oracle, f: BoundarySignal, rule: str = "lattice") -> BoundarySignal:
    """Connecting operator; ``<K f, h>`` measures ``<u^f(T), u^h(T)>_dV``."""
    return connecting_K_many(oracle, [f], rule)[0]


def boundary_inner(f: BoundarySignal, g: BoundarySignal) -> float:
    return f.inner(g)


def y_inner(a1: BoundarySignal, a2: BoundarySignal) -> float:
    """``<a1, a2> + <delta a1, delta a2>`` with forward differences over each step.

    This is exactly ``<(I - D^2) a1, a2>``, so ``Q`` is the Riesz map of
    this inner product.
    """
    lat = a1.lattice
    lat.require(a2.lattice)
    d1 = np.diff(a1.values, axis=1)
    d2 = np.diff(a2.values, axis=1)
    seminorm = float(np.einsum("i,in,in->", lat.ds, d1, d2)) / lat.dt
    return a1.inner(a2) + seminorm


@dataclass(frozen=True, eq=False)
class ControlPair:
    """Element ``(h, a)`` of the product space with the X inner product."""

    h: BoundarySignal
    a: BoundarySignal

    def __post_init__(self):
        self.h.lattice.require(self.a.lattice)

    @classmethod
    def zeros(cls, lattice: SignalLattice) -> "ControlPair":
        return cls(lattice.zeros(), lattice.zeros())

    @property
    def lattice(self) -> SignalLattice:
        return self.h.lattice

    def __add__(self, other):
        return ControlPair(self.h + other.h, self.a + other.a)

    def __sub__(self, other):
        return ControlPair(self.h - other.h, self.a - other.a)

    def __neg__(self):
        return ControlPair(-self.h, -self.a)

    def __mul__(self, scalar):
        return ControlPair(self.h * scalar, self.a * scalar)

    __rmul__ = __mul__

    def inner(self, other: "ControlPair") -> float:
        return self.h.inner(other.h) + y_inner(self.a, other.a)

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))


def x_inner(p: ControlPair, q: ControlPair) -> float:
    return p.inner(q)
