"""Focusing sources from pairs of cutoff runs, and their verification.

For a boundary point ``z``, depth ``t_hat`` and lens width ``eps`` two masks
are built: ``B(eps)`` covers the whole boundary for the last
``t_hat - eps`` of ``[0, T]``, and ``B(j, eps)`` adds a neighbourhood
``Gamma_j`` of ``z`` for the last ``t_hat + eps``.  The scaled difference
of the two cutoff sources concentrates its final state near the point at
depth ``t_hat`` below ``z``.

The functions here see the medium only through the oracle.  Verification
helpers take an opaque solver handle and a :class:`FocusTarget` built by
the caller.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundary_ops import BoundaryTimeMask, ControlPair
from .control_iter import (
    ControlOperator,
    IterationConfig,
    estimate_norm_L,
    iterate_cutoff,
    solve_direct,
)
from .signals import BoundarySignal, Oracle, SignalLattice

BATTERY_VERSION = 1


@dataclass(frozen=True, eq=False)
class FocusSpec:
    """Boundary point, depth and the finite schedules standing in for the limits.

    ``gamma_radii`` selects ``Gamma_j`` as the boundary nodes within that
    Euclidean distance of ``z``; ``z`` itself is always included.
    """

    z: int
    t_hat: float
    eps_schedule: tuple[float, ...]
    gamma_radii: tuple[float, ...]
    alpha_schedule: tuple[float, ...]
    source: BoundarySignal

    def __post_init__(self):
        for name in ("eps_schedule", "gamma_radii", "alpha_schedule"):
            values = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise ValueError(f"{name} is empty")
            if any(b >= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be strictly decreasing")
        lat = self.source.lattice
        if not 0 <= self.z < lat.n_boundary:
            raise ValueError("z is not a boundary node index")
        if not all(0 < e < self.t_hat for e in self.eps_schedule):
            raise ValueError("every eps must satisfy 0 < eps < t_hat")
        if not self.t_hat + max(self.eps_schedule) < lat.horizon:
            raise ValueError("t_hat + max eps must stay below the horizon T")
        if not all(0 < a < 1 for a in self.alpha_schedule):
            raise ValueError("alpha values must lie in (0, 1)")

    @property
    def lattice(self) -> SignalLattice:
        return self.source.lattice

    def gamma(self, j: int) -> np.ndarray:
        pts = self.lattice.points
        dist = np.sqrt(np.sum((pts - pts[self.z]) ** 2, axis=1))
        sel = dist <= self.gamma_radii[j] * (1 + 1e-12)
        sel[self.z] = True
        return sel


def build_focus_masks(
    lattice: SignalLattice, t_hat: float, eps: float, gamma: np.ndarray
) -> tuple[BoundaryTimeMask, BoundaryTimeMask]:
    """``B(eps)`` and ``B(j, eps) = B(eps) + Gamma_j x (T - t_hat - eps, T)``."""
    if not 0 < eps < t_hat:
        raise ValueError("eps must satisfy 0 < eps < t_hat")
    if not t_hat + eps < lattice.horizon:
        raise ValueError("t_hat + eps must stay below the horizon T")
    everywhere = np.ones(lattice.n_boundary, dtype=bool)
    small = BoundaryTimeMask.from_rectangles(lattice, [(everywhere, t_hat - eps)])
    large = BoundaryTimeMask.from_rectangles(
        lattice, [(everywhere, t_hat - eps), (np.asarray(gamma, bool), t_hat + eps)]
    )
    return small, large


@dataclass
class FocusResult:
    """Focusing source and the two cutoff runs it was built from."""

    b: BoundarySignal
    pair_small: ControlPair
    pair_large: ControlPair
    report_small: object
    report_large: object
    scale: float

    @property
    def converged(self) -> bool:
        return bool(self.report_small.converged and self.report_large.converged)


def focus_difference(
    oracle: Oracle,
    f: BoundarySignal,
    small: BoundaryTimeMask,
    large: BoundaryTimeMask,
    alpha: float,
    eps: float,
    *,
    config: IterationConfig | None = None,
    solver: str = "neumann",
    diameter: float | None = None,
    cg_tol: float = 1e-10,
) -> FocusResult:
    """Run both cutoff problems with shared settings and scale their difference.

    ``solver="neumann"`` uses :func:`iterate_cutoff` with one ``omega``
    valid for both masks; ``"cg"`` solves the same systems by conjugate
    gradients.
    """
    scale = eps ** (-0.5 * (f.lattice.dim + 1))
    if solver == "neumann":
        config = config or IterationConfig(alpha=alpha)
        if config.alpha != alpha:
            raise ValueError("config alpha differs from the requested alpha")
        if config.norm_estimate is None:
            norms = [
                estimate_norm_L(
                    ControlOperator(oracle, m, sharing="shared", derivative=config.derivative),
                    f.lattice,
                    seed=config.seed,
                ).value
                for m in (small, large)
            ]
            config = dataclasses.replace(config, norm_estimate=max(norms))
        pair_s, rep_s = iterate_cutoff(oracle, f, small, config, diameter=diameter)
        pair_l, rep_l = iterate_cutoff(oracle, f, large, config, diameter=diameter)
        if rep_s.omega != rep_l.omega:
            raise ValueError("the two cutoff runs used different omega")
    elif solver == "cg":
        derivative = config.derivative if config else "causal"
        pair_s, rep_s = solve_direct(oracle, f, small, alpha, tol=cg_tol, derivative=derivative)
        pair_l, rep_l = solve_direct(oracle, f, large, alpha, tol=cg_tol, derivative=derivative)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    b = (pair_l.a - pair_s.a) * scale
    return FocusResult(b, pair_s, pair_l, rep_s, rep_l, scale)


def focus_iterate(
    oracle: Oracle,
    spec: FocusSpec,
    alpha: float,
    j: int,
    eps: float,
    **kwargs,
) -> FocusResult:
    """Focusing source ``eps**(-(m+1)/2) * (a(alpha, j, eps) - a(alpha, eps))``."""
    small, large = build_focus_masks(spec.lattice, spec.t_hat, eps, spec.gamma(j))
    return focus_difference(oracle, spec.source, small, large, alpha, eps, **kwargs)


@dataclass(frozen=True, eq=False)
class FocusTarget:
    """Quantities describing the predicted limit, computed by the caller.

    Attributes
    ----------
    x_hat : ndarray
        Focus point coordinates.
    constant : float
        Lens volume constant at ``x_hat``.
    u_f_at_x : float
        Final displacement of the source wave interpolated at ``x_hat``.
    distance : ndarray
        Travel time from ``x_hat`` to each node.
    points : ndarray
        Node coordinates.
    normal : ndarray
        Inward unit normal at ``z``, used to place the off-centre probe.
    length_scale : float
        Spatial size setting the Gaussian widths and offset.
    """

    x_hat: np.ndarray
    constant: float
    u_f_at_x: float
    distance: np.ndarray
    points: np.ndarray
    normal: np.ndarray
    length_scale: float


def probe_battery(target: FocusTarget) -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Versioned smooth test functions: constant, coordinates, Gaussians on and off the focus.

    Each entry maps an ``(n, m)`` array of points to values.
    """
    sigma = 0.1 * target.length_scale
    off_centre = target.x_hat + 0.2 * target.length_scale * target.normal

    def gauss(centre):
        return lambda p: np.exp(-np.sum((p - centre) ** 2, axis=1) / (2 * sigma**2))

    battery: dict[str, Callable[[np.ndarray], np.ndarray]] = {
        "const": lambda p: np.ones(p.shape[0])
    }
    for k in range(target.points.shape[1]):
        battery[f"coord{k}"] = lambda p, k=k: p[:, k].astype(float)
    battery["gauss_on"] = gauss(target.x_hat)
    battery["gauss_off"] = gauss(off_centre)
    return battery


@dataclass(frozen=True)
class FocusRow:
    alpha: float
    j: int
    eps: float
    phi_id: str
    pairing: float
    target: float
    ratio: float
    mass_fraction: float
    ut_norm: float
    u_norm: float
    l1_norm: float


@dataclass
class FocusReport:
    rows: list[FocusRow] = field(default_factory=list)
    battery_version: int = BATTERY_VERSION

    def select(self, **criteria) -> list[FocusRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in criteria.items())]


def ground_truth_cutoff(solver, f: BoundarySignal, region: np.ndarray):
    """Final state ``(chi_N u^f(T), 0)`` from the verification solver."""
    state = solver.state(f)
    keep = np.asarray(region, dtype=bool)
    return dataclasses.replace(state, u=np.where(keep, state.u, 0.0), ut=np.zeros_like(state.u))


def delta_test(
    solver,
    b: BoundarySignal,
    target: FocusTarget,
    *,
    alpha: float,
    j: int,
    eps: float,
    battery: dict[str, Callable[[np.ndarray], np.ndarray]] | None = None,
) -> list[FocusRow]:
    """Pair the final state of ``b`` with each test function and compare to the limit."""
    state = solver.state(b)
    dv = solver.dv
    battery = battery if battery is not None else probe_battery(target)
    abs_u = np.abs(state.u) * dv
    total = float(abs_u.sum())
    near = target.distance <= 3.0 * eps
    fraction = float(abs_u[near].sum() / total) if total > 0 else 0.0
    rows = []
    for name, phi in battery.items():
        pairing = float(np.sum(dv * state.u * phi(target.points)))
        predicted = target.constant * target.u_f_at_x * float(phi(target.x_hat[None, :])[0])
        ratio = pairing / predicted if predicted != 0 else float("nan")
        rows.append(
            FocusRow(
                alpha=alpha,
                j=j,
                eps=eps,
                phi_id=name,
                pairing=pairing,
                target=predicted,
                ratio=ratio,
                mass_fraction=fraction,
                ut_norm=state.velocity_norm(),
                u_norm=state.norm(),
                l1_norm=state.l1_norm(),
            )
        )
    return rows
