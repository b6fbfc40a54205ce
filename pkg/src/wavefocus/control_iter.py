"""Regularized cutoff iteration driven only by boundary measurements.

The unknown is a pair ``x = (h, a)``.  The block operator

    L(h, a) = (2 P K P h - P K a,  Q[-K P h + K a + D* K D a])

is symmetric and non-negative in the X inner product, and the cutoff
sources solve ``(alpha + L) x = (P K f, 0)``.  The fixed-point iteration
``x_n = x_0 + S x_{n-1}`` with ``S = (1 - alpha/omega) I - L/omega`` and
``x_0 = (P K f, 0) / omega`` converges for ``omega > 2 (1 + ||L||)``.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundary_ops import (
    DERIVATIVES,
    BoundaryTimeMask,
    ControlPair,
    connecting_K,
    connecting_K_many,
    filter_Q,
    restrict_P,
    y_inner,
)
from .signals import BoundarySignal, Oracle, SignalLattice


class NonConvergenceWarning(RuntimeWarning):
    """Emitted when an iterative estimate stops before meeting its tolerance."""


@dataclass(frozen=True)
class IterationConfig:
    """Parameters of the cutoff iteration.

    Parameters
    ----------
    alpha : float
        Regularization weight in ``(0, 1)``.
    omega_rule : {"norm", "reciprocal"}
        ``omega = kappa * (1 + ||L||)`` or ``omega = 1 / alpha``.
    tol : float
        Stop once the relative X-change of the iterate drops below this.
    residual_tol : float
        ... and the relative normal-equation residual drops below this.
    sharing : {"naive", "shared"}
        Ten or six oracle calls per application of ``L``.
    derivative : {"causal", "centered"}
        Discrete time derivative in the velocity block of ``L``.
    norm_estimate : float, optional
        Upper estimate of ``||L||``; skips power iteration when given.
    """

    alpha: float
    omega_rule: str = "norm"
    kappa: float = 2.2
    tol: float = 1e-6
    residual_tol: float = 1e-5
    max_iter: int = 100_000
    sharing: str = "naive"
    derivative: str = "causal"
    norm_estimate: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.omega_rule not in ("norm", "reciprocal"):
            raise ValueError(f"unknown omega rule {self.omega_rule!r}")
        if self.omega_rule == "norm" and not self.kappa > 2:
            raise ValueError("kappa must exceed 2")
        if self.sharing not in ("naive", "shared"):
            raise ValueError(f"unknown sharing mode {self.sharing!r}")
        if self.derivative not in DERIVATIVES:
            raise ValueError(f"unknown derivative {self.derivative!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    def omega(self, norm_L: float) -> float:
        return self.kappa * (1.0 + norm_L) if self.omega_rule == "norm" else 1.0 / self.alpha


class ControlOperator:
    """The block operator ``L`` for one mask, evaluated through an oracle."""

    def __init__(
        self,
        oracle: Oracle,
        mask: BoundaryTimeMask,
        *,
        sharing: str = "naive",
        derivative: str = "causal",
    ):
        oracle.lattice.require(mask.lattice)
        if sharing not in ("naive", "shared"):
            raise ValueError(f"unknown sharing mode {sharing!r}")
        self.oracle = oracle
        self.mask = mask
        self.sharing = sharing
        self._d, self._d_adj = DERIVATIVES[derivative]

    @property
    def lattice(self) -> SignalLattice:
        return self.mask.lattice

    def P(self, f: BoundarySignal) -> BoundarySignal:
        return restrict_P(self.mask, f)

    def apply(self, pair: ControlPair) -> ControlPair:
        ph = self.P(pair.h)
        da = self._d(pair.a)
        if self.sharing == "shared":
            k_ph, k_a, k_da = connecting_K_many(self.oracle, [ph, pair.a, da])
            k_ph2, k_a2 = k_ph, k_a
        else:
            k_ph, k_a, k_ph2, k_a2, k_da = connecting_K_many(
                self.oracle, [ph, pair.a, ph, pair.a, da]
            )
        h_out = self.P(2.0 * k_ph - k_a)
        a_out = filter_Q(k_a2 - k_ph2 + self._d_adj(k_da))
        return ControlPair(h_out, a_out)

    def rhs(self, f: BoundarySignal) -> ControlPair:
        """``(P K f, 0)``; two oracle calls."""
        return ControlPair(self.P(connecting_K(self.oracle, f)), self.lattice.zeros())


def apply_L(
    oracle: Oracle, mask: BoundaryTimeMask, pair: ControlPair, sharing: str = "naive"
) -> ControlPair:
    return ControlOperator(oracle, mask, sharing=sharing).apply(pair)


@dataclass(frozen=True)
class NormEstimate:
    """Power-iteration estimate of an operator norm.

    ``value`` is the raw estimate times 1.05, an upper-biased figure for
    choosing ``omega``.
    """

    value: float
    raw: float
    iterations: int
    converged: bool


def estimate_norm_L(
    apply: Callable[[ControlPair], ControlPair] | ControlOperator,
    lattice: SignalLattice,
    *,
    seed: int = 0,
    tol: float = 1e-3,
    max_iter: int = 100,
) -> NormEstimate:
    """Power iteration in the X inner product for a symmetric operator.

    The estimate at each step is ``||L v|| / ||v||``; iteration stops once it
    changes by less than ``tol`` relative.
    """
    op = apply.apply if isinstance(apply, ControlOperator) else apply
    rng = np.random.default_rng(seed)
    v = ControlPair(
        lattice.signal(rng.standard_normal(lattice.shape)),
        lattice.signal(rng.standard_normal(lattice.shape)),
    )
    v = v * (1.0 / v.norm())
    estimate = 0.0
    for it in range(1, max_iter + 1):
        w = op(v)
        new = w.norm()
        if new == 0.0:
            return NormEstimate(0.0, 0.0, it, True)
        if abs(new - estimate) <= tol * new:
            return NormEstimate(1.05 * new, new, it, True)
        estimate = new
        v = w * (1.0 / new)
    warnings.warn("norm estimate did not converge", NonConvergenceWarning, stacklevel=2)
    return NormEstimate(1.05 * estimate, estimate, max_iter, False)


@dataclass
class IterationReport:
    """Diagnostics of one cutoff run.

    ``changes`` holds ``||x_n - x_{n-1}||_X`` and ``residuals`` the relative
    residual ``||(alpha + L) x_n - b|| / ||b||``, one entry per iteration.
    """

    alpha: float
    omega: float
    norm_L: float
    changes: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    oracle_calls: list[int] = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    h_support_ok: bool = True
    neumann_start: float = 0.0
    neumann_end: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.changes)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0

    @property
    def ratios(self) -> np.ndarray:
        c = np.asarray(self.changes)
        if c.size < 2:
            return np.zeros(0)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = c[1:] / c[:-1]
        return r[np.isfinite(r)]

    @property
    def contraction_ratio(self) -> float:
        """Largest ratio of successive changes; bounded by ``||S||``."""
        r = self.ratios
        return float(r.max()) if r.size else 0.0

    @property
    def contraction_bound(self) -> float:
        return 1.0 - self.alpha / self.omega

    def tail_slope(self, fraction: float = 0.5) -> float:
        """Least-squares slope of ``log(change)`` over the last part of the run."""
        c = np.asarray(self.changes)
        c = c[c > 0]
        if c.size < 4:
            return float("nan")
        start = int(c.size * (1 - fraction))
        n = np.arange(start, c.size)
        return float(np.polyfit(n, np.log(c[start:]), 1)[0])


def neumann_defects(a: BoundarySignal) -> tuple[float, float]:
    """``max |Da|`` at the two ends, in units of ``dt * ||a||_Y``."""
    size = np.sqrt(max(y_inner(a, a), 0.0))
    if size == 0.0:
        return 0.0, 0.0
    dt = a.lattice.dt
    start = np.abs(a.values[:, 1] - a.values[:, 0]).max() / dt
    end = np.abs(a.values[:, -1] - a.values[:, -2]).max() / dt
    return float(start / (dt * size)), float(end / (dt * size))


def _check_horizon(lattice: SignalLattice, diameter: float | None) -> None:
    if diameter is not None and not lattice.horizon > 2.0 * diameter:
        raise ValueError(
            f"horizon T={lattice.horizon:g} must exceed twice the diameter {diameter:g}"
        )


def iterate_cutoff(
    oracle: Oracle,
    f: BoundarySignal,
    mask: BoundaryTimeMask,
    config: IterationConfig,
    *,
    diameter: float | None = None,
) -> tuple[ControlPair, IterationReport]:
    """Von Neumann iteration for ``(alpha + L) x = (P K f, 0)``.

    Raises
    ------
    ValueError
        If ``omega`` does not exceed ``2 (1 + ||L||)`` or the horizon is too short.
    """
    _check_horizon(f.lattice, diameter)
    started = time.perf_counter()
    op = ControlOperator(oracle, mask, sharing=config.sharing, derivative=config.derivative)
    if config.norm_estimate is None:
        norm_L = estimate_norm_L(op, mask.lattice, seed=config.seed).value
    else:
        norm_L = float(config.norm_estimate)
    omega = config.omega(norm_L)
    if not omega > 2.0 * (1.0 + norm_L):
        raise ValueError(f"omega={omega:g} must exceed 2 (1 + ||L||) = {2 * (1 + norm_L):g}")

    report = IterationReport(alpha=config.alpha, omega=omega, norm_L=norm_L)
    calls0 = oracle.count
    b = op.rhs(f)
    b_norm = b.norm()
    x0 = b * (1.0 / omega)
    x = x0
    shrink = 1.0 - config.alpha / omega
    if b_norm == 0.0:
        report.changes.append(0.0)
        report.residuals.append(0.0)
        report.oracle_calls.append(oracle.count - calls0)
        report.converged = True
        report.wall_time = time.perf_counter() - started
        return x, report

    for _ in range(config.max_iter):
        x_new = x0 + x * shrink - op.apply(x) * (1.0 / omega)
        step = x_new - x
        change = step.norm()
        # (alpha + L) x - b = omega (x - x_new), so the residual is free.
        residual = omega * change / b_norm
        report.changes.append(change)
        report.residuals.append(residual)
        report.oracle_calls.append(oracle.count - calls0)
        x = x_new
        if change <= config.tol * x.norm() and residual <= config.residual_tol:
            report.converged = True
            break

    if not report.converged:
        warnings.warn(
            f"cutoff iteration stopped after {config.max_iter} steps", NonConvergenceWarning, stacklevel=2
        )
    report.wall_time = time.perf_counter() - started
    report.h_support_ok = bool(np.all(x.h.values[~mask.values] == 0.0))
    report.neumann_start, report.neumann_end = neumann_defects(x.a)
    return x, report


@dataclass(frozen=True)
class DirectReport:
    iterations: int
    residual: float
    converged: bool
    oracle_calls: int


def solve_direct(
    oracle: Oracle,
    f: BoundarySignal,
    mask: BoundaryTimeMask,
    alpha: float,
    *,
    tol: float = 1e-10,
    max_iter: int = 5000,
    sharing: str = "shared",
    derivative: str = "causal",
) -> tuple[ControlPair, DirectReport]:
    """Conjugate gradients for ``(alpha + L) x = (P K f, 0)`` in the X inner product."""
    op = ControlOperator(oracle, mask, sharing=sharing, derivative=derivative)
    calls0 = oracle.count
    b = op.rhs(f)
    x = ControlPair.zeros(mask.lattice)
    rr = b.inner(b)
    if rr == 0.0:
        return x, DirectReport(0, 0.0, True, oracle.count - calls0)
    b2 = rr
    r = b
    p = r
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Ap = op.apply(p) + p * alpha
        step = rr / p.inner(Ap)
        x = x + p * step
        r = r - Ap * step
        rr_new = r.inner(r)
        if np.sqrt(rr_new / b2) <= tol:
            rr = rr_new
            converged = True
            break
        p = r + p * (rr_new / rr)
        rr = rr_new
    if not converged:
        warnings.warn("conjugate gradients stagnated", NonConvergenceWarning, stacklevel=2)
    return x, DirectReport(it, float(np.sqrt(rr / b2)), converged, oracle.count - calls0)


def normal_residual(
    oracle: Oracle,
    f: BoundarySignal,
    mask: BoundaryTimeMask,
    alpha: float,
    x: ControlPair,
    derivative: str = "causal",
) -> float:
    """``||(alpha + L) x - (P K f, 0)||_X / ||(P K f, 0)||_X``."""
    op = ControlOperator(oracle, mask, sharing="shared", derivative=derivative)
    b = op.rhs(f)
    r = op.apply(x) + x * alpha - b
    return r.norm() / b.norm() if b.norm() > 0 else r.norm()


def eval_functional_F(
    solver,
    f: BoundarySignal,
    pair: ControlPair,
    alpha: float,
    mask: BoundaryTimeMask,
    derivative: str = "causal",
) -> float:
    """Regularized misfit evaluated from interior states.

    ``||u^f - u^{Ph}||^2 + ||u^{Ph} - u^a||^2 + ||u^{Da}||^2
    + alpha (||h||^2 + ||a||_Y^2)`` at time ``T``, where ``u^{Da}`` is the
    solution driven by the discrete time derivative of ``a``.  With the
    causal derivative it equals the backward-difference velocity of ``u^a``.
    ``solver`` is a verification handle with a ``state`` method and ``dv``.
    """
    d, _ = DERIVATIVES[derivative]
    ph = restrict_P(mask, pair.h)
    u_f = solver.state(f).u
    u_h = solver.state(ph).u
    u_a = solver.state(pair.a).u
    u_da = solver.state(d(pair.a)).u
    dv = solver.dv
    sq = lambda v: float(np.sum(dv * v * v))
    return (
        sq(u_f - u_h)
        + sq(u_h - u_a)
        + sq(u_da)
        + alpha * (pair.h.inner(pair.h) + y_inner(pair.a, pair.a))
    )
