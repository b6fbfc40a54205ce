"""Experiment pipelines behind the command-line subcommands.

Each ``run_*`` function builds the medium and oracle from a config, runs
the boundary-only algorithm, checks it against the verification solver,
and writes CSV reports and plain-text dumps when an output directory is
given.  Files never contain wall-clock data, so reruns are bitwise equal.
"""

from __future__ import annotations

import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boundary_ops import BoundaryTimeMask, connecting_K
from .config import ExperimentConfig
from .control_iter import IterationConfig, iterate_cutoff, neumann_defects, solve_direct
from .domain import (
    CoarseGridError,
    Grid,
    NonAdmissibleError,
    build_grid,
    c_hat,
    diameter,
    domain_of_influence,
    normal_point,
    travel_time,
)
from .focusing import FocusRow, FocusSpec, FocusTarget, delta_test, focus_iterate
from .signals import BoundarySignal, random_smooth_signal, smooth_bump
from .storage import (
    atomic_write_text,
    csv_config_hash,
    write_csv,
    write_node_dump,
    write_signal,
)
from .wave_sim import (
    MeasurementOracle,
    ResourceBudgetError,
    WaveSolver,
    build_oracle,
    make_lattice,
)

log = logging.getLogger(__name__)


@dataclass
class Setup:
    """Everything derived from a config at one resolution."""

    config: ExperimentConfig
    grid: Grid
    diameter: float
    oracle: MeasurementOracle
    solver: WaveSolver
    source: BoundarySignal

    @property
    def lattice(self):
        return self.oracle.lattice


def build_setup(
    config: ExperimentConfig, resolution_scale: int = 1, oracle_mode: str | None = None
) -> Setup:
    grid = build_grid(config.medium.to_spec(resolution_scale))
    diam = diameter(grid)
    lattice = make_lattice(grid, config.horizon_diam * diam, cfl=config.cfl)
    oracle = build_oracle(
        grid,
        lattice,
        oracle_mode or config.oracle,
        memory_budget=config.memory_budget_mib * 2**20,
    )
    src = config.source
    T = lattice.horizon
    profile = src.amplitude * smooth_bump(lattice.times, src.start * T, src.stop * T)
    nodes = list(src.boundary_nodes) or None
    source = lattice.from_time_profile(profile, nodes)
    return Setup(config, grid, diam, oracle, WaveSolver(grid, lattice), source)


def iteration_config(config: ExperimentConfig, alpha: float) -> IterationConfig:
    it = config.iteration
    return IterationConfig(
        alpha=alpha,
        omega_rule=it.omega_rule,
        kappa=it.kappa,
        tol=it.tol,
        residual_tol=it.residual_tol,
        max_iter=it.max_iter,
        sharing=it.sharing,
        derivative=it.derivative,
        seed=config.seed,
    )


# Identity checks -------------------------------------------------------------

BLAGO_COLUMNS = (
    "resolution_scale",
    "sample",
    "kind",
    "rule",
    "boundary_pairing",
    "interior_pairing",
    "rel_error",
)


@dataclass
class BlagoResult:
    rows: list[tuple]
    median_error: dict[int, float]
    lattice_max_error: float

    @property
    def ratio(self) -> float:
        coarse, fine = sorted(self.median_error)
        return self.median_error[coarse] / self.median_error[fine]

    @property
    def order(self) -> float:
        coarse, fine = sorted(self.median_error)
        return float(np.log(self.ratio) / np.log(fine / coarse))


def _relative_gap(a: float, b: float, scale: float) -> float:
    return abs(a - b) / (scale + 1e-300)


def _ratio(num: float, den: float) -> float:
    """``num / den`` with ``0 / 0 = 0``, for reports on vanishing sources."""
    if den > 0:
        return num / den
    return 0.0 if num == 0 else float("inf")


def run_blago_check(
    config: ExperimentConfig, out_dir: str | Path | None = None, resolution_scale: int = 1
) -> BlagoResult:
    """Boundary pairing ``<K f, h>`` against the solver's interior pairing at two resolutions.

    The trapezoid rule for J measures discretization error and its decay
    under refinement; the lattice rule is exact up to round-off.
    """
    rows = []
    medians = {}
    lattice_max = 0.0
    for scale in (resolution_scale, resolution_scale * config.blago.refinement):
        setup = build_setup(config, scale)
        lat = setup.lattice
        errors = []
        for k in range(config.blago.samples):
            rng = np.random.default_rng([config.seed, k])
            f = random_smooth_signal(lat, rng)
            h = random_smooth_signal(lat, rng)
            uf = setup.solver.state(f).u
            uh = setup.solver.state(h).u
            interior = setup.grid.inner(uf, uh)
            norm_scale = setup.grid.l2_norm(uf) * setup.grid.l2_norm(uh)
            for rule in ("trapezoid", "lattice"):
                boundary = connecting_K(setup.oracle, f, rule).inner(h)
                err = _relative_gap(boundary, interior, norm_scale)
                rows.append((scale, k, "random", rule, boundary, interior, err))
                if rule == "trapezoid":
                    errors.append(err)
                else:
                    lattice_max = max(lattice_max, err)
            self_pair = connecting_K(setup.oracle, f, "lattice").inner(f)
            energy = setup.grid.inner(uf, uf)
            rows.append(
                (scale, k, "self", "lattice", self_pair, energy, _relative_gap(self_pair, energy, energy))
            )
        zero = lat.zeros()
        kz = connecting_K(setup.oracle, zero, "lattice").inner(zero)
        rows.append((scale, -1, "zero", "lattice", kz, 0.0, abs(kz)))
        medians[scale] = float(np.median(errors))
    result = BlagoResult(rows, medians, lattice_max)
    if out_dir is not None:
        write_csv(Path(out_dir) / "blago.csv", BLAGO_COLUMNS, rows, config.config_hash())
    return result


# Cutoff ------------------------------------------------------------------------

CUTOFF_COLUMNS = (
    "alpha",
    "solver",
    "iterations",
    "converged",
    "final_residual",
    "contraction_ratio",
    "contraction_bound",
    "omega",
    "rel_error",
    "velocity_centered",
    "velocity_backward",
    "h_support_ok",
    "neumann_start",
    "neumann_end",
    "oracle_calls",
)
ITERATION_COLUMNS = ("iteration", "x_change", "ratio", "residual", "oracle_count")


@dataclass
class CutoffRow:
    alpha: float
    solver: str
    iterations: int
    converged: bool
    final_residual: float
    contraction_ratio: float
    contraction_bound: float
    omega: float
    rel_error: float
    velocity_centered: float
    velocity_backward: float
    h_support_ok: bool
    neumann_start: float
    neumann_end: float
    oracle_calls: int

    def as_tuple(self):
        return tuple(getattr(self, c) for c in CUTOFF_COLUMNS)


def cutoff_mask(setup: Setup) -> tuple[BoundaryTimeMask, np.ndarray]:
    """Boundary-time mask of the cutoff run and the matching interior region."""
    cfg = setup.config.cutoff
    subset = np.zeros(setup.lattice.n_boundary, dtype=bool)
    subset[list(cfg.boundary_nodes)] = True
    duration = cfg.duration_diam * setup.diameter
    mask = BoundaryTimeMask.from_rectangles(setup.lattice, [(subset, duration)])
    region = domain_of_influence(setup.grid, subset, duration)
    return mask, region


def _cutoff_point(setup: Setup, alpha: float, out_dir: Path | None, tag: str):
    config = setup.config
    mask, region = cutoff_mask(setup)
    oracle = setup.oracle.view()
    solver_kind = config.cutoff.solver
    if solver_kind == "neumann":
        pair, report = iterate_cutoff(
            oracle, setup.source, mask, iteration_config(config, alpha), diameter=setup.diameter
        )
        iterations, converged = report.iterations, report.converged
        residual, ratio, bound, omega = (
            report.final_residual,
            report.contraction_ratio,
            report.contraction_bound,
            report.omega,
        )
        start, end, support_ok = report.neumann_start, report.neumann_end, report.h_support_ok
    else:
        pair, direct = solve_direct(
            oracle, setup.source, mask, alpha, derivative=config.iteration.derivative
        )
        report = None
        iterations, converged, residual = direct.iterations, direct.converged, direct.residual
        ratio = bound = omega = float("nan")
        start, end = neumann_defects(pair.a)
        support_ok = bool(np.all(pair.h.values[~mask.values] == 0.0))

    state_f = setup.solver.state(setup.source)
    target = np.where(region, state_f.u, 0.0)
    target_norm = setup.grid.l2_norm(target)
    state_a = setup.solver.state(pair.a)
    backward = setup.solver.state(pair.a, velocity="backward")
    row = CutoffRow(
        alpha=alpha,
        solver=solver_kind,
        iterations=iterations,
        converged=converged,
        final_residual=residual,
        contraction_ratio=ratio,
        contraction_bound=bound,
        omega=omega,
        rel_error=_ratio(setup.grid.l2_norm(state_a.u - target), target_norm),
        velocity_centered=_ratio(state_a.velocity_norm() * setup.diameter, state_f.norm()),
        velocity_backward=_ratio(backward.velocity_norm() * setup.diameter, state_f.norm()),
        h_support_ok=support_ok,
        neumann_start=start,
        neumann_end=end,
        oracle_calls=oracle.count,
    )
    if out_dir is not None:
        h = config.config_hash()
        grid = setup.grid
        dump = dict(shape=grid.shape, spacing=grid.spacing)
        write_node_dump(out_dir / f"u_a_{tag}.txt", grid.points, state_a.u, label="u_a", **dump)
        write_node_dump(out_dir / f"target_{tag}.txt", grid.points, target, label="target", **dump)
        write_signal(out_dir / f"h_{tag}.txt", pair.h)
        write_signal(out_dir / f"a_{tag}.txt", pair.a)
        if report is not None:
            changes = np.asarray(report.changes)
            ratios = np.concatenate([[np.nan], changes[1:] / np.where(changes[:-1] > 0, changes[:-1], np.nan)])
            write_csv(
                out_dir / f"iterations_{tag}.csv",
                ITERATION_COLUMNS,
                zip(range(1, len(changes) + 1), changes, ratios, report.residuals, report.oracle_calls),
                h,
            )
    return row, pair


def run_cutoff(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    *,
    setup: Setup | None = None,
    threads: int = 1,
) -> list[CutoffRow]:
    """Cutoff sources over the alpha schedule and their error against ``chi_N u^f(T)``."""
    setup = setup or build_setup(config)
    out = Path(out_dir) if out_dir is not None else None
    alphas = list(config.cutoff.alphas)
    tags = [f"alpha{k}" for k in range(len(alphas))]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda a_t: _cutoff_point(setup, a_t[0], out, a_t[1]), zip(alphas, tags)))
    rows = [r for r, _ in results]
    if out is not None:
        write_csv(out / "cutoff.csv", CUTOFF_COLUMNS, [r.as_tuple() for r in rows], config.config_hash())
    return rows


# Focusing ------------------------------------------------------------------------

FOCUS_COLUMNS = (
    "case",
    "t_hat",
    "alpha",
    "j",
    "eps",
    "phi_id",
    "pairing",
    "target",
    "ratio",
    "mass_fraction",
    "ut_norm",
    "u_norm",
    "l1_norm",
    "converged",
)


@dataclass
class FocusRun:
    rows: list[tuple] = field(default_factory=list)
    constant: float = float("nan")
    constant_uncertainty: float = float("nan")

    def select(self, **criteria) -> list[dict]:
        out = []
        for row in self.rows:
            rec = dict(zip(FOCUS_COLUMNS, row))
            if all(rec[k] == v for k, v in criteria.items()):
                out.append(rec)
        return out

    def l1_ratio(self) -> float:
        """Control-to-admissible L1 norm of the focused state at the smallest eps."""
        adm = self.select(case="admissible", phi_id="const")
        ctl = self.select(case="control", phi_id="const")
        if not adm or not ctl:
            return float("nan")
        eps = min(r["eps"] for r in adm)
        a = [r["l1_norm"] for r in adm if r["eps"] == eps][-1]
        c = [r["l1_norm"] for r in ctl if r["eps"] == eps][-1]
        return c / a


def focus_target(setup: Setup, z: int, t_hat: float) -> FocusTarget:
    grid = setup.grid
    x_hat = normal_point(grid, z, t_hat)
    try:
        constant = c_hat(grid, z, t_hat).value
    except (NonAdmissibleError, CoarseGridError):
        constant = float("nan")
    u_f = setup.solver.state(setup.source).u
    seed = np.zeros(grid.n_nodes, dtype=bool)
    seed[grid.nearest_node(x_hat)] = True
    return FocusTarget(
        x_hat=x_hat,
        constant=constant,
        u_f_at_x=grid.interpolate(u_f, x_hat),
        distance=np.asarray(travel_time(grid, seed).values),
        points=grid.points,
        normal=grid.normals[z],
        length_scale=max(grid.spec.lengths),
    )


def _focus_case(setup: Setup, case: str, t_hat: float, out: Path | None, eps_subset=None) -> list[tuple]:
    config = setup.config
    fc = config.focus
    eps_values = tuple(e * setup.diameter for e in fc.eps_diam)
    if eps_subset is not None:
        eps_values = tuple(eps_values[k] for k in eps_subset)
    spec = FocusSpec(
        z=fc.z,
        t_hat=t_hat,
        eps_schedule=eps_values,
        gamma_radii=fc.gamma_radii,
        alpha_schedule=fc.alphas,
        source=setup.source,
    )
    target = focus_target(setup, fc.z, t_hat)
    rows = []
    for alpha in spec.alpha_schedule:
        for j in range(len(spec.gamma_radii)):
            for eps in spec.eps_schedule:
                result = focus_iterate(
                    setup.oracle.view(),
                    spec,
                    alpha,
                    j,
                    eps,
                    solver=fc.solver,
                    config=iteration_config(config, alpha),
                    diameter=setup.diameter,
                )
                focus_rows: list[FocusRow] = delta_test(
                    setup.solver, result.b, target, alpha=alpha, j=j, eps=eps
                )
                for r in focus_rows:
                    rows.append(
                        (case, t_hat, r.alpha, r.j, r.eps, r.phi_id, r.pairing, r.target, r.ratio,
                         r.mass_fraction, r.ut_norm, r.u_norm, r.l1_norm, result.converged)
                    )
                if out is not None:
                    tag = f"{case}_a{alpha:g}_j{j}_e{eps:.6g}"
                    state = setup.solver.state(result.b)
                    write_node_dump(
                        out / f"u_b_{tag}.txt",
                        setup.grid.points,
                        state.u,
                        shape=setup.grid.shape,
                        spacing=setup.grid.spacing,
                        label="u_b",
                    )
    return rows


def run_focus(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    *,
    setup: Setup | None = None,
    eps_subset=None,
) -> FocusRun:
    """Focusing report over the schedules, plus the non-admissible control when configured."""
    setup = setup or build_setup(config)
    out = Path(out_dir) if out_dir is not None else None
    fc = config.focus
    run = FocusRun()
    t_hat = fc.t_hat_diam * setup.diameter
    try:
        lens = c_hat(setup.grid, fc.z, t_hat)
        run.constant, run.constant_uncertainty = lens.value, lens.uncertainty
    except NonAdmissibleError:
        pass
    except CoarseGridError as exc:
        log.warning("lens constant unavailable, delta-test ratios will be NaN: %s", exc)
    run.rows += _focus_case(setup, "admissible", t_hat, out, eps_subset)
    if fc.control_t_hat_diam > 0:
        run.rows += _focus_case(
            setup, "control", fc.control_t_hat_diam * setup.diameter, out, eps_subset
        )
    if out is not None:
        write_csv(out / "focus.csv", FOCUS_COLUMNS, run.rows, config.config_hash())
    return run


# Sweeps --------------------------------------------------------------------------


def _estimate_output_bytes(setup: Setup, points: int) -> int:
    per_dump = setup.grid.n_nodes * 60
    per_signal = setup.lattice.n_boundary * setup.lattice.n_times * 25
    return points * (4 * per_dump + 2 * per_signal) + (1 << 20)


def run_sweep(
    config: ExperimentConfig,
    out_dir: str | Path,
    axis: str | None = None,
    *,
    threads: int = 1,
    resolution_scale: int = 1,
) -> Path:
    """Run one schedule axis point by point with one shared oracle.

    Each point writes its own CSV; existing point files carrying the same
    config hash are reused, so an interrupted sweep resumes where it
    stopped and reproduces identical files.  The merged ``sweep.csv`` lists
    points in schedule order.
    """
    axis = axis or config.sweep.axis
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # build_setup raises ResourceBudgetError before any work if the cached oracle does not fit.
    setup = build_setup(config, resolution_scale)
    schedule = config.cutoff.alphas if axis == "alpha" else config.focus.eps_diam
    need_disk = _estimate_output_bytes(setup, len(schedule))
    free = shutil.disk_usage(out).free
    if need_disk > free:
        raise ResourceBudgetError(f"sweep needs about {need_disk} bytes, {free} free")

    digest = config.config_hash()
    columns = CUTOFF_COLUMNS if axis == "alpha" else FOCUS_COLUMNS

    def run_point(k: int) -> Path:
        path = out / f"point_{k:03d}.csv"
        if csv_config_hash(path) == digest:
            log.info("reusing %s", path)
            return path
        if axis == "alpha":
            row, _ = _cutoff_point(setup, schedule[k], None, f"alpha{k}")
            rows = [row.as_tuple()]
        else:
            rows = run_focus(config, None, setup=setup, eps_subset=[k]).rows
        return write_csv(path, columns, rows, digest)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        paths = list(pool.map(run_point, range(len(schedule))))

    merged = []
    for k, path in enumerate(paths):
        with open(path) as fh:
            lines = fh.read().splitlines()[2:]
        merged += [f"{k},{line}" for line in lines]
    header = f"# schema=1 config_hash={digest}\npoint," + ",".join(columns) + "\n"
    return atomic_write_text(out / "sweep.csv", header + "\n".join(merged) + "\n")
