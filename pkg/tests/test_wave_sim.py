from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy.integrate import quad

from wavefocus.boundary_ops import time_reverse
from wavefocus.domain import MediumSpec, build_grid, domain_of_influence
from wavefocus.signals import SignalLattice, smooth_bump
from wavefocus.wave_sim import (
    CFLError,
    ResourceBudgetError,
    WaveSolver,
    assemble_operator,
    build_oracle,
    make_lattice,
    nd_map,
    solve_wave,
)

from conftest import Rod, variable_speed


def pulse(t):
    return smooth_bump(t, 0.1, 0.6)


def dalembert(x, t):
    """Pre-reflection solution for a unit-speed rod driven at the left end."""
    upper = max(t - x, 0.0)
    return -quad(lambda s: float(pulse(np.array([s]))[0]), 0.0, upper, limit=200)[0] if upper > 0 else 0.0


# assemble_operator


def test_flat_interior_is_second_difference():
    grid = build_grid(MediumSpec((1.0,), (21,)))
    op = assemble_operator(grid)
    v = np.random.default_rng(0).standard_normal(grid.n_nodes)
    h = grid.spacing[0]
    expected = -(v[:-2] - 2 * v[1:-1] + v[2:]) / h**2
    np.testing.assert_allclose(op.apply(v)[1:-1], expected, rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("shape", [(41,), (9, 13)])
def test_operator_symmetric(shape):
    lengths = (1.0,) * len(shape)
    speed = (lambda *x: 1 + 0.3 * np.sin(sum(x))) if len(shape) == 2 else variable_speed
    grid = build_grid(MediumSpec(lengths, shape, speed=speed, density=lambda *x: 1 + 0.1 * x[0]))
    op = assemble_operator(grid)
    rng = np.random.default_rng(1)
    for _ in range(20):
        v, w = rng.standard_normal((2, grid.n_nodes))
        scale = grid.l2_norm(v) * grid.l2_norm(w)
        assert abs(op.form(v, w) - op.form(w, v)) <= 1e-12 * scale * op.spectral_bound()
        assert op.form(v, v) >= 0


def test_potential_is_diagonal_shift():
    base = assemble_operator(build_grid(MediumSpec((1.0,), (31,), speed=variable_speed)))
    shifted = assemble_operator(build_grid(MediumSpec((1.0,), (31,), speed=variable_speed, potential=3.0)))
    v = np.random.default_rng(2).standard_normal(31)
    np.testing.assert_allclose(shifted.apply(v) - base.apply(v), 3.0 * v, rtol=1e-12)


# solve_wave


def test_zero_source_gives_zero_state(rod):
    state, _ = solve_wave(rod.grid, rod.lattice.zeros(), rod.lattice.horizon)
    assert not state.u.any() and not state.ut.any()


def _rod_error(nodes):
    grid = build_grid(MediumSpec((1.0,), (nodes,)))
    lattice = make_lattice(grid, 1.0)
    profile = pulse(lattice.times)
    f = lattice.from_time_profile(profile, [0])
    t_end = 0.9
    n = int(round(t_end / lattice.dt))
    state, _ = solve_wave(grid, f, n * lattice.dt)
    t = n * lattice.dt
    exact = np.array([dalembert(x, t) for x in grid.points[:, 0]])
    return np.sqrt(np.sum(grid.dv * (state.u - exact) ** 2)), np.sqrt(np.sum(grid.dv * exact**2))


def test_matches_characteristics_with_second_order():
    coarse, scale = _rod_error(101)
    fine, _ = _rod_error(201)
    assert coarse / scale < 1e-2
    assert np.log2(coarse / fine) >= 1.8


def test_energy_conserved_after_source_stops():
    r = Rod(nodes=201, speed=variable_speed)
    f = r.lattice.from_time_profile(smooth_bump(r.lattice.times, 0.0, 0.5))
    solver = r.solver
    n0 = int(np.ceil(0.5 / r.lattice.dt)) + 1
    (u0p, u0, _), _, _ = solver.march(f, n0)
    (u1p, u1, _), _, _ = solver.march(f, n0 + 1000)
    e0, e1 = solver.energy(u0p, u0), solver.energy(u1p, u1)
    assert abs(e1 - e0) <= 1e-6 * e0


def test_cfl_violation_refused_with_suggestion(rod):
    bad = SignalLattice(rod.lattice.points, rod.lattice.ds, rod.lattice.dt * 1.2, 10)
    with pytest.raises(CFLError) as err:
        WaveSolver(rod.grid, bad)
    assert err.value.suggested_dt < bad.dt


def test_velocity_centered_default(rod):
    f = rod.source
    (u_prev, u, u_next), _, _ = rod.solver.march(f, rod.lattice.half_steps)
    state = rod.solver.state(f)
    np.testing.assert_allclose(state.ut, (u_next - u_prev) / (2 * rod.lattice.dt))


# nd_map and oracles


def test_zero_source_zero_trace_counts(rod):
    oracle = build_oracle(rod.grid, rod.lattice, "cached")
    out = nd_map(oracle, rod.lattice.zeros())
    assert not out.values.any() and oracle.count == 1


def test_causality(rod):
    t0 = 1.0
    f = rod.lattice.from_time_profile(smooth_bump(rod.lattice.times, t0, 2.0))
    out = rod.oracle.apply(f)
    early = rod.lattice.times <= t0
    assert np.max(np.abs(out.values[:, early])) <= 1e-14 * np.max(np.abs(out.values))


@pytest.mark.parametrize("fixture", ["rod", "rod_variable"])
def test_adjoint_identity(request, fixture):
    r = request.getfixturevalue(fixture)
    for k in range(3):
        f, g = r.random_signal(2 * k), r.random_signal(2 * k + 1)
        lhs = r.oracle.apply(f).inner(g)
        rhs = f.inner(time_reverse(r.oracle.apply(time_reverse(g))))
        assert abs(lhs - rhs) <= 1e-2 * f.norm() * g.norm()


def test_backends_agree(rod_variable):
    r = rod_variable
    otf = build_oracle(r.grid, r.lattice, "on_the_fly")
    for k in range(5):
        f = r.lattice.signal(np.random.default_rng(k).standard_normal(r.lattice.shape))
        a, b = otf.apply(f).values, r.oracle.apply(f).values
        assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_counter_and_linearity(rod):
    oracle = build_oracle(rod.grid, rod.lattice, "on_the_fly")
    f, g = rod.random_signal(0), rod.random_signal(1)
    lf, lg, l2f = oracle.apply(f), oracle.apply(g), oracle.apply(2.0 * f)
    combo = oracle.apply(f * 3.0 + g * -2.0)
    assert oracle.count == 4
    np.testing.assert_allclose(l2f.values, 2 * lf.values, atol=1e-14 * np.abs(lf.values).max())
    np.testing.assert_allclose(combo.values, 3 * lf.values - 2 * lg.values, atol=1e-12 * np.abs(lf.values).max())
    oracle.apply_many([f, g])
    assert oracle.count == 6


def test_deterministic_and_thread_safe(rod):
    oracle = build_oracle(rod.grid, rod.lattice, "cached")
    signals = [rod.random_signal(k) for k in range(8)]
    sequential = [oracle.apply(s).values for s in signals]
    with ThreadPoolExecutor(4) as pool:
        concurrent = list(pool.map(lambda s: oracle.apply(s).values, signals * 4))
    for k, values in enumerate(concurrent):
        assert np.array_equal(values, sequential[k % 8])
    assert oracle.count == 8 + 32


def test_view_counts_separately(rod):
    oracle = build_oracle(rod.grid, rod.lattice, "cached")
    view = oracle.view()
    view.apply(rod.source)
    view.apply_many([rod.source, rod.source])
    assert view.count == 3 and oracle.count == 3
    oracle.apply(rod.source)
    assert view.count == 3 and oracle.count == 4


def test_lattice_mismatch_rejected(rod):
    other = Rod(nodes=51)
    with pytest.raises(ValueError):
        rod.oracle.apply(other.source)


def test_cached_budget_enforced(rod):
    with pytest.raises(ResourceBudgetError):
        build_oracle(rod.grid, rod.lattice, "cached", memory_budget=1000)


def test_finite_propagation_2d():
    grid = build_grid(MediumSpec((1.0, 1.0), (25, 25)))
    lattice = make_lattice(grid, 1.0)
    gamma = grid.boundary_subset(range(30, 40))
    t_stop = 0.3
    f = lattice.from_time_profile(smooth_bump(lattice.times, 0.0, t_stop), np.flatnonzero(gamma))
    n = int(np.floor(t_stop / lattice.dt))
    state, _ = solve_wave(grid, f, n * lattice.dt)
    reach = domain_of_influence(grid, gamma, n * lattice.dt + 2 * grid.max_spacing)
    assert np.max(np.abs(state.u[~reach])) <= 1e-8 * np.max(np.abs(state.u))
