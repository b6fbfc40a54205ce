import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from wavefocus.boundary_ops import (
    BoundaryTimeMask,
    ControlPair,
    adjoint_causal_time_derivative,
    adjoint_time_derivative,
    apply_Q_inverse,
    causal_time_derivative,
    connecting_K,
    filter_J,
    filter_Q,
    restrict_P,
    time_derivative,
    time_reverse,
    x_inner,
    y_inner,
)
from wavefocus.signals import SignalLattice, smooth_bump
from wavefocus.storage import read_signal, write_signal
from wavefocus.wave_sim import build_oracle

from conftest import Rod


@pytest.fixture(scope="module")
def lattice():
    pts = np.array([[0.0], [1.0]])
    return SignalLattice(pts, np.ones(2), 0.01, 100)


def rand(lattice, seed):
    return lattice.signal(np.random.default_rng(seed).standard_normal(lattice.shape))


def profile(lattice, values):
    return lattice.from_time_profile(np.asarray(values, float))


# time_reverse


def test_reverse_involution_and_isometry(lattice):
    f = rand(lattice, 0)
    assert np.array_equal(time_reverse(time_reverse(f)).values, f.values)
    # Equal up to summation order.
    assert time_reverse(f).norm() == pytest.approx(f.norm(), rel=1e-15)


def test_reverse_moves_delta(lattice):
    values = np.zeros(lattice.shape)
    values[1, 30] = 1.0
    out = time_reverse(lattice.signal(values)).values
    assert out[1, lattice.n_times - 1 - 30] == 1.0 and out.sum() == 1.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_reverse_involution_property(lattice, seed):
    f = rand(lattice, seed)
    assert np.array_equal(time_reverse(time_reverse(f)).values, f.values)


# filter_J


@pytest.mark.parametrize("rule", ["lattice", "trapezoid"])
def test_J_of_constant(lattice, rule):
    T, t = lattice.horizon, lattice.times
    out = filter_J(profile(lattice, np.ones(lattice.n_times)), rule).values[0]
    np.testing.assert_allclose(out, np.maximum(T - t, 0.0) * (t < T), atol=2 * lattice.dt)


@pytest.mark.parametrize("rule", ["lattice", "trapezoid"])
def test_J_of_ramp(lattice, rule):
    T, t = lattice.horizon, lattice.times
    out = filter_J(profile(lattice, t), rule).values[0]
    expected = np.where(t < T, T * (T - t), 0.0)
    np.testing.assert_allclose(out, expected, atol=4 * lattice.dt)


def test_J_trapezoid_exact_on_constant(lattice):
    T, t = lattice.horizon, lattice.times
    out = filter_J(profile(lattice, np.ones(lattice.n_times)), "trapezoid").values[0]
    np.testing.assert_allclose(out[: lattice.half_steps], (T - t)[: lattice.half_steps], atol=1e-12)


@pytest.mark.parametrize("rule", ["lattice", "trapezoid"])
def test_J_support(lattice, rule):
    delta = 0.3
    t = lattice.times
    f = profile(lattice, smooth_bump(t, 2 * lattice.horizon - delta, 2 * lattice.horizon))
    out = filter_J(f, rule).values[0]
    assert not out[t >= delta - 1e-12].any()


# filter_Q


def test_Q_preserves_constants(lattice):
    one = profile(lattice, np.ones(lattice.n_times))
    np.testing.assert_allclose(filter_Q(one).values, one.values, rtol=0, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_Q_neumann_eigenfunctions(lattice, n):
    span = 2 * lattice.horizon
    a = profile(lattice, np.cos(np.pi * n * lattice.times / span))
    expected = a.values / (1 + (np.pi * n / span) ** 2)
    err = np.abs(filter_Q(a).values - expected).max()
    assert err <= 10 * lattice.dt**2 * (np.pi * n / span) ** 4
    np.testing.assert_allclose(apply_Q_inverse(filter_Q(a)).values, a.values, atol=1e-10)


def test_Q_backends_agree(lattice):
    a = rand(lattice, 3)
    tri = filter_Q(a).values
    ker = filter_Q(a, method="kernel").values
    assert np.linalg.norm(ker - tri) <= 1e-6 * np.linalg.norm(tri)


def test_Q_positive_and_symmetric(lattice):
    for seed in range(5):
        a, b = rand(lattice, seed), rand(lattice, seed + 10)
        assert filter_Q(a).inner(a) > 0
        assert filter_Q(a).inner(b) == pytest.approx(a.inner(filter_Q(b)), rel=1e-10)


def test_Q_range_has_neumann_ends(lattice):
    a = filter_Q(rand(lattice, 4))
    dt = lattice.dt
    size = np.sqrt(y_inner(a, a))
    assert np.abs(a.values[:, 1] - a.values[:, 0]).max() / dt <= 10 * dt * size * 1e3
    # The first difference at the ends is dt^2 / 2 times the residual value.
    g = apply_Q_inverse(a)
    np.testing.assert_allclose(a.values[:, 1] - a.values[:, 0], 0.5 * dt**2 * (a.values[:, 0] - g.values[:, 0]), atol=1e-12)


# restrict_P and masks


def test_P_projection_and_self_adjoint(lattice):
    subset = np.array([True, False])
    mask = BoundaryTimeMask.from_rectangles(lattice, [(subset, 0.4)])
    f, g = rand(lattice, 5), rand(lattice, 6)
    assert np.array_equal(restrict_P(mask, restrict_P(mask, f)).values, restrict_P(mask, f).values)
    assert restrict_P(mask, f).inner(g) == restrict_P(mask, g).inner(f)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), duration=st.floats(0, 1.0))
def test_P_self_adjoint_property(lattice, seed, duration):
    mask = BoundaryTimeMask.from_rectangles(lattice, [(np.array([True, True]), duration)])
    f, g = rand(lattice, seed), rand(lattice, seed + 1)
    assert restrict_P(mask, f).inner(g) == pytest.approx(f.inner(restrict_P(mask, g)), rel=1e-13, abs=1e-15)
    np.testing.assert_array_equal((mask.values & mask.values), mask.values)


def test_full_mask_is_identity_on_open_half_window(lattice):
    t = lattice.times
    f = profile(lattice, smooth_bump(t, 0.0, lattice.horizon))
    assert np.array_equal(restrict_P(BoundaryTimeMask.full(lattice), f).values, f.values)


def test_mask_window_is_open(lattice):
    mask = BoundaryTimeMask.from_rectangles(lattice, [(np.array([True, False]), 0.3)])
    t = lattice.times[mask.values[0]]
    T = lattice.horizon
    assert t.min() > T - 0.3 and t.max() < T and not mask.values[1].any()


def test_mask_rejects_late_times(lattice):
    values = np.zeros(lattice.shape, dtype=bool)
    values[0, lattice.half_steps] = True
    with pytest.raises(ValueError):
        BoundaryTimeMask(values, lattice)


# time derivatives


def test_derivative_kills_constants(lattice):
    assert np.abs(time_derivative(profile(lattice, np.full(lattice.n_times, 3.0))).values).max() <= 1e-10


def test_causal_derivative_sees_jump_from_zero(lattice):
    out = causal_time_derivative(profile(lattice, np.full(lattice.n_times, 3.0))).values[0]
    assert out[0] == pytest.approx(3.0 / lattice.dt)
    assert np.abs(out[2:]).max() <= 1e-10


def test_causal_derivative_commutes_with_solver():
    r = Rod(nodes=101)
    f = r.random_signal(2)
    dt = r.lattice.dt
    (u_prev, u, _), _, _ = r.solver.march(f, r.lattice.half_steps)
    u_df = r.solver.state(causal_time_derivative(f)).u
    np.testing.assert_allclose(u_df, (u - u_prev) / dt, atol=1e-10 * np.abs(u_df).max())


def test_centered_derivative_exact_on_ramp(lattice):
    out = time_derivative(profile(lattice, lattice.times)).values[0]
    np.testing.assert_allclose(out, 1.0, rtol=1e-10)


def test_causal_derivative_exact_on_ramp(lattice):
    out = causal_time_derivative(profile(lattice, lattice.times)).values[0]
    np.testing.assert_allclose(out[1:], 1.0, rtol=1e-10)


@pytest.mark.parametrize(
    "d, d_adj",
    [(time_derivative, adjoint_time_derivative), (causal_time_derivative, adjoint_causal_time_derivative)],
)
def test_derivative_adjoints(lattice, d, d_adj):
    for seed in range(5):
        f, g = rand(lattice, seed), rand(lattice, seed + 7)
        lhs, rhs = d(f).inner(g), f.inner(d_adj(g))
        assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + f.norm() * g.norm())


# connecting_K


@pytest.fixture(scope="module")
def unit_rod():
    return Rod(nodes=201)


def test_K_two_oracle_calls(unit_rod):
    oracle = build_oracle(unit_rod.grid, unit_rod.lattice, "cached")
    connecting_K(oracle, unit_rod.source)
    assert oracle.count == 2


def test_K_of_late_source_vanishes(unit_rod):
    lat = unit_rod.lattice
    f = lat.from_time_profile(smooth_bump(lat.times, lat.horizon, 2 * lat.horizon))
    assert connecting_K(unit_rod.oracle, f).norm() <= 1e-2 * f.norm()


@pytest.mark.parametrize("rule", ["lattice", "trapezoid"])
def test_K_self_pairing_is_interior_energy(unit_rod, rule):
    f = unit_rod.random_signal(11)
    kf = connecting_K(unit_rod.oracle, f, rule).inner(f)
    energy = unit_rod.grid.l2_norm(unit_rod.solver.state(f).u) ** 2
    assert kf >= -1e-12 * f.norm() ** 2
    assert abs(kf - energy) <= 1e-2 * energy


def test_K_matches_characteristic_pairing(unit_rod):
    lat = unit_rod.lattice
    T = lat.horizon
    start = T - 0.8
    f_t = lambda s: smooth_bump(np.atleast_1d(s), start, T)[0]
    h_t = lambda s: smooth_bump(np.atleast_1d(s), start, T)[0] * np.cos(8 * (s - start))
    f = lat.from_time_profile(smooth_bump(lat.times, start, T), [0])
    h = lat.from_time_profile(smooth_bump(lat.times, start, T) * np.cos(8 * (lat.times - start)), [0])

    def primitive(fun, s):
        return quad(fun, start, s, limit=200)[0] if s > start else 0.0

    # Pre-reflection final states are -F(T - x) with F the time primitive.
    exact = quad(lambda x: primitive(f_t, T - x) * primitive(h_t, T - x), 0.0, 1.0, limit=200)[0]
    measured = connecting_K(unit_rod.oracle, f).inner(h)
    assert abs(measured - exact) <= 1e-2 * abs(exact)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_K_linear(unit_rod, seed, a, b):
    f, g = unit_rod.random_signal(seed), unit_rod.random_signal(seed + 1)
    lhs = connecting_K(unit_rod.oracle, f * a + g * b).values
    rhs = a * connecting_K(unit_rod.oracle, f).values + b * connecting_K(unit_rod.oracle, g).values
    scale = np.abs(connecting_K(unit_rod.oracle, f).values).max() + np.abs(connecting_K(unit_rod.oracle, g).values).max()
    assert np.abs(lhs - rhs).max() <= 1e-11 * scale * (1 + abs(a) + abs(b))


# inner products and serialization


def test_x_inner_is_sum_of_parts(lattice):
    h, a = rand(lattice, 1), rand(lattice, 2)
    pair = ControlPair(h, a)
    assert x_inner(pair, pair) == pytest.approx(h.inner(h) + y_inner(a, a), rel=1e-14)
    assert y_inner(a, a) == pytest.approx(apply_Q_inverse(a).inner(a), rel=1e-10)


def test_signal_round_trip_bit_exact(tmp_path, lattice):
    f = rand(lattice, 9) * np.pi
    path = write_signal(tmp_path / "f.txt", f)
    g = read_signal(path)
    assert np.array_equal(g.values, f.values)
    assert g.lattice.conforms(f.lattice)
    assert read_signal(path, lattice).lattice is lattice
