"""Fixed-point drivers against closed-form nonlinear solutions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from math import cosh, sqrt

from angiosolve import (
    ConfigurationError,
    GridSpec,
    HeatPlan,
    ModelParams,
    ParameterError,
    PhaseField,
    Schedule,
    ShapeError,
    SignError,
    SpatialField,
    advance_c,
    alpha_of_c,
    heat_step,
    integrate_phase,
    picard_coupled,
    picard_pure,
    slab_partition,
)

from conftest import gaussian_phase

SIGMA = 0.05


def _params(**overrides):
    base = dict(sigma=SIGMA, d=0.05, gamma=1.0, eta=1.0, alpha1=0.5,
                c_R=1.0, epsilon=2.5, v0=(1.3,))
    base.update(overrides)
    return ModelParams(**base)


def _flat_in_x(grid, var_v=0.5, centre=1.3):
    """Density constant in x, periodized Gaussian in v with unit marginal."""
    v = grid.v_coords()
    gv = np.zeros_like(v)
    for k in (-1, 0, 1):
        gv += np.exp(-(v - centre - 16.0 * k) ** 2 / (2 * var_v)) \
            / np.sqrt(2 * np.pi * var_v)
    gv /= gv.sum() * grid.h_v
    return PhaseField(grid, np.broadcast_to(gv, grid.phase_shape).copy())


def _c_bump(grid):
    x = grid.x_coords()
    vals = np.zeros_like(x)
    for k in (-1, 0, 1):
        vals += np.exp(-(x - 2.0 - 16.0 * k) ** 2 / 4.0)
    return SpatialField(grid, 1.0 + 0.5 * vals, role="c")


# --------------------------------------------------------------------------
# model parameters and pointwise coupling terms


def test_model_params_validation():
    _params()  # baseline constructs
    for name in ("sigma", "d", "gamma", "eta", "c_R", "epsilon"):
        with pytest.raises(ParameterError):
            _params(**{name: 0.0})
        with pytest.raises(ParameterError):
            _params(**{name: -1.0})
    with pytest.raises(ParameterError):
        _params(alpha1=-0.1)
    _params(alpha1=0.0)  # switching the production off is legal
    with pytest.raises(ParameterError):
        _params(v0=(np.nan,))
    assert _params(v0=1.3).v0 == (1.3,)  # scalar is promoted to a tuple
    assert _params(v0=(1.0, 2.0)).v0 == (1.0, 2.0)


def test_alpha_of_c_values(grid64):
    c = SpatialField(grid64, np.full(grid64.spatial_shape, 1.0), role="c")
    a = alpha_of_c(c, 0.5, 1.0)
    np.testing.assert_allclose(a.values, 0.25, rtol=1e-15)  # c = c_R -> half
    assert a.role == "alpha_of_c"
    big = alpha_of_c(SpatialField(grid64, np.full(grid64.spatial_shape, 1e9)), 0.5, 1.0)
    assert float(big.values.max()) < 0.5  # saturates strictly below alpha1


def test_alpha_of_c_validation(grid64):
    c = SpatialField(grid64, np.ones(grid64.spatial_shape))
    with pytest.raises(ParameterError):
        alpha_of_c(c, 0.5, 0.0)
    with pytest.raises(ParameterError):
        alpha_of_c(c, -0.5, 1.0)
    dirty = np.ones(grid64.spatial_shape)
    dirty[3] = -1e-3
    with pytest.raises(SignError):
        alpha_of_c(SpatialField(grid64, dirty), 0.5, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1e6), st.floats(0.0, 1e6))
def test_alpha_of_c_is_lipschitz(c1, c2):
    # |alpha(c1) - alpha(c2)| <= (alpha1 / c_R) |c1 - c2| for c >= 0
    alpha1, c_R = 0.7, 0.3
    a1 = alpha1 * c1 / (c_R + c1)
    a2 = alpha1 * c2 / (c_R + c2)
    assert abs(a1 - a2) <= (alpha1 / c_R) * abs(c1 - c2) + 1e-15


def test_advance_c_without_consumption_is_heat(grid64):
    c = _c_bump(grid64)
    j = SpatialField(grid64, np.zeros(grid64.spatial_shape))
    out = advance_c(c, j, 0.05, 1.0, 0.25)
    oracle = heat_step(c, 0.25, HeatPlan(grid64, 0.05, "x"))
    np.testing.assert_allclose(out.values, oracle.values, rtol=0, atol=1e-15)
    assert out.role == "c" and out.time_tag == 0.25


def test_advance_c_constant_consumption_exact(grid64):
    # constant j commutes with the heat flow, so the splitting is exact:
    # c(t + dt) = exp(-eta J dt) * heat(c)
    c = _c_bump(grid64)
    j = SpatialField(grid64, np.full(grid64.spatial_shape, 2.0))
    out = advance_c(c, j, 0.05, 0.7, 0.25)
    oracle = np.exp(-0.7 * 2.0 * 0.25) * heat_step(c, 0.25, HeatPlan(grid64, 0.05, "x")).values
    np.testing.assert_allclose(out.values, oracle, rtol=1e-14)
    # consumption only ever lowers the heat flow
    free = heat_step(c, 0.25, HeatPlan(grid64, 0.05, "x")).values
    assert float((free - out.values).min()) >= 0.0


def test_advance_c_validation(grid64):
    c = _c_bump(grid64)
    j = SpatialField(grid64, np.zeros(grid64.spatial_shape))
    with pytest.raises(ParameterError):
        advance_c(c, j, 0.05, 1.0, 0.0)
    with pytest.raises(ParameterError):
        advance_c(c, j, 0.05, 0.0, 0.1)
    other = GridSpec(dim_x=1, dim_v=1, n_x=16, n_v=16, half_width_x=8.0, half_width_v=8.0)
    with pytest.raises(ShapeError):
        advance_c(c, SpatialField(other, np.zeros(other.spatial_shape)), 0.05, 1.0, 0.1)
    with pytest.raises(SignError):
        advance_c(c, SpatialField(grid64, np.full(grid64.spatial_shape, -1.0)),
                  0.05, 1.0, 0.1)
    with pytest.raises(ConfigurationError):
        advance_c(c, j, 0.05, 1.0, 0.1, plan=HeatPlan(grid64, 0.05, "xv"))


# --------------------------------------------------------------------------
# slab partition


def test_slab_partition_windows():
    assert slab_partition(100, 0.01, 0.0) == [0, 100]
    assert slab_partition(100, 0.01, 4.0) == [0, 25, 50, 75, 100]
    assert slab_partition(10, 0.1, 1.0) == [0, 5, 10]
    # non-divisor window: the last slab is simply shorter
    assert slab_partition(10, 0.1, 1.2) == [0, 4, 8, 10]
    # absurdly strong damping still leaves one step per slab
    assert slab_partition(10, 0.1, 1e9) == list(range(11))


# --------------------------------------------------------------------------
# pure driver


def test_picard_pure_matches_sech_squared_solution(grid64):
    """x-constant data turns the nonlocal problem into a Riccati ODE.

    With p0(x, v) = g(v) of unit marginal the accumulated integral solves
    A' = m0 - gamma A^2 / 2, giving p(t) = heat(p0) * sech(b t)^2 with
    b = sqrt(gamma m0 / 2).  The converged iterate must match to the
    splitting accuracy O(dt^2).
    """
    p0 = _flat_in_x(grid64)
    params = _params()
    plan = HeatPlan(grid64, SIGMA, "xv")
    b = sqrt(params.gamma / 2.0)  # m0 = 1 by construction
    errs = {}
    for dt in (0.02, 0.01):
        sched = Schedule(t_end=0.5, dt=dt, save_stride=int(round(0.1 / dt)))
        traj, diag = picard_pure(p0, None, params, sched, tol=1e-10)
        assert diag.converged and diag.deltas_strictly_decreasing()
        worst = 0.0
        for f in traj.fields:
            exact = heat_step(p0, f.time_tag, plan).values / cosh(b * f.time_tag) ** 2
            worst = max(worst, float(np.abs(f.values - exact).max() / exact.max()))
        errs[dt] = worst
    assert errs[0.01] < 5e-6
    assert 3.4 < errs[0.02] / errs[0.01] < 4.6


def test_picard_pure_small_mass_deviation_scales_quadratically(grid64):
    # the nonlinear correction to the free flow is O(mass^2): halving the
    # initial mass must quarter the deviation
    params = _params()
    plan = HeatPlan(grid64, SIGMA, "xv")
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    devs = {}
    for mu in (1e-3, 5e-4):
        p0 = gaussian_phase(grid64, mass=mu)
        traj, _ = picard_pure(p0, None, params, sched, tol=1e-12)
        devs[mu] = max(float(np.abs(f.values - heat_step(p0, f.time_tag, plan).values).max())
                       for f in traj.fields)
    assert 3.6 < devs[1e-3] / devs[5e-4] < 4.4


def test_picard_pure_seeds_share_the_fixed_point(grid64):
    # the zero seed's iterate k equals the heat seed's iterate k-1 (the
    # first real solve sees the same coefficient), so the converged
    # trajectories agree exactly, not just to tolerance
    p0 = _flat_in_x(grid64)
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    t_heat, _ = picard_pure(p0, None, _params(), sched, tol=1e-10, init="heat")
    t_zero, _ = picard_pure(p0, None, _params(), sched, tol=1e-10, init="zero")
    dev = max(float(np.abs(a.values - b.values).max())
              for a, b in zip(t_heat.fields, t_zero.fields))
    assert dev == 0.0


def test_picard_pure_multi_slab_stitching(grid64):
    # strong damping forces several contraction windows; the stitched
    # trajectory must still report exactly the schedule's saved times
    p0 = _flat_in_x(grid64)
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    traj, diag = picard_pure(p0, None, _params(gamma=9.0), sched, tol=1e-9)
    assert diag.slab_edges == [0.0, 0.16, 0.32, 0.48, 0.5]
    assert len(diag.k_per_slab) == 4 and diag.converged
    np.testing.assert_allclose(traj.times, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], atol=1e-12)
    masses = [integrate_phase(f) for f in traj.fields]
    assert all(b > a for b, a in zip(masses, masses[1:]))  # damping only removes
    # accumulated integral: zero at t=0, nondecreasing columns
    a_nodes = traj.aux["a_nodes"]
    assert a_nodes.shape == (51,) + grid64.spatial_shape
    assert float(np.abs(a_nodes[0]).max()) == 0.0
    assert float(np.diff(a_nodes, axis=0).min()) >= 0.0


def test_picard_pure_flags_non_convergence(grid64):
    p0 = _flat_in_x(grid64)
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    traj, diag = picard_pure(p0, None, _params(gamma=9.0), sched, k_max=2, tol=1e-12)
    assert not diag.converged
    assert diag.k_per_slab == [2, 2, 2, 2]
    assert len(traj) == 6  # the trajectory is still delivered


def test_picard_pure_with_source(grid64):
    # zero data plus a steady nonnegative source: density appears, stays
    # nonnegative, and cannot exceed the sourced free flow's mass t * |f|_1
    f = gaussian_phase(grid64, mass=0.3)
    p0 = PhaseField(grid64, np.zeros(grid64.phase_shape))
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    traj, diag = picard_pure(p0, f, _params(), sched, tol=1e-10)
    assert diag.converged
    final = traj.fields[-1]
    assert float(final.values.min()) >= 0.0
    mass = integrate_phase(final)
    assert 0.0 < mass <= 0.5 * 0.3 * (1.0 + 1e-12)


def test_picard_pure_validation(grid64):
    p0 = _flat_in_x(grid64)
    sched = Schedule(t_end=0.1, dt=0.01, save_stride=10)
    with pytest.raises(ParameterError):
        picard_pure(p0, None, _params(), sched, init="midpoint")
    with pytest.raises(ParameterError):
        picard_pure(p0, None, _params(), sched, k_max=1)
    with pytest.raises(ParameterError):
        picard_pure(p0, None, _params(), sched, tol=1.5)
    with pytest.raises(ConfigurationError):
        picard_pure(p0, [p0] * 3, _params(), sched)  # 11 nodes expected
    with pytest.raises(ShapeError):
        picard_pure(p0, [None] * 11, _params(), sched)


# --------------------------------------------------------------------------
# coupled driver


def test_picard_coupled_without_production_reduces_to_pure(grid64):
    # alpha1 = 0 silences the only feedback of c into p, so the coupled
    # p iterates are the pure ones verbatim
    p0 = _flat_in_x(grid64)
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    p_traj, c_traj, _ = picard_coupled(p0, _c_bump(grid64), _params(alpha1=0.0),
                                       sched, tol=1e-10)
    pure, _ = picard_pure(p0, None, _params(alpha1=0.0), sched, tol=1e-10, init="zero")
    for a, b in zip(p_traj.fields, pure.fields):
        np.testing.assert_array_equal(a.values, b.values)


def test_picard_coupled_zero_density_leaves_c_on_heat_flow(grid64):
    # nothing consumes, so c is exactly its far field and the depletion is 0
    c0 = _c_bump(grid64)
    p0 = PhaseField(grid64, np.zeros(grid64.phase_shape))
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    p_traj, c_traj, diag = picard_coupled(p0, c0, _params(), sched, tol=1e-10)
    assert diag.k_per_slab == [2]
    plan_x = HeatPlan(grid64, 0.05, "x")
    for cf in c_traj.fields:
        oracle = heat_step(c0, cf.time_tag, plan_x)
        np.testing.assert_allclose(cf.values, oracle.values, rtol=0, atol=1e-14)
    # the depletion is the gap between the per-step march and the one-shot
    # semigroup, so it is round-off rather than exactly zero
    for chat in c_traj.aux["c_hat"]:
        assert float(np.abs(chat.values).max()) < 1e-14


def test_picard_coupled_seeds_agree(grid64):
    p0 = _flat_in_x(grid64)
    c0 = _c_bump(grid64)
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    pA, cA, dA = picard_coupled(p0, c0, _params(), sched, tol=1e-10, init="zero")
    pB, cB, dB = picard_coupled(p0, c0, _params(), sched, tol=1e-10, init="heat")
    assert dA.converged and dB.converged
    dev_p = max(float(np.abs(a.values - b.values).max())
                for a, b in zip(pA.fields, pB.fields))
    dev_c = max(float(np.abs(a.values - b.values).max())
                for a, b in zip(cA.fields, cB.fields))
    assert dev_p < 1e-10
    assert dev_c < 1e-10


def test_picard_coupled_decomposition_and_signs(grid64):
    # c = far field + depletion with chat <= 0 and 0 <= c <= sup c0
    p0 = _flat_in_x(grid64)
    c0 = _c_bump(grid64)
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    p_traj, c_traj, diag = picard_coupled(p0, c0, _params(), sched, tol=1e-9)
    assert diag.converged and diag.deltas_strictly_decreasing()
    sup_c0 = float(c0.values.max())
    for cf, chat, cinf in zip(c_traj.fields, c_traj.aux["c_hat"], c_traj.aux["c_inf"]):
        np.testing.assert_allclose(cf.values, cinf.values + chat.values,
                                   rtol=0, atol=1e-15)
        assert float(chat.values.max()) <= 0.0
        assert float(cf.values.min()) >= 0.0
        assert float(cf.values.max()) <= sup_c0 * (1.0 + 1e-12)
    # the consumed attractant actually shows: depletion is strictly negative
    assert float(c_traj.aux["c_hat"][-1].values.min()) < -1e-4


def test_picard_coupled_vector_moment_mode(grid64):
    # switching the consumption to the vector first moment changes c
    # (the magnitude is strictly below the speed moment for spread data)
    p0 = _flat_in_x(grid64)
    c0 = _c_bump(grid64)
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    _, c_scalar, _ = picard_coupled(p0, c0, _params(), sched, tol=1e-9)
    _, c_vector, dV = picard_coupled(p0, c0, _params(use_vector_j=True), sched, tol=1e-9)
    assert dV.converged
    gap = max(float(np.abs(a.values - b.values).max())
              for a, b in zip(c_vector.fields, c_scalar.fields))
    assert gap > 1e-4
    # weaker consumption (|vector| <= scalar j) leaves more attractant
    assert float((c_vector.fields[-1].values - c_scalar.fields[-1].values).min()) >= 0.0


def test_picard_coupled_validation(grid64):
    p0 = _flat_in_x(grid64)
    c0 = _c_bump(grid64)
    sched = Schedule(t_end=0.1, dt=0.01, save_stride=10)
    other = GridSpec(dim_x=1, dim_v=1, n_x=16, n_v=16, half_width_x=8.0, half_width_v=8.0)
    with pytest.raises(ShapeError):
        picard_coupled(p0, SpatialField(other, np.ones(other.spatial_shape)),
                       _params(), sched)
    with pytest.raises(ConfigurationError):
        picard_coupled(p0, c0, _params(v0=(1.0, 2.0)), sched)
    with pytest.raises(ParameterError):
        picard_coupled(p0, c0, _params(), sched, init="fancy")
