import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from angiosolve import (CoefficientTrack, ConfigurationError, HeatPlan,
                        ParameterError, PhaseField, Schedule, ShapeError,
                        advance_linear, heat_step, heat_upper_solution,
                        integrate_phase, solve_linear)

from conftest import gaussian_phase, small_grid

SIGMA = 0.05


# --------------------------------------------------------------------------
# Schedule


def test_schedule_validation():
    s = Schedule(t_end=1.0, dt=1e-3, save_stride=50)
    assert s.n_steps == 1000
    assert len(s.times()) == 1001
    assert s.saved_nodes()[-1] == 1000
    assert s.saved_nodes()[:3] == (0, 50, 100)
    with pytest.raises(ConfigurationError):
        Schedule(t_end=1.0, dt=0.0003)  # does not divide t_end
    with pytest.raises(ParameterError):
        Schedule(t_end=0.0, dt=1e-3)
    with pytest.raises(ParameterError):
        Schedule(t_end=1.0, dt=1e-3, save_stride=0)


def test_schedule_saved_nodes_include_final_partial_stride():
    s = Schedule(t_end=0.1, dt=1e-3, save_stride=30)
    assert s.saved_nodes() == (0, 30, 60, 90, 100)


# --------------------------------------------------------------------------
# single step


def test_advance_linear_reduces_to_heat_step(grid64):
    p = gaussian_phase(grid64)
    plan = HeatPlan(grid64, SIGMA, "xv")
    out = advance_linear(p, None, None, SIGMA, 0.01, plan=plan)
    ref = heat_step(p, 0.01, plan)
    # identical up to the round-off clamp on tiny negative ringing
    np.testing.assert_allclose(out.values, ref.values, rtol=0,
                               atol=1e-14 * ref.values.max())


def test_advance_linear_constant_damping_scalar_ode(grid64):
    # spatially constant p and a: the heat step is the identity and the
    # update must be exactly p * exp(-a0 dt)
    a0, dt = 0.7, 0.01
    p = PhaseField(grid64, np.full(grid64.phase_shape, 2.0))
    out = advance_linear(p, a0, None, SIGMA, dt)
    np.testing.assert_allclose(out.values, 2.0 * math.exp(-a0 * dt), rtol=1e-14)


def test_advance_linear_source_single_step_duhamel(grid64):
    # single-step Duhamel forms agree to their shared consistency order:
    # the endpoint-trapezoid update differs from dt*f0*exp(-a dt/2) by
    # dt*(1 - exp(-a dt/2))^2 / 2  (= (a dt)^2 dt / 8 at leading order)
    a0, dt, f0 = 2.0, 0.01, 3.0
    p = PhaseField(grid64, np.zeros(grid64.phase_shape))
    f = PhaseField(grid64, np.full(grid64.phase_shape, f0))
    out = advance_linear(p, a0, f, SIGMA, dt)
    midpoint = dt * f0 * math.exp(-a0 * dt / 2)
    gap = dt * f0 * (1.0 - math.exp(-a0 * dt / 2)) ** 2 / 2.0
    assert np.max(np.abs(out.values - midpoint)) <= gap * 1.0001
    assert np.min(out.values) > 0.0


def test_advance_linear_rejects_negative_coefficient_when_strict(grid64):
    p = gaussian_phase(grid64)
    from angiosolve import SignError
    with pytest.raises(SignError):
        advance_linear(p, -0.5, None, SIGMA, 0.01)


# --------------------------------------------------------------------------
# full solve


def test_solve_linear_zero_track_is_heat_flow(grid64):
    p0 = gaussian_phase(grid64)
    sched = Schedule(t_end=0.5, dt=0.01, save_stride=10)
    track = CoefficientTrack(sched, grid64)
    traj = solve_linear(p0, track, SIGMA, plan=HeatPlan(grid64, SIGMA, "xv"))
    plan = HeatPlan(grid64, SIGMA, "xv")
    for t, f in zip(traj.times, traj.fields):
        ref = heat_step(p0, float(t), plan)
        assert np.max(np.abs(f.values - ref.values)) < 1e-11 * ref.values.max()


def test_solve_linear_time_dependent_uniform_damping_order(grid64):
    # a(t) = 1 + sin(t), uniform in space: exact flow is
    # exp(-(t + 1 - cos t)) * heat(p0, t); node-averaged factors are O(dt^2)
    p0 = gaussian_phase(grid64)
    plan = HeatPlan(grid64, SIGMA, "xv")

    def deviation(dt):
        sched = Schedule(t_end=0.5, dt=dt)
        track = CoefficientTrack(
            sched, grid64,
            a=[np.full(grid64.spatial_shape, 1.0 + math.sin(t))
               for t in sched.times()])
        traj = solve_linear(p0, track, SIGMA, plan=plan)
        t = 0.5
        ref = heat_step(p0, t, plan).values * math.exp(-(t + 1 - math.cos(t)))
        return np.max(np.abs(traj.final.values - ref)) / ref.max()

    d1, d2 = deviation(0.01), deviation(0.005)
    assert d1 < 1e-4
    assert d1 / d2 == pytest.approx(4.0, rel=0.25)  # halving dt -> /4


def test_solve_linear_damping_is_monotone(grid64):
    # a >= 0 only removes density: damped run sits below the free run.
    # The damping profile is kept wide: products exp(-k a t) * p must stay
    # spectrally resolved, so a needs several cells across its own width.
    p0 = gaussian_phase(grid64)
    sched = Schedule(t_end=0.3, dt=0.01, save_stride=10)
    a_field = np.exp(-grid64.x_coords() ** 2 / 8.0)
    damped = solve_linear(
        p0, CoefficientTrack(sched, grid64, a=a_field), SIGMA)
    free = solve_linear(p0, CoefficientTrack(sched, grid64), SIGMA)
    for fd, ff in zip(damped.fields, free.fields):
        gap = ff.values - fd.values
        assert gap.min() > -1e-12 * ff.values.max()


def test_solve_linear_separable_track_matches_dense(grid64):
    # sep_x (x) sep_v broadcast must agree with the dense phase coefficient
    sched = Schedule(t_end=0.1, dt=0.005, save_stride=5)
    p0 = gaussian_phase(grid64)
    sx = -0.4 * np.exp(-grid64.x_coords() ** 2)  # signed: growth allowed
    sv = np.exp(-grid64.v_coords() ** 2)
    dense = np.multiply.outer(sx, sv)
    t_sep = CoefficientTrack(sched, grid64, sep_x=sx, sep_v=sv, strict=False)
    t_dense = CoefficientTrack(sched, grid64, a=dense, strict=False)
    r_sep = solve_linear(p0, t_sep, SIGMA, clamp_saves=False)
    r_dense = solve_linear(p0, t_dense, SIGMA, clamp_saves=False)
    for a, b in zip(r_sep.fields, r_dense.fields):
        np.testing.assert_allclose(a.values, b.values, rtol=0,
                                   atol=1e-13 * b.values.max())


def test_solve_linear_records_moment_nodes(grid64):
    p0 = gaussian_phase(grid64)
    sched = Schedule(t_end=0.1, dt=0.01, save_stride=5)
    traj = solve_linear(p0, CoefficientTrack(sched, grid64), SIGMA,
                        record_moments=True)
    assert traj.p_tilde_nodes.shape == (11,) + grid64.spatial_shape
    assert traj.j_nodes.shape == (11,) + grid64.spatial_shape
    # node 0 must be the initial marginal
    pt0 = p0.values.sum(axis=1) * grid64.h_v
    np.testing.assert_allclose(traj.p_tilde_nodes[0], pt0, rtol=1e-14)
    # moments are nonnegative throughout
    assert traj.p_tilde_nodes.min() >= 0.0
    assert traj.j_nodes.min() >= 0.0


def test_heat_upper_solution_no_source_is_heat(grid64):
    p0 = gaussian_phase(grid64)
    sched = Schedule(t_end=0.2, dt=0.01, save_stride=10)
    traj = heat_upper_solution(p0, None, SIGMA, sched)
    plan = HeatPlan(grid64, SIGMA, "xv")
    for t, f in zip(traj.times, traj.fields):
        ref = heat_step(p0, float(t), plan)
        assert np.max(np.abs(f.values - ref.values)) < 1e-11 * ref.values.max()


def test_coefficient_track_validation(grid64):
    sched = Schedule(t_end=0.1, dt=0.01)
    with pytest.raises(ShapeError):
        CoefficientTrack(sched, grid64, a=np.zeros((3, 3)))
    with pytest.raises(ConfigurationError):
        CoefficientTrack(sched, grid64,
                         a=[np.zeros(grid64.spatial_shape)] * 5)  # wrong count
    from angiosolve import SignError
    with pytest.raises(SignError):
        CoefficientTrack(sched, grid64,
                         a=-np.ones(grid64.spatial_shape))  # strict default


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.05, 0.8), st.integers(0, 1000))
def test_damped_step_keeps_positivity_and_mass(a0, var, seed):
    g = small_grid(32, L=4.0)
    rng = np.random.default_rng(seed)
    vals = rng.random(g.phase_shape) + 0.0
    # smooth the noise so it is spectrally representable
    p0 = heat_step(PhaseField(g, vals, nonnegative=True), var,
                   HeatPlan(g, 0.1, "xv"))
    out = advance_linear(p0, a0, None, 0.1, 0.01)
    assert out.values.min() >= 0.0
    assert integrate_phase(out) <= integrate_phase(p0) * (1 + 1e-12)
