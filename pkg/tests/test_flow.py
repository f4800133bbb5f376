import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ahgflow import flow
from ahgflow.analysis import config_distance
from ahgflow.app.telemetry import CSV_HEADER
from ahgflow.gauge import coulomb_project, flux_background
from ahgflow.lattice import FieldState, make_grid, norm_l2, vacuum
from ahgflow.observables import degree_plaquette, energy, tension_field

from conftest import random_fields

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def fd_gradient_error(state: FieldState, rng, coords: int = 20, step: float = 1e-6) -> float:
    dphi, dtheta = flow.flow_rhs_temporal(state)
    n, a = state.grid.n, state.a
    worst = 0.0
    for _ in range(coords):
        comp = int(rng.integers(4))
        i, j = (int(v) for v in rng.integers(n, size=2))

        def moved(eps):
            phi, theta = state.phi.copy(), state.theta.copy()
            if comp < 2:
                phi[i, j] += eps * (1 if comp == 0 else 1j)
            else:
                theta[comp - 2, i, j] += eps
            return state.with_fields(phi=phi, theta=theta)

        fd = flow.energy_difference(moved(-step), moved(step)) / (2 * step)
        if comp < 2:
            grad = -a * a * (dphi[i, j].real if comp == 0 else dphi[i, j].imag)
        else:
            grad = -dtheta[comp - 2, i, j]
        worst = max(worst, abs(fd - grad) / max(abs(grad), 1e-8))
    return worst


def test_vacuum_is_fixed():
    s = vacuum(make_grid(32, 8.0))
    for rhs in (flow.flow_rhs_temporal, flow.flow_rhs_deturck):
        dphi, dth = rhs(s)
        assert flow.rhs_norm(dphi, dth, s.a) <= 1e-14
    dt = flow.cfl_limit(s.a)
    for step in (flow.flow_step_temporal, flow.flow_step_deturck):
        nxt = step(s, dt)
        assert np.array_equal(nxt.phi, s.phi) and np.array_equal(nxt.theta, s.theta)
        assert nxt.t == dt


@settings(max_examples=10, deadline=None)
@given(seed=seeds)
def test_rhs_is_negative_energy_gradient(seed):
    rng = np.random.default_rng(seed)
    assert fd_gradient_error(random_fields(rng), rng) <= 1e-6


@settings(max_examples=20, deadline=None)
@given(seed=seeds)
def test_energy_difference_matches_plain_subtraction(seed):
    rng = np.random.default_rng(seed)
    s = random_fields(rng)
    t = random_fields(rng)
    assert abs(flow.energy_difference(s, t) - (energy(t) - energy(s))) <= 1e-11 * (energy(s) + energy(t))


@settings(max_examples=10, deadline=None)
@given(seed=seeds, factor=st.floats(min_value=0.05, max_value=1.0))
def test_steps_never_raise_energy(seed, factor):
    rng = np.random.default_rng(seed)
    s = random_fields(rng, noise=0.2)
    dt = factor * flow.cfl_limit(s.a)
    for _ in range(100):
        nxt = flow.flow_step_temporal(s, dt)
        assert flow.energy_difference(s, nxt) <= 1e-12
        s = nxt


def test_cfl_is_enforced(random_state):
    a = random_state.a
    with pytest.raises(flow.CFLError):
        flow.flow_step_temporal(random_state, 1.01 * flow.cfl_limit(a))
    with pytest.raises(flow.CFLError):
        flow.flow_step_temporal(random_state, 0.0)
    with pytest.raises(flow.CFLError):
        flow.FlowParams.from_factor(a, 2.0).validate(a)
    flow.flow_step_temporal(random_state, flow.cfl_limit(a, 1.0), cfl_safety=1.0)


def test_degree_jump_is_detected(rng):
    g = make_grid(16, 16.0)
    s = FieldState(grid=g, phi=3.0 * (rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)),
                   theta=rng.standard_normal((2,) + g.shape))
    with pytest.raises(flow.DegreeJumpError):
        flow.flow_step_temporal(s, 0.1)
    res = flow.run_flow(s, flow.FlowParams(dt=0.1, T=1.0, output_every=1))
    assert res.aborted and res.status.startswith("aborted: ")
    assert res.final is s


def test_flow_params_validation():
    with pytest.raises(ValueError):
        flow.FlowParams(gauge_mode="axial")
    with pytest.raises(ValueError):
        flow.FlowParams(output_every=0)
    with pytest.raises(ValueError):
        flow.FlowParams(monitor_flags={"bogus": True})
    p = flow.FlowParams.from_factor(0.5, 0.25, T=1.0)
    assert p.dt == 0.25 * 0.25 / 4 and p.n_steps() == 64


def test_record_columns_match_csv():
    assert ",".join(flow.TrajectoryRecord.columns()) == CSV_HEADER


def test_identity_defect_and_heat_residual_vanish_on_vacuum():
    s = vacuum(make_grid(16, 8.0))
    dt = flow.cfl_limit(s.a)
    nxt = flow.flow_step_temporal(s, dt)
    assert flow.energy_identity_defect(s, nxt, dt) == 0.0
    assert flow.gauss_heat_residual(s, nxt, dt) == 0.0
    assert flow.dissipation(s, nxt, dt) == 0.0


def test_identity_defect_is_second_order_in_dt(rng):
    s = random_fields(rng, noise=0.2)
    dt = 0.25 * flow.cfl_limit(s.a)
    d1 = flow.energy_identity_defect(s, flow.flow_step_temporal(s, dt), dt)
    d2 = flow.energy_identity_defect(s, flow.flow_step_temporal(s, dt / 2), dt / 2)
    # Measured ratio is close to 4.
    assert d1 / d2 >= 3.0


def test_run_flow_vacuum_trajectory():
    s = vacuum(make_grid(16, 16.0))
    params = flow.FlowParams.from_factor(s.a, 0.25, T=1.0, output_every=8, checkpoint_times=(0.0, 0.5))
    res = flow.run_flow(s, params)
    assert res.status == "ok" and res.steps == params.n_steps()
    assert np.all(res.series("E") == 0)
    assert len(res.trajectory) == params.n_steps() // 8 + 1
    assert res.trajectory[-1].t == pytest.approx(1.0)
    assert sorted(res.checkpoints) == [0.0, 0.5]
    assert res.max_energy_increase == 0.0


def test_run_flow_monitor_flags():
    s = vacuum(make_grid(16, 16.0))
    params = flow.FlowParams.from_factor(s.a, 0.25, T=0.25, output_every=4,
                                         monitor_flags={"gauss_heat": False, "degree_vorticity": False})
    rec = flow.run_flow(s, params).trajectory[0]
    assert math.isnan(rec.gauss_heat_residual) and math.isnan(rec.deg_vort)
    assert rec.energy_identity_defect == 0.0


def test_constant_flux_background_keeps_degree():
    g = make_grid(64, 16.0)
    s = FieldState(grid=g, phi=np.full(g.shape, 0.5 + 0j), theta=flux_background(g, 1))
    res = flow.run_flow(s, flow.FlowParams.from_factor(g.a, 0.5, T=2.0, output_every=64))
    assert res.status == "ok"
    assert set(int(d) for d in res.series("deg_plaq")) == {1}
    assert res.max_energy_increase <= 1e-12


def _twin_gap(s, dt, T):
    a = b = s
    for _ in range(int(round(T / dt))):
        a = flow.flow_step_temporal(a, dt)
        b = flow.flow_step_deturck(b, dt)
    return (
        abs(energy(a) - energy(b)),
        abs(tension_field(a).l2sq() - tension_field(b).l2sq()),
        norm_l2(np.abs(a.phi) - np.abs(b.phi), s.a),
    )


def test_twin_runs_agree_on_random_data(rng):
    s, _ = coulomb_project(random_fields(rng, n=16, noise=0.2))
    dt = 0.1 * flow.cfl_limit(s.a)
    coarse = _twin_gap(s, dt, 2.5)
    fine = _twin_gap(s, dt / 2, 2.5)
    assert max(coarse) <= 1e-5
    # The gap is Heun time error only, so it shrinks at second order.
    assert all(f <= c / 3 for f, c in zip(fine, coarse))


def test_gauss_heat_residual_shrinks_with_time_step_on_smooth_data():
    g = make_grid(64, 16.0)
    x1, x2 = g.coordinates()
    k = 2 * math.pi / g.L
    phi = (0.9 + 0.1 * np.cos(k * x1)) * np.exp(0.3j * np.sin(k * x2))
    s = FieldState(grid=g, phi=phi, theta=g.a * 0.1 * np.stack([np.sin(k * x2), np.cos(k * x1)]))
    r = []
    for dt in (0.25 * flow.cfl_limit(g.a), 0.125 * flow.cfl_limit(g.a)):
        r.append(flow.gauss_heat_residual(s, flow.flow_step_temporal(s, dt), dt))
    assert np.all(np.isfinite(r))
    assert r[1] <= r[0]


@pytest.mark.xfail(
    strict=True,
    reason="the Bogomol'nyi-exact lattice vortex is not a critical point of the lattice energy; RHS norm is O(a)",
)
def test_vortex_rhs_is_small(vortex128):
    assert flow.rhs_norm(*flow.flow_rhs_temporal(vortex128.state), vortex128.state.a) <= 1e-5


@pytest.mark.xfail(strict=True, reason="the vortex relaxes towards the lattice energy minimiser at rate O(a)")
def test_vortex_drift_over_thousand_steps(vortex128):
    s = vortex128.state
    dt = flow.cfl_limit(s.a, 0.25)
    cur = s
    for _ in range(1000):
        cur = flow.flow_step_temporal(cur, dt)
    assert config_distance(cur, s).squared() ** 0.5 <= 1e-4


@pytest.mark.xfail(strict=True, reason="same O(a) lattice gradient drives the DeTurck flow away from the vortex")
def test_coulomb_vortex_is_deturck_stationary(vortex128):
    s, _ = coulomb_project(vortex128.state)
    dt = flow.cfl_limit(s.a, 0.25)
    cur = s
    for _ in range(int(round(1.0 / dt))):
        cur = flow.flow_step_deturck(cur, dt)
    assert config_distance(cur, s).squared() ** 0.5 <= 1e-4


@pytest.mark.xfail(strict=True, reason="the tension settles on a positive lattice floor instead of decaying")
def test_tension_strictly_decreasing_after_burn_in(main_run):
    t = main_run.series("t")
    tension = main_run.series("gauss_l2sq") + main_run.series("dbar_l2sq")
    tail = tension[t >= 2.0]
    assert np.all(np.diff(tail) < 0)


def test_main_run_keeps_degree_and_energy_monotone(main_run):
    assert main_run.status == "ok"
    assert set(main_run.series("deg_plaq").astype(int)) == {1}
    assert main_run.max_energy_increase <= 1e-12
    assert degree_plaquette(main_run.final) == 1
