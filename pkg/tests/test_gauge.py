import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ahgflow.gauge import (
    GaugeFunction,
    coulomb_project,
    divergence,
    flux_background,
    gauge_transform,
    h1_transform_check,
    link_gradient,
)
from ahgflow.lattice import FieldState, field_sum, make_grid, wrapped_plaquette
from ahgflow.observables import degree_plaquette, energy

from conftest import random_fields

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_zero_gauge_is_identity(random_state):
    t = gauge_transform(random_state, np.zeros(random_state.grid.shape))
    assert np.array_equal(t.phi, random_state.phi)
    assert np.array_equal(t.theta, random_state.theta)


def test_gauge_function_is_zero_mean():
    g = make_grid(16, 4.0)
    chi = GaugeFunction(g, np.full(g.shape, 3.0))
    assert abs(chi.chi.mean()) <= 1e-15
    with pytest.raises(ValueError):
        GaugeFunction(g, np.zeros((8, 8)))


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_gauge_transform_group_law_and_energy(seed):
    rng = np.random.default_rng(seed)
    s = random_fields(rng)
    c1 = 2.0 * rng.standard_normal(s.grid.shape)
    c2 = 2.0 * rng.standard_normal(s.grid.shape)
    once = gauge_transform(s, c1 + c2)
    twice = gauge_transform(gauge_transform(s, c1), c2)
    assert np.max(np.abs(once.phi - twice.phi)) <= 1e-12
    assert np.max(np.abs(once.theta - twice.theta)) <= 1e-12
    assert abs(energy(once) - energy(s)) <= 1e-12 * max(1.0, energy(s))


def test_divergence_is_negative_adjoint_of_gradient(rng):
    g = make_grid(16, 4.0)
    chi = rng.standard_normal(g.shape)
    theta = rng.standard_normal((2,) + g.shape)
    lhs = field_sum(link_gradient(chi) * theta)
    rhs = -g.a**2 * field_sum(chi * divergence(theta, g.a))
    assert math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-12)


def test_coulomb_of_coulomb_state_is_trivial():
    g = make_grid(16, 16.0)
    s = FieldState(grid=g, phi=np.ones(g.shape), theta=flux_background(g, 0))
    out, chi = coulomb_project(s)
    assert np.max(np.abs(chi.chi)) <= 1e-12
    assert np.array_equal(out.theta, s.theta)


def test_coulomb_removes_pure_gauge(rng):
    g = make_grid(32, 16.0)
    psi = 3.0 * rng.standard_normal(g.shape)
    s = FieldState(grid=g, phi=np.exp(1j * psi), theta=link_gradient(psi))
    out, _ = coulomb_project(s)
    assert np.max(np.abs(out.theta)) <= 1e-10
    assert np.max(np.abs(out.phi - out.phi[0, 0])) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_coulomb_projection_properties(seed):
    s = random_fields(np.random.default_rng(seed))
    out, _ = coulomb_project(s)
    assert np.max(np.abs(divergence(out.theta, s.a))) <= 1e-12
    again, chi2 = coulomb_project(out)
    assert np.max(np.abs(chi2.chi)) <= 1e-12
    assert np.max(np.abs(again.theta - out.theta)) <= 1e-12
    assert abs(energy(out) - energy(s)) <= 1e-12 * max(1.0, energy(s))


@pytest.mark.parametrize("N, n", [(0, 16), (1, 128), (-2, 32), (5, 32)])
def test_flux_background(N, n):
    g = make_grid(n, 16.0)
    th = flux_background(g, N)
    if N == 0:
        assert np.all(th == 0)
    assert degree_plaquette(th) == N
    np.testing.assert_allclose(wrapped_plaquette(th), 2 * math.pi * N / n**2, atol=1e-13)


def test_flux_background_rejects_overfull_grid():
    with pytest.raises(ValueError):
        flux_background(make_grid(8, 8.0), 16)


def test_h1_transform_check_trivial_gauge(rng):
    g = make_grid(32, 8.0)
    u = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    rep = h1_transform_check(u, np.zeros(g.shape), 4.0, g)
    assert rep.ratio <= 1.0 + 1e-14
    with pytest.raises(ValueError):
        h1_transform_check(u, np.zeros(g.shape), 2.0, g)


def _bump_and_sawtooth(n: int):
    g = make_grid(n, 8.0)
    x1, x2 = g.coordinates()
    u = np.exp(-((x1 - 4.0) ** 2 + (x2 - 4.0) ** 2))
    i1 = np.arange(n)[:, None] * np.ones(n)[None, :]
    chi = 2 * math.pi * 3 * i1 / n
    return g, u, chi


def test_h1_transform_check_sawtooth_is_finite():
    g, u, chi = _bump_and_sawtooth(64)
    rep = h1_transform_check(u, chi, 4.0, g)
    assert np.isfinite(rep.ratio) and rep.ratio <= 1.0


def test_h1_transform_ensemble_stable_under_refinement():
    worst = {}
    for n in (32, 64):
        rng = np.random.default_rng(99)
        g = make_grid(n, 8.0)
        x1, x2 = g.coordinates()
        ratios = []
        for _ in range(100):
            c = rng.uniform(0, 8, size=2)
            k = rng.integers(-3, 4, size=2)
            amp, ph = rng.uniform(0.1, 2.0), rng.uniform(0, 2 * math.pi)
            u = np.exp(-((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2)) * (1 + 0.3j)
            chi = amp * np.sin(2 * math.pi * (k[0] * x1 + k[1] * x2) / 8.0 + ph)
            ratios.append(h1_transform_check(u, chi, 4.0, g).ratio)
        worst[n] = max(ratios)
    # The measured constant is 1 to rounding on both grids.
    assert all(np.isfinite(v) for v in worst.values())
    assert abs(worst[32] - worst[64]) <= 0.1 * worst[64]
