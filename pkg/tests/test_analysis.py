import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ahgflow.analysis import (
    InsufficientDataError,
    config_distance,
    convergence_order,
    distance_series,
    fit_decay_rate,
    stability_ratio,
)
from ahgflow.gauge import gauge_transform
from ahgflow.lattice import Grid, make_grid, vacuum
from ahgflow.observables import bogomolnyi_identity_defect, degree_plaquette, degree_vorticity


def test_fit_exact_exponential():
    t = np.linspace(0, 20, 50)
    fit = fit_decay_rate(np.column_stack([t, np.exp(-0.3 * t)]), burn_in=0.0)
    assert abs(fit.gamma - 0.3) <= 1e-10
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.samples == 50 and fit.window == (0.0, 20.0)
    np.testing.assert_allclose(fit.predict(t), np.exp(-0.3 * t), rtol=1e-9)


def test_fit_constant_series():
    t = np.linspace(0, 10, 30)
    fit = fit_decay_rate(list(zip(t, np.full(30, 2.5))), burn_in=0.0)
    assert abs(fit.gamma) <= 1e-12
    assert fit.r2 == 1.0


@settings(max_examples=30, deadline=None)
@given(gamma=st.floats(min_value=-1.0, max_value=5.0), logc=st.floats(min_value=-20, max_value=5))
def test_fit_recovers_rate(gamma, logc):
    t = np.linspace(2, 20, 40)
    fit = fit_decay_rate(np.vstack([t, np.exp(logc - gamma * t)]))
    assert fit.gamma == pytest.approx(gamma, abs=1e-8)
    assert fit.logC == pytest.approx(logc, abs=1e-7)


def test_fit_window_and_errors():
    t = np.linspace(0, 10, 101)
    v = np.exp(-t)
    fit = fit_decay_rate(np.column_stack([t, v]), burn_in=2.0, t_end=5.0)
    assert fit.window == (2.0, 5.0)
    with pytest.raises(InsufficientDataError):
        fit_decay_rate(np.column_stack([t, v]), burn_in=9.5)
    with pytest.raises(ValueError):
        fit_decay_rate(np.column_stack([t, -v]), burn_in=0.0)
    assert fit.to_dict()["window"] == [2.0, 5.0]


def test_distance_identity_and_gauge_dependence(random_state, rng):
    rep = config_distance(random_state, random_state)
    assert rep.dA_h1 == rep.dphi_l2 == rep.dphi_h1 == 0.0
    moved = gauge_transform(random_state, rng.standard_normal(random_state.grid.shape))
    rep = config_distance(random_state, moved)
    assert rep.dA_h1 > 0 and rep.dphi_l2 > 0
    assert rep.squared() == pytest.approx(rep.dA_h1**2 + rep.dphi_l2**2)
    with pytest.raises(ValueError):
        config_distance(random_state, vacuum(make_grid(32, 16.0)))


def test_distance_series_skips_final(random_state):
    other = random_state.with_fields(phi=random_state.phi * 1.01)
    series = distance_series({0.0: other, 1.0: random_state}, random_state)
    assert [t for t, _ in series] == [0.0]


def test_stability_ratio_guards(vortex64, perturbed128, vortex128):
    assert stability_ratio(vortex64.state, vortex64) == 0.0
    r = stability_ratio(perturbed128, vortex128)
    assert np.isfinite(r) and r > 0
    with pytest.raises(ValueError):
        stability_ratio(vacuum(vortex64.state.grid), vortex64)


def test_convergence_order_synthetic():
    study = convergence_order(lambda g: g, lambda g: g.a**2, [32, 64, 128], L=8.0)
    assert study.order == pytest.approx(2.0, abs=1e-12)
    assert study.monotone


def test_convergence_order_validations():
    with pytest.raises(InsufficientDataError):
        convergence_order(lambda g: g, lambda g: g.a, [32, 64], L=8.0)
    with pytest.raises(ValueError):
        convergence_order(lambda g: g, lambda g: g.a, [16, 32, 128], L=8.0)
    with pytest.warns(RuntimeWarning):
        study = convergence_order(lambda g: g, lambda g: 1.0 / g.a, [Grid(16, 8.0), Grid(32, 8.0), Grid(64, 8.0)])
    assert not study.monotone


def _cached(sols):
    return lambda g: sols[g.n].state


def test_vortex_refinement_orders(vortex64, vortex128, vortex256):
    sols = {64: vortex64, 128: vortex128, 256: vortex256}
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ident = convergence_order(_cached(sols), bogomolnyi_identity_defect, [64, 128, 256], L=16.0)
        vort = convergence_order(
            _cached(sols), lambda s: degree_vorticity(s) - degree_plaquette(s), [64, 128, 256], L=16.0
        )
    assert 1.8 <= ident.order <= 2.2
    assert 1.8 <= vort.order <= 2.2
    assert math.isclose(ident.values[0] / ident.values[1], 4.0, rel_tol=0.15)
