"""Gauge transformations, Coulomb projection and constant-flux sectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import (
    FieldState,
    Grid,
    backward_diff,
    forward_diff,
    norm_h1,
    norm_lp,
    poisson_solve,
    shift,
)

__all__ = [
    "GaugeFunction",
    "H1TransformCheck",
    "gauge_transform",
    "link_gradient",
    "divergence",
    "coulomb_project",
    "flux_background",
    "h1_transform_check",
]


@dataclass(frozen=True)
class GaugeFunction:
    """Real gauge parameter ``chi`` on sites, stored with zero mean."""

    grid: Grid
    chi: np.ndarray

    def __post_init__(self) -> None:
        chi = np.asarray(self.chi, dtype=np.float64)
        if chi.shape != self.grid.shape:
            raise ValueError(f"chi has shape {chi.shape}, expected {self.grid.shape}")
        if not np.all(np.isfinite(chi)):
            raise ValueError("chi must be finite")
        object.__setattr__(self, "chi", chi - chi.mean())


def _chi_values(chi) -> np.ndarray:
    return chi.chi if isinstance(chi, GaugeFunction) else np.asarray(chi, dtype=np.float64)


def link_gradient(chi: np.ndarray) -> np.ndarray:
    """Link increments ``chi(x + e_j) - chi(x)`` stacked as ``(2, n, n)``."""
    return np.stack([shift(chi, 1) - chi, shift(chi, 2) - chi])


def gauge_transform(state: FieldState, chi) -> FieldState:
    """``phi -> e^{i chi} phi`` and ``theta_j -> theta_j + chi(x + e_j) - chi(x)``."""
    c = _chi_values(chi)
    if isinstance(chi, GaugeFunction) and chi.grid != state.grid:
        raise ValueError("gauge function and state live on different grids")
    if c.shape != state.grid.shape:
        raise ValueError(f"chi has shape {c.shape}, expected {state.grid.shape}")
    return state.with_fields(phi=np.exp(1j * c) * state.phi, theta=state.theta + link_gradient(c))


def divergence(theta: np.ndarray, a: float) -> np.ndarray:
    """Backward-difference divergence of ``A = theta / a``, the negative adjoint of the forward gradient."""
    return (backward_diff(theta[0], 1, a) + backward_diff(theta[1], 2, a)) / a


def coulomb_project(state: FieldState) -> tuple[FieldState, GaugeFunction]:
    """Move to Coulomb gauge with ``chi = -lap^{-1} div A``."""
    chi = -poisson_solve(divergence(state.theta, state.a), state.grid)
    g = GaugeFunction(state.grid, chi)
    return gauge_transform(state, g), g


def flux_background(grid: Grid, N: int) -> np.ndarray:
    """Links carrying ``N`` flux quanta spread uniformly over all plaquettes.

    ``theta2 = 2 pi N (i1 - n + 1) / n^2`` everywhere and ``theta1`` is zero
    except on the last column ``i1 = n - 1``, where it closes the seam and
    ``theta2`` vanishes. Every wrapped plaquette equals ``2 pi N / n^2``, and
    no site carries two nonzero links, so ``phi = 1`` has zero vorticity.
    """
    N = int(N)
    n = grid.n
    if 4 * abs(N) >= n * n:
        raise ValueError(f"|N| = {abs(N)} must be below n^2/4 = {n * n / 4}")
    theta = np.zeros((2, n, n))
    i = np.arange(n)
    theta[0][n - 1, :] = -2.0 * math.pi * N * i / n
    theta[1] = (2.0 * math.pi * N / (n * n)) * (i - (n - 1))[:, None] * np.ones(n)[None, :]
    return theta


@dataclass(frozen=True)
class H1TransformCheck:
    lhs: float
    rhs_factor: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs_factor if self.rhs_factor > 0 else 0.0


def h1_transform_check(u: np.ndarray, chi, p: float, grid: Grid) -> H1TransformCheck:
    """Compare ``||e^{i chi} u||_{H1}`` with ``(1 + ||grad chi||_{Lp}) ||u||_{H1}``."""
    if not 2 < p <= math.inf:
        raise ValueError(f"p must lie in (2, inf], got {p}")
    c = _chi_values(chi)
    a = grid.a
    lhs = norm_h1(np.exp(1j * c) * u, a)
    grad = np.hypot(forward_diff(c, 1, a), forward_diff(c, 2, a))
    return H1TransformCheck(lhs=lhs, rhs_factor=(1.0 + norm_lp(grad, a, p)) * norm_h1(u, a))
