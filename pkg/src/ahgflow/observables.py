"""Gauge-invariant functionals of a field configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .lattice import (
    FieldState,
    covariant_diff,
    curvature,
    field_sum,
    shift,
    wrapped_plaquette,
)

__all__ = [
    "DegenerateWrapError",
    "ZeroAmbiguityError",
    "TensionField",
    "Zero",
    "ZeroSet",
    "energy",
    "energy_density",
    "bogomolnyi_energy",
    "tension_field",
    "vorticity",
    "degree_vorticity",
    "degree_plaquette",
    "bogomolnyi_identity_defect",
    "locate_zeros",
    "WRAP_MARGIN",
    "ZERO_THRESHOLD",
]

WRAP_MARGIN = 1e-6
ZERO_THRESHOLD = 1e-8


class DegenerateWrapError(ValueError):
    """A plaquette angle sits too close to the branch cut for a reliable degree."""


class ZeroAmbiguityError(ValueError):
    """The scalar field vanishes at a plaquette corner."""


def _derivatives(state: FieldState):
    a = state.a
    d1 = covariant_diff(state.phi, state.theta, 1, a)
    d2 = covariant_diff(state.phi, state.theta, 2, a)
    return d1, d2, curvature(state.theta, a)


def energy_density(state: FieldState) -> np.ndarray:
    d1, d2, f = _derivatives(state)
    pot = 1.0 - np.abs(state.phi) ** 2
    return 0.5 * (
        np.abs(d1) ** 2 + np.abs(d2) ** 2 + f**2 + 0.25 * state.lam * pot**2
    )


def energy(state: FieldState) -> float:
    """Discrete abelian Higgs energy ``1/2 a^2 sum(|D1 phi|^2 + |D2 phi|^2 + F^2 + lam/4 (1-|phi|^2)^2)``."""
    return state.a**2 * field_sum(energy_density(state))


@dataclass(frozen=True)
class TensionField:
    """Bogomol'nyi tension pair ``(G, 2 D_zbar phi)`` with ``G = (1-|phi|^2)/2 - F12``."""

    gauss: np.ndarray
    dbar: np.ndarray
    a: float

    def gauss_l2sq(self) -> float:
        return self.a**2 * field_sum(self.gauss**2)

    def dbar_l2sq(self) -> float:
        return self.a**2 * field_sum(np.abs(self.dbar) ** 2)

    def l2sq(self) -> float:
        return self.gauss_l2sq() + self.dbar_l2sq()


def tension_field(state: FieldState) -> TensionField:
    d1, d2, f = _derivatives(state)
    gauss = 0.5 * (1.0 - np.abs(state.phi) ** 2) - f
    return TensionField(gauss=gauss, dbar=d1 + 1j * d2, a=state.a)


def bogomolnyi_energy(state: FieldState) -> float:
    """``E_dbar = 1/2 (||2 D_zbar phi||^2 + ||G||^2)``."""
    return 0.5 * tension_field(state).l2sq()


def vorticity(state: FieldState) -> np.ndarray:
    """``omega = (1 - |phi|^2) F12 + 2 Im(conj(D1 phi) D2 phi)`` per site."""
    d1, d2, f = _derivatives(state)
    return (1.0 - np.abs(state.phi) ** 2) * f + 2.0 * np.imag(np.conj(d1) * d2)


def degree_vorticity(state: FieldState) -> float:
    return state.a**2 * field_sum(vorticity(state)) / (2.0 * math.pi)


def degree_plaquette(theta: np.ndarray | FieldState) -> int:
    """Integer flux ``(1/2pi) sum wrap(P)``.

    Raises :class:`DegenerateWrapError` when some wrapped plaquette is within
    ``WRAP_MARGIN`` of ``pi``.
    """
    if isinstance(theta, FieldState):
        theta = theta.theta
    w = wrapped_plaquette(theta)
    worst = float(np.max(np.abs(w)))
    if worst > math.pi - WRAP_MARGIN:
        raise DegenerateWrapError(
            f"plaquette angle {worst:.9f} is within {WRAP_MARGIN} of pi; degree unreliable"
        )
    total = field_sum(w) / (2.0 * math.pi)
    deg = round(total)
    # The sum of wrapped angles is an integer multiple of 2 pi up to rounding.
    if abs(total - deg) > 1e-6:
        raise DegenerateWrapError(f"wrapped plaquette sum {total} is not an integer")
    return int(deg)


def bogomolnyi_identity_defect(state: FieldState) -> float:
    """``E - E_dbar - pi * deg``; vanishes in the continuum limit."""
    return energy(state) - bogomolnyi_energy(state) - math.pi * degree_plaquette(state.theta)


@dataclass(frozen=True)
class Zero:
    position: tuple[float, float]
    winding: int


@dataclass(frozen=True)
class ZeroSet:
    zeros: tuple[Zero, ...]

    def __len__(self) -> int:
        return len(self.zeros)

    def __iter__(self):
        return iter(self.zeros)

    @property
    def total_winding(self) -> int:
        return sum(z.winding for z in self.zeros)

    def positions(self) -> np.ndarray:
        return np.array([z.position for z in self.zeros], dtype=float).reshape(-1, 2)


def _plaquette_windings(phi: np.ndarray, theta: np.ndarray | None) -> np.ndarray:
    # Gauge-covariant phase differences along each link; with links present the
    # wrapped flux closes the loop so the windings add up to the plaquette degree.
    if theta is None:
        g1 = np.angle(np.conj(phi) * shift(phi, 1))
        g2 = np.angle(np.conj(phi) * shift(phi, 2))
        flux = 0.0
    else:
        g1 = np.angle(np.conj(phi) * np.exp(-1j * theta[0]) * shift(phi, 1))
        g2 = np.angle(np.conj(phi) * np.exp(-1j * theta[1]) * shift(phi, 2))
        flux = wrapped_plaquette(theta)
    loop = g1 + shift(g2, 1) - shift(g1, 2) - g2 + flux
    return np.rint(loop / (2.0 * math.pi)).astype(int)


def _circular_mean(idx: np.ndarray, weights: np.ndarray, n: int) -> float:
    ang = 2.0 * math.pi * (idx + 0.5) / n
    z = np.sum(weights * np.exp(1j * ang))
    if abs(z) < 1e-12:
        return float(np.mean(idx) + 0.5) % n
    return (math.atan2(z.imag, z.real) % (2.0 * math.pi)) * n / (2.0 * math.pi)


def locate_zeros(phi: np.ndarray | FieldState, theta: np.ndarray | None = None, L: float | None = None) -> ZeroSet:
    """Zeros of ``phi`` from plaquette phase windings.

    Pass a :class:`FieldState` (or ``phi`` together with its links ``theta``)
    for the gauge-covariant count, whose windings sum to the plaquette
    degree. With bare ``phi`` the plain phase of ``phi`` is used. Flagged
    plaquettes that touch each other (periodically) are merged into one zero
    whose winding is the cluster total; clusters with zero net winding are
    dropped. Positions are plaquette centres in physical units when ``L`` is
    known, else in lattice units.
    """
    if isinstance(phi, FieldState):
        state = phi
        phi, theta, L = state.phi, state.theta, state.grid.L
    phi = np.asarray(phi, dtype=np.complex128)
    n = phi.shape[0]
    if theta is not None and np.asarray(theta).shape != (2,) + phi.shape:
        raise ValueError("phi and links are on different grids")
    small = np.abs(phi) < ZERO_THRESHOLD
    if np.any(small):
        i1, i2 = np.argwhere(small)[0]
        raise ZeroAmbiguityError(f"|phi| < {ZERO_THRESHOLD} at site ({i1}, {i2})")
    wind = _plaquette_windings(phi, theta)
    scale = (L / n) if L is not None else 1.0

    labels, _ = ndimage.label(wind != 0)
    # Join clusters across the periodic seams.
    merged = True
    while merged:
        merged = False
        for axis in (0, 1):
            first = np.take(labels, 0, axis=axis)
            last = np.take(labels, -1, axis=axis)
            for p, q in zip(first, last):
                if p and q and p != q:
                    labels[labels == max(p, q)] = min(p, q)
                    merged = True
                    break

    zeros = []
    for lab in np.unique(labels[labels > 0]):
        mask = labels == lab
        total = int(wind[mask].sum())
        if total == 0:
            continue
        idx = np.argwhere(mask)
        w = np.abs(wind[mask]).astype(float)
        c1 = _circular_mean(idx[:, 0], w, n)
        c2 = _circular_mean(idx[:, 1], w, n)
        zeros.append(Zero(position=(c1 * scale, c2 * scale), winding=total))
    zeros.sort(key=lambda z: z.position)
    return ZeroSet(zeros=tuple(zeros))
