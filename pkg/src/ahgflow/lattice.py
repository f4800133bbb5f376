"""Periodic lattice substrate: grid, field state, covariant differences, norms.

Conventions used throughout the package:

* arrays are indexed ``[i1, i2]``; axis 0 is direction 1, axis 1 is direction 2;
* site ``(i1, i2)`` sits at ``(i1 * a, i2 * a)``;
* ``theta[j - 1][x]`` is the link angle ``a * A_j`` on the link ``x -> x + a e_j``;
* the plaquette anchored at ``x`` is the oriented square ``x, x+e1, x+e1+e2, x+e2``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft

__all__ = [
    "Grid",
    "FieldState",
    "make_grid",
    "make_state",
    "vacuum",
    "shift",
    "forward_diff",
    "backward_diff",
    "laplacian",
    "covariant_diff",
    "plaquette",
    "plaquette_field",
    "wrap_angle",
    "wrapped_plaquette",
    "curvature",
    "poisson_solve",
    "field_sum",
    "norm_l2",
    "norm_h1",
    "norm_lp",
    "fft_workers",
]


def fft_workers() -> int:
    """Worker count for spectral transforms, capped by ``AHG_THREADS``."""
    value = os.environ.get("AHG_THREADS")
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        raise ValueError(f"AHG_THREADS must be an integer, got {value!r}") from None


@dataclass(frozen=True)
class Grid:
    """Periodic ``n x n`` lattice of side ``L`` and spacing ``a = L / n``."""

    n: int
    L: float

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            raise TypeError("n must be an integer")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not (math.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be positive and finite, got {self.L}")

    @property
    def a(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def area(self) -> float:
        return self.L * self.L

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Site coordinates ``(x1, x2)`` as two ``(n, n)`` arrays."""
        s = np.arange(self.n) * self.a
        return np.meshgrid(s, s, indexing="ij")

    def laplacian_symbol(self) -> np.ndarray:
        """Eigenvalues of the 5-point Laplacian on the ``rfft2`` frequency grid."""
        k1 = np.arange(self.n)
        k2 = np.arange(self.n // 2 + 1)
        s1 = np.sin(np.pi * k1 / self.n) ** 2
        s2 = np.sin(np.pi * k2 / self.n) ** 2
        return -(4.0 / self.a**2) * (s1[:, None] + s2[None, :])


def make_grid(n: int, L: float) -> Grid:
    return Grid(n=n, L=float(L))


@dataclass(frozen=True)
class FieldState:
    """Configuration ``(A, phi)`` on a grid plus coupling and flow time.

    ``phi`` is a complex ``(n, n)`` array and ``theta`` a real ``(2, n, n)``
    array of link angles, stored unwrapped.
    """

    grid: Grid
    phi: np.ndarray
    theta: np.ndarray
    lam: float = 1.0
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        shape = self.grid.shape
        phi = np.ascontiguousarray(self.phi, dtype=np.complex128)
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if phi.shape != shape:
            raise ValueError(f"phi has shape {phi.shape}, expected {shape}")
        if theta.shape != (2,) + shape:
            raise ValueError(f"theta has shape {theta.shape}, expected {(2,) + shape}")
        if not self.lam > 0:
            raise ValueError(f"coupling lambda must be positive, got {self.lam}")
        if self.t < 0:
            raise ValueError(f"flow time must be non-negative, got {self.t}")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)

    @property
    def a(self) -> float:
        return self.grid.a

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.theta)))

    def with_fields(self, phi=None, theta=None, **changes) -> "FieldState":
        if phi is not None:
            changes["phi"] = phi
        if theta is not None:
            changes["theta"] = theta
        return replace(self, **changes)

    def copy(self) -> "FieldState":
        return replace(self, phi=self.phi.copy(), theta=self.theta.copy())


def make_state(grid: Grid, phi, theta, lam: float = 1.0, t: float = 0.0) -> FieldState:
    """Validated constructor; unlike the bare dataclass it also rejects non-finite values."""
    state = FieldState(grid=grid, phi=phi, theta=theta, lam=float(lam), t=float(t))
    if not state.is_finite():
        raise ValueError("field values must be finite")
    return state


def vacuum(grid: Grid, lam: float = 1.0) -> FieldState:
    return FieldState(
        grid=grid,
        phi=np.ones(grid.shape, dtype=np.complex128),
        theta=np.zeros((2,) + grid.shape),
        lam=lam,
    )


def shift(f: np.ndarray, direction: int, steps: int = 1) -> np.ndarray:
    """Value at ``x + steps * e_direction`` (periodic); ``direction`` is 1 or 2."""
    return np.roll(f, -steps, axis=f.ndim - 3 + direction)


def forward_diff(f: np.ndarray, direction: int, a: float) -> np.ndarray:
    return (shift(f, direction) - f) / a


def backward_diff(f: np.ndarray, direction: int, a: float) -> np.ndarray:
    return (f - shift(f, direction, -1)) / a


def laplacian(f: np.ndarray, a: float) -> np.ndarray:
    """5-point periodic Laplacian."""
    return (
        shift(f, 1) + shift(f, 1, -1) + shift(f, 2) + shift(f, 2, -1) - 4.0 * f
    ) / (a * a)


def _check_shapes(phi: np.ndarray, theta: np.ndarray) -> None:
    if theta.shape != (2,) + phi.shape:
        raise ValueError(f"phi {phi.shape} and links {theta.shape} are on different grids")


def covariant_diff(phi: np.ndarray, theta: np.ndarray, direction: int, a: float) -> np.ndarray:
    """Forward covariant difference ``(e^{-i theta_j} phi(x + a e_j) - phi(x)) / a``."""
    _check_shapes(phi, theta)
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    return (np.exp(-1j * theta[direction - 1]) * shift(phi, direction) - phi) / a


def plaquette(theta: np.ndarray) -> np.ndarray:
    """Unwrapped plaquette angle ``theta1(x) + theta2(x+e1) - theta1(x+e2) - theta2(x)``."""
    t1, t2 = theta[0], theta[1]
    return t1 + shift(t2, 1) - shift(t1, 2) - t2


def wrap_angle(p: np.ndarray) -> np.ndarray:
    """Map angles into ``(-pi, pi]``."""
    w = np.remainder(p + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def wrapped_plaquette(theta: np.ndarray) -> np.ndarray:
    return wrap_angle(plaquette(theta))


def curvature(theta: np.ndarray, a: float) -> np.ndarray:
    """Lattice magnetic field ``F12`` from the wrapped plaquette angle."""
    return wrapped_plaquette(theta) / (a * a)


def poisson_solve(rhs: np.ndarray, grid: Grid) -> np.ndarray:
    """Zero-mean solution of the 5-point Poisson problem ``lap u = rhs``.

    The mean of ``rhs`` is removed first; the discrete Laplacian is inverted
    exactly on each lattice Fourier mode.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    rhs = rhs - rhs.mean()
    workers = fft_workers()
    spec = scipy.fft.rfft2(rhs, workers=workers)
    symbol = grid.laplacian_symbol()
    symbol[0, 0] = 1.0
    spec /= symbol
    spec[0, 0] = 0.0
    return scipy.fft.irfft2(spec, s=grid.shape, workers=workers)


def field_sum(f: np.ndarray) -> float:
    """Deterministic (pairwise, fixed-order) sum over all sites."""
    return float(np.sum(np.ravel(f)))


def norm_l2(f: np.ndarray, a: float) -> float:
    f = np.asarray(f)
    return math.sqrt(a * a * field_sum(np.abs(f) ** 2))


def norm_h1(f: np.ndarray, a: float) -> float:
    """Discrete H1 norm; for a stack of components ``(k, n, n)`` the norms add in quadrature."""
    f = np.asarray(f)
    if f.ndim == 3:
        return math.sqrt(sum(norm_h1(c, a) ** 2 for c in f))
    total = norm_l2(f, a) ** 2
    for d in (1, 2):
        total += norm_l2(forward_diff(f, d, a), a) ** 2
    return math.sqrt(total)


def norm_lp(f: np.ndarray, a: float, p: float) -> float:
    if not 1 <= p <= math.inf:
        raise ValueError(f"p must lie in [1, inf], got {p}")
    mag = np.abs(np.asarray(f))
    if math.isinf(p):
        return float(mag.max())
    return (a * a * field_sum(mag**p)) ** (1.0 / p)


def plaquette_field(theta: np.ndarray, a: float) -> np.ndarray:
    """Unwrapped lattice curvature ``P / a^2``, kept for reference.

    The energies use :func:`curvature`, which wraps ``P`` first.
    """
    return plaquette(theta) / (a * a)
