"""Post-processing: decay fits, configuration distances, stability ratios, refinement studies."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import FieldState, Grid, norm_h1, norm_l2
from .observables import degree_plaquette, energy

__all__ = [
    "DecayFit",
    "DistanceReport",
    "ConvergenceStudy",
    "InsufficientDataError",
    "fit_decay_rate",
    "config_distance",
    "distance_series",
    "stability_ratio",
    "convergence_order",
    "EPS_FLOOR",
]

EPS_FLOOR = 1e-14


class InsufficientDataError(ValueError):
    """Too few usable samples for a fit."""


@dataclass(frozen=True)
class DecayFit:
    gamma: float
    logC: float
    r2: float
    window: tuple[float, float]
    samples: int = 0

    def predict(self, t) -> np.ndarray:
        return np.exp(self.logC - self.gamma * np.asarray(t, dtype=float))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def fit_decay_rate(series, burn_in: float = 2.0, t_end: float | None = None, min_samples: int = 10) -> DecayFit:
    """Least-squares line through ``(t, log v)`` for ``burn_in <= t <= t_end``.

    ``series`` is a sequence of ``(t, v)`` pairs or a ``(2, m)`` array. The
    fitted slope is ``-gamma``.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2:
        raise InsufficientDataError("series must be a list of (t, value) pairs")
    if arr.shape[1] != 2 and arr.shape[0] == 2:
        arr = arr.T
    t, v = arr[:, 0], arr[:, 1]
    sel = t >= burn_in
    if t_end is not None:
        sel &= t <= t_end
    t, v = t[sel], v[sel]
    if t.size < min_samples:
        raise InsufficientDataError(f"need at least {min_samples} samples after burn-in, got {t.size}")
    if np.any(~(v > 0)):
        raise ValueError("decay fits need strictly positive values")
    y = np.log(v)
    tm, ym = t.mean(), y.mean()
    stt = float(np.sum((t - tm) ** 2))
    if stt == 0:
        raise InsufficientDataError("all samples share one time")
    slope = float(np.sum((t - tm) * (y - ym)) / stt)
    intercept = float(ym - slope * tm)
    ss_res = float(np.sum((y - intercept - slope * t) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    # A flat series has no variance to explain; rounding leaves ss_tot ~ eps^2.
    flat = ss_tot <= (1e-12 * max(1.0, abs(ym))) ** 2 * y.size
    r2 = 1.0 if flat else 1.0 - ss_res / ss_tot
    return DecayFit(gamma=-slope, logC=intercept, r2=r2, window=(float(t[0]), float(t[-1])), samples=int(t.size))


@dataclass(frozen=True)
class DistanceReport:
    dA_h1: float
    dphi_l2: float
    dphi_h1: float

    def squared(self) -> float:
        """``dA_h1^2 + dphi_l2^2``."""
        return self.dA_h1**2 + self.dphi_l2**2

    def to_dict(self) -> dict:
        return asdict(self)


def config_distance(s1: FieldState, s2: FieldState) -> DistanceReport:
    """Distances between two states in the gauges they are given in."""
    if s1.grid != s2.grid:
        raise ValueError("states live on different grids")
    a = s1.a
    dphi = s1.phi - s2.phi
    return DistanceReport(
        dA_h1=norm_h1((s1.theta - s2.theta) / a, a),
        dphi_l2=norm_l2(dphi, a),
        dphi_h1=norm_h1(dphi, a),
    )


def distance_series(checkpoints: dict, final: FieldState) -> list[tuple[float, float]]:
    """``(t, dA_h1^2 + dphi_l2^2)`` from each checkpoint to ``final``, excluding ``final`` itself."""
    out = []
    for t in sorted(checkpoints):
        d = config_distance(checkpoints[t], final).squared()
        if checkpoints[t] is not final and d > 0:
            out.append((float(t), d))
    return out


def _reference_state(reference):
    state = getattr(reference, "state", reference)
    N = getattr(reference, "N", None)
    if N is None:
        N = degree_plaquette(state.theta)
    return state, int(N)


def stability_ratio(state: FieldState, reference, eps_floor: float = EPS_FLOOR) -> float:
    """``(dA_h1^2 + dphi_l2^2) / max(E - pi N, eps_floor)`` against a given vortex."""
    ref, N = _reference_state(reference)
    if ref.grid != state.grid:
        raise ValueError("state and reference live on different grids")
    deg = degree_plaquette(state.theta)
    if deg != N:
        raise ValueError(f"degree {deg} does not match the reference degree {N}")
    num = config_distance(state, ref).squared()
    if num == 0.0:
        return 0.0
    return num / max(energy(state) - math.pi * N, eps_floor)


@dataclass(frozen=True)
class ConvergenceStudy:
    order: float
    spacings: tuple
    values: tuple
    monotone: bool


def convergence_order(
    builder: Callable[[Grid], object],
    quantity: Callable[[object], float],
    grids: Sequence,
    L: float | None = None,
) -> ConvergenceStudy:
    """Slope of ``log|quantity|`` against ``log a`` over a refinement sequence.

    ``grids`` holds :class:`Grid` objects, or site counts ``n`` together with
    ``L``. Data whose magnitude does not shrink monotonically under refinement
    are flagged with a warning and ``monotone=False``.
    """
    gs = [g if isinstance(g, Grid) else Grid(int(g), float(L)) for g in grids]
    if len(gs) < 3:
        raise InsufficientDataError("need at least three grids")
    gs.sort(key=lambda g: -g.a)
    ratios = [gs[i].a / gs[i + 1].a for i in range(len(gs) - 1)]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("grids must form a geometric progression")
    spacings = np.array([g.a for g in gs])
    values = np.array([abs(float(quantity(builder(g)))) for g in gs])
    if np.any(values == 0):
        raise ValueError("quantity vanished on some grid; the order is undefined")
    monotone = bool(np.all(np.diff(values) < 0))
    if not monotone:
        warnings.warn("refinement data are not monotone", RuntimeWarning, stacklevel=2)
    slope = float(np.polyfit(np.log(spacings), np.log(values), 1)[0])
    return ConvergenceStudy(order=slope, spacings=tuple(spacings), values=tuple(values), monotone=monotone)
