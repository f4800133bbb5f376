"""Binary state files.

Layout (little-endian): magic ``b"AHG1"``, version ``u32``, ``n`` as ``u64``,
``L``, ``lambda``, ``t`` as ``f64``, then ``phi`` as ``2 n^2`` interleaved
``(re, im)`` values, then ``theta1`` and ``theta2`` as ``n^2`` values each,
all row-major over ``[i1, i2]``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..lattice import FieldState, Grid

MAGIC = b"AHG1"
VERSION = 1
_HEADER = struct.Struct("<4sIQddd")


class StateFileError(ValueError):
    """Malformed, truncated or incompatible state file."""


def encode_state(state: FieldState) -> bytes:
    n = state.grid.n
    head = _HEADER.pack(MAGIC, VERSION, n, state.grid.L, state.lam, state.t)
    phi = np.empty((n, n, 2), dtype="<f8")
    phi[..., 0] = state.phi.real
    phi[..., 1] = state.phi.imag
    theta = np.ascontiguousarray(state.theta, dtype="<f8")
    return head + phi.tobytes() + theta.tobytes()


def decode_state(data: bytes) -> FieldState:
    if len(data) < _HEADER.size:
        raise StateFileError("file too short for a state header")
    magic, version, n, L, lam, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise StateFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StateFileError(f"unsupported version {version}")
    expected = _HEADER.size + 8 * 4 * n * n
    if len(data) != expected:
        raise StateFileError(f"expected {expected} bytes for n = {n}, found {len(data)}")
    try:
        grid = Grid(int(n), float(L))
    except (TypeError, ValueError) as exc:
        raise StateFileError(str(exc)) from None
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    phi_raw = body[: 2 * n * n].reshape(n, n, 2)
    phi = phi_raw[..., 0] + 1j * phi_raw[..., 1]
    theta = body[2 * n * n :].reshape(2, n, n).astype(np.float64)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(theta))):
        raise StateFileError("state contains non-finite values")
    try:
        return FieldState(grid=grid, phi=phi, theta=theta, lam=float(lam), t=float(t))
    except ValueError as exc:
        raise StateFileError(str(exc)) from None


def save_state(state: FieldState, path) -> None:
    Path(path).write_bytes(encode_state(state))


def load_state(path) -> FieldState:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StateFileError(f"cannot read {path}: {exc}") from None
    return decode_state(data)
