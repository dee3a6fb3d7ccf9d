"""Binary checkpoints of the flow state.

Layout, all little-endian::

    b"NCHF"  u16 version
    u32 dim  u32 res  f64 side
    u32 L    f64 t
    f64[res^dim * L]  map values, row-major cells, ambient index fastest
    f64[res^dim]      w values, row-major cells
"""

from __future__ import annotations

import struct

import numpy as np

from .exceptions import CheckpointError, GridError
from .flow import FlowState
from .grid import GridSpec

MAGIC = b"NCHF"
VERSION = 1
_HEAD = struct.Struct("<4sHIIdId")


def dumps(grid: GridSpec, state: FlowState) -> bytes:
    L = state.f.shape[-1]
    if state.f.shape != grid.shape + (L,) or state.w.shape != grid.shape:
        raise CheckpointError("state does not match grid")
    head = _HEAD.pack(MAGIC, VERSION, grid.dim, grid.res, grid.side, L, float(state.t))
    f = np.ascontiguousarray(state.f, dtype="<f8").tobytes()
    w = np.ascontiguousarray(state.w, dtype="<f8").tobytes()
    return head + f + w


def loads(data: bytes) -> tuple[GridSpec, FlowState]:
    if len(data) < _HEAD.size:
        raise CheckpointError("checkpoint truncated: header incomplete")
    magic, version, dim, res, side, L, t = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not a checkpoint")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        grid = GridSpec(dim, res, side)
    except GridError as exc:
        raise CheckpointError(f"invalid grid in checkpoint: {exc}") from exc
    N = grid.n_cells
    expected = _HEAD.size + 8 * N * (L + 1)
    if len(data) != expected:
        raise CheckpointError(f"checkpoint size {len(data)} != expected {expected}")
    off = _HEAD.size
    f = np.frombuffer(data, dtype="<f8", count=N * L, offset=off).astype(float)
    w = np.frombuffer(data, dtype="<f8", count=N, offset=off + 8 * N * L).astype(float)
    return grid, FlowState(t, f.reshape(grid.shape + (L,)), w.reshape(grid.shape))


def save(path, grid: GridSpec, state: FlowState):
    with open(path, "wb") as fh:
        fh.write(dumps(grid, state))


def load(path) -> tuple[GridSpec, FlowState]:
    with open(path, "rb") as fh:
        return loads(fh.read())


def describe(grid: GridSpec, state: FlowState) -> dict:
    """Summary used by the ``inspect`` command."""
    w = state.w
    return {
        "version": VERSION,
        "dim": grid.dim,
        "res": grid.res,
        "side": grid.side,
        "L": state.f.shape[-1],
        "t": state.t,
        "min_w": float(w.min()),
        "max_w": float(w.max()),
        "constraint_residual": float(np.max(np.abs(np.linalg.norm(state.f, axis=-1) - 1.0))),
    }
