"""Periodic grids, fields, difference operators and the heat kernel.

Operators act on the trailing ``d`` axes of an array, so a batch of fields
with shape (P, N) or (P, N, N) is handled the same way as a single field.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import KernelUnderresolved

__all__ = [
    "Grid",
    "Field",
    "HeatKernel",
    "heat_convolve",
    "divergence",
    "laplacian",
    "forward_gradient",
    "l1_norm",
    "lp_norm_p",
    "total_variation",
    "write_field_csv",
    "write_field_binary",
    "read_field_binary",
    "BINARY_MAGIC",
]

BINARY_MAGIC = b"LVYCLAWF"


@dataclass(frozen=True)
class Grid:
    d: int
    n: int
    length: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if self.n < 8:
            raise ValueError(f"need at least 8 cells per axis, got {self.n}")
        if not self.length > 0:
            raise ValueError("period must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.d

    @property
    def axis(self) -> np.ndarray:
        """Cell centers along one axis, on [-L/2, L/2)."""
        return -0.5 * self.length + (np.arange(self.n) + 0.5) * self.dx

    def coords(self) -> tuple[np.ndarray, ...]:
        if self.d == 1:
            return (self.axis,)
        return tuple(np.meshgrid(self.axis, self.axis, indexing="ij"))

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.d, self.n * factor, self.length)

    def restrict(self, values: np.ndarray, coarse: "Grid") -> np.ndarray:
        """Block-average values from this grid onto a coarser grid with the same period."""
        if self.n % coarse.n:
            raise ValueError("coarse grid must divide the fine grid")
        r = self.n // coarse.n
        lead = values.shape[: values.ndim - self.d]
        if self.d == 1:
            return values.reshape(*lead, coarse.n, r).mean(axis=-1)
        return values.reshape(*lead, coarse.n, r, coarse.n, r).mean(axis=(-3, -1))


@dataclass
class Field:
    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    @classmethod
    def from_function(cls, grid: Grid, fn, t: float = 0.0) -> "Field":
        return cls(grid, np.asarray(fn(grid.coords()), dtype=float) * np.ones(grid.shape), t)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def _axes(d: int) -> tuple[int, ...]:
    return tuple(range(-d, 0))


def laplacian(u: np.ndarray, dx: float, d: int) -> np.ndarray:
    """Second-order centered Laplacian on a periodic grid."""
    out = None
    for ax in _axes(d):
        # neighbor differences, so constants give exactly zero
        term = (np.roll(u, 1, axis=ax) - u) + (np.roll(u, -1, axis=ax) - u)
        out = term if out is None else out + term
    return out / dx ** 2


def forward_gradient(u: np.ndarray, dx: float, d: int) -> list[np.ndarray]:
    """(u_{i+1} - u_i) / dx along each axis; face i+1/2 is stored at index i."""
    return [(np.roll(u, -1, axis=ax) - u) / dx for ax in _axes(d)]


def divergence(face_fluxes: Sequence[np.ndarray], dx: float) -> np.ndarray:
    """Conservative divergence of per-face fluxes (face i+1/2 stored at index i)."""
    d = len(face_fluxes)
    out = None
    for h, ax in zip(face_fluxes, _axes(d)):
        term = (h - np.roll(h, 1, axis=ax)) / dx
        out = term if out is None else out + term
    return out


def l1_norm(u: np.ndarray, grid: Grid) -> np.ndarray:
    return np.sum(np.abs(u), axis=_axes(grid.d)) * grid.cell_volume


def lp_norm_p(u: np.ndarray, grid: Grid, p: int) -> np.ndarray:
    return np.sum(np.abs(u) ** p, axis=_axes(grid.d)) * grid.cell_volume


def total_variation(u: np.ndarray, grid: Grid) -> float:
    tv = 0.0
    for ax in _axes(grid.d):
        tv += float(np.sum(np.abs(np.roll(u, -1, axis=ax) - u))) * grid.dx ** (grid.d - 1)
    return tv


@dataclass(frozen=True)
class HeatKernel:
    """Periodized heat kernel G(t, x) = (4 pi eps t)^(-d/2) exp(-|x|^2 / (4 eps t))."""

    eps: float
    radius_factor: float = 8.0

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        return (4 * math.pi * self.eps * t) ** -0.5 * np.exp(-x * x / (4 * self.eps * t))

    def d1_weights(self, t: float, grid: Grid) -> np.ndarray:
        """Folded 1-D weights w_j = G(t, j dx) dx, j taken mod N.

        The kernel is tabulated out to radius_factor * sqrt(eps t), folded
        onto the torus, which periodizes it, and normalized to unit sum so the
        truncated tail does not leak mass.
        """
        if not t > 0:
            raise ValueError("kernel time must be positive")
        width = math.sqrt(self.eps * t)
        if width < grid.dx:
            raise KernelUnderresolved(
                f"sqrt(eps t) = {width:.3e} is below the cell size {grid.dx:.3e}")
        r = int(math.ceil(self.radius_factor * width / grid.dx))
        j = np.arange(-r, r + 1)
        vals = self(t, j * grid.dx) * grid.dx
        w = np.zeros(grid.n)
        np.add.at(w, j % grid.n, vals)
        return w / np.sum(w)

    def mass(self, t: float, grid: Grid) -> float:
        return float(np.sum(self.d1_weights(t, grid)) ** grid.d)

    def gradient_l1(self, t: float, grid: Grid) -> float:
        """sum_i |d/dx G(t, x_i)| dx over the (unfolded) tabulation."""
        width = math.sqrt(self.eps * t)
        r = int(math.ceil(self.radius_factor * width / grid.dx))
        x = np.arange(-r, r + 1) * grid.dx
        dg = -x / (2 * self.eps * t) * self(t, x)
        return float(np.sum(np.abs(dg)) * grid.dx)


def _circular_apply(w: np.ndarray, u: np.ndarray, axis: int) -> np.ndarray:
    # out_i = sum_j w_j u_{i-j} along the given axis, direct summation
    n = w.shape[0]
    nz = np.nonzero(w)[0]
    out = np.zeros_like(u, dtype=float)
    for j in nz:
        out += w[j] * np.roll(u, int(j), axis=axis)
    return out


def heat_convolve(f: Field | np.ndarray, t: float, kernel: HeatKernel, grid: Grid | None = None):
    """Discrete periodic convolution with the periodized heat kernel.

    Accepts a Field (returns a Field at time f.t + t) or a raw array with an
    explicit grid (returns an array; leading batch axes are allowed).
    """
    if isinstance(f, Field):
        out = heat_convolve(f.values, t, kernel, f.grid)
        return Field(f.grid, out, f.t + t)
    w = kernel.d1_weights(t, grid)
    u = np.asarray(f, dtype=float)
    for ax in _axes(grid.d):
        u = _circular_apply(w, u, ax)
    return u


# ---------------------------------------------------------------------------
# exports

def write_field_csv(dest: str | Path, times: Sequence[float], snapshots: np.ndarray) -> None:
    """One row per save time; columns t, u_0, u_1, ... (2-D fields are flattened row-major)."""
    snaps = np.asarray(snapshots, dtype=float)
    flat = snaps.reshape(len(times), -1)
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"u_{i}" for i in range(flat.shape[1])])
        for t, row in zip(times, flat):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def write_field_binary(dest: str | Path, field: Field) -> None:
    """32-byte header (magic[8], d:u32, N:u32, reserved:u64, t:f64) + little-endian f64 values."""
    header = struct.pack("<8sIIQd", BINARY_MAGIC, field.grid.d, field.grid.n, 0, float(field.t))
    assert len(header) == 32
    with open(dest, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field_binary(src: str | Path, length: float) -> Field:
    raw = Path(src).read_bytes()
    magic, d, n, _, t = struct.unpack("<8sIIQd", raw[:32])
    if magic != BINARY_MAGIC:
        raise ValueError("not a levyclaw field file")
    grid = Grid(d, n, length)
    vals = np.frombuffer(raw[32:], dtype="<f8").reshape(grid.shape).copy()
    return Field(grid, vals, t)
