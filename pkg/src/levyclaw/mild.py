"""Picard iteration of the mild (heat-kernel) form of the viscous equation.

Given a previous iterate u^{n-1}, the next one is

    u^n(t) = G(t) * u0 - int_0^t G(t-s) * div F(u^{n-1}(s)) ds
             + sum_{tau <= t} G(t-tau) * eta(u^{n-1}(tau-), z_tau)
             - int_0^t G(t-s) * int_{|z| >= cutoff} eta(u^{n-1}(s), z) m(dz) ds.

The time integrals are advanced interval by interval with the semigroup
property: over [t_j, t_{j+1}] of length h,

    v(t_{j+1}) = G(h) * v(t_j) - h G(h/2) * [div F + drift](u^{n-1} at the midpoint),

which is the midpoint rule for the Duhamel integral. Jump times are nodes of
the time grid so that jumps land exactly. The flux divergence uses a
fourth-order centered difference; heat convolution uses the periodized
kernel from :mod:`levyclaw.discretization`. Intervals too short for the
kernel to cover a cell fall back to one explicit heat step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import FluxModel, NoiseAmplitude, z_weight
from .discretization import Field, Grid, HeatKernel, heat_convolve, laplacian
from .errors import KernelUnderresolved
from .noise import NoisePath

__all__ = ["MildIterate", "picard_mild_iterate", "advection_diffusion_exact", "periodic_gaussian"]


@dataclass
class MildIterate:
    """One Picard iterate on the time grid: left and right limits at every node."""

    times: np.ndarray     # (J,)
    left: np.ndarray      # (J, N) u(t_j-)
    right: np.ndarray     # (J, N) u(t_j+)
    grid: Grid

    def at(self, t: float) -> np.ndarray:
        """Right limit at a node time."""
        j = int(np.searchsorted(self.times, t - 1e-14 * max(1.0, abs(t))))
        if j >= len(self.times) or abs(self.times[j] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"t = {t} is not a node of the time grid")
        return self.right[j]

    @property
    def final(self) -> np.ndarray:
        return self.left[-1] if self.times[-1] else self.right[-1]


def _ddx4(f: np.ndarray, dx: float) -> np.ndarray:
    return (-np.roll(f, -2) + 8 * np.roll(f, -1) - 8 * np.roll(f, 1) + np.roll(f, 2)) / (12 * dx)


def _semigroup(u: np.ndarray, h: float, kernel: HeatKernel, grid: Grid) -> np.ndarray:
    if h <= 0:
        return u
    try:
        return heat_convolve(u, h, kernel, grid)
    except KernelUnderresolved:
        return u + kernel.eps * h * laplacian(u, grid.dx, 1)


def _time_grid(horizon: float, dt: float, event_times: np.ndarray, extra=()) -> np.ndarray:
    n = max(1, int(math.ceil(horizon / dt - 1e-12)))
    base = np.linspace(0.0, horizon, n + 1)
    nodes = np.concatenate([base, np.asarray(event_times, dtype=float), np.asarray(extra, dtype=float)])
    return np.unique(nodes)


def picard_mild_iterate(u0: Field, path: NoisePath, eps: float, flux: FluxModel, eta: NoiseAmplitude,
                        n: int, horizon: float | None = None, dt: float | None = None,
                        extra_times=()) -> list[MildIterate]:
    """Return iterates u^0 (constant in time), u^1, ..., u^n on a shared time grid.

    ``dt`` defaults to 2 dx^2 / eps so that G(dt/2) spans at least one cell.
    """
    grid = u0.grid
    if grid.d != 1:
        raise ValueError("the mild oracle is one-dimensional")
    if not eps > 0:
        raise ValueError("the mild oracle needs eps > 0")
    if n < 0:
        raise ValueError("iteration count must be non-negative")
    T = path.horizon if horizon is None else float(horizon)
    dt = 2.0 * grid.dx ** 2 / eps if dt is None else float(dt)
    kernel = HeatKernel(eps)
    ev_t = np.asarray(path.times, dtype=float)
    ev_z = np.asarray(path.marks, dtype=float)
    keep = ev_t <= T
    ev_t, ev_z = ev_t[keep], ev_z[keep]
    times = _time_grid(T, dt, ev_t, extra_times)
    J = len(times)
    # events per node (simultaneous events are applied in order)
    node_of_event = np.searchsorted(times, ev_t)
    amp = eta.bind(grid.coords())
    m1 = float(path.compensator.get("min1", 0.0))
    drift_on = (not eta.is_zero) and m1 > 0

    base = np.broadcast_to(u0.values, (J, grid.n)).copy()
    iterates = [MildIterate(times, base, base.copy(), grid)]
    for _ in range(n):
        prev = iterates[-1]
        left = np.empty((J, grid.n))
        right = np.empty((J, grid.n))
        v = u0.values.copy()
        left[0] = v
        for e in np.nonzero(node_of_event == 0)[0]:
            v = v + amp(prev.left[0]) * z_weight(ev_z[e])
        right[0] = v
        for j in range(J - 1):
            h = times[j + 1] - times[j]
            mid = 0.5 * (prev.right[j] + prev.left[j + 1])
            src = np.zeros(grid.n)
            if not flux.is_zero:
                src = src + flux.direction[0] * _ddx4(flux.f(mid), grid.dx)
            if drift_on:
                src = src + m1 * amp(mid)
            v = _semigroup(v, h, kernel, grid)
            if np.any(src):
                v = v - h * _semigroup(src, 0.5 * h, kernel, grid)
            left[j + 1] = v
            for e in np.nonzero(node_of_event == j + 1)[0]:
                v = v + amp(prev.left[j + 1]) * z_weight(ev_z[e])
            right[j + 1] = v
        iterates.append(MildIterate(times, left, right, grid))
    return iterates


def periodic_gaussian(x, center: float, var: float, length: float, amplitude: float = 1.0,
                      images: int = 4) -> np.ndarray:
    """amplitude * sum_m exp(-(x - center - m L)^2 / (2 var)), periodized."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for m in range(-images, images + 1):
        out += np.exp(-(x - center - m * length) ** 2 / (2 * var))
    return amplitude * out


def advection_diffusion_exact(x, t: float, c: float, eps: float, center: float, var0: float,
                              length: float, amplitude: float = 1.0) -> np.ndarray:
    """Closed form for u_t + c u_x = eps u_xx with periodized Gaussian data."""
    var = var0 + 2 * eps * t
    return periodic_gaussian(x, center + c * t, var, length, amplitude * math.sqrt(var0 / var))
