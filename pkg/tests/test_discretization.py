from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from levyclaw.discretization import (Field, Grid, HeatKernel, divergence, heat_convolve, l1_norm, laplacian,
                                     read_field_binary, total_variation, write_field_binary, write_field_csv)
from levyclaw.errors import KernelUnderresolved
from levyclaw.mild import periodic_gaussian

bounded = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_grid_invariants():
    g = Grid(1, 64, 4.0)
    assert g.dx == 4.0 / 64
    assert np.allclose(np.diff(g.axis), g.dx)
    assert g.axis[0] == pytest.approx(-2 + g.dx / 2)
    with pytest.raises(ValueError):
        Grid(1, 4, 1.0)
    with pytest.raises(ValueError):
        Grid(3, 16, 1.0)
    assert Grid(2, 16, 1.0).shape == (16, 16)


def test_restrict_preserves_mass():
    fine, coarse = Grid(2, 32, 2.0), Grid(2, 16, 2.0)
    u = np.random.default_rng(0).normal(size=(3,) + fine.shape)
    r = fine.restrict(u, coarse)
    assert r.shape == (3, 16, 16)
    assert np.allclose(np.sum(r, axis=(1, 2)) * coarse.cell_volume, np.sum(u, axis=(1, 2)) * fine.cell_volume)


@pytest.mark.parametrize("n", [32, 64, 128])
def test_laplacian_eigenfunction(n):
    g = Grid(1, n, 2.0)
    k = 2 * np.pi / g.length
    f = np.sin(k * g.axis)
    err = np.max(np.abs(laplacian(f, g.dx, 1) + k * k * f))
    assert err <= k ** 4 * g.dx ** 2 / 12 * 1.01
    # exact discrete eigenvalue
    lam = -(2 - 2 * np.cos(k * g.dx)) / g.dx ** 2
    assert np.allclose(laplacian(f, g.dx, 1), lam * f, atol=1e-10)


def test_laplacian_of_constant_is_zero():
    for d in (1, 2):
        g = Grid(d, 16, 1.0)
        assert np.all(laplacian(np.full(g.shape, 3.7), g.dx, d) == 0)


def test_constant_face_flux_has_zero_divergence():
    g = Grid(2, 16, 1.0)
    faces = [np.full(g.shape, 2.5), np.full(g.shape, -1.0)]
    assert np.all(divergence(faces, g.dx) == 0)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (2, 12, 12), elements=bounded))
def test_divergence_is_conservative(h):
    g = Grid(2, 12, 3.0)
    div = divergence([h[0], h[1]], g.dx)
    scale = max(1.0, np.max(np.abs(h)) / g.dx)
    assert abs(np.sum(div) * g.cell_volume) <= 1e-12 * scale * h.size


def test_heat_kernel_mass():
    g = Grid(1, 256, 2.0)
    K = HeatKernel(0.05)
    for t in (0.01, 0.1, 1.0):
        assert K.mass(t, g) == pytest.approx(1.0, abs=1e-8)


def test_heat_convolve_constant():
    g = Grid(2, 32, 2.0)
    out = heat_convolve(Field(g, np.full(g.shape, 1.25)), 0.2, HeatKernel(0.1))
    assert np.allclose(out.values, 1.25, rtol=0, atol=1e-13)
    assert out.t == pytest.approx(0.2)


def test_heat_convolve_gaussian_variance():
    g = Grid(1, 512, 8.0)
    eps, t, var0 = 0.05, 0.5, 0.04
    f = periodic_gaussian(g.axis, 0.0, var0, g.length)
    out = heat_convolve(f, t, HeatKernel(eps), g)
    x = g.axis
    var = np.sum(out * x * x) / np.sum(out)
    assert var == pytest.approx(var0 + 2 * eps * t, rel=0.01)


def test_heat_convolve_mass_and_l1_contraction():
    g = Grid(1, 128, 2.0)
    u = np.random.default_rng(1).normal(size=g.shape)
    out = heat_convolve(u, 0.1, HeatKernel(0.02), g)
    assert np.sum(out) == pytest.approx(np.sum(u), rel=1e-8, abs=1e-10)
    assert l1_norm(out, g) <= l1_norm(u, g) * (1 + 1e-8)


def test_heat_kernel_gradient_scaling():
    g = Grid(1, 4096, 8.0)
    K = HeatKernel(0.1)
    r = K.gradient_l1(0.05, g) / K.gradient_l1(0.2, g)
    assert r == pytest.approx(2.0, rel=0.02)


def test_underresolved_kernel_raises():
    g = Grid(1, 64, 1.0)
    with pytest.raises(KernelUnderresolved):
        heat_convolve(np.zeros(64), 1e-6, HeatKernel(0.01), g)


def test_total_variation_of_box():
    g = Grid(1, 100, 1.0)
    u = np.where(np.abs(g.axis) < 0.2, 2.0, 0.0)
    assert total_variation(u, g) == pytest.approx(4.0)


def test_field_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        Field(Grid(1, 16, 1.0), np.zeros(8))


def test_binary_roundtrip(tmp_path):
    for d in (1, 2):
        g = Grid(d, 16, 3.0)
        f = Field(g, np.random.default_rng(d).normal(size=g.shape), 0.75)
        dest = tmp_path / f"f{d}.bin"
        write_field_binary(dest, f)
        raw = dest.read_bytes()
        assert len(raw) == 32 + 8 * f.values.size
        assert raw[:8] == b"LVYCLAWF"
        back = read_field_binary(dest, 3.0)
        assert back.t == 0.75 and np.array_equal(back.values, f.values)


def test_field_csv(tmp_path):
    g = Grid(1, 8, 1.0)
    snaps = np.arange(16.0).reshape(2, 8) / 3
    write_field_csv(tmp_path / "f.csv", [0.0, 0.5], snaps)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["t", "u_0", "u_1"]
    back = np.loadtxt(tmp_path / "f.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 1:], snaps)
    assert g.n == 8
