import math

import numpy as np
import pytest
from scipy.optimize import check_grad

from conetorsion.geometry import (ConeSpec, PolarGraph, isoperimetric_gap, random_profile,
                                  volume)
from conetorsion.shapeflow import (DeformationField, MeshParams, finite_difference_derivative,
                                   flow_perimeter, flow_torsion, overdetermined_residual,
                                   polar_curvature, polygon_ratio, project_volume_preserving,
                                   shape_derivative)

COARSE = MeshParams(target_h=0.04)


@pytest.mark.parametrize("kind", ["planar", "axisym"])
def test_projection_removes_volume_change(kind):
    cone = ConeSpec(kind, 1.1)
    g = random_profile(cone, 3)
    w = np.random.default_rng(0).normal(size=g.rho.size)
    d = project_volume_preserving(w, g)
    assert abs(d.flux_through_gamma()) <= 1e-12 * np.abs(w).max()
    # a constant speed on a sector is pure dilation, so nothing survives
    s = PolarGraph.constant(cone, 1.0)
    np.testing.assert_allclose(project_volume_preserving(np.ones(65), s).graph_speed, 0.0,
                               atol=1e-14)


@pytest.mark.parametrize("kind", ["planar", "axisym"])
def test_dilation_flux_is_n_times_volume(kind, bumpy):
    cone = ConeSpec(kind, math.pi / 2 if kind == "planar" else math.pi / 4)
    g = PolarGraph.from_function(cone, lambda th: 1 + 0.1 * np.cos(4 * th), 256)
    d = DeformationField.dilation(g)
    assert d.flux_through_gamma() == pytest.approx(cone.dim * volume(g), rel=1e-7)


def test_deformation_field_validation(quarter_sector):
    with pytest.raises(ValueError):
        DeformationField(quarter_sector, np.ones(3))
    d = DeformationField.from_normal_speed(quarter_sector, np.full(65, 0.5))
    np.testing.assert_allclose(d.apply(2.0).rho, 2.0)


def test_shape_derivative_under_dilation(quarter_sector, cone3):
    # T scales like t^(N+2), so dT/dt = (N + 2) T at t = 1
    params = MeshParams(target_h=0.02)
    d = DeformationField.dilation(quarter_sector)
    assert shape_derivative(quarter_sector, d, params) == pytest.approx(-math.pi / 16, rel=1e-3)
    g3 = PolarGraph.constant(cone3, 1.0)
    omega = 2 * math.pi * (1 - math.cos(math.pi / 4)) / 3
    dd = DeformationField.dilation(g3)
    assert shape_derivative(g3, dd, params) == pytest.approx(-5 * omega / 30, rel=1e-3)


@pytest.mark.parametrize("seed", [0, 1])
@pytest.mark.parametrize("kind", ["planar", "axisym"])
def test_shape_derivative_matches_finite_differences(kind, seed):
    cone = ConeSpec(kind, 1.2 if kind == "planar" else 0.8)
    g = random_profile(cone, seed, max_amplitude=0.1)
    th = g.theta
    rng = np.random.default_rng(100 + seed)
    w = sum(rng.normal() * np.cos(k * math.pi * th / cone.aperture) for k in range(4))
    d = DeformationField(g, w)
    params = COARSE.pinned(g)
    exact = shape_derivative(g, d, params, solver_tol=1e-12)
    fd = finite_difference_derivative(g, d, 1e-4, params)
    # scale of the integrand, immune to cancellation in the signed integral
    scale = abs(shape_derivative(g, DeformationField(g, np.abs(w)), params))
    assert abs(exact - fd) <= 1e-3 * scale


def test_residual_is_dilation_invariant(bumpy):
    params = MeshParams(target_h=0.04).pinned(bumpy)
    base = overdetermined_residual(bumpy, params, 1e-13)
    assert overdetermined_residual(bumpy.scaled(2.5), params, 1e-13) == pytest.approx(base, rel=1e-8)


@pytest.mark.parametrize("kind", ["planar", "axisym"])
def test_polygon_ratio_gradient(kind):
    g = random_profile(ConeSpec(kind, 1.0), 7, n_theta=16)
    err = check_grad(lambda x: polygon_ratio(g, x)[0], lambda x: polygon_ratio(g, x)[1], g.rho)
    assert err < 1e-6


def test_polar_curvature_of_circle(cone3):
    g = PolarGraph.constant(cone3, 2.0, 128)
    k1, k2 = polar_curvature(g)
    np.testing.assert_allclose(k1, 0.5, rtol=1e-10)
    np.testing.assert_allclose(k2, 0.5, rtol=1e-10)


@pytest.fixture(scope="module")
def torsion_run(bumpy):
    return flow_torsion(bumpy, steps=60)


def test_torsion_flow_reaches_sector(torsion_run, quarter):
    state = torsion_run
    assert state.converged, state.reason
    assert np.all(np.diff(state.energy_history) <= 0.0)
    assert abs(state.volume_drift) <= 1e-10
    assert state.energy_history[-1] == pytest.approx(-1 / (8 * quarter.aperture), abs=2e-3)
    rho = state.graph.rho
    assert rho.max() - rho.min() <= 1e-2


def test_flow_history_csv(torsion_run, tmp_path):
    text = torsion_run.to_csv(tmp_path / "h.csv")
    lines = text.splitlines()
    assert lines[0] == "step,T,residual,volume,min_rho,max_rho"
    assert len(lines) == len(torsion_run.energy_history) + 1
    assert (tmp_path / "h.csv").read_text() == text


@pytest.mark.parametrize("kind", ["planar", "axisym"])
def test_perimeter_flow_reaches_sector(kind):
    cone = ConeSpec(kind, 1.3 if kind == "planar" else 0.9)
    state = flow_perimeter(random_profile(cone, 11, max_amplitude=0.15))
    assert state.converged, state.reason
    assert isoperimetric_gap(state.graph) <= 1e-8
    assert abs(state.volume_drift) <= 1e-12
    rho = state.graph.rho
    assert rho.max() - rho.min() <= 1e-3


def test_perimeter_flow_is_stationary_at_sector(quarter_sector):
    state = flow_perimeter(quarter_sector.scaled(0.7))
    assert state.converged and state.step == 0
    assert volume(state.graph) == pytest.approx(1.0, rel=1e-14)
