import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from shapely.geometry import Polygon, box

from conetorsion.exceptions import VolumeMismatch
from conetorsion.geometry import ConeSpec, PolarGraph, volume
from conetorsion.mesh import GAMMA, generate_mesh
from conetorsion.symmetrize import (RearrangedProfile, decreasing_rearrangement,
                                    distribution_function, measure_bins, omega_symmetrize,
                                    polya_szego_gap, radial_measure,
                                    symmetrization_target, symmetrized_gradient_integral)
from conetorsion.torsion import FemField, gradient_lp_integral, lp_integral, solve_torsion


def clipped_measure(mesh, t):
    """|{x > t}| by polygon clipping, with Pappus for the revolved case."""
    half = box(t, -10.0, 10.0, 10.0)
    total = 0.0
    for tri in mesh.triangles:
        piece = Polygon(mesh.vertices[tri]).intersection(half)
        if piece.is_empty:
            continue
        total += piece.area * (2 * math.pi * piece.centroid.x if mesh.is_axisym else 1.0)
    return total


@pytest.fixture(scope="module")
def coarse_meshes(quarter, cone3):
    g = PolarGraph.from_function(quarter, lambda th: 1 + 0.2 * np.sin(3 * th), 32)
    g3 = PolarGraph.from_function(cone3, lambda th: 1 + 0.2 * np.sin(3 * th), 32)
    return [generate_mesh(g, 0.15), generate_mesh(g3, 0.15)]


@pytest.mark.parametrize("which", [0, 1])
def test_distribution_function_matches_clipping(coarse_meshes, which):
    mesh = coarse_meshes[which]
    u = FemField(mesh, mesh.vertices[:, 0])
    levels = np.array([0.0, 0.13, 0.5, 0.77, 1.05])
    mu = distribution_function(u, levels)
    expected = [clipped_measure(mesh, t) for t in levels]
    np.testing.assert_allclose(mu, expected, rtol=1e-11, atol=1e-13)


def test_distribution_function_of_constant_field(sector_solution):
    mesh = sector_solution.mesh
    u = FemField(mesh, np.full(mesh.n_vertices, 0.3))
    mu = distribution_function(u, [0.0, 0.2999, 0.3, 0.4])
    np.testing.assert_allclose(mu, [mesh.measure()] * 2 + [0.0, 0.0], rtol=1e-12)


def test_rearrangement_is_equimeasurable(bumpy_solution):
    prof = decreasing_rearrangement(bumpy_solution)
    assert prof.total_measure == pytest.approx(bumpy_solution.mesh.measure(), rel=1e-12)
    assert prof.values[0] == pytest.approx(bumpy_solution.values.max(), rel=1e-12)
    assert prof.values[-1] == pytest.approx(0.0, abs=1e-12)
    for p in (1, 2, 3):
        assert prof.integral(p) == pytest.approx(lp_integral(bumpy_solution, p), rel=1e-6)


@pytest.mark.parametrize("which", ["sector_solution", "axisym_solution"])
def test_rearrangement_of_sector_solution_is_itself(which, request):
    u = request.getfixturevalue(which)
    cone = u.mesh.cone
    n = cone.dim
    prof = decreasing_rearrangement(u)
    s = np.linspace(0, prof.total_measure, 50)
    exact = (1 - (s / cone.omega_measure()) ** (2 / n)) / (2 * n)
    np.testing.assert_allclose(prof(s), exact, atol=2e-4)


def test_symmetrization_is_idempotent_and_preserves_norms(bumpy_solution):
    target = symmetrization_target(bumpy_solution, 0.03)
    star = omega_symmetrize(bumpy_solution, target)
    again = omega_symmetrize(star, target)
    np.testing.assert_array_equal(star.values, again.values)
    assert star.values.max() == pytest.approx(bumpy_solution.values.max(), rel=1e-12)
    assert volume(target.graph) == pytest.approx(volume(bumpy_solution.mesh.graph), rel=1e-12)
    # nodal values are radial and nonincreasing in |x|
    r = np.linalg.norm(target.vertices, axis=1)
    order = np.argsort(r, kind="stable")
    assert np.all(np.diff(star.values[order]) <= 1e-15)


def test_constant_field_is_preserved(cone3):
    mesh = generate_mesh(PolarGraph.constant(cone3, 1.3), 0.05)
    u = FemField(mesh, np.full(mesh.n_vertices, 2.5))
    star = omega_symmetrize(u, symmetrization_target(u))
    np.testing.assert_allclose(star.values, 2.5, rtol=0, atol=0)


def test_volume_mismatch(bumpy_solution, quarter, cone3):
    with pytest.raises(VolumeMismatch):
        omega_symmetrize(bumpy_solution, generate_mesh(PolarGraph.constant(quarter, 1.0), 0.1))
    with pytest.raises(VolumeMismatch):
        omega_symmetrize(bumpy_solution, generate_mesh(PolarGraph.constant(cone3, 1.0), 0.1))
    with pytest.raises(VolumeMismatch):
        omega_symmetrize(bumpy_solution, bumpy_solution.mesh)


def test_radial_measure_is_sector_volume(quarter_sector):
    mesh = generate_mesh(quarter_sector, 0.1)
    s = radial_measure(mesh, [[0.6, 0.8]])
    assert s[0] == pytest.approx(math.pi / 4, rel=1e-14)


def test_gradient_integral_of_exact_profile(quarter, cone3):
    # u = (1 - r^2) / (2N): ∫|grad u|^2 = ∫ r^2 / N^2 dx
    for cone, expected in ((quarter, math.pi / 32),
                           (cone3, 2 * math.pi * (1 - math.cos(math.pi / 4)) / 45)):
        n, om = cone.dim, cone.omega_measure()
        s = measure_bins(om, 20000)
        prof = RearrangedProfile(s, (1 - (s / om) ** (2 / n)) / (2 * n), om)
        assert symmetrized_gradient_integral(prof, cone, 2.0) == pytest.approx(expected, rel=1e-7)


@pytest.mark.parametrize("which", ["sector_solution", "axisym_solution"])
@pytest.mark.parametrize("p", [1.0, 2.0])
def test_polya_szego_is_tight_on_sectors(which, p, request):
    u = request.getfixturevalue(which)
    # discretization gap is O(h^2): about 1e-4 relative at h = 0.02
    gap = polya_szego_gap(u, p)
    assert abs(gap) <= 3e-4 * gradient_lp_integral(u, p)


def test_polya_szego_gap_positive_off_sector(bumpy_solution):
    assert polya_szego_gap(bumpy_solution, 2.0) > 1e-3
    assert polya_szego_gap(bumpy_solution, 1.0) > 1e-3
    with pytest.raises(ValueError):
        polya_szego_gap(bumpy_solution, 0.5)


@pytest.fixture(scope="module")
def field_mesh(quarter):
    return generate_mesh(PolarGraph.constant(quarter, 1.0), 0.08)


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 2**32 - 1))
def test_polya_szego_for_random_fields(field_mesh, seed):
    rng = np.random.default_rng(seed)
    vals = rng.random(field_mesh.n_vertices)
    vals[field_mesh.gamma_vertices()] = 0.0
    u = FemField(field_mesh, vals)
    for p in (1.0, 2.0):
        assert polya_szego_gap(u, p, 1024) >= -1e-4 * gradient_lp_integral(u, p)


def test_profile_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        RearrangedProfile(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 1.0)
    with pytest.raises(ValueError):
        RearrangedProfile(np.array([0.1, 1.0]), np.array([1.0, 0.0]), 1.0)
    prof = RearrangedProfile(np.array([0.0, 0.5, 1.0]), np.array([2.0, 1.0, 0.0]), 1.0)
    assert prof.integral(1) == pytest.approx(1.0)
    assert prof.integral(2) == pytest.approx(7 / 6 + 1 / 6)
    with pytest.raises(ValueError):
        prof.values[0] = 3.0
    text = prof.to_csv(tmp_path / "p.csv")
    assert text.splitlines()[0] == "s,u_sharp"
    assert (tmp_path / "p.csv").read_text() == text
    mesh = generate_mesh(PolarGraph.constant(ConeSpec("planar", 1.0), 1.0), 0.2)
    with pytest.raises(ValueError):
        decreasing_rearrangement(FemField(mesh, np.zeros(mesh.n_vertices)), 8)
