import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conetorsion import (CenterLocator, OmegaSymmetrizer, PerimeterFlow, TorsionFlow,
                         TorsionSolver)
from conetorsion.cmc import VERTEX, arc_about_origin
from conetorsion.geometry import ConeSpec, PolarGraph
from conetorsion.torsion import FemField


def test_params_round_trip_through_clone():
    est = TorsionSolver(cone=("planar", 1.0), target_h=0.05, method="direct")
    copy = clone(est)
    assert copy.get_params() == est.get_params()
    copy.set_params(target_h=0.1)
    assert copy.target_h == 0.1 and est.target_h == 0.05
    assert set(TorsionFlow().get_params()) == {"cone", "steps", "step_size", "target_h",
                                                "stationarity_tol", "target_volume"}


@pytest.mark.parametrize("est, call", [
    (TorsionSolver(), lambda e: e.predict([[0.1, 0.1]])),
    (OmegaSymmetrizer(), lambda e: e.transform()),
    (TorsionFlow(), lambda e: e.predict([0.1])),
    (PerimeterFlow(), lambda e: e.transform()),
    (CenterLocator(), lambda e: e.predict()),
])
def test_unfitted_estimators_raise(est, call):
    with pytest.raises(NotFittedError):
        call(est)


def test_torsion_solver_on_sector():
    est = TorsionSolver(cone={"kind": "planar", "aperture": math.pi / 2}, target_h=0.04)
    est.fit(np.ones(33))
    assert est.energy_ == pytest.approx(-math.pi / 64, rel=5e-3)
    pts = np.array([[0.3, 0.2], [0.5, 0.5], [2.0, 0.0]])
    vals = est.predict(pts)
    np.testing.assert_allclose(vals[:2], (1 - np.sum(pts[:2] ** 2, 1)) / 4, atol=2e-4)
    assert np.isnan(vals[2])
    assert -1e-2 < est.score() <= 0.0


@pytest.mark.parametrize("bad", [dict(target_h=0.0), dict(method="lu"), dict(target_h="x")])
def test_torsion_solver_validation(quarter_sector, bad):
    with pytest.raises((ValueError, TypeError)):
        TorsionSolver(**bad).fit(quarter_sector)


def test_bare_profile_needs_cone():
    with pytest.raises(ValueError):
        TorsionSolver().fit(np.ones(33))
    with pytest.raises(KeyError):
        TorsionSolver(cone={"kind": "planar"}).fit(np.ones(33))


def test_symmetrizer(bumpy_solution):
    est = OmegaSymmetrizer(n_bins=1024).fit(bumpy_solution)
    star = est.transform()
    assert isinstance(star, FemField) and star.mesh is est.target_mesh_
    assert est.predict([[0.0, 0.0]])[0] == pytest.approx(bumpy_solution.values.max())
    assert est.polya_szego_gap(2.0) > 0.0
    with pytest.raises(TypeError):
        OmegaSymmetrizer().fit(np.ones(3))
    with pytest.raises(ValueError):
        OmegaSymmetrizer(n_bins=4).fit(bumpy_solution)


def test_flows(bumpy):
    flow = PerimeterFlow().fit(bumpy)
    assert flow.gap_ <= 1e-8
    rho = flow.predict(np.linspace(0, math.pi / 2, 7))
    np.testing.assert_allclose(rho, rho[0], rtol=1e-3)
    assert isinstance(flow.transform(), PolarGraph)
    tflow = TorsionFlow(steps=3).fit(bumpy)
    assert tflow.state_.step <= 3
    assert tflow.energy_ <= tflow.state_.energy_history[0]


def test_center_locator():
    cone = ConeSpec("planar", math.pi / 3)
    loc = CenterLocator().fit(arc_about_origin(cone, 2.0, 512))
    assert loc.predict() == VERTEX and loc.radius_ == pytest.approx(2.0)
    pts = arc_about_origin(cone, 2.0, 512).points
    assert CenterLocator(cone=cone).fit(pts).predict() == VERTEX
    with pytest.raises(ValueError):
        CenterLocator().fit(pts)
