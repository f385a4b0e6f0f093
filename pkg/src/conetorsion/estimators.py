"""Estimator-style wrappers (``fit`` / ``transform`` / ``predict``).

Each wrapper stores its configuration as constructor parameters, so
``get_params`` / ``set_params`` / ``clone`` work as usual, and exposes the
result of ``fit`` through trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import cmc, shapeflow, symmetrize, torsion
from ._validation import (check_choice, check_cone, check_graph, check_int, check_points,
                          check_positive)
from .mesh import generate_mesh


class TorsionSolver(BaseEstimator):
    """Solve the mixed torsion problem on a polar-graph domain.

    ``predict`` evaluates the discrete solution at points of the domain
    (NaN outside).
    """

    def __init__(self, cone=None, target_h=0.02, grading_exponent=2.0,
                 solver_tol=torsion.DEFAULT_SOLVER_TOL, method="cg"):
        self.cone = cone
        self.target_h = target_h
        self.grading_exponent = grading_exponent
        self.solver_tol = solver_tol
        self.method = method

    def fit(self, X, y=None):
        check_positive("target_h", self.target_h)
        check_positive("grading_exponent", self.grading_exponent)
        check_positive("solver_tol", self.solver_tol)
        check_choice("method", self.method, {"cg", "direct"})
        graph = check_graph(X, self.cone)
        self.graph_ = graph
        self.mesh_ = generate_mesh(graph, self.target_h, self.grading_exponent)
        self.field_ = torsion.solve_torsion(self.mesh_, self.solver_tol, self.method)
        self.report_ = torsion.report_for(self.field_)
        self.energy_ = self.report_.energy_T
        return self

    def predict(self, X):
        check_is_fitted(self, "field_")
        return self.field_(check_points(X))

    def score(self, X=None, y=None):
        """Negative overdetermined residual: 0 for a stationary domain."""
        check_is_fitted(self, "report_")
        return -self.report_.overdetermined_residual


class OmegaSymmetrizer(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Rearrange a field onto the sector of equal volume.

    ``fit`` takes a :class:`~conetorsion.torsion.FemField`; ``transform``
    returns its symmetrization on the target mesh.
    """

    def __init__(self, n_bins=symmetrize.DEFAULT_BINS, target_h=None):
        self.n_bins = n_bins
        self.target_h = target_h

    def fit(self, X, y=None):
        check_int("n_bins", self.n_bins, minimum=16)
        check_positive("target_h", self.target_h, allow_none=True)
        if not isinstance(X, torsion.FemField):
            raise TypeError("OmegaSymmetrizer.fit expects a FemField")
        self.source_ = X
        self.profile_ = symmetrize.decreasing_rearrangement(X, self.n_bins)
        self.target_mesh_ = symmetrize.symmetrization_target(X, self.target_h)
        return self

    def transform(self, X=None):
        check_is_fitted(self, "profile_")
        field = self.source_ if X is None else X
        return symmetrize.omega_symmetrize(field, self.target_mesh_, self.n_bins)

    def predict(self, X):
        """``u*`` at arbitrary points of the target sector."""
        check_is_fitted(self, "profile_")
        s = symmetrize.radial_measure(self.target_mesh_, check_points(X))
        return self.profile_(s)

    def polya_szego_gap(self, p=2.0):
        check_is_fitted(self, "profile_")
        grad = symmetrize.symmetrized_gradient_integral(self.profile_, self.source_.mesh.cone, p)
        return torsion.gradient_lp_integral(self.source_, p) - grad


class _FlowBase(BaseEstimator):
    def _graph(self, X):
        return check_graph(X, self.cone)

    def predict(self, X):
        """Final radial profile at the angles ``X``."""
        check_is_fitted(self, "state_")
        theta = np.asarray(X, dtype=float)
        return self.state_.graph.interpolator()(theta)

    def transform(self, X=None):
        check_is_fitted(self, "state_")
        return self.state_.graph


class TorsionFlow(_FlowBase):
    """Volume-constrained descent of the torsional energy."""

    def __init__(self, cone=None, steps=200, step_size=4.0, target_h=0.04,
                 stationarity_tol=2e-4, target_volume=1.0):
        self.cone = cone
        self.steps = steps
        self.step_size = step_size
        self.target_h = target_h
        self.stationarity_tol = stationarity_tol
        self.target_volume = target_volume

    def fit(self, X, y=None):
        check_int("steps", self.steps)
        for name in ("step_size", "target_h", "stationarity_tol", "target_volume"):
            check_positive(name, getattr(self, name))
        graph = self._graph(X)
        params = shapeflow.MeshParams(target_h=self.target_h)
        self.state_ = shapeflow.flow_torsion(
            graph, self.steps, self.step_size, params,
            stationarity_tol=self.stationarity_tol, target_volume=self.target_volume,
        )
        self.energy_ = self.state_.energy_history[-1]
        return self


class PerimeterFlow(_FlowBase):
    """Volume-constrained descent of the relative perimeter."""

    def __init__(self, cone=None, steps=500, gap_tol=1e-8, target_volume=1.0):
        self.cone = cone
        self.steps = steps
        self.gap_tol = gap_tol
        self.target_volume = target_volume

    def fit(self, X, y=None):
        check_int("steps", self.steps)
        check_positive("gap_tol", self.gap_tol)
        check_positive("target_volume", self.target_volume)
        self.state_ = shapeflow.flow_perimeter(self._graph(X), self.steps, self.gap_tol,
                                               target_volume=self.target_volume)
        self.gap_ = self.state_.overdetermined_residual_history[-1]
        return self


class CenterLocator(BaseEstimator):
    """Fit a circle (sphere) to a sampled boundary and classify its centre."""

    def __init__(self, cone=None, tol=cmc.CLASSIFY_TOL, fit_tol=cmc.FIT_TOL):
        self.cone = cone
        self.tol = tol
        self.fit_tol = fit_tol

    def fit(self, X, y=None):
        check_positive("tol", self.tol)
        check_positive("fit_tol", self.fit_tol)
        curve = X
        if not isinstance(curve, cmc.CurveGamma):
            if self.cone is None:
                raise ValueError("raw sample points need a cone")
            curve = cmc.CurveGamma.from_points(check_cone(self.cone), check_points(X))
        self.curve_ = curve
        self.fit_ = cmc.locate_center(curve, self.tol, self.fit_tol)
        self.center_ = np.array(self.fit_.center)
        self.radius_ = self.fit_.radius
        return self

    def predict(self, X=None):
        check_is_fitted(self, "fit_")
        return self.fit_.classification
