"""Shape derivatives and volume-constrained flows for torsion and perimeter.

Domains are deformed through their radial profile, ``rho -> rho + t w``;
the induced boundary velocity ``w(theta) e(theta)`` is radial, hence tangent
to the cone wall at both endpoint rays.  Its normal component on GAMMA is
``w rho / sqrt(rho² + rho'²)``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .exceptions import MeshFailure, StepFailure
from .geometry import (PolarGraph, isoperimetric_gap, normalize_volume,
                       relative_perimeter, volume)
from .mesh import GAMMA, SectorMesh, generate_mesh, mesh_counts
from .torsion import (DEFAULT_SOLVER_TOL, consistent_flux, gamma_facet_geometry,
                      report_for, solve_torsion)

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_HALVINGS = 30


@dataclass(frozen=True)
class MeshParams:
    """Resolution used whenever a shape functional needs a mesh."""

    target_h: float = 0.02
    grading: float = 2.0
    n_radial: int | None = None
    n_angular: int | None = None

    def pinned(self, g: PolarGraph) -> "MeshParams":
        """Freeze the subdivision counts derived from ``g``."""
        if self.n_radial is not None and self.n_angular is not None:
            return self
        nr, na = mesh_counts(g, self.target_h, self.grading)
        return MeshParams(self.target_h, self.grading, nr, na)

    def mesh(self, g: PolarGraph) -> SectorMesh:
        return generate_mesh(g, self.target_h, self.grading, self.n_radial, self.n_angular)


def _gamma_density(g: PolarGraph) -> np.ndarray:
    """``dsigma / dtheta`` on the profile grid."""
    speed = np.hypot(g.rho, g.drho())
    if g.cone.is_axisym:
        return 2.0 * math.pi * g.rho * np.sin(g.theta) * speed
    return speed


def _gamma_integral(g: PolarGraph, f) -> float:
    return float(simpson(np.asarray(f) * _gamma_density(g), x=g.theta))


@dataclass(frozen=True, eq=False)
class DeformationField:
    """Graph speed ``w`` of a profile deformation and its normal speed."""

    graph: PolarGraph
    graph_speed: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.graph_speed, dtype=float).ravel()
        if w.shape != self.graph.rho.shape:
            raise ValueError("graph speed must live on the profile grid")
        w.setflags(write=False)
        object.__setattr__(self, "graph_speed", w)

    @property
    def normal_factor(self) -> np.ndarray:
        """``rho / sqrt(rho² + rho'²)``, converting graph speed to normal speed."""
        g = self.graph
        return g.rho / np.hypot(g.rho, g.drho())

    @property
    def normal_speed(self) -> np.ndarray:
        return self.graph_speed * self.normal_factor

    @classmethod
    def from_normal_speed(cls, g: PolarGraph, vn) -> "DeformationField":
        return cls(g, np.asarray(vn, dtype=float) * np.hypot(g.rho, g.drho()) / g.rho)

    @classmethod
    def dilation(cls, g: PolarGraph) -> "DeformationField":
        """``V(x) = x``."""
        return cls(g, g.rho.copy())

    def flux_through_gamma(self) -> float:
        """``∫_Γ <V, ν> dσ``, the first variation of volume."""
        return _gamma_integral(self.graph, self.normal_speed)

    def apply(self, t: float) -> PolarGraph:
        return self.graph.with_rho(self.graph.rho + t * self.graph_speed)


def project_volume_preserving(w, g: PolarGraph) -> DeformationField:
    """Remove the Γ-weighted mean of a normal speed sampled on the profile grid."""
    vn = np.asarray(w, dtype=float)
    mean = _gamma_integral(g, vn) / _gamma_integral(g, np.ones_like(vn))
    return DeformationField.from_normal_speed(g, vn - mean)


# -- shape derivative ---------------------------------------------------------

def _gamma_node_velocity(mesh: SectorMesh, d: DeformationField) -> np.ndarray:
    """Velocity of the GAMMA ring vertices, consistent with mesh interpolation."""
    g = d.graph
    th = mesh.theta_nodes
    if np.all(d.graph_speed == d.graph_speed[0]):
        w = np.full(th.shape, d.graph_speed[0])
    else:
        w = CubicSpline(g.theta, d.graph_speed)(th)
    return w[:, None] * g.cone.direction(th)


def hadamard_integral(mesh: SectorMesh, density_nodal, d: DeformationField) -> float:
    """Facet quadrature of ``∫_Γ density <V, ν> dσ`` with P1 ``density``.

    The GAMMA facets are ordered along the outer ring, so facet ``j`` joins
    ring nodes ``j`` and ``j + 1``.
    """
    f, p, length, n = gamma_facet_geometry(mesh)
    vel = _gamma_node_velocity(mesh, d)
    va = np.sum(vel[:-1] * n, axis=1)
    vb = np.sum(vel[1:] * n, axis=1)
    qa = density_nodal[f[:, 0]]
    qb = density_nodal[f[:, 1]]
    if mesh.is_axisym:
        ra, rb = p[:, 0, 0], p[:, 1, 0]
        total = 0.0
        for s, wt in ((0.0, 1 / 6), (0.5, 4 / 6), (1.0, 1 / 6)):
            total = total + wt * ((1 - s) * qa + s * qb) * ((1 - s) * va + s * vb) * ((1 - s) * ra + s * rb)
        return float(np.sum(2.0 * math.pi * length * total))
    return float(np.sum(length * (qa * va / 3 + qb * vb / 3 + qa * vb / 6 + qb * va / 6)))


def shape_derivative(g: PolarGraph, d: DeformationField, mesh_params: MeshParams | None = None,
                     solver_tol: float = DEFAULT_SOLVER_TOL) -> float:
    """``dT/dt = −½ ∫_Γ |∇u|² <V, ν> dσ`` by facet quadrature."""
    params = mesh_params or MeshParams()
    u = solve_torsion(params.mesh(g), solver_tol)
    q = consistent_flux(u)
    return -0.5 * hadamard_integral(u.mesh, q**2, d)


def torsion_energy_of(g: PolarGraph, mesh_params: MeshParams | None = None,
                      solver_tol: float = DEFAULT_SOLVER_TOL) -> float:
    params = mesh_params or MeshParams()
    return report_for(solve_torsion(params.mesh(g), solver_tol)).energy_T


def finite_difference_derivative(g: PolarGraph, d: DeformationField, eps: float,
                                 mesh_params: MeshParams | None = None,
                                 solver_tol: float = 1e-12) -> float:
    """Central difference of T along ``d`` on meshes of one fixed topology."""
    params = (mesh_params or MeshParams()).pinned(g)
    tp = torsion_energy_of(d.apply(eps), params, solver_tol)
    tm = torsion_energy_of(d.apply(-eps), params, solver_tol)
    return (tp - tm) / (2.0 * eps)


def overdetermined_residual(g: PolarGraph, mesh_params: MeshParams | None = None,
                            solver_tol: float = DEFAULT_SOLVER_TOL) -> float:
    """``flux_deviation / flux_mean``; vanishes iff |∇u| is constant on Γ."""
    params = mesh_params or MeshParams()
    return report_for(solve_torsion(params.mesh(g), solver_tol)).overdetermined_residual


# -- flows ---------------------------------------------------------------------

@dataclass
class FlowState:
    graph: PolarGraph
    step: int = 0
    energy_history: list = field(default_factory=list)
    overdetermined_residual_history: list = field(default_factory=list)
    volume_history: list = field(default_factory=list)
    min_rho_history: list = field(default_factory=list)
    max_rho_history: list = field(default_factory=list)
    volume_drift: float = 0.0
    converged: bool = False
    reason: str = ""

    def record(self, g: PolarGraph, energy: float, residual: float, target_volume: float):
        vol = volume(g)
        self.graph = g
        self.energy_history.append(float(energy))
        self.overdetermined_residual_history.append(float(residual))
        self.volume_history.append(vol)
        self.min_rho_history.append(float(g.rho.min()))
        self.max_rho_history.append(float(g.rho.max()))
        self.volume_drift = vol / target_volume - 1.0

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "T", "residual", "volume", "min_rho", "max_rho"])
        rows = zip(self.energy_history, self.overdetermined_residual_history,
                   self.volume_history, self.min_rho_history, self.max_rho_history)
        for k, row in enumerate(rows):
            writer.writerow([k, *(repr(float(v)) for v in row)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _smooth(values: np.ndarray) -> np.ndarray:
    """One pass of [1/4, 1/2, 1/4] averaging, mirrored at the walls."""
    padded = np.concatenate([[values[1]], values, [values[-2]]])
    return 0.25 * padded[:-2] + 0.5 * padded[1:-1] + 0.25 * padded[2:]


def _check_profile(g: PolarGraph, min_rho: float):
    if g.rho.min() < min_rho:
        raise MeshFailure(f"profile degenerated (min rho {g.rho.min():.3g} < {min_rho})")


def _line_search(g, direction, slope, energy, evaluate, tau0, target_volume):
    """Armijo backtracking by halving; returns (tau, graph, energy, extra).

    Trial profiles that cannot be meshed count as rejected steps.
    """
    tau = tau0
    for _ in range(MAX_HALVINGS + 1):
        rho = g.rho + tau * direction
        if rho.min() > 0.0:
            trial = normalize_volume(g.with_rho(rho), target_volume)
            try:
                val, extra = evaluate(trial)
            except MeshFailure:  # too wild a trial step; shorten it
                val = math.inf
            if val <= energy + ARMIJO * tau * slope:
                return tau, trial, val, extra
        tau *= 0.5
    return None


def _cone_warning(g: PolarGraph):
    cone = g.cone
    if not cone.is_axisym and cone.aperture > math.pi:
        logger.warning("planar aperture %.4g > pi: the cone is not convex", cone.aperture)


def flow_torsion(g0: PolarGraph, steps: int = 200, step_size: float = 4.0,
                 mesh_params: MeshParams | None = None,
                 solver_tol: float = DEFAULT_SOLVER_TOL,
                 stationarity_tol: float = 2e-4, energy_rtol: float = 1e-10,
                 min_rho: float = 1e-2, target_volume: float = 1.0) -> FlowState:
    """Volume-constrained steepest descent of the torsional energy.

    The normal speed is ``½|∇u|² − mean``, the negative Γ-gradient of the
    energy projected on volume-preserving fields.  Each trial profile is
    rescaled to ``target_volume`` before its energy is evaluated.  Stops when
    the relative spread of ``|∇u|²`` on Γ falls below ``stationarity_tol`` or
    an accepted step lowers the energy by less than ``energy_rtol`` relative
    (the discrete stationarity floor of the flux-based gradient).
    """
    _cone_warning(g0)
    g = normalize_volume(g0, target_volume)
    params = (mesh_params or MeshParams(target_h=0.04)).pinned(g)

    def evaluate(graph):
        u = solve_torsion(params.mesh(graph), solver_tol)
        return report_for(u).energy_T, u

    energy, u = evaluate(g)
    state = FlowState(g)
    state.record(g, energy, report_for(u).overdetermined_residual, target_volume)
    tau = step_size
    for k in range(steps):
        mesh = u.mesh
        q = consistent_flux(u)
        ring = mesh.facets(GAMMA)
        ring_nodes = np.concatenate([ring[:, 0], ring[-1:, 1]])
        half_sq = 0.5 * q[ring_nodes] ** 2
        density = np.interp(g.theta, mesh.theta_nodes, half_sq)
        mean = _gamma_integral(g, density) / _gamma_integral(g, np.ones_like(density))
        spread = math.sqrt(_gamma_integral(g, (density - mean) ** 2)
                           / _gamma_integral(g, np.ones_like(density))) / mean
        if spread <= stationarity_tol:
            state.converged, state.reason = True, "stationary"
            break
        d = project_volume_preserving(_smooth(density), g)
        slope = -_gamma_integral(g, density * d.normal_speed)
        found = _line_search(g, d.graph_speed, slope, energy, evaluate, tau, target_volume)
        if found is None:
            if spread <= 1e-2:
                state.converged, state.reason = True, "line search stalled near stationarity"
                break
            raise StepFailure(f"line search failed at step {k} (spread {spread:.3g})")
        tau_used, g_new, energy_new, u = found
        _check_profile(g_new, min_rho)
        decrease = energy - energy_new
        g, energy = g_new, energy_new
        state.step = k + 1
        state.record(g, energy, report_for(u).overdetermined_residual, target_volume)
        tau = min(step_size, 2.0 * tau_used)
        if decrease <= energy_rtol * abs(energy):
            state.converged, state.reason = True, "energy stagnated"
            break
    else:
        state.reason = "step limit"
    return state


def polar_curvature(g: PolarGraph):
    """Principal curvatures of Γ on the profile grid.

    Planar: the curve curvature.  Axisymmetric: (meridian, parallel)
    curvatures; the parallel one uses its axis limit at ``theta = 0``.
    """
    th = g.theta
    r = g.rho
    r1 = g.drho()
    r2 = np.gradient(r1, g.dtheta, edge_order=2)
    speed = np.hypot(r, r1)
    k1 = (r**2 + 2 * r1**2 - r * r2) / speed**3
    if not g.cone.is_axisym:
        return k1, None
    with np.errstate(divide="ignore", invalid="ignore"):
        k2 = (r * np.sin(th) - r1 * np.cos(th)) / (speed * r * np.sin(th))
    k2[0] = k1[0]
    return k1, k2


def polygon_ratio(g: PolarGraph, rho=None):
    """Log of ``P / |Omega|^((N-1)/N)`` for the inscribed polygon and its gradient.

    The meridian polygon through the profile samples is revolved for axisymmetric
    cones (frustum areas, Pappus volumes).  Unlike the Simpson quadrature this
    functional penalises odd/even oscillations of the samples.
    """
    rho = g.rho if rho is None else np.asarray(rho, dtype=float)
    a, b = rho[:-1], rho[1:]
    dth = g.dtheta
    c, sn = math.cos(dth), math.sin(dth)
    length = np.sqrt(a * a + b * b - 2.0 * a * b * c)
    dl_da, dl_db = (a - b * c) / length, (b - a * c) / length
    grad_p = np.zeros_like(rho)
    grad_v = np.zeros_like(rho)
    if g.cone.is_axisym:
        s = np.sin(g.theta)
        si, sj = s[:-1], s[1:]
        rsum = a * si + b * sj
        per = math.pi * np.sum(rsum * length)
        np.add.at(grad_p, np.arange(a.size), math.pi * (si * length + rsum * dl_da))
        np.add.at(grad_p, np.arange(1, rho.size), math.pi * (sj * length + rsum * dl_db))
        k = math.pi * sn / 3.0
        vol = k * np.sum(a * b * rsum)
        grad_v[:-1] += k * b * (2.0 * a * si + b * sj)
        grad_v[1:] += k * a * (a * si + 2.0 * b * sj)
    else:
        per = float(np.sum(length))
        grad_p[:-1] += dl_da
        grad_p[1:] += dl_db
        vol = 0.5 * sn * np.sum(a * b)
        grad_v[:-1] += 0.5 * sn * b
        grad_v[1:] += 0.5 * sn * a
    n = g.cone.dim
    q = (n - 1.0) / n
    value = math.log(per) - q * math.log(vol)
    return value, grad_p / per - q * grad_v / vol


def flow_perimeter(g0: PolarGraph, steps: int = 500, gap_tol: float = 1e-8,
                   min_rho: float = 1e-2, target_volume: float = 1.0) -> FlowState:
    """Volume-constrained descent of the relative perimeter.

    Minimises the scale-invariant :func:`polygon_ratio` by L-BFGS; its gradient
    is the discrete curvature minus the volume multiplier.  Each iterate is
    rescaled to ``target_volume`` when recorded.  Stops once the isoperimetric
    gap drops below ``gap_tol``; the residual column records that gap.
    """
    from scipy.optimize import minimize

    _cone_warning(g0)
    g = normalize_volume(g0, target_volume)
    state = FlowState(g)
    state.record(g, relative_perimeter(g, exact_sectors=False), isoperimetric_gap(g),
                 target_volume)
    if state.overdetermined_residual_history[0] <= gap_tol:
        state.converged, state.reason = True, "isoperimetric gap below tolerance"
        return state

    def callback(intermediate_result):
        graph = normalize_volume(g.with_rho(intermediate_result.x), target_volume)
        _check_profile(graph, min_rho)
        gap = isoperimetric_gap(graph)
        state.step += 1
        state.record(graph, relative_perimeter(graph, exact_sectors=False), gap,
                     target_volume)
        if gap <= gap_tol:
            raise StopIteration

    res = minimize(lambda x: polygon_ratio(g, x), g.rho, jac=True, method="L-BFGS-B",
                   bounds=[(1e-12, None)] * g.rho.size, callback=callback,
                   options={"maxiter": steps, "gtol": 1e-14, "ftol": 1e-16})
    gap = state.overdetermined_residual_history[-1]
    state.converged = gap <= gap_tol or (res.success and state.step < steps)
    state.reason = ("isoperimetric gap below tolerance" if gap <= gap_tol
                    else str(res.message) if state.converged else "step limit")
    return state
