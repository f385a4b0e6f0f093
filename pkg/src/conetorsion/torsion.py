"""P1 finite elements for the mixed torsion problem.

Solves ``-Δu = 1`` in the domain with ``u = 0`` on the relative boundary
GAMMA and a natural (zero-flux) condition on the cone wall GAMMA1.  On
axisymmetric meshes all bilinear forms carry the ``2 pi r`` weight.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, spsolve

from .exceptions import NoDirichletBoundary, NonConvergence
from .mesh import GAMMA, SectorMesh

logger = logging.getLogger(__name__)

DEFAULT_SOLVER_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FemField:
    """Nodal values of a P1 field on a :class:`SectorMesh`.

    ``radial_profile`` is set on fields produced by symmetrization; it holds
    the exact radial function the nodal values sample.
    """

    mesh: SectorMesh
    values: np.ndarray = field(repr=False)
    radial_profile: object = field(default=None, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.mesh.n_vertices:
            raise ValueError(
                f"field has {v.size} values for {self.mesh.n_vertices} vertices"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __call__(self, points):
        return self.mesh.interpolate(self.values, points)

    def to_text(self, path=None) -> str:
        text = "".join(f"{i} {v!r}\n" for i, v in enumerate(self.values.tolist()))
        if path is not None:
            Path(path).write_text(text)
        return text


# -- assembly -----------------------------------------------------------------

def _weighted_areas(mesh: SectorMesh, areas):
    if mesh.is_axisym:
        rc = mesh.vertices[mesh.triangles, 0].mean(axis=1)
        return 2.0 * math.pi * rc * areas
    return areas


def stiffness_matrix(mesh: SectorMesh) -> sp.csr_matrix:
    """``K_ij = ∫ ∇φ_i·∇φ_j`` (weighted on axisymmetric meshes)."""
    grads, areas = mesh.gradients()
    w = _weighted_areas(mesh, areas)
    local = np.einsum("e,eik,ejk->eij", w, grads, grads)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def load_vector(mesh: SectorMesh) -> np.ndarray:
    """``b_i = ∫ φ_i``; exact for P1, so ``b @ v`` is ``∫ v`` for any P1 field."""
    areas = mesh.areas()
    tri = mesh.triangles
    if mesh.is_axisym:
        r = mesh.vertices[tri, 0]
        local = 2.0 * math.pi * areas[:, None] * (r + r.sum(axis=1, keepdims=True)) / 12.0
    else:
        local = np.repeat(areas[:, None] / 3.0, 3, axis=1)
    return np.bincount(tri.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def mass_matrix(mesh: SectorMesh) -> sp.csr_matrix:
    """Consistent mass matrix ``M_ij = ∫ φ_i φ_j`` (weighted when axisymmetric)."""
    areas = mesh.areas()
    tri = mesh.triangles
    if mesh.is_axisym:
        r = mesh.vertices[tri, 0]
        rs = r.sum(axis=1)
        # ∫ φ_i φ_j φ_k = 2A a!b!c!/(a+b+c+2)!
        local = np.empty((len(tri), 3, 3))
        for i in range(3):
            for j in range(3):
                if i == j:
                    local[:, i, j] = areas * (r[:, i] / 10.0 + (rs - r[:, i]) / 30.0)
                else:
                    k = 3 - i - j
                    local[:, i, j] = areas * ((r[:, i] + r[:, j]) / 30.0 + r[:, k] / 60.0)
        local *= 2.0 * math.pi
    else:
        base = (np.ones((3, 3)) + np.eye(3)) / 12.0
        local = areas[:, None, None] * base[None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


# -- linear solves ------------------------------------------------------------

def _solve_spd(A, rhs, solver_tol, method):
    n = A.shape[0]
    if method == "direct":
        return spsolve(A.tocsc(), rhs)
    if not np.any(rhs):
        return np.zeros(n)
    diag = A.diagonal()
    precond = sp.diags(1.0 / diag)
    maxiter = int(50 * math.sqrt(n)) + 1
    x, info = cg(A, rhs, rtol=solver_tol, atol=0.0, maxiter=maxiter, M=precond)
    if info != 0:
        raise NonConvergence(f"CG did not reach rtol={solver_tol} in {maxiter} iterations")
    return x


def _dirichlet_solve(mesh: SectorMesh, K, rhs, dirichlet_values, solver_tol, method):
    fixed = mesh.gamma_vertices()
    if fixed.size == 0:
        raise NoDirichletBoundary("mesh has no GAMMA facets")
    free = np.setdiff1d(np.arange(mesh.n_vertices), fixed)
    u = np.zeros(mesh.n_vertices)
    u[fixed] = dirichlet_values[fixed]
    K = K.tocsr()
    r = rhs[free] - K[free][:, fixed] @ u[fixed]
    u[free] = _solve_spd(K[free][:, free], r, solver_tol, method)
    return u


def solve_torsion(mesh: SectorMesh, solver_tol: float = DEFAULT_SOLVER_TOL,
                  method: str = "cg") -> FemField:
    """P1 Galerkin solution of the torsion problem on ``mesh``.

    ``method='cg'`` (default) runs Jacobi-preconditioned CG capped at
    ``50 sqrt(dof)`` iterations; ``'direct'`` uses a sparse LU solve.
    """
    if mesh.boundary_measure(GAMMA) <= 0.0:
        raise NoDirichletBoundary("torsion problem needs GAMMA facets")
    K = stiffness_matrix(mesh)
    b = load_vector(mesh)
    u = _dirichlet_solve(mesh, K, b, np.zeros(mesh.n_vertices), solver_tol, method)
    return FemField(mesh, u)


def dirichlet_energy(u: FemField) -> float:
    return float(u.values @ (stiffness_matrix(u.mesh) @ u.values))


def integral(u: FemField) -> float:
    return float(load_vector(u.mesh) @ u.values)


def functional_J(u: FemField) -> float:
    """``J(v) = ½∫|∇v|² − ∫v``."""
    return 0.5 * dirichlet_energy(u) - integral(u)


def rayleigh_quotient(u: FemField) -> float:
    """``−(∫v)² / (2∫|∇v|²)``; scale invariant."""
    d = dirichlet_energy(u)
    if d <= 0.0:
        raise ValueError("Rayleigh quotient undefined for fields with zero gradient")
    return -integral(u) ** 2 / (2.0 * d)


def lp_integral(u: FemField, p: float) -> float:
    """``∫|u|^p`` (exact for p in {1, 2} on nonnegative fields)."""
    v = np.abs(u.values)
    if p == 1:
        return float(load_vector(u.mesh) @ v)
    if p == 2:
        return float(v @ (mass_matrix(u.mesh) @ v))
    return float(_quadrature(u.mesh, lambda x, uh: np.abs(uh) ** p, u.values))


def gradient_lp_integral(u: FemField, p: float) -> float:
    """``∫|∇u|^p`` with the piecewise-constant P1 gradient."""
    g = element_gradients(u)
    w = u.mesh.element_weights()
    return float(w @ np.linalg.norm(g, axis=1) ** p)


def element_gradients(u: FemField) -> np.ndarray:
    grads, _ = u.mesh.gradients()
    return np.einsum("eik,ei->ek", grads, u.values[u.mesh.triangles])


# 7-point, degree-5 rule on the reference triangle
_R15 = math.sqrt(15.0)
_A1, _B1 = (9 - 2 * _R15) / 21, (6 + _R15) / 21
_A2, _B2 = (9 + 2 * _R15) / 21, (6 - _R15) / 21
_QP = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_QW = np.array([9 / 40, *[(155 + _R15) / 1200] * 3, *[(155 - _R15) / 1200] * 3])


def _quadrature(mesh: SectorMesh, integrand, nodal):
    p = mesh.vertices[mesh.triangles]
    x = np.einsum("qi,eik->eqk", _QP, p)
    uh = np.einsum("qi,ei->eq", _QP, nodal[mesh.triangles])
    vals = integrand(x, uh)
    if mesh.is_axisym:
        vals = vals * 2.0 * math.pi * x[..., 0]
    return np.sum(mesh.areas()[:, None] * _QW[None, :] * vals)


def l2_error(u: FemField, exact) -> float:
    """``||u_h − exact||_{L²}`` by a degree-5 rule; ``exact`` maps (…,2) -> (…)."""
    return math.sqrt(_quadrature(u.mesh, lambda x, uh: (uh - exact(x)) ** 2, u.values))


# -- flux and report ----------------------------------------------------------

@dataclass(frozen=True)
class FluxSamples:
    """Per-GAMMA-facet |∇u| from the adjacent element, at facet midpoints."""

    midpoints: np.ndarray
    angles: np.ndarray
    flux: np.ndarray
    measures: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.measures @ self.flux / self.measures.sum())

    @property
    def deviation(self) -> float:
        return float(np.max(np.abs(self.flux - self.mean)))


def boundary_flux(u: FemField) -> FluxSamples:
    mesh = u.mesh
    elems = mesh.gamma_facet_elements()
    g = element_gradients(u)[elems]
    facets = mesh.facets(GAMMA)
    mid = mesh.vertices[facets].mean(axis=1)
    return FluxSamples(mid, mesh.cone.angle_of(mid), np.linalg.norm(g, axis=1),
                       mesh.facet_measures(GAMMA))


def gamma_facet_geometry(mesh: SectorMesh):
    """Endpoints, lengths and outward unit normals of the GAMMA facets."""
    f = mesh.facets(GAMMA)
    p = mesh.vertices[f]
    t = p[:, 1] - p[:, 0]
    length = np.linalg.norm(t, axis=1)
    n = np.stack([t[:, 1], -t[:, 0]], axis=1) / length[:, None]
    n *= np.sign(np.sum(n * p.mean(axis=1), axis=1))[:, None]
    return f, p, length, n


def _gamma_lumped_measure(mesh: SectorMesh) -> np.ndarray:
    f, p, length, _ = gamma_facet_geometry(mesh)
    if mesh.is_axisym:
        ra, rb = p[:, 0, 0], p[:, 1, 0]
        ma = 2.0 * math.pi * length * (2.0 * ra + rb) / 6.0
        mb = 2.0 * math.pi * length * (ra + 2.0 * rb) / 6.0
    else:
        ma = mb = 0.5 * length
    n = mesh.n_vertices
    return np.bincount(f[:, 0], ma, n) + np.bincount(f[:, 1], mb, n)


def consistent_flux(u: FemField, rhs=None) -> np.ndarray:
    """Nodal ``|∂u/∂ν|`` on GAMMA from the Galerkin residual (zero elsewhere).

    The residual ``K u − b`` at a Dirichlet vertex equals ``∫_Γ ∂u/∂ν φ_i``;
    dividing by the lumped boundary measure gives a flux that converges at
    second order, unlike the one-sided element gradient.
    """
    mesh = u.mesh
    b = load_vector(mesh) if rhs is None else rhs
    residual = stiffness_matrix(mesh) @ u.values - b
    m = _gamma_lumped_measure(mesh)
    q = np.zeros(mesh.n_vertices)
    on = m > 0
    q[on] = -residual[on] / m[on]
    return q


@dataclass(frozen=True, eq=False)
class TorsionReport:
    energy_T: float
    dirichlet_energy: float
    mass: float
    rayleigh: float
    functional_J: float
    flux_on_gamma: np.ndarray = field(repr=False)
    flux_measures: np.ndarray = field(repr=False)
    flux_mean: float = 0.0
    flux_deviation: float = 0.0
    volume: float = 0.0
    n_vertices: int = 0
    n_triangles: int = 0

    @property
    def overdetermined_residual(self) -> float:
        return self.flux_deviation / self.flux_mean

    def to_dict(self):
        out = {k: getattr(self, k) for k in (
            "energy_T", "dirichlet_energy", "mass", "rayleigh", "functional_J",
            "flux_mean", "flux_deviation", "volume", "n_vertices", "n_triangles")}
        out["overdetermined_residual"] = self.overdetermined_residual
        out["flux_on_gamma"] = [float(f) for f in self.flux_on_gamma]
        out["flux_measures"] = [float(m) for m in self.flux_measures]
        return out

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def report_for(u: FemField) -> TorsionReport:
    """Fill a :class:`TorsionReport` from an already computed torsion solution."""
    mass = integral(u)
    dir_e = dirichlet_energy(u)
    flux = boundary_flux(u)
    return TorsionReport(
        energy_T=-0.5 * mass,
        dirichlet_energy=dir_e,
        mass=mass,
        rayleigh=-mass**2 / (2.0 * dir_e),
        functional_J=0.5 * dir_e - mass,
        flux_on_gamma=flux.flux,
        flux_measures=flux.measures,
        flux_mean=flux.mean,
        flux_deviation=flux.deviation,
        volume=u.mesh.measure(),
        n_vertices=u.mesh.n_vertices,
        n_triangles=u.mesh.n_triangles,
    )


def torsional_energy(mesh: SectorMesh, solver_tol: float = DEFAULT_SOLVER_TOL,
                     method: str = "cg") -> TorsionReport:
    u = solve_torsion(mesh, solver_tol, method)
    report = report_for(u)
    tol = max(10 * solver_tol, 1e-12)
    if abs(report.rayleigh - report.functional_J) > 1e3 * tol * abs(report.functional_J):
        logger.warning("Rayleigh quotient %.12g and J %.12g disagree",
                       report.rayleigh, report.functional_J)
    return report


# -- linearized (shape-perturbation) problem ----------------------------------

def solve_linearization(mesh: SectorMesh, u: FemField, normal_velocity,
                        solver_tol: float = DEFAULT_SOLVER_TOL, method: str = "cg") -> FemField:
    """Harmonic ``u'`` with ``u' = −(∂u/∂ν)<V,ν>`` on GAMMA, zero flux on GAMMA1.

    ``normal_velocity`` holds one value of ``<V,ν>`` per GAMMA facet; since
    ``∂u/∂ν = −|∇u|`` on GAMMA the facet data are ``|∇u| <V,ν>``, averaged to
    the vertices with facet-measure weights.
    """
    vn = np.asarray(normal_velocity, dtype=float)
    facets = mesh.facets(GAMMA)
    if vn.shape != (len(facets),):
        raise ValueError(f"expected {len(facets)} facet velocities, got {vn.shape}")
    flux = boundary_flux(u)
    data = flux.flux * vn
    m = flux.measures
    num = np.bincount(facets.ravel(), weights=np.repeat(data * m, 2), minlength=mesh.n_vertices)
    den = np.bincount(facets.ravel(), weights=np.repeat(m, 2), minlength=mesh.n_vertices)
    g = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    K = stiffness_matrix(mesh)
    up = _dirichlet_solve(mesh, K, np.zeros(mesh.n_vertices), g, solver_tol, method)
    return FemField(mesh, up)
