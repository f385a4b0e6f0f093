"""Constant-mean-curvature checks on sampled boundary curves.

A :class:`CurveGamma` is the relative boundary of a domain in a cone,
sampled in the plane of :meth:`ConeSpec.direction`: the curve itself for a
planar cone, the meridian (from the axis to the wall) for an axisymmetric
one.  Integrals over the surface carry the ``2 pi r`` weight.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eig

from .exceptions import NonConstantCurvature, NotSpherical
from .geometry import ConeSpec, PolarGraph, relative_perimeter, volume

ENDPOINT_TOL = 1e-10
CLASSIFY_TOL = 1e-6
FIT_TOL = 1e-4
H_SPREAD_TOL = 1e-6

VERTEX = "VERTEX"
WALL = "WALL"
NEITHER = "NEITHER"


def _rot(v):
    """Quarter turn counter-clockwise."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True, eq=False)
class CurveGamma:
    cone: ConeSpec
    points: np.ndarray = field(repr=False)
    unit_normals: np.ndarray = field(repr=False)
    k1: np.ndarray = field(repr=False)
    k2: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        nrm = np.array(self.unit_normals, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError("points must have shape (n, 2) with n >= 3")
        if nrm.shape != pts.shape:
            raise ValueError("unit_normals must match points")
        lengths = np.linalg.norm(nrm, axis=1)
        if np.any(np.abs(lengths - 1.0) > 1e-10):
            raise ValueError("normals must have unit length")
        k1 = np.broadcast_to(np.asarray(self.k1, dtype=float), pts.shape[:1]).copy()
        k2 = self.k2
        if self.cone.is_axisym:
            if k2 is None:
                raise ValueError("axisymmetric curves need both principal curvatures")
            k2 = np.broadcast_to(np.asarray(k2, dtype=float), pts.shape[:1]).copy()
        elif k2 is not None:
            raise ValueError("planar curves carry a single curvature")
        for name, arr in (("points", pts), ("unit_normals", nrm), ("k1", k1), ("k2", k2)):
            if arr is not None:
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        for end in (pts[0], pts[-1]):
            if _boundary_distance(self.cone, end) > ENDPOINT_TOL * max(1.0, np.linalg.norm(end)):
                raise ValueError(f"endpoint {end} does not lie on the cone boundary")

    @property
    def n_samples(self) -> int:
        return self.points.shape[0]

    @property
    def mean_curvature(self) -> np.ndarray:
        """``H``: the curvature (planar) or the average of the principal curvatures."""
        return self.k1 if self.k2 is None else 0.5 * (self.k1 + self.k2)

    def support(self) -> np.ndarray:
        """``<x, nu>`` per sample."""
        return np.einsum("ij,ij->i", self.points, self.unit_normals)

    def weights(self) -> np.ndarray:
        """Trapezoid weights for ``∫_Γ f dσ`` from chord lengths."""
        ds = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        w = np.zeros(self.n_samples)
        w[:-1] += 0.5 * ds
        w[1:] += 0.5 * ds
        if self.cone.is_axisym:
            w *= 2.0 * math.pi * self.points[:, 0]
        return w

    def integrate(self, values) -> float:
        return float(self.weights() @ np.asarray(values, dtype=float))

    def measure(self) -> float:
        return float(self.weights().sum())

    def scaled(self, t: float) -> "CurveGamma":
        k2 = None if self.k2 is None else self.k2 / t
        return CurveGamma(self.cone, t * self.points, self.unit_normals, self.k1 / t, k2)

    @classmethod
    def from_points(cls, cone: ConeSpec, points) -> "CurveGamma":
        """Estimate normals and curvatures by circumscribed circles through sample triples.

        The error is ``O(n^-2)`` for smooth curves sampled quasi-uniformly.
        Normals point away from the vertex on average.
        """
        pts = np.asarray(points, dtype=float)
        k, normals = three_point_curvature(pts)
        if np.mean(np.einsum("ij,ij->i", pts, normals)) < 0.0:
            normals, k = -normals, -k
        if not cone.is_axisym:
            return cls(cone, pts, normals, k)
        with np.errstate(divide="ignore", invalid="ignore"):
            k2 = normals[:, 0] / pts[:, 0]
        on_axis = np.abs(pts[:, 0]) <= 1e-14 * np.abs(pts).max()
        k2[on_axis] = k[on_axis]
        return cls(cone, pts, normals, k, k2)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        theta = self.cone.angle_of(self.points)
        if self.cone.is_axisym:
            writer.writerow(["theta", "r", "z", "k1", "k2"])
            rows = zip(theta, self.points[:, 0], self.points[:, 1], self.k1, self.k2)
        else:
            writer.writerow(["theta", "x", "y", "k1"])
            rows = zip(theta, self.points[:, 0], self.points[:, 1], self.k1)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def three_point_curvature(points):
    """Signed curvature and unit normals from consecutive sample triples.

    Interior samples use their two neighbours; the endpoints reuse the
    nearest interior triple's circle.
    """
    p = np.asarray(points, dtype=float)
    a, b, c = p[:-2], p[1:-1], p[2:]
    ab, bc, ca = b - a, c - b, a - c
    cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
    la, lb, lc = (np.linalg.norm(v, axis=1) for v in (ab, bc, ca))
    k_mid = 2.0 * cross / (la * lb * lc)
    # tangent of the circle through the triple, evaluated at its middle sample
    t_mid = (ab / la[:, None] * lb[:, None] + bc / lb[:, None] * la[:, None]) / (la + lb)[:, None]
    t_mid /= np.linalg.norm(t_mid, axis=1)[:, None]
    k = np.concatenate([[k_mid[0]], k_mid, [k_mid[-1]]])
    tangent = np.concatenate([[_end_tangent(p[0], p[1], k_mid[0])], t_mid,
                              [-_end_tangent(p[-1], p[-2], -k_mid[-1])]])
    # right normal of the direction of travel: outward when the curve turns left
    normals = -_rot(tangent)
    return k, normals


def _end_tangent(p0, p1, kappa):
    """Unit tangent at ``p0`` of the circle of curvature ``kappa`` through ``p0, p1``."""
    chord = p1 - p0
    length = np.linalg.norm(chord)
    u = chord / length
    half = math.asin(max(-1.0, min(1.0, 0.5 * kappa * length)))
    c, s = math.cos(half), math.sin(half)
    return np.array([c * u[0] + s * u[1], -s * u[0] + c * u[1]])


# -- cone boundary ----------------------------------------------------------------

def _walls(cone: ConeSpec):
    """Unit directions of the boundary rays in the cone's plane."""
    if cone.is_axisym:
        return [cone.direction(cone.aperture)]
    return [cone.direction(0.0), cone.direction(cone.aperture)]


def _ray_distance(p, d):
    t = max(float(p @ d), 0.0)
    return float(np.linalg.norm(p - t * d))


def _boundary_distance(cone: ConeSpec, p) -> float:
    p = np.asarray(p, dtype=float)
    dist = min(_ray_distance(p, d) for d in _walls(cone))
    if cone.is_axisym:
        dist = min(dist, abs(p[0]) if p[1] >= 0.0 else float(np.linalg.norm(p)))
    return dist


def _wall_normal_at(cone: ConeSpec, p):
    """Unit normal of the boundary piece nearest to ``p``."""
    if cone.is_axisym and abs(p[0]) <= _ray_distance(p, _walls(cone)[0]):
        return np.array([1.0, 0.0]), True
    d = min(_walls(cone), key=lambda w: _ray_distance(p, w))
    return _rot(d), False


# -- curve generators ------------------------------------------------------------

def arc_about_origin(cone: ConeSpec, radius: float = 1.0, n: int = 2048) -> CurveGamma:
    """``∂B_R ∩ cone`` with analytic normals and curvatures."""
    theta = np.linspace(0.0, cone.aperture, n)
    normals = cone.direction(theta)
    k = np.full(n, 1.0 / radius)
    return CurveGamma(cone, radius * normals, normals, k, k if cone.is_axisym else None)


spherical_cap = arc_about_origin


def tilted_arc(aperture: float = math.pi / 2, tilt: float = 0.1, radius: float = 1.0,
               n: int = 2048) -> CurveGamma:
    """Unit-curvature arc meeting both rays of a planar wedge at angle ``pi/2 - tilt``.

    The centre sits on the bisector behind the vertex, at distance
    ``radius sin(tilt) / sin(aperture/2)``.
    """
    cone = ConeSpec("planar", aperture)
    b = cone.direction(0.5 * aperture)
    p = -radius * math.sin(tilt) / math.sin(0.5 * aperture) * b

    def hit(d):
        pd = float(p @ d)
        t = pd + math.sqrt(pd * pd - float(p @ p) + radius * radius)
        return t * d

    x0, x1 = hit(cone.direction(0.0)), hit(cone.direction(aperture))
    phi0 = math.atan2(*(x0 - p)[::-1])
    phi1 = math.atan2(*(x1 - p)[::-1])
    phi = np.linspace(phi0, phi1, n)
    normals = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    pts = p + radius * normals
    pts[0], pts[-1] = x0, x1
    return CurveGamma(cone, pts, normals, np.full(n, 1.0 / radius))


def half_circle(center_x: float = 1.0, radius: float = 0.5, n: int = 2048) -> CurveGamma:
    """Half-circle over the flat wall of the half-plane cone (aperture pi)."""
    if not 0.0 < radius < center_x:
        raise ValueError("the half-circle must stay off the vertex")
    cone = ConeSpec("planar", math.pi)
    phi = np.linspace(0.0, math.pi, n)
    normals = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    pts = np.array([center_x, 0.0]) + radius * normals
    pts[:, 1][[0, -1]] = 0.0
    return CurveGamma(cone, pts, normals, np.full(n, 1.0 / radius))


def spheroid_meridian(cone: ConeSpec, a: float = 1.0, c: float = 0.8,
                      n: int = 2048) -> CurveGamma:
    """Meridian of the spheroid ``(r/a)² + (z/c)² = 1`` from the axis to the wall."""
    if not cone.is_axisym:
        raise ValueError("spheroid meridians need an axisymmetric cone")
    t_wall = math.atan(c * math.tan(cone.aperture) / a)
    t = np.linspace(0.0, t_wall, n)
    pts = np.stack([a * np.sin(t), c * np.cos(t)], axis=1)
    speed = np.sqrt((a * np.cos(t)) ** 2 + (c * np.sin(t)) ** 2)
    normals = np.stack([c * np.sin(t), a * np.cos(t)], axis=1) / speed[:, None]
    k1 = a * c / speed**3
    k2 = c / (a * speed)
    wall = cone.direction(cone.aperture)
    pts[-1] = float(pts[-1] @ wall) * wall
    return CurveGamma(cone, pts, normals, k1, k2)


def boundary_curve(g: PolarGraph, n: int = 2048) -> CurveGamma:
    """Γ of a polar-graph domain; exact for sectors, spline-based otherwise."""
    cone = g.cone
    if g.is_sector:
        return arc_about_origin(cone, float(g.rho[0]), n)
    spline = g.interpolator()
    theta = np.linspace(0.0, cone.aperture, n)
    r, r1, r2 = spline(theta), spline(theta, 1), spline(theta, 2)
    e = cone.direction(theta)
    # d e / d theta, in the same plane
    de = np.stack([-e[:, 1], e[:, 0]], axis=1) if not cone.is_axisym else \
        np.stack([e[:, 1], -e[:, 0]], axis=1)
    tangent = r1[:, None] * e + r[:, None] * de
    speed = np.linalg.norm(tangent, axis=1)
    normals = r[:, None] * e - r1[:, None] * de
    normals /= speed[:, None]
    k1 = (r**2 + 2 * r1**2 - r * r2) / speed**3
    pts = r[:, None] * e
    if not cone.is_axisym:
        return CurveGamma(cone, pts, normals, k1)
    with np.errstate(divide="ignore", invalid="ignore"):
        k2 = normals[:, 0] / pts[:, 0]
    k2[0] = k1[0]
    return CurveGamma(cone, pts, normals, k1, k2)


# -- identities ------------------------------------------------------------------------

def orthogonality_defect(c: CurveGamma) -> float:
    """Largest ``|<nu, n_wall>|`` over the two endpoints.

    On an axisymmetric meridian the axis endpoint is checked for regularity:
    the normal there must point along the axis.
    """
    out = 0.0
    for p, nu in ((c.points[0], c.unit_normals[0]), (c.points[-1], c.unit_normals[-1])):
        n_wall, _ = _wall_normal_at(c.cone, p)
        out = max(out, abs(float(nu @ n_wall)))
    return out


def minkowski1_residual(c: CurveGamma) -> float:
    """``∫_Γ (1 − H <x, nu>) dσ``; vanishes when Γ meets the walls orthogonally."""
    return c.integrate(1.0 - c.mean_curvature * c.support())


def minkowski1_boundary_term(c: CurveGamma) -> float:
    """The endpoint term the first Minkowski integral reduces to.

    Planar: ``<x, tau>`` at the last sample minus the first, ``tau`` the unit
    tangent in the sampling direction.  Axisymmetric:
    ``pi r <x, tau>`` at the wall endpoint (the axis contributes nothing).
    """
    tau_end = -_rot(c.unit_normals[-1])
    tau_start = -_rot(c.unit_normals[0])
    # orient the tangents along the sampling direction
    if (c.points[1] - c.points[0]) @ tau_start < 0.0:
        tau_start, tau_end = -tau_start, -tau_end
    if c.cone.is_axisym:
        x = c.points[-1]
        return float(math.pi * x[0] * (x @ tau_end))
    return float(c.points[-1] @ tau_end - c.points[0] @ tau_start)


def mean_curvature_identity_gap(c: CurveGamma, g: PolarGraph,
                                spread_tol: float = H_SPREAD_TOL) -> float:
    """``|mean H − P(Omega) / (N |Omega|)|`` for a constant-curvature boundary."""
    h = c.mean_curvature
    h_bar = c.integrate(h) / c.measure()
    spread = float(np.ptp(h)) / abs(h_bar)
    if spread > spread_tol:
        raise NonConstantCurvature(
            f"mean curvature varies by {spread:.3g} relative (tolerance {spread_tol:.3g})"
        )
    return abs(h_bar - relative_perimeter(g) / (g.cone.dim * volume(g)))


def umbilicity_gap(c: CurveGamma) -> float:
    """``max (H² − sigma_2) = max ((k1 − k2)/2)²``; axisymmetric curves only."""
    if c.k2 is None:
        raise ValueError("umbilicity needs two principal curvatures")
    return float(np.max(0.25 * (c.k1 - c.k2) ** 2))


def minkowski2_residual(c: CurveGamma) -> float:
    """``∫_Γ (H − sigma_2 <x, nu>) dσ`` with ``sigma_2 = k1 k2``."""
    if c.k2 is None:
        raise ValueError("the second Minkowski formula needs two principal curvatures")
    return c.integrate(c.mean_curvature - c.k1 * c.k2 * c.support())


# -- centre location ----------------------------------------------------------------------

@dataclass(frozen=True)
class CenterFit:
    center: tuple
    radius: float
    max_fit_residual: float
    classification: str = NEITHER
    admissible: bool = False
    tolerance: float = CLASSIFY_TOL

    def to_dict(self):
        return {
            "center": [float(v) for v in self.center],
            "radius": self.radius,
            "max_fit_residual": self.max_fit_residual,
            "classification": self.classification,
            "admissible": self.admissible,
            "tolerance": self.tolerance,
        }


def _pratt_circle(pts):
    """Algebraic circle fit under the Pratt normalisation ``B² + C² − 4AD = 1``."""
    shift = pts.mean(axis=0)
    x, y = (pts - shift).T
    z = x * x + y * y
    design = np.stack([z, x, y, np.ones_like(x)], axis=1)
    moments = design.T @ design / len(x)
    constraint = np.array([[0.0, 0, 0, -2], [0, 1, 0, 0], [0, 0, 1, 0], [-2, 0, 0, 0]])
    vals, vecs = eig(moments, constraint)
    vals = np.real(vals)
    ok = np.isfinite(vals) & (vals >= -1e-12 * max(1.0, np.abs(vals[np.isfinite(vals)]).max()))
    a = np.real(vecs[:, np.flatnonzero(ok)[np.argmin(vals[ok])]])
    center = shift + np.array([-a[1], -a[2]]) / (2.0 * a[0])
    radius = math.sqrt(a[1] ** 2 + a[2] ** 2 - 4.0 * a[0] * a[3]) / (2.0 * abs(a[0]))
    return center, radius


def _axis_sphere(pts):
    """Sphere centred on the axis: ``|x|² − 2 z z0 = R² − z0²`` in least squares."""
    design = np.stack([2.0 * pts[:, 1], np.ones(len(pts))], axis=1)
    (z0, c0), *_ = np.linalg.lstsq(design, np.sum(pts * pts, axis=1), rcond=None)
    return np.array([0.0, z0]), math.sqrt(max(c0 + z0 * z0, 0.0))


def _geometric_step(pts, center, radius, on_axis):
    d = pts - center
    dist = np.linalg.norm(d, axis=1)
    res = dist - radius
    jac = np.concatenate([-d / dist[:, None], -np.ones((len(pts), 1))], axis=1)
    if on_axis:
        jac = jac[:, 1:]
    step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
    if on_axis:
        return center + np.array([0.0, step[0]]), radius + step[1]
    return center + step[:2], radius + step[2]


def locate_center(c: CurveGamma, tol: float = CLASSIFY_TOL,
                  fit_tol: float = FIT_TOL) -> CenterFit:
    """Least-squares circle (sphere) through the samples and the position of its centre.

    VERTEX when the centre is within ``tol * radius`` of the vertex, WALL when
    within that distance of a boundary ray, NEITHER otherwise.  ``tol`` is
    widened to ten fitted residuals (relative to the radius) for noisy samples.
    A WALL centre is admissible only for the half-plane (planar aperture pi).
    """
    pts = c.points
    on_axis = c.cone.is_axisym
    center, radius = _axis_sphere(pts) if on_axis else _pratt_circle(pts)
    center, radius = _geometric_step(pts, center, radius, on_axis)
    residual = float(np.max(np.abs(np.linalg.norm(pts - center, axis=1) - radius)))
    if residual > fit_tol * radius:
        raise NotSpherical(f"fit residual {residual:.3g} exceeds {fit_tol:.3g} * radius")
    tol = max(tol, 10.0 * residual / radius)
    if np.linalg.norm(center) <= tol * radius:
        label = VERTEX
    elif min(_ray_distance(center, d) for d in _walls(c.cone)) <= tol * radius:
        label = WALL
    else:
        label = NEITHER
    half_plane = not c.cone.is_axisym and math.isclose(c.cone.aperture, math.pi, rel_tol=1e-12)
    admissible = label == VERTEX or (label == WALL and half_plane)
    return CenterFit(tuple(float(v) for v in center), float(radius), residual, label,
                     admissible, tol)


# -- reports ---------------------------------------------------------------------------------

def verification_report(c: CurveGamma, graph: PolarGraph | None = None,
                        tol: float = CLASSIFY_TOL) -> dict:
    """All identities for one curve; JSON-ready."""
    report = {
        "cone": c.cone.to_dict(),
        "n_samples": c.n_samples,
        "orthogonality_defect": orthogonality_defect(c),
        "minkowski1_residual": minkowski1_residual(c),
    }
    if c.k2 is not None:
        report["umbilicity_gap"] = umbilicity_gap(c)
        report["minkowski2_residual"] = minkowski2_residual(c)
    if graph is not None:
        try:
            report["mean_curvature_identity_gap"] = mean_curvature_identity_gap(c, graph)
        except NonConstantCurvature as exc:
            report["mean_curvature_identity_gap"] = None
            report["mean_curvature_note"] = str(exc)
    try:
        report["center_fit"] = locate_center(c, tol).to_dict()
    except NotSpherical as exc:
        report["center_fit"] = None
        report["center_note"] = str(exc)
    return report


def report_json(report: dict, path=None) -> str:
    text = json.dumps(report, indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def standard_suite(n: int = 2048):
    """Named CMC test surfaces: ``(name, curve, graph or None)``."""
    suite = []
    for label, a in (("pi/4", math.pi / 4), ("pi/2", math.pi / 2), ("3pi/4", 3 * math.pi / 4)):
        cone = ConeSpec("planar", a)
        suite.append((f"planar arc {label}", arc_about_origin(cone, 1.0, n),
                      PolarGraph.constant(cone, 1.0)))
    for label, b in (("pi/6", math.pi / 6), ("pi/4", math.pi / 4), ("pi/3", math.pi / 3)):
        cone = ConeSpec("axisym", b)
        suite.append((f"spherical cap {label}", spherical_cap(cone, 1.0, n),
                      PolarGraph.constant(cone, 1.0)))
    suite.append(("half-circle on the flat wall", half_circle(1.0, 0.5, n), None))
    return suite
