"""Cones, polar-graph domains and their volume / relative perimeter.

A planar cone is the wedge ``0 < theta < alpha``.  An axisymmetric cone in
R^3 is the circular cone of half-angle ``beta`` about the z axis; its domains
are described in the meridian half-plane by the polar angle measured from the
axis.  A :class:`PolarGraph` stores the radial profile ``rho(theta)`` of the
relative boundary on a closed uniform grid over ``[0, aperture]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .exceptions import InvalidProfileError

PLANAR = "planar"
AXISYM = "axisym"

_KIND_ALIASES = {
    "planar": PLANAR,
    "planar2d": PLANAR,
    "axisym": AXISYM,
    "axisym3d": AXISYM,
}

MIN_N_THETA = 8


@dataclass(frozen=True)
class ConeSpec:
    """A planar wedge (``kind='planar'``) or a circular cone (``'axisym'``)."""

    kind: str
    aperture: float

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        a = float(self.aperture)
        object.__setattr__(self, "aperture", a)
        if kind == PLANAR and not 0.0 < a < 2.0 * math.pi:
            raise ValueError(f"planar aperture must lie in (0, 2pi), got {a}")
        if kind == AXISYM and not 0.0 < a < 0.5 * math.pi:
            raise ValueError(f"axisymmetric half-angle must lie in (0, pi/2), got {a}")

    @property
    def dim(self) -> int:
        return 2 if self.kind == PLANAR else 3

    @property
    def is_axisym(self) -> bool:
        return self.kind == AXISYM

    def omega_measure(self) -> float:
        """Measure of the unit sector ``B_1 ∩ cone``."""
        if self.kind == PLANAR:
            return 0.5 * self.aperture
        return 2.0 * math.pi * (1.0 - math.cos(self.aperture)) / 3.0

    def sector_perimeter(self, radius: float) -> float:
        """Relative perimeter of the sector of the given radius (closed form)."""
        n = self.dim
        return n * self.omega_measure() * radius ** (n - 1)

    def sector_volume(self, radius: float) -> float:
        return self.omega_measure() * radius**self.dim

    def sector_radius(self, volume: float) -> float:
        """Radius of the sector with the given measure."""
        return (volume / self.omega_measure()) ** (1.0 / self.dim)

    def direction(self, theta):
        """Unit vectors of the rays at angle ``theta`` (planar xy / meridian rz)."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == PLANAR:
            return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return np.stack([np.sin(theta), np.cos(theta)], axis=-1)

    def angle_of(self, points):
        """Angular coordinate of points in the plane of :meth:`direction`."""
        p = np.asarray(points, dtype=float)
        if self.kind == PLANAR:
            return np.arctan2(p[..., 1], p[..., 0])
        return np.arctan2(p[..., 0], p[..., 1])

    def to_dict(self):
        return {"kind": self.kind, "aperture": self.aperture}


@dataclass(frozen=True, eq=False)
class PolarGraph:
    """Sector-like domain ``{r < rho(theta)}`` inside a cone."""

    cone: ConeSpec
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float).ravel()
        if rho.size < MIN_N_THETA + 1:
            raise InvalidProfileError(
                f"profile needs at least {MIN_N_THETA + 1} samples, got {rho.size}"
            )
        if not np.all(np.isfinite(rho)):
            raise InvalidProfileError("profile contains non-finite samples")
        if np.any(rho <= 0.0):
            raise InvalidProfileError(
                f"profile must be strictly positive (min rho = {rho.min():.3g})"
            )
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def constant(cls, cone: ConeSpec, radius: float, n_theta: int = 64) -> "PolarGraph":
        return cls(cone, np.full(n_theta + 1, float(radius)))

    @classmethod
    def from_function(cls, cone: ConeSpec, func, n_theta: int = 64) -> "PolarGraph":
        theta = np.linspace(0.0, cone.aperture, n_theta + 1)
        return cls(cone, np.broadcast_to(func(theta), theta.shape))

    @property
    def n_theta(self) -> int:
        return self.rho.size - 1

    @property
    def theta(self) -> np.ndarray:
        return np.linspace(0.0, self.cone.aperture, self.rho.size)

    @property
    def dtheta(self) -> float:
        return self.cone.aperture / self.n_theta

    @property
    def is_sector(self) -> bool:
        return bool(np.all(self.rho == self.rho[0]))

    def drho(self) -> np.ndarray:
        """Second-order differences; one-sided at the two wall endpoints."""
        return np.gradient(self.rho, self.dtheta, edge_order=2)

    def scaled(self, t: float) -> "PolarGraph":
        return PolarGraph(self.cone, t * self.rho)

    def with_rho(self, rho) -> "PolarGraph":
        return PolarGraph(self.cone, rho)

    def boundary_points(self) -> np.ndarray:
        return self.rho[:, None] * self.cone.direction(self.theta)

    def interpolator(self):
        """Cubic spline of rho over the angular grid (linear in the samples)."""
        from scipy.interpolate import CubicSpline

        return CubicSpline(self.theta, self.rho)

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "kind": self.cone.kind,
            "aperture": self.cone.aperture,
            "rho": [float(r) for r in self.rho],
        }

    @classmethod
    def from_dict(cls, data) -> "PolarGraph":
        for key in ("kind", "aperture", "rho"):
            if key not in data:
                raise KeyError(key)
        return cls(ConeSpec(data["kind"], data["aperture"]), data["rho"])

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "PolarGraph":
        if isinstance(source, Path) or (isinstance(source, str)
                                        and not source.lstrip().startswith("{")):
            source = Path(source).read_text()
        return cls.from_dict(json.loads(source))


def volume(g: PolarGraph, exact_sectors: bool = True) -> float:
    """Measure of the domain enclosed by ``g`` (composite Simpson).

    Constant profiles use the closed-form sector formula unless
    ``exact_sectors`` is False.
    """
    if exact_sectors and g.is_sector:
        return g.cone.sector_volume(g.rho[0])
    th = g.theta
    if g.cone.is_axisym:
        integrand = (2.0 * math.pi / 3.0) * g.rho**3 * np.sin(th)
    else:
        integrand = 0.5 * g.rho**2
    return float(simpson(integrand, x=th))


def relative_perimeter(g: PolarGraph, exact_sectors: bool = True) -> float:
    """Measure of the relative boundary only; the cone-wall part is excluded."""
    if exact_sectors and g.is_sector:
        return g.cone.sector_perimeter(g.rho[0])
    th = g.theta
    speed = np.hypot(g.rho, g.drho())
    if g.cone.is_axisym:
        speed = 2.0 * math.pi * g.rho * np.sin(th) * speed
    return float(simpson(speed, x=th))


def isoperimetric_gap(g: PolarGraph, exact_sectors: bool = True) -> float:
    """``P(Omega) - N * omega_N^(1/N) * |Omega|^((N-1)/N)``; zero for sectors."""
    n = g.cone.dim
    vol = volume(g, exact_sectors)
    bound = n * g.cone.omega_measure() ** (1.0 / n) * vol ** ((n - 1.0) / n)
    return relative_perimeter(g, exact_sectors) - bound


def sector_of_same_volume(g: PolarGraph) -> PolarGraph:
    """The sector ``S_omega(Omega)`` on the same angular grid."""
    if g.is_sector:
        return g
    radius = g.cone.sector_radius(volume(g))
    return PolarGraph.constant(g.cone, radius, g.n_theta)


def normalize_volume(g: PolarGraph, target: float = 1.0) -> PolarGraph:
    """Uniform rescale so that ``volume(g) == target``."""
    return g.scaled((target / volume(g)) ** (1.0 / g.cone.dim))


def cosine_profile(cone: ConeSpec, radius=1.0, amplitude=0.1, k=4, n_theta=64) -> PolarGraph:
    """``rho = R (1 + amplitude cos(k theta))``."""
    return PolarGraph.from_function(
        cone, lambda th: radius * (1.0 + amplitude * np.cos(k * th)), n_theta
    )


def random_profile(cone: ConeSpec, rng, radius=1.0, n_modes=4, n_theta=64,
                   max_amplitude=0.15) -> PolarGraph:
    """Seeded smooth perturbation ``R (1 + sum a_k cos(k pi theta / aperture))``.

    ``|a_k| <= max_amplitude / k**2`` keeps the profile strictly positive and
    orthogonal to both walls.
    """
    rng = np.random.default_rng(rng)
    k = np.arange(1, n_modes + 1)
    coeffs = rng.uniform(-1.0, 1.0, size=n_modes) * max_amplitude / k**2
    theta = np.linspace(0.0, cone.aperture, n_theta + 1)
    modes = np.cos(np.outer(theta, k) * math.pi / cone.aperture)
    return PolarGraph(cone, radius * (1.0 + modes @ coeffs))
