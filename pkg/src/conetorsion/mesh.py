"""Structured, graded triangulations of polar-graph domains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import MeshFailure, NoDirichletBoundary
from .geometry import PolarGraph

GAMMA = 1
GAMMA1 = 2
AXIS = 3
TAG_NAMES = {GAMMA: "GAMMA", GAMMA1: "GAMMA1", AXIS: "AXIS"}
TAG_CODES = {v: k for k, v in TAG_NAMES.items()}

DEFAULT_MAX_ELEMENTS = 2_000_000


def graded_nodes(n: int, grading: float) -> np.ndarray:
    """``n + 1`` nodes on [0, 1] clustered at both ends like ``t**grading``."""
    t = np.linspace(0.0, 1.0, n + 1)
    if grading == 1.0:
        return t
    a = t**grading
    b = (1.0 - t) ** grading
    return a / (a + b)


@dataclass(frozen=True, eq=False)
class SectorMesh:
    """Conforming P1 triangulation of a polar-graph domain.

    Vertex 0 is the cone vertex ``O``; the remaining vertices form
    ``n_radial`` rings, the outermost (GAMMA) one with ``n_angular + 1``
    points and inner rings possibly coarsened by halving.  Coordinates are
    Cartesian for planar cones and ``(r, z)`` meridian coordinates for
    axisymmetric ones, in which case every measure carries the weight
    ``2 pi r``.
    """

    graph: PolarGraph
    vertices: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary_facets: np.ndarray = field(repr=False)
    facet_tags: np.ndarray = field(repr=False)
    grading_exponent: float = 1.0
    s_nodes: np.ndarray = field(default=None, repr=False)
    theta_nodes: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_facets", "facet_tags",
                     "s_nodes", "theta_nodes"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def cone(self):
        return self.graph.cone

    @property
    def is_axisym(self) -> bool:
        return self.graph.cone.is_axisym

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_radial(self) -> int:
        return len(self.s_nodes) - 1

    @property
    def n_angular(self) -> int:
        return len(self.theta_nodes) - 1

    # -- element geometry ---------------------------------------------------

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas())

    def element_weights(self) -> np.ndarray:
        """Weighted element measures (area, or ``2 pi r_c * area``)."""
        a = self.areas()
        if self.is_axisym:
            rc = self.vertices[self.triangles, 0].mean(axis=1)
            return 2.0 * math.pi * rc * a
        return a

    def measure(self) -> float:
        return float(self.element_weights().sum())

    def gradients(self):
        """P1 basis gradients per element, shape (n_tri, 3, 2), and areas."""
        p = self.vertices[self.triangles]
        x, y = p[..., 0], p[..., 1]
        two_a = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        grads = np.stack([gx, gy], axis=-1) / two_a[:, None, None]
        return grads, 0.5 * np.abs(two_a)

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d = [np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in ((0, 1), (1, 2), (2, 0))]
        return np.max(d, axis=0)

    # -- boundary -------------------------------------------------------------

    def facets(self, tag: int) -> np.ndarray:
        return self.boundary_facets[self.facet_tags == tag]

    def facet_lengths(self, tag: int | None = None) -> np.ndarray:
        f = self.boundary_facets if tag is None else self.facets(tag)
        p = self.vertices[f]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def facet_measures(self, tag: int) -> np.ndarray:
        """Facet measures with the axisymmetric weight where it applies."""
        f = self.facets(tag)
        lengths = self.facet_lengths(tag)
        if self.is_axisym:
            rm = self.vertices[f, 0].mean(axis=1)
            return 2.0 * math.pi * rm * lengths
        return lengths

    def boundary_measure(self, tag: int) -> float:
        return float(self.facet_measures(tag).sum())

    def gamma_vertices(self) -> np.ndarray:
        return np.unique(self.facets(GAMMA))

    def gamma_facet_elements(self) -> np.ndarray:
        """Index of the element adjacent to each GAMMA facet."""
        n = self.n_vertices
        tri = self.triangles
        edges = np.stack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]], axis=1)
        edges = np.sort(edges, axis=2)
        keys = (edges[..., 0] * n + edges[..., 1]).ravel()
        owner = np.repeat(np.arange(len(tri)), 3)
        f = np.sort(self.facets(GAMMA), axis=1)
        fkeys = f[:, 0] * n + f[:, 1]
        order = np.argsort(keys, kind="stable")
        pos = np.searchsorted(keys[order], fkeys)
        return owner[order[pos]]

    # -- point location -------------------------------------------------------

    def locate(self, points):
        """Element index and barycentric coordinates of query points.

        Points outside the mesh get element ``-1`` and NaN coordinates.
        """
        from scipy.spatial import cKDTree

        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        elem = np.full(n, -1, dtype=np.int64)
        bary = np.full((n, 3), np.nan)
        centroids = self.vertices[self.triangles].mean(axis=1)
        tree = cKDTree(centroids)
        k = min(16, self.n_triangles)
        _, cand = tree.query(pts, k=k)
        cand = cand.reshape(n, k)
        for c in range(k):
            todo = elem < 0
            if not np.any(todo):
                break
            lam = self._barycentric(cand[todo, c], pts[todo])
            inside = np.all(lam >= -1e-10, axis=1)
            idx = np.flatnonzero(todo)[inside]
            elem[idx] = cand[todo, c][inside]
            bary[idx] = lam[inside]
        # rare misses (very anisotropic cells): exhaustive pass
        for q in np.flatnonzero(elem < 0):
            lam = self._barycentric(np.arange(self.n_triangles),
                                    np.repeat(pts[q:q + 1], self.n_triangles, axis=0))
            hit = np.flatnonzero(np.all(lam >= -1e-10, axis=1))
            if hit.size:
                elem[q] = hit[0]
                bary[q] = lam[hit[0]]
        return elem, bary

    def _barycentric(self, elements, pts):
        p = self.vertices[self.triangles[elements]]
        v0 = p[:, 1] - p[:, 0]
        v1 = p[:, 2] - p[:, 0]
        v2 = pts - p[:, 0]
        det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
        l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
        l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=1)

    def interpolate(self, values, points) -> np.ndarray:
        """Evaluate a nodal P1 field at arbitrary points (NaN outside)."""
        elem, bary = self.locate(points)
        out = np.full(len(elem), np.nan)
        hit = elem >= 0
        out[hit] = np.sum(np.asarray(values)[self.triangles[elem[hit]]] * bary[hit], axis=1)
        return out

    # -- checks & io ----------------------------------------------------------

    def check(self):
        """Raise :class:`MeshFailure` if a structural invariant is violated."""
        if np.any(self.signed_areas() <= 0.0):
            raise MeshFailure("mesh has degenerate or inverted triangles")
        if self.boundary_measure(GAMMA) <= 0.0:
            raise NoDirichletBoundary("mesh has no GAMMA facets")
        if self.boundary_measure(GAMMA1) <= 0.0:
            raise MeshFailure("mesh has no GAMMA1 facets")
        return self

    def to_text(self, path=None) -> str:
        lines = [f"v {x!r} {y!r}" for x, y in self.vertices.tolist()]
        lines += [f"t {i} {j} {k}" for i, j, k in self.triangles.tolist()]
        lines += [
            f"b {i} {j} {TAG_NAMES[t]}"
            for (i, j), t in zip(self.boundary_facets.tolist(), self.facet_tags.tolist())
        ]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def read_mesh_text(source):
    """Parse the ``v``/``t``/``b`` text format into plain arrays."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        source = Path(source).read_text()
    verts, tris, facets, tags = [], [], [], []
    for line in source.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append((float(parts[1]), float(parts[2])))
        elif parts[0] == "t":
            tris.append(tuple(int(p) for p in parts[1:4]))
        elif parts[0] == "b":
            facets.append((int(parts[1]), int(parts[2])))
            tags.append(TAG_CODES[parts[3]])
    return (np.array(verts), np.array(tris, dtype=np.int64),
            np.array(facets, dtype=np.int64), np.array(tags, dtype=np.int64))


def mesh_counts(g: PolarGraph, target_h: float, grading: float):
    """Radial and angular subdivision counts giving diameters <= target_h.

    The angular count is rounded up to a multiple of ``2**levels`` so that
    rings near O can be coarsened by repeated halving.
    """
    rmax = float(g.rho.max())
    step = target_h / math.sqrt(2.0)
    n_rad = max(2, math.ceil(grading * rmax / step))
    need = max(4, math.ceil(g.cone.aperture * rmax / step))
    levels = max(0, int(math.floor(math.log2(need / 4.0))))
    block = 2**levels
    return n_rad, block * math.ceil(need / block)


def _ring_levels(s, n_angular, aspect=2.0):
    """Halving level per ring so that angular/radial cell size stays O(1)."""
    max_level = 0
    while n_angular % 2 ** (max_level + 1) == 0 and n_angular // 2 ** (max_level + 1) >= 4:
        max_level += 1
    n_rad = len(s) - 1
    dr = np.diff(s)
    ring_s = s[1:]
    dth = 1.0 / n_angular
    with np.errstate(divide="ignore"):
        want = np.floor(np.log2(aspect * dr / (ring_s * dth)))
    level = np.clip(want, 0, max_level).astype(int)
    level[-1] = 0
    level = np.minimum.accumulate(level)
    for i in range(n_rad - 2, -1, -1):
        level[i] = min(level[i], level[i + 1] + 1)
    return level


def generate_mesh(g: PolarGraph, target_h: float = 0.05, grading_exponent: float = 2.0,
                  n_radial: int | None = None, n_angular: int | None = None,
                  max_elements: int = DEFAULT_MAX_ELEMENTS) -> SectorMesh:
    """Mesh ``g`` with a polar template graded toward O and toward GAMMA.

    Ring ``i`` carries ``n_angular / 2**level[i]`` angular cells; levels
    drop by at most one between neighbouring rings and the outer ring is
    never coarsened.  ``n_radial`` / ``n_angular`` override the counts
    derived from ``target_h``; shape flows pin them so that meshes of nearby
    profiles share one topology.
    """
    if target_h <= 0.0:
        raise ValueError("target_h must be positive")
    if grading_exponent < 1.0:
        raise ValueError("grading_exponent must be >= 1")
    if n_radial is None or n_angular is None:
        if target_h >= float(g.rho.min()):
            raise MeshFailure(
                f"target_h={target_h} is not below min rho={g.rho.min():.4g}"
            )
        nr, na = mesh_counts(g, target_h, grading_exponent)
        n_radial = n_radial or nr
        n_angular = n_angular or na
    s = graded_nodes(n_radial, grading_exponent)
    levels = _ring_levels(s, n_angular)
    counts = n_angular // 2**levels
    n_tri = counts[0] + sum(
        (2 * counts[i + 1] if levels[i] == levels[i + 1] else 3 * counts[i])
        for i in range(n_radial - 1)
    )
    if n_tri > max_elements:
        raise MeshFailure(f"{n_tri} elements exceed the cap of {max_elements}")

    cone = g.cone
    theta = np.linspace(0.0, cone.aperture, n_angular + 1)
    rho = np.full(theta.shape, g.rho[0]) if g.is_sector else g.interpolator()(theta)
    if np.any(rho <= 0.0):
        raise MeshFailure("interpolated profile is not strictly positive")
    outer = rho[:, None] * cone.direction(theta)

    offsets = np.concatenate([[1], 1 + np.cumsum(counts + 1)])
    ring_pts = [s[i + 1] * outer[:: 2 ** levels[i]] for i in range(n_radial)]
    vertices = np.vstack([np.zeros((1, 2))] + ring_pts)

    tris = []
    j = np.arange(counts[0])
    o = offsets[0]
    tris.append(np.stack([np.zeros_like(j), o + j, o + j + 1], axis=1))
    for i in range(n_radial - 1):
        oi, oo = offsets[i], offsets[i + 1]
        if levels[i] == levels[i + 1]:
            j = np.arange(counts[i])
            a, b, c, d = oi + j, oo + j, oo + j + 1, oi + j + 1
            band = np.empty((2 * counts[i], 3), dtype=np.int64)
            band[0::2] = np.stack([a, b, c], axis=1)
            band[1::2] = np.stack([a, c, d], axis=1)
        else:
            j = np.arange(counts[i])
            a, d = oi + j, oi + j + 1
            b0, b1, b2 = oo + 2 * j, oo + 2 * j + 1, oo + 2 * j + 2
            band = np.empty((3 * counts[i], 3), dtype=np.int64)
            band[0::3] = np.stack([a, b0, b1], axis=1)
            band[1::3] = np.stack([a, b1, d], axis=1)
            band[2::3] = np.stack([d, b1, b2], axis=1)
        tris.append(band)
    triangles = np.vstack(tris).astype(np.int64)

    # orientation depends on the handedness of (direction, theta)
    p = vertices[triangles[:1]]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    if e1[0, 0] * e2[0, 1] - e1[0, 1] * e2[0, 0] < 0.0:
        triangles = triangles[:, [0, 2, 1]]

    last = offsets[n_radial - 1]
    jg = np.arange(n_angular)
    gamma = np.stack([last + jg, last + jg + 1], axis=1)
    first_pts = offsets[:-1]
    last_pts = offsets[:-1] + counts
    wall0 = np.vstack([[0, first_pts[0]], np.stack([first_pts[:-1], first_pts[1:]], axis=1)])
    wall1 = np.vstack([[0, last_pts[0]], np.stack([last_pts[:-1], last_pts[1:]], axis=1)])
    tag0 = AXIS if cone.is_axisym else GAMMA1
    facets = np.vstack([gamma, wall0, wall1]).astype(np.int64)
    tags = np.concatenate([
        np.full(len(gamma), GAMMA), np.full(len(wall0), tag0), np.full(len(wall1), GAMMA1)
    ]).astype(np.int64)

    mesh = SectorMesh(g, vertices, triangles, facets, tags, float(grading_exponent), s, theta)
    return mesh.check()


def rescaled_mesh(mesh: SectorMesh, t: float) -> SectorMesh:
    """The same mesh dilated by ``t`` (identical topology)."""
    return SectorMesh(mesh.graph.scaled(t), t * mesh.vertices, mesh.triangles,
                      mesh.boundary_facets, mesh.facet_tags, mesh.grading_exponent,
                      mesh.s_nodes, mesh.theta_nodes)
