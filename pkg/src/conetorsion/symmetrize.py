"""Decreasing rearrangement and symmetrization onto the equal-volume sector.

Superlevel measures are computed exactly for P1 fields: each triangle
contributes the measure of the sub-triangle (or its complement) cut off by
the level line.  In the axisymmetric case the measure carries the ``2 pi r``
weight, which is linear on a triangle, so the sub-region measure is its area
times the weight at its centroid.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import VolumeMismatch
from .geometry import sector_of_same_volume, volume
from .mesh import SectorMesh, generate_mesh
from .torsion import FemField, gradient_lp_integral

DEFAULT_BINS = 4096
LEVELS_PER_BIN = 4
VOLUME_RTOL = 1e-8
_MAX_PAIRS = 4_000_000


@dataclass(frozen=True, eq=False)
class RearrangedProfile:
    """Piecewise-linear ``u♯`` on bins of ``[0, total_measure]``.

    :func:`measure_bins` places the breakpoints; they cluster quadratically
    at ``s = 0``, where ``u♯`` may behave like ``max − c s^(2/N)`` at a peak
    sitting in a corner.
    """

    breakpoints: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    total_measure: float

    def __post_init__(self):
        s = np.array(self.breakpoints, dtype=float)
        v = np.array(self.values, dtype=float)
        if s.shape != v.shape or s.ndim != 1 or s.size < 2:
            raise ValueError("breakpoints and values must be 1-d arrays of equal length")
        if s[0] != 0.0 or np.any(np.diff(s) <= 0.0):
            raise ValueError("breakpoints must increase strictly from 0")
        if np.any(np.diff(v) > 0.0):
            raise ValueError("rearranged values must be nonincreasing")
        s.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", s)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "total_measure", float(self.total_measure))

    @property
    def n_bins(self) -> int:
        return self.breakpoints.size - 1

    def __call__(self, s):
        """``u♯(s)``; constant extension outside ``[0, total_measure]``."""
        return np.interp(s, self.breakpoints, self.values)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    def integral(self, p: float = 1.0) -> float:
        """``∫ |u♯|^p ds``, exact for the piecewise-linear profile."""
        a = np.abs(self.values[:-1])
        b = np.abs(self.values[1:])
        ds = np.diff(self.breakpoints)
        flat = np.isclose(a, b, rtol=1e-12, atol=0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            pieces = np.where(
                flat,
                ds * a**p,
                ds * (a ** (p + 1) - b ** (p + 1)) / ((p + 1) * (a - b)),
            )
        return float(pieces.sum())

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", "u_sharp"])
        for s, v in zip(self.breakpoints.tolist(), self.values.tolist()):
            writer.writerow([repr(s), repr(v)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def measure_bins(total: float, n_bins: int) -> np.ndarray:
    """Breakpoints ``total * (j / n_bins)**2``."""
    return total * (np.arange(n_bins + 1) / n_bins) ** 2


# -- superlevel measures --------------------------------------------------------

def _sorted_elements(mesh: SectorMesh, nodal):
    """Per-element nodal values and weights sorted so that u0 <= u1 <= u2."""
    tri = mesh.triangles
    vals = nodal[tri]
    order = np.argsort(vals, axis=1, kind="stable")
    u = np.take_along_axis(vals, order, axis=1)
    if mesh.is_axisym:
        w = 2.0 * math.pi * mesh.vertices[tri, 0]
    else:
        w = np.ones(tri.shape)
    w = np.take_along_axis(w, order, axis=1)
    return u, w, mesh.areas()


def _partial_measure(u, w, area, t):
    """Measure of ``{u > t}`` in elements with ``u0 <= t < u2``."""
    u0, u1, u2 = u.T
    w0, w1, w2 = w.T
    whole = area * (w0 + w1 + w2) / 3.0
    upper = t >= u1
    out = np.empty_like(t)
    # tip triangle at the top vertex
    lam = (u2 - t) / (u2 - u0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(upper, (u2 - t) / (u2 - u1), 0.0)
    wc = (3.0 * w2 + lam * (w0 - w2) + mu * (w1 - w2)) / 3.0
    out[upper] = (area * lam * mu * wc)[upper]
    # whole element minus the tip at the bottom vertex
    low = ~upper
    lam = (t - u0) / (u2 - u0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(low, (t - u0) / (u1 - u0), 0.0)
    wc = (3.0 * w0 + mu * (w1 - w0) + lam * (w2 - w0)) / 3.0
    out[low] = (whole - area * lam * mu * wc)[low]
    return out


def _superlevel_measures(mesh: SectorMesh, nodal, levels):
    """``(|{u > t}|, |{u >= t}|)`` at each level, and the total measure."""
    u, w, area = _sorted_elements(mesh, nodal)
    whole = area * w.sum(axis=1) / 3.0
    levels = np.asarray(levels, dtype=float)

    # elements lying entirely above a level
    order = np.argsort(u[:, 0], kind="stable")
    u0_sorted = u[order, 0]
    tail = np.concatenate([np.cumsum(whole[order][::-1])[::-1], [0.0]])
    strict = tail[np.searchsorted(u0_sorted, levels, side="right")]
    weak = tail[np.searchsorted(u0_sorted, levels, side="left")]

    # elements cut by a level line: u0 <= t < u2
    lo = np.searchsorted(levels, u[:, 0], side="left")
    hi = np.searchsorted(levels, u[:, 2], side="left")
    counts = hi - lo
    cut = np.flatnonzero(counts > 0)
    partial = np.zeros(levels.size)
    start = 0
    csum = np.cumsum(counts[cut])
    while start < cut.size:
        base = csum[start - 1] if start else 0
        stop = int(np.searchsorted(csum, base + _MAX_PAIRS, side="right"))
        stop = max(stop, start + 1)
        el = cut[start:stop]
        c = counts[el]
        idx = np.repeat(el, c)
        offs = np.arange(c.sum()) - np.repeat(np.cumsum(c) - c, c)
        k = lo[idx] + offs
        meas = _partial_measure(u[idx], w[idx], area[idx], levels[k])
        partial += np.bincount(k, weights=meas, minlength=levels.size)
        start = stop
    # a cut element with u0 == t is already counted whole in ``weak``
    touching = cut[levels[lo[cut]] == u[cut, 0]]
    doubled = np.bincount(lo[touching], weights=whole[touching], minlength=levels.size)
    return strict + partial, weak + partial - doubled, float(tail[0])


def distribution_function(u: FemField, t_grid) -> np.ndarray:
    """``μ(t) = |{|u| > t}|`` on the given levels (exact for P1 fields).

    Absolute values are taken nodally, which is exact for fields of one sign.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0.0):
        raise ValueError("t_grid must be nondecreasing")
    return _superlevel_measures(u.mesh, np.abs(u.values), t_grid)[0]


def _level_grid(nodal, n_levels):
    top = float(nodal.max())
    grid = np.linspace(0.0, top, n_levels + 1) if top > 0.0 else np.zeros(1)
    return np.unique(np.concatenate([grid, [top]]))


def _flat_levels(mesh: SectorMesh, nodal):
    vals = nodal[mesh.triangles]
    flat = vals.min(axis=1) == vals.max(axis=1)
    return np.unique(vals[flat, 0])


def decreasing_rearrangement(u: FemField, n_bins: int = DEFAULT_BINS,
                             levels_per_bin: int = LEVELS_PER_BIN) -> RearrangedProfile:
    """``u♯(s) = inf{t >= 0 : μ(t) < s}`` sampled on ``n_bins`` bins.

    ``μ`` is evaluated exactly on a level grid of ``levels_per_bin * n_bins``
    uniform levels (plus the values of flat elements, where ``μ`` jumps) and
    inverted piecewise linearly.
    """
    if n_bins < 16:
        raise ValueError(f"n_bins must be at least 16, got {n_bins}")
    profile = getattr(u, "radial_profile", None)
    if isinstance(profile, RearrangedProfile):
        if profile.n_bins == n_bins:
            return profile
        s = measure_bins(profile.total_measure, n_bins)
        return RearrangedProfile(s, profile(s), profile.total_measure)

    nodal = np.abs(u.values)
    levels = np.union1d(_level_grid(nodal, levels_per_bin * n_bins), _flat_levels(u.mesh, nodal))
    strict, weak, total = _superlevel_measures(u.mesh, nodal, levels)
    weak[0] = total  # the domain itself at the zero level

    # monotone polyline through (weak, t) and (strict, t) in increasing t
    m = np.empty(2 * levels.size)
    t = np.repeat(levels, 2)
    m[0::2] = weak
    m[1::2] = strict
    m = np.minimum.accumulate(np.minimum(m, total))
    m[np.abs(m - total) <= 1e-13 * total] = total

    s = measure_bins(total, n_bins)
    j = np.searchsorted(-m, -s, side="right")  # first vertex with m < s
    inside = j < m.size
    j_in = np.clip(j, 1, m.size - 1)
    m_hi, m_lo = m[j_in - 1], m[j_in]
    t_hi, t_lo = t[j_in - 1], t[j_in]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(m_hi > m_lo, (m_hi - s) / (m_hi - m_lo), 0.0)
    values = np.where(inside & (j > 0), t_hi + frac * (t_lo - t_hi), levels[-1])
    values = np.minimum.accumulate(values)
    return RearrangedProfile(s, values, total)


# -- symmetrization ---------------------------------------------------------------

def symmetrization_target(u: FemField, target_h: float | None = None,
                          grading_exponent: float | None = None) -> SectorMesh:
    """Mesh of the sector with the volume of ``u``'s domain, at matching resolution."""
    mesh = u.mesh
    if target_h is None:
        target_h = float(np.median(mesh.diameters()))
    if grading_exponent is None:
        grading_exponent = mesh.grading_exponent
    return generate_mesh(sector_of_same_volume(mesh.graph), target_h, grading_exponent)


def _source_volume(u: FemField) -> float:
    return volume(u.mesh.graph)


def _check_volumes(u: FemField, target_mesh: SectorMesh):
    if target_mesh.cone != u.mesh.cone:
        raise VolumeMismatch("target mesh lives in a different cone")
    if not target_mesh.graph.is_sector:
        raise VolumeMismatch("target mesh is not a sector")
    v_src = _source_volume(u)
    v_tgt = volume(target_mesh.graph)
    if abs(v_tgt - v_src) > VOLUME_RTOL * v_src:
        raise VolumeMismatch(
            f"target sector volume {v_tgt:.12g} differs from |Omega| = {v_src:.12g}"
        )


def radial_measure(mesh: SectorMesh, points=None) -> np.ndarray:
    """``omega_N |x|^N`` at the mesh vertices (or the given points)."""
    x = mesh.vertices if points is None else np.asarray(points, dtype=float)
    cone = mesh.cone
    return cone.omega_measure() * np.linalg.norm(x, axis=-1) ** cone.dim


def omega_symmetrize(u: FemField, target_mesh: SectorMesh,
                     n_bins: int = DEFAULT_BINS) -> FemField:
    """``u*(x) = u♯(omega_N |x|^N)`` sampled at the vertices of ``target_mesh``."""
    _check_volumes(u, target_mesh)
    profile = decreasing_rearrangement(u, n_bins)
    values = profile(radial_measure(target_mesh))
    return FemField(target_mesh, values, radial_profile=profile)


def symmetrized_gradient_integral(profile: RearrangedProfile, cone, p: float) -> float:
    """``∫|∇u*|^p`` from the profile alone.

    With ``s = omega |x|^N`` the radial slope is ``u♯'(s) N omega^(1/N)
    s^((N-1)/N)`` and ``dx = ds``; each bin is integrated in closed form.
    """
    n = cone.dim
    c = n * cone.omega_measure() ** (1.0 / n)
    q = p * (n - 1.0) / n
    s = profile.breakpoints
    moments = (s[1:] ** (q + 1) - s[:-1] ** (q + 1)) / (q + 1)
    return float(np.sum(np.abs(profile.slopes()) ** p * c**p * moments))


def polya_szego_gap(u: FemField, p: float = 2.0, n_bins: int = DEFAULT_BINS) -> float:
    """``∫_Ω |∇u|^p − ∫_S |∇u*|^p``; nonnegative in isoperimetric cones."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    profile = decreasing_rearrangement(u, n_bins)
    return gradient_lp_integral(u, p) - symmetrized_gradient_integral(profile, u.mesh.cone, p)
