"""Argument checks shared by the estimators and the command line."""

from __future__ import annotations

import math
import numbers

import numpy as np

from .geometry import ConeSpec, PolarGraph


def check_positive(name: str, value, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_int(name: str, value, minimum: int = 0, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_choice(name: str, value, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def check_cone(cone) -> ConeSpec:
    """Accept a :class:`ConeSpec`, a ``{"kind", "aperture"}`` mapping or a pair."""
    if isinstance(cone, ConeSpec):
        return cone
    if isinstance(cone, dict):
        for key in ("kind", "aperture"):
            if key not in cone:
                raise KeyError(key)
        return ConeSpec(cone["kind"], cone["aperture"])
    if isinstance(cone, (tuple, list)) and len(cone) == 2:
        return ConeSpec(*cone)
    raise TypeError(f"cannot interpret {cone!r} as a cone")


def check_graph(X, cone=None) -> PolarGraph:
    """Coerce ``X`` to a :class:`PolarGraph`.

    ``X`` may already be one, a serialized mapping, or a 1-d array of radii
    (which then needs ``cone``).
    """
    if isinstance(X, PolarGraph):
        return X
    if isinstance(X, dict):
        return PolarGraph.from_dict(X)
    rho = np.asarray(X, dtype=float)
    if rho.ndim == 2 and 1 in rho.shape:
        rho = rho.ravel()
    if rho.ndim != 1:
        raise ValueError(f"expected a 1-d radial profile, got shape {rho.shape}")
    if cone is None:
        raise ValueError("a bare radial profile needs a cone")
    return PolarGraph(check_cone(cone), rho)


def check_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and pts.size == 2:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
    return pts
