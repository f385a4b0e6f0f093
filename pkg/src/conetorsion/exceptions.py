"""Exception hierarchy for conetorsion."""


class ConeTorsionError(Exception):
    """Base class for all errors raised by this package."""


class InvalidProfileError(ConeTorsionError, ValueError):
    """A radial profile is not strictly positive or too coarse."""


class MeshFailure(ConeTorsionError):
    """Mesh generation failed or the profile degenerated."""


class NoDirichletBoundary(ConeTorsionError):
    """The mesh has no GAMMA facets, so the torsion problem is ill-posed."""


class NonConvergence(ConeTorsionError):
    """An iterative solver hit its iteration cap."""


class VolumeMismatch(ConeTorsionError, ValueError):
    """Target sector and source domain do not have the same measure."""


class StepFailure(ConeTorsionError):
    """A shape-flow line search could not decrease the functional."""


class NonConstantCurvature(ConeTorsionError, ValueError):
    """Sampled mean curvature is not constant within tolerance."""


class NotSpherical(ConeTorsionError, ValueError):
    """Samples do not lie on a circle/sphere within tolerance."""

