"""Exception types raised by the solver stack."""

from __future__ import annotations


class CPRError(Exception):
    """Base class for all errors raised by :mod:`cpr_statics`.

    ``rod`` and ``element`` are filled in by the assembly when an element-level
    failure is propagated, so callers can tell which element broke.
    """

    def __init__(self, message: str = "", *, rod: int | None = None, element: int | None = None):
        super().__init__(message)
        self.rod = rod
        self.element = element

    def __str__(self) -> str:
        msg = super().__str__()
        if self.rod is None:
            return msg
        where = f"rod {self.rod}" if self.element is None else f"rod {self.rod}, element {self.element}"
        return f"{where}: {msg}"


class RotationNearPi(CPRError, ValueError):
    """Rotation angle too close to pi for the principal logarithm."""


class OutOfElement(CPRError, ValueError):
    """Arc-length coordinate outside ``[0, h]``."""


class SingularAMatrix(CPRError, ValueError):
    """The Magnus matrix ``h I - h^3/12 ad(beta)`` is numerically singular."""


class ElementRotationTooLarge(CPRError, ValueError):
    """Relative rotation across one element reached pi/2; refine the mesh."""


class PulleyCoincident(CPRError, ValueError):
    """Pulley anchor coincides with the loaded node."""


class SingularTangent(CPRError, ArithmeticError):
    """Tangent stiffness could not be factorized even after damping."""


class NoConvergence(CPRError, RuntimeError):
    """Newton iteration stopped without meeting the residual tolerance."""

    def __init__(self, message: str, report=None, **kwargs):
        super().__init__(message, **kwargs)
        self.report = report


class DescriptionError(CPRError, ValueError):
    """Invalid robot, load or protocol description."""


class SweepAborted(NoConvergence):
    """A sweep sample failed; carries the partial record and the failing sample index."""

    def __init__(self, sample_index: int, record, cause: NoConvergence):
        super().__init__(f"sample {sample_index}: {cause}", report=cause.report)
        self.sample_index = sample_index
        self.record = record
