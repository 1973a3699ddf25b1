"""Domain errors. The CLI prints the class name and exits with status 1."""


class AlexandrovError(ValueError):
    """Base class for every domain error raised by the package."""


# mesh_core
class NonManifold(AlexandrovError):
    pass


class OrientationClash(AlexandrovError):
    pass


class Disconnected(AlexandrovError):
    pass


class TriangleInequalityViolated(AlexandrovError):
    def __init__(self, face, lengths=None):
        self.face = face
        msg = f"face {face} violates the strict triangle inequality"
        if lengths is not None:
            msg += f" (lengths {tuple(float(x) for x in lengths)})"
        super().__init__(msg)


class LengthMismatch(AlexandrovError):
    def __init__(self, edge, a=None, b=None):
        self.edge = edge
        msg = f"glued half-edges {edge} carry different lengths"
        if a is not None:
            msg += f" ({a!r} != {b!r})"
        super().__init__(msg)


# curvature
class NonPositiveLength(AlexandrovError):
    pass


class QuadratureUnderResolved(AlexandrovError):
    pass


class MissingGeometry(AlexandrovError):
    """A measure part has no point/curve/cell geometry to evaluate f on."""


# geodesics
class DisconnectedPoint(AlexandrovError):
    pass


class EmptySample(AlexandrovError):
    pass


class RadiusTooLarge(AlexandrovError):
    pass


# conformal
class BadParameter(AlexandrovError):
    pass


class PointOutsideDomain(AlexandrovError):
    pass


class SingularEndpoint(AlexandrovError):
    pass


class MaskTooLarge(AlexandrovError):
    pass


# potential
class CoincidentPoints(AlexandrovError):
    pass


class TruncationNotConverged(AlexandrovError):
    pass


class NonZeroTotalMass(AlexandrovError):
    pass


class CuspAtom(AlexandrovError):
    pass


class GaussBonnetViolation(AlexandrovError):
    pass


class ResolutionTooLow(AlexandrovError):
    pass


# convergence
class EpsilonTooLarge(AlexandrovError):
    pass


class EmptyDictionary(AlexandrovError):
    pass
