"""Exception types raised across the package."""


class GraspError(Exception):
    """Base class for all package errors."""


class ParseError(GraspError):
    pass


class DegenerateFace(GraspError):
    pass


class EmptyMesh(GraspError):
    pass


class TooFewSamples(GraspError):
    pass


class SingularKernel(GraspError):
    """Cholesky failed even after jitter escalation."""


class VanishingGradient(GraspError):
    pass


class OutOfChart(GraspError):
    pass


class NotARotation(GraspError):
    pass


class CenterMismatch(GraspError):
    pass


class JointLimit(GraspError):
    pass


class InitialCollision(GraspError):
    pass


class DegenerateNormal(GraspError):
    pass


class NoFeasiblePose(GraspError):
    pass


class AdaptionFailed(GraspError):
    pass


class ObjectMismatch(GraspError):
    pass


class ConfigError(GraspError):
    pass


class HullDegenerate(GraspError):
    """Points do not span the full dimension."""


class NoConvergence(GraspError):
    pass
