"""Exception hierarchy shared by every stage of the odometry pipeline."""


class OdometryError(Exception):
    """Base class for all errors raised by pocodom."""


class FrameMismatch(OdometryError):
    pass


class InsufficientCandidates(OdometryError):
    """Too few points inside the ground-candidate height band."""


class DegenerateSample(OdometryError):
    """Every RANSAC sample was collinear."""


class DegenerateNormal(OdometryError):
    """Ground normal points (almost) straight down; the ground fit failed."""


class EmptyResult(OdometryError):
    pass


class EmptyGrid(OdometryError):
    """No point fell inside the occupancy grid footprint."""


class NoCorrespondences(OdometryError):
    pass


class SingularSystem(OdometryError):
    """The point-to-plane normal equations are rank deficient."""


class MalformedFile(OdometryError):
    pass


class MalformedPose(OdometryError):
    pass


class TooShort(OdometryError):
    """Trajectory is shorter than the smallest evaluation segment."""


class ConfigError(OdometryError):
    pass
