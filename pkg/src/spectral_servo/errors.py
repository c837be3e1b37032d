"""Exception types raised across the package."""


class SpectralServoError(Exception):
    """Base class; ``code`` is the short machine-readable reason."""

    code = "error"


class CloudParseError(SpectralServoError):
    code = "parse-error"

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class MissingNormalsError(SpectralServoError):
    code = "missing-normals"


class InsufficientPointsError(SpectralServoError):
    code = "insufficient-points"


class DegenerateCovarianceError(SpectralServoError):
    code = "degenerate-covariance"


class EmptyCloudError(SpectralServoError):
    code = "empty-cloud"


class PointOutsideBoundsError(SpectralServoError):
    code = "point-outside-bounds"


class DimensionMismatchError(SpectralServoError):
    code = "dim-mismatch"


class FlatVolumeError(SpectralServoError):
    code = "flat-volume"


class BandwidthMismatchError(SpectralServoError):
    code = "bandwidth-mismatch"


class ImaginaryResidueError(SpectralServoError):
    code = "imaginary-residue-exceeded"


class NoConvergenceError(SpectralServoError):
    """Raised on request when an iteration budget runs out; carries the result."""

    code = "no-convergence"

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class KinematicLimitError(SpectralServoError):
    code = "kinematic-limit"

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class EmptyViewError(SpectralServoError):
    code = "empty-view"


class UnsupportedShapeError(SpectralServoError):
    code = "unsupported-shape"


class ConfigError(SpectralServoError, ValueError):
    code = "bad-config"


class NearSingularWarning(UserWarning):
    """The manipulator Jacobian is close to singular."""
