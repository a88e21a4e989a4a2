"""Exception types shared across the package."""


class MotionCopyError(Exception):
    """Base class for all errors raised by motioncopy."""


class DataError(MotionCopyError, ValueError):
    """Input data failed to parse or validate.

    Carries optional location fields so callers can report exactly where a
    file went wrong.
    """

    def __init__(self, message, *, path=None, frame_index=None, joint_index=None,
                 offset=None, element_index=None):
        super().__init__(message)
        self.path = path
        self.frame_index = frame_index
        self.joint_index = joint_index
        self.offset = offset
        self.element_index = element_index

    def __str__(self):
        msg = super().__str__()
        if self.path is not None:
            return f"{self.path}: {msg}"
        return msg


class ConfigError(MotionCopyError, ValueError):
    """Invalid configuration or hyperparameters."""


class NumericalDomainError(MotionCopyError, ArithmeticError):
    """A computation left its valid numerical domain (underflow, bad kernel)."""


class FaceNotExtractable(MotionCopyError, ValueError):
    """A facial keypoint needed for the face vector field is undetected."""

    def __init__(self, joint_name, joint_index):
        super().__init__(f"face not extractable: {joint_name} (joint {joint_index}) undetected")
        self.joint_name = joint_name
        self.joint_index = joint_index
