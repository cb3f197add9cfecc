EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_COMPUTE = 3
EXIT_IO = 4


class NmtProbeError(Exception):
    """
    Base class for every error raised by nmtprobe.

    Note:
        Subclasses carry the process exit code the command line maps them to.
    """

    exit_code = EXIT_COMPUTE


class ValidationError(NmtProbeError):
    exit_code = EXIT_VALIDATION


class ShapeError(NmtProbeError):
    pass


class LabelError(NmtProbeError):
    pass


class StateError(NmtProbeError):
    pass


class NumericsError(NmtProbeError):
    pass


class GradCheckError(NmtProbeError):
    pass


class TrainingError(NmtProbeError):
    pass


class AlignmentError(NmtProbeError):
    exit_code = EXIT_IO


class DataFormatError(NmtProbeError):
    exit_code = EXIT_IO


class InputError(NmtProbeError):
    exit_code = EXIT_IO


class CompatibilityError(NmtProbeError):
    exit_code = EXIT_IO


class ArtifactIOError(NmtProbeError):
    exit_code = EXIT_IO
