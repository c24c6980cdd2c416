from enum import Enum, unique


@unique
class MetricKind(Enum):
    """Static metric models supported by the light-time machinery, from flat
    Minkowski space to the first-order Fermi normal form around a freely
    falling origin in a Schwarzschild field."""

    FLAT = "flat"
    FERMI_NORMAL_STATIC = "fermi_normal_static"


@unique
class DelayMethod(Enum):
    """How coordinate light delays are computed in a curved static metric."""

    SHOOTING = "shooting"
    FERMAT = "fermat"


@unique
class EventKind(Enum):
    """Kinds of occurrences an open machine writes to its log."""

    TRANSMIT = "transmit"
    RECEIVE = "receive"


@unique
class Interpolation(Enum):
    """Shape of a rate schedule between its knots."""

    STEP = "step"
    LINEAR = "linear"


@unique
class AdjustmentKind(Enum):
    """Interpolant used by a knotted clock adjustment."""

    LINEAR = "linear"
    PCHIP = "pchip"


@unique
class PhaseModel(Enum):
    """Forward models linking ring phases to the curvature parameter."""

    CLOSED_FORM = "closed_form"
    FIRST_ORDER = "first_order"


@unique
class SteeringAction(Enum):
    """Advice produced when phase residuals are checked against an aiming
    point: stay the course, steer harder, or revise the metric hypothesis."""

    IN_TOLERANCE = "in_tolerance"
    RE_STEER = "re_steer"
    REVISE_METRIC = "revise_metric"


@unique
class Command(Enum):
    """Commands exposed by the command-line shell."""

    SIMULATE = "simulate"
    SOLVE_TETRA = "solve-tetra"
    SOLVE_RING5 = "solve-ring5"
    MINIMAX = "minimax"
    FROZEN = "frozen"
    BITRATE = "bitrate"
    STEER = "steer"
    ESTIMATE_MU = "estimate-mu"
    EXPORT_GRAPH = "export-graph"


@unique
class ArtifactFormat(Enum):
    """Artifact families a command can write."""

    JSON = "json"
    CSV = "csv"
    DOT = "dot"


@unique
class ErrorCode(Enum):
    """Standardized error codes used across logsync so that diagnostic reports
    written by the shell can be mapped back onto exception classes."""

    # Validation errors (E001-E003)
    INVALID_PARAMETER = "E001"
    PARAMETER_OUT_OF_RANGE = "E002"
    MISSING_REFERENCE = "E003"

    # Domain errors (E004-E005)
    OUTSIDE_VALIDITY_DOMAIN = "E004"
    NOT_RADAR_LINKABLE = "E005"

    # Numerical errors (E006-E007)
    NO_CONVERGENCE = "E006"
    ORDER_VIOLATION = "E007"

    # Scenario errors (E008)
    INVALID_SCENARIO = "E008"
