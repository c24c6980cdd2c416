"""logsync - logical synchronization of clock networks in static spacetimes."""

from .adjustment import AdjustmentPair, ClockAdjustment, compose, invert, retrigger
from .arrange import Arrangement, RingConfig, is_frozen, solve_ring5, solve_tetrahedron
from .channel import Channel, channel_from_log, detect_repeating, echo_count
from .enums import DelayMethod, ErrorCode, EventKind, MetricKind
from .exceptions import LogsyncError
from .invariance import TwoWayScenario, construct_invariant_partner, is_invariant_pair
from .machine import OpenMachine, RateSchedule, Transmission, simulate_signals
from .models import ClockReading, EventRecord, PhysicalConstants, SolverSettings
from .scenario import Scenario, validate_scenario
from .spacetime import Metric, Worldline, coordinate_light_delay, proper_rate
from .steer import AimingPoint, Controller, DriftModel, run_closed_loop

__version__ = "0.1.0"
__all__ = [
    # Spacetime
    "Metric",
    "Worldline",
    "coordinate_light_delay",
    "proper_rate",
    # Machines
    "OpenMachine",
    "RateSchedule",
    "Transmission",
    "simulate_signals",
    # Channels
    "Channel",
    "channel_from_log",
    "detect_repeating",
    "echo_count",
    # Adjustments
    "AdjustmentPair",
    "ClockAdjustment",
    "TwoWayScenario",
    "compose",
    "construct_invariant_partner",
    "invert",
    "is_invariant_pair",
    "retrigger",
    # Arrangements
    "Arrangement",
    "RingConfig",
    "is_frozen",
    "solve_ring5",
    "solve_tetrahedron",
    # Steering
    "AimingPoint",
    "Controller",
    "DriftModel",
    "run_closed_loop",
    # Scenarios
    "Scenario",
    "validate_scenario",
    # Enums
    "DelayMethod",
    "ErrorCode",
    "EventKind",
    "MetricKind",
    # Models
    "ClockReading",
    "EventRecord",
    "PhysicalConstants",
    "SolverSettings",
    # Exception
    "LogsyncError",
]
