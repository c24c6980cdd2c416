"""Pairs of clock adjustments that leave a two-machine channel pattern invariant."""

import logging
from collections.abc import Sequence

from pydantic import Field

from .adjustment import AdjustmentPair, ClockAdjustment
from .channel import DEFAULT_TOL_CYCLES, Channel, channel_from_log, echo_count
from .enums import AdjustmentKind, DelayMethod
from .exceptions import InvalidParameterError
from .machine import (
    OpenMachine,
    Transmission,
    adjusted_machine,
    arrival_time,
    clock_value,
    coordinate_time_of,
    simulate_signals,
)
from .models import EventRecord, LogsyncBaseModel, SolverSettings
from .spacetime import Metric

logger = logging.getLogger(__name__)


class TwoWayScenario(LogsyncBaseModel):
    """Two machines, a metric and a schedule whose channels are compared."""

    a: OpenMachine = Field(..., description="Machine A")
    b: OpenMachine = Field(..., description="Machine B")
    metric: Metric = Field(default_factory=Metric, description="Static metric")
    schedule: tuple[Transmission, ...] = Field(..., description="Transmissions")
    method: DelayMethod = Field(DelayMethod.SHOOTING, description="Light-delay method")

    def simulate(self, settings: SolverSettings | None = None) -> list[EventRecord]:
        return simulate_signals(
            (self.a, self.b), self.metric, self.schedule, self.method, settings
        )

    def channels(self, settings: SolverSettings | None = None) -> tuple[Channel, Channel]:
        log = self.simulate(settings)
        return (
            channel_from_log(log, self.a.id, self.b.id),
            channel_from_log(log, self.b.id, self.a.id),
        )

    def adjusted(self, pair: AdjustmentPair) -> "TwoWayScenario":
        """Re-clock both machines; scheduled readings are then retriggered."""
        return self.model_copy(
            update={
                "a": adjusted_machine(self.a, pair.f_a),
                "b": adjusted_machine(self.b, pair.f_b),
            }
        )

    def propagate(
        self, src: OpenMachine, dst: OpenMachine, reading: float
    ) -> float:
        """Reading of dst when a signal sent at src's reading arrives."""
        t = coordinate_time_of(src, reading, self.metric)
        t_arrival = arrival_time(src, dst, t, self.metric, self.method)
        return clock_value(dst, t_arrival, self.metric)

    def echo_reading(self, reading: float) -> float:
        """A reading at which B's immediate echo of a transmission returns."""
        at_b = self.propagate(self.a, self.b, reading)
        return self.propagate(self.b, self.a, at_b)


def is_invariant_pair(
    pair: AdjustmentPair,
    scenario: TwoWayScenario,
    tol_cycles: float = DEFAULT_TOL_CYCLES,
    settings: SolverSettings | None = None,
) -> bool:
    """True iff re-simulating with retriggered schedules reproduces both channels."""
    before = scenario.channels(settings)
    after = scenario.adjusted(pair).channels(settings)
    invariant = all(x.matches(y, tol_cycles) for x, y in zip(before, after))
    logger.debug(f"Pair invariance on {scenario.a.id}/{scenario.b.id}: {invariant}")
    return invariant


def construct_invariant_partner(
    scenario: TwoWayScenario,
    choices: Sequence[float],
    kind: AdjustmentKind = AdjustmentKind.PCHIP,
) -> AdjustmentPair:
    """Build (f_A, f_B) from the values of f_A^-1 at 0..N-1 by sliding lacings.

    Each choice seeds a lacing: light from A at reading c reaches B and is echoed
    back, and f_B is pinned on B's touch events so every lacing maps to a lacing.
    """
    log = scenario.simulate()
    forward = channel_from_log(log, scenario.a.id, scenario.b.id)
    echo = echo_count(log, scenario.a.id, scenario.b.id)
    if echo is None or not forward.pairs:
        raise InvalidParameterError(
            "Scenario holds no complete echo to slide", "E001"
        )
    n = round(echo.value)
    a0, b0 = forward.pairs[0]
    offset = b0.value - a0.value
    if abs(echo.value - n) > DEFAULT_TOL_CYCLES or abs(offset - round(offset)) > DEFAULT_TOL_CYCLES:
        raise InvalidParameterError(
            "Scenario channels must have null phases",
            "E001",
            context={"echo_count": echo.value, "offset": offset},
        )
    s = round(offset)
    if len(choices) != n:
        raise InvalidParameterError(
            f"Expected {n} choices, one per interleaved lacing, got {len(choices)}",
            "E001",
            context={"echo_count": n},
        )
    if any(c1 <= c0 for c0, c1 in zip(choices, choices[1:])):
        raise InvalidParameterError(
            "Choices must be strictly increasing",
            "E001",
            context={"choices": list(choices)},
        )
    first_echo = scenario.echo_reading(choices[0])
    if choices[-1] >= first_echo:
        raise InvalidParameterError(
            "Last choice must precede the echo of the first",
            "E001",
            context={"last_choice": choices[-1], "first_echo": first_echo},
        )
    if any(entry.reading < 0 for entry in scenario.schedule):
        raise InvalidParameterError(
            "Lacing lattice starts at reading 0; schedule readings must be non-negative",
            "E001",
        )

    top = max(entry.reading for entry in scenario.schedule)
    rounds = int(top) // n + 3
    knots_a: list[tuple[float, float]] = []
    knots_b: list[tuple[float, float]] = []
    current = list(choices)
    for k in range(rounds):
        following = []
        for j, c in enumerate(current):
            knots_a.append((c, float(j + k * n)))
            at_b = scenario.propagate(scenario.a, scenario.b, c)
            knots_b.append((at_b, float(j + s + k * n)))
            following.append(scenario.propagate(scenario.b, scenario.a, at_b))
        current = following

    pair = AdjustmentPair(
        f_a=ClockAdjustment.from_knots(knots_a, kind),
        f_b=ClockAdjustment.from_knots(knots_b, kind),
    )
    logger.info(
        f"Constructed invariant pair on {scenario.a.id}/{scenario.b.id} "
        f"with {len(knots_a)} lattice knots per machine"
    )
    return pair
