"""Open machines: adjustable-rate clocks bound to worldlines, and signal logs."""

import csv
import json
import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from functools import lru_cache
from pathlib import Path

import numpy as np
from pydantic import Field, field_validator, model_validator
from scipy import optimize

from .adjustment import ClockAdjustment, compose
from .enums import DelayMethod, EventKind, Interpolation
from .exceptions import (
    ConvergenceError,
    InvalidParameterError,
    MissingReferenceError,
    OrderViolationError,
    OutsideValidityDomainError,
)
from .models import ClockReading, EventRecord, LogsyncBaseModel, SolverSettings
from .spacetime import (
    DEFAULT_SETTINGS,
    Metric,
    Worldline,
    coordinate_light_delay,
    light_arrival,
    rate_segments,
)

logger = logging.getLogger(__name__)


# =============================================================================
# Domain types
# =============================================================================


class RateSchedule(LogsyncBaseModel):
    """Proper cycle frequency as a function of coordinate time.

    Held constant before the first knot and after the last one.
    """

    knots: tuple[tuple[float, float], ...] = Field(
        ((0.0, 1.0),), min_length=1, description="Knots (t, frequency [cycles/s])"
    )
    interpolation: Interpolation = Field(
        Interpolation.STEP, description="Shape between knots"
    )

    @field_validator("knots")
    @classmethod
    def validate_knots(
        cls, v: tuple[tuple[float, float], ...]
    ) -> tuple[tuple[float, float], ...]:
        times = [t for t, _ in v]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("rate knots must be strictly increasing in t")
        if any(not (math.isfinite(f) and f > 0) for _, f in v):
            raise ValueError("frequencies must be finite and positive")
        return v

    @classmethod
    def constant(cls, frequency: float) -> "RateSchedule":
        return cls(knots=((0.0, frequency),))

    def frequency_at(self, t: float | np.ndarray) -> float | np.ndarray:
        arr = np.asarray(self.knots)
        times, freqs = arr[:, 0], arr[:, 1]
        if self.interpolation is Interpolation.LINEAR:
            return np.interp(t, times, freqs)
        index = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(freqs) - 1)
        return freqs[index]

    def scaled(self, factor: float) -> "RateSchedule":
        return self.model_copy(
            update={"knots": tuple((t, f * factor) for t, f in self.knots)}
        )


class OpenMachine(LogsyncBaseModel):
    """A clock on a worldline; its reading is f(zeta(t)) for its adjustment f."""

    id: str = Field(..., min_length=1, description="Machine identifier")
    worldline: Worldline = Field(default_factory=Worldline, description="Worldline")
    rate: RateSchedule = Field(default_factory=RateSchedule, description="Rate schedule")
    proper_period: float | None = Field(
        None, gt=0, description="Anchored proper period p_tau [s]"
    )
    epoch_time: float = Field(0.0, description="Coordinate time of the epoch reading")
    epoch_reading: float = Field(0.0, description="Clock value at the epoch")
    window: tuple[float, float] | None = Field(
        None, description="Coordinate-time window where the clock is defined"
    )
    adjustment: ClockAdjustment = Field(
        default_factory=ClockAdjustment, description="Adjustment on top of the clock"
    )

    @model_validator(mode="after")
    def validate_window(self) -> "OpenMachine":
        if self.window is not None and not self.window[0] < self.window[1]:
            raise ValueError("window must be an increasing interval")
        return self


class Transmission(LogsyncBaseModel):
    """Scheduled transmission, optionally echoed back and forth immediately."""

    sender: str = Field(..., description="Transmitting machine")
    reading: float = Field(..., allow_inf_nan=False, description="Sender clock reading")
    receiver: str = Field(..., description="Receiving machine")
    bounces: int = Field(0, ge=0, description="Immediate echoes after reception")


# =============================================================================
# Clock function
# =============================================================================


class ClockFunction:
    """zeta(t) = epoch + integral of frequency * dtau/dt, exact on merged breakpoints."""

    def __init__(self, machine: OpenMachine, metric: Metric):
        self.rate = machine.rate
        breaks, self.proper_rates = rate_segments(metric, machine.worldline)
        self.breaks = breaks
        rate_times = np.array([t for t, _ in machine.rate.knots])
        self.edges = np.unique(
            np.concatenate((breaks, rate_times, [machine.epoch_time]))
        )
        self.cumulative = np.zeros(len(self.edges))
        for i in range(1, len(self.edges)):
            self.cumulative[i] = self.cumulative[i - 1] + self._piece(
                self.edges[i - 1], self.edges[i]
            )
        self.offset = machine.epoch_reading - self._raw(machine.epoch_time)

    def _piece(self, start: float, end: float) -> float:
        mid = 0.5 * (start + end)
        w = self.proper_rates[np.searchsorted(self.breaks, mid, side="right")]
        return float(w * self.rate.frequency_at(mid) * (end - start))

    def _raw(self, t: float) -> float:
        i = max(int(np.searchsorted(self.edges, t, side="right")) - 1, 0)
        return float(self.cumulative[i]) + self._piece(float(self.edges[i]), t)

    def __call__(self, t: float) -> float:
        return self._raw(t) + self.offset

    def inverse(self, zeta: float) -> float:
        target = zeta - self.offset
        i = int(np.searchsorted(self.cumulative, target, side="right")) - 1
        if i < 0 or i >= len(self.edges) - 1:
            anchor = self.edges[0] if i < 0 else self.edges[-1]
            beyond = anchor - 1.0 if i < 0 else anchor + 1.0
            slope = abs(self._piece(anchor, beyond))
            return float(anchor + (target - self.cumulative[max(i, 0)]) / slope)
        lo, hi = float(self.edges[i]), float(self.edges[i + 1])
        if self.rate.interpolation is Interpolation.STEP:
            slope = self._piece(lo, hi) / (hi - lo)
            return lo + (target - float(self.cumulative[i])) / slope
        return float(
            optimize.brentq(lambda t: self._raw(t) - target, lo, hi, xtol=1e-14)
        )


@lru_cache(maxsize=1024)
def clock_function(machine: OpenMachine, metric: Metric) -> ClockFunction:
    return ClockFunction(machine, metric)


# =============================================================================
# Operations
# =============================================================================


def clock_value(machine: OpenMachine, t: float, metric: Metric) -> float:
    """Real-valued adjusted reading at coordinate time t."""
    if machine.window is not None and not machine.window[0] <= t <= machine.window[1]:
        raise OutsideValidityDomainError(
            f"Time {t} outside the window of {machine.id}",
            "E004",
            context={"machine": machine.id, "t": t, "window": list(machine.window)},
        )
    zeta = clock_function(machine, metric)(t)
    return float(machine.adjustment(zeta))


def reading_at(machine: OpenMachine, t: float, metric: Metric) -> ClockReading:
    """Clock reading m.phi of the machine at coordinate time t."""
    return ClockReading.from_value(clock_value(machine, t, metric))


def coordinate_time_of(
    machine: OpenMachine,
    reading: ClockReading | float,
    metric: Metric,
) -> float:
    """Coordinate time at which the machine shows the given reading."""
    value = reading.value if isinstance(reading, ClockReading) else float(reading)
    zeta = float(machine.adjustment.inverse(value))
    t = clock_function(machine, metric).inverse(zeta)
    if machine.window is not None and not machine.window[0] <= t <= machine.window[1]:
        raise OutsideValidityDomainError(
            f"Reading {value} outside the range of {machine.id}",
            "E004",
            context={"machine": machine.id, "reading": value, "t": t},
        )
    return t


def adjusted_machine(machine: OpenMachine, f: ClockAdjustment) -> OpenMachine:
    """The machine re-clocked by f on top of its current adjustment."""
    return machine.model_copy(update={"adjustment": compose(f, machine.adjustment)})


DelayCache = dict[tuple[tuple[float, ...], tuple[float, ...]], float]


def arrival_time(
    src: OpenMachine,
    dst: OpenMachine,
    t: float,
    metric: Metric,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
    delays: DelayCache | None = None,
) -> float:
    """Coordinate time at which a signal sent by src at t reaches dst."""
    if src.worldline.is_static and dst.worldline.is_static:
        a, b = src.worldline.position, dst.worldline.position
        key = (a, b) if a <= b else (b, a)
        if delays is None:
            return t + coordinate_light_delay(metric, a, b, method, settings)
        if key not in delays:
            delays[key] = coordinate_light_delay(metric, a, b, method, settings)
        return t + delays[key]
    source = src.worldline.position_at(t)
    return light_arrival(metric, source, t, dst.worldline, method, settings)


def simulate_signals(
    machines: Iterable[OpenMachine],
    metric: Metric,
    schedule: Sequence[Transmission],
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> list[EventRecord]:
    """Propagate every scheduled transmission and return the ordered event log."""
    settings = settings or DEFAULT_SETTINGS
    by_id: dict[str, OpenMachine] = {}
    for machine in machines:
        if machine.id in by_id:
            raise InvalidParameterError(
                f"Duplicate machine id {machine.id}", "E001", context={"id": machine.id}
            )
        machine.worldline.check_timelike(metric)
        by_id[machine.id] = machine

    delays: DelayCache = {}
    records: list[EventRecord] = []
    flights: dict[tuple[str, str], list[tuple[float, float]]] = defaultdict(list)
    signal = 0
    for entry in schedule:
        for name in (entry.sender, entry.receiver):
            if name not in by_id:
                raise MissingReferenceError(
                    f"Schedule references unknown machine {name}",
                    "E003",
                    context={"machine": name},
                )
        if entry.sender == entry.receiver:
            raise InvalidParameterError(
                "A machine cannot signal itself", "E001", context={"machine": entry.sender}
            )
        src, dst = by_id[entry.sender], by_id[entry.receiver]
        value = entry.reading
        t = coordinate_time_of(src, value, metric)
        parent: int | None = None
        for _ in range(entry.bounces + 1):
            try:
                t_arrival = arrival_time(src, dst, t, metric, method, settings, delays)
            except ConvergenceError as e:
                raise ConvergenceError(
                    f"Propagation {src.id} -> {dst.id} failed: {e.message}",
                    e.error_code,
                    context={**e.context, "sender": src.id, "receiver": dst.id},
                ) from e
            arrived = clock_value(dst, t_arrival, metric)
            records.append(
                EventRecord(
                    machine=src.id,
                    reading=ClockReading.from_value(value),
                    kind=EventKind.TRANSMIT,
                    counterpart=dst.id,
                    t=t,
                    signal=signal,
                    reply_to=parent,
                )
            )
            records.append(
                EventRecord(
                    machine=dst.id,
                    reading=ClockReading.from_value(arrived),
                    kind=EventKind.RECEIVE,
                    counterpart=src.id,
                    t=t_arrival,
                    signal=signal,
                )
            )
            flights[(src.id, dst.id)].append((t, t_arrival))
            parent, signal = signal, signal + 1
            src, dst, t, value = dst, src, t_arrival, arrived

    _check_order(flights)
    records.sort(key=_log_order)
    logger.info(f"Simulated {signal} signals among {len(by_id)} machines")
    return records


def logical_events(
    log: Sequence[EventRecord],
) -> dict[str, tuple[tuple[str, float, int], ...]]:
    """Arrivals at each receiver in coordinate order.

    Each entry is (sender, sender reading, receiver cycle count). The interleaving across
    senders and the cycle counts are what a machine's logic sees; phases and coordinate
    times are left out.
    """
    sent = {r.signal: r for r in log if r.kind is EventKind.TRANSMIT}
    events: dict[str, list[tuple[str, float, int]]] = defaultdict(list)
    for record in sorted(
        (r for r in log if r.kind is EventKind.RECEIVE), key=lambda r: (r.t, r.signal)
    ):
        origin = sent[record.signal]
        events[record.machine].append(
            (origin.machine, origin.reading.value, record.reading.m)
        )
    return {receiver: tuple(values) for receiver, values in sorted(events.items())}


def adjusted_log(
    log: Sequence[EventRecord], machine_id: str, f: ClockAdjustment
) -> list[EventRecord]:
    """Map one machine's readings in a log through an adjustment."""
    return [
        r.model_copy(update={"reading": ClockReading.from_value(float(f(r.reading.value)))})
        if r.machine == machine_id
        else r
        for r in log
    ]


def write_event_log(records: Iterable[EventRecord], path: Path) -> None:
    """Write records as JSON Lines."""
    with open(path, "w") as f:
        for record in records:
            f.write(record.model_dump_json() + "\n")


def read_event_log(path: Path) -> list[EventRecord]:
    with open(path) as f:
        return [EventRecord.model_validate(json.loads(line)) for line in f if line.strip()]


def write_event_csv(records: Iterable[EventRecord], path: Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["machine", "kind", "m", "phi", "counterpart", "t", "signal", "reply_to"]
        )
        for r in records:
            writer.writerow(
                [
                    r.machine,
                    r.kind.value,
                    r.reading.m,
                    repr(r.reading.phi),
                    r.counterpart,
                    repr(r.t),
                    r.signal,
                    "" if r.reply_to is None else r.reply_to,
                ]
            )


# =============================================================================
# Internals
# =============================================================================


def _log_order(record: EventRecord) -> tuple[float, int, int]:
    return (record.t, record.signal, 0 if record.kind is EventKind.RECEIVE else 1)


def _check_order(flights: dict[tuple[str, str], list[tuple[float, float]]]) -> None:
    """What is transmitted later must arrive later."""
    for (src, dst), pairs in flights.items():
        pairs = sorted(pairs)
        for (t0, a0), (t1, a1) in zip(pairs, pairs[1:]):
            if t1 > t0 and a1 <= a0:
                raise OrderViolationError(
                    f"Channel {src} -> {dst} does not preserve order",
                    "E007",
                    context={"sender": src, "receiver": dst, "emissions": [t0, t1]},
                )
