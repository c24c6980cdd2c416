"""Scenario documents: schema, unit normalization and cross-reference checks."""

import json
import logging
import re
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import BeforeValidator, Field, ValidationError, model_validator

from .arrange import AnchoredPeriod, Arrangement, ChannelSpec, RingConfig
from .enums import DelayMethod, Interpolation, MetricKind, PhaseModel
from .exceptions import ScenarioValidationError
from .machine import OpenMachine, RateSchedule, Transmission
from .models import LogsyncBaseModel, PhysicalConstants, SolverSettings
from .spacetime import Metric, Worldline, mu_from
from .steer import Controller, DriftModel, RingObservation

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

UNITS: dict[str, dict[str, float]] = {
    "length": {"m": 1.0, "km": 1e3},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "mass": {"kg": 1.0},
    "curvature": {"1/m^2": 1.0},
    "gm": {"m^3/s^2": 1.0},
    "speed": {"m/s": 1.0},
    "gravitation": {"m^3/(kg s^2)": 1.0},
}

_QUANTITY = re.compile(r"^\s*(\S+)\s+(\S.*?)\s*$")


def _normalizer(dimension: str):
    table = UNITS[dimension]

    def normalize(value: Any) -> Any:
        if not isinstance(value, str):
            return value
        match = _QUANTITY.match(value)
        if match is None:
            raise ValueError(f"expected '<value> <unit>' for a {dimension}, got {value!r}")
        number, unit = match.groups()
        if unit not in table:
            raise ValueError(f"unknown {dimension} unit {unit!r}; use one of {sorted(table)}")
        return float(number) * table[unit]

    return normalize


Length = Annotated[float, BeforeValidator(_normalizer("length"))]
Time = Annotated[float, BeforeValidator(_normalizer("time"))]
Frequency = Annotated[float, BeforeValidator(_normalizer("frequency"))]
Mass = Annotated[float, BeforeValidator(_normalizer("mass"))]
Curvature = Annotated[float, BeforeValidator(_normalizer("curvature"))]
GravitationalParameter = Annotated[float, BeforeValidator(_normalizer("gm"))]
Speed = Annotated[float, BeforeValidator(_normalizer("speed"))]
Gravitation = Annotated[float, BeforeValidator(_normalizer("gravitation"))]


# =============================================================================
# Schema
# =============================================================================


class ConstantsSpec(LogsyncBaseModel):
    """Physical constants, SI by default."""

    c: Speed = Field(299_792_458.0, gt=0, description="Speed of light")
    G: Gravitation = Field(6.67430e-11, gt=0, description="Gravitational constant")

    def build(self) -> PhysicalConstants:
        return PhysicalConstants(c=self.c, G=self.G)


class MetricSpec(LogsyncBaseModel):
    """Flat, or Fermi normal given mu directly or through a mass and radius."""

    kind: MetricKind = Field(MetricKind.FLAT, description="Metric model")
    mu: Curvature | None = Field(None, ge=0, description="Curvature parameter")
    mass: Mass | None = Field(None, ge=0, description="Central mass")
    radius: Length | None = Field(None, gt=0, description="Orbital radius of the origin")

    @model_validator(mode="after")
    def validate_curvature(self) -> "MetricSpec":
        if self.kind is MetricKind.FLAT and (self.mu or self.mass):
            raise ValueError("a flat metric takes no curvature")
        if self.kind is MetricKind.FERMI_NORMAL_STATIC:
            by_mass = self.mass is not None and self.radius is not None
            if (self.mu is None) == (not by_mass):
                raise ValueError("give either mu or both mass and radius")
        return self

    def build(self, constants: PhysicalConstants) -> Metric:
        if self.kind is MetricKind.FLAT:
            return Metric.flat(constants)
        mu = self.mu if self.mu is not None else mu_from(self.mass, self.radius, constants)
        return Metric.fermi_normal(mu, constants)


class MachineSpec(LogsyncBaseModel):
    """One machine: where it sits or moves, and how its clock runs."""

    id: str = Field(..., min_length=1, description="Machine identifier")
    position: tuple[Length, Length, Length] = Field((0.0, 0.0, 0.0), description="Static position")
    path: tuple[tuple[Time, Length], ...] | None = Field(
        None, description="Moving 1+1 path as (t, x) knots"
    )
    frequency: Frequency | None = Field(None, gt=0, description="Constant proper frequency")
    rate_knots: tuple[tuple[Time, Frequency], ...] | None = Field(
        None, description="Rate schedule knots (t, frequency)"
    )
    interpolation: Interpolation = Field(Interpolation.STEP, description="Rate shape")
    proper_period: Time | None = Field(None, gt=0, description="Anchored proper period")
    epoch_time: Time = Field(0.0, description="Coordinate time of the epoch reading")
    epoch_reading: float = Field(0.0, description="Reading at the epoch")
    window: tuple[Time, Time] | None = Field(None, description="Defined time window")

    @model_validator(mode="after")
    def validate_rate(self) -> "MachineSpec":
        if self.frequency is not None and self.rate_knots is not None:
            raise ValueError("give frequency or rate_knots, not both")
        return self

    def build(self) -> OpenMachine:
        if self.rate_knots is not None:
            rate = RateSchedule(knots=self.rate_knots, interpolation=self.interpolation)
        elif self.frequency is not None:
            rate = RateSchedule.constant(self.frequency)
        elif self.proper_period is not None:
            rate = RateSchedule.constant(1.0 / self.proper_period)
        else:
            rate = RateSchedule()
        return OpenMachine(
            id=self.id,
            worldline=Worldline(position=self.position, path=self.path),
            rate=rate,
            proper_period=self.proper_period,
            epoch_time=self.epoch_time,
            epoch_reading=self.epoch_reading,
            window=self.window,
        )


class ChannelDecl(LogsyncBaseModel):
    """Declared two-way channel."""

    source: str = Field(..., description="First machine")
    target: str = Field(..., description="Second machine")
    echo_count: int = Field(..., gt=0, description="Target echo count")
    phase: float = Field(0.0, ge=-0.5, le=0.5, description="Target phase")


class TransmissionSpec(LogsyncBaseModel):
    """Scheduled transmission."""

    sender: str = Field(..., description="Transmitting machine")
    reading: float = Field(..., description="Sender reading")
    receiver: str = Field(..., description="Receiving machine")
    bounces: int = Field(0, ge=0, description="Immediate echoes")


class Parameters(LogsyncBaseModel):
    """Command-specific parameters; every command reads only what it needs."""

    n: int | None = Field(None, ge=1, description="Cycles per unit radar distance N")
    p_tau: Time | None = Field(None, gt=0, description="Anchored proper period")
    method: DelayMethod = Field(DelayMethod.SHOOTING, description="Light-delay method")
    delta: int | None = Field(None, ge=1, description="Two-machine echo count")
    readings: tuple[int, ...] | None = Field(None, description="Readings to solve at")
    eta: float = Field(0.1, gt=0, lt=1, description="Phase margin")
    phi_0: float = Field(0.0, description="Aiming-point phase")
    drift: DriftModel = Field(default_factory=DriftModel, description="Oscillator drift")
    controller: Controller = Field(default_factory=Controller, description="Steering gains")
    steps: int = Field(1000, ge=1, description="Steering steps")
    pair: tuple[str, str] | None = Field(
        None, description="Sender and receiver of the steered channel"
    )
    ms: tuple[int, ...] = Field(tuple(range(1, 11)), description="Minimax channel counts")
    symmetric: bool = Field(False, description="Restrict minimax to ring symmetry")
    rates: bool = Field(True, description="Let minimax scale periods other than B1's")
    fifth: bool = Field(False, description="Add the fifth machine to the tetrahedron")
    separation: Length | None = Field(None, gt=0, description="B separation L")
    mass: Mass | None = Field(None, ge=0, description="Central mass for the bit-rate bound")
    gm: GravitationalParameter | None = Field(None, ge=0, description="GM instead of mass")
    radius: Length | None = Field(None, gt=0, description="Radius for the bit-rate bound")
    bits_per_character: float = Field(1.0, gt=0, description="Bits per character")
    observations: tuple[RingObservation, ...] | None = Field(
        None, description="Measured ring phases"
    )
    observation_count: int = Field(100, ge=3, description="Synthetic observations")
    noise_fraction: float = Field(0.1, ge=0, description="Relative synthetic phase noise")
    phase_model: PhaseModel = Field(PhaseModel.FIRST_ORDER, description="Forward model")


class Scenario(LogsyncBaseModel):
    """Normalized scenario document."""

    schema_version: Literal[1] = Field(SCHEMA_VERSION, description="Schema version")
    name: str = Field("scenario", min_length=1, description="Scenario name")
    constants: ConstantsSpec = Field(default_factory=ConstantsSpec, description="Constants")
    metric: MetricSpec = Field(default_factory=MetricSpec, description="Static metric")
    machines: tuple[MachineSpec, ...] = Field((), description="Machines")
    channels: tuple[ChannelDecl, ...] = Field((), description="Declared channels")
    schedule: tuple[TransmissionSpec, ...] = Field((), description="Transmissions")
    parameters: Parameters = Field(default_factory=Parameters, description="Parameters")
    settings: SolverSettings = Field(default_factory=SolverSettings, description="Solver knobs")

    def build_constants(self) -> PhysicalConstants:
        return self.constants.build()

    def build_metric(self) -> Metric:
        return self.metric.build(self.build_constants())

    def build_machines(self) -> tuple[OpenMachine, ...]:
        return tuple(spec.build() for spec in self.machines)

    def build_schedule(self) -> tuple[Transmission, ...]:
        return tuple(Transmission(**t.model_dump()) for t in self.schedule)

    def build_arrangement(self) -> Arrangement:
        return Arrangement(
            machines=self.build_machines(),
            channels=tuple(ChannelSpec(**c.model_dump()) for c in self.channels),
            anchors=tuple(
                AnchoredPeriod(machine=m.id, p_tau=m.proper_period)
                for m in self.machines
                if m.proper_period is not None
            ),
            metric=self.build_metric(),
        )

    def ring_config(self) -> RingConfig:
        metric = self.build_metric()
        return RingConfig(
            n=self.parameters.n,
            p_tau=self.parameters.p_tau,
            mu=metric.mu,
            constants=metric.constants,
        )


# =============================================================================
# Validation
# =============================================================================


def validate_scenario(document: dict[str, Any]) -> Scenario:
    """Normalize a scenario document, collecting every problem before failing."""
    try:
        scenario = Scenario.model_validate(document)
    except ValidationError as e:
        errors = [
            f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}"
            for err in e.errors()
        ]
        raise ScenarioValidationError(
            f"Scenario has {len(errors)} invalid field(s)", errors
        ) from e

    errors = _cross_reference_errors(scenario)
    if errors:
        raise ScenarioValidationError(f"Scenario has {len(errors)} inconsistency(ies)", errors)
    logger.debug(f"Validated scenario {scenario.name} with {len(scenario.machines)} machines")
    return scenario


def emit_scenario(scenario: Scenario) -> dict[str, Any]:
    """Normalized document; validate_scenario(emit_scenario(s)) == s."""
    return scenario.model_dump(mode="json")


def load_scenario(path: Path) -> Scenario:
    try:
        with open(path) as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioValidationError(
            f"Scenario {path} is not valid JSON", [f"<root>: {e}"]
        ) from e
    return validate_scenario(document)


def write_scenario(scenario: Scenario, path: Path) -> None:
    with open(path, "w") as f:
        json.dump(emit_scenario(scenario), f, indent=2, sort_keys=True)
        f.write("\n")


def _cross_reference_errors(scenario: Scenario) -> list[str]:
    errors: list[str] = []
    ids = [m.id for m in scenario.machines]
    seen: set[str] = set()
    for i, machine_id in enumerate(ids):
        if machine_id in seen:
            errors.append(f"machines.{i}.id: duplicate machine id {machine_id!r}")
        seen.add(machine_id)

    for i, c in enumerate(scenario.channels):
        for field in ("source", "target"):
            if getattr(c, field) not in seen:
                errors.append(f"channels.{i}.{field}: unknown machine {getattr(c, field)!r}")
        if c.source == c.target:
            errors.append(f"channels.{i}: a channel needs two distinct machines")
    for i, t in enumerate(scenario.schedule):
        for field in ("sender", "receiver"):
            if getattr(t, field) not in seen:
                errors.append(f"schedule.{i}.{field}: unknown machine {getattr(t, field)!r}")
    pair = scenario.parameters.pair
    if pair is not None:
        for i, machine_id in enumerate(pair):
            if machine_id not in seen:
                errors.append(f"parameters.pair.{i}: unknown machine {machine_id!r}")
        if pair[0] == pair[1]:
            errors.append("parameters.pair: a channel needs two distinct machines")

    if scenario.channels and not any(m.proper_period for m in scenario.machines):
        errors.append(
            "machines: an arrangement is augmented by the proper period of at least "
            "one machine; set proper_period on one of them"
        )

    metric = scenario.build_metric()
    guard = scenario.settings.validity_guard
    for i, m in enumerate(scenario.machines):
        if m.path is not None and not metric.is_flat:
            errors.append(f"machines.{i}.path: moving worldlines need a flat metric")
        load = metric.mu * float(np.dot(m.position, m.position))
        if load >= guard:
            errors.append(
                f"machines.{i}.position: mu*|x|^2 = {load:.3e} violates the "
                f"validity guard mu*|x|^2 < {guard}"
            )
    return errors
