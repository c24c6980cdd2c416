"""Constructive solvers for arrangements of open machines.

Covers the 1+1 light-cone and lacing constructions, the tetrahedral and
five-machine placements with null-phase two-way channels, the symmetric ring
whose A-A channels pick up a curvature phase, frozen detection, the minimax
phase search and the curvature bit-rate bound.
"""

import logging
import math
from collections.abc import Sequence
from itertools import combinations

import numpy as np
from pydantic import Field, model_validator
from scipy import optimize

from .channel import echo_count
from .enums import DelayMethod, EventKind
from .exceptions import (
    ConvergenceError,
    InvalidParameterError,
    MissingReferenceError,
    OrderViolationError,
    OutsideValidityDomainError,
)
from .machine import (
    OpenMachine,
    RateSchedule,
    Transmission,
    coordinate_time_of,
    simulate_signals,
)
from .models import LogsyncBaseModel, PhysicalConstants, Position, SolverSettings
from .spacetime import (
    DEFAULT_SETTINGS,
    Event,
    Metric,
    Worldline,
    coordinate_light_delay,
    fermat_delays,
    light_arrival,
    proper_duration,
    proper_rate,
)

logger = logging.getLogger(__name__)

RING_IDS = ("B1", "B2", "A0", "A1", "A2")
RING_CHANNELS = (
    ("A0", "A1"),
    ("A1", "A2"),
    ("A2", "A0"),
    ("B1", "B2"),
    ("B1", "A0"),
    ("B1", "A1"),
    ("B1", "A2"),
    ("B2", "A0"),
    ("B2", "A1"),
    ("B2", "A2"),
)


# =============================================================================
# Domain types
# =============================================================================


class ChannelSpec(LogsyncBaseModel):
    """A declared two-way channel with its target echo count and phase."""

    source: str = Field(..., description="First machine")
    target: str = Field(..., description="Second machine")
    echo_count: int = Field(..., gt=0, description="Target two-way echo count")
    phase: float = Field(0.0, ge=-0.5, le=0.5, description="Target arrival phase")

    @property
    def label(self) -> str:
        return f"{self.source}-{self.target}"


class AnchoredPeriod(LogsyncBaseModel):
    """Proper period p_tau fixed for one machine of an arrangement."""

    machine: str = Field(..., description="Anchored machine")
    p_tau: float = Field(..., gt=0, description="Proper period [s]")


class Arrangement(LogsyncBaseModel):
    """Machines, declared channels and at least one anchored proper period."""

    machines: tuple[OpenMachine, ...] = Field(..., min_length=2, description="Machines")
    channels: tuple[ChannelSpec, ...] = Field((), description="Declared channels")
    anchors: tuple[AnchoredPeriod, ...] = Field(
        ..., min_length=1, description="Anchored proper periods"
    )
    metric: Metric = Field(default_factory=Metric, description="Static metric")

    @model_validator(mode="after")
    def validate_references(self) -> "Arrangement":
        ids = [m.id for m in self.machines]
        if len(set(ids)) != len(ids):
            raise ValueError("machine ids must be unique")
        known = set(ids)
        for spec in self.channels:
            if spec.source not in known or spec.target not in known:
                raise ValueError(f"channel {spec.label} references an unknown machine")
        for anchor in self.anchors:
            if anchor.machine not in known:
                raise ValueError(f"anchor references unknown machine {anchor.machine}")
        return self

    def machine(self, machine_id: str) -> OpenMachine:
        for m in self.machines:
            if m.id == machine_id:
                return m
        raise MissingReferenceError(
            f"Unknown machine {machine_id}", "E003", context={"machine": machine_id}
        )

    def position(self, machine_id: str) -> np.ndarray:
        return np.array(self.machine(machine_id).worldline.position, dtype=float)

    def positions(self) -> np.ndarray:
        return np.array([m.worldline.position for m in self.machines], dtype=float)

    @property
    def coordinate_period(self) -> float:
        """Common coordinate period anchored at the first anchored machine."""
        anchor = self.anchors[0]
        return anchor.p_tau / proper_rate(self.metric, self.position(anchor.machine))

    def with_channel(self, source: str, target: str, echo_count: int) -> "Arrangement":
        spec = ChannelSpec(source=source, target=target, echo_count=echo_count)
        return self.model_copy(update={"channels": self.channels + (spec,)})


class ChannelMeasurement(LogsyncBaseModel):
    """Simulated phases and echo counts of one declared two-way channel."""

    source: str = Field(..., description="First machine")
    target: str = Field(..., description="Second machine")
    forward_phase: float = Field(..., description="Arrival phase source -> target")
    reverse_phase: float = Field(..., description="Arrival phase target -> source")
    echo_source: float = Field(..., description="Echo count measured by source")
    echo_target: float = Field(..., description="Echo count measured by target")


class TwoMachineSolution(LogsyncBaseModel):
    """Both light-cone solution families for the partner of a clocked machine."""

    left: OpenMachine = Field(..., description="Partner on the -x side")
    right: OpenMachine = Field(..., description="Partner on the +x side")
    left_ticks: tuple[Event, ...] = Field(..., description="Tick events of left")
    right_ticks: tuple[Event, ...] = Field(..., description="Tick events of right")


class LacingSolution(LogsyncBaseModel):
    """Clockings of two worldline images defined by interleaved lacings."""

    a: OpenMachine = Field(..., description="Machine on the first image")
    b: OpenMachine = Field(..., description="Machine on the second image")
    a_ticks: tuple[Event, ...] = Field(..., description="Tick events of a")
    b_ticks: tuple[Event, ...] = Field(..., description="Tick events of b")
    n: int = Field(..., ge=1, description="Echo count both ways")


class RingConfig(LogsyncBaseModel):
    """Symmetric five-machine ring: B1, B2 on the x axis, A0..A2 in the plane x = 0."""

    n: int = Field(..., ge=1, description="Cycles per unit radar distance N")
    p_tau: float = Field(..., gt=0, description="Proper period anchored at B1 [s]")
    mu: float = Field(0.0, ge=0, description="Curvature parameter [1/m^2]")
    constants: PhysicalConstants = Field(
        default_factory=PhysicalConstants, description="Injected constants"
    )

    @model_validator(mode="after")
    def validate_phase_regime(self) -> "RingConfig":
        if 27.0 * self.mu * self.n**3 * self.p_tau**2 * self.constants.c**2 / 8.0 >= 0.5:
            raise ValueError("27 mu N^3 p_tau^2 c^2 / 8 must stay below 1/2")
        return self

    @property
    def scale(self) -> float:
        """L = N p_tau c, the flat radar distance of one unit."""
        return self.n * self.p_tau * self.constants.c

    @property
    def metric(self) -> Metric:
        if self.mu == 0.0:
            return Metric.flat(self.constants)
        return Metric.fermi_normal(self.mu, self.constants)


class RingSolution(LogsyncBaseModel):
    """Solved ring with its measured A-A arrival phase."""

    arrangement: Arrangement = Field(..., description="Five machines, ten channels")
    phase: float = Field(..., description="Arrival phase of A0 -> A1")
    aa_phases: tuple[float, float, float] = Field(..., description="A0A1, A1A2, A2A0")
    half_separation: float = Field(..., description="|x| of B1 and B2 [m]")
    radius: float = Field(..., description="Radius of the A circle [m]")


class FrozenReport(LogsyncBaseModel):
    """Outcome of the frozen test on declared two-way echo counts."""

    frozen: bool = Field(..., description="Some echo count is coupled to others")
    degenerate: bool = Field(..., description="Rank deficit beyond the count excess")
    rank: int = Field(..., ge=0, description="Rank of the shape Jacobian")
    count: int = Field(..., ge=0, description="Number of declared echo counts")
    witness: str | None = Field(None, description="Machine with most coupled counts")
    coupled: tuple[str, ...] = Field((), description="Coupled channels at the witness")
    singular_values: tuple[float, ...] = Field((), description="Jacobian spectrum")


class MinimaxResult(LogsyncBaseModel):
    """Best objective found when m designated channels may carry phase."""

    m: int = Field(..., ge=1, le=10, description="Designated channel count")
    value: float = Field(..., ge=0, description="Objective in cycles")
    max_phase: float = Field(..., ge=0, description="Largest |phase| at the optimum")
    designated: tuple[str, ...] = Field(..., description="Designated channels")
    phases: dict[str, float] = Field(..., description="Larger-magnitude end phase per channel")
    positions: dict[str, Position] = Field(..., description="Optimized positions")
    rates: dict[str, float] = Field(..., description="Period of each machine over B1's")
    solution: tuple[float, ...] = Field(..., description="Scaled optimizer variables")
    evaluations: int = Field(0, ge=0, description="Objective evaluations")


# =============================================================================
# Shared helpers
# =============================================================================


def coordinate_period(metric: Metric, anchor: Sequence[float], p_tau: float) -> float:
    """Coordinate time spanned by one proper period at a static anchor."""
    return p_tau / proper_rate(metric, anchor)


def static_machine(
    machine_id: str, position: Sequence[float], metric: Metric, period: float
) -> OpenMachine:
    """A static machine rated so its coordinate period equals ``period``."""
    rate = proper_rate(metric, position)
    position = tuple(float(v) for v in position)
    return OpenMachine(
        id=machine_id,
        worldline=Worldline(position=position),
        rate=RateSchedule.constant(1.0 / (period * rate)),
        proper_period=period * rate,
    )


def clock_through_ticks(
    metric: Metric, worldline: Worldline, tick_times: Sequence[float], first_reading: int
) -> tuple[RateSchedule, float, float]:
    """Step rate schedule whose clock reads consecutive integers at the ticks."""
    knots = []
    for t0, t1 in zip(tick_times, tick_times[1:]):
        knots.append((float(t0), 1.0 / proper_duration(metric, worldline, t0, t1)))
    return RateSchedule(knots=tuple(knots)), float(tick_times[0]), float(first_reading)


def two_way_phases(
    arr: Arrangement,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> list[ChannelMeasurement]:
    """Simulate both directions of every declared channel with immediate echoes."""
    out = []
    for spec in arr.channels:
        a, b = arr.machine(spec.source), arr.machine(spec.target)
        schedule = [
            Transmission(sender=a.id, reading=0.0, receiver=b.id, bounces=1),
            Transmission(sender=b.id, reading=0.0, receiver=a.id, bounces=1),
        ]
        log = simulate_signals((a, b), arr.metric, schedule, method, settings)
        arrivals = {
            (r.counterpart, r.machine): r.reading.phi
            for r in log
            if r.kind is EventKind.RECEIVE and r.signal in (0, 2)
        }
        echo_a, echo_b = echo_count(log, a.id, b.id), echo_count(log, b.id, a.id)
        out.append(
            ChannelMeasurement(
                source=a.id,
                target=b.id,
                forward_phase=arrivals[(a.id, b.id)],
                reverse_phase=arrivals[(b.id, a.id)],
                echo_source=echo_a.value if echo_a else 0.0,
                echo_target=echo_b.value if echo_b else 0.0,
            )
        )
    return out


def reverse_channel_delay_check(
    measurements: Sequence[ChannelMeasurement], tol: float = 1e-9
) -> bool:
    """A static channel turned around arrives with the same phase."""
    return all(abs(m.forward_phase - m.reverse_phase) <= tol for m in measurements)


# =============================================================================
# 1+1 light-cone constructions
# =============================================================================


def solve_two_machine(
    a: OpenMachine,
    delta: int,
    readings: Sequence[int],
    metric: Metric | None = None,
) -> TwoMachineSolution:
    """Partner ticks at the intersections of A's future and past light cones."""
    metric = metric or Metric()
    if not metric.is_flat:
        raise InvalidParameterError(
            "Light-cone intersections are solved in flat 1+1 space", "E001"
        )
    if delta < 1 or len(readings) < 2:
        raise InvalidParameterError(
            "Need delta >= 1 and at least two readings",
            "E001",
            context={"delta": delta, "readings": len(readings)},
        )
    c = metric.c
    left, right = [], []
    for m in readings:
        t1 = coordinate_time_of(a, m, metric)
        t2 = coordinate_time_of(a, m + delta, metric)
        x1 = float(a.worldline.position_at(t1)[0])
        x2 = float(a.worldline.position_at(t2)[0])
        reach = 0.5 * c * (t2 - t1)
        xr = 0.5 * (x1 + x2) + reach
        xl = 0.5 * (x1 + x2) - reach
        right.append(Event(t=t1 + (xr - x1) / c, x=xr))
        left.append(Event(t=t1 + (x1 - xl) / c, x=xl))

    def partner(name: str, ticks: list[Event]) -> OpenMachine:
        _, y, z = a.worldline.position
        xs = np.array([e.x for e in ticks])
        if np.ptp(xs) <= 1e-12 * (np.abs(xs).max() + 1.0):
            worldline = Worldline(position=(float(xs[0]), y, z))
        else:
            worldline = Worldline(position=(0.0, y, z), path=tuple((e.t, e.x) for e in ticks))
        rate, epoch_time, epoch_reading = clock_through_ticks(
            metric, worldline, [e.t for e in ticks], readings[0]
        )
        return OpenMachine(
            id=f"{a.id}-{name}",
            worldline=worldline,
            rate=rate,
            epoch_time=epoch_time,
            epoch_reading=epoch_reading,
        )

    logger.info(f"Solved partner ticks of {a.id} for delta={delta} at {len(readings)} readings")
    return TwoMachineSolution(
        left=partner("left", left),
        right=partner("right", right),
        left_ticks=tuple(left),
        right_ticks=tuple(right),
    )


def construct_lacing(
    image_a: Worldline,
    image_b: Worldline,
    seed_t: float,
    n: int,
    rounds: int,
    metric: Metric | None = None,
    seeds: Sequence[float] | None = None,
    ids: tuple[str, str] = ("A", "B"),
) -> LacingSolution:
    """Clock both images with n interleaved lacings so that both echo counts are n."""
    metric = metric or Metric()
    if n < 1 or rounds < 2:
        raise InvalidParameterError(
            "Need n >= 1 and at least two rounds", "E001", context={"n": n, "rounds": rounds}
        )

    def bounce(t: float, src: Worldline, dst: Worldline) -> float:
        return light_arrival(metric, src.position_at(t), t, dst)

    first_echo = bounce(bounce(seed_t, image_a, image_b), image_b, image_a)
    if seeds is None:
        seeds = [seed_t + (first_echo - seed_t) * j / n for j in range(n)]
    if len(seeds) != n or any(s1 <= s0 for s0, s1 in zip(seeds, seeds[1:])):
        raise InvalidParameterError(
            "Lacing seeds must be n increasing times", "E001", context={"seeds": list(seeds)}
        )
    if seeds[-1] >= first_echo:
        raise InvalidParameterError(
            "Last seed must precede the first echo",
            "E001",
            context={"last_seed": seeds[-1], "first_echo": first_echo},
        )

    a_events: list[tuple[int, Event]] = []
    b_events: list[tuple[int, Event]] = []
    for j, t in enumerate(seeds):
        for k in range(rounds):
            a_events.append((j + k * n, Event(t=t, x=float(image_a.position_at(t)[0]))))
            t_b = bounce(t, image_a, image_b)
            b_events.append((j + k * n, Event(t=t_b, x=float(image_b.position_at(t_b)[0]))))
            t = bounce(t_b, image_b, image_a)

    def clocked(
        name: str, image: Worldline, events: list[tuple[int, Event]]
    ) -> tuple[OpenMachine, tuple[Event, ...]]:
        events = sorted(events, key=lambda item: item[1].t)
        readings = [r for r, _ in events]
        if readings != list(range(len(events))):
            raise OrderViolationError(
                f"Lacings on {name} are not interleaved in order", "E007"
            )
        ticks = tuple(e for _, e in events)
        rate, epoch_time, epoch_reading = clock_through_ticks(
            metric, image, [e.t for e in ticks], 0
        )
        machine = OpenMachine(
            id=name,
            worldline=image,
            rate=rate,
            epoch_time=epoch_time,
            epoch_reading=epoch_reading,
        )
        return machine, ticks

    a, a_ticks = clocked(ids[0], image_a, a_events)
    b, b_ticks = clocked(ids[1], image_b, b_events)
    logger.info(f"Constructed {n} lacings over {rounds} rounds between {ids[0]} and {ids[1]}")
    return LacingSolution(a=a, b=b, a_ticks=a_ticks, b_ticks=b_ticks, n=n)


# =============================================================================
# Placements in a static metric
# =============================================================================


def regular_tetrahedron(edge: float) -> np.ndarray:
    """Vertices of a regular tetrahedron centred on the origin."""
    return edge / math.sqrt(8.0) * np.array(
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
    )


def solve_tetrahedron(
    metric: Metric,
    p_tau: float,
    n: int,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> Arrangement:
    """Four machines with six null-phase two-way channels of echo count 2n.

    V2 slides along the flat edge from V1, V3 moves in the flat face plane and
    V4 moves freely, so the six echo conditions meet six unknowns.
    """
    settings = settings or DEFAULT_SETTINGS
    edge = n * p_tau * metric.c
    flat = regular_tetrahedron(edge)
    period = coordinate_period(metric, flat[0], p_tau)
    along = (flat[1] - flat[0]) / edge
    in_plane = flat[2] - flat[0] - np.dot(flat[2] - flat[0], along) * along
    in_plane /= np.linalg.norm(in_plane)

    def place(x: np.ndarray) -> np.ndarray:
        v = flat.copy()
        v[1] = flat[0] + (1.0 + x[0]) * edge * along
        v[2] = flat[2] + edge * (x[1] * along + x[2] * in_plane)
        v[3] = flat[3] + edge * x[3:6]
        return v

    pairs = list(combinations(range(4), 2))

    def residual(x: np.ndarray) -> np.ndarray:
        v = place(x)
        return np.array(
            [
                coordinate_light_delay(metric, v[i], v[j], method, settings) / period - n
                for i, j in pairs
            ]
        )

    x = _solve(residual, np.zeros(6), n, settings, "tetrahedron")
    vertices = place(x)
    ids = [f"V{i + 1}" for i in range(4)]
    machines = tuple(static_machine(name, v, metric, period) for name, v in zip(ids, vertices))
    channels = tuple(
        ChannelSpec(source=ids[i], target=ids[j], echo_count=2 * n) for i, j in pairs
    )
    logger.info(f"Solved tetrahedron with n={n} at mu={metric.mu}")
    return Arrangement(
        machines=machines,
        channels=channels,
        anchors=(AnchoredPeriod(machine="V1", p_tau=p_tau),),
        metric=metric,
    )


def add_fifth(
    metric: Metric,
    tetra: Arrangement,
    n: int,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> Arrangement:
    """A fifth machine opposite V4 across the face V1 V2 V3, linked to that face.

    V5 lands about one edge from the origin, so the validity guard mu*|x|^2
    fails (E004) once mu reaches roughly guard / (n p_tau c)^2.
    """
    settings = settings or DEFAULT_SETTINGS
    face = [tetra.position(name) for name in ("V1", "V2", "V3")]
    apex = tetra.position("V4")
    normal = np.cross(face[1] - face[0], face[2] - face[0])
    normal /= np.linalg.norm(normal)
    mirrored = apex - 2.0 * np.dot(apex - face[0], normal) * normal
    period = tetra.coordinate_period
    edge = float(np.linalg.norm(face[1] - face[0]))

    def residual(x: np.ndarray) -> np.ndarray:
        v5 = mirrored + edge * x
        return np.array(
            [coordinate_light_delay(metric, v5, f, method, settings) / period - n for f in face]
        )

    x = _solve(residual, np.zeros(3), n, settings, "fifth machine")
    fifth = static_machine("V5", mirrored + edge * x, metric, period)
    channels = tetra.channels + tuple(
        ChannelSpec(source="V5", target=name, echo_count=2 * n) for name in ("V1", "V2", "V3")
    )
    logger.info("Added fifth machine with nine two-way channels")
    return tetra.model_copy(
        update={"machines": tetra.machines + (fifth,), "channels": channels}
    )


def ring_positions(half_separation: float, radius: float) -> dict[str, np.ndarray]:
    """B1, B2 at -/+ half_separation on x; A0..A2 evenly on a circle in x = 0."""
    positions = {
        "B1": np.array([-half_separation, 0.0, 0.0]),
        "B2": np.array([half_separation, 0.0, 0.0]),
    }
    for k in range(3):
        theta = 2.0 * math.pi * k / 3.0
        positions[f"A{k}"] = np.array([0.0, radius * math.cos(theta), radius * math.sin(theta)])
    return positions


def solve_ring5(
    cfg: RingConfig,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> RingSolution:
    """Seven null two-way channels (echo 4N) force a common A-A phase (echo 6N)."""
    settings = settings or DEFAULT_SETTINGS
    metric = cfg.metric
    scale = cfg.scale
    n = cfg.n

    def geometry(x: np.ndarray) -> dict[str, np.ndarray]:
        return ring_positions(scale * (1.0 + x[0]), math.sqrt(3.0) * scale * (1.0 + x[1]))

    def residual(x: np.ndarray) -> np.ndarray:
        p = geometry(x)
        period = coordinate_period(metric, p["B1"], cfg.p_tau)
        return np.array(
            [
                coordinate_light_delay(metric, p["B1"], p["B2"], method, settings) / period - 2 * n,
                coordinate_light_delay(metric, p["B1"], p["A0"], method, settings) / period - 2 * n,
            ]
        )

    x = np.zeros(2) if metric.is_flat else _solve(residual, np.zeros(2), 2 * n, settings, "ring")
    positions = geometry(x)
    period = coordinate_period(metric, positions["B1"], cfg.p_tau)
    machines = tuple(static_machine(name, positions[name], metric, period) for name in RING_IDS)
    by_id = {m.id: m for m in machines}

    aa = []
    for src, dst in RING_CHANNELS[:3]:
        log = simulate_signals(
            (by_id[src], by_id[dst]),
            metric,
            [Transmission(sender=src, reading=0.0, receiver=dst)],
            method,
            settings,
        )
        aa.append(next(r.reading.phi for r in log if r.kind is EventKind.RECEIVE))
    channels = tuple(
        ChannelSpec(
            source=src,
            target=dst,
            echo_count=6 * n if src.startswith("A") else 4 * n,
            phase=aa[0] if src.startswith("A") else 0.0,
        )
        for src, dst in RING_CHANNELS
    )
    arrangement = Arrangement(
        machines=machines,
        channels=channels,
        anchors=(AnchoredPeriod(machine="B1", p_tau=cfg.p_tau),),
        metric=metric,
    )
    logger.info(f"Ring n={n}, mu={cfg.mu}: A-A phase {aa[0]:.6e}")
    return RingSolution(
        arrangement=arrangement,
        phase=aa[0],
        aa_phases=(aa[0], aa[1], aa[2]),
        half_separation=float(-positions["B1"][0]),
        radius=float(np.linalg.norm(positions["A0"])),
    )


# =============================================================================
# Curvature phase and bit-rate formulas
# =============================================================================


def predicted_phase(
    gm: float, r: float, n: int, p_tau: float
) -> float:
    """Closed-form ring phase -27 GM N^3 p_tau^2 / (8 r^3)."""
    if r <= 0:
        raise OutsideValidityDomainError(
            f"Radius must be positive, got {r}", "E004", context={"r": r}
        )
    phi = -27.0 * gm * n**3 * p_tau**2 / (8.0 * r**3)
    if abs(phi) >= 0.5:
        raise OutsideValidityDomainError(
            "Ring phase formula needs 27 mu N^3 p_tau^2 c^2 / 8 < 1/2",
            "E004",
            context={"phase": phi},
        )
    return phi


def first_order_ring_phase(
    mu: float, n: int, p_tau: float, constants: PhysicalConstants
) -> float:
    """Ring phase derived to first order in mu from the Fermi normal metric."""
    return -2.5 * mu * constants.c**2 * n**3 * p_tau**2


def predicted_phase_from_separation(
    gm: float, separation: float, r: float, p_tau: float, constants: PhysicalConstants
) -> float:
    """Ring phase in terms of the B separation L ~ 2 N p_tau c."""
    return -27.0 * gm * separation**3 / (64.0 * r**3 * constants.c**3 * p_tau)


def min_period(
    gm: float, separation: float, r: float, constants: PhysicalConstants
) -> float:
    """Shortest proper period keeping the ring phase inside half a cycle."""
    for name, value in (("separation", separation), ("r", r)):
        if value <= 0:
            raise OutsideValidityDomainError(
                f"{name} must be positive", "E004", context={name: value}
            )
    return 27.0 * gm * separation**3 / (32.0 * r**3 * constants.c**3)


def max_bitrate(bits_per_character: float, p_tau: float) -> float:
    """One character per cycle."""
    if p_tau <= 0:
        raise OutsideValidityDomainError(
            "Proper period must be positive", "E004", context={"p_tau": p_tau}
        )
    return bits_per_character / p_tau


# =============================================================================
# Frozen arrangements
# =============================================================================


def is_frozen(arr: Arrangement, settings: SolverSettings | None = None) -> FrozenReport:
    """Detect echo counts that cannot change without changing another.

    Rigid motions of the whole cluster are projected out of the Jacobian of
    all declared two-way echo counts with respect to every machine position.
    """
    settings = settings or DEFAULT_SETTINGS
    ids = [m.id for m in arr.machines]
    index = {name: i for i, name in enumerate(ids)}
    pairs = np.array([(index[c.source], index[c.target]) for c in arr.channels], dtype=int)
    count = len(pairs)
    if count == 0:
        return FrozenReport(frozen=False, degenerate=False, rank=0, count=0)
    base = arr.positions()
    period = arr.coordinate_period
    shortest = min(float(np.linalg.norm(base[i] - base[j])) for i, j in pairs)
    step = settings.frozen_step * shortest

    def counts(p: np.ndarray) -> np.ndarray:
        return 2.0 * fermat_delays(arr.metric, p[pairs[:, 0]], p[pairs[:, 1]], settings) / period

    size = base.size
    jacobian = np.empty((count, size))
    for k in range(size):
        bump = np.zeros(size)
        bump[k] = step
        up = counts(base + bump.reshape(base.shape))
        down = counts(base - bump.reshape(base.shape))
        jacobian[:, k] = (up - down) / (2.0 * step)

    rigid = _rigid_motions(base)
    projected = jacobian @ (np.eye(size) - rigid @ rigid.T)
    left, singular, _ = np.linalg.svd(projected)
    threshold = settings.frozen_rank_rtol * (singular[0] if singular.size else 0.0)
    rank = int(np.sum(singular > threshold)) if singular.size and singular[0] > 0 else 0
    frozen = rank < count
    degenerate = rank < min(count, size - 6)
    if degenerate:
        logger.warning(f"Degenerate shape Jacobian: rank {rank} for {count} echo counts")

    witness, coupled = None, ()
    if frozen:
        null = np.abs(left[:, rank])
        involved = [c for c, w in zip(arr.channels, null) if w > 1e-6 * null.max()]
        tally = {name: sum(name in (c.source, c.target) for c in involved) for name in ids}
        witness = max(ids, key=lambda name: tally[name])
        coupled = tuple(c.label for c in involved if witness in (c.source, c.target))
    logger.info(f"Frozen test: rank {rank} of {count} echo counts, frozen={frozen}")
    return FrozenReport(
        frozen=frozen,
        degenerate=degenerate,
        rank=rank,
        count=count,
        witness=witness,
        coupled=coupled,
        singular_values=tuple(float(s) for s in singular),
    )


# =============================================================================
# Minimax phases
# =============================================================================


def minimax_phases(
    metric: Metric,
    cfg: RingConfig,
    m: int,
    seed: int = 0,
    start: Sequence[float] | None = None,
    symmetric: bool = False,
    settings: SolverSettings | None = None,
    rates: bool = True,
) -> MinimaxResult:
    """Least max |phase| when only the first m ring channels may carry phase.

    Channels outside the designated set are weighted so the search drives them
    to null. Positions move with the cluster centroid pinned at the origin.
    B1 keeps the anchored period; with ``rates`` every other machine scales its
    period, which moves only the echo counts that machine measures, so each
    channel is judged at both ends. The symmetric search shares one scaling
    among the A machines and keeps B2 on B1's period.
    """
    settings = settings or DEFAULT_SETTINGS
    if not 1 <= m <= len(RING_CHANNELS):
        raise InvalidParameterError(
            f"m must lie in 1..{len(RING_CHANNELS)}, got {m}", "E001", context={"m": m}
        )
    designated = tuple(f"{a}-{b}" for a, b in RING_CHANNELS[:m])
    scale = cfg.scale
    base = np.array([p for p in ring_positions(scale, math.sqrt(3.0) * scale).values()])
    shape_size = 2 if symmetric else base.size
    rate_size = (1 if symmetric else len(RING_IDS) - 1) if rates else 0
    size = shape_size + rate_size
    if start is not None and len(start) != size:
        raise InvalidParameterError(
            f"start needs {size} values, got {len(start)}",
            "E001",
            context={"size": size, "rates": rates, "symmetric": symmetric},
        )
    if metric.mu == 0.0:
        zeros = np.zeros(len(RING_CHANNELS))
        ones = np.ones(len(RING_IDS))
        return _minimax_result(m, designated, np.zeros(size), base, ones, zeros, 0.0, 0)

    move = metric.mu * scale**3
    phase_unit = metric.mu * scale**2 * cfg.n
    rate_step = phase_unit / (2.0 * cfg.n)
    src = np.array([RING_IDS.index(a) for a, _ in RING_CHANNELS])
    dst = np.array([RING_IDS.index(b) for _, b in RING_CHANNELS])
    targets = np.array([3 * cfg.n if a.startswith("A") else 2 * cfg.n for a, _ in RING_CHANNELS])
    weight = np.where(np.arange(len(RING_CHANNELS)) < m, 1.0, settings.minimax_weight)

    def place(x: np.ndarray) -> np.ndarray:
        if symmetric:
            p = ring_positions(scale + move * x[0], math.sqrt(3.0) * scale + move * x[1])
            return np.array(list(p.values()))
        shift = move * x[:shape_size].reshape(base.shape)
        return base + shift - shift.mean(axis=0)

    def scalings(x: np.ndarray) -> np.ndarray:
        y = x[shape_size:]
        if not rates:
            return np.ones(len(RING_IDS))
        if symmetric:
            return np.array([1.0, 1.0] + [1.0 + rate_step * y[0]] * 3)
        return np.concatenate([[1.0], 1.0 + rate_step * y])

    def phases(x: np.ndarray) -> np.ndarray:
        p = place(x)
        period = coordinate_period(metric, p[0], cfg.p_tau) * scalings(x)
        delay = fermat_delays(metric, p[src], p[dst], settings)
        at_source = delay / period[src] - targets
        at_target = delay / period[dst] - targets
        return np.where(np.abs(at_source) >= np.abs(at_target), at_source, at_target)

    def objective(x: np.ndarray) -> float:
        return float(np.max(weight * np.abs(phases(x)))) / phase_unit

    rng = np.random.default_rng(seed)
    first = np.zeros(size) if start is None else np.asarray(start, dtype=float)
    starts = [first] + [
        first + rng.normal(scale=1.0, size=size) for _ in range(settings.minimax_restarts)
    ]
    best_x, best_f, evaluations = first, objective(first), 0
    for x0 in starts:
        simplex = np.vstack([x0, x0 + 0.5 * np.eye(size)])
        res = optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "xatol": 1e-9,
                "fatol": 1e-12,
                "maxiter": settings.minimax_maxiter,
                "maxfev": 2 * settings.minimax_maxiter,
                "adaptive": True,
            },
        )
        evaluations += int(res.nfev)
        logger.debug(f"minimax m={m}: restart value {res.fun:.6e} after {res.nfev} evaluations")
        if res.fun < best_f:
            best_x, best_f = np.asarray(res.x), float(res.fun)
    logger.info(f"minimax m={m}: {best_f * phase_unit:.6e} cycles")
    return _minimax_result(
        m,
        designated,
        best_x,
        place(best_x),
        scalings(best_x),
        phases(best_x),
        best_f * phase_unit,
        evaluations,
    )


def minimax_sweep(
    metric: Metric,
    cfg: RingConfig,
    ms: Sequence[int] = tuple(range(1, 11)),
    seed: int = 0,
    symmetric: bool = False,
    settings: SolverSettings | None = None,
    rates: bool = True,
) -> list[MinimaxResult]:
    """minimax_phases over increasing m, warm-started from the previous optimum."""
    results: list[MinimaxResult] = []
    start = None
    for m in sorted(ms):
        result = minimax_phases(metric, cfg, m, seed, start, symmetric, settings, rates)
        results.append(result)
        start = result.solution
    return results


# =============================================================================
# Internals
# =============================================================================


def _solve(
    residual, x0: np.ndarray, cycles: int, settings: SolverSettings, what: str
) -> np.ndarray:
    solution = optimize.root(residual, x0, method="hybr", options={"xtol": 1e-14})
    miss = np.abs(residual(solution.x))
    logger.debug(f"Placement of {what}: nfev={solution.nfev}, residuals={miss.tolist()}")
    if not np.all(miss <= settings.solve_rtol * cycles):
        logger.error(f"Placement of {what} did not converge")
        raise ConvergenceError(
            f"Placement of {what} did not converge",
            "E006",
            context={"residuals": miss.tolist(), "message": str(solution.message)},
        )
    return np.asarray(solution.x)


def _rigid_motions(points: np.ndarray) -> np.ndarray:
    """Orthonormal basis of infinitesimal translations and rotations."""
    centred = points - points.mean(axis=0)
    basis = []
    for axis in np.eye(3):
        basis.append(np.tile(axis, len(points)))
        basis.append(np.cross(axis, centred).ravel())
    q, _ = np.linalg.qr(np.array(basis).T)
    return q


def _minimax_result(
    m: int,
    designated: tuple[str, ...],
    x: np.ndarray,
    positions: np.ndarray,
    scalings: np.ndarray,
    phases: np.ndarray,
    value: float,
    evaluations: int,
) -> MinimaxResult:
    labels = [f"{a}-{b}" for a, b in RING_CHANNELS]
    return MinimaxResult(
        m=m,
        value=value,
        max_phase=float(np.max(np.abs(phases))),
        designated=designated,
        phases={label: float(v) for label, v in zip(labels, phases)},
        positions={name: tuple(float(v) for v in p) for name, p in zip(RING_IDS, positions)},
        rates={name: float(s) for name, s in zip(RING_IDS, scalings)},
        solution=tuple(float(v) for v in x),
        evaluations=evaluations,
    )
