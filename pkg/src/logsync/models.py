"""Pydantic value types shared across logsync modules."""

import math
from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .enums import EventKind

Position = tuple[float, float, float]
"""Spatial coordinates (x, y, z) in metres (or toy length units)."""


class LogsyncBaseModel(BaseModel):
    """Base model for all logsync value types."""

    model_config = ConfigDict(
        extra="forbid",
        str_strip_whitespace=True,
        validate_assignment=True,
        frozen=True,
    )


# =============================================================================
# Configuration
# =============================================================================


class PhysicalConstants(LogsyncBaseModel):
    """Physical constants injected into every metric (SI CODATA by default)."""

    c: float = Field(299_792_458.0, gt=0, description="Speed of light [m/s]")
    G: float = Field(
        6.67430e-11, gt=0, description="Gravitational constant [m^3/(kg s^2)]"
    )

    @classmethod
    def geometric(cls) -> "PhysicalConstants":
        """Toy units with c = G = 1."""
        return cls(c=1.0, G=1.0)


class SolverSettings(LogsyncBaseModel):
    """Numerical knobs shared by the light-time, arrangement and optimizer solvers."""

    validity_guard: float = Field(
        1e-3, gt=0, description="Upper bound on mu*|x|^2 for any evaluated position"
    )
    shooting_steps: int = Field(
        64, ge=8, description="Fixed RK4 steps along the shooting parameter"
    )
    shooting_rtol: float = Field(
        1e-10, gt=0, description="Relative endpoint residual accepted by shooting"
    )
    fermat_nodes: int = Field(
        16, ge=4, description="Gauss-Legendre nodes for straight-line optical length"
    )
    root_xtol: float = Field(
        1e-13, gt=0, description="Absolute tolerance of bracketing root finders"
    )
    solve_rtol: float = Field(
        1e-10,
        gt=0,
        description="Relative tolerance on echo-duration residuals of placements",
    )
    frozen_step: float = Field(
        1e-6,
        gt=0,
        description="Central-difference step as a fraction of the shortest distance",
    )
    frozen_rank_rtol: float = Field(
        1e-8, gt=0, description="Singular values below this times the largest are zero"
    )
    minimax_restarts: int = Field(
        3, ge=0, description="Seeded Nelder-Mead restarts per channel count"
    )
    minimax_maxiter: int = Field(
        6000, ge=100, description="Iteration cap for each Nelder-Mead run"
    )
    minimax_weight: float = Field(
        1e3, gt=1, description="Weight on phases of channels that must stay null"
    )


# =============================================================================
# Clock readings and event records
# =============================================================================


class ClockReading(LogsyncBaseModel):
    """A clock reading written m.phi: cycle count plus in-cycle phase."""

    m: int = Field(..., description="Cycle count")
    phi: float = Field(..., description="In-cycle phase, in (-1/2, 1/2]")

    @field_validator("phi")
    @classmethod
    def validate_phi(cls, v: float) -> float:
        if not -0.5 < v <= 0.5:
            raise ValueError(f"phase {v} outside (-1/2, 1/2]")
        return v

    @classmethod
    def from_value(cls, value: float) -> "ClockReading":
        """Split a real reading so that phi = 1/2 stays with m, never with m + 1."""
        if not math.isfinite(value):
            raise ValueError(f"reading {value} is not finite")
        m = math.ceil(value - 0.5)
        phi = value - m
        if phi > 0.5:
            m, phi = m + 1, phi - 1.0
        elif phi <= -0.5:
            m, phi = m - 1, phi + 1.0
        return cls(m=m, phi=phi)

    @property
    def value(self) -> float:
        return self.m + self.phi

    def __str__(self) -> str:
        return f"{self.m}.{self.phi:+.6f}"


class EventRecord(LogsyncBaseModel):
    """One occurrence written to an open machine's log."""

    machine: str = Field(..., description="Machine that logged the event")
    reading: ClockReading = Field(..., description="Clock reading at the event")
    kind: EventKind = Field(..., description="Transmit or receive")
    counterpart: str = Field(..., description="Machine at the other end of the signal")
    t: float = Field(..., description="Coordinate time of the event [s]")
    signal: int = Field(..., ge=0, description="Identifier of the light signal")
    reply_to: int | None = Field(
        None, description="Signal this transmission echoes, when it is an echo"
    )


# =============================================================================
# Channel quantities
# =============================================================================


class PhaseTolerance(LogsyncBaseModel):
    """Margin eta around the half-cycle boundary of the writing phase."""

    eta: Annotated[float, Field(gt=0, lt=1, description="Dimensionless margin")]


class EchoCount(LogsyncBaseModel):
    """Round-trip cycles counted by the originating machine."""

    value: float = Field(..., gt=0, description="Cycles between send and echo")

    @property
    def is_integral(self) -> bool:
        return abs(self.value - round(self.value)) < 1e-9
