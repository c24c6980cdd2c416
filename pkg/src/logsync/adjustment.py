"""Clock adjustments: monotone reparametrizations of clock readings.

Adjustments form a group under composition. Each adjustment is stored as a
sequence of elementary knotted steps, so composition and inversion are exact
bookkeeping and only evaluation touches interpolants.
"""

import csv
import logging
import math
from collections.abc import Sequence
from functools import lru_cache
from pathlib import Path

import numpy as np
from pydantic import Field, field_validator
from scipy import optimize
from scipy.interpolate import PchipInterpolator

from .enums import AdjustmentKind
from .exceptions import InvalidParameterError, OutsideValidityDomainError
from .models import LogsyncBaseModel

logger = logging.getLogger(__name__)

Knots = tuple[tuple[float, float], ...]


class AdjustmentStep(LogsyncBaseModel):
    """One strictly increasing interpolant with affine extension beyond its knots."""

    knots: Knots = Field(..., min_length=2, description="Knots (zeta, f(zeta))")
    kind: AdjustmentKind = Field(AdjustmentKind.LINEAR, description="Interpolant")
    inverted: bool = Field(False, description="Evaluate the inverse map instead")

    @field_validator("knots")
    @classmethod
    def validate_knots(cls, v: Knots) -> Knots:
        if not all(math.isfinite(a) and math.isfinite(b) for a, b in v):
            raise ValueError("knots must be finite")
        for (x0, y0), (x1, y1) in zip(v, v[1:]):
            if x1 <= x0 or y1 <= y0:
                raise ValueError("knots must be strictly increasing in both coordinates")
        return v

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        return self._backward(z) if self.inverted else self._forward(z)

    def evaluate_inverse(self, z: np.ndarray) -> np.ndarray:
        return self._forward(z) if self.inverted else self._backward(z)

    def flipped(self) -> "AdjustmentStep":
        return self.model_copy(update={"inverted": not self.inverted})

    def _forward(self, z: np.ndarray) -> np.ndarray:
        x, y = _columns(self.knots)
        left, right = _end_slopes(self.knots, self.kind)
        if self.kind is AdjustmentKind.PCHIP:
            inside = _pchip(self.knots)(np.clip(z, x[0], x[-1]))
        else:
            inside = np.interp(z, x, y)
        return np.where(
            z < x[0],
            y[0] + left * (z - x[0]),
            np.where(z > x[-1], y[-1] + right * (z - x[-1]), inside),
        )

    def _backward(self, z: np.ndarray) -> np.ndarray:
        x, y = _columns(self.knots)
        left, right = _end_slopes(self.knots, self.kind)
        if self.kind is AdjustmentKind.PCHIP:
            inside = _pchip_inverse(self.knots, np.clip(z, y[0], y[-1]))
        else:
            inside = np.interp(z, y, x)
        return np.where(
            z < y[0],
            x[0] + (z - y[0]) / left,
            np.where(z > y[-1], x[-1] + (z - y[-1]) / right, inside),
        )


class ClockAdjustment(LogsyncBaseModel):
    """An element of the adjustment group: steps applied first to last."""

    steps: tuple[AdjustmentStep, ...] = Field((), description="Elementary steps")

    @classmethod
    def identity(cls) -> "ClockAdjustment":
        return cls()

    @classmethod
    def from_knots(
        cls,
        knots: Sequence[tuple[float, float]],
        kind: AdjustmentKind = AdjustmentKind.PCHIP,
    ) -> "ClockAdjustment":
        """Build a monotone adjustment through the given knots."""
        knots = tuple((float(a), float(b)) for a, b in knots)
        if len(knots) < 2:
            raise InvalidParameterError(
                "An adjustment needs at least two knots", "E001", context={"knots": knots}
            )
        for (x0, y0), (x1, y1) in zip(knots, knots[1:]):
            if x1 <= x0 or y1 <= y0:
                raise InvalidParameterError(
                    "Adjustment knots must be strictly increasing",
                    "E001",
                    context={"offending": [[x0, y0], [x1, y1]]},
                )
        return cls(steps=(AdjustmentStep(knots=knots, kind=kind),))

    @classmethod
    def affine(cls, scale: float, shift: float = 0.0) -> "ClockAdjustment":
        """zeta -> scale * zeta + shift."""
        if not scale > 0:
            raise InvalidParameterError(
                f"Affine adjustment needs a positive scale, got {scale}",
                "E001",
                context={"scale": scale},
            )
        return cls.from_knots(((0.0, shift), (1.0, scale + shift)), AdjustmentKind.LINEAR)

    @classmethod
    def shift(cls, delta: float) -> "ClockAdjustment":
        return cls.affine(1.0, delta)

    @classmethod
    def densify(cls, factor: int) -> "ClockAdjustment":
        """zeta -> N zeta, which multiplies every echo count by N."""
        return cls.affine(float(factor))

    @property
    def is_identity(self) -> bool:
        return not self.steps

    def __call__(self, zeta: float | np.ndarray) -> float | np.ndarray:
        z = np.asarray(zeta, dtype=float)
        for step in self.steps:
            z = step.evaluate(z)
        return float(z) if np.ndim(z) == 0 else z

    def inverse(self, zeta: float | np.ndarray) -> float | np.ndarray:
        z = np.asarray(zeta, dtype=float)
        for step in reversed(self.steps):
            z = step.evaluate_inverse(z)
        return float(z) if np.ndim(z) == 0 else z

    def knot_table(self) -> list[tuple[float, float]]:
        """(zeta, f(zeta)) at every step knot pulled back to the input axis."""
        zetas: set[float] = set()
        for i, step in enumerate(self.steps):
            x, y = _columns(step.knots)
            inputs = y if step.inverted else x
            prefix = ClockAdjustment(steps=self.steps[:i])
            zetas.update(float(v) for v in np.atleast_1d(prefix.inverse(inputs)))
        ordered = np.array(sorted(zetas))
        if ordered.size == 0:
            return []
        return list(zip(ordered.tolist(), np.atleast_1d(self(ordered)).tolist()))


class AdjustmentPair(LogsyncBaseModel):
    """Candidate element f_A x f_B of the channel-invariance subgroup."""

    f_a: ClockAdjustment = Field(default_factory=ClockAdjustment, description="Adjustment of A")
    f_b: ClockAdjustment = Field(default_factory=ClockAdjustment, description="Adjustment of B")

    def then(self, other: "AdjustmentPair") -> "AdjustmentPair":
        """Apply self first, then other."""
        return AdjustmentPair(f_a=compose(other.f_a, self.f_a), f_b=compose(other.f_b, self.f_b))


# =============================================================================
# Group operations
# =============================================================================


def compose(f: ClockAdjustment, g: ClockAdjustment) -> ClockAdjustment:
    """f after g: compose(f, g)(zeta) = f(g(zeta))."""
    return ClockAdjustment(steps=g.steps + f.steps)


def invert(f: ClockAdjustment) -> ClockAdjustment:
    return ClockAdjustment(steps=tuple(step.flipped() for step in reversed(f.steps)))


def act(f: ClockAdjustment, zeta: float) -> float:
    """Adjusted reading of an original reading."""
    return float(f(zeta))


def retrigger(f: ClockAdjustment, zeta: float) -> float:
    """Original reading at which a transmission scheduled for adjusted reading zeta fires."""
    if not math.isfinite(zeta):
        raise OutsideValidityDomainError(
            f"Reading {zeta} outside the invertible range", "E004", context={"zeta": zeta}
        )
    return float(f.inverse(zeta))


def write_knots_csv(f: ClockAdjustment, path: Path) -> None:
    """Write the adjustment as a knot list with columns zeta, f_of_zeta."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["zeta", "f_of_zeta"])
        for zeta, value in f.knot_table():
            writer.writerow([repr(zeta), repr(value)])
    logger.debug(f"Wrote adjustment knots to {path}")


# =============================================================================
# Internals
# =============================================================================


def _columns(knots: Knots) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(knots, dtype=float)
    return arr[:, 0], arr[:, 1]


@lru_cache(maxsize=512)
def _pchip(knots: Knots) -> PchipInterpolator:
    x, y = _columns(knots)
    return PchipInterpolator(x, y, extrapolate=False)


@lru_cache(maxsize=512)
def _end_slopes(knots: Knots, kind: AdjustmentKind) -> tuple[float, float]:
    x, y = _columns(knots)
    secant_left = (y[1] - y[0]) / (x[1] - x[0])
    secant_right = (y[-1] - y[-2]) / (x[-1] - x[-2])
    if kind is AdjustmentKind.LINEAR:
        return float(secant_left), float(secant_right)
    derivative = _pchip(knots).derivative()
    left = float(derivative(x[0]))
    right = float(derivative(x[-1]))
    # pchip end derivatives may vanish; keep the extension strictly increasing
    return (
        left if left > 0 else float(secant_left),
        right if right > 0 else float(secant_right),
    )


def _pchip_inverse(knots: Knots, z: np.ndarray) -> np.ndarray:
    x, y = _columns(knots)
    interpolant = _pchip(knots)
    flat = np.atleast_1d(z).astype(float)
    out = np.empty_like(flat)
    for i, target in enumerate(flat):
        j = int(np.searchsorted(y, target))
        if j < len(y) and y[j] == target:
            out[i] = x[j]
            continue
        lo, hi = x[max(j - 1, 0)], x[min(j, len(x) - 1)]

        def miss(s: float) -> float:
            return float(interpolant(s)) - target

        f_lo, f_hi = miss(lo), miss(hi)
        if f_lo * f_hi > 0:
            # rounding at a knot
            out[i] = lo if abs(f_lo) < abs(f_hi) else hi
            continue
        out[i] = optimize.brentq(miss, lo, hi, xtol=1e-14)
    return out.reshape(np.shape(z))
