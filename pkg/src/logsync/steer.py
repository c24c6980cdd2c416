"""Drifting oscillators, delayed-feedback steering and curvature re-estimation.

The steering plant tracks one channel's phase deviation ``x`` (cycles) and the
sender-relative frequency offset ``y`` (cycles per step)::

    x[k+1] = x[k] + y[k] + w[k] + u[k]
    y[k+1] = y[k] + r[k]

with white frequency noise ``w``, random-walk frequency noise ``r`` and the
rate correction ``u`` chosen by the receiving machine. Reports reach the
controller one round trip late, so it acts on a prediction.
"""

import csv
import logging
import math
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
from pydantic import Field, model_validator
from scipy import stats

from .arrange import Arrangement, first_order_ring_phase, two_way_phases
from .channel import echo_count
from .enums import DelayMethod, PhaseModel, SteeringAction
from .exceptions import (
    InvalidParameterError,
    NotRadarLinkableError,
    OutsideValidityDomainError,
)
from .machine import OpenMachine, Transmission, simulate_signals
from .models import LogsyncBaseModel, PhaseTolerance, PhysicalConstants, SolverSettings
from .spacetime import Metric

logger = logging.getLogger(__name__)

CLOSED_FORM_COEFFICIENT = 27.0 / 8.0


# =============================================================================
# Plant
# =============================================================================


class DriftModel(LogsyncBaseModel):
    """White plus random-walk frequency noise of a free-running oscillator."""

    sigma_white: float = Field(0.0, ge=0, description="White FM per step [cycles]")
    sigma_rw: float = Field(0.0, ge=0, description="Random-walk FM step [cycles/step]")
    seed: int = Field(0, description="Seed of the noise generator")
    offset: float = Field(0.0, description="Initial frequency offset [cycles/step]")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


class PlantState(LogsyncBaseModel):
    """Phase deviation and frequency offset after some number of steps."""

    x: float = Field(0.0, description="Phase deviation [cycles]")
    y: float = Field(0.0, description="Frequency offset [cycles/step]")
    step: int = Field(0, ge=0, description="Steps taken")

    @classmethod
    def start(cls, drift: DriftModel, x: float = 0.0) -> "PlantState":
        return cls(x=x, y=drift.offset)


def step_plant(
    state: PlantState, drift: DriftModel, rng: np.random.Generator, control: float = 0.0
) -> PlantState:
    """Advance the plant one step with noise drawn from rng."""
    w = rng.normal(0.0, drift.sigma_white)
    r = rng.normal(0.0, drift.sigma_rw)
    return PlantState(x=state.x + state.y + w + control, y=state.y + r, step=state.step + 1)


# =============================================================================
# Controller and aiming point
# =============================================================================


class Controller(LogsyncBaseModel):
    """PI rate correction acting on a phase predicted across the report delay."""

    kp: float = Field(0.5, ge=0, allow_inf_nan=False, description="Proportional gain")
    ki: float = Field(0.1, ge=0, allow_inf_nan=False, description="Integral gain")
    horizon: int = Field(0, ge=0, description="Report delay, the round trip [steps]")
    window: int = Field(16, ge=1, description="Steps used to estimate the drift")


class AimingPoint(LogsyncBaseModel):
    """Target arrival phase per channel and the writing-window margin."""

    targets: dict[str, float] = Field(..., min_length=1, description="phi_0 per channel")
    tolerance: PhaseTolerance = Field(..., description="Margin eta")

    @model_validator(mode="after")
    def validate_targets(self) -> "AimingPoint":
        limit = self.budget
        for channel, phi0 in self.targets.items():
            if not abs(phi0) < limit:
                raise ValueError(f"target phase of {channel} outside (1 - eta)/2 = {limit}")
        return self

    @property
    def budget(self) -> float:
        return (1.0 - self.tolerance.eta) / 2.0


class Deviation(LogsyncBaseModel):
    """One report of a steering run: delta = phi - phi_0."""

    step: int = Field(..., ge=0, description="Step index")
    phi: float = Field(..., description="Arrival phase, wrapped to (-1/2, 1/2]")
    phi_0: float = Field(..., description="Aiming-point phase")
    delta: float = Field(..., description="Deviation from the aiming point")
    action: float = Field(..., description="Rate correction applied [cycles/step]")


class SteeringSummary(LogsyncBaseModel):
    """Figures of a whole run."""

    steps: int = Field(..., ge=0, description="Steps simulated")
    horizon: int = Field(..., ge=0, description="Report delay [steps]")
    seed: int = Field(..., description="Noise seed")
    rms_delta: float = Field(..., ge=0, description="Root mean square deviation")
    max_abs_phi: float = Field(..., ge=0, description="Largest |phi| seen")
    violations: int = Field(..., ge=0, description="Steps with |phi| >= (1 - eta)/2")
    lost_sync: int = Field(..., ge=0, description="Steps with |phi_0 + delta| > 1/2")
    acquisition_step: int = Field(..., ge=0, description="First step after the last violation")

    @property
    def held(self) -> bool:
        return self.violations == 0


class SteeringRun(LogsyncBaseModel):
    """Deviation series of one channel and its summary."""

    channel: str = Field(..., description="Steered channel")
    phi_0: float = Field(..., description="Aiming-point phase")
    phi: tuple[float, ...] = Field(..., description="Wrapped arrival phase per step")
    delta: tuple[float, ...] = Field(..., description="Deviation per step")
    action: tuple[float, ...] = Field(..., description="Correction per step")
    summary: SteeringSummary = Field(..., description="Run figures")

    def deviations(self) -> list[Deviation]:
        return [
            Deviation(step=k, phi=p, phi_0=self.phi_0, delta=d, action=u)
            for k, (p, d, u) in enumerate(zip(self.phi, self.delta, self.action))
        ]


def run_closed_loop(
    aim: AimingPoint,
    drift: DriftModel,
    controller: Controller,
    steps: int,
    channel: str | None = None,
    initial_delta: float = 0.0,
) -> SteeringRun:
    """Steer one channel toward its aiming point with round-trip-delayed reports.

    At step k the controller knows deviations up to k - horizon. It estimates the
    drift over the preceding window, predicts the current deviation from the
    stale report plus the corrections already sent, and applies PI feedback.
    Deviations before the first step count as zero.
    """
    if steps < 1:
        raise InvalidParameterError(f"steps must be positive, got {steps}", "E001")
    channel = channel or next(iter(aim.targets))
    if channel not in aim.targets:
        raise InvalidParameterError(
            f"No aiming point for channel {channel}", "E001", context={"channel": channel}
        )
    phi0 = aim.targets[channel]
    budget = aim.budget
    d, w = controller.horizon, controller.window

    xs = np.zeros(steps + 1)
    sent = np.zeros(steps + 1)
    actions = np.zeros(steps)
    state = PlantState.start(drift, initial_delta)
    rng = drift.generator()
    xs[0] = state.x
    integral = 0.0
    for k in range(steps):
        seen, before = k - d, k - d - w
        measured = xs[seen] if seen >= 0 else 0.0
        older = xs[before] if before >= 0 else 0.0
        applied = sent[max(seen, 0)] - sent[max(before, 0)]
        slope = (measured - older - applied) / w
        predicted = measured + (sent[k] - sent[max(seen, 0)]) + d * slope
        integral += predicted
        u = -controller.kp * predicted - controller.ki * integral
        actions[k] = u
        state = step_plant(state, drift, rng, u)
        xs[k + 1] = state.x
        sent[k + 1] = sent[k] + u

    delta = xs[:steps]
    raw = phi0 + delta
    phi = raw - np.ceil(raw - 0.5)
    outside = np.abs(raw) >= budget
    lost = np.abs(raw) > 0.5
    last = np.flatnonzero(outside)
    summary = SteeringSummary(
        steps=steps,
        horizon=d,
        seed=drift.seed,
        rms_delta=float(np.sqrt(np.mean(delta**2))),
        max_abs_phi=float(np.max(np.abs(raw))),
        violations=int(outside.sum()),
        lost_sync=int(lost.sum()),
        acquisition_step=int(last[-1] + 1) if last.size else 0,
    )
    if summary.lost_sync:
        logger.warning(
            f"Channel {channel} lost synchronization on {summary.lost_sync} of {steps} steps"
        )
    elif summary.violations:
        logger.warning(f"Channel {channel} left the writing window on {summary.violations} steps")
    logger.info(
        f"Steered {channel} for {steps} steps at horizon {d}: rms {summary.rms_delta:.3e}"
    )
    return SteeringRun(
        channel=channel,
        phi_0=phi0,
        phi=tuple(phi.tolist()),
        delta=tuple(delta.tolist()),
        action=tuple(actions.tolist()),
        summary=summary,
    )


def round_trip_horizon(
    receiver: OpenMachine,
    sender: OpenMachine,
    metric: Metric,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> int:
    """Whole receiver cycles a report needs: the echo count receiver -> sender -> receiver."""
    log = simulate_signals(
        (receiver, sender),
        metric,
        [Transmission(sender=receiver.id, reading=0.0, receiver=sender.id, bounces=1)],
        method,
        settings,
    )
    echo = echo_count(log, receiver.id, sender.id)
    if echo is None:
        raise NotRadarLinkableError(
            f"No echo between {receiver.id} and {sender.id}",
            "E005",
            context={"receiver": receiver.id, "sender": sender.id},
        )
    return max(0, math.ceil(echo.value - 1e-9))


def steer_pair(
    sender: OpenMachine,
    receiver: OpenMachine,
    metric: Metric,
    aim: AimingPoint,
    drift: DriftModel,
    controller: Controller,
    steps: int,
    initial_delta: float = 0.0,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> SteeringRun:
    """Steer the sender -> receiver channel with the delay set by the pair's round trip."""
    horizon = round_trip_horizon(receiver, sender, metric, method, settings)
    if controller.horizon and controller.horizon != horizon:
        logger.debug(f"Replacing horizon {controller.horizon} by the round trip {horizon}")
    logger.info(f"Round trip {receiver.id} -> {sender.id} -> {receiver.id}: {horizon} steps")
    return run_closed_loop(
        aim,
        drift,
        controller.model_copy(update={"horizon": horizon}),
        steps,
        channel=f"{sender.id}->{receiver.id}",
        initial_delta=initial_delta,
    )


def write_deviation_csv(run: SteeringRun, path: Path) -> None:
    """Write the series with columns step, phi, phi_0, delta, action."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "phi", "phi_0", "delta", "action"])
        for k, (p, dlt, u) in enumerate(zip(run.phi, run.delta, run.action)):
            writer.writerow([k, repr(p), repr(run.phi_0), repr(dlt), repr(u)])
    logger.debug(f"Wrote {len(run.delta)} deviations of {run.channel} to {path}")


# =============================================================================
# Curvature estimation
# =============================================================================


class RingObservation(LogsyncBaseModel):
    """A measured A-A phase of a ring built with N and p_tau."""

    n: int = Field(..., ge=1, description="Cycles per unit radar distance")
    p_tau: float = Field(..., gt=0, description="Proper period [s]")
    phase: float = Field(..., description="Measured arrival phase")


class MuEstimate(LogsyncBaseModel):
    """Least-squares curvature with its Student-t confidence interval."""

    mu: float = Field(..., description="Estimated curvature [1/m^2]")
    stderr: float = Field(..., ge=0, description="Standard error [1/m^2]")
    interval: tuple[float, float] = Field(..., description="Confidence interval")
    confidence: float = Field(..., gt=0, lt=1, description="Confidence level")
    count: int = Field(..., ge=3, description="Observations used")
    model: PhaseModel = Field(..., description="Forward phase model")

    def contains(self, mu: float) -> bool:
        return self.interval[0] <= mu <= self.interval[1]


def phase_sensitivity(
    n: int, p_tau: float, model: PhaseModel, constants: PhysicalConstants
) -> float:
    """d phi / d mu of a ring, which is linear in mu under both models."""
    if model is PhaseModel.FIRST_ORDER:
        return first_order_ring_phase(1.0, n, p_tau, constants)
    return -CLOSED_FORM_COEFFICIENT * constants.c**2 * n**3 * p_tau**2


def estimate_mu_from_phases(
    observations: Sequence[RingObservation],
    constants: PhysicalConstants | None = None,
    model: PhaseModel = PhaseModel.FIRST_ORDER,
    confidence: float = 0.95,
) -> MuEstimate:
    """Invert ring phases for the curvature parameter by least squares.

    The first-order model is the one solve_ring5 reproduces; the closed form
    reads the same phases as a curvature 20/27 as large.
    """
    constants = constants or PhysicalConstants()
    if len(observations) < 3:
        raise OutsideValidityDomainError(
            f"Need at least 3 observations, got {len(observations)}",
            "E004",
            context={"count": len(observations)},
        )
    a = np.array([phase_sensitivity(o.n, o.p_tau, model, constants) for o in observations])
    phases = np.array([o.phase for o in observations])
    norm = float(a @ a)
    mu = float(a @ phases) / norm
    residuals = phases - mu * a
    dof = len(observations) - 1
    stderr = math.sqrt(float(residuals @ residuals) / dof / norm)
    half = float(stats.t.ppf(0.5 + confidence / 2.0, dof)) * stderr
    logger.info(f"Estimated mu = {mu:.6e} +/- {half:.3e} from {len(observations)} phases")
    return MuEstimate(
        mu=mu,
        stderr=stderr,
        interval=(mu - half, mu + half),
        confidence=confidence,
        count=len(observations),
        model=model,
    )


# =============================================================================
# Aiming-point check
# =============================================================================


class AimingAdvice(LogsyncBaseModel):
    """Classification of phase residuals against an aiming point."""

    action: SteeringAction = Field(..., description="Advice")
    bias: dict[str, float] = Field(..., description="Mean residual per channel")
    noise_floor: dict[str, float] = Field(..., description="Standard error per channel")
    biased: tuple[str, ...] = Field((), description="Channels with a persistent bias")
    mu_shift: float | None = Field(None, description="Curvature shift implied by the bias")


def arrival_phases(
    arr: Arrangement,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> dict[str, float]:
    """Arrival phase of both directions of every declared channel, keyed 'X->Y'."""
    phases = {}
    for m in two_way_phases(arr, method, settings):
        phases[f"{m.source}->{m.target}"] = m.forward_phase
        phases[f"{m.target}->{m.source}"] = m.reverse_phase
    return phases


def check_aiming_point(
    arr: Arrangement,
    aim: AimingPoint,
    observed: Mapping[str, Sequence[float]] | None = None,
    signature: Mapping[str, float] | None = None,
    window: int | None = None,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> AimingAdvice:
    """Stay, re-steer, or revise the metric hypothesis.

    Residuals are arrival phases minus the aiming-point phase. ``observed``
    holds measured phase series per channel; without it the arrangement is
    simulated once and each aimed channel is judged on that single phase.
    ``signature`` maps channels to d phi / d mu for the implied curvature shift.
    """
    if observed is None:
        simulated = arrival_phases(arr, method, settings)
        missing = [c for c in aim.targets if c not in simulated]
        if missing:
            raise InvalidParameterError(
                f"Aimed channels {missing} are not declared in the arrangement",
                "E001",
                context={"channels": missing},
            )
        observed = {c: [simulated[c]] for c in aim.targets}
    for channel in observed:
        if channel not in aim.targets:
            raise InvalidParameterError(
                f"No aiming point for channel {channel}", "E001", context={"channel": channel}
            )
    residuals = {
        c: np.asarray(series, dtype=float) - aim.targets[c] for c, series in observed.items()
    }
    return _classify_residuals(residuals, aim, signature, window)


def _classify_residuals(
    residuals: Mapping[str, np.ndarray],
    aim: AimingPoint,
    signature: Mapping[str, float] | None,
    window: int | None,
) -> AimingAdvice:
    """A channel whose mean over the window exceeds three standard errors is biased."""
    bias: dict[str, float] = {}
    floor: dict[str, float] = {}
    within = True
    for channel, values in residuals.items():
        if window is not None:
            values = values[-window:]
        if values.size == 0:
            raise InvalidParameterError(f"No residuals for channel {channel}", "E001")
        within &= bool(np.all(np.abs(aim.targets[channel] + values) < aim.budget))
        bias[channel] = float(values.mean())
        spread = float(values.std(ddof=1)) if values.size > 1 else 0.0
        floor[channel] = spread / math.sqrt(values.size)

    biased = tuple(c for c in bias if abs(bias[c]) > 3.0 * floor[c])
    if within:
        action = SteeringAction.IN_TOLERANCE
    elif biased:
        action = SteeringAction.REVISE_METRIC
    else:
        action = SteeringAction.RE_STEER

    mu_shift = None
    if signature and biased:
        s = np.array([signature.get(c, 0.0) for c in biased])
        m = np.array([bias[c] for c in biased])
        if float(s @ s) > 0:
            mu_shift = float(s @ m) / float(s @ s)
    logger.info(f"Aiming point check: {action.value}, biased channels {list(biased)}")
    return AimingAdvice(
        action=action, bias=bias, noise_floor=floor, biased=biased, mu_shift=mu_shift
    )
