"""Static metrics, worldlines, proper rates and coordinate light delays."""

import logging
import math
from collections.abc import Sequence

import numpy as np
from pydantic import Field, field_validator, model_validator
from scipy import optimize

from .enums import DelayMethod, MetricKind
from .exceptions import (
    ConvergenceError,
    InvalidParameterError,
    NotRadarLinkableError,
    OutsideValidityDomainError,
    ParameterOutOfRangeError,
)
from .models import LogsyncBaseModel, PhysicalConstants, Position, SolverSettings

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS = SolverSettings()


# =============================================================================
# Domain types
# =============================================================================


class Metric(LogsyncBaseModel):
    """Static metric: flat, or first-order Fermi normal form around a freely
    falling origin with tidal eigenvalues (-2mu, mu, mu) along (x, y, z)."""

    kind: MetricKind = Field(MetricKind.FLAT, description="Metric model")
    mu: float = Field(0.0, ge=0, description="Curvature parameter GM/(c^2 r^3) [1/m^2]")
    constants: PhysicalConstants = Field(
        default_factory=PhysicalConstants, description="Injected constants"
    )

    @model_validator(mode="after")
    def validate_flat_mu(self) -> "Metric":
        if self.kind is MetricKind.FLAT and self.mu != 0.0:
            raise ValueError("a flat metric carries mu = 0")
        return self

    @classmethod
    def flat(cls, constants: PhysicalConstants | None = None) -> "Metric":
        return cls(constants=constants or PhysicalConstants())

    @classmethod
    def fermi_normal(
        cls, mu: float, constants: PhysicalConstants | None = None
    ) -> "Metric":
        return cls(
            kind=MetricKind.FERMI_NORMAL_STATIC,
            mu=mu,
            constants=constants or PhysicalConstants(),
        )

    @classmethod
    def from_mass(
        cls, mass: float, radius: float, constants: PhysicalConstants | None = None
    ) -> "Metric":
        constants = constants or PhysicalConstants()
        return cls.fermi_normal(mu_from(mass, radius, constants), constants)

    @property
    def c(self) -> float:
        return self.constants.c

    @property
    def is_flat(self) -> bool:
        return self.kind is MetricKind.FLAT or self.mu == 0.0

    def check_position(
        self, p: Sequence[float] | np.ndarray, settings: SolverSettings | None = None
    ) -> None:
        """Reject positions where first-order curvature terms stop being small."""
        guard = (settings or DEFAULT_SETTINGS).validity_guard
        load = self.mu * float(np.dot(p, p))
        if not math.isfinite(load) or load >= guard:
            raise OutsideValidityDomainError(
                f"Position outside validity guard mu*|x|^2 < {guard}",
                "E004",
                context={"position": [float(v) for v in p], "mu_x2": load},
            )

    def optical_metric(self, points: np.ndarray) -> np.ndarray:
        """Spatial metric divided by -g_00; light travel time is its length over c."""
        points = np.asarray(points, dtype=float)
        eye = np.broadcast_to(np.eye(3), points.shape[:-1] + (3, 3))
        if self.is_flat:
            return eye.copy()
        potential, tidal = _tidal_terms(points)
        lapse = np.asarray(1.0 + self.mu * potential)
        return (eye + self.mu * tidal) / lapse[..., None, None]

    def geodesic_acceleration(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        """-Gamma^i_jk v^j v^k for the optical metric at p."""
        if self.is_flat:
            return np.zeros(3)
        mu = self.mu
        potential, tidal = _tidal_terms(p)
        d_potential, d_tidal = _tidal_gradients(p)
        lapse = 1.0 + mu * potential
        h = (np.eye(3) + mu * tidal) / lapse
        # dh[l, i, j] = d_l h_ij
        dh = mu * d_tidal / lapse - mu * np.einsum(
            "l,ij->lij", d_potential, np.eye(3) + mu * tidal
        ) / (lapse * lapse)
        w = np.einsum("jlk,j,k->l", dh, v, v) - 0.5 * np.einsum("ljk,j,k->l", dh, v, v)
        return -np.linalg.solve(h, w)


class Event(LogsyncBaseModel):
    """A point of the chart region."""

    t: float = Field(..., allow_inf_nan=False, description="Coordinate time [s]")
    x: float = Field(..., allow_inf_nan=False, description="x coordinate [m]")
    y: float = Field(0.0, allow_inf_nan=False, description="y coordinate [m]")
    z: float = Field(0.0, allow_inf_nan=False, description="z coordinate [m]")

    @property
    def position(self) -> Position:
        return (self.x, self.y, self.z)


class Worldline(LogsyncBaseModel):
    """A static position, or a piecewise-linear 1+1 path along x in flat space.

    Outside the knot span of a path the worldline rests at the end positions.
    """

    position: Position = Field((0.0, 0.0, 0.0), description="Spatial position [m]")
    path: tuple[tuple[float, float], ...] | None = Field(
        None, description="Knots (t, x) of a moving worldline; y, z from position"
    )

    @field_validator("path")
    @classmethod
    def validate_path(
        cls, v: tuple[tuple[float, float], ...] | None
    ) -> tuple[tuple[float, float], ...] | None:
        if v is None:
            return v
        if len(v) < 2:
            raise ValueError("a path needs at least two knots")
        times = [t for t, _ in v]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("path knots must be strictly increasing in t")
        if not all(math.isfinite(t) and math.isfinite(x) for t, x in v):
            raise ValueError("path knots must be finite")
        return v

    @classmethod
    def static(cls, x: float, y: float = 0.0, z: float = 0.0) -> "Worldline":
        return cls(position=(x, y, z))

    @property
    def is_static(self) -> bool:
        return self.path is None

    def position_at(self, t: float) -> np.ndarray:
        if self.path is None:
            return np.array(self.position, dtype=float)
        knots = np.asarray(self.path)
        x = float(np.interp(t, knots[:, 0], knots[:, 1]))
        return np.array([x, self.position[1], self.position[2]])

    def check_timelike(self, metric: Metric) -> None:
        """Raise unless every point moves slower than light in this metric."""
        if self.path is None:
            proper_rate(metric, self.position)
            return
        if not metric.is_flat:
            raise InvalidParameterError(
                "Moving worldlines are only supported in flat space",
                "E001",
                context={"metric": metric.kind.value},
            )
        knots = np.asarray(self.path)
        speeds = np.abs(np.diff(knots[:, 1]) / np.diff(knots[:, 0]))
        if np.any(speeds >= metric.c):
            raise OutsideValidityDomainError(
                "Worldline is not timelike",
                "E004",
                context={"max_speed": float(speeds.max()), "c": metric.c},
            )


# =============================================================================
# Operations
# =============================================================================


def mu_from(mass: float, radius: float, constants: PhysicalConstants) -> float:
    """Curvature parameter GM/(c^2 r^3) of a body of mass M at radius r."""
    if radius <= 0 or not math.isfinite(radius):
        raise ParameterOutOfRangeError(
            f"Radial coordinate must be positive, got {radius}",
            "E002",
            context={"radius": radius},
        )
    if mass < 0:
        raise ParameterOutOfRangeError(
            f"Mass must be non-negative, got {mass}", "E002", context={"mass": mass}
        )
    return constants.G * mass / (constants.c**2 * radius**3)


def proper_rate(
    metric: Metric,
    p: Sequence[float] | np.ndarray,
    settings: SolverSettings | None = None,
) -> float:
    """dtau/dt of a clock at rest at p; exactly 1 in flat space."""
    metric.check_position(p, settings)
    if metric.is_flat:
        return 1.0
    x, y, z = (float(v) for v in p)
    lapse2 = 1.0 + metric.mu * (-2.0 * x * x + y * y + z * z)
    if lapse2 <= 0:
        raise OutsideValidityDomainError(
            "Static observer is not timelike here", "E004", context={"position": list(p)}
        )
    return math.sqrt(lapse2)


def coordinate_light_delay(
    metric: Metric,
    a: Sequence[float] | np.ndarray,
    b: Sequence[float] | np.ndarray,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> float:
    """Coordinate duration of the future null path from a to b."""
    settings = settings or DEFAULT_SETTINGS
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    metric.check_position(a, settings)
    metric.check_position(b, settings)
    u = b - a
    distance = float(np.linalg.norm(u))
    if distance == 0.0:
        raise InvalidParameterError(
            "Light delay needs distinct endpoints",
            "E001",
            context={"a": a.tolist(), "b": b.tolist()},
        )
    if metric.is_flat:
        return distance / metric.c
    if method is DelayMethod.FERMAT:
        return float(fermat_delays(metric, a[None, :], b[None, :], settings)[0])
    return _shooting_delay(metric, a, b, settings)


def fermat_delays(
    metric: Metric,
    a: np.ndarray,
    b: np.ndarray,
    settings: SolverSettings | None = None,
) -> np.ndarray:
    """Optical length over c along straight segments, for stacked endpoints.

    Straight lines are flat geodesics, so first-order corrections to the light
    time are captured exactly while the path shape only enters at second order.
    """
    settings = settings or DEFAULT_SETTINGS
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u = b - a
    nodes, weights = np.polynomial.legendre.leggauss(settings.fermat_nodes)
    s = 0.5 * (nodes + 1.0)
    points = a[:, None, :] + s[None, :, None] * u[:, None, :]
    h = metric.optical_metric(points)
    integrand = np.sqrt(np.einsum("ki,knij,kj->kn", u, h, u))
    return 0.5 * integrand @ weights / metric.c


def radar_distance(
    metric: Metric,
    a: Sequence[float] | np.ndarray,
    b: Sequence[float] | np.ndarray,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> float:
    """Half the proper round-trip duration at a, times c."""
    delay = coordinate_light_delay(metric, a, b, method, settings)
    return metric.c * proper_rate(metric, a, settings) * delay


def rate_segments(metric: Metric, worldline: Worldline) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints and the constant dtau/dt between them.

    ``rates[i]`` holds on ``[breaks[i-1], breaks[i])`` with open ends outside.
    """
    worldline.check_timelike(metric)
    if worldline.path is None:
        return np.empty(0), np.array([proper_rate(metric, worldline.position)])
    knots = np.asarray(worldline.path)
    v = np.diff(knots[:, 1]) / np.diff(knots[:, 0])
    inner = np.sqrt(1.0 - (v / metric.c) ** 2)
    return knots[:, 0].copy(), np.concatenate(([1.0], inner, [1.0]))


def proper_duration(metric: Metric, worldline: Worldline, t0: float, t1: float) -> float:
    """Proper time elapsed along the worldline between coordinate times t0 < t1."""
    breaks, rates = rate_segments(metric, worldline)
    edges = np.concatenate(([t0], breaks[(breaks > t0) & (breaks < t1)], [t1]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    return float(np.sum(np.diff(edges) * rates[np.searchsorted(breaks, mids, "right")]))


def light_arrival(
    metric: Metric,
    source: Sequence[float] | np.ndarray,
    t_emit: float,
    receiver: Worldline,
    method: DelayMethod = DelayMethod.SHOOTING,
    settings: SolverSettings | None = None,
) -> float:
    """Coordinate time at which light emitted at (t_emit, source) meets the receiver."""
    settings = settings or DEFAULT_SETTINGS
    if receiver.is_static:
        return t_emit + coordinate_light_delay(
            metric, source, receiver.position, method, settings
        )
    receiver.check_timelike(metric)
    source = np.asarray(source, dtype=float)

    def gap(t: float) -> float:
        distance = float(np.linalg.norm(receiver.position_at(t) - source))
        return t - t_emit - distance / metric.c

    if gap(t_emit) == 0.0:
        raise InvalidParameterError(
            "Receiver coincides with the emission event",
            "E001",
            context={"t_emit": t_emit, "source": source.tolist()},
        )
    knots = np.asarray(receiver.path)
    start = float(np.linalg.norm(receiver.position_at(t_emit) - source)) / metric.c
    upper = t_emit + max(start + float(np.ptp(knots[:, 0])), 1e-12)
    for _ in range(64):
        if gap(upper) > 0:
            break
        upper = t_emit + 2.0 * (upper - t_emit)
    else:
        raise NotRadarLinkableError(
            "Light never reaches the receiver",
            "E005",
            context={"t_emit": t_emit, "source": source.tolist()},
        )
    return float(optimize.brentq(gap, t_emit, upper, xtol=settings.root_xtol))


# =============================================================================
# Internals
# =============================================================================


def _tidal_terms(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Potential -2x^2+y^2+z^2 and the spatial tidal quadratic form per point."""
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    potential = -2.0 * x * x + y * y + z * z
    tidal = np.empty(points.shape[:-1] + (3, 3))
    tidal[..., 0, 0] = (y * y + z * z) / 3.0
    tidal[..., 1, 1] = (x * x - 2.0 * z * z) / 3.0
    tidal[..., 2, 2] = (x * x - 2.0 * y * y) / 3.0
    tidal[..., 0, 1] = tidal[..., 1, 0] = -x * y / 3.0
    tidal[..., 0, 2] = tidal[..., 2, 0] = -x * z / 3.0
    tidal[..., 1, 2] = tidal[..., 2, 1] = 2.0 * y * z / 3.0
    return potential, tidal


def _tidal_gradients(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients d_l of the potential and d_l Q_ij at a single point."""
    x, y, z = (float(v) for v in p)
    d_potential = np.array([-4.0 * x, 2.0 * y, 2.0 * z])
    d_tidal = np.zeros((3, 3, 3))
    d_tidal[0] = [[0.0, -y, -z], [-y, 2.0 * x, 0.0], [-z, 0.0, 2.0 * x]]
    d_tidal[1] = [[2.0 * y, -x, 0.0], [-x, 0.0, 2.0 * z], [0.0, 2.0 * z, -4.0 * y]]
    d_tidal[2] = [[2.0 * z, 0.0, -x], [0.0, -4.0 * z, 2.0 * y], [-x, 2.0 * y, 0.0]]
    return d_potential, d_tidal / 3.0


def _ray_rhs(metric: Metric, state: np.ndarray) -> np.ndarray:
    p, v = state[0:3], state[3:6]
    h = metric.optical_metric(p)
    speed = math.sqrt(float(v @ h @ v))
    return np.concatenate((v, metric.geodesic_acceleration(p, v), [speed]))


def _integrate_ray(
    metric: Metric, a: np.ndarray, v0: np.ndarray, steps: int
) -> np.ndarray:
    """Fixed-step RK4 over the affine parameter [0, 1]; last component is length."""
    state = np.concatenate((a, v0, [0.0]))
    dt = 1.0 / steps
    for _ in range(steps):
        k1 = _ray_rhs(metric, state)
        k2 = _ray_rhs(metric, state + 0.5 * dt * k1)
        k3 = _ray_rhs(metric, state + 0.5 * dt * k2)
        k4 = _ray_rhs(metric, state + dt * k3)
        state = state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return state


def _shooting_delay(
    metric: Metric, a: np.ndarray, b: np.ndarray, settings: SolverSettings
) -> float:
    u = b - a
    scale = float(np.linalg.norm(u))

    def residual(w: np.ndarray) -> np.ndarray:
        end = _integrate_ray(metric, a, w * scale, settings.shooting_steps)
        return (end[0:3] - b) / scale

    solution = optimize.root(
        residual, u / scale, method="hybr", options={"xtol": 1e-14}
    )
    miss = float(np.linalg.norm(residual(solution.x)))
    logger.debug(f"Shooting {a.tolist()} -> {b.tolist()}: nfev={solution.nfev}, miss={miss:.3e}")
    if miss > settings.shooting_rtol:
        logger.error(f"Null-path shooting failed between {a.tolist()} and {b.tolist()}")
        raise ConvergenceError(
            "Null-path shooting did not converge",
            "E006",
            context={
                "a": a.tolist(),
                "b": b.tolist(),
                "residual": miss,
                "message": str(solution.message),
            },
        )
    end = _integrate_ray(metric, a, solution.x * scale, settings.shooting_steps)
    return float(end[6]) / metric.c
