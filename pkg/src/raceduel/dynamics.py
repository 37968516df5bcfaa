"""Dynamic bicycle model with Pacejka lateral tire forces.

Planar model: global pose (x, y, phi) plus body-frame velocities
(vx, vy, omega). Rear-driven longitudinal force, front/rear magic-formula
lateral forces, RK4 integration at a fixed step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

TWO_PI = 2.0 * math.pi

# Slip-angle denominators are regularized below this forward speed.
VX_FLOOR = 0.5


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a > math.pi:
        a -= TWO_PI
    elif a <= -math.pi:
        a += TWO_PI
    return a


class DivergedError(RuntimeError):
    """Integration produced a non-finite state (parameter blow-up)."""


@dataclass(frozen=True)
class VehicleState:
    """Pose in the global frame, velocities in the body frame."""

    x: float
    y: float
    phi: float
    vx: float
    vy: float
    omega: float

    def __post_init__(self):
        vals = (self.x, self.y, self.phi, self.vx, self.vy, self.omega)
        if not all(math.isfinite(v) for v in vals):
            raise DivergedError(f"non-finite vehicle state: {vals}")
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.x, self.y, self.phi, self.vx, self.vy, self.omega)

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class Control:
    """Throttle in [-1, 1] (negative = braking), steer in [-delta_max, delta_max].

    Values are clamped on construction; delta_max comes from the vehicle
    parameters the control is built against.
    """

    throttle: float
    steer: float
    delta_max: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "throttle", min(1.0, max(-1.0, self.throttle)))
        object.__setattr__(
            self, "steer", min(self.delta_max, max(-self.delta_max, self.steer))
        )


@dataclass(frozen=True)
class TireTriple:
    """Pacejka magic-formula coefficients: B stiffness, C shape, D peak force."""

    B: float
    C: float
    D: float

    def __post_init__(self):
        if not (self.B > 0 and self.D > 0):
            raise ValueError(f"B and D must be positive, got B={self.B} D={self.D}")
        if not (0.0 < self.C < 2.0):
            raise ValueError(f"C must lie in (0, 2), got {self.C}")


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters; the front/rear tires carry separate Pacejka triples.

    Croll is the constant rolling-resistance force; the rear Pacejka shape
    factor is a distinct quantity even though both are conventionally
    written C_r.
    """

    m: float = 1.0
    Iz: float = 0.03
    lf: float = 0.15
    lr: float = 0.15
    Bf: float = 6.0
    Cf: float = 1.4
    Df: float = 5.0
    Br: float = 6.5
    Cr: float = 1.45
    Dr: float = 5.2
    Cm1: float = 8.0
    Cm2: float = 0.3
    Croll: float = 0.3
    Cd: float = 0.03
    delta_max: float = 0.4
    length: float = 0.4
    width: float = 0.2

    def __post_init__(self):
        for name in ("m", "Iz", "lf", "lr", "delta_max", "length", "width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.Croll < 0 or self.Cd < 0:
            raise ValueError("Croll and Cd must be non-negative")
        # TireTriple validates B, C, D ranges.
        self.front_tire()
        self.rear_tire()

    def front_tire(self) -> TireTriple:
        return TireTriple(self.Bf, self.Cf, self.Df)

    def rear_tire(self) -> TireTriple:
        return TireTriple(self.Br, self.Cr, self.Dr)

    def with_tires(self, front: TireTriple, rear: TireTriple) -> "VehicleParams":
        return replace(
            self,
            Bf=front.B, Cf=front.C, Df=front.D,
            Br=rear.B, Cr=rear.C, Dr=rear.D,
        )

    def control(self, throttle: float, steer: float) -> Control:
        return Control(throttle, steer, delta_max=self.delta_max)


# Named reference configuration (artifact default, 1/10-style scaled car).
DEFAULT_CAR = VehicleParams()


def tire_lateral_force(alpha: float, triple: TireTriple) -> float:
    """Magic-formula lateral force D*sin(C*atan(B*alpha)); odd, bounded by ±D."""
    return triple.D * math.sin(triple.C * math.atan(triple.B * alpha))


def slip_angles(
    state: VehicleState, delta: float, params: VehicleParams
) -> tuple[float, float]:
    """Front/rear slip angles with the forward speed floored at VX_FLOOR."""
    vx = max(state.vx, VX_FLOOR)
    alpha_f = delta - math.atan((state.omega * params.lf + state.vy) / vx)
    alpha_r = math.atan((state.omega * params.lr - state.vy) / vx)
    return alpha_f, alpha_r


def longitudinal_force(d: float, vx: float, params: VehicleParams) -> float:
    """Rear-axle drive force minus rolling resistance and aerodynamic drag."""
    return (params.Cm1 - params.Cm2 * vx) * d - params.Croll - params.Cd * vx * vx


def derivatives(
    state: VehicleState,
    control: Control,
    params: VehicleParams,
    front: TireTriple | None = None,
    rear: TireTriple | None = None,
) -> tuple[float, float, float, float, float, float]:
    """Right-hand side of the bicycle model on a flat track.

    Tire triples may be supplied explicitly so a curriculum can substitute
    morphed values without rebuilding the parameter set.
    """
    if front is None:
        front = params.front_tire()
    if rear is None:
        rear = params.rear_tire()
    delta = control.steer
    alpha_f, alpha_r = slip_angles(state, delta, params)
    f_fy = tire_lateral_force(alpha_f, front)
    f_ry = tire_lateral_force(alpha_r, rear)
    f_rx = longitudinal_force(control.throttle, state.vx, params)

    cos_phi = math.cos(state.phi)
    sin_phi = math.sin(state.phi)
    cos_d = math.cos(delta)
    sin_d = math.sin(delta)
    m = params.m

    return (
        state.vx * cos_phi - state.vy * sin_phi,
        state.vx * sin_phi + state.vy * cos_phi,
        state.omega,
        (f_rx - f_fy * sin_d + m * state.vy * state.omega) / m,
        (f_ry + f_fy * cos_d - m * state.vx * state.omega) / m,
        (f_fy * params.lf * cos_d - f_ry * params.lr) / params.Iz,
    )


def step(
    state: VehicleState,
    control: Control,
    params: VehicleParams,
    front: TireTriple | None = None,
    rear: TireTriple | None = None,
    dt: float = 0.02,
) -> VehicleState:
    """Advance one classical RK4 step. dt must lie in (0, 0.05]."""
    if not (0.0 < dt <= 0.05):
        raise ValueError(f"dt must lie in (0, 0.05], got {dt}")

    s0 = state.as_tuple()

    def f(s):
        st = VehicleState(*s)
        return derivatives(st, control, params, front, rear)

    k1 = f(s0)
    k2 = f(tuple(s0[i] + 0.5 * dt * k1[i] for i in range(6)))
    k3 = f(tuple(s0[i] + 0.5 * dt * k2[i] for i in range(6)))
    k4 = f(tuple(s0[i] + dt * k3[i] for i in range(6)))
    out = tuple(
        s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(6)
    )
    if not all(math.isfinite(v) for v in out):
        raise DivergedError(f"RK4 step produced non-finite state from {s0}")
    return VehicleState(*out)
