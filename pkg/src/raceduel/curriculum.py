"""Training curricula: the clamped-linear time scale, Pacejka tire morphing
from an easy high-grip model to the true one, and CBF gain annealing."""

from __future__ import annotations

from dataclasses import dataclass

from .dynamics import TireTriple, VehicleParams


@dataclass(frozen=True)
class CurriculumSchedule:
    t_start: int = 500_000
    t_end: int = 1_500_000
    base_front: TireTriple = VehicleParams().front_tire()
    base_rear: TireTriple = VehicleParams().rear_tire()
    lambda1_0: float = 0.3
    lambda2_0: float = 0.3

    def __post_init__(self):
        if not (0 <= self.t_start < self.t_end):
            raise ValueError("need 0 <= t_start < t_end")
        if self.lambda1_0 < 0 or self.lambda2_0 < 0:
            raise ValueError("lambda bases must be non-negative")


@dataclass(frozen=True)
class EnvPhysicsConfig:
    front: TireTriple
    rear: TireTriple
    lambda1: float
    lambda2: float
    t_s: float


def time_scale(t: float, schedule: CurriculumSchedule) -> float:
    """Clamped-linear progress through [t_start, t_end]."""
    return max(0.0, min(1.0, (t - schedule.t_start)
                        / (schedule.t_end - schedule.t_start)))


def tire_params_at(t_s: float, base: TireTriple) -> TireTriple:
    """Morphed Pacejka triple at curriculum progress t_s.

    D doubles at t_s=0 and returns to the base at t_s=1; C flattens toward
    sqrt(C0); B follows so the cornering stiffness product obeys
    B*C*D = 2^(1-t_s) * B0*C0*D0. The B expression is the algebraic
    simplification B0*C0/C, which recovers the base triple bit-exactly at
    t_s=1.
    """
    if not 0.0 <= t_s <= 1.0:
        raise ValueError(f"t_s must lie in [0, 1], got {t_s}")
    ease = 2.0 ** (1.0 - t_s)
    d = ease * base.D
    c = base.C ** (1.0 / ease)
    b = base.B * (base.C / c)
    return TireTriple(B=b, C=c, D=d)


def cbf_lambdas_at(t_s: float, schedule: CurriculumSchedule) -> tuple[float, float]:
    """Linear gain decay; exactly (0, 0) at t_s = 1."""
    if not 0.0 <= t_s <= 1.0:
        raise ValueError(f"t_s must lie in [0, 1], got {t_s}")
    return schedule.lambda1_0 * (1.0 - t_s), schedule.lambda2_0 * (1.0 - t_s)


def environment_at(t: float, schedule: CurriculumSchedule) -> EnvPhysicsConfig:
    """Bundle the morphed tires and annealed shield gains for a train step."""
    t_s = time_scale(t, schedule)
    l1, l2 = cbf_lambdas_at(t_s, schedule)
    return EnvPhysicsConfig(
        front=tire_params_at(t_s, schedule.base_front),
        rear=tire_params_at(t_s, schedule.base_rear),
        lambda1=l1,
        lambda2=l2,
        t_s=t_s,
    )
