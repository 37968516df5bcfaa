"""Second-order control-barrier shield for the track walls.

Barriers measure clearance to each wall through the centerline lateral
offset; the filter replaces a proposed control by the box-constrained
minimizer of K_viol * (C_left^2 + C_right^2) + |u - u_ref|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Control, TireTriple, VehicleParams, VehicleState, derivatives
from .track import TrackModel


@dataclass(frozen=True)
class CbfConfig:
    # gains near 1.0 forbid the lateral acceleration curved tracks need;
    # 0.3 concentrates interference near the walls
    lambda1_0: float = 0.3
    lambda2_0: float = 0.3
    k_viol: float = 1e4
    grid_size: int = 17
    refine_steps: int = 20
    # raw residual max(0, +expr); the negated form is the default because
    # the raw one penalizes safe states (see constraint_residual)
    literal_sign: bool = False


@dataclass(frozen=True)
class BarrierEval:
    h_left: float
    h_right: float
    hdot_left: float
    hdot_right: float
    hddot_left: float
    hddot_right: float


def barrier_eval(
    state: VehicleState,
    track: TrackModel,
    control: Control,
    params: VehicleParams,
    front: TireTriple | None = None,
    rear: TireTriple | None = None,
) -> BarrierEval:
    """h, hdot per the wall-clearance barrier; hddot uses the model
    accelerations at (state, control), so morphed tires change it."""
    f = track.frenet(np.array([state.x, state.y]), state.phi)
    dth = f.e2  # heading minus local centerline tangent
    sin_d, cos_d = math.sin(dth), math.cos(dth)
    w = track.half_width
    h_l = f.e1 + w
    h_r = w - f.e1
    lateral_rate = state.vx * sin_d + state.vy * cos_d
    d = derivatives(state, control, params, front, rear)
    acc_rate = d[3] * sin_d + d[4] * cos_d + state.omega * (
        state.vx * cos_d - state.vy * sin_d
    )
    return BarrierEval(
        h_left=h_l,
        h_right=h_r,
        hdot_left=lateral_rate,
        hdot_right=-lateral_rate,
        hddot_left=acc_rate,
        hddot_right=-acc_rate,
    )


def constraint_residual(
    ev: BarrierEval, lambda1: float, lambda2: float, literal_sign: bool = False
) -> tuple[float, float]:
    """(C_left, C_right); positive means the barrier condition is violated.

    The default negates the expression inside max(0, .): the raw form would
    flag safe interior states (h > 0, everything at rest) as violations and
    reward wall contact, which contradicts the shield's purpose. The literal
    form stays available for comparison.
    """
    l12 = lambda1 * lambda2
    l_sum = lambda1 + lambda2
    expr_l = l12 * ev.hddot_left + l_sum * ev.hdot_left + ev.h_left
    expr_r = l12 * ev.hddot_right + l_sum * ev.hdot_right + ev.h_right
    if literal_sign:
        return max(0.0, expr_l), max(0.0, expr_r)
    return max(0.0, -expr_l), max(0.0, -expr_r)


def violation_penalty(residuals: tuple[float, float], k_constraint: float) -> float:
    """Non-positive reward contribution -k * (C_left^2 + C_right^2)."""
    if k_constraint < 0:
        raise ValueError("k_constraint must be non-negative")
    c_l, c_r = residuals
    return -k_constraint * (c_l * c_l + c_r * c_r)


def _residuals_for_grid(state, f_pose, throttles, steers, params, front, rear,
                        lambda1, lambda2, w, literal_sign):
    """Vectorized (C_left, C_right) over a throttle x steer grid."""
    dth = f_pose.e2
    sin_d, cos_d = math.sin(dth), math.cos(dth)
    h_l = f_pose.e1 + w
    h_r = w - f_pose.e1
    lat = state.vx * sin_d + state.vy * cos_d

    vx_reg = max(state.vx, 0.5)
    alpha_f = steers - np.arctan((state.omega * params.lf + state.vy) / vx_reg)
    alpha_r = math.atan((state.omega * params.lr - state.vy) / vx_reg)
    f_fy = front.D * np.sin(front.C * np.arctan(front.B * alpha_f))
    f_ry = rear.D * math.sin(rear.C * math.atan(rear.B * alpha_r))
    f_rx = (
        (params.Cm1 - params.Cm2 * state.vx) * throttles
        - params.Croll
        - params.Cd * state.vx**2
    )
    # acc grids: vxd over (steer, throttle), vyd over steer only
    vxd = (f_rx[None, :] - (f_fy * np.sin(steers))[:, None]) / params.m + (
        state.vy * state.omega
    )
    vyd = (f_ry + f_fy * np.cos(steers)) / params.m - state.vx * state.omega
    acc = vxd * sin_d + (vyd * cos_d)[:, None] + state.omega * (
        state.vx * cos_d - state.vy * sin_d
    )
    l12 = lambda1 * lambda2
    l_sum = lambda1 + lambda2
    expr_l = l12 * acc + l_sum * lat + h_l
    expr_r = -l12 * acc - l_sum * lat + h_r
    if literal_sign:
        return np.maximum(0.0, expr_l), np.maximum(0.0, expr_r)
    return np.maximum(0.0, -expr_l), np.maximum(0.0, -expr_r)


def filter_control(
    u_ref: Control,
    state: VehicleState,
    track: TrackModel,
    lambda1: float,
    lambda2: float,
    config: CbfConfig = CbfConfig(),
    params: VehicleParams | None = None,
    front: TireTriple | None = None,
    rear: TireTriple | None = None,
) -> tuple[Control, tuple[float, float]]:
    """Minimally invasive correction of u_ref over the actuator box.

    Coarse grid search plus coordinate refinement (the objective is
    non-convex in u through the tire trig terms). Deterministic; the
    returned control never scores worse than u_ref.
    """
    if params is None:
        params = VehicleParams()
    if front is None:
        front = params.front_tire()
    if rear is None:
        rear = params.rear_tire()

    ev_ref = barrier_eval(state, track, u_ref, params, front, rear)
    res_ref = constraint_residual(ev_ref, lambda1, lambda2, config.literal_sign)
    if res_ref[0] == 0.0 and res_ref[1] == 0.0:
        return u_ref, res_ref  # objective already at its global minimum

    f_pose = track.frenet(np.array([state.x, state.y]), state.phi)
    w = track.half_width
    kv = config.k_viol

    def objective_scalar(d, delta):
        cl, cr = _residuals_for_grid(
            state, f_pose, np.array([d]), np.array([delta]), params, front,
            rear, lambda1, lambda2, w, config.literal_sign,
        )
        pen = kv * (cl[0, 0] ** 2 + cr[0, 0] ** 2)
        return pen + (d - u_ref.throttle) ** 2 + (delta - u_ref.steer) ** 2

    throttles = np.linspace(-1.0, 1.0, config.grid_size)
    steers = np.linspace(-params.delta_max, params.delta_max, config.grid_size)
    cl, cr = _residuals_for_grid(state, f_pose, throttles, steers, params,
                                 front, rear, lambda1, lambda2, w,
                                 config.literal_sign)
    obj = kv * (cl**2 + cr**2)
    obj += (throttles[None, :] - u_ref.throttle) ** 2
    obj += ((steers - u_ref.steer) ** 2)[:, None]
    i, j = np.unravel_index(int(np.argmin(obj)), obj.shape)
    best = (float(throttles[j]), float(steers[i]))
    best_obj = float(obj[i, j])

    ref_obj = objective_scalar(u_ref.throttle, u_ref.steer)
    if ref_obj <= best_obj:
        best, best_obj = (u_ref.throttle, u_ref.steer), ref_obj

    step_d = 2.0 / (config.grid_size - 1)
    step_s = 2.0 * params.delta_max / (config.grid_size - 1)
    for _ in range(config.refine_steps):
        improved = False
        for dd, ds in ((step_d, 0.0), (-step_d, 0.0), (0.0, step_s), (0.0, -step_s)):
            cand = (
                min(1.0, max(-1.0, best[0] + dd)),
                min(params.delta_max, max(-params.delta_max, best[1] + ds)),
            )
            cand_obj = objective_scalar(*cand)
            if cand_obj < best_obj:
                best, best_obj = cand, cand_obj
                improved = True
        if not improved:
            step_d *= 0.5
            step_s *= 0.5

    u_safe = Control(best[0], best[1], delta_max=params.delta_max)
    ev = barrier_eval(state, track, u_safe, params, front, rear)
    return u_safe, constraint_residual(ev, lambda1, lambda2, config.literal_sign)
