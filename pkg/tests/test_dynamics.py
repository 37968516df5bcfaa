"""Dynamic bicycle model checks against an independently coded oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from raceduel.dynamics import (
    DEFAULT_CAR,
    Control,
    DivergedError,
    TireTriple,
    VehicleParams,
    VehicleState,
    derivatives,
    longitudinal_force,
    slip_angles,
    step,
    tire_lateral_force,
)


def eq2_oracle(s, throttle, delta, p: VehicleParams, front: TireTriple, rear: TireTriple):
    """Second, independent implementation of the model right-hand side.

    Written matrix-style on purpose so it shares no code path with the
    production scalar version.
    """
    x, y, phi, vx, vy, omega = s
    vx_reg = np.maximum(vx, 0.5)
    a_f = delta - np.arctan2(omega * p.lf + vy, vx_reg)
    a_r = np.arctan2(omega * p.lr - vy, vx_reg)
    F_fy = front.D * np.sin(front.C * np.arctan(front.B * a_f))
    F_ry = rear.D * np.sin(rear.C * np.arctan(rear.B * a_r))
    F_rx = (p.Cm1 - p.Cm2 * vx) * throttle - p.Croll - p.Cd * vx**2

    rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    pos_dot = rot @ np.array([vx, vy])
    acc = np.array(
        [
            (F_rx - F_fy * np.sin(delta)) / p.m + vy * omega,
            (F_ry + F_fy * np.cos(delta)) / p.m - vx * omega,
        ]
    )
    omega_dot = (F_fy * p.lf * np.cos(delta) - F_ry * p.lr) / p.Iz
    return np.array([pos_dot[0], pos_dot[1], omega, acc[0], acc[1], omega_dot])


def random_states(rng, n):
    for _ in range(n):
        yield VehicleState(
            x=rng.uniform(-50, 50),
            y=rng.uniform(-50, 50),
            phi=rng.uniform(-math.pi, math.pi),
            vx=rng.uniform(-1.0, 12.0),
            vy=rng.uniform(-3.0, 3.0),
            omega=rng.uniform(-4.0, 4.0),
        )


class TestTireForce:
    def test_zero_slip_gives_zero_force(self):
        assert tire_lateral_force(0.0, DEFAULT_CAR.front_tire()) == 0.0

    @given(st.floats(-1.5, 1.5, allow_nan=False))
    def test_odd_in_alpha(self, alpha):
        t = DEFAULT_CAR.front_tire()
        assert tire_lateral_force(-alpha, t) == pytest.approx(
            -tire_lateral_force(alpha, t), abs=1e-15
        )

    def test_slope_at_origin_is_bcd(self):
        t = TireTriple(B=7.1, C=1.3, D=4.2)
        h = 1e-6
        slope = (tire_lateral_force(h, t) - tire_lateral_force(-h, t)) / (2 * h)
        assert slope == pytest.approx(t.B * t.C * t.D, rel=1e-4)

    def test_bounded_by_peak(self):
        t = DEFAULT_CAR.rear_tire()
        for alpha in np.linspace(-math.pi, math.pi, 2001):
            assert abs(tire_lateral_force(alpha, t)) <= t.D + 1e-12


class TestSlipAngles:
    def test_straight_rolling(self):
        s = VehicleState(0, 0, 0, vx=5.0, vy=0.0, omega=0.0)
        assert slip_angles(s, 0.0, DEFAULT_CAR) == (0.0, 0.0)

    def test_pure_steer_offset(self):
        s = VehicleState(0, 0, 0, vx=5.0, vy=0.0, omega=0.0)
        a_f, a_r = slip_angles(s, 0.1, DEFAULT_CAR)
        assert a_f == pytest.approx(0.1)
        assert a_r == 0.0

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(7)
        p = DEFAULT_CAR
        for s in random_states(rng, 300):
            delta = rng.uniform(-p.delta_max, p.delta_max)
            a_f, a_r = slip_angles(s, delta, p)
            vxr = max(s.vx, 0.5)
            assert a_f == pytest.approx(
                delta - math.atan2(s.omega * p.lf + s.vy, vxr), abs=1e-14
            )
            assert a_r == pytest.approx(
                math.atan2(s.omega * p.lr - s.vy, vxr), abs=1e-14
            )


class TestLongitudinalForce:
    def test_coasting_at_rest(self):
        assert longitudinal_force(0.0, 0.0, DEFAULT_CAR) == -DEFAULT_CAR.Croll

    def test_full_throttle_at_rest(self):
        p = DEFAULT_CAR
        assert longitudinal_force(1.0, 0.0, p) == p.Cm1 - p.Croll

    def test_formula_grid(self):
        p = DEFAULT_CAR
        for d in np.linspace(-1, 1, 9):
            for vx in np.linspace(0, 12, 13):
                expect = (p.Cm1 - p.Cm2 * vx) * d - p.Croll - p.Cd * vx**2
                assert longitudinal_force(d, vx, p) == pytest.approx(expect, abs=1e-14)


class TestDerivatives:
    def test_at_rest_only_rolling_resistance(self):
        p = DEFAULT_CAR
        s = VehicleState(0, 0, 0, 0, 0, 0)
        d = derivatives(s, p.control(0.0, 0.0), p)
        assert d[3] == pytest.approx(-p.Croll / p.m)
        assert d[0] == d[1] == d[2] == d[4] == d[5] == 0.0

    def test_steady_straight_driving(self):
        p = DEFAULT_CAR
        s = VehicleState(3.0, -1.0, 0.0, vx=6.0, vy=0.0, omega=0.0)
        d = derivatives(s, p.control(0.3, 0.0), p)
        assert d[1] == 0.0  # y rate
        assert d[2] == 0.0  # phi rate
        assert d[5] == 0.0  # omega rate

    def test_matches_oracle_on_1000_random_states(self):
        rng = np.random.default_rng(42)
        p = DEFAULT_CAR
        front, rear = p.front_tire(), p.rear_tire()
        for s in random_states(rng, 1000):
            u = p.control(rng.uniform(-1, 1), rng.uniform(-p.delta_max, p.delta_max))
            got = np.array(derivatives(s, u, p, front, rear))
            want = eq2_oracle(s.as_tuple(), u.throttle, u.steer, p, front, rear)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_accepts_morphed_tires(self):
        p = DEFAULT_CAR
        s = VehicleState(0, 0, 0.2, vx=4.0, vy=0.4, omega=1.0)
        u = p.control(0.5, 0.2)
        soft = TireTriple(3.0, 1.1, 10.0)
        got = np.array(derivatives(s, u, p, soft, soft))
        want = eq2_oracle(s.as_tuple(), u.throttle, u.steer, p, soft, soft)
        np.testing.assert_allclose(got, want, atol=1e-12)


def rollout(state, control, params, dt, t_total):
    n = round(t_total / dt)
    for _ in range(n):
        state = step(state, control, params, dt=dt)
    return state


class TestStep:
    def test_fixed_point_without_rolling_resistance(self):
        p = VehicleParams(Croll=0.0)
        s = VehicleState(1.0, 2.0, 0.5, 0, 0, 0)
        s2 = step(s, p.control(0.0, 0.0), p, dt=0.02)
        assert s2 == s

    def test_rejects_bad_dt(self):
        s = VehicleState(0, 0, 0, 1, 0, 0)
        with pytest.raises(ValueError):
            step(s, DEFAULT_CAR.control(0, 0), DEFAULT_CAR, dt=0.1)
        with pytest.raises(ValueError):
            step(s, DEFAULT_CAR.control(0, 0), DEFAULT_CAR, dt=0.0)

    def test_rk4_convergence_order(self):
        # Constant-control smooth ODE; Richardson study against a dt/16 reference.
        p = DEFAULT_CAR
        u = p.control(0.6, 0.15)
        s0 = VehicleState(0, 0, 0, vx=3.0, vy=0.0, omega=0.0)
        dt = 0.02
        ref = rollout(s0, u, p, dt / 16, 1.0)

        def err(d):
            s = rollout(s0, u, p, d, 1.0)
            return math.hypot(s.x - ref.x, s.y - ref.y)

        order = math.log2(err(dt) / err(dt / 2))
        assert order >= 3.8

    def test_self_refinement_error_budget(self):
        p = DEFAULT_CAR
        u = p.control(0.8, 0.1)
        s0 = VehicleState(0, 0, 0, vx=2.0, vy=0.0, omega=0.0)
        coarse = rollout(s0, u, p, 0.01, 1.0)
        fine = rollout(s0, u, p, 0.001, 1.0)
        assert math.hypot(coarse.x - fine.x, coarse.y - fine.y) < 1e-3

    def test_mirror_symmetry(self):
        # Negating (y, phi, vy, omega, delta) mirrors the trajectory exactly.
        p = DEFAULT_CAR
        s = VehicleState(0.0, 1.0, 0.3, vx=4.0, vy=0.2, omega=0.5)
        sm = VehicleState(0.0, -1.0, -0.3, vx=4.0, vy=-0.2, omega=-0.5)
        u = p.control(0.7, 0.12)
        um = p.control(0.7, -0.12)
        for _ in range(100):
            s = step(s, u, p, dt=0.02)
            sm = step(sm, um, p, dt=0.02)
        assert (sm.x, sm.y, sm.phi, sm.vx, sm.vy, sm.omega) == (
            s.x, -s.y, -s.phi, s.vx, -s.vy, -s.omega,
        )

    def test_nonfinite_blowup_detected(self):
        bad = VehicleParams(Iz=1e-12)
        s = VehicleState(0, 0, 0, vx=8.0, vy=1.0, omega=3.0)
        u = bad.control(1.0, 0.4)
        with pytest.raises(DivergedError):
            for _ in range(500):
                s = step(s, u, bad, dt=0.05)


class TestInvariants:
    def test_phi_normalized_on_construction(self):
        s = VehicleState(0, 0, 3 * math.pi, 1, 0, 0)
        assert -math.pi < s.phi <= math.pi
        assert s.phi == pytest.approx(math.pi)

    def test_control_clamped(self):
        u = Control(throttle=2.0, steer=-1.0, delta_max=0.4)
        assert u.throttle == 1.0
        assert u.steer == -0.4

    def test_params_validation(self):
        with pytest.raises(ValueError):
            VehicleParams(m=-1.0)
        with pytest.raises(ValueError):
            VehicleParams(Cf=2.5)
        with pytest.raises(ValueError):
            VehicleParams(Croll=-0.1)
