"""Nonlinear antagonistic-muscle joint model.

State x = [psi, psi_dot, P1, P2]: joint angle (rad), angular velocity (rad/s)
and the two muscle absolute pressures (Pa). One sampling period advances by

  1. computing the discrete Coulomb/viscous friction torque from the
     implicit-Euler velocity prediction (held constant over the step),
  2. integrating the continuous dynamics with classical 4-stage Runge-Kutta,
  3. forcing the velocity to exactly 0 in the stick regime (and whenever the
     frozen friction torque would reverse the sign of the motion it opposes),
  4. clamping pressures to [P_out, P_tank].

The piecewise structure (stick/slip, choked/unchoked, inflow/outflow orifice)
is realized by direct conditionals rather than an explicit mode table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import backend
from .errors import ConvergenceError, DomainError, StepFailure
from .params import PamParams
from .pneumatics import open_rate, pressure_rate, valve_mass_flow

HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class JointState:
    psi: float
    psi_dot: float
    P1: float
    P2: float

    def __post_init__(self):
        vals = (self.psi, self.psi_dot, self.P1, self.P2)
        if not all(math.isfinite(v) for v in vals):
            raise StepFailure(f"non-finite state {vals}")
        if abs(self.psi) > HALF_PI:
            raise DomainError(f"|psi| = {abs(self.psi):.3f} rad exceeds pi/2")
        if self.P1 <= 0.0 or self.P2 <= 0.0:
            raise DomainError("absolute pressures must be positive")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.psi, self.psi_dot, self.P1, self.P2)


@dataclass(frozen=True)
class ControlInput:
    """Valve command voltages, clamped to [0, 10] V on construction."""

    u1: float
    u2: float

    def __post_init__(self):
        object.__setattr__(self, "u1", min(10.0, max(0.0, self.u1)))
        object.__setattr__(self, "u2", min(10.0, max(0.0, self.u2)))

    def as_tuple(self) -> tuple[float, float]:
        return (self.u1, self.u2)


@dataclass(frozen=True)
class PlantOutput:
    psi: float
    P1: float
    P2: float
    tau: float


def muscle_lengths(psi: float, params: PamParams) -> tuple[float, float]:
    """Lengths of the two muscles at joint angle ``psi`` (l1 + l2 == 2*L0)."""
    dL = params.r * math.sin(psi)
    return params.L0 - dL, params.L0 + dL


def muscle_volume(l: float, params: PamParams) -> float:
    """Quadratic volume polynomial; rejects lengths outside the validity interval."""
    if not (params.l_min <= l <= params.l_max):
        raise DomainError(
            f"muscle length {l:.4f} m outside validity interval "
            f"[{params.l_min}, {params.l_max}] m"
        )
    return params.D1 * l * l + params.D2 * l + params.D3


def muscle_volume_rate(l: float, l_dot: float, params: PamParams) -> float:
    if not (params.l_min <= l <= params.l_max):
        raise DomainError(
            f"muscle length {l:.4f} m outside validity interval "
            f"[{params.l_min}, {params.l_max}] m"
        )
    return (2.0 * params.D1 * l + params.D2) * l_dot


def contraction_force(P: float, l: float, side: int, params: PamParams) -> float:
    """Contraction force, affine in pressure with length-dependent coefficients."""
    if side == 1:
        v = params.p_v11 * l + params.p_v21
        w = params.p_w11 * l + params.p_w21
    elif side == 2:
        v = params.p_v12 * l + params.p_v22
        w = params.p_w12 * l + params.p_w22
    else:
        raise DomainError(f"side must be 1 or 2, got {side}")
    return v * P + w


def joint_torque(psi: float, F1: float, F2: float, params: PamParams) -> float:
    return params.r * math.cos(psi) * (F1 - F2)


def coulomb_terms(
    F1: float, F2: float, P1: float, P2: float, params: PamParams
) -> tuple[float, float]:
    """Shaft and tube Coulomb torques (T_s, T_p), both non-negative.

    The tube term diverges as a pressure approaches ambient, so pressures are
    floored at P_out + p_floor; the rig never operates near atmospheric.
    """
    T_s = params.r_p * params.mu_s * abs(F1 + F2 - params.M * params.g)
    floor = params.P_out + params.p_floor
    P1e = P1 if P1 > floor else floor
    P2e = P2 if P2 > floor else floor
    d1 = P1e - params.P_out
    d2 = P2e - params.P_out
    T_p = params.Tp_coeff * (1.0 / (d1 * d1) + 1.0 / (d2 * d2))
    return T_s, T_p


def friction_torque(psi_dot_pred: float, T_s: float, T_p: float, params: PamParams) -> float:
    """Discrete friction torque from the predicted (friction-free) velocity.

    Slip when |prediction| exceeds Z*(T_s+T_p) with Z = J/T_stp; otherwise the
    stick value cancels the prediction so the joint halts.
    """
    Z = params.J / params.T_stp
    T_c = T_s + T_p
    if abs(psi_dot_pred) > Z * T_c:
        return (T_c * math.copysign(1.0, psi_dot_pred) + params.c_s * psi_dot_pred) / (
            1.0 + Z * params.c_s
        )
    return psi_dot_pred / Z


def _derivative_raw(
    x: tuple[float, float, float, float],
    u: tuple[float, float],
    T_f: float,
    params: PamParams,
) -> tuple[float, float, float, float]:
    psi, psi_dot, P1, P2 = x
    l1, l2 = muscle_lengths(psi, params)
    V1 = muscle_volume(l1, params)
    V2 = muscle_volume(l2, params)
    l1_dot = -params.r * math.cos(psi) * psi_dot
    V1_dot = (2.0 * params.D1 * l1 + params.D2) * l1_dot
    V2_dot = (2.0 * params.D1 * l2 + params.D2) * (-l1_dot)
    F1 = contraction_force(P1, l1, 1, params)
    F2 = contraction_force(P2, l2, 2, params)
    tau = joint_torque(psi, F1, F2, params)
    m1 = valve_mass_flow(u[0], P1, 1, params).m
    m2 = valve_mass_flow(u[1], P2, 2, params).m
    return (
        psi_dot,
        (tau - T_f - params.k_s * psi) / params.J,
        pressure_rate(P1, V1, V1_dot, m1, params),
        pressure_rate(P2, V2, V2_dot, m2, params),
    )


def state_derivative(x, u, T_f: float, params: PamParams):
    """Continuous-time state rate at state ``x``, input ``u`` and frozen friction ``T_f``."""
    xt = x.as_tuple() if isinstance(x, JointState) else tuple(x)
    ut = u.as_tuple() if isinstance(u, ControlInput) else tuple(u)
    return _derivative_raw(xt, ut, T_f, params)


def step_raw(
    x: tuple[float, float, float, float],
    u: tuple[float, float],
    params: PamParams,
    locked: bool = False,
) -> tuple[float, float, float, float]:
    """Advance one sampling period (pure-Python reference path).

    ``locked`` freezes the joint (angle held, velocity 0) and integrates the
    pressure channels only, as on a rig with the joint clamped.
    """
    psi, psi_dot, P1, P2 = x
    h = params.T_stp

    if locked:
        l1, l2 = muscle_lengths(psi, params)
        V1 = muscle_volume(l1, params)
        V2 = muscle_volume(l2, params)

        def dp(p1: float, p2: float) -> tuple[float, float]:
            m1 = valve_mass_flow(u[0], p1, 1, params).m
            m2 = valve_mass_flow(u[1], p2, 2, params).m
            return (
                params.k1 * params.R * params.T / V1 * m1,
                params.k1 * params.R * params.T / V2 * m2,
            )

        a1, b1 = dp(P1, P2)
        a2, b2 = dp(P1 + 0.5 * h * a1, P2 + 0.5 * h * b1)
        a3, b3 = dp(P1 + 0.5 * h * a2, P2 + 0.5 * h * b2)
        a4, b4 = dp(P1 + h * a3, P2 + h * b3)
        P1n = P1 + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        P2n = P2 + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if not (math.isfinite(P1n) and math.isfinite(P2n)):
            raise StepFailure(f"locked step produced non-finite pressures from {x}")
        P1n = min(max(P1n, params.P_out), params.P_tank)
        P2n = min(max(P2n, params.P_out), params.P_tank)
        return (psi, 0.0, P1n, P2n)

    # friction torque for this period, from the implicit-Euler prediction
    l1, l2 = muscle_lengths(psi, params)
    F1 = contraction_force(P1, l1, 1, params)
    F2 = contraction_force(P2, l2, 2, params)
    tau = joint_torque(psi, F1, F2, params)
    T0 = tau - params.k_s * psi
    pred = psi_dot + T0 * h / params.J
    T_s, T_p = coulomb_terms(F1, F2, P1, P2, params)
    Z = params.J / h
    stick = abs(pred) <= Z * (T_s + T_p)
    T_f = friction_torque(pred, T_s, T_p, params)

    k1v = _derivative_raw(x, u, T_f, params)
    x2 = (
        psi + 0.5 * h * k1v[0],
        psi_dot + 0.5 * h * k1v[1],
        P1 + 0.5 * h * k1v[2],
        P2 + 0.5 * h * k1v[3],
    )
    k2v = _derivative_raw(x2, u, T_f, params)
    x3 = (
        psi + 0.5 * h * k2v[0],
        psi_dot + 0.5 * h * k2v[1],
        P1 + 0.5 * h * k2v[2],
        P2 + 0.5 * h * k2v[3],
    )
    k3v = _derivative_raw(x3, u, T_f, params)
    x4 = (
        psi + h * k3v[0],
        psi_dot + h * k3v[1],
        P1 + h * k3v[2],
        P2 + h * k3v[3],
    )
    k4v = _derivative_raw(x4, u, T_f, params)
    psi_n = psi + h / 6.0 * (k1v[0] + 2.0 * k2v[0] + 2.0 * k3v[0] + k4v[0])
    vel_n = psi_dot + h / 6.0 * (k1v[1] + 2.0 * k2v[1] + 2.0 * k3v[1] + k4v[1])
    P1n = P1 + h / 6.0 * (k1v[2] + 2.0 * k2v[2] + 2.0 * k3v[2] + k4v[2])
    P2n = P2 + h / 6.0 * (k1v[3] + 2.0 * k2v[3] + 2.0 * k3v[3] + k4v[3])

    if stick:
        vel_n = 0.0
    elif T_f * vel_n < 0.0:
        # the frozen friction torque may not reverse the motion it opposes
        vel_n = 0.0

    if not (
        math.isfinite(psi_n)
        and math.isfinite(vel_n)
        and math.isfinite(P1n)
        and math.isfinite(P2n)
    ):
        raise StepFailure(f"step produced non-finite state from {x}")
    P1n = min(max(P1n, params.P_out), params.P_tank)
    P2n = min(max(P2n, params.P_out), params.P_tank)
    return (psi_n, vel_n, P1n, P2n)


def step(state: JointState, u: ControlInput, params: PamParams, locked: bool = False) -> JointState:
    """Advance one sampling period through the active backend."""
    stepper = backend.stepper(params, locked)
    return JointState(*stepper(state.as_tuple(), u.as_tuple()))


def output(state: JointState, params: PamParams) -> PlantOutput:
    """Measured outputs [psi, P1, P2, tau] at the given state."""
    l1, l2 = muscle_lengths(state.psi, params)
    F1 = contraction_force(state.P1, l1, 1, params)
    F2 = contraction_force(state.P2, l2, 2, params)
    return PlantOutput(
        psi=state.psi,
        P1=state.P1,
        P2=state.P2,
        tau=joint_torque(state.psi, F1, F2, params),
    )


def steady_state(
    u: ControlInput,
    params: PamParams,
    x0: JointState | None = None,
    vel_tol: float = 1e-5,
    rate_tol: float = 1.0,
    hold_time: float = 1.0,
    timeout: float = 60.0,
) -> tuple[float, float, float]:
    """Settled (psi, P1, P2) under constant input ``u``.

    Simulates from ``x0`` (default: rest with both muscles at ambient) until
    |psi_dot| < vel_tol and |dP/dt| < rate_tol hold for ``hold_time`` seconds
    of model time; raises after ``timeout`` seconds of model time.
    """
    if x0 is None:
        x0 = JointState(0.0, 0.0, params.P_out, params.P_out)
    ut = u.as_tuple() if isinstance(u, ControlInput) else tuple(u)
    stepper = backend.stepper(params, False)
    x = x0.as_tuple()
    needed = max(1, int(round(hold_time / params.T_stp)))
    max_steps = int(round(timeout / params.T_stp))
    quiet = 0
    for _ in range(max_steps):
        x = stepper(x, ut)
        d = _derivative_raw(x, ut, 0.0, params)
        if abs(x[1]) < vel_tol and abs(d[2]) < rate_tol and abs(d[3]) < rate_tol:
            quiet += 1
            if quiet >= needed:
                return (x[0], x[2], x[3])
        else:
            quiet = 0
    raise ConvergenceError(
        f"no steady state within {timeout} s of model time for u = {ut}"
    )


def rise_time_90(
    u: ControlInput,
    params: PamParams,
    x0: JointState | None = None,
    muscle: int = 1,
    horizon: float = 60.0,
) -> float:
    """Time for the selected muscle pressure to cross 90% of its total change."""
    if x0 is None:
        x0 = JointState(0.0, 0.0, params.P_out, params.P_out)
    idx = 2 if muscle == 1 else 3
    p_start = x0.as_tuple()[idx]
    ut = u.as_tuple() if isinstance(u, ControlInput) else tuple(u)
    _, p1_bar, p2_bar = steady_state(u, params, x0=x0, timeout=horizon)
    p_final = p1_bar if muscle == 1 else p2_bar
    target = p_start + 0.9 * (p_final - p_start)
    stepper = backend.stepper(params, False)
    x = x0.as_tuple()
    n = int(round(horizon / params.T_stp))
    rising = p_final >= p_start
    for i in range(1, n + 1):
        x = stepper(x, ut)
        if (rising and x[idx] >= target) or (not rising and x[idx] <= target):
            return i * params.T_stp
    raise ConvergenceError(f"pressure never crossed 90% of its change for u = {ut}")
