"""Sensor-less PI tracking of joint angle or torque on filter estimates.

The controller is an antagonistic push-pull pair around a bias voltage:
u1 = (Ti/T_stp)*x_c + Tp*e + bias and u2 is its mirror, saturated to the
valve range. The loop feeds back the estimated angle/torque; encoder and
torque-meter signals enter the record only as evaluation truth.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import backend
from .errors import ConfigError
from .estimator import PamUkfEstimator
from .params import PamParams
from .plant import ControlInput

ANGLE_GAINS = (5.45, 1.55)   # (Tp, Ti) for angle tracking, error in degrees
TORQUE_GAINS = (7.45, 4.75)  # (Tp, Ti) for torque tracking, error in N*m


@dataclass(frozen=True)
class PiController:
    Tp: float
    Ti: float
    T_stp: float = 1e-3
    bias: tuple[float, float] = (5.5, 5.5)
    x_c: float = 0.0
    u_min: float = 0.0
    u_max: float = 10.0
    windup_limit: float | None = None

    def __post_init__(self):
        if self.u_min >= self.u_max:
            raise ConfigError("u_min must be below u_max")
        if self.windup_limit is None:
            # cap the integral term's authority at the full actuator span
            limit = (self.u_max - self.u_min) / (self.Ti / self.T_stp)
            object.__setattr__(self, "windup_limit", limit)


def pi_step(ctrl: PiController, e: float) -> tuple[ControlInput, PiController]:
    """One controller update; returns the saturated command and the next state."""
    if not math.isfinite(e):
        raise ConfigError(f"controller error must be finite, got {e}")
    v = (ctrl.Ti / ctrl.T_stp) * ctrl.x_c + ctrl.Tp * e
    u1_raw = v + ctrl.bias[0]
    u2_raw = -v + ctrl.bias[1]
    u1 = min(max(u1_raw, ctrl.u_min), ctrl.u_max)
    u2 = min(max(u2_raw, ctrl.u_min), ctrl.u_max)
    both_sat = (u1 != u1_raw) and (u2 != u2_raw)
    deepens = (v > 0.0 and e > 0.0) or (v < 0.0 and e < 0.0)
    if both_sat and deepens:
        x_new = ctrl.x_c  # conditional integration: hold while pinned
    else:
        x_new = ctrl.x_c + e
    lim = ctrl.windup_limit
    x_new = min(max(x_new, -lim), lim)
    return ControlInput(u1, u2), replace(ctrl, x_c=x_new)


def reference_to_array(reference, n: int, T_stp: float) -> np.ndarray:
    """Piecewise-constant reference sampled on the step grid (n+1 samples)."""
    ref = sorted(reference)
    if any(b[0] <= a[0] for a, b in zip(ref, ref[1:])):
        raise ConfigError("reference times must be strictly increasing")
    if not ref or ref[0][0] > 0.0:
        raise ConfigError("reference must start at t = 0")
    out = np.empty(n + 1, dtype=np.float64)
    j = 0
    for k in range(n + 1):
        t = k * T_stp
        while j + 1 < len(ref) and ref[j + 1][0] <= t:
            j += 1
        out[k] = ref[j][1]
    return out


def run_sensorless_loop(
    mode: str,
    reference,
    params: PamParams,
    noise=None,
    ctrl: PiController | None = None,
    seed: int = 0,
    error_unit: str = "deg",
    meas_noise: bool = True,
    process_noise: str = "scaled",
    collect_timing: bool = False,
    x0=None,
    duration: float | None = None,
):
    """Closed-loop run; returns (Trace, reference array).

    ``mode`` is "angle" (free joint, error in degrees by default) or "torque"
    (joint clamped at 0 deg, error in N*m). Truth columns are recorded for
    evaluation only; the loop feeds back estimates.
    """
    from .harness import _drawn_noise, _make_trace_array, _finish_trace

    if mode not in ("angle", "torque"):
        raise ConfigError(f"mode must be 'angle' or 'torque', got {mode!r}")
    locked = mode == "torque"
    if ctrl is None:
        gains = ANGLE_GAINS if mode == "angle" else TORQUE_GAINS
        ctrl = PiController(Tp=gains[0], Ti=gains[1], T_stp=params.T_stp)

    if duration is None:
        duration = max(t for t, _ in reference) if reference else 0.0
    n = int(round(duration / params.T_stp))
    if n <= 0:
        raise ConfigError("reference must span a positive duration")
    refs = reference_to_array(reference, n, params.T_stp)

    est = PamUkfEstimator(params, noise=noise, locked=locked)
    if x0 is None:
        mean = est.belief.mean
        x0 = (0.0, 0.0, float(mean[2]), float(mean[3]))
    proc, meas = _drawn_noise(params, n, seed, locked, meas_noise, process_noise)
    stepper = backend.stepper(params, locked)

    rows = _make_trace_array(n)
    x = tuple(float(v) for v in x0)
    rec = est.record()
    for k in range(n + 1):
        y = (x[2] + meas[k, 0], x[3] + meas[k, 1])
        cost = 0.0
        if k > 0:
            if collect_timing:
                t0 = time.perf_counter()
                rec = est.step(u_prev, y)
                cost = time.perf_counter() - t0
            else:
                rec = est.step(u_prev, y)
        fb = math.degrees(rec.psi_hat) if mode == "angle" else rec.tau_hat
        if mode == "angle" and error_unit == "rad":
            e = math.radians(refs[k]) - rec.psi_hat
        else:
            e = refs[k] - fb
        u, ctrl = pi_step(ctrl, e)
        _finish_trace(rows, k, params, x, u.as_tuple(), y, rec, ctrl.x_c, cost)
        if k < n:
            x = stepper(x, u.as_tuple())
            if proc is not None:
                x = (
                    x[0] + proc[k, 0],
                    x[1] + proc[k, 1],
                    min(max(x[2] + proc[k, 2], params.P_out), params.P_tank),
                    min(max(x[3] + proc[k, 3], params.P_out), params.P_tank),
                )
            u_prev = u.as_tuple()
    from .trace import Trace

    trace = Trace(
        data=rows,
        meta={
            "mode": f"control_{mode}",
            "seed": seed,
            "params": params.digest(),
            "reference": ";".join(f"{t}:{v}" for t, v in reference),
            "backend": backend.active(),
            "rejected_measurements": est.rejected_count,
        },
    )
    return trace, refs
