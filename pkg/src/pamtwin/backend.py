"""Kernel backend selection: compiled extension core with pure-Python fallback.

The hot kernels (plant step, sigma-point propagation, trajectory simulation)
exist twice: in the Cython extension ``pamtwin._core`` and as pure Python in
:mod:`pamtwin.plant`. The compiled core is used when importable; set
``PAMTWIN_BACKEND=python`` (or call :func:`force`) to pin the fallback.
Both paths perform the same IEEE-754 operations in the same order.
"""

from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

try:  # compiled extension is optional at runtime
    from . import _core
except ImportError:  # pragma: no cover - depends on build environment
    _core = None

_env = os.environ.get("PAMTWIN_BACKEND", "auto").lower()
if _env not in ("auto", "cython", "python"):
    raise RuntimeError(f"PAMTWIN_BACKEND must be auto|cython|python, got {_env!r}")
if _env == "cython" and _core is None:
    raise RuntimeError("PAMTWIN_BACKEND=cython but the compiled core is not importable")

_forced: str | None = None if _env == "auto" else _env


def available() -> tuple[str, ...]:
    return ("cython", "python") if _core is not None else ("python",)


def active() -> str:
    if _forced is not None:
        return _forced
    return "cython" if _core is not None else "python"


def forced() -> str | None:
    """The pinned backend name, or None under auto selection."""
    return _forced


def force(name: str | None) -> None:
    """Pin the backend ('cython' or 'python'); None restores auto selection."""
    global _forced
    if name is not None and name not in available():
        raise RuntimeError(f"backend {name!r} not available (have {available()})")
    _forced = name


@lru_cache(maxsize=128)
def _compiled_model(params, locked: bool):
    return _core.Model(
        (
            params.r_p, params.r, params.L0, params.M, params.g,
            params.P_tank, params.P_out, params.k, params.R, params.T,
            params.J, params.k_s, params.c_s,
            params.D1, params.D2, params.D3,
            params.p_v11, params.p_v21, params.p_w11, params.p_w21,
            params.p_v12, params.p_v22, params.p_w12, params.p_w22,
            params.A_11, params.A_21, params.A_12, params.A_22,
            params.k1, params.k2, params.Tp_coeff, params.mu_s,
            params.T_stp, params.l_min, params.l_max, params.p_floor,
        ),
        np.asarray([u for u, _ in params.open_rate_map1.breakpoints], dtype=np.float64),
        np.asarray([a for _, a in params.open_rate_map1.breakpoints], dtype=np.float64),
        np.asarray([u for u, _ in params.open_rate_map2.breakpoints], dtype=np.float64),
        np.asarray([a for _, a in params.open_rate_map2.breakpoints], dtype=np.float64),
        bool(locked),
    )


def stepper(params, locked: bool = False):
    """(x4, u2) -> x4 single-period stepper for the active backend."""
    if active() == "cython":
        model = _compiled_model(params, locked)
        return model.step
    from . import plant  # deferred: plant imports this module

    def _step(x, u, _params=params, _locked=locked):
        return plant.step_raw(x, u, _params, _locked)

    return _step


def propagate(points: np.ndarray, u, params, locked: bool = False) -> np.ndarray:
    """Apply one plant step to each row of ``points`` (m, 4); returns a new array."""
    out = np.empty_like(points, dtype=np.float64)
    if active() == "cython":
        model = _compiled_model(params, locked)
        model.propagate(np.ascontiguousarray(points, dtype=np.float64), float(u[0]), float(u[1]), out)
        return out
    step = stepper(params, locked)
    ut = (float(u[0]), float(u[1]))
    for i in range(points.shape[0]):
        out[i] = step((points[i, 0], points[i, 1], points[i, 2], points[i, 3]), ut)
    return out


def simulate(x0, U: np.ndarray, params, locked: bool = False, process_noise: np.ndarray | None = None) -> np.ndarray:
    """Roll the plant forward over an (N, 2) input sequence.

    Returns the (N+1, 4) state trajectory. ``process_noise`` (N, 4), when
    given, is added after each step with pressures re-clamped to their
    physical range.
    """
    U = np.ascontiguousarray(U, dtype=np.float64)
    n = U.shape[0]
    out = np.empty((n + 1, 4), dtype=np.float64)
    out[0] = np.asarray(x0, dtype=np.float64)
    if active() == "cython":
        model = _compiled_model(params, locked)
        noise = None if process_noise is None else np.ascontiguousarray(process_noise, dtype=np.float64)
        model.simulate(U, noise, out)
        return out
    step = stepper(params, locked)
    x = tuple(float(v) for v in out[0])
    for k in range(n):
        x = step(x, (U[k, 0], U[k, 1]))
        if process_noise is not None:
            x = (
                x[0] + process_noise[k, 0],
                x[1] + process_noise[k, 1],
                min(max(x[2] + process_noise[k, 2], params.P_out), params.P_tank),
                min(max(x[3] + process_noise[k, 3], params.P_out), params.P_tank),
            )
        out[k + 1] = x
    return out
