"""Valve and gas dynamics: open-rate map, orifice mass flow, pressure rate.

Each proportional valve splits between a supply path and an exhaust path
according to an open rate ``alpha`` in [0, 1] (a monotone function of the
command voltage). Orifice flow switches between a sonic (choked) branch and a
subsonic branch at the critical pressure ratio (2/(k+1))**(k/(k-1)); the two
branches join at the flux maximum, so the flow is smooth there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import CalibrationError, ConfigError, DomainError

if TYPE_CHECKING:  # pragma: no cover
    from .params import PamParams

CHOKED = "choked"
UNCHOKED = "unchoked"


@dataclass(frozen=True)
class OpenRateMap:
    """Piecewise-linear voltage -> open-rate table, clamped outside its span.

    Breakpoint voltages must be strictly increasing and open rates
    non-decreasing within [0, 1].
    """

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.breakpoints:
            raise ConfigError("open-rate map needs at least one breakpoint")
        us = [u for u, _ in self.breakpoints]
        alphas = [a for _, a in self.breakpoints]
        if any(b <= a for a, b in zip(us, us[1:])):
            raise ConfigError("open-rate map voltages must be strictly increasing")
        if any(b < a for a, b in zip(alphas, alphas[1:])):
            raise ConfigError("open-rate map must be monotone non-decreasing")
        if alphas[0] < 0.0 or alphas[-1] > 1.0:
            raise ConfigError("open rates must lie in [0, 1]")

    def __call__(self, u: float) -> float:
        pts = self.breakpoints
        if u <= pts[0][0]:
            return pts[0][1]
        if u >= pts[-1][0]:
            return pts[-1][1]
        for (u0, a0), (u1, a1) in zip(pts, pts[1:]):
            if u <= u1:
                return a0 + (a1 - a0) * (u - u0) / (u1 - u0)
        return pts[-1][1]  # unreachable

    def to_file(self, path) -> None:
        """Write as a two-column plain-text table (voltage, open rate)."""
        with open(path, "w") as fh:
            fh.write("# voltage_V open_rate\n")
            for u, a in self.breakpoints:
                fh.write(f"{u!r} {a!r}\n")

    @classmethod
    def from_file(cls, path) -> "OpenRateMap":
        pts = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                cols = body.split()
                if len(cols) != 2:
                    raise ConfigError(f"{path}:{lineno}: expected 'voltage open_rate'")
                try:
                    pts.append((float(cols[0]), float(cols[1])))
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        return cls(tuple(pts))


# Default: linear between full-closed at 1 V and full-open at 10 V, i.e.
# symmetric about 5.5 V with alpha(5.5) = 0.5. Quantitative work should
# replace this with a calibrated map.
DEFAULT_OPEN_RATE_MAP = OpenRateMap(((1.0, 0.0), (10.0, 1.0)))


def open_rate(u: float, table: OpenRateMap) -> float:
    """Open rate for command voltage ``u`` (clamped piecewise-linear lookup)."""
    return table(u)


def choked_pressure_ratio(k: float) -> float:
    """Critical downstream/upstream pressure ratio (2/(k+1))**(k/(k-1))."""
    return (2.0 / (k + 1.0)) ** (k / (k - 1.0))


def mass_flow_in(P: float, A0: float, params: "PamParams") -> float:
    """Supply-path mass flow (tank at P_tank upstream, muscle at P downstream).

    ``P`` is clamped to [P_out, P_tank]; integrator substeps and sigma points
    may momentarily overshoot the physical range, where the flow saturates.
    """
    P = min(max(P, params.P_out), params.P_tank)
    k = params.k
    crit = choked_pressure_ratio(k)
    coef = A0 * params.P_tank / math.sqrt(params.T)
    if P <= params.P_tank * crit:
        return coef * math.sqrt(k / params.R * (2.0 / (k + 1.0)) ** ((k + 1.0) / (k - 1.0)))
    ratio = P / params.P_tank
    return (
        coef
        * math.sqrt(2.0 * k / (params.R * (k - 1.0)))
        * ratio ** (1.0 / k)
        * math.sqrt(1.0 - ratio ** ((k - 1.0) / k))
    )


def mass_flow_out(P: float, A0: float, params: "PamParams") -> float:
    """Exhaust-path mass flow (muscle at P upstream, atmosphere downstream).

    ``P`` is clamped to [P_out, P_tank] as in :func:`mass_flow_in`.
    """
    P = min(max(P, params.P_out), params.P_tank)
    k = params.k
    crit = choked_pressure_ratio(k)
    coef = A0 * P / math.sqrt(params.T)
    if params.P_out <= P * crit:
        return coef * math.sqrt(k / params.R * (2.0 / (k + 1.0)) ** ((k + 1.0) / (k - 1.0)))
    ratio = params.P_out / P
    return (
        coef
        * math.sqrt(2.0 * k / (params.R * (k - 1.0)))
        * ratio ** (1.0 / k)
        * math.sqrt(1.0 - ratio ** ((k - 1.0) / k))
    )


def flow_regimes(P: float, params: "PamParams") -> tuple[str, str]:
    """(supply, exhaust) regime labels at muscle pressure ``P``."""
    crit = choked_pressure_ratio(params.k)
    reg_in = CHOKED if P <= params.P_tank * crit else UNCHOKED
    reg_out = CHOKED if params.P_out <= P * crit else UNCHOKED
    return reg_in, reg_out


@dataclass(frozen=True)
class FlowResult:
    """Net valve flow with the branch regimes and the orifice area used."""

    m: float
    m_in: float
    m_out: float
    regime_in: str
    regime_out: str
    A_used: float
    alpha: float


def valve_mass_flow(u: float, P: float, valve_index: int, params: "PamParams") -> FlowResult:
    """Net mass flow into muscle ``valve_index`` for command voltage ``u``.

    The orifice area depends on the net flow direction. Since the sign of
    alpha*m_in - (1-alpha)*m_out is invariant to positive scaling of the
    area, a probe at the inflow-direction area resolves the direction
    exactly before the final evaluation.
    """
    if valve_index not in (1, 2):
        raise ConfigError(f"valve_index must be 1 or 2, got {valve_index}")
    table = params.open_rate_map1 if valve_index == 1 else params.open_rate_map2
    alpha = table(u)
    A_fwd = params.A_11 if valve_index == 1 else params.A_12
    A_rev = params.A_21 if valve_index == 1 else params.A_22
    probe = alpha * mass_flow_in(P, A_fwd, params) - (1.0 - alpha) * mass_flow_out(P, A_fwd, params)
    A0 = A_fwd if probe > 0.0 else A_rev
    mi = mass_flow_in(P, A0, params)
    mo = mass_flow_out(P, A0, params)
    reg_in, reg_out = flow_regimes(P, params)
    return FlowResult(
        m=alpha * mi - (1.0 - alpha) * mo,
        m_in=mi,
        m_out=mo,
        regime_in=reg_in,
        regime_out=reg_out,
        A_used=A0,
        alpha=alpha,
    )


def pressure_rate(P: float, V: float, V_dot: float, m: float, params: "PamParams") -> float:
    """Pressure rate from the gas energy balance: k1*R*T*m/V - k2*(V_dot/V)*P."""
    if V <= 0.0:
        raise DomainError(f"muscle volume must be positive, got {V}")
    return params.k1 * params.R * params.T / V * m - params.k2 * (V_dot / V) * P


def balance_pressure(alpha: float, params: "PamParams", tol: float = 1e-3) -> float:
    """Steady pressure where alpha*m_in == (1-alpha)*m_out.

    Independent of the orifice area (both branches scale with the same A0)
    and of the polytropic indexes, so it characterizes the valve alone.
    """
    if alpha <= 0.0:
        return params.P_out
    if alpha >= 1.0:
        return params.P_tank
    lo, hi = params.P_out, params.P_tank
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f = alpha * mass_flow_in(mid, 1.0, params) - (1.0 - alpha) * mass_flow_out(mid, 1.0, params)
        if f > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def balance_table(params: "PamParams", grid: int = 201) -> tuple[list[float], list[float]]:
    """(alpha, steady pressure) tabulated on a uniform open-rate grid."""
    alphas = [i / (grid - 1) for i in range(grid)]
    pressures = [balance_pressure(a, params) for a in alphas]
    return alphas, pressures


def calibrate_open_rate_map(
    steady_pressure_data: Iterable[tuple[float, float]],
    params: "PamParams",
    grid: int = 201,
) -> OpenRateMap:
    """Build a voltage -> open-rate map from measured (voltage, steady pressure) pairs.

    Sweeps the open rate over [0, 1], tabulating the steady pressure each value
    settles to, then inverts that table at each datum and joins the resulting
    (voltage, open rate) points piecewise-linearly. Non-monotone inversions are
    clipped isotonically (running maximum over increasing voltage).
    """
    data = sorted(steady_pressure_data)
    if not data:
        raise CalibrationError("no calibration data")
    us = [u for u, _ in data]
    if any(b <= a for a, b in zip(us, us[1:])):
        raise CalibrationError("calibration voltages must be distinct")
    alphas, pressures = balance_table(params, grid)
    p_lo, p_hi = pressures[0], pressures[-1]
    points = []
    prev_alpha = 0.0
    for u, p_bar in data:
        if not (p_lo <= p_bar <= p_hi):
            raise CalibrationError(
                f"datum (u={u} V, P={p_bar} Pa) outside achievable steady range "
                f"[{p_lo:.0f}, {p_hi:.0f}] Pa"
            )
        # linear interpolation of the inverse on the sweep table
        j = next(i for i in range(1, len(pressures)) if pressures[i] >= p_bar)
        p0, p1 = pressures[j - 1], pressures[j]
        a0, a1 = alphas[j - 1], alphas[j]
        alpha = a0 if p1 == p0 else a0 + (a1 - a0) * (p_bar - p0) / (p1 - p0)
        alpha = max(alpha, prev_alpha)  # isotonic clip
        prev_alpha = alpha
        points.append((u, alpha))
    return OpenRateMap(tuple(points))
