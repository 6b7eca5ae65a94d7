"""Physical and identified constants of the antagonistic joint, plus config I/O.

Defaults are the identified values of the bench rig this model family was
fitted on. All quantities are SI (absolute pressures in Pa, lengths in m,
angles in rad).
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass

from .errors import ConfigError
from .pneumatics import DEFAULT_OPEN_RATE_MAP, OpenRateMap


@dataclass(frozen=True)
class PamParams:
    r_p: float = 0.006          # shaft radius (m)
    r: float = 0.0365           # seesaw radius (m)
    L0: float = 0.165           # muscle length at horizontal seesaw (m)
    M: float = 0.256            # seesaw mass (kg)
    g: float = 9.80             # gravity (m/s^2)
    P_tank: float = 0.7100e6    # source absolute pressure (Pa)
    P_out: float = 0.1013e6     # atmospheric pressure (Pa)
    k: float = 1.40             # specific heat ratio (-)
    R: float = 287.0            # gas constant (J/(kg*K))
    T: float = 293.0            # air temperature (K)
    J: float = 4.263e-4         # joint inertia (kg*m^2)
    k_s: float = 4.117e-4       # static torque coefficient (N*m/rad)
    c_s: float = 2.256e-3       # viscous friction coefficient (N*s)
    D1: float = -2.440e-2       # volume polynomial coefficients (m, m^2, m^3)
    D2: float = 6.824e-3
    D3: float = -4.254e-4
    p_v11: float = 7.045e-3     # muscle 1 force coefficients (slope/intercept vs length)
    p_v21: float = -1.017e-3
    p_w11: float = -5.568e2
    p_w21: float = 72.86
    p_v12: float = 6.423e-3     # muscle 2 force coefficients
    p_v22: float = -9.184e-4
    p_w12: float = -197.8
    p_w22: float = -15.75
    A_11: float = 5.184e-8      # valve 1 orifice area, net-inflow direction (m^2)
    A_21: float = 7.776e-8      # valve 1 orifice area, net-outflow direction (m^2)
    A_12: float = 5.184e-8      # valve 2, net-inflow (m^2)
    A_22: float = 7.776e-8      # valve 2, net-outflow (m^2)
    k1: float = 1.100           # polytropic indexes (-)
    k2: float = 0.4545
    Tp_coeff: float = 4e8       # tube Coulomb coefficient (-)
    mu_s: float = 0.2           # shaft Coulomb coefficient (-)
    T_stp: float = 1e-3         # sampling period (s)
    l_min: float = 0.12         # volume-polynomial validity interval (m)
    l_max: float = 0.18
    p_floor: float = 1e3        # pressure floor above ambient for the tube Coulomb term (Pa)
    open_rate_map1: OpenRateMap = DEFAULT_OPEN_RATE_MAP
    open_rate_map2: OpenRateMap = DEFAULT_OPEN_RATE_MAP

    def __post_init__(self):
        positive = (
            "r_p r L0 M g P_tank P_out J k_s c_s A_11 A_21 A_12 A_22 "
            "k1 k2 R T T_stp l_min l_max p_floor mu_s"
        ).split()
        for name in positive:
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.Tp_coeff < 0.0:
            raise ConfigError("Tp_coeff must be non-negative")
        if self.P_tank <= self.P_out:
            raise ConfigError("P_tank must exceed P_out")
        if self.k <= 1.0:
            raise ConfigError("specific heat ratio must exceed 1")
        if not (self.l_min < self.L0 < self.l_max):
            raise ConfigError("length validity interval must contain L0")

    # -- derived quantities -------------------------------------------------

    @property
    def Z(self) -> float:
        """Friction-model scaling J/T_stp."""
        return self.J / self.T_stp

    @property
    def psi_max(self) -> float:
        """Largest |angle| keeping both muscle lengths inside the validity interval."""
        span = min(self.L0 - self.l_min, self.l_max - self.L0)
        return math.asin(min(1.0, span / self.r))

    def replace(self, **changes) -> "PamParams":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        """Short stable hash of all parameter values (recorded in trace metadata)."""
        parts = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, OpenRateMap):
                parts.append(f"{f.name}={v.breakpoints!r}")
            else:
                parts.append(f"{f.name}={v!r}")
        return hashlib.sha256(";".join(parts).encode()).hexdigest()[:12]


_SCALAR_FIELDS = {
    f.name: f for f in dataclasses.fields(PamParams) if f.type == "float"
}
_MAP_KEYS = ("open_rate_map", "open_rate_map1", "open_rate_map2")


def _parse_scalar(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"value for '{key}' is not a number: {raw!r}") from exc


def _apply_entries(entries: list[tuple[str, str]], base: PamParams) -> PamParams:
    changes: dict = {}
    for key, raw in entries:
        if key in _SCALAR_FIELDS:
            changes[key] = _parse_scalar(key, raw)
        elif key in _MAP_KEYS:
            table = OpenRateMap.from_file(raw)
            if key == "open_rate_map":
                changes["open_rate_map1"] = table
                changes["open_rate_map2"] = table
            else:
                changes[key] = table
        else:
            raise ConfigError(f"unknown parameter '{key}'")
    return base.replace(**changes)


def load_config(path, base: PamParams | None = None) -> PamParams:
    """Read a flat key=value config file ('#' comments). Unknown keys are errors."""
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = body.split("=", 1)
            entries.append((key.strip(), raw.strip()))
    return _apply_entries(entries, base or PamParams())


def apply_overrides(params: PamParams, assignments: list[str]) -> PamParams:
    """Apply repeatable 'param=value' overrides on top of ``params``."""
    entries = []
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override must look like param=value, got {item!r}")
        key, raw = item.split("=", 1)
        entries.append((key.strip(), raw.strip()))
    return _apply_entries(entries, params)
