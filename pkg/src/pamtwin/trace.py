"""Time-indexed experiment records, CSV persistence, and accuracy metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

# Fixed column set and order; every consumer reads traces by these names.
COLUMNS = (
    "t",
    "u1",
    "u2",
    "psi",
    "psi_dot",
    "P1",
    "P2",
    "tau",
    "P1_meas",
    "P2_meas",
    "psi_hat",
    "tau_hat",
    "P1_hat",
    "P2_hat",
    "F1_hat",
    "F2_hat",
    "ctrl_x",
    "step_cost",
)
_IDX = {name: i for i, name in enumerate(COLUMNS)}


@dataclass
class Trace:
    """One row per sampling period: truth, measurements, estimates, controller state."""

    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[1] != len(COLUMNS):
            raise ConfigError(f"trace needs {len(COLUMNS)} columns, got shape {self.data.shape}")

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, _IDX[name]]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key}: {self.meta[key]}\n")
            fh.write(",".join(COLUMNS) + "\n")
            for row in self.data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trace":
        meta: dict = {}
        rows = []
        header = None
        with open(path) as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("#"):
                    body = line[1:].strip()
                    if ":" in body:
                        key, val = body.split(":", 1)
                        meta[key.strip()] = val.strip()
                    continue
                if header is None:
                    header = tuple(line.split(","))
                    if header != COLUMNS:
                        raise ConfigError(f"unexpected trace header in {path}")
                    continue
                rows.append([float(v) for v in line.split(",")])
        if header is None:
            raise ConfigError(f"{path} contains no trace data")
        return cls(data=np.asarray(rows, dtype=np.float64), meta=meta)


# -- accuracy metrics --------------------------------------------------------
#
# The root-mean-square metric divides the k = 0..N sum by N (not N+1), so a
# constant series c evaluates to c*sqrt((N+1)/N). Kept that way deliberately;
# callers wanting the conventional RMSE can divide by sqrt((N+1)/N).


def metric_rmse(z) -> float:
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0] - 1
    if n < 1:
        raise DomainError("rmse needs at least two samples")
    return math.sqrt(float(np.sum(z * z)) / n)


def metric_linf(z) -> float:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] == 0:
        raise DomainError("linf needs a non-empty series")
    return float(np.max(np.abs(z)))


def metric_ratio(z, xi) -> float:
    """Peak error over the peak-to-peak span of the reference signal ``xi``."""
    xi = np.asarray(xi, dtype=np.float64)
    span = float(np.max(xi) - np.min(xi))
    if span <= 0.0:
        raise DomainError("reference signal is flat; error ratio undefined")
    return metric_linf(z) / span


@dataclass(frozen=True)
class SignalMetrics:
    rmse: float
    linf: float
    ratio: float | None = None


@dataclass
class Metrics:
    signals: dict = field(default_factory=dict)

    def add(self, name: str, z, xi=None, allow_flat: bool = False) -> "SignalMetrics":
        """Record metrics for one signal; ``allow_flat`` skips the ratio when
        the reference has no span (e.g. the angle of a clamped joint)."""
        ratio = None
        if xi is not None:
            try:
                ratio = metric_ratio(z, xi)
            except DomainError:
                if not allow_flat:
                    raise
        sm = SignalMetrics(rmse=metric_rmse(z), linf=metric_linf(z), ratio=ratio)
        self.signals[name] = sm
        return sm

    def to_text(self) -> str:
        lines = []
        for name in sorted(self.signals):
            sm = self.signals[name]
            lines.append(f"{name}.rmse = {sm.rmse!r}")
            lines.append(f"{name}.linf = {sm.linf!r}")
            if sm.ratio is not None:
                lines.append(f"{name}.ratio = {sm.ratio!r}")
        return "\n".join(lines) + "\n"
