"""Pressure-only state estimation for the antagonistic joint.

Binds the unscented filter to the plant model with the 2-of-4 measurement
selector (the two muscle pressures); angle, velocity, forces and torque come
out as derived estimates. The encoder/torque-meter signals are never read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .params import PamParams
from .plant import HALF_PI, contraction_force, joint_torque, muscle_lengths
from .pneumatics import balance_pressure
from .ukf import GaussianBelief, NoiseSpec, predict, update

# Filter tuning for the free-joint experiments.
DEFAULT_P0_DIAG = (1e-5, 1e-4, 1e6, 1e6)
DEFAULT_Q_DIAG = (1e-5, 1e-4, 1e6, 1e6)
DEFAULT_R_DIAG = (1e8, 1e8)
# With the joint clamped, angle and velocity carry (almost) no process noise;
# non-zero floor keeps the covariance positive definite.
LOCKED_P0_DIAG = (1e-12, 1e-12, 1e6, 1e6)
LOCKED_Q_DIAG = (1e-12, 1e-12, 1e6, 1e6)


def measurement_map(x) -> np.ndarray:
    """Measured outputs: the two muscle pressures only."""
    return np.asarray((x[2], x[3]), dtype=np.float64)


def default_noise(locked: bool = False) -> NoiseSpec:
    q = LOCKED_Q_DIAG if locked else DEFAULT_Q_DIAG
    return NoiseSpec(Q=np.diag(q), R=np.diag(DEFAULT_R_DIAG))


def default_initial_belief(params: PamParams, locked: bool = False) -> GaussianBelief:
    """Rest at zero angle with both pressures at the 5.5 V steady value."""
    p_bar = balance_pressure(params.open_rate_map1(5.5), params)
    p0 = LOCKED_P0_DIAG if locked else DEFAULT_P0_DIAG
    return GaussianBelief(
        mean=np.array([0.0, 0.0, p_bar, p_bar]),
        cov=np.diag(p0),
    )


@dataclass
class EstimateRecord:
    psi_hat: float
    psi_dot_hat: float
    P1_hat: float
    P2_hat: float
    F1_hat: float
    F2_hat: float
    tau_hat: float
    belief: GaussianBelief
    rejected: bool = False


class PamUkfEstimator:
    """Stepwise pressure-only estimator around the plant process model.

    One instance per measurement stream; nothing is shared between instances.
    Measurements outside [P_out - 3*sigma_R, P_tank + 3*sigma_R] are rejected
    (belief advanced by prediction only) unless ``sanity_band`` is disabled.
    """

    def __init__(
        self,
        params: PamParams,
        noise: NoiseSpec | None = None,
        kappa: float = 0.0,
        initial_belief: GaussianBelief | None = None,
        locked: bool = False,
        sanity_band: bool = True,
    ):
        self.params = params
        self.locked = locked
        self.noise = noise if noise is not None else default_noise(locked)
        self.kappa = kappa
        self.sanity_band = sanity_band
        self.belief = initial_belief if initial_belief is not None else default_initial_belief(params, locked)
        self.rejected_count = 0
        sigmas = np.sqrt(np.diag(self.noise.R))
        self._band_lo = params.P_out - 3.0 * sigmas
        self._band_hi = params.P_tank + 3.0 * sigmas

    def _propagate(self, points: np.ndarray, u) -> np.ndarray:
        return backend.propagate(points, u, self.params, self.locked)

    def _project(self, mean: np.ndarray) -> np.ndarray:
        p = self.params
        mean[0] = min(max(mean[0], -HALF_PI), HALF_PI)
        mean[2] = min(max(mean[2], p.P_out), p.P_tank)
        mean[3] = min(max(mean[3], p.P_out), p.P_tank)
        return mean

    def record(self) -> EstimateRecord:
        """Derived estimates at the current belief mean."""
        mean = self.belief.mean
        psi_hat = float(mean[0])
        l1, l2 = muscle_lengths(psi_hat, self.params)
        F1 = contraction_force(float(mean[2]), l1, 1, self.params)
        F2 = contraction_force(float(mean[3]), l2, 2, self.params)
        return EstimateRecord(
            psi_hat=psi_hat,
            psi_dot_hat=float(mean[1]),
            P1_hat=float(mean[2]),
            P2_hat=float(mean[3]),
            F1_hat=F1,
            F2_hat=F2,
            tau_hat=joint_torque(psi_hat, F1, F2, self.params),
            belief=self.belief,
        )

    def step(self, u, y) -> EstimateRecord:
        """Advance one sampling period with input ``u`` and measured pressures ``y``."""
        ut = (float(u[0]), float(u[1]))
        y = np.asarray(y, dtype=np.float64)
        if not np.all(np.isfinite(y)):
            raise ValueError(f"non-finite measurement {y}")
        prior = predict(
            self.belief, ut, self.noise, f=None, kappa=self.kappa, propagate=self._propagate
        )
        rejected = bool(
            self.sanity_band and (np.any(y < self._band_lo) or np.any(y > self._band_hi))
        )
        if rejected:
            self.rejected_count += 1
            self.belief = prior
        else:
            self.belief = update(prior, y, self.noise, measurement_map, self.kappa)
        self.belief.mean = self._project(self.belief.mean)
        rec = self.record()
        rec.rejected = rejected
        return rec


def estimate_step(state, u, y, params: PamParams, noise: NoiseSpec | None = None, **kw):
    """One-shot functional form: build/advance an estimator from a record's belief."""
    est = PamUkfEstimator(params, noise=noise, initial_belief=state.belief, **kw)
    return est.step(u, y)
