"""Model-generic unscented Kalman filter (additive noise form).

Sigma points carry the Gaussian belief through arbitrary process/measurement
maps; no Jacobians needed. For linear maps the unscented transform is exact,
so the filter reproduces the classical Kalman recursion for any scaling
parameter kappa > -n.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateCovariance


@dataclass
class GaussianBelief:
    """Mean vector and symmetric positive-semidefinite covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ValueError(f"covariance shape {self.cov.shape} does not match state dim {n}")


@dataclass
class NoiseSpec:
    """Process covariance Q (n x n) and measurement covariance R (m x m)."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)


@dataclass
class SigmaSet:
    points: np.ndarray   # (2n+1, n)
    weights: np.ndarray  # (2n+1,)
    kappa: float


def _symmetrize(C: np.ndarray) -> np.ndarray:
    return 0.5 * (C + C.T)


def _sqrt_factor(A: np.ndarray) -> np.ndarray:
    """Lower-triangular factor S with S @ S.T == A, with jitter retries."""
    jitter = 1e-12 * np.trace(A) / A.shape[0]
    for attempt in range(4):
        try:
            bump = 0.0 if attempt == 0 else jitter * 10.0 ** (attempt - 1)
            return np.linalg.cholesky(A + bump * np.eye(A.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise DegenerateCovariance("covariance factorization failed after jitter retries")


def sigma_points(belief: GaussianBelief, kappa: float = 0.0) -> SigmaSet:
    """2n+1 symmetric sample points encoding the belief.

    Point 0 is the mean; points i and i+n sit at mean +/- column i of the
    factor of (n+kappa)*cov. Weights: kappa/(n+kappa) for the mean point,
    1/(2(n+kappa)) elsewhere; they sum to 1 for any kappa > -n.
    """
    n = belief.mean.shape[0]
    if kappa <= -n:
        raise ValueError(f"kappa must exceed -n = {-n}")
    S = _sqrt_factor((n + kappa) * _symmetrize(belief.cov))
    pts = np.empty((2 * n + 1, n), dtype=np.float64)
    pts[0] = belief.mean
    for i in range(n):
        pts[1 + i] = belief.mean + S[:, i]
        pts[1 + n + i] = belief.mean - S[:, i]
    weights = np.full(2 * n + 1, 1.0 / (2.0 * (n + kappa)))
    weights[0] = kappa / (n + kappa)
    return SigmaSet(points=pts, weights=weights, kappa=kappa)


def _moments(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = weights @ points
    dev = points - mean
    cov = (weights[:, None] * dev).T @ dev
    return mean, cov


def predict(
    belief: GaussianBelief,
    u,
    noise: NoiseSpec,
    f: Callable,
    kappa: float = 0.0,
    propagate: Callable | None = None,
) -> GaussianBelief:
    """Propagate the belief through the process model f(x, u).

    ``propagate``, when given, maps the whole (2n+1, n) point array in one
    call (compiled batch path); otherwise ``f`` is applied per point.
    """
    sig = sigma_points(belief, kappa)
    if propagate is not None:
        prop = propagate(sig.points, u)
    else:
        prop = np.stack([np.asarray(f(x, u), dtype=np.float64) for x in sig.points])
    mean, cov = _moments(prop, sig.weights)
    return GaussianBelief(mean=mean, cov=_symmetrize(cov + noise.Q))


def update(
    prior: GaussianBelief,
    y,
    noise: NoiseSpec,
    g: Callable,
    kappa: float = 0.0,
) -> GaussianBelief:
    """Condition the prior on measurement ``y`` through the map g(x).

    Sigma points are regenerated from the prior before the measurement
    transform. The gain is P_xy @ P_yy^-1 with P_yy already including R.
    """
    y = np.asarray(y, dtype=np.float64)
    sig = sigma_points(prior, kappa)
    obs = np.stack([np.asarray(g(x), dtype=np.float64) for x in sig.points])
    y_hat = sig.weights @ obs
    dy = obs - y_hat
    P_yy = (sig.weights[:, None] * dy).T @ dy + noise.R
    dx = sig.points - prior.mean
    P_xy = (sig.weights[:, None] * dx).T @ dy
    try:
        gain = np.linalg.solve(P_yy.T, P_xy.T).T
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance(f"innovation covariance is singular: {exc}") from exc
    mean = prior.mean + gain @ (y - y_hat)
    cov = prior.cov - gain @ P_yy @ gain.T
    return GaussianBelief(mean=mean, cov=_symmetrize(cov))


def filter_step(
    belief: GaussianBelief,
    u,
    y,
    noise: NoiseSpec,
    f: Callable,
    g: Callable,
    kappa: float = 0.0,
    propagate: Callable | None = None,
) -> GaussianBelief:
    """One predict/update cycle."""
    prior = predict(belief, u, noise, f, kappa, propagate=propagate)
    return update(prior, y, noise, g, kappa)
