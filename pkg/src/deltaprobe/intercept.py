"""Linear model of the fixed-delay intercept across paths.

The intercept of the delay-vs-size line grows with the number of routers on
the path (per-hop processing) and with its geographic length (propagation),
so it is modeled as a = alpha * n + beta * l with no constant term. Fitting
many (path features, measured intercept) observations yields coefficients
that predict the intercept of unmeasured paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import estimator
from .errors import InsufficientObservations, RankDeficient
from .estimator import BandwidthEstimate, SizeDelayPoint


@dataclass(frozen=True)
class PathFeatures:
    """Per-path covariates: router count (from TTL probing) and route length."""

    path_id: str
    hop_count_n: int
    route_length_l_km: float

    def __post_init__(self):
        if self.hop_count_n < 1:
            raise ValueError(f"hop_count_n must be >= 1, got {self.hop_count_n}")
        if self.route_length_l_km < 0:
            raise ValueError(f"route_length_l_km must be >= 0, got {self.route_length_l_km}")


@dataclass(frozen=True)
class InterceptModel:
    """Fitted coefficients of the intercept model."""

    alpha_s_per_hop: float
    beta_s_per_km: float
    residual_rms_s: float
    n_observations: int
    const_s: float = 0.0  # nonzero only when fitted with include_constant

    def __post_init__(self):
        if self.n_observations < 2:
            raise ValueError("n_observations must be >= 2")
        if self.residual_rms_s < 0:
            raise ValueError("residual_rms_s must be nonnegative")


def fit_intercept_model(
    observations: Sequence[tuple[PathFeatures, float]],
    *,
    include_constant: bool = False,
) -> InterceptModel:
    """Least-squares alpha, beta minimizing sum (a_i - alpha*n_i - beta*l_i)^2.

    The model has no constant term by default; `include_constant` adds one
    for experimentation. Raises RankDeficient when the (n, l) rows are
    collinear and InsufficientObservations below two observations.
    """
    if len(observations) < 2:
        raise InsufficientObservations(
            f"need >= 2 observations, got {len(observations)}"
        )
    design = np.array(
        [[f.hop_count_n, f.route_length_l_km] for f, _ in observations], dtype=float
    )
    targets = np.array([a for _, a in observations], dtype=float)
    if include_constant:
        design = np.column_stack([design, np.ones(len(observations))])

    coef, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    if rank < design.shape[1]:
        raise RankDeficient(
            "hop-count/route-length rows are collinear; cannot separate "
            "alpha from beta"
        )
    residuals = targets - design @ coef
    rms = float(np.sqrt(np.mean(residuals**2)))
    return InterceptModel(
        alpha_s_per_hop=float(coef[0]),
        beta_s_per_km=float(coef[1]),
        residual_rms_s=rms,
        n_observations=len(observations),
        const_s=float(coef[2]) if include_constant else 0.0,
    )


def predict_intercept(model: InterceptModel, features: PathFeatures) -> float:
    """Predicted fixed-delay intercept (seconds) for a path."""
    return (
        model.alpha_s_per_hop * features.hop_count_n
        + model.beta_s_per_km * features.route_length_l_km
        + model.const_s
    )


def estimate_with_model(
    point: SizeDelayPoint, model: InterceptModel, features: PathFeatures
) -> BandwidthEstimate:
    """Single-point bandwidth estimate using the model-predicted intercept."""
    return estimator.estimate_from_intercept(point, predict_intercept(model, features))
