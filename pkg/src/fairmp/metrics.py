"""Bias and fairness quantification.

Group-conditional Gaussian fits, the closed-form Gaussian KL divergence, the
mutual-information surrogate bound built from the two KLs, and the usual
group fairness metrics (demographic parity and equal opportunity) plus the
per-class soft probability gap ``delta @ softmax(F)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    GroupTooSmall,
    NoPositivesInGroup,
    SingleGroup,
    SingularCovariance,
)
from .graph import SensitiveVector
from .propagation import softmax_rows

COV_RIDGE = 1e-6


@dataclass(frozen=True)
class FittedGaussians:
    """Per-group sample Gaussians; covariances carry a ridge of 1e-6*I."""

    c_hat: float
    mu1_hat: np.ndarray
    sigma1_hat: np.ndarray
    mu2_hat: np.ndarray
    sigma2_hat: np.ndarray


@dataclass(frozen=True)
class MetricsRecord:
    accuracy: float
    dp: float
    eo: Optional[float]

    def to_json(self) -> str:
        return json.dumps({"acc": self.accuracy, "dp": self.dp, "eo": self.eo})


def gaussian_kl(mu_p, sigma_p, mu_q, sigma_q) -> float:
    """KL(P || Q) for Gaussians, in closed form.

    0.5 * [ ln(|Sq|/|Sp|) - d + (mp-mq)^T Sq^{-1} (mp-mq) + tr(Sq^{-1} Sp) ]
    """
    mu_p = np.asarray(mu_p, dtype=np.float64)
    mu_q = np.asarray(mu_q, dtype=np.float64)
    sigma_p = np.asarray(sigma_p, dtype=np.float64)
    sigma_q = np.asarray(sigma_q, dtype=np.float64)
    d = mu_p.shape[0]
    if mu_q.shape != (d,) or sigma_p.shape != (d, d) or sigma_q.shape != (d, d):
        raise DimensionMismatch("KL arguments have inconsistent dimensions")
    sign_q, logdet_q = np.linalg.slogdet(sigma_q)
    sign_p, logdet_p = np.linalg.slogdet(sigma_p)
    if sign_q <= 0 or sign_p <= 0:
        raise SingularCovariance("covariance determinant is not positive")
    try:
        solve_diff = np.linalg.solve(sigma_q, (mu_p - mu_q))
        solve_cov = np.linalg.solve(sigma_q, sigma_p)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("covariance inversion failed") from exc
    quad = float((mu_p - mu_q) @ solve_diff)
    return 0.5 * (logdet_q - logdet_p - d + quad + float(np.trace(solve_cov)))


def bias_surrogate(c: float, kl_12: float, kl_21: float) -> float:
    """Upper bound on the mutual information between group and features.

    -(1-c) ln[(1-c) + c e^{-kl_12}] - c ln[c + (1-c) e^{-kl_21}], where
    kl_12 = KL(group -1 || group +1) and c is the +1 mixing weight.
    Zero when the groups are indistinguishable; tends to the mixing entropy
    as both KLs grow.
    """
    if not (0.0 < c < 1.0):
        raise SingleGroup(f"mixing weight must be in (0,1), got {c}")
    return -(1.0 - c) * math.log((1.0 - c) + c * math.exp(-kl_12)) - c * math.log(
        c + (1.0 - c) * math.exp(-kl_21)
    )


def fit_group_gaussians(x: np.ndarray, sens: SensitiveVector) -> FittedGaussians:
    """Sample mean and ridge-regularized covariance per sensitive group.

    Each group needs at least d+1 members so the unbiased covariance exists.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != sens.n:
        raise DimensionMismatch(f"features must be ({sens.n}, d), got {x.shape}")
    d = x.shape[1]
    pos = sens.positive_mask()
    groups = {}
    for name, mask in (("-1", ~pos), ("+1", pos)):
        pts = x[mask]
        if pts.shape[0] < d + 1:
            raise GroupTooSmall(
                f"group {name} has {pts.shape[0]} members, need >= {d + 1}"
            )
        mu = pts.mean(axis=0)
        cov = np.cov(pts, rowvar=False, ddof=1).reshape(d, d) + COV_RIDGE * np.eye(d)
        groups[name] = (mu, cov)
    return FittedGaussians(
        c_hat=float(pos.mean()),
        mu1_hat=groups["-1"][0],
        sigma1_hat=groups["-1"][1],
        mu2_hat=groups["+1"][0],
        sigma2_hat=groups["+1"][1],
    )


def _surrogate_of_fit(fit: FittedGaussians) -> float:
    kl_12 = gaussian_kl(fit.mu1_hat, fit.sigma1_hat, fit.mu2_hat, fit.sigma2_hat)
    kl_21 = gaussian_kl(fit.mu2_hat, fit.sigma2_hat, fit.mu1_hat, fit.sigma1_hat)
    return bias_surrogate(fit.c_hat, kl_12, kl_21)


def delta_bias_empirical(
    x_before: np.ndarray, x_after: np.ndarray, sens: SensitiveVector
) -> float:
    """Surrogate bias of the fitted group Gaussians, after minus before."""
    x_before = np.asarray(x_before, dtype=np.float64)
    x_after = np.asarray(x_after, dtype=np.float64)
    if x_before.shape != x_after.shape:
        raise DimensionMismatch(
            f"before/after shapes differ: {x_before.shape} vs {x_after.shape}"
        )
    return _surrogate_of_fit(fit_group_gaussians(x_after, sens)) - _surrogate_of_fit(
        fit_group_gaussians(x_before, sens)
    )


def demographic_parity(y_hat, sens: SensitiveVector) -> float:
    """| P(yhat=1 | s=-1) - P(yhat=1 | s=+1) | for binary predictions."""
    y_hat = np.asarray(y_hat)
    if y_hat.shape[0] != sens.n:
        raise DimensionMismatch("prediction length != node count")
    pos = sens.positive_mask()
    rate_neg = float((y_hat[~pos] == 1).mean())
    rate_pos = float((y_hat[pos] == 1).mean())
    return abs(rate_neg - rate_pos)


def equal_opportunity(y_hat, y, sens: SensitiveVector) -> float:
    """Demographic parity restricted to ground-truth-positive nodes."""
    y_hat = np.asarray(y_hat)
    y = np.asarray(y)
    if y_hat.shape[0] != sens.n or y.shape[0] != sens.n:
        raise DimensionMismatch("prediction/label length != node count")
    pos = sens.positive_mask()
    rates = []
    for name, mask in (("-1", ~pos), ("+1", pos)):
        cond = mask & (y == 1)
        if not cond.any():
            raise NoPositivesInGroup(f"group {name} has no y=1 nodes")
        rates.append(float((y_hat[cond] == 1).mean()))
    return abs(rates[0] - rates[1])


def dp_gap_vector(f: np.ndarray, sens: SensitiveVector) -> np.ndarray:
    """Per-class soft prediction gap: ``delta @ softmax_rows(f)``.

    Component j is the mean predicted probability of class j in the +1 group
    minus the same mean in the -1 group; components sum to zero because
    softmax rows sum to one and the incident vector sums to zero.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != sens.n:
        raise DimensionMismatch(f"features must be ({sens.n}, d), got {f.shape}")
    return sens.delta @ softmax_rows(f)
