"""Synthetic topology-bias generator and its closed-form aggregation theory.

Samples two-block random graphs parameterized by node count, edge density,
sensitive homophily and group balance, attaches Gaussian-mixture node
features, and evaluates the closed-form post-aggregation group means and
covariances (the nu/zeta coefficients) together with the bias-enhancement
condition ``(nu1 - nu2)^2 * min(zeta1, zeta2) > 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NonPositiveDefinite,
    ProbabilityOutOfRange,
    SingleGroup,
    UnequalCovariance,
)
from .graph import Graph, SensitiveVector, build_graph, incident_vector


def conn_probs(rho_d: float, eps_sens: float, c: float) -> tuple[float, float]:
    """Intra- and inter-group connection probabilities.

    ``p_conn = rho_d * eps_sens / (c^2 + (1-c)^2)`` and
    ``q_conn = rho_d * (1 - eps_sens) / (2 c (1-c))``. Values outside [0, 1]
    are a hard error, never clamped: a clamp would silently change the
    (density, homophily) semantics of a sweep.
    """
    if not (0.0 < rho_d < 1.0):
        raise ProbabilityOutOfRange(f"rho_d must be in (0,1), got {rho_d}")
    if not (0.0 <= eps_sens <= 1.0):
        raise ProbabilityOutOfRange(f"eps_sens must be in [0,1], got {eps_sens}")
    if not (0.0 < c < 1.0):
        raise ProbabilityOutOfRange(f"c must be in (0,1), got {c}")
    p_conn = rho_d * eps_sens / (c * c + (1.0 - c) * (1.0 - c))
    q_conn = rho_d * (1.0 - eps_sens) / (2.0 * c * (1.0 - c))
    for name, v in (("p_conn", p_conn), ("q_conn", q_conn)):
        if v < 0.0 or v > 1.0:
            raise ProbabilityOutOfRange(f"{name}={v:.6g} outside [0,1]")
    return p_conn, q_conn


@dataclass(frozen=True)
class SbmParams:
    """Two-block graph family: (n, rho_d, eps_sens, c).

    Construction validates that both derived connection probabilities land
    in [0, 1] and that each group has at least one node after rounding.
    """

    n: int
    rho_d: float
    eps_sens: float
    c: float

    def __post_init__(self):
        conn_probs(self.rho_d, self.eps_sens, self.c)
        if self.n_pos < 1 or self.n_neg < 1:
            raise SingleGroup(
                f"group sizes ({self.n_pos}, {self.n_neg}) must both be >= 1"
            )

    @property
    def n_pos(self) -> int:
        """Number of s=+1 nodes (deterministic: round(n*c))."""
        return int(round(self.n * self.c))

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos


@dataclass(frozen=True)
class GmmParams:
    """Two-component Gaussian mixture for node features.

    ``mu1/sigma1`` belong to the s=-1 group, ``mu2/sigma2`` to s=+1;
    ``c`` is the s=+1 mixing weight.
    """

    c: float
    mu1: np.ndarray
    sigma1: np.ndarray
    mu2: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu1", np.asarray(self.mu1, dtype=np.float64))
        object.__setattr__(self, "mu2", np.asarray(self.mu2, dtype=np.float64))
        object.__setattr__(self, "sigma1", np.asarray(self.sigma1, dtype=np.float64))
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=np.float64))
        d = self.mu1.shape[0]
        if self.mu2.shape != (d,) or self.sigma1.shape != (d, d) or self.sigma2.shape != (d, d):
            raise DimensionMismatch("mean/covariance dimensions disagree")
        for name, s in (("sigma1", self.sigma1), ("sigma2", self.sigma2)):
            if not np.allclose(s, s.T, atol=1e-12):
                raise NonPositiveDefinite(f"{name} is not symmetric")
            _cholesky(s, name)

    @property
    def dim(self) -> int:
        return self.mu1.shape[0]

    def equal_covariances(self) -> bool:
        return np.array_equal(self.sigma1, self.sigma2)


@dataclass(frozen=True)
class AggregatedGmm:
    """Closed-form group distributions after one normalized aggregation."""

    nu1: float
    nu2: float
    zeta1: float
    zeta2: float
    mu1_tilde: np.ndarray = field(repr=False)
    mu2_tilde: np.ndarray = field(repr=False)
    sigma1_tilde: np.ndarray = field(repr=False)
    sigma2_tilde: np.ndarray = field(repr=False)


def _cholesky(sigma: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite(f"{name} is not positive definite") from exc


def _triangular_decode(t: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices of the strict upper triangle (row-major) to (i, j).

    t in [0, n(n-1)/2); i < j. Float solve of the row quadratic, then an
    integer fix-up so the decode is exact for every index.
    """

    def row_start(i):
        return i * (2 * n - i - 1) // 2

    tt = t.astype(np.float64)
    i = np.floor(((2 * n - 1) - np.sqrt((2 * n - 1) ** 2 - 8.0 * tt)) / 2.0)
    i = np.clip(i.astype(np.int64), 0, n - 2)
    i = np.where(row_start(i + 1) <= t, i + 1, i)
    i = np.where(row_start(i) > t, i - 1, i)
    j = t - row_start(i) + i + 1
    return i, j


def _sample_distinct(rng: np.random.Generator, population: int, count: int) -> np.ndarray:
    if count == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(rng.choice(population, size=count, replace=False).astype(np.int64))


def sample_sbm(params: SbmParams, seed) -> tuple[Graph, SensitiveVector]:
    """Sample a graph and sensitive assignment from the two-block family.

    Nodes [0, round(n*c)) carry s=+1, the rest s=-1. Each unordered pair is
    present independently with probability p_conn (same group) or q_conn
    (different groups); realized by drawing a binomial edge count per block
    and then that many distinct pair indices, which yields the identical
    product-Bernoulli distribution without touching all O(n^2) pairs.

    Reproducible for a fixed (params, seed).
    """
    p_conn, q_conn = conn_probs(params.rho_d, params.eps_sens, params.c)
    rng = np.random.default_rng(seed)
    n_pos, n_neg = params.n_pos, params.n_neg

    blocks = []
    # intra +1 block at offset 0, intra -1 block at offset n_pos
    for size, offset in ((n_pos, 0), (n_neg, n_pos)):
        pairs = size * (size - 1) // 2
        m = int(rng.binomial(pairs, p_conn)) if pairs > 0 else 0
        idx = _sample_distinct(rng, pairs, m)
        i, j = _triangular_decode(idx, size)
        blocks.append((i + offset, j + offset))
    # inter block: pair t <-> (t // n_neg, n_pos + t % n_neg)
    pairs = n_pos * n_neg
    m = int(rng.binomial(pairs, q_conn)) if pairs > 0 else 0
    idx = _sample_distinct(rng, pairs, m)
    blocks.append((idx // n_neg, n_pos + idx % n_neg))

    rows = np.concatenate([b[0] for b in blocks])
    cols = np.concatenate([b[1] for b in blocks])
    edges = np.stack([rows, cols], axis=1)
    s = np.concatenate(
        [np.ones(n_pos, dtype=np.int64), -np.ones(n_neg, dtype=np.int64)]
    )
    return build_graph(edges, params.n), incident_vector(s)


def sample_gmm_features(gmm: GmmParams, sens: SensitiveVector, seed) -> np.ndarray:
    """Draw node features: row i ~ N(mu1, sigma1) if s_i=-1 else N(mu2, sigma2).

    All rows use a single stream of standard normals in node order, so the
    draw is reproducible per seed independent of the group layout.
    """
    rng = np.random.default_rng(seed)
    d = gmm.dim
    z = rng.standard_normal((sens.n, d))
    l1 = _cholesky(gmm.sigma1, "sigma1")
    l2 = _cholesky(gmm.sigma2, "sigma2")
    pos = sens.positive_mask()
    x = np.empty((sens.n, d), dtype=np.float64)
    x[~pos] = gmm.mu1 + z[~pos] @ l1.T
    x[pos] = gmm.mu2 + z[pos] @ l2.T
    return x


def expected_aggregated_gmm(params: SbmParams, gmm: GmmParams) -> AggregatedGmm:
    """Closed-form post-aggregation group distributions.

    Requires equal group covariances. With group sizes n_neg = n(1-c) and
    n_pos = n*c:

        zeta1 = (n_neg - 1) p + 1 + n_pos q      (s = -1 group)
        zeta2 = n_neg q + 1 + (n_pos - 1) p      (s = +1 group)
        nu1   = ((n_neg - 1) p + 1) / zeta1
        nu2   = n_neg q / zeta2

    mean_tilde_g = nu_g * mu1 + (1 - nu_g) * mu2 and sigma_tilde_g = sigma / zeta_g.
    """
    if not gmm.equal_covariances():
        raise UnequalCovariance(
            "closed forms require equal group covariances"
        )
    p, q = conn_probs(params.rho_d, params.eps_sens, params.c)
    n_neg = params.n * (1.0 - params.c)
    n_pos = params.n * params.c
    zeta1 = (n_neg - 1.0) * p + 1.0 + n_pos * q
    zeta2 = n_neg * q + 1.0 + (n_pos - 1.0) * p
    nu1 = ((n_neg - 1.0) * p + 1.0) / zeta1
    nu2 = (n_neg * q) / zeta2
    return AggregatedGmm(
        nu1=nu1,
        nu2=nu2,
        zeta1=zeta1,
        zeta2=zeta2,
        mu1_tilde=nu1 * gmm.mu1 + (1.0 - nu1) * gmm.mu2,
        mu2_tilde=nu2 * gmm.mu1 + (1.0 - nu2) * gmm.mu2,
        sigma1_tilde=gmm.sigma1 / zeta1,
        sigma2_tilde=gmm.sigma1 / zeta2,
    )


def bias_enhance_condition(agg: AggregatedGmm) -> bool:
    """Whether one aggregation provably increases the group-separability bias."""
    return (agg.nu1 - agg.nu2) ** 2 * min(agg.zeta1, agg.zeta2) > 1.0
