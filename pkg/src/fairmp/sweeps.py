"""Experiment sweeps and the built-in self check.

The bias sweep samples a synthetic graph + Gaussian-mixture features per
(grid value, seed), applies one normalized aggregation, and records the
demographic-parity difference of hard class assignments before vs after,
the fitted-surrogate bias change, and the closed-form enhancement condition.
The hyper sweep trains the full pipeline over a (lambda_s, lambda_f) grid.
Every row is a pure function of its arguments, so sweep points can run in a
process pool; output order is fixed by the task list, not completion order.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datasets import DatasetBundle
from .errors import ValidationError
from .graph import normalized_adjacency, spmm
from .metrics import delta_bias_empirical, demographic_parity
from .propagation import (
    FmpConfig,
    appnp_step,
    fmp_forward,
    fmp_gradient,
    fmp_gradient_oracle,
    prox_linf,
    softmax_rows,
)
from .synth import (
    GmmParams,
    SbmParams,
    bias_enhance_condition,
    expected_aggregated_gmm,
    sample_gmm_features,
    sample_sbm,
)

# hyperparameter grids used by the sweep defaults
LAMBDA_F_GRID = (0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 100.0, 1000.0)
LAMBDA_S_GRID = (0.0, 0.1, 0.5, 1.0, 3.0, 5.0, 10.0, 15.0, 20.0)
DP_REG_GRID = (0.0, 1.0, 2.0, 5.0, 8.0, 10.0, 20.0, 50.0, 80.0, 100.0)

SWEEPABLE = ("eps_sens", "rho_d", "n", "c", "lambda_f", "lambda_s")

BIAS_SWEEP_COLUMNS = (
    "param", "value", "seed", "dp_before", "dp_after", "dp_diff",
    "delta_bias", "condition",
)
HYPER_SWEEP_COLUMNS = ("lambda_s", "lambda_f", "seed", "acc", "dp", "eo")


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter, its grid, fixed companions, and seed count."""

    param: str
    grid: tuple
    fixed: dict = field(default_factory=dict)
    seeds: int = 1
    base_seed: int = 0

    def __post_init__(self):
        if self.param not in SWEEPABLE:
            raise ValidationError(f"unknown sweep parameter {self.param!r}")
        if len(self.grid) == 0:
            raise ValidationError("sweep grid must be non-empty")
        if self.seeds < 1:
            raise ValidationError("seeds per point must be >= 1")

    def seed_values(self):
        return [self.base_seed + k for k in range(self.seeds)]


def _default_gmm_setting(fixed: dict) -> tuple:
    mu1 = np.asarray(fixed.get("mu1", (0.0, 1.0)), dtype=np.float64)
    mu2 = np.asarray(fixed.get("mu2", (1.0, 0.0)), dtype=np.float64)
    d = mu1.shape[0]
    sigma = np.asarray(fixed.get("sigma", np.eye(d)), dtype=np.float64)
    return mu1, mu2, sigma


def _bias_point(task) -> dict:
    param, value, seed, fixed = task
    setting = {
        "n": int(fixed.get("n", 10_000)),
        "rho_d": float(fixed.get("rho_d", 1e-3)),
        "eps_sens": float(fixed.get("eps_sens", 0.95)),
        "c": float(fixed.get("c", 0.5)),
    }
    setting[param] = int(value) if param == "n" else float(value)
    mu1, mu2, sigma = _default_gmm_setting(fixed)
    params = SbmParams(**setting)
    gmm = GmmParams(c=setting["c"], mu1=mu1, sigma1=sigma, mu2=mu2, sigma2=sigma)

    graph, sens = sample_sbm(params, np.random.SeedSequence([int(seed), 0]))
    x = sample_gmm_features(gmm, sens, np.random.SeedSequence([int(seed), 1]))
    a = normalized_adjacency(graph)
    x_agg = spmm(a, x)

    yhat_before = np.argmax(softmax_rows(x), axis=1)
    yhat_after = np.argmax(softmax_rows(x_agg), axis=1)
    dp_before = demographic_parity(yhat_before, sens)
    dp_after = demographic_parity(yhat_after, sens)
    agg = expected_aggregated_gmm(params, gmm)
    return {
        "param": param,
        "value": value,
        "seed": int(seed),
        "dp_before": dp_before,
        "dp_after": dp_after,
        "dp_diff": dp_after - dp_before,
        "delta_bias": delta_bias_empirical(x, x_agg, sens),
        "condition": int(bias_enhance_condition(agg)),
    }


def _run_tasks(fn, tasks, threads: int):
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def run_bias_sweep(spec: SweepSpec, threads: int = 1) -> list[dict]:
    """One aggregation step per (grid value, seed); see module docstring."""
    if spec.param not in ("eps_sens", "rho_d", "n", "c"):
        raise ValidationError(
            f"bias sweep varies graph parameters, not {spec.param!r}"
        )
    tasks = [
        (spec.param, value, seed, spec.fixed)
        for value in spec.grid
        for seed in spec.seed_values()
    ]
    return _run_tasks(_bias_point, tasks, threads)


def _hyper_point(task) -> dict:
    from .training import TrainConfig, train  # local: keeps worker import light

    lambda_s, lambda_f, seed, dataset, overrides = task
    cfg = TrainConfig(
        seed=int(seed),
        scheme=overrides.get("scheme", "fmp"),
        epochs=int(overrides.get("epochs", 300)),
        dp_reg_weight=float(overrides.get("dp_reg_weight", 0.0)),
        fmp=FmpConfig(
            lambda_s=float(lambda_s),
            lambda_f=float(lambda_f),
            iterations=int(overrides.get("iterations", 10)),
        ),
    )
    _, rec, _ = train(cfg, dataset)
    return {
        "lambda_s": float(lambda_s),
        "lambda_f": float(lambda_f),
        "seed": int(seed),
        "acc": rec.accuracy,
        "dp": rec.dp,
        "eo": rec.eo,
    }


def run_hyper_sweep(
    dataset: DatasetBundle,
    spec: SweepSpec,
    threads: int = 1,
    **overrides,
) -> list[dict]:
    """Training runs over one lambda axis; the other lambda sits in fixed."""
    if spec.param not in ("lambda_f", "lambda_s"):
        raise ValidationError(
            f"hyper sweep varies lambda_f or lambda_s, not {spec.param!r}"
        )
    other = "lambda_s" if spec.param == "lambda_f" else "lambda_f"
    other_value = float(spec.fixed.get(other, 1.0 if other == "lambda_s" else 0.0))
    tasks = []
    for value in spec.grid:
        pair = {spec.param: float(value), other: other_value}
        for seed in spec.seed_values():
            tasks.append((pair["lambda_s"], pair["lambda_f"], seed, dataset, overrides))
    return _run_tasks(_hyper_point, tasks, threads)


def run_hyper_grid(
    dataset: DatasetBundle,
    lambda_s_grid=LAMBDA_S_GRID,
    lambda_f_grid=LAMBDA_F_GRID,
    seeds: int = 1,
    base_seed: int = 0,
    threads: int = 1,
    **overrides,
) -> list[dict]:
    """Full (lambda_s, lambda_f) product sweep."""
    tasks = [
        (ls, lf, base_seed + k, dataset, overrides)
        for ls in lambda_s_grid
        for lf in lambda_f_grid
        for k in range(seeds)
    ]
    return _run_tasks(_hyper_point, tasks, threads)


# ---------------------------------------------------------------------------
# self check
# ---------------------------------------------------------------------------

@dataclass
class SelfCheckReport:
    items: list = field(default_factory=list)  # (name, passed, detail)

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.items)

    def add(self, name: str, passed: bool, detail: str):
        self.items.append((name, bool(passed), detail))


def _time_us(fn, *args, reps: int = 5, inner: int = 3) -> float:
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best * 1e6


def _random_sens(rng, n):
    from .graph import incident_vector

    s = np.where(rng.random(n) < 0.5, 1, -1)
    s[0], s[1] = 1, -1
    return incident_vector(s)


def self_check(gradient_fn=None, echo=print) -> SelfCheckReport:
    """Run the solver's internal consistency suite and report per item.

    ``gradient_fn`` overrides the fast gradient (used by tests to verify
    that an injected bug is caught by the oracle comparison but not by the
    scaling measurement).
    """
    grad = gradient_fn or fmp_gradient
    rng = np.random.default_rng(2024)
    report = SelfCheckReport()

    # 1. closed-form gradient vs dense-Jacobian oracle
    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(2, 31))
        d = int(rng.integers(2, 9))
        sens = _random_sens(rng, n)
        f = rng.normal(size=(n, d))
        u = rng.normal(size=d)
        worst = max(worst, float(np.max(np.abs(
            grad(f, u, sens) - fmp_gradient_oracle(f, u, sens)))))
    report.add("gradient-vs-oracle", worst < 1e-12, f"max abs dev {worst:.3e}")

    # 2. tape gradients vs central finite differences
    from . import autodiff as ad

    def quad(x):
        return ad.sum_all(ad.elementwise_mul(x, x))

    def softmax_comp(x):
        return ad.sum_all(ad.elementwise_mul(ad.row_softmax(x), x))

    e_quad = ad.finite_diff_check(quad, rng.normal(size=(6, 3)), h=1e-5)
    e_soft = ad.finite_diff_check(softmax_comp, rng.normal(size=(6, 3)), h=1e-5)
    passed = e_quad < 1e-8 and e_soft < 1e-6
    report.add("finite-difference", passed,
               f"quadratic {e_quad:.3e}, softmax composite {e_soft:.3e}")

    # 3. prox properties: idempotent, inside the ball, non-expansive
    ok = True
    for _ in range(200):
        lam = float(rng.uniform(0, 2))
        ua = rng.normal(size=6) * 3
        ub = rng.normal(size=6) * 3
        pa, pb = prox_linf(ua, lam), prox_linf(ub, lam)
        ok &= np.array_equal(prox_linf(pa, lam), pa)
        ok &= np.max(np.abs(pa)) <= lam + 1e-12
        ok &= np.linalg.norm(pa - pb) <= np.linalg.norm(ua - ub) + 1e-12
    report.add("prox-properties", ok, "idempotence, ball, non-expansiveness")

    # 4. lambda_f = 0 collapse onto the skip-connection recursion
    from .datasets import make_biased_classification

    ds = make_biased_classification(n=120, rho_d=0.08, seed=7)
    a = normalized_adjacency(ds.graph)
    x = rng.normal(size=(120, 3))
    cfg = FmpConfig(lambda_s=1.0, lambda_f=0.0, iterations=8)
    out, _ = fmp_forward(x, a, ds.sens, cfg)
    ref = x
    for _ in range(cfg.iterations):
        ref = appnp_step(a, ref, x, cfg.gamma)
    report.add("lambda0-collapse", bool(np.array_equal(out, ref)),
               "exact equality with the alpha=gamma recursion")

    # 5. scaling: fast path ~linear in n, oracle ~quadratic
    d = 8
    times_fast, times_oracle = {}, {}
    for n in (1000, 2000, 4000):
        sens = _random_sens(rng, n)
        f = rng.normal(size=(n, d))
        u = rng.normal(size=d)
        grad(f, u, sens)
        times_fast[n] = _time_us(grad, f, u, sens)
        if n >= 2000:
            fmp_gradient_oracle(f, u, sens)
            times_oracle[n] = _time_us(fmp_gradient_oracle, f, u, sens, inner=1)
    fast_ratio = times_fast[4000] / times_fast[2000]
    oracle_ratio = times_oracle[4000] / times_oracle[2000]
    passed = fast_ratio < 3.0 and oracle_ratio > 3.0
    detail = (
        "fast us " + str({k: round(v, 1) for k, v in times_fast.items()})
        + f" ratio {fast_ratio:.2f}; oracle us "
        + str({k: round(v, 1) for k, v in times_oracle.items()})
        + f" ratio {oracle_ratio:.2f}"
    )
    report.add("scaling", passed, detail)

    for name, passed, detail in report.items:
        echo(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return report
