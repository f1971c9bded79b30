"""Acceptance suite: one test per release criterion, stated tolerances only.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line
per criterion (each test prints its line; -s shows them for passing tests).
Criterion 12's real-data half needs FAIRMP_POKEC_N_DIR pointing at a
Pokec-n format dataset directory and is skipped otherwise; its synthetic
half always runs.
"""

import os
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from fairmp.datasets import load_dataset, make_biased_classification
from fairmp.graph import (
    build_graph,
    incident_vector,
    label_homophily,
    normalized_adjacency,
    sensitive_homophily,
    spmm,
)
from fairmp.metrics import delta_bias_empirical, dp_gap_vector, gaussian_kl
from fairmp.propagation import (
    FmpConfig,
    appnp_step,
    fmp_forward,
    fmp_gradient,
    fmp_gradient_oracle,
    prox_linf,
    softmax_rows,
)
from fairmp.sweeps import LAMBDA_F_GRID, SweepSpec, run_bias_sweep
from fairmp.synth import (
    GmmParams,
    SbmParams,
    bias_enhance_condition,
    expected_aggregated_gmm,
    sample_gmm_features,
    sample_sbm,
)
from fairmp.training import MlpParams, TrainConfig, train

REFERENCE_GMM = GmmParams(c=0.5, mu1=[0.0, 1.0], sigma1=np.eye(2),
                     mu2=[1.0, 0.0], sigma2=np.eye(2))


def report(num, name, started, **details):
    parts = " ".join(f"{k}={v}" for k, v in details.items())
    print(f"[criterion {num:02d}] PASS {name} ({time.time() - started:.1f}s) {parts}")


def random_instance(rng, n=None, d=None):
    n = n or int(rng.integers(2, 31))
    d = d or int(rng.integers(2, 9))
    s = np.where(rng.random(n) < 0.5, 1, -1)
    s[0], s[1] = 1, -1
    return incident_vector(s), rng.normal(size=(n, d)), rng.normal(size=d)


def min_time_us(fn, *args, reps=7, inner=3):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best * 1e6


def test_criterion_01_gradient_matches_oracle_and_finite_differences():
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst_oracle, worst_fd = 0.0, 0.0
    for _ in range(100):
        sens, f, u = random_instance(rng)
        fast = fmp_gradient(f, u, sens)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(
            fast - fmp_gradient_oracle(f, u, sens)))))
        h = 1e-5
        n, d = f.shape
        for i, j in zip(rng.integers(0, n, 8), rng.integers(0, d, 8)):
            fp, fm = f.copy(), f.copy()
            fp[i, j] += h
            fm[i, j] -= h
            fd = (
                float((sens.delta @ softmax_rows(fp)) @ u)
                - float((sens.delta @ softmax_rows(fm)) @ u)
            ) / (2 * h)
            an = fast[i, j]
            worst_fd = max(worst_fd, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    assert worst_oracle < 1e-12
    assert worst_fd < 1e-6
    assert time.time() - t0 < 5.0
    report(1, "closed-form gradient vs oracle & finite differences", t0,
           oracle_dev=f"{worst_oracle:.2e}", fd_rel=f"{worst_fd:.2e}")


def test_criterion_02_gradient_complexity_scaling():
    t0 = time.time()
    rng = np.random.default_rng(202)
    d = 8
    fast_t, oracle_t = {}, {}
    for n in (2000, 4000):
        s = np.where(np.arange(n) < n // 2, 1, -1)
        sens = incident_vector(s)
        f = rng.normal(size=(n, d))
        u = rng.normal(size=d)
        fmp_gradient(f, u, sens)
        fmp_gradient_oracle(f, u, sens)
        fast_t[n] = min_time_us(fmp_gradient, f, u, sens, reps=9, inner=5)
        oracle_t[n] = min_time_us(fmp_gradient_oracle, f, u, sens, reps=5, inner=1)
    fast_factor = fast_t[4000] / fast_t[2000]
    oracle_factor = oracle_t[4000] / oracle_t[2000]
    assert 1.5 <= fast_factor <= 2.8, (fast_t, fast_factor)
    assert oracle_factor > 3.2, (oracle_t, oracle_factor)
    assert time.time() - t0 < 60.0
    report(2, "O(n d) gradient vs O(n^2 d) oracle wall-time scaling", t0,
           fast_factor=f"{fast_factor:.2f}", oracle_factor=f"{oracle_factor:.2f}")


def test_criterion_03_fairness_objective_identity():
    t0 = time.time()
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(50):
        sens, f, _ = random_instance(rng)
        gap = dp_gap_vector(f, sens)
        soft = softmax_rows(f)
        direct = soft[sens.s > 0].mean(axis=0) - soft[sens.s < 0].mean(axis=0)
        worst = max(worst, float(np.max(np.abs(gap - direct))))
    assert worst < 1e-12
    assert time.time() - t0 < 1.0
    report(3, "per-class gap equals direct group-mean difference", t0,
           max_dev=f"{worst:.2e}")


def test_criterion_04_proximal_operator_properties():
    t0 = time.time()
    rng = np.random.default_rng(404)

    def ball_indicator(y, radius, scale):
        # the conjugate penalty: 0 inside the ball, +inf outside; any
        # positive step multiple leaves it pointwise unchanged
        return 0.0 if np.max(np.abs(y)) <= radius else scale * np.inf

    for _ in range(1000):
        lam = float(rng.uniform(0.0, 3.0))
        d = int(rng.integers(1, 8))
        u, v = rng.normal(size=d) * 4, rng.normal(size=d) * 4
        pu, pv = prox_linf(u, lam), prox_linf(v, lam)
        assert np.max(np.abs(prox_linf(pu, lam) - pu)) <= 1e-12  # idempotent
        assert np.max(np.abs(pu)) <= lam + 1e-12  # ball membership
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12
        for beta in (0.1, 1.0, 10.0):
            assert ball_indicator(pu, lam, beta) == 0.0
        if lam > 0:
            y = rng.uniform(-lam, lam, size=d)  # projection optimality
            assert np.linalg.norm(pu - u) <= np.linalg.norm(y - u) + 1e-12
    assert time.time() - t0 < 1.0
    report(4, "prox: idempotent, in-ball, non-expansive, step-size free", t0)


def test_criterion_05_lambda_zero_collapse_is_exact():
    t0 = time.time()
    rng = np.random.default_rng(505)
    for _ in range(20):
        n = int(rng.integers(4, 60))
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(iu.shape[0]) < 0.25
        g = build_graph(np.stack([iu[keep], ju[keep]], axis=1), n)
        a = normalized_adjacency(g)
        s = np.where(rng.random(n) < 0.5, 1, -1)
        s[0], s[1] = 1, -1
        sens = incident_vector(s)
        x = rng.normal(size=(n, int(rng.integers(2, 6))))
        k = int(rng.integers(1, 21))
        cfg = FmpConfig(lambda_s=float(rng.uniform(0.1, 5.0)), lambda_f=0.0,
                        iterations=k)
        out, _ = fmp_forward(x, a, sens, cfg)
        ref = x
        for _ in range(k):
            ref = appnp_step(a, ref, x, cfg.gamma)
        assert np.array_equal(out, ref)
    assert time.time() - t0 < 5.0
    report(5, "lambda_f=0 solver output identical to skip recursion", t0)


def test_criterion_06_kl_closed_form_vs_monte_carlo():
    t0 = time.time()
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(10):
        mu_p = rng.normal(size=2)
        mu_q = mu_p + rng.normal(size=2) * 0.8
        ap = rng.normal(size=(2, 2)) * 0.6
        aq = rng.normal(size=(2, 2)) * 0.6
        sp = ap @ ap.T + 0.5 * np.eye(2)
        sq = aq @ aq.T + 0.5 * np.eye(2)
        exact = gaussian_kl(mu_p, sp, mu_q, sq)
        lp = np.linalg.cholesky(sp)
        x = mu_p + rng.standard_normal((1_000_000, 2)) @ lp.T

        def logpdf(pts, mu, sigma):
            l = np.linalg.cholesky(sigma)
            sol = np.linalg.solve(l, (pts - mu).T)
            return -0.5 * (np.sum(sol * sol, axis=0)
                           + 2.0 * np.log(np.diag(l)).sum()
                           + 2.0 * np.log(2.0 * np.pi))

        mc = float(np.mean(logpdf(x, mu_p, sp) - logpdf(x, mu_q, sq)))
        worst = max(worst, abs(mc - exact) / abs(exact))
    assert worst < 0.02
    assert time.time() - t0 < 30.0
    report(6, "closed-form Gaussian KL vs 1e6-sample Monte Carlo", t0,
           worst_rel=f"{worst:.4f}")


def test_criterion_07_post_aggregation_closed_forms():
    t0 = time.time()
    params = SbmParams(n=10_000, rho_d=1e-3, eps_sens=0.95, c=0.5)
    agg = expected_aggregated_gmm(params, REFERENCE_GMM)
    mu_scale = float(np.max(np.abs(REFERENCE_GMM.mu1 - REFERENCE_GMM.mu2)))
    sigma_scale = float(np.linalg.norm(REFERENCE_GMM.sigma1))
    direction = REFERENCE_GMM.mu1 - REFERENCE_GMM.mu2

    means = {1: [], 2: []}
    covs = {1: [], 2: []}
    noise_covs = {1: [], 2: []}
    for seed in range(5):
        g, sens = sample_sbm(params, seed)
        x = sample_gmm_features(REFERENCE_GMM, sens, seed + 700)
        a = normalized_adjacency(g)
        xt = spmm(a, x)
        mu_map = np.where((sens.s < 0)[:, None], REFERENCE_GMM.mu1, REFERENCE_GMM.mu2)
        noise_t = spmm(a, x - mu_map)
        for gid, mask in ((1, sens.s < 0), (2, sens.s > 0)):
            means[gid].append(xt[mask].mean(axis=0))
            covs[gid].append(np.cov(xt[mask].T))
            noise_covs[gid].append(np.cov(noise_t[mask].T))

    closed = {1: (agg.mu1_tilde, agg.sigma1_tilde, agg.zeta1),
              2: (agg.mu2_tilde, agg.sigma2_tilde, agg.zeta2)}
    zeta_rels = []
    for gid in (1, 2):
        mu_c, sig_c, zeta_c = closed[gid]
        mu_e = np.mean(means[gid], axis=0)
        sig_e = np.mean(covs[gid], axis=0)
        # means: component-wise, 5% of the mixture separation scale
        assert np.max(np.abs(mu_e - mu_c)) < 0.05 * mu_scale
        # covariance: Frobenius, 5% of the pre-aggregation covariance scale
        assert np.linalg.norm(sig_e - sig_c) < 0.05 * sigma_scale
        # concentration factor, strict 5%: the noise-isolated covariance is
        # the quantity the zeta coefficient describes
        noise_e = np.mean(noise_covs[gid], axis=0)
        zeta_emp = np.trace(REFERENCE_GMM.sigma1) / np.trace(noise_e)
        zeta_rels.append(abs(zeta_emp - zeta_c) / zeta_c)
        assert zeta_rels[-1] < 0.05
    # mean-mixing separation, strict 5%
    gap_emp = (np.mean(means[1], axis=0) - np.mean(means[2], axis=0)) @ direction
    gap_emp /= direction @ direction
    nu_rel = abs(gap_emp - (agg.nu1 - agg.nu2)) / (agg.nu1 - agg.nu2)
    assert nu_rel < 0.05
    assert time.time() - t0 < 60.0
    report(7, "post-aggregation group moments match nu/zeta closed forms", t0,
           nu_rel=f"{nu_rel:.3f}", zeta_rel=f"{max(zeta_rels):.3f}")


def _sweep_mean_dp_diff(param, grid, seeds=5, **fixed):
    spec = SweepSpec(param=param, grid=tuple(grid), fixed=fixed, seeds=seeds)
    rows = run_bias_sweep(spec)
    means = []
    for value in grid:
        vals = [r["dp_diff"] for r in rows if r["value"] == value]
        means.append(float(np.mean(vals)))
    return means


def test_criterion_08_bias_amplification_trends():
    t0 = time.time()
    eps_grid = (0.80, 0.85, 0.90, 0.95, 1.0)
    eps_means = _sweep_mean_dp_diff("eps_sens", eps_grid,
                                    n=10_000, rho_d=1e-3, c=0.5)
    rho_eps = spearmanr(eps_grid, eps_means).statistic
    assert rho_eps > 0.9

    rho_grid = (5e-4, 1e-3, 2e-3)
    rho_means = _sweep_mean_dp_diff("rho_d", rho_grid,
                                    n=10_000, eps_sens=0.95, c=0.5)
    rho_rho = spearmanr(rho_grid, rho_means).statistic
    assert rho_rho > 0.9

    n_grid = (1000, 3000, 10_000, 30_000)
    n_means = _sweep_mean_dp_diff("n", n_grid, rho_d=1e-3, eps_sens=0.95, c=0.5)
    rho_n = spearmanr(n_grid, n_means).statistic
    assert rho_n > 0.9

    c_grid = (0.1, 0.3, 0.5)
    c_means = _sweep_mean_dp_diff("c", c_grid, n=10_000, rho_d=1e-3, eps_sens=0.95)
    rho_c = spearmanr(c_grid, c_means).statistic
    assert rho_c > 0.9

    assert time.time() - t0 < 600.0
    report(8, "aggregation bias grows with homophily, density, size, balance", t0,
           eps=f"{rho_eps:.2f}", rho=f"{rho_rho:.2f}",
           n=f"{rho_n:.2f}", c=f"{rho_c:.2f}")


def test_criterion_09_enhancement_condition_predicts_positive_bias_change():
    t0 = time.time()
    outcomes = []
    for eps in (0.85, 0.90, 0.95):
        for rho in (5e-4, 1e-3, 2e-3):
            for c in (0.3, 0.4, 0.5):
                params = SbmParams(n=10_000, rho_d=rho, eps_sens=eps, c=c)
                gmm = GmmParams(c=c, mu1=[0.0, 1.0], sigma1=np.eye(2),
                                mu2=[1.0, 0.0], sigma2=np.eye(2))
                assert bias_enhance_condition(expected_aggregated_gmm(params, gmm))
                for seed in range(5):
                    g, sens = sample_sbm(params, seed)
                    x = sample_gmm_features(gmm, sens, seed + 900)
                    xt = spmm(normalized_adjacency(g), x)
                    outcomes.append(delta_bias_empirical(x, xt, sens) > 0.0)
    frac = float(np.mean(outcomes))
    assert frac >= 0.90
    assert time.time() - t0 < 600.0
    report(9, "bias-enhancement condition implies empirical bias increase", t0,
           positive_fraction=f"{frac:.3f}", pairs=len(outcomes))


def test_criterion_10_training_sanity_and_pipeline_gradient():
    t0 = time.time()
    # separable toy must overfit perfectly with the pure MLP
    rng = np.random.default_rng(1010)
    n = 30
    labels = np.tile([0, 1], n // 2)
    x = np.stack([(2.0 * labels - 1.0) * 3.0 + rng.normal(size=n) * 0.2,
                  rng.normal(size=n)], axis=1)
    from fairmp.datasets import DatasetBundle

    ds = DatasetBundle(graph=build_graph([], n), features=x, labels=labels,
                       sens=incident_vector(np.tile([1, -1], n // 2)))
    _, rec, _ = train(TrainConfig(scheme="none", epochs=300, seed=0, hidden=16), ds)
    assert rec.accuracy == 1.0

    # initial gradient of the full pipeline vs central differences
    import fairmp.autodiff as ad
    from fairmp.training import forward_pipeline_tape

    params12 = SbmParams(n=12, rho_d=0.3, eps_sens=0.8, c=0.5)
    graph, sens = sample_sbm(params12, 0)
    a = normalized_adjacency(graph)
    feats = np.random.default_rng(11).normal(size=(12, 3))
    labs = np.random.default_rng(12).integers(0, 2, size=12)
    mask = np.ones(12, dtype=bool)
    cfg = TrainConfig(scheme="fmp", hidden=5, seed=0,
                      fmp=FmpConfig(lambda_s=1.0, lambda_f=5.0, iterations=3))
    mlp = MlpParams.init(3, 5, 2, seed=3)

    def loss_and_grads(p):
        tape = ad.Tape()
        pvars = {k: tape.leaf(v) for k, v in p.as_dict().items()}
        logits = forward_pipeline_tape(tape, pvars, feats, a, sens, cfg)
        loss = ad.cross_entropy(logits, labs, mask)
        grads = ad.backward(loss)
        return float(loss.value), {k: grads[v] for k, v in pvars.items()}

    _, grads = loss_and_grads(mlp)
    h = 1e-4
    rng = np.random.default_rng(13)
    worst = 0.0
    for name, arr in mlp.as_dict().items():
        for flat_idx in rng.choice(arr.size, size=min(arr.size, 30), replace=False):
            bump = np.zeros(arr.size)
            bump[flat_idx] = h
            d = mlp.as_dict()
            pp = MlpParams(**{k: v + bump.reshape(v.shape) if k == name else v
                              for k, v in d.items()})
            pm = MlpParams(**{k: v - bump.reshape(v.shape) if k == name else v
                              for k, v in d.items()})
            fd = (loss_and_grads(pp)[0] - loss_and_grads(pm)[0]) / (2 * h)
            an = grads[name].ravel()[flat_idx]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    assert worst < 1e-4
    assert time.time() - t0 < 60.0
    report(10, "toy training reaches accuracy 1.0; pipeline gradient checks", t0,
           fd_rel=f"{worst:.2e}")


def test_criterion_11_debiasing_beats_plain_aggregation():
    t0 = time.time()
    seeds = range(5)
    datasets = {
        s: make_biased_classification(
            n=800, rho_d=0.02, eps_sens=0.95, c=0.5, label_corr=0.05,
            group_scale=1.0, label_scale=1.2, noise_dims=2, seed=s,
        )
        for s in seeds
    }
    gcn_acc, gcn_dp = [], []
    for s in seeds:
        _, rec, _ = train(TrainConfig(scheme="gcn", epochs=300, seed=s), datasets[s])
        gcn_acc.append(rec.accuracy)
        gcn_dp.append(rec.dp)
    gcn_acc_mean, gcn_dp_mean = float(np.mean(gcn_acc)), float(np.mean(gcn_dp))

    tuned = None  # (dp, acc, lambda_f), tuned on seed-averaged metrics
    for lf in LAMBDA_F_GRID:
        accs, dps = [], []
        for s in seeds:
            cfg = TrainConfig(scheme="fmp", epochs=300, seed=s,
                              fmp=FmpConfig(lambda_s=1.0, lambda_f=lf, iterations=10))
            _, rec, _ = train(cfg, datasets[s])
            accs.append(rec.accuracy)
            dps.append(rec.dp)
        acc_mean, dp_mean = float(np.mean(accs)), float(np.mean(dps))
        if acc_mean >= gcn_acc_mean - 0.03 and (tuned is None or dp_mean < tuned[0]):
            tuned = (dp_mean, acc_mean, lf)
    assert tuned is not None
    assert tuned[0] <= 0.5 * gcn_dp_mean, (tuned, gcn_dp_mean)
    assert time.time() - t0 < 600.0
    report(11, "tuned solver halves the plain-aggregation parity gap", t0,
           gcn=f"acc={gcn_acc_mean:.3f},dp={gcn_dp_mean:.3f}",
           fmp=f"acc={tuned[1]:.3f},dp={tuned[0]:.3f},lambda_f={tuned[2]}")


def test_criterion_12_synthetic_homophily_ingestion():
    t0 = time.time()
    params = SbmParams(n=10_000, rho_d=1e-3, eps_sens=0.95, c=0.5)
    realized = [sensitive_homophily(*sample_sbm(params, seed)) for seed in range(3)]
    dev = abs(float(np.mean(realized)) - 0.95)
    assert dev < 0.01
    report(12, "synthetic ingestion: realized homophily within 0.01 of target", t0,
           dev=f"{dev:.4f}")


@pytest.mark.skipif(
    "FAIRMP_POKEC_N_DIR" not in os.environ,
    reason="set FAIRMP_POKEC_N_DIR to a Pokec-n format dataset directory",
)
def test_criterion_12_pokec_n_homophily():
    t0 = time.time()
    ds = load_dataset(os.environ["FAIRMP_POKEC_N_DIR"], verbose=False)
    sh = sensitive_homophily(ds.graph, ds.sens)
    lh = label_homophily(ds.graph, ds.labels)
    assert abs(sh - 0.9530) < 0.001
    assert abs(lh - 0.7323) < 0.001
    report(12, "Pokec-n homophily coefficients", t0,
           sens=f"{sh:.4f}", label=f"{lh:.4f}")
