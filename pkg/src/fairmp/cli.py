"""Command-line surface.

Subcommands: generate, propagate, bias-sweep, hyper-sweep, train, eval,
self-check. Global flags --seed, --threads, --out. Every command writes a
meta.json next to its outputs recording the full invocation, seeds, and
content hashes of the inputs so runs can be reproduced exactly. Exit codes:
0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .datasets import (
    REQUIRED_FILES,
    DatasetBundle,
    load_dataset,
    make_biased_classification,
    write_dataset,
)
from .errors import NoPositivesInGroup, NumericalError, ValidationError
from .graph import (
    label_homophily,
    laplacian,
    normalized_adjacency,
    sensitive_homophily,
    spmm,
)
from .metrics import MetricsRecord, demographic_parity, equal_opportunity
from .propagation import (
    FmpConfig,
    appnp_step,
    fairness_energy,
    fmp_forward,
    smoothness_energy,
)
from .sweeps import (
    BIAS_SWEEP_COLUMNS,
    HYPER_SWEEP_COLUMNS,
    LAMBDA_F_GRID,
    LAMBDA_S_GRID,
    SweepSpec,
    run_bias_sweep,
    run_hyper_grid,
    self_check,
)
from .synth import GmmParams, SbmParams, sample_gmm_features, sample_sbm
from .training import train, train_config_from_dict


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_dataset_dir(directory) -> dict:
    out = {}
    for name in REQUIRED_FILES:
        p = os.path.join(directory, name)
        if os.path.exists(p):
            out[name] = _sha256(p)
    return out


def _write_meta(out_dir, command, args_ns, extra=None) -> None:
    meta = {
        "command": command,
        "config": {k: v for k, v in vars(args_ns).items() if k != "func"},
        "input_hashes": _hash_dataset_dir(args_ns.data) if getattr(args_ns, "data", None) else {},
    }
    if extra:
        meta.update(extra)
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, default=str)


def _parse_vector(text) -> np.ndarray:
    return np.array([float(t) for t in text.split(",") if t.strip() != ""])


def _parse_matrix(text) -> np.ndarray:
    return np.array([[float(t) for t in row.split(",")] for row in text.split(";")])


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _resolve_dataset(args) -> DatasetBundle:
    if getattr(args, "data", None):
        return load_dataset(args.data)
    if getattr(args, "synthetic", False):
        return make_biased_classification(seed=args.seed)
    raise ValidationError("provide --data DIR or --synthetic")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = _out_dir(args)
    params = SbmParams(n=args.n, rho_d=args.rho_d, eps_sens=args.eps_sens, c=args.c)
    mu1, mu2 = _parse_vector(args.mu1), _parse_vector(args.mu2)
    sigma = _parse_matrix(args.sigma) if args.sigma else np.eye(mu1.shape[0])
    gmm = GmmParams(c=args.c, mu1=mu1, sigma1=sigma, mu2=mu2, sigma2=sigma)
    graph, sens = sample_sbm(params, np.random.SeedSequence([args.seed, 0]))
    features = sample_gmm_features(gmm, sens, np.random.SeedSequence([args.seed, 1]))
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 2]))
    p_pos = np.where(sens.s > 0, 0.5 + args.label_corr, 0.5 - args.label_corr)
    labels = (rng.random(args.n) < p_pos).astype(np.int64)
    if args.label_shift > 0:
        extra = args.label_shift * (2.0 * labels - 1.0) + rng.standard_normal(args.n)
        features = np.column_stack([features, extra])

    bundle = DatasetBundle(graph=graph, features=features, labels=labels, sens=sens)
    write_dataset(out, bundle)
    realized = {
        "n": graph.n,
        "edges": int(graph.num_edges),
        "density": 2.0 * graph.num_edges / (graph.n * (graph.n - 1)),
        "sens_homophily": sensitive_homophily(graph, sens) if graph.num_edges else None,
        "label_homophily": label_homophily(graph, labels) if graph.num_edges else None,
    }
    _write_meta(out, "generate", args, extra={"realized": realized})
    print(f"wrote dataset to {out}: " + json.dumps(realized))
    return 0


def _propagate_records(scheme, x, a, sens, cfg, alpha):
    lap = laplacian(a)
    records = []
    if scheme == "fmp":
        f, traj = fmp_forward(x, a, sens, cfg)
        for k in range(cfg.iterations):
            records.append({
                "iter": k + 1,
                "h_s": traj.smooth_energy[k],
                "h_f": traj.fair_energy[k],
                "u_linf": traj.dual_maxabs()[k],
            })
        return f, records
    f = x
    iters = 1 if scheme == "gcn" else cfg.iterations
    for k in range(iters):
        if scheme in ("gcn", "sgc"):
            f = spmm(a, f)
        else:  # appnp
            f = appnp_step(a, f, x, alpha)
        records.append({
            "iter": k + 1,
            "h_s": smoothness_energy(f, lap, x, cfg.lambda_s),
            "h_f": fairness_energy(f, sens, cfg.lambda_f),
            "u_linf": 0.0,
        })
    return f, records


def cmd_propagate(args) -> int:
    out = _out_dir(args)
    ds = load_dataset(args.data)
    a = normalized_adjacency(ds.graph)
    cfg = FmpConfig(lambda_s=args.lambda_s, lambda_f=args.lambda_f, iterations=args.iters)
    alpha = args.alpha if args.alpha is not None else cfg.gamma
    f, records = _propagate_records(args.scheme, ds.features, a, ds.sens, cfg, alpha)
    np.savetxt(os.path.join(out, "features_out.csv"), f, delimiter=",", fmt="%.17g")
    write_csv(os.path.join(out, "energy.csv"), ("iter", "h_s", "h_f", "u_linf"), records)
    _write_meta(out, "propagate", args)
    print(f"wrote {out}/features_out.csv and {out}/energy.csv")
    return 0


def cmd_bias_sweep(args) -> int:
    out = _out_dir(args)
    fixed = {"n": args.n, "rho_d": args.rho_d, "eps_sens": args.eps_sens, "c": args.c}
    if args.mu1:
        fixed["mu1"] = _parse_vector(args.mu1)
    if args.mu2:
        fixed["mu2"] = _parse_vector(args.mu2)
    if args.sigma:
        fixed["sigma"] = _parse_matrix(args.sigma)
    grid = tuple(int(v) if args.param == "n" else float(v)
                 for v in args.grid.split(","))
    spec = SweepSpec(param=args.param, grid=grid, fixed=fixed,
                     seeds=args.seeds, base_seed=args.seed)
    rows = run_bias_sweep(spec, threads=args.threads)
    write_csv(os.path.join(out, "bias_sweep.csv"), BIAS_SWEEP_COLUMNS, rows)
    _write_meta(out, "bias-sweep", args)
    print(f"wrote {out}/bias_sweep.csv ({len(rows)} rows)")
    return 0


def cmd_hyper_sweep(args) -> int:
    out = _out_dir(args)
    ds = _resolve_dataset(args)
    ls_grid = tuple(float(v) for v in args.lambda_s_grid.split(","))
    lf_grid = tuple(float(v) for v in args.lambda_f_grid.split(","))
    rows = run_hyper_grid(
        ds, lambda_s_grid=ls_grid, lambda_f_grid=lf_grid,
        seeds=args.seeds, base_seed=args.seed, threads=args.threads,
        epochs=args.epochs, scheme=args.scheme, iterations=args.iters,
    )
    write_csv(os.path.join(out, "hyper_sweep.csv"), HYPER_SWEEP_COLUMNS, rows)
    _write_meta(out, "hyper-sweep", args)
    print(f"wrote {out}/hyper_sweep.csv ({len(rows)} rows)")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    ds = _resolve_dataset(args)
    cfg_dict = {}
    if args.config:
        if args.config.endswith(".json"):
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg_dict = json.load(fh)
        else:
            try:
                import tomllib as toml
            except ModuleNotFoundError:
                import tomli as toml
            with open(args.config, "rb") as fh:
                cfg_dict = toml.load(fh)
    cfg_dict.setdefault("seed", args.seed)
    cfg = train_config_from_dict(cfg_dict)
    _, metrics, log = train(cfg, ds)
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(metrics.to_json() + "\n")
    write_csv(
        os.path.join(out, "log.csv"),
        ("epoch", "train_loss", "val_acc", "val_dp"),
        [{"epoch": e, "train_loss": l, "val_acc": a_, "val_dp": d}
         for e, l, a_, d in log],
    )
    _write_meta(out, "train", args, extra={"train_config": cfg_dict})
    print(metrics.to_json())
    return 0


def cmd_eval(args) -> int:
    out = _out_dir(args)
    ds = load_dataset(args.data)
    logits = np.loadtxt(args.features, delimiter=",", ndmin=2)
    if logits.shape[0] != ds.n:
        raise ValidationError(
            f"features file has {logits.shape[0]} rows, dataset has {ds.n}"
        )
    yhat = np.argmax(logits, axis=1)
    acc = float((yhat == ds.labels).mean())
    dp = demographic_parity(yhat, ds.sens)
    try:
        eo = equal_opportunity(yhat, ds.labels, ds.sens)
    except NoPositivesInGroup:
        eo = None
    rec = MetricsRecord(accuracy=acc, dp=dp, eo=eo)
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(rec.to_json() + "\n")
    _write_meta(out, "eval", args)
    print(rec.to_json())
    return 0


def cmd_self_check(args) -> int:
    report = self_check()
    return 0 if report.ok else 2


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairmp", description=__doc__)
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--threads", type=int, default=1, help="sweep worker processes")
    p.add_argument("--out", type=str, default="fairmp_out", help="output directory")
    sub = p.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("generate", help="sample a synthetic dataset directory")
    g.add_argument("--n", type=int, default=10_000)
    g.add_argument("--rho-d", dest="rho_d", type=float, default=1e-3)
    g.add_argument("--eps-sens", dest="eps_sens", type=float, default=0.95)
    g.add_argument("--c", type=float, default=0.5)
    g.add_argument("--mu1", type=str, default="0,1")
    g.add_argument("--mu2", type=str, default="1,0")
    g.add_argument("--sigma", type=str, default="",
                   help="rows separated by ';', e.g. '1,0;0,2' (default identity)")
    g.add_argument("--label-corr", dest="label_corr", type=float, default=0.3)
    g.add_argument("--label-shift", dest="label_shift", type=float, default=0.0,
                   help="if > 0, append a label-signal feature column")
    g.set_defaults(func=cmd_generate)

    pr = sub.add_parser("propagate", help="run a propagation scheme over a dataset")
    pr.add_argument("--data", type=str, required=True)
    pr.add_argument("--scheme", choices=("gcn", "sgc", "appnp", "fmp"), default="fmp")
    pr.add_argument("--lambda-s", dest="lambda_s", type=float, default=1.0)
    pr.add_argument("--lambda-f", dest="lambda_f", type=float, default=10.0)
    pr.add_argument("--iters", type=int, default=10)
    pr.add_argument("--alpha", type=float, default=None, help="appnp teleport")
    pr.set_defaults(func=cmd_propagate)

    b = sub.add_parser("bias-sweep", help="aggregation bias amplification sweep")
    b.add_argument("--param", choices=("eps_sens", "rho_d", "n", "c"), required=True)
    b.add_argument("--grid", type=str, required=True, help="comma-separated values")
    b.add_argument("--seeds", type=int, default=5)
    b.add_argument("--n", type=int, default=10_000)
    b.add_argument("--rho-d", dest="rho_d", type=float, default=1e-3)
    b.add_argument("--eps-sens", dest="eps_sens", type=float, default=0.95)
    b.add_argument("--c", type=float, default=0.5)
    b.add_argument("--mu1", type=str, default="")
    b.add_argument("--mu2", type=str, default="")
    b.add_argument("--sigma", type=str, default="")
    b.set_defaults(func=cmd_bias_sweep)

    h = sub.add_parser("hyper-sweep", help="(lambda_s, lambda_f) training grid")
    h.add_argument("--data", type=str, default=None)
    h.add_argument("--synthetic", action="store_true")
    h.add_argument("--lambda-s-grid", dest="lambda_s_grid", type=str,
                   default=",".join(str(v) for v in LAMBDA_S_GRID))
    h.add_argument("--lambda-f-grid", dest="lambda_f_grid", type=str,
                   default=",".join(str(v) for v in LAMBDA_F_GRID))
    h.add_argument("--seeds", type=int, default=1)
    h.add_argument("--epochs", type=int, default=300)
    h.add_argument("--iters", type=int, default=10)
    h.add_argument("--scheme", choices=("none", "gcn", "sgc", "appnp", "fmp"),
                   default="fmp")
    h.set_defaults(func=cmd_hyper_sweep)

    t = sub.add_parser("train", help="train the pipeline once")
    t.add_argument("--data", type=str, default=None)
    t.add_argument("--synthetic", action="store_true")
    t.add_argument("--config", type=str, default=None, help="TOML or JSON file")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="metrics for a saved logits/features file")
    e.add_argument("--data", type=str, required=True)
    e.add_argument("--features", type=str, required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("self-check", help="gradient, prox, collapse and scaling checks")
    s.set_defaults(func=cmd_self_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
