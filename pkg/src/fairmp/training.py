"""Node classification pipeline: MLP transform, propagation, Adam training.

Two forward paths exist on purpose. The plain-numpy path
(:func:`forward_pipeline`) reuses the propagation module and is what the
evaluator runs; the tape path (:func:`forward_pipeline_tape`) rebuilds the
identical computation from autodiff primitives so the whole pipeline,
including the unrolled fair propagation iterations and their dual updates,
is differentiated end to end. Tests pin the two paths together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .datasets import DatasetBundle
from .errors import (
    DimensionMismatch,
    NoPositivesInGroup,
    NumericalError,
    SingleGroup,
    ValidationError,
)
from .graph import (
    NormalizedAdjacency,
    SensitiveVector,
    incident_vector,
    normalized_adjacency,
    spmm,
)
from .metrics import MetricsRecord, demographic_parity, equal_opportunity
from .propagation import FmpConfig, appnp_step, fmp_forward

SCHEMES = ("none", "gcn", "sgc", "appnp", "fmp")


@dataclass
class MlpParams:
    """2-layer perceptron weights: d_in -> hidden -> d_out."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @staticmethod
    def init(d_in: int, hidden: int, d_out: int, seed) -> "MlpParams":
        # uniform +-sqrt(6/(fan_in+fan_out)) per layer, zero biases
        rng = np.random.default_rng(seed)
        lim1 = np.sqrt(6.0 / (d_in + hidden))
        lim2 = np.sqrt(6.0 / (hidden + d_out))
        return MlpParams(
            W1=rng.uniform(-lim1, lim1, size=(d_in, hidden)),
            b1=np.zeros(hidden),
            W2=rng.uniform(-lim2, lim2, size=(hidden, d_out)),
            b2=np.zeros(d_out),
        )

    def copy(self) -> "MlpParams":
        return MlpParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def as_dict(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in (self.W1, self.b1, self.W2, self.b2)])

    def with_flat(self, flat: np.ndarray) -> "MlpParams":
        out, k = [], 0
        for p in (self.W1, self.b1, self.W2, self.b2):
            out.append(flat[k:k + p.size].reshape(p.shape))
            k += p.size
        return MlpParams(*out)


@dataclass
class TrainConfig:
    lr: float = 0.001
    weight_decay: float = 1e-5
    epochs: int = 300
    seed: int = 0
    scheme: str = "fmp"
    fmp: FmpConfig = field(default_factory=FmpConfig)
    alpha: float | None = None  # appnp teleport; defaults to the fmp gamma
    split: tuple = (0.5, 0.25, 0.25)
    dp_reg_weight: float = 0.0
    hidden: int = 64
    detach_dual: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValidationError(f"split ratios must sum to 1, got {self.split}")

    @property
    def appnp_alpha(self) -> float:
        return self.fmp.gamma if self.alpha is None else self.alpha


def train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    fmp_kwargs = {}
    for key, dst in (("lambda_s", "lambda_s"), ("lambda_f", "lambda_f"), ("iterations", "iterations")):
        if key in d:
            fmp_kwargs[dst] = d.pop(key)
    if "split" in d:
        d["split"] = tuple(d["split"])
    cfg = TrainConfig(**d, fmp=FmpConfig(**fmp_kwargs)) if fmp_kwargs else TrainConfig(**d)
    return cfg


def split_nodes(n: int, ratios, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random disjoint covering train/val/test masks, deterministic per seed."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"split ratios must sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    masks = []
    bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, n)]
    for lo, hi in bounds:
        m = np.zeros(n, dtype=bool)
        m[order[lo:hi]] = True
        masks.append(m)
    return tuple(masks)


def _mlp_numpy(params: MlpParams, x: np.ndarray) -> np.ndarray:
    h = np.maximum(x @ params.W1 + params.b1, 0.0)
    return h @ params.W2 + params.b2


def forward_pipeline(
    params: MlpParams,
    x_ori: np.ndarray,
    a: NormalizedAdjacency,
    sens: SensitiveVector,
    cfg: TrainConfig,
) -> np.ndarray:
    """Logits of the full pipeline (plain numpy path)."""
    x_trans = _mlp_numpy(params, np.asarray(x_ori, dtype=np.float64))
    if cfg.scheme == "none":
        return x_trans
    if cfg.scheme == "gcn":
        return spmm(a, x_trans)
    if cfg.scheme == "sgc":
        f = x_trans
        for _ in range(cfg.fmp.iterations):
            f = spmm(a, f)
        return f
    if cfg.scheme == "appnp":
        f = x_trans
        for _ in range(cfg.fmp.iterations):
            f = appnp_step(a, f, x_trans, cfg.appnp_alpha)
        return f
    return fmp_forward(x_trans, a, sens, cfg.fmp)[0]


def _fair_grad_expr(f_var: ad.Var, u_var: ad.Var, delta_col: ad.Var, half_n: float) -> ad.Var:
    # closed-form gradient of <delta @ SF(F), (n/2) u> rebuilt from
    # primitives so the tape can differentiate through it; the n/2 factor
    # applies the per-node fairness weighting (see fmp_forward)
    s = ad.row_softmax(f_var)
    us = ad.matmul(delta_col, ad.scale(u_var, half_n))
    m = ad.elementwise_mul(us, s)
    return ad.sub(m, ad.elementwise_mul(ad.row_sum(m), s))


def forward_pipeline_tape(
    tape: ad.Tape,
    pvars: dict,
    x_ori: np.ndarray,
    a: NormalizedAdjacency,
    sens: SensitiveVector,
    cfg: TrainConfig,
) -> ad.Var:
    """Tape twin of :func:`forward_pipeline`; ``pvars`` holds Vars W1,b1,W2,b2."""
    x = tape.leaf(np.asarray(x_ori, dtype=np.float64))
    h = ad.relu(ad.add(ad.matmul(x, pvars["W1"]), pvars["b1"]))
    x_trans = ad.add(ad.matmul(h, pvars["W2"]), pvars["b2"])
    if cfg.scheme == "none":
        return x_trans
    csr = a.values
    if cfg.scheme == "gcn":
        return ad.spmm_const(csr, x_trans)
    if cfg.scheme == "sgc":
        f = x_trans
        for _ in range(cfg.fmp.iterations):
            f = ad.spmm_const(csr, f)
        return f
    if cfg.scheme == "appnp":
        alpha = cfg.appnp_alpha
        f = x_trans
        for _ in range(cfg.fmp.iterations):
            f = ad.add(ad.scale(x_trans, alpha), ad.scale(ad.spmm_const(csr, f), 1.0 - alpha))
        return f
    gamma, beta = cfg.fmp.gamma, cfg.fmp.beta
    half_n = 0.5 * sens.n
    d_out = x_trans.shape[1]
    delta_col = tape.leaf(sens.delta.reshape(-1, 1))
    f = x_trans
    u = tape.leaf(np.zeros((1, d_out)))
    for _ in range(cfg.fmp.iterations):
        x_agg = ad.add(ad.scale(x_trans, gamma), ad.scale(ad.spmm_const(csr, f), 1.0 - gamma))
        f_bar = ad.sub(x_agg, ad.scale(_fair_grad_expr(f, u, delta_col, half_n), gamma))
        u_bar = ad.add(u, ad.scale(ad.incident_project(f_bar, sens.delta), beta))
        u_new = ad.clip_box(u_bar, cfg.fmp.lambda_f)
        if cfg.detach_dual:
            u_new = ad.detach(u_new)
        f_new = ad.sub(x_agg, ad.scale(_fair_grad_expr(f, u_new, delta_col, half_n), gamma))
        f, u = f_new, u_new
    return f


@dataclass
class _AdamState:
    m: dict
    v: dict
    t: int = 0


def _adam_step(params: dict, grads: dict, st: _AdamState, lr, wd,
               beta1=0.9, beta2=0.999, eps=1e-8) -> dict:
    st.t += 1
    out = {}
    for k, p in params.items():
        g = grads[k] + wd * p
        st.m[k] = beta1 * st.m[k] + (1 - beta1) * g
        st.v[k] = beta2 * st.v[k] + (1 - beta2) * g * g
        m_hat = st.m[k] / (1 - beta1 ** st.t)
        v_hat = st.v[k] / (1 - beta2 ** st.t)
        out[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


def _predictions(logits: np.ndarray) -> np.ndarray:
    # argmax with ties toward the lower class index
    return np.argmax(logits, axis=1)


def evaluate(
    params: MlpParams,
    dataset: DatasetBundle,
    cfg: TrainConfig,
    mask: np.ndarray,
) -> MetricsRecord:
    """Accuracy / DP / EO of the pipeline's hard predictions on ``mask``.

    A group without ground-truth positives makes EO undefined; it is
    reported as None rather than raised.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DimensionMismatch("evaluation mask selects no nodes")
    a = normalized_adjacency(dataset.graph)
    logits = forward_pipeline(params, dataset.features, a, dataset.sens, cfg)
    yhat = _predictions(logits)
    acc = float((yhat[mask] == dataset.labels[mask]).mean())
    sens_m = incident_vector(dataset.sens.s[mask])
    dp = demographic_parity(yhat[mask], sens_m)
    try:
        eo = equal_opportunity(yhat[mask], dataset.labels[mask], sens_m)
    except NoPositivesInGroup:
        eo = None
    return MetricsRecord(accuracy=acc, dp=dp, eo=eo)


def train(cfg: TrainConfig, dataset: DatasetBundle):
    """Full-batch Adam on masked cross-entropy; returns (params, metrics, log).

    Model selection keeps the epoch with the best validation accuracy
    (earliest on ties); test metrics come from that snapshot. The log has
    one (epoch, train_loss, val_acc, val_dp) row per epoch.
    """
    if np.unique(dataset.sens.s).size < 2:
        raise SingleGroup("training requires both sensitive groups")
    n = dataset.n
    train_mask, val_mask, test_mask = split_nodes(n, cfg.split, cfg.seed)
    if not dataset.labels[train_mask].size:
        raise DimensionMismatch("empty training mask")
    d_in = dataset.features.shape[1]
    d_out = int(dataset.labels.max()) + 1
    if d_out < 2:
        d_out = 2
    params = MlpParams.init(d_in, cfg.hidden, d_out, cfg.seed)
    a = normalized_adjacency(dataset.graph)

    pdict = params.as_dict()
    state = _AdamState(m={k: np.zeros_like(v) for k, v in pdict.items()},
                       v={k: np.zeros_like(v) for k, v in pdict.items()})
    try:
        val_sens = incident_vector(dataset.sens.s[val_mask])
    except SingleGroup:
        val_sens = None
    best = (-1.0, None)  # (val acc, params snapshot)
    log = []
    for epoch in range(cfg.epochs):
        tape = ad.Tape()
        pvars = {k: tape.leaf(v, name=k) for k, v in pdict.items()}
        logits = forward_pipeline_tape(tape, pvars, dataset.features, a, dataset.sens, cfg)
        loss = ad.cross_entropy(logits, dataset.labels, train_mask)
        if cfg.dp_reg_weight > 0.0:
            gap = ad.incident_project(logits, dataset.sens.delta)
            loss = ad.add(loss, ad.scale(ad.l1_norm(gap), cfg.dp_reg_weight))
        loss_val = float(loss.value)
        if not np.isfinite(loss_val):
            raise NumericalError(
                f"training loss became non-finite at epoch {epoch} "
                f"(scheme={cfg.scheme}, lr={cfg.lr})"
            )
        grads = ad.backward(loss)
        gdict = {k: grads[v] for k, v in pvars.items()}

        yhat = _predictions(logits.value)
        val_acc = float((yhat[val_mask] == dataset.labels[val_mask]).mean())
        val_dp = (demographic_parity(yhat[val_mask], val_sens)
                  if val_sens is not None else float("nan"))
        log.append((epoch, loss_val, val_acc, val_dp))
        # keep the last epoch among validation-accuracy ties: training keeps
        # shrinking the loss (and any fairness penalty) after accuracy saturates
        if val_acc >= best[0]:
            best = (val_acc, MlpParams(**{k: v.copy() for k, v in pdict.items()}))

        pdict = _adam_step(pdict, gdict, state, cfg.lr, cfg.weight_decay)

    final_params = best[1] if best[1] is not None else MlpParams(**pdict)
    metrics = evaluate(final_params, dataset, cfg, test_mask)
    return final_params, metrics, log
