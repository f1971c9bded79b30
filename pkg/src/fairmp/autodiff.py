"""Minimal reverse-mode autodiff over dense matrices.

An eager Wengert tape: every primitive evaluates immediately, appends a node
holding the forward value plus one vector-Jacobian-product closure per
parent, and returns a lightweight :class:`Var` handle. ``backward`` walks the
node list in reverse with a fixed accumulation order, so gradients are
bitwise reproducible. One backward pass per tape; higher-order derivatives
are out of scope (gradients are plain arrays, not Vars).

Broadcasting in the binary ops is limited to row/column vectors against
matrices, which is all the pipeline needs (bias rows, per-row scalings).

The only domain-specific primitive is ``incident_project``: forward computes
the per-class group probability gap ``delta @ softmax_rows(f)`` and backward
applies the closed-form softmax-Jacobian contraction, the same O(n*d) kernel
used by the forward propagation scheme.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse as _sparse

from .errors import BackwardBeforeForward, NonScalarLoss, ShapeMismatch


class Tape:
    """Append-only record of primitive operations."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __len__(self):
        return len(self._nodes)

    def leaf(self, value, name: str | None = None) -> "Var":
        return self._push(np.asarray(value, dtype=np.float64), (), (), name=name)

    def _push(self, value, parents, vjps, name=None) -> "Var":
        self._nodes.append(_Node(value, parents, vjps, name))
        return Var(self, len(self._nodes) - 1)


class _Node:
    __slots__ = ("value", "parents", "vjps", "name")

    def __init__(self, value, parents, vjps, name):
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.name = name


class Var:
    """Handle to one tape node; shape is fixed at creation."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: Tape, idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        return self.tape._nodes[self.idx].value

    @property
    def shape(self):
        return self.value.shape


def _as_var(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ShapeMismatch("operands live on different tapes")
        return x
    return tape.leaf(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if grad.shape == tuple(shape):
        return grad
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    if g.shape != tuple(shape):
        raise ShapeMismatch(f"cannot reduce grad {grad.shape} to {shape}")
    return g


def _binary(tape, a, b, out, vjp_a, vjp_b):
    return tape._push(out, (a.idx, b.idx), (vjp_a, vjp_b))


def add(a: Var, b) -> Var:
    b = _as_var(a.tape, b)
    out = a.value + b.value
    return _binary(
        a.tape, a, b, out,
        lambda g: _unbroadcast(g, a.shape),
        lambda g: _unbroadcast(g, b.shape),
    )


def sub(a: Var, b) -> Var:
    b = _as_var(a.tape, b)
    out = a.value - b.value
    return _binary(
        a.tape, a, b, out,
        lambda g: _unbroadcast(g, a.shape),
        lambda g: _unbroadcast(-g, b.shape),
    )


def scale(a: Var, k: float) -> Var:
    k = float(k)
    return a.tape._push(k * a.value, (a.idx,), (lambda g: k * g,))


def elementwise_mul(a: Var, b) -> Var:
    b = _as_var(a.tape, b)
    av, bv = a.value, b.value
    out = av * bv
    return _binary(
        a.tape, a, b, out,
        lambda g: _unbroadcast(g * bv, a.shape),
        lambda g: _unbroadcast(g * av, b.shape),
    )


def matmul(a: Var, b) -> Var:
    b = _as_var(a.tape, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeMismatch(f"matmul shapes {av.shape} @ {bv.shape}")
    return _binary(
        a.tape, a, b, av @ bv,
        lambda g: g @ bv.T,
        lambda g: av.T @ g,
    )


def spmm_const(a_sparse, x: Var) -> Var:
    """Constant sparse matrix times a dense variable."""
    if not _sparse.issparse(a_sparse):
        raise ShapeMismatch("spmm_const expects a scipy sparse constant")
    if x.value.ndim != 2 or a_sparse.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"spmm shapes {a_sparse.shape} @ {x.shape}")
    at = a_sparse.T.tocsr()
    return x.tape._push(a_sparse @ x.value, (x.idx,), (lambda g: at @ g,))


def relu(x: Var) -> Var:
    mask = x.value > 0
    return x.tape._push(np.where(mask, x.value, 0.0), (x.idx,), (lambda g: g * mask,))


def row_softmax(f: Var) -> Var:
    z = f.value - f.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return s * g - s * np.sum(s * g, axis=1, keepdims=True)

    return f.tape._push(s, (f.idx,), (vjp,))


def row_sum(x: Var) -> Var:
    out = x.value.sum(axis=1, keepdims=True)
    n_cols = x.shape[1]
    return x.tape._push(out, (x.idx,), (lambda g: np.repeat(g, n_cols, axis=1),))


def sum_all(x: Var) -> Var:
    shape = x.shape
    return x.tape._push(
        np.asarray(x.value.sum()), (x.idx,), (lambda g: np.broadcast_to(g, shape).copy(),)
    )


def l1_norm(x: Var) -> Var:
    sign = np.sign(x.value)  # subgradient 0 at exact zeros
    return x.tape._push(
        np.asarray(np.abs(x.value).sum()), (x.idx,), (lambda g: g * sign,)
    )


def clip_box(x: Var, radius: float) -> Var:
    """Element-wise clamp to [-radius, radius].

    Derivative 1 strictly inside the box, 0 at the boundary and outside --
    the subgradient convention for min(|u|, r)*sign(u).
    """
    if radius < 0:
        raise ShapeMismatch(f"radius must be >= 0, got {radius}")
    inside = np.abs(x.value) < radius
    out = np.clip(x.value, -radius, radius)
    return x.tape._push(out, (x.idx,), (lambda g: g * inside,))


def detach(x: Var) -> Var:
    """Forward identity with zero gradient."""
    return x.tape._push(x.value.copy(), (x.idx,), (lambda g: np.zeros(x.shape),))


def incident_project(f: Var, delta: np.ndarray) -> Var:
    """Per-class group probability gap ``delta @ softmax_rows(f)`` as (1, d).

    The backward pass is the closed-form contraction
    ``W*S - rowsum(W*S)*S`` with ``W = outer(delta, g)``, which costs
    O(n*d) instead of materializing any softmax Jacobian.
    """
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    if f.value.ndim != 2 or f.shape[0] != delta.shape[0]:
        raise ShapeMismatch(f"features {f.shape} vs incident vector {delta.shape}")
    z = f.value - f.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    p = (delta @ s).reshape(1, -1)

    def vjp(g):
        w = delta[:, None] * g.reshape(1, -1)
        m = w * s
        return m - m.sum(axis=1, keepdims=True) * s

    return f.tape._push(p, (f.idx,), (vjp,))


def cross_entropy(logits: Var, labels, mask) -> Var:
    """Mean negative log-likelihood of ``labels`` over ``mask`` rows."""
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    lv = logits.value
    if lv.ndim != 2 or labels.shape != (lv.shape[0],) or mask.shape != (lv.shape[0],):
        raise ShapeMismatch("cross_entropy shapes disagree")
    if not mask.any():
        raise ShapeMismatch("cross_entropy mask selects no rows")
    if labels.min() < 0 or labels.max() >= lv.shape[1]:
        raise ShapeMismatch("label outside logit columns")
    z = lv - lv.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    lognll = logsumexp - z[np.arange(lv.shape[0]), labels]
    count = int(mask.sum())
    value = np.asarray(lognll[mask].mean())
    s = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    onehot = np.zeros_like(lv)
    onehot[np.arange(lv.shape[0]), labels] = 1.0

    def vjp(g):
        return float(g) * (s - onehot) * (mask[:, None] / count)

    return logits.tape._push(value, (logits.idx,), (vjp,))


class GradientMap:
    """Gradients keyed by Var; untouched leaves read as zeros."""

    def __init__(self, tape: Tape, grads):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, var: Var) -> np.ndarray:
        if var.tape is not self._tape:
            raise BackwardBeforeForward("Var belongs to a different tape")
        g = self._grads[var.idx]
        if g is None:
            return np.zeros(var.shape)
        return g


def backward(loss: Var) -> GradientMap:
    """Accumulate exact gradients of a scalar loss for every tape node.

    Deterministic reverse-order accumulation. A tape supports exactly one
    backward pass; rebuild the forward computation for another.
    """
    tape = loss.tape
    if tape._consumed:
        raise BackwardBeforeForward(
            "tape already differentiated; run a fresh forward pass"
        )
    if np.size(loss.value) != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
    tape._consumed = True
    grads = [None] * len(tape._nodes)
    grads[loss.idx] = np.ones_like(loss.value)
    for i in range(loss.idx, -1, -1):
        g = grads[i]
        if g is None:
            continue
        node = tape._nodes[i]
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            if grads[parent] is None:
                grads[parent] = contrib
            else:
                grads[parent] = grads[parent] + contrib
    return GradientMap(tape, grads)


def finite_diff_check(build, point: np.ndarray, h: float = 1e-5, max_coords: int = 120, seed: int = 0) -> float:
    """Max relative error between tape gradients and central differences.

    ``build`` maps a leaf Var to a scalar loss Var; it is re-invoked on a
    fresh tape for every probe. All coordinates are probed up to
    ``max_coords``; beyond that a seeded random subset (>= 100 coords) is
    used.
    """
    if h <= 0:
        raise ShapeMismatch(f"step must be positive, got {h}")
    point = np.asarray(point, dtype=np.float64)

    tape = Tape()
    x = tape.leaf(point)
    analytic = backward(build(x))[x]

    def value_at(p):
        t = Tape()
        return float(build(t.leaf(p)).value)

    size = point.size
    if size <= max_coords:
        coords = np.arange(size)
    else:
        coords = np.random.default_rng(seed).choice(
            size, size=max(100, max_coords), replace=False
        )
    flat = point.ravel()
    worst = 0.0
    for k in coords:
        bump = np.zeros_like(flat)
        bump[k] = h
        fd = (value_at((flat + bump).reshape(point.shape))
              - value_at((flat - bump).reshape(point.shape))) / (2.0 * h)
        an = float(analytic.ravel()[k])
        denom = max(abs(fd), abs(an), 1.0e-8)
        worst = max(worst, abs(fd - an) / denom)
    return worst
