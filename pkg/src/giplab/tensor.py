"""Minimal reverse-mode automatic differentiation over dense 2-D float64 arrays.

A :class:`Tape` records operations while active (``with Tape() as t:``);
:func:`backward` walks the record in reverse and returns gradients for
every leaf that requires them. Without an active tape all operations run
in inference mode with zero bookkeeping. Dense kernels delegate to numpy
(BLAS); the sparse-times-dense product delegates to scipy's CSR kernel.

Every forward result is checked finite; NaN or Inf raises NonFiniteError
at the op that produced it rather than poisoning the loss downstream.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError, ShapeError
from .graphs import SparseAdjacency

EPS = 1e-8

_TAPES: list["Tape"] = []


class Tensor:
    """Dense (rows, cols) float64 matrix, optionally tracked on a tape."""

    __slots__ = ("data", "requires_grad", "is_leaf", "tape")

    def __init__(self, data, requires_grad: bool = False, *, _leaf: bool = True, _tape=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D matrices, got ndim={arr.ndim}")
        self.data = arr
        self.requires_grad = requires_grad
        self.is_leaf = _leaf
        self.tape = _tape

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


class Tape:
    """Append-only record of one forward pass; freed after backward."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)
        self._nodes.clear()

    def __len__(self) -> int:
        return len(self._nodes)


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def _finite_or_raise(arr: np.ndarray) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError("operation produced NaN or Inf")
    return arr


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    """Build an op result, recording it when a tape is active and useful."""
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(_finite_or_raise(data), requires_grad=track, _leaf=False, _tape=tape if track else None)
    if track:
        tape._nodes.append((out, inputs, vjp))
    return out


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar loss for every requires-grad leaf on its tape.

    The tape is cleared afterwards; a second backward on the same pass is
    an error by construction.
    """
    if loss.data.shape != (1, 1):
        raise ShapeError(f"backward needs a 1x1 loss, got {loss.shape}")
    tape = loss.tape
    if tape is None or tape._consumed:
        raise ShapeError("loss is not attached to a live tape")
    grads: dict[Tensor, np.ndarray] = {loss: np.ones((1, 1))}
    for out, inputs, vjp in reversed(tape._nodes):
        g = grads.pop(out, None)
        if g is None:
            continue
        for t, contrib in zip(inputs, vjp(g)):
            if contrib is None or not t.requires_grad:
                continue
            prev = grads.get(t)
            grads[t] = contrib if prev is None else prev + contrib
    result = {t: g for t, g in grads.items() if t.is_leaf and t.requires_grad}
    tape._nodes.clear()
    tape._consumed = True
    return result


# ---------------------------------------------------------------------------
# arithmetic


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")

    def vjp(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _emit(a.data @ b.data, (a, b), vjp)


def spmm(adj: SparseAdjacency, x: Tensor) -> Tensor:
    """Normalized-adjacency times dense matrix; backward reuses symmetry."""
    if adj.num_nodes != x.shape[0]:
        raise ShapeError(f"adjacency is {adj.num_nodes} nodes but input has {x.shape[0]} rows")
    csr = adj.csr

    def vjp(g):
        return (csr @ g,)

    return _emit(csr @ x.data, (x,), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")

    def vjp(g):
        return (g * b.data if a.requires_grad else None,
                g * a.data if b.requires_grad else None)

    return _emit(a.data * b.data, (a, b), vjp)


def add_bias_row(x: Tensor, bias: Tensor) -> Tensor:
    """Broadcast a (1, d) bias over the rows of x."""
    if bias.shape != (1, x.shape[1]):
        raise ShapeError(f"bias must be (1, {x.shape[1]}), got {bias.shape}")

    def vjp(g):
        return g, g.sum(axis=0, keepdims=True)

    return _emit(x.data + bias.data, (x, bias), vjp)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(x.data * c, (x,), lambda g: (g * c,))


def mul_const(x: Tensor, weights: np.ndarray) -> Tensor:
    """Elementwise product with a fixed weight matrix (no gradient into it)."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.data.shape:
        raise ShapeError(f"weight matrix shape {w.shape} != {x.shape}")
    return _emit(x.data * w, (x,), lambda g: (g * w,))


def transpose(x: Tensor) -> Tensor:
    return _emit(np.ascontiguousarray(x.data.T), (x,), lambda g: (g.T,))


# ---------------------------------------------------------------------------
# nonlinearities and reductions


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient 0 at exactly 0
    return _emit(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)) computed stably; backward is the logistic sigmoid."""
    d = x.data
    out = np.maximum(d, 0.0) + np.log1p(np.exp(-np.abs(d)))

    def vjp(g):
        return (g / (1.0 + np.exp(-d)),)

    return _emit(out, (x,), vjp)


def sum_all(x: Tensor) -> Tensor:
    shape = x.data.shape
    return _emit(np.array([[x.data.sum()]]), (x,), lambda g: (np.full(shape, g[0, 0]),))


def segment_sum(x: Tensor, membership: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows sharing a segment id; membership must be sorted non-decreasing."""
    m = np.asarray(membership, dtype=np.int64)
    if m.shape != (x.shape[0],):
        raise ShapeError(f"membership must have {x.shape[0]} entries")
    if m.size and (m.min() < 0 or m.max() >= num_segments):
        raise ShapeError("segment id out of range")
    if np.any(np.diff(m) < 0):
        raise ShapeError("membership must be sorted non-decreasing")
    counts = np.bincount(m, minlength=num_segments)
    out = np.zeros((num_segments, x.shape[1]))
    nonempty = np.flatnonzero(counts)
    if nonempty.size:
        starts = np.concatenate([[0], np.cumsum(counts)])[nonempty]
        out[nonempty] = np.add.reduceat(x.data, starts, axis=0)

    def vjp(g):
        return (g[m],)

    return _emit(out, (x,), vjp)


def logsumexp_rows(x: Tensor) -> Tensor:
    """Row-wise log-sum-exp as an (n, 1) column, max-subtracted for stability."""
    d = x.data
    mx = d.max(axis=1, keepdims=True)
    ex = np.exp(d - mx)
    s = ex.sum(axis=1, keepdims=True)

    def vjp(g):
        return (g * (ex / s),)

    return _emit(mx + np.log(s), (x,), vjp)


def diag_as_col(x: Tensor) -> Tensor:
    n, m = x.shape
    if n != m:
        raise ShapeError(f"diagonal extraction needs a square matrix, got {x.shape}")

    def vjp(g):
        out = np.zeros((n, n))
        np.fill_diagonal(out, g[:, 0])
        return (out,)

    return _emit(np.diagonal(x.data).reshape(n, 1).copy(), (x,), vjp)


# ---------------------------------------------------------------------------
# normalizations


def row_l2_normalize(x: Tensor) -> Tensor:
    """Scale every row to unit Euclidean norm; zero rows are guarded by EPS."""
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    r = np.maximum(norms, EPS)
    y = x.data / r

    def vjp(g):
        # unclamped rows: (g - y (y.g)) / r; clamped rows: sigma is constant
        dot = (g * y).sum(axis=1, keepdims=True)
        full = (g - y * dot) / r
        return (np.where(norms >= EPS, full, g / r),)

    return _emit(y, (x,), vjp)


def batch_standardize(x: Tensor) -> Tensor:
    """Zero-mean unit-variance per column under the population convention."""
    if x.shape[0] < 2:
        raise ShapeError("standardization needs at least 2 rows")
    n = x.shape[0]
    mu = x.data.mean(axis=0, keepdims=True)
    std = np.sqrt(((x.data - mu) ** 2).mean(axis=0, keepdims=True))
    sigma = np.maximum(std, EPS)
    y = (x.data - mu) / sigma

    def vjp(g):
        gm = g.mean(axis=0, keepdims=True)
        gy = (g * y).mean(axis=0, keepdims=True)
        full = (g - gm - y * gy) / sigma
        return (np.where(std >= EPS, full, (g - gm) / sigma),)

    return _emit(y, (x,), vjp)
