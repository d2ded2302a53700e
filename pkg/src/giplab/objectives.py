"""Self-supervised objectives: contrastive, discriminator, bootstrap, correlation.

Each loss is a pure function from one or two (N, d) view-embedding
matrices to a 1x1 tensor on the caller's tape. Stateful pieces live in
ObjectiveState: the bilinear discriminator matrix (trained jointly with
the encoder) and the bootstrap target network (updated by exponential
moving average, never by the optimizer).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .augment import SeededRng
from .encoder import EncoderConfig, EncoderParams, init_params
from .errors import ConfigError, ShapeError


class ObjectiveKind(enum.Enum):
    GRACE = "GRACE"
    MVGRL = "MVGRL"
    BGRL = "BGRL"
    GBT = "GBT"


@dataclass(frozen=True)
class ObjectiveConfig:
    """Scalar knobs of the objectives; lam=None resolves to 1/d at call time."""

    kind: ObjectiveKind
    tau: float = 0.5
    lam: float | None = None
    ema_decay: float = 0.99
    symmetrize: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.lam is not None and self.lam < 0:
            raise ConfigError(f"lam must be nonnegative, got {self.lam}")
        if not 0.0 < self.ema_decay < 1.0:
            raise ConfigError(f"ema_decay must be in (0, 1), got {self.ema_decay}")


@dataclass(eq=False)
class ObjectiveState:
    """Learnable/stateful tensors owned by an objective (may be empty)."""

    w_d: T.Tensor | None = None
    target: EncoderParams | None = None

    def learnable_tensors(self) -> dict[str, T.Tensor]:
        return {"W_D": self.w_d} if self.w_d is not None else {}

    def named_tensors(self) -> dict[str, T.Tensor]:
        """All objective-owned tensors, for checkpointing."""
        out = dict(self.learnable_tensors())
        if self.target is not None:
            for name, t in self.target.named_tensors().items():
                out[f"target.{name}"] = t
        return out


def init_objective_state(
    config: ObjectiveConfig,
    encoder_config: EncoderConfig,
    encoder_params: EncoderParams,
    rng: SeededRng,
) -> ObjectiveState:
    if config.kind is ObjectiveKind.MVGRL:
        d = encoder_config.hidden_dim
        bound = np.sqrt(6.0 / (2 * d))
        w_d = T.tensor(rng.generator().uniform(-bound, bound, size=(d, d)), requires_grad=True)
        return ObjectiveState(w_d=w_d)
    if config.kind is ObjectiveKind.BGRL:
        return ObjectiveState(target=encoder_params.detached_copy(requires_grad=False))
    return ObjectiveState()


def _check_pair(z1: T.Tensor, z2: T.Tensor) -> int:
    if z1.shape != z2.shape:
        raise ShapeError(f"view shapes differ: {z1.shape} vs {z2.shape}")
    n = z1.shape[0]
    if n < 2:
        raise ConfigError(f"two-view losses need at least 2 graphs per batch, got {n}")
    return n


def grace_loss(z1: T.Tensor, z2: T.Tensor, tau: float, symmetrize: bool = False) -> T.Tensor:
    """InfoNCE over cosine similarities with matched rows as positives.

    Per anchor i in view 1: -log softmax_j(s(z1_i, z2_j)/tau) at j = i,
    averaged over anchors. Candidates j range over the second view only.
    """
    n = _check_pair(z1, z2)

    def one_direction(a: T.Tensor, b: T.Tensor) -> T.Tensor:
        sims = T.scale(T.matmul(T.row_l2_normalize(a), T.transpose(T.row_l2_normalize(b))), 1.0 / tau)
        per_anchor = T.sub(T.logsumexp_rows(sims), T.diag_as_col(sims))
        return T.scale(T.sum_all(per_anchor), 1.0 / n)

    loss = one_direction(z1, z2)
    if symmetrize:
        loss = T.scale(T.add(loss, one_direction(z2, z1)), 0.5)
    return loss


def mvgrl_loss(z1: T.Tensor, z2: T.Tensor, w_d: T.Tensor) -> T.Tensor:
    """Negated Jensen-Shannon estimate under a bilinear discriminator.

    D(x, y) = sigmoid(x^T W_D y); matched pairs are positives, the
    N(N-1) mismatched in-batch pairs are negatives. Stable log-sigmoid
    forms: log D = -softplus(-logit), log(1 - D) = -softplus(logit).
    """
    n = _check_pair(z1, z2)
    d = z1.shape[1]
    if w_d.shape != (d, d):
        raise ShapeError(f"discriminator must be ({d}, {d}), got {w_d.shape}")
    logits = T.matmul(T.matmul(z1, w_d), T.transpose(z2))
    eye = np.eye(n)
    pos = T.scale(T.sum_all(T.mul_const(T.softplus(T.scale(logits, -1.0)), eye)), 1.0 / n)
    neg = T.scale(T.sum_all(T.mul_const(T.softplus(logits), 1.0 - eye)), 1.0 / (n * (n - 1)))
    return T.add(pos, neg)


def bgrl_loss(online: T.Tensor, target: np.ndarray) -> T.Tensor:
    """Mean squared distance to a stop-gradient target embedding."""
    tgt = np.asarray(target, dtype=np.float64)
    if tgt.shape != online.data.shape:
        raise ShapeError(f"target shape {tgt.shape} != online shape {online.shape}")
    diff = T.sub(online, T.constant(tgt))
    return T.scale(T.sum_all(T.mul(diff, diff)), 1.0 / online.shape[0])


def ema_update(target: EncoderParams, online: EncoderParams, decay: float) -> EncoderParams:
    """target <- decay * target + (1 - decay) * online, in place, off the tape."""
    if not 0.0 <= decay <= 1.0:
        raise ConfigError(f"decay must be in [0, 1], got {decay}")
    for t, o in zip(
        list(target.weights) + list(target.biases),
        list(online.weights) + list(online.biases),
    ):
        if t.data.shape != o.data.shape:
            raise ShapeError(f"EMA shape mismatch: {t.data.shape} vs {o.data.shape}")
        t.data *= decay
        t.data += (1.0 - decay) * o.data
    return target


def gbt_loss(z1: T.Tensor, z2: T.Tensor, lam: float | None = None) -> T.Tensor:
    """Redundancy-reduction loss on the cross-correlation of standardized views.

    C = (1/N) zhat1^T zhat2 with per-column population standardization;
    loss = sum_i (1 - C_ii)^2 + lam * sum_{i != j} C_ij^2, lam default 1/d.
    """
    n = _check_pair(z1, z2)
    d = z1.shape[1]
    if lam is None:
        lam = 1.0 / d
    c = T.scale(T.matmul(T.transpose(T.batch_standardize(z1)), T.batch_standardize(z2)), 1.0 / n)
    diag_err = T.sub(T.constant(np.ones((d, 1))), T.diag_as_col(c))
    on_diag = T.sum_all(T.mul(diag_err, diag_err))
    off = T.mul_const(c, 1.0 - np.eye(d))
    return T.add(on_diag, T.scale(T.sum_all(T.mul(off, off)), lam))


def pair_loss(
    config: ObjectiveConfig, state: ObjectiveState, z1: T.Tensor, z2: T.Tensor
) -> T.Tensor:
    """Dispatch for losses that read two same-network view embeddings.

    BGRL is excluded: its second input comes from the target network and
    is produced by the training loop, not by this dispatcher.
    """
    if config.kind is ObjectiveKind.GRACE:
        return grace_loss(z1, z2, config.tau, config.symmetrize)
    if config.kind is ObjectiveKind.MVGRL:
        return mvgrl_loss(z1, z2, state.w_d)
    if config.kind is ObjectiveKind.GBT:
        return gbt_loss(z1, z2, config.lam)
    raise ConfigError(f"pair_loss does not handle {config.kind.value}")
