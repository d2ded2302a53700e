"""Adam optimizer, the deterministic pretraining loop, and checkpoint files.

Randomness flows from one root seed through named substreams: (0, epoch)
shuffles, (1, epoch, batch) draws the two views, (2,) initializes encoder
parameters, (3,) initializes objective state. Every run is therefore a
pure function of (dataset, config).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .augment import SeededRng, make_views
from .config import TrainConfig, config_echo_line, parse_echo_line
from .encoder import EncoderConfig, EncoderParams, encode_view, init_params
from .errors import (
    CheckpointParseError,
    CheckpointVersionError,
    ConfigError,
    DivergenceError,
    NonFiniteError,
    ShapeError,
)
from .graphs import Graph, disjoint_union
from .objectives import (
    ObjectiveKind,
    ObjectiveState,
    bgrl_loss,
    ema_update,
    init_objective_state,
    pair_loss,
)

CHECKPOINT_MAGIC = "GIPLAB-CKPT v1"


@dataclass(eq=False)
class AdamState:
    """Moment estimates keyed by parameter tensor identity."""

    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: list[T.Tensor], grads: dict[T.Tensor, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.step += 1
    t = state.step
    for p in params:
        g = grads.get(p)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        m = state.m.get(p)
        if m is None:
            m = state.m[p] = np.zeros_like(p.data)
            state.v[p] = np.zeros_like(p.data)
        v = state.v[p]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def _batch_index_lists(perm: np.ndarray, batch_size: int) -> list[np.ndarray]:
    """Consecutive chunks; a trailing singleton is dropped (losses need N >= 2)."""
    chunks = [perm[i : i + batch_size] for i in range(0, perm.size, batch_size)]
    if chunks and chunks[-1].size < 2:
        chunks.pop()
    return chunks


@dataclass(eq=False)
class TrainResult:
    params: EncoderParams
    objective_state: ObjectiveState
    trace: list[tuple[int, int, float]]  # (step, epoch, loss)
    encoder_config: EncoderConfig


def pretrain(dataset: list[Graph], config: TrainConfig) -> TrainResult:
    """Run the full self-supervised loop; deterministic per (dataset, config)."""
    if not dataset:
        raise ConfigError("pretrain needs a non-empty dataset")
    enc_cfg = config.encoder_config(dataset[0].feature_dim)
    root = SeededRng(config.seed)
    params = init_params(enc_cfg, root.substream(2))
    state = init_objective_state(config.objective, enc_cfg, params, root.substream(3))
    trainables = list(params.named_tensors().values()) + list(state.learnable_tensors().values())
    adam = AdamState(lr=config.lr)
    is_bgrl = config.objective.kind is ObjectiveKind.BGRL
    trace: list[tuple[int, int, float]] = []
    step = 0
    for epoch in range(config.epochs):
        shuffle_epoch = 0 if config.freeze_views else epoch
        perm = root.substream(0, shuffle_epoch).generator().permutation(len(dataset))
        for bi, idxs in enumerate(_batch_index_lists(perm, config.batch_size)):
            batch = disjoint_union([dataset[i] for i in idxs])
            view_rng = root.substream(1, shuffle_epoch, bi)
            v1, v2 = make_views(batch, config.view1, config.view2, view_rng)
            try:
                if is_bgrl:
                    # target forward never touches the tape: exact stop-gradient
                    target_emb = encode_view(v2, state.target, enc_cfg).data
                with T.Tape():
                    z1 = encode_view(v1, params, enc_cfg)
                    if is_bgrl:
                        loss = bgrl_loss(z1, target_emb)
                    else:
                        z2 = encode_view(v2, params, enc_cfg)
                        loss = pair_loss(config.objective, state, z1, z2)
                    value = loss.item()
                    grads = T.backward(loss)
            except NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite loss at step {step} (epoch {epoch}, "
                    f"graphs {sorted(int(i) for i in idxs)})"
                ) from exc
            adam_step(trainables, grads, adam)
            if is_bgrl:
                ema_update(state.target, params, config.objective.ema_decay)
            trace.append((step, epoch, value))
            step += 1
    return TrainResult(params=params, objective_state=state, trace=trace, encoder_config=enc_cfg)


# ---------------------------------------------------------------------------
# checkpoint files


def _ordered_tensors(params: EncoderParams, state: ObjectiveState | None) -> list[tuple[str, np.ndarray]]:
    out = [(name, t.data) for name, t in params.named_tensors().items()]
    if state is not None:
        out.extend((name, t.data) for name, t in state.named_tensors().items())
    return out


def save_checkpoint(
    params: EncoderParams,
    config: TrainConfig,
    path,
    objective_state: ObjectiveState | None = None,
) -> None:
    """Text checkpoint: magic, canonical config line, then named tensors."""
    lines = [CHECKPOINT_MAGIC, config_echo_line(config)]
    for name, data in _ordered_tensors(params, objective_state):
        rows, cols = data.shape
        lines.append(f"{name} {rows} {cols}")
        for r in range(rows):
            lines.append(" ".join("%.17g" % x for x in data[r]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(eq=False)
class Checkpoint:
    params: EncoderParams
    config: TrainConfig
    objective_tensors: dict[str, np.ndarray]


def load_checkpoint(path) -> Checkpoint:
    """Parse a checkpoint; raises with a line number on any malformation."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CheckpointParseError("line 1: empty checkpoint file")
    if lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointVersionError(
            f"line 1: expected {CHECKPOINT_MAGIC!r}, got {lines[0]!r}"
        )
    if len(lines) < 2:
        raise CheckpointParseError("line 2: missing config line")
    try:
        config = parse_echo_line(lines[1])
    except ConfigError as exc:
        raise CheckpointParseError(f"line 2: bad config echo: {exc}") from exc
    tensors: dict[str, np.ndarray] = {}
    i = 2
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        header = lines[i].split()
        if len(header) != 3:
            raise CheckpointParseError(f"line {i + 1}: expected 'name rows cols' header")
        name = header[0]
        try:
            rows, cols = int(header[1]), int(header[2])
        except ValueError:
            raise CheckpointParseError(f"line {i + 1}: non-integer tensor shape") from None
        if name in tensors:
            raise CheckpointParseError(f"line {i + 1}: duplicate tensor {name}")
        data = np.empty((rows, cols))
        for r in range(rows):
            lineno = i + 1 + r
            if lineno >= len(lines):
                raise CheckpointParseError(f"line {lineno + 1}: truncated tensor {name}")
            parts = lines[lineno].split()
            if len(parts) != cols:
                raise CheckpointParseError(
                    f"line {lineno + 1}: expected {cols} values, got {len(parts)}"
                )
            try:
                data[r] = [float(x) for x in parts]
            except ValueError:
                raise CheckpointParseError(f"line {lineno + 1}: non-numeric value") from None
        tensors[name] = data
        i += 1 + rows
    enc_cfg = config.encoder_config()
    weights, biases = [], []
    for layer, (fan_in, fan_out) in enumerate(enc_cfg.layer_dims, start=1):
        for prefix, dims, dest in (("W", (fan_in, fan_out), weights), ("b", (1, fan_out), biases)):
            name = f"{prefix}{layer}"
            if name not in tensors:
                raise CheckpointParseError(f"missing tensor {name}")
            if tensors[name].shape != dims:
                raise CheckpointParseError(
                    f"tensor {name} has shape {tensors[name].shape}, config implies {dims}"
                )
            dest.append(T.tensor(tensors.pop(name), requires_grad=True))
    params = EncoderParams(weights=tuple(weights), biases=tuple(biases))
    return Checkpoint(params=params, config=config, objective_tensors=tensors)
