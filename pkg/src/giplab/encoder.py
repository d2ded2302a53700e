"""Multi-layer graph convolution encoder with additive graph readout.

Each layer computes ReLU(A_hat  H  W + b) with A_hat the symmetrically
normalized adjacency. A per-layer switch selects between the intra-only
operator and the extended one that includes sampled inter-graph edges:
layers with index < start_layer stay intra-only, later layers see the
extended structure. The readout sums node rows per original graph, so
inter-graph edges never change which graph a node is pooled into.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .augment import SeededRng
from .errors import ConfigError, ShapeError
from .graphs import GraphBatch, SparseAdjacency, normalized_adjacency

# Route propagation through dense BLAS once the extended operator is this
# full. Intra-only operators always take the CSR route, which keeps
# inference and p=0 outputs bit-identical across batch partitions.
DENSE_DENSITY = 0.15

MAX_LAYERS = 8


@dataclass(frozen=True)
class EncoderConfig:
    """Shape and switching parameters of the encoder."""

    input_dim: int
    hidden_dim: int = 64
    num_layers: int = 3
    gip_start_layer: int = 0  # first layer index that sees inter-graph edges

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be positive, got {self.hidden_dim}")
        if not 1 <= self.num_layers <= MAX_LAYERS:
            raise ConfigError(f"num_layers must be in [1, {MAX_LAYERS}], got {self.num_layers}")
        if not 0 <= self.gip_start_layer <= self.num_layers:
            raise ConfigError(
                f"gip_start_layer must be in [0, {self.num_layers}], got {self.gip_start_layer}"
            )

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_dim] * self.num_layers
        return list(zip(dims[:-1], dims[1:]))


@dataclass(eq=False)
class EncoderParams:
    """Per-layer weights and biases, tracked for gradient computation."""

    weights: tuple[T.Tensor, ...]
    biases: tuple[T.Tensor, ...]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def named_tensors(self) -> dict[str, T.Tensor]:
        out: dict[str, T.Tensor] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    def detached_copy(self, requires_grad: bool = False) -> "EncoderParams":
        return EncoderParams(
            weights=tuple(T.Tensor(w.data.copy(), requires_grad) for w in self.weights),
            biases=tuple(T.Tensor(b.data.copy(), requires_grad) for b in self.biases),
        )


def init_params(config: EncoderConfig, rng: SeededRng) -> EncoderParams:
    """Glorot-uniform weights with bound sqrt(6 / (fan_in + fan_out)); zero biases."""
    gen = rng.generator()
    weights, biases = [], []
    for fan_in, fan_out in config.layer_dims:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(T.tensor(gen.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True))
        biases.append(T.tensor(np.zeros((1, fan_out)), requires_grad=True))
    return EncoderParams(weights=tuple(weights), biases=tuple(biases))


def _propagate(adj: SparseAdjacency, h: T.Tensor) -> T.Tensor:
    if adj.has_inter and adj.density >= DENSE_DENSITY:
        return T.matmul(T.constant(adj.dense), h)
    return T.spmm(adj, h)


def _layer_operators(batch: GraphBatch, config: EncoderConfig) -> list[SparseAdjacency]:
    """Adjacency per layer honoring the start-layer switch."""
    intra = normalized_adjacency(batch, use_inter=False)
    extended = None
    ops = []
    for layer in range(config.num_layers):
        if layer >= config.gip_start_layer and batch.inter_edges.size:
            if extended is None:
                extended = normalized_adjacency(batch, use_inter=True)
            ops.append(extended)
        else:
            ops.append(intra)
    return ops


def encode_nodes(batch: GraphBatch, params: EncoderParams, config: EncoderConfig) -> T.Tensor:
    """Final node representations after all layers (ReLU on every layer)."""
    if batch.feature_dim != config.input_dim:
        raise ShapeError(
            f"batch features have dim {batch.feature_dim}, encoder expects {config.input_dim}"
        )
    if params.num_layers != config.num_layers:
        raise ShapeError(
            f"params have {params.num_layers} layers, config says {config.num_layers}"
        )
    h = T.constant(batch.features)
    for adj, w, b in zip(_layer_operators(batch, config), params.weights, params.biases):
        h = T.relu(T.add_bias_row(T.matmul(_propagate(adj, h), w), b))
    return h


def pool_graphs(node_reps: T.Tensor, batch: GraphBatch) -> T.Tensor:
    """Sum node rows per original graph membership."""
    if node_reps.shape[0] != batch.num_nodes:
        raise ShapeError(
            f"representation has {node_reps.shape[0]} rows for {batch.num_nodes} nodes"
        )
    return T.segment_sum(node_reps, batch.membership, batch.num_graphs)


def encode_view(view: GraphBatch, params: EncoderParams, config: EncoderConfig) -> T.Tensor:
    """Pooled graph embeddings of one (possibly augmented) batch view."""
    return pool_graphs(encode_nodes(view, params, config), view)


def layer_preactivations(
    batch: GraphBatch, params: EncoderParams, config: EncoderConfig
) -> list[np.ndarray]:
    """Pre-ReLU matrices per layer, computed exactly as encode_nodes does.

    Inference-mode helper for the additive-shift verifier: it needs the
    same propagation route and operation order as the encoder so that
    recomputed ReLU differences cancel bit-for-bit at p = 0.
    """
    if batch.feature_dim != config.input_dim:
        raise ShapeError(
            f"batch features have dim {batch.feature_dim}, encoder expects {config.input_dim}"
        )
    h = T.constant(batch.features)
    pres = []
    for adj, w, b in zip(_layer_operators(batch, config), params.weights, params.biases):
        pre = T.add_bias_row(T.matmul(_propagate(adj, h), w), b)
        pres.append(pre.data)
        h = T.relu(pre)
    return pres
