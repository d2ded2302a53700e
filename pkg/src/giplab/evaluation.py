"""Frozen-encoder evaluation.

Three instruments over pooled graph embeddings: a class-separation score
(mean centroid distance over mean intra-class dispersion), a deterministic
linear probe with stratified k-fold cross-validation, and a verifier for
the additive decomposition of inter-graph message passing (the pooled
output on an augmented batch equals the clean output plus an explicit
per-node ReLU-difference term).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import tensor as T
from .augment import SeededRng, gip_edges
from .encoder import EncoderConfig, EncoderParams, encode_view, layer_preactivations
from .errors import ConfigError, NonFiniteError, ShapeError
from .graphs import Graph, GraphBatch, disjoint_union

CMSP_EPS = 1e-12


@dataclass(frozen=True)
class EmbeddingTable:
    """One embedding row per graph plus its class label."""

    matrix: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if m.ndim != 2:
            raise ShapeError(f"embedding matrix must be 2-D, got shape {m.shape}")
        if lab.ndim != 1 or lab.shape[0] != m.shape[0]:
            raise ShapeError(
                f"labels must be ({m.shape[0]},), got shape {lab.shape}"
            )
        if not np.all(np.isfinite(m)):
            raise NonFiniteError("embedding table contains non-finite entries")
        if lab.size and lab.min() < 0:
            raise ConfigError("labels must be non-negative class ids")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", lab)

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def embed_dataset(
    dataset: list[Graph], params: EncoderParams, config: EncoderConfig
) -> EmbeddingTable:
    """Embed every graph with the frozen encoder; no augmentation.

    The whole dataset runs as one clean disjoint-union batch. With no
    inter edges the propagation is block-diagonal and sparse, so each
    graph's row is bit-identical to embedding it alone.
    """
    if not dataset:
        raise ConfigError("cannot embed an empty dataset")
    batch = disjoint_union(dataset)
    pooled = encode_view(batch, params, config)
    labels = np.array([g.label for g in dataset], dtype=np.int64)
    return EmbeddingTable(pooled.data, labels)


@dataclass(frozen=True)
class CmspResult:
    """Separation-over-dispersion score with its ingredients."""

    value: float
    separation: float
    dispersion: float
    per_class_dispersion: np.ndarray
    degenerate: bool


def cmsp(table: EmbeddingTable) -> CmspResult:
    """Mean centroid distance divided by mean intra-class dispersion.

    Per class k: D_k = (1/n_k^2) * sum over ordered pairs i != j of
    ||x_i - x_j||; singleton classes contribute 0. The numerator averages
    Euclidean distances between class centroids over unordered pairs. The
    denominator is floored at 1e-12; a floored (collapsed-classes) result
    is flagged degenerate.
    """
    classes = np.unique(table.labels)
    if classes.size < 2:
        raise ConfigError(
            f"need at least 2 classes for a separation score, got {classes.size}"
        )
    dispersions = []
    centroids = []
    for c in classes:
        rows = table.matrix[table.labels == c]
        centroids.append(rows.mean(axis=0))
        if rows.shape[0] < 2:
            dispersions.append(0.0)
        else:
            # ordered pairs double the unordered pairwise sum
            dispersions.append(2.0 * pdist(rows).sum() / rows.shape[0] ** 2)
    per_class = np.array(dispersions)
    d_avg = float(per_class.mean())
    separation = float(pdist(np.stack(centroids)).mean())
    degenerate = d_avg < CMSP_EPS
    value = separation / max(d_avg, CMSP_EPS)
    return CmspResult(value, separation, d_avg, per_class, degenerate)


@dataclass(frozen=True)
class ProbeResult:
    mean_accuracy: float
    std_accuracy: float
    fold_accuracies: np.ndarray


PROBE_STEPS = 500
PROBE_LR = 0.1
PROBE_L2 = 1e-4


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _fit_logistic(x: np.ndarray, y: np.ndarray, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial logistic regression by full-batch gradient descent.

    Zero-initialized; 500 steps at lr 0.1; L2 penalty 1e-4 on the weight
    matrix only (gradient contribution 1e-4 * W). Deterministic.
    """
    n, d = x.shape
    w = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    onehot = np.eye(num_classes)[y]
    for _ in range(PROBE_STEPS):
        probs = _softmax_rows(x @ w + b)
        err = (probs - onehot) / n
        w -= PROBE_LR * (x.T @ err + PROBE_L2 * w)
        b -= PROBE_LR * err.sum(axis=0)
    return w, b


def linear_probe(table: EmbeddingTable, k_folds: int = 10, seed: int = 0) -> ProbeResult:
    """Stratified k-fold accuracy of a linear classifier on frozen rows.

    Features are standardized with training-fold statistics (zero-variance
    columns pass through unscaled). Accuracy is fraction correct on the
    held-out fold; the result reports mean and population std over folds.
    """
    from .data import stratified_folds

    folds = stratified_folds(table.labels, k_folds, seed)
    num_classes = int(table.labels.max()) + 1
    accs = []
    for train, test in folds:
        mu = table.matrix[train].mean(axis=0)
        sd = table.matrix[train].std(axis=0)
        sd = np.where(sd < 1e-12, 1.0, sd)
        xtr = (table.matrix[train] - mu) / sd
        xte = (table.matrix[test] - mu) / sd
        w, b = _fit_logistic(xtr, table.labels[train], num_classes)
        pred = np.argmax(xte @ w + b, axis=1)
        accs.append(float(np.mean(pred == table.labels[test])))
    accs = np.array(accs)
    return ProbeResult(float(accs.mean()), float(accs.std()), accs)


@dataclass(frozen=True)
class DecompositionReport:
    """Per-graph check of pooled-output additivity under inter-graph edges.

    clean and augmented are the pooled outputs f and f_g; delta is the
    pooled last-layer ReLU difference. residuals hold
    ||f_g_i - f_i - delta_i||; alpha (graphs x graphs, zero diagonal) holds
    the scalar interaction coefficients delta_i / f_j, defined only for
    1-dimensional embeddings.
    """

    clean: np.ndarray
    augmented: np.ndarray
    delta: np.ndarray
    residuals: np.ndarray
    relative_residuals: np.ndarray
    max_relative_residual: float
    alpha: np.ndarray | None


def interaction_coeffs(clean: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """alpha[i, j] = delta_i / f_j for scalar embeddings; diagonal is 0."""
    if clean.shape[1] != 1:
        raise ConfigError(
            f"interaction coefficients need 1-dimensional embeddings, got d={clean.shape[1]}"
        )
    num = delta[:, 0][:, None]
    den = clean[:, 0][None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = num / den
    np.fill_diagonal(alpha, 0.0)
    return alpha


def decomposition_check(
    batch: GraphBatch,
    params: EncoderParams,
    config: EncoderConfig,
    p: float,
    rng: SeededRng,
) -> DecompositionReport:
    """Verify f_g = f + delta on a sampled augmentation of ``batch``.

    The augmented forward uses inter-graph propagation from the first
    layer. delta_i sums ReLU(augmented preactivation) - ReLU(clean
    preactivation) of the last layer over graph i's nodes, recomputed from
    the same propagation route as the encoder, so at p = 0 the residual is
    exactly zero at any depth. Relative residuals are scale-guarded by
    max(1, ||f_i||, ||f_g_i||).
    """
    cfg = dataclasses.replace(config, gip_start_layer=0)
    clean_batch = batch.replace_edges(inter_edges=np.zeros((0, 2), dtype=np.int64))
    aug_batch = gip_edges(batch, p, rng)

    clean_pre = layer_preactivations(clean_batch, params, cfg)
    aug_pre = layer_preactivations(aug_batch, params, cfg)

    relu = lambda a: np.maximum(a, 0.0)
    pool = lambda nodes: T.segment_sum(
        T.constant(nodes), batch.membership, batch.num_graphs
    ).data
    f = pool(relu(clean_pre[-1]))
    f_g = pool(relu(aug_pre[-1]))
    delta = pool(relu(aug_pre[-1]) - relu(clean_pre[-1]))

    residuals = np.linalg.norm(f_g - f - delta, axis=1)
    scale = np.maximum(
        1.0, np.maximum(np.linalg.norm(f, axis=1), np.linalg.norm(f_g, axis=1))
    )
    relative = residuals / scale
    alpha = interaction_coeffs(f, delta) if cfg.hidden_dim == 1 else None
    return DecompositionReport(
        clean=f,
        augmented=f_g,
        delta=delta,
        residuals=residuals,
        relative_residuals=relative,
        max_relative_residual=float(relative.max()),
        alpha=alpha,
    )


def write_embedding_csv(table: EmbeddingTable, path: str) -> None:
    """CSV export: header ``graph_id,label,e0,...``, 17-significant-digit
    floats — the input contract for external plotting tools."""
    header = "graph_id,label," + ",".join(f"e{j}" for j in range(table.dim))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i in range(table.num_rows):
            cells = [str(i), str(int(table.labels[i]))]
            cells += [format(v, ".17g") for v in table.matrix[i]]
            fh.write(",".join(cells) + "\n")
