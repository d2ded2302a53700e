"""Synthetic benchmark generation and TU-format dataset ingestion.

Synthetic datasets draw each class from its own random-graph family (ER or
planted two-community), label graphs by family index, and attach structural
features. TU text datasets (``{DS}_A.txt`` and companion files) are parsed
into the same Graph representation. Both paths feed the package identically.
"""

from __future__ import annotations

import enum
import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .augment import SeededRng
from .errors import ConfigError, IngestError, StratificationError
from .graphs import Graph

DEGREE_CAP = 16
SYNTH_2M_NAME = "synth-2M"
# The named benchmark is a constant: generation runs on this pinned seed so
# every invocation (and every training seed) sees byte-identical graphs.
SYNTH_2M_SEED = 7


class GraphFamily(enum.Enum):
    ER = "ER"
    PLANTED_2COMMUNITY = "PLANTED_2COMMUNITY"


class FeatureMode(enum.Enum):
    DEGREE_ONEHOT = "DEGREE_ONEHOT"
    CONSTANT = "CONSTANT"


@dataclass(frozen=True)
class ManifoldSpec:
    """Generator for one graph class.

    ER uses ``p_edge`` for every node pair; the planted family splits nodes
    into two near-equal communities and uses ``p_in`` within a community,
    ``p_out`` across. Node counts are drawn uniformly from [n_min, n_max].
    """

    family: GraphFamily
    n_min: int
    n_max: int
    p_edge: float = 0.0
    p_in: float = 0.0
    p_out: float = 0.0

    def __post_init__(self):
        if self.n_min < 3:
            raise ConfigError(f"n_min must be at least 3, got {self.n_min}")
        if self.n_max < self.n_min:
            raise ConfigError(
                f"n_max must be at least n_min, got [{self.n_min}, {self.n_max}]"
            )
        for name in ("p_edge", "p_in", "p_out"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")


@dataclass(frozen=True)
class SynthSpec:
    """A labelled mixture: one ManifoldSpec per class, equal counts."""

    manifolds: tuple[ManifoldSpec, ...]
    graphs_per_manifold: int
    feature_mode: FeatureMode = FeatureMode.DEGREE_ONEHOT
    degree_cap: int = DEGREE_CAP

    def __post_init__(self):
        object.__setattr__(self, "manifolds", tuple(self.manifolds))
        if len(self.manifolds) < 2:
            raise ConfigError(
                f"need at least 2 manifolds, got {len(self.manifolds)}"
            )
        if self.graphs_per_manifold < 1:
            raise ConfigError(
                f"graphs_per_manifold must be positive, got {self.graphs_per_manifold}"
            )
        if self.degree_cap < 1:
            raise ConfigError(f"degree_cap must be positive, got {self.degree_cap}")

    @property
    def num_classes(self) -> int:
        return len(self.manifolds)


def _degree_onehot(degrees: np.ndarray, cap: int) -> np.ndarray:
    """One column per degree 0..cap; degrees >= cap share the last bucket."""
    buckets = np.minimum(degrees, cap)
    return np.eye(cap + 1, dtype=np.float64)[buckets]


def _sample_edges(man: ManifoldSpec, n: int, gen: np.random.Generator) -> np.ndarray:
    iu, iv = np.triu_indices(n, k=1)
    if man.family is GraphFamily.ER:
        probs = np.full(iu.shape[0], man.p_edge)
    else:
        # first floor(n/2) nodes form community 0, the rest community 1
        comm = np.arange(n) >= n // 2
        probs = np.where(comm[iu] == comm[iv], man.p_in, man.p_out)
    mask = gen.random(iu.shape[0]) < probs
    return np.stack([iu[mask], iv[mask]], axis=1)


def generate(spec: SynthSpec, seed: int) -> list[Graph]:
    """Sample the full labelled dataset; deterministic per (spec, seed).

    Each (class, index) position gets its own derived random stream, so a
    graph's content does not depend on how many graphs precede it.
    """
    root = SeededRng(int(seed))
    graphs = []
    for k, man in enumerate(spec.manifolds):
        for g in range(spec.graphs_per_manifold):
            gen = root.substream(k, g).generator()
            n = int(gen.integers(man.n_min, man.n_max + 1))
            edges = _sample_edges(man, n, gen)
            if spec.feature_mode is FeatureMode.DEGREE_ONEHOT:
                degrees = np.bincount(edges.ravel(), minlength=n)
                feats = _degree_onehot(degrees, spec.degree_cap)
            else:
                feats = np.ones((n, 1), dtype=np.float64)
            graphs.append(Graph(n, edges, feats, k))
    return graphs


def synth_2m_spec() -> SynthSpec:
    """Two topology-only classes: sparse ER vs planted two-community."""
    return SynthSpec(
        manifolds=(
            ManifoldSpec(GraphFamily.ER, 12, 24, p_edge=0.15),
            ManifoldSpec(GraphFamily.PLANTED_2COMMUNITY, 12, 24, p_in=0.5, p_out=0.05),
        ),
        graphs_per_manifold=150,
        feature_mode=FeatureMode.DEGREE_ONEHOT,
        degree_cap=DEGREE_CAP,
    )


def load_dataset(name: str) -> list[Graph]:
    """Resolve a dataset name: the built-in benchmark or ``tud:PATH:NAME``."""
    if name == SYNTH_2M_NAME:
        return generate(synth_2m_spec(), SYNTH_2M_SEED)
    if name.startswith("tud:"):
        rest = name[len("tud:"):]
        if ":" not in rest:
            raise ConfigError(f"dataset spec must be tud:PATH:NAME, got {name!r}")
        path, ds = rest.rsplit(":", 1)
        return tud_parse(path, ds)
    raise ConfigError(f"unknown dataset: {name}")


def _read_int_lines(path: str, what: str) -> list[int]:
    """One integer per line; blank or malformed lines fail with a position."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    values = []
    for lineno, line in enumerate(raw, start=1):
        text = line.strip()
        if not text:
            raise IngestError(f"{path}:{lineno}: blank line in {what} file")
        try:
            values.append(int(text))
        except ValueError:
            raise IngestError(
                f"{path}:{lineno}: expected an integer in {what} file, got {text!r}"
            ) from None
    return values


def _require_file(directory: str, name: str) -> str:
    path = os.path.join(directory, name)
    if not os.path.isfile(path):
        raise IngestError(f"missing dataset file: {path}")
    return path


def tud_parse(directory: str, dataset_name: str, degree_cap: int = DEGREE_CAP) -> list[Graph]:
    """Load a TU-format text dataset from ``directory``.

    Mandatory files: ``{DS}_A.txt`` (comma-separated 1-indexed directed edge
    pairs), ``{DS}_graph_indicator.txt`` (per-node graph id), and
    ``{DS}_graph_labels.txt`` (per-graph integer label). Directed pairs are
    deduplicated to undirected edges, graph ids and class labels are both
    remapped to contiguous 0-based ranges. ``{DS}_node_labels.txt``, when
    present, supplies one-hot node features; otherwise features fall back to
    degree one-hot with ``degree_cap``.
    """
    a_path = _require_file(directory, f"{dataset_name}_A.txt")
    ind_path = _require_file(directory, f"{dataset_name}_graph_indicator.txt")
    lab_path = _require_file(directory, f"{dataset_name}_graph_labels.txt")

    raw_labels = _read_int_lines(lab_path, "graph label")
    if not raw_labels:
        raise IngestError(f"empty graph labels file: {lab_path}")
    num_graphs = len(raw_labels)

    indicator = _read_int_lines(ind_path, "graph indicator")
    if not indicator:
        raise IngestError(f"empty graph indicator file: {ind_path}")
    num_nodes = len(indicator)

    # node -> (graph, local index), checking every referenced graph id exists
    node_graph = np.empty(num_nodes, dtype=np.int64)
    node_local = np.empty(num_nodes, dtype=np.int64)
    counts = np.zeros(num_graphs, dtype=np.int64)
    for i, gid in enumerate(indicator):
        if not 1 <= gid <= num_graphs:
            raise IngestError(
                f"{ind_path}:{i + 1}: node references absent graph id {gid} "
                f"(labels file defines {num_graphs} graphs)"
            )
        node_graph[i] = gid - 1
        node_local[i] = counts[gid - 1]
        counts[gid - 1] += 1
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise IngestError(
            f"{ind_path}: graph id {empty[0] + 1} has a label but no nodes"
        )

    edge_sets: list[set] = [set() for _ in range(num_graphs)]
    with open(a_path, "r", encoding="utf-8") as fh:
        a_lines = fh.read().splitlines()
    for lineno, line in enumerate(a_lines, start=1):
        text = line.strip()
        if not text:
            raise IngestError(f"{a_path}:{lineno}: blank line in edge file")
        parts = text.split(",")
        if len(parts) != 2:
            raise IngestError(
                f"{a_path}:{lineno}: expected 'u, v', got {text!r}"
            )
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise IngestError(
                f"{a_path}:{lineno}: non-integer edge endpoint in {text!r}"
            ) from None
        for endpoint in (u, v):
            if not 1 <= endpoint <= num_nodes:
                raise IngestError(
                    f"{a_path}:{lineno}: node id {endpoint} out of range "
                    f"(indicator file defines {num_nodes} nodes)"
                )
        if u == v:
            raise IngestError(f"{a_path}:{lineno}: self-loop on node {u}")
        gu, gv = node_graph[u - 1], node_graph[v - 1]
        if gu != gv:
            raise IngestError(
                f"{a_path}:{lineno}: edge {u}-{v} joins graphs {gu + 1} and {gv + 1}"
            )
        a, b = node_local[u - 1], node_local[v - 1]
        edge_sets[gu].add((min(a, b), max(a, b)))

    node_labels = None
    nl_path = os.path.join(directory, f"{dataset_name}_node_labels.txt")
    if os.path.isfile(nl_path):
        node_labels = _read_int_lines(nl_path, "node label")
        if len(node_labels) != num_nodes:
            raise IngestError(
                f"{nl_path}: expected {num_nodes} node labels, got {len(node_labels)}"
            )
        distinct = sorted(set(node_labels))
        col = {v: j for j, v in enumerate(distinct)}
        onehot = np.zeros((num_nodes, len(distinct)), dtype=np.float64)
        for i, v in enumerate(node_labels):
            onehot[i, col[v]] = 1.0

    label_map = {v: j for j, v in enumerate(sorted(set(raw_labels)))}

    graphs = []
    for g in range(num_graphs):
        n = int(counts[g])
        edges = np.array(sorted(edge_sets[g]), dtype=np.int64).reshape(-1, 2)
        if node_labels is not None:
            feats = onehot[node_graph == g]
        else:
            degrees = np.bincount(edges.ravel(), minlength=n) if edges.size else np.zeros(n, dtype=np.int64)
            feats = _degree_onehot(degrees, degree_cap)
        graphs.append(Graph(n, edges, feats, label_map[raw_labels[g]]))
    return graphs


def tud_write(graphs: list[Graph], directory: str, dataset_name: str) -> None:
    """Serialize to TU text files (structure and labels; features are not
    stored — parsing falls back to degree one-hot, which reproduces
    DEGREE_ONEHOT-mode features exactly). Each undirected edge is written in
    both directions, matching the published datasets.
    """
    os.makedirs(directory, exist_ok=True)
    offsets = np.concatenate([[0], np.cumsum([g.num_nodes for g in graphs])])
    with open(os.path.join(directory, f"{dataset_name}_graph_indicator.txt"), "w", newline="\n", encoding="utf-8") as fh:
        for gid, g in enumerate(graphs, start=1):
            fh.write(f"{gid}\n" * g.num_nodes)
    with open(os.path.join(directory, f"{dataset_name}_graph_labels.txt"), "w", newline="\n", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(f"{g.label}\n")
    with open(os.path.join(directory, f"{dataset_name}_A.txt"), "w", newline="\n", encoding="utf-8") as fh:
        for gid, g in enumerate(graphs):
            base = int(offsets[gid])
            for u, v in g.edges:
                fh.write(f"{base + u + 1}, {base + v + 1}\n")
                fh.write(f"{base + v + 1}, {base + u + 1}\n")


def stratified_folds(labels, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split ids into k test folds with per-class counts differing by <= 1.

    Returns (train_ids, test_ids) per fold; test folds partition the id
    range. Deterministic per seed. Classes smaller than k cannot appear in
    every fold and are rejected.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size == 0:
        raise ConfigError("labels must be a non-empty 1-D sequence")
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    gen = SeededRng(int(seed)).generator()
    fold_tests: list[list] = [[] for _ in range(k)]
    classes = np.unique(labels)
    for ci, c in enumerate(classes):
        members = np.flatnonzero(labels == c)
        if members.size < k:
            raise StratificationError(
                f"class {c} has {members.size} members; need at least {k} for {k} folds"
            )
        perm = gen.permutation(members)
        # rotate the starting fold per class so total fold sizes stay even
        for j, idx in enumerate(perm):
            fold_tests[(j + ci) % k].append(idx)
    out = []
    all_ids = np.arange(labels.size)
    for t in fold_tests:
        test = np.sort(np.array(t, dtype=np.int64))
        train = np.setdiff1d(all_ids, test)
        out.append((train, test))
    return out


def dataset_fingerprint(graphs: list[Graph]) -> str:
    """Content hash over structure, labels, and features; order-sensitive."""
    h = hashlib.sha256()
    for g in graphs:
        h.update(np.int64(g.num_nodes).tobytes())
        h.update(np.int64(g.label).tobytes())
        h.update(np.int64(g.edges.shape[0]).tobytes())
        h.update(np.ascontiguousarray(g.edges, dtype=np.int64).tobytes())
        h.update(np.int64(g.features.shape[1]).tobytes())
        h.update(np.ascontiguousarray(g.features, dtype=np.float64).tobytes())
    return h.hexdigest()
