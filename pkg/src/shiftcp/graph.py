"""Graph container, symmetric normalization, dataset I/O, SBM generation, splits.

The on-disk dataset format is a plain JSON object::

    {
      "n": <int>, "num_classes": <int>, "feature_dim": <int>,
      "edges": [[u, v], ...],      # undirected, u < v, no duplicates
      "features": [[...], ...],    # n rows of feature_dim finite numbers
      "labels": [...]              # n class indices in [0, num_classes)
    }
"""

import json
from dataclasses import dataclass

import numpy as np

from . import kernels


class DatasetFormatError(ValueError):
    """Malformed dataset file: missing/ill-typed field or invalid JSON."""


class GraphValidationError(ValueError):
    """Structurally well-formed input that violates a graph invariant."""


def _freeze(a):
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SparseGraph:
    """Undirected graph with dense node features and integer class labels.

    ``edges`` stores each undirected edge once as (u, v) with u < v; the
    symmetric closure is implied. Self-loops are not allowed here (they are
    introduced only by :func:`normalize_adjacency`).
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.n <= 0:
            raise GraphValidationError(f"node count must be positive, got {self.n}")
        if self.num_classes <= 0:
            raise GraphValidationError(
                f"num_classes must be positive, got {self.num_classes}"
            )
        e = self.edges
        if e.ndim != 2 or e.shape[1] != 2:
            raise GraphValidationError(f"edges must have shape (E, 2), got {e.shape}")
        if e.shape[0]:
            if e.min() < 0 or e.max() >= self.n:
                raise GraphValidationError(
                    f"edge endpoint out of range [0, {self.n}): "
                    f"min={e.min()}, max={e.max()}"
                )
            if np.any(e[:, 0] >= e[:, 1]):
                bad = e[e[:, 0] >= e[:, 1]][0]
                raise GraphValidationError(
                    f"edge ({bad[0]}, {bad[1]}) is not canonical (need u < v, "
                    "no self-loops)"
                )
            if np.unique(e, axis=0).shape[0] != e.shape[0]:
                raise GraphValidationError("duplicate edges present")
        if self.features.shape[0] != self.n:
            raise GraphValidationError(
                f"features must have {self.n} rows, got {self.features.shape[0]}"
            )
        if not np.all(np.isfinite(self.features)):
            raise GraphValidationError("features contain NaN/Inf")
        if self.labels.shape != (self.n,):
            raise GraphValidationError(
                f"labels must have shape ({self.n},), got {self.labels.shape}"
            )
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= self.num_classes:
            raise GraphValidationError(
                f"labels must lie in [0, {self.num_classes})"
            )
        for a in (self.edges, self.features, self.labels):
            _freeze(a)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def make_graph(n, edges, features, labels, num_classes) -> SparseGraph:
    """Construct a SparseGraph, canonicalizing edges (sort endpoints, dedupe)."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0]:
        if np.any(edges[:, 0] == edges[:, 1]):
            bad = edges[edges[:, 0] == edges[:, 1]][0, 0]
            raise GraphValidationError(f"self-loop on node {bad} not allowed")
        edges = np.sort(edges, axis=1)
        edges = np.unique(edges, axis=0)
    features = np.array(features, dtype=np.float64)
    if features.ndim != 2:
        features = features.reshape(n, -1)
    labels = np.asarray(labels, dtype=np.int64)
    return SparseGraph(int(n), edges, features, labels, int(num_classes))


def load_graph(path) -> SparseGraph:
    """Load a dataset file in the JSON format documented above."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DatasetFormatError("top-level value must be an object")

    def field(name, kind):
        if name not in raw:
            raise DatasetFormatError(f"missing field '{name}'")
        value = raw[name]
        if kind is int and not isinstance(value, int):
            raise DatasetFormatError(f"field '{name}' must be an integer")
        if kind is list and not isinstance(value, list):
            raise DatasetFormatError(f"field '{name}' must be an array")
        return value

    n = field("n", int)
    num_classes = field("num_classes", int)
    feature_dim = field("feature_dim", int)
    edges = field("edges", list)
    features = field("features", list)
    labels = field("labels", list)

    try:
        edges_arr = np.asarray(edges, dtype=np.int64)
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(f"field 'edges' is not an array of [u, v] pairs: {exc}")
    if edges_arr.size == 0:
        edges_arr = edges_arr.reshape(0, 2)
    if edges_arr.ndim != 2 or edges_arr.shape[1] != 2:
        raise DatasetFormatError("field 'edges' must contain [u, v] pairs")

    try:
        feat_arr = np.asarray(features, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(f"field 'features' is not a numeric matrix: {exc}")
    if feat_arr.size == 0:
        feat_arr = feat_arr.reshape(0, feature_dim)
    if feat_arr.ndim != 2:
        raise DatasetFormatError("field 'features' must be a matrix (rows of numbers)")
    if feat_arr.shape[1] != feature_dim:
        raise DatasetFormatError(
            f"field 'features' has {feat_arr.shape[1]} columns, "
            f"feature_dim says {feature_dim}"
        )
    if not np.all(np.isfinite(feat_arr)):
        raise DatasetFormatError("field 'features' contains NaN/Inf")

    try:
        labels_arr = np.asarray(labels, dtype=np.int64)
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(f"field 'labels' is not an integer array: {exc}")

    return make_graph(n, edges_arr, feat_arr, labels_arr, num_classes)


def save_graph(g: SparseGraph, path) -> None:
    """Write a SparseGraph in the JSON dataset format (round-trips load_graph)."""
    doc = {
        "n": g.n,
        "num_classes": g.num_classes,
        "feature_dim": g.feature_dim,
        "edges": g.edges.tolist(),
        "features": g.features.tolist(),
        "labels": g.labels.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetric degree-normalized adjacency with self-loops, in CSR form.

    entry(i, j) = 1/sqrt(deg(i) * deg(j)) for j in N(i) or j == i, where deg
    is the row sum of A + I. Symmetric with spectral radius <= 1.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        for a in (self.indptr, self.indices, self.data):
            _freeze(a)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return kernels.csr_matvec(self.indptr, self.indices, self.data, x)

    def matmul(self, b: np.ndarray) -> np.ndarray:
        return kernels.csr_matmul(self.indptr, self.indices, self.data, b)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i in range(self.n):
            for jj in range(self.indptr[i], self.indptr[i + 1]):
                out[i, self.indices[jj]] = self.data[jj]
        return out


def normalize_adjacency(g: SparseGraph) -> NormalizedAdjacency:
    """Symmetrically normalize A + I by its degree matrix."""
    n = g.n
    u, v = g.edges[:, 0], g.edges[:, 1]
    rows = np.concatenate([u, v, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([v, u, np.arange(n, dtype=np.int64)])
    deg = np.bincount(rows, minlength=n).astype(np.float64)  # row sums of A+I
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals = inv_sqrt[rows] * inv_sqrt[cols]

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return NormalizedAdjacency(n, indptr, cols.astype(np.int64), vals)


def generate_sbm(sizes, p_in, p_out, d, feat_shift, seed) -> SparseGraph:
    """Stochastic-block-model graph with Gaussian block features.

    Block b's features are unit-variance spherical Gaussians centered at
    feat_shift * e_{b mod d}; labels are block ids. Deterministic per seed.
    """
    sizes = list(sizes)
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError(f"sizes must be a nonempty list of positive ints, got {sizes}")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError(f"probabilities must be in [0, 1], got p_in={p_in} p_out={p_out}")
    n = sum(sizes)
    block = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
    rng = np.random.default_rng(seed)

    prob = np.where(block[:, None] == block[None, :], p_in, p_out)
    draw = rng.random((n, n))
    iu, ju = np.triu_indices(n, k=1)
    keep = draw[iu, ju] < prob[iu, ju]
    edges = np.stack([iu[keep], ju[keep]], axis=1)

    centers = np.zeros((len(sizes), d))
    for b in range(len(sizes)):
        centers[b, b % d] = feat_shift
    features = centers[block] + rng.standard_normal((n, d))

    return SparseGraph(n, edges.astype(np.int64), features, block, len(sizes))


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/calibration/test node sets plus the non-train pool."""

    train_idx: np.ndarray
    calib_idx: np.ndarray
    test_idx: np.ndarray
    iid_pool_idx: np.ndarray

    def __post_init__(self):
        for a in (self.train_idx, self.calib_idx, self.test_idx, self.iid_pool_idx):
            _freeze(a)


def make_splits(g: SparseGraph, train_idx, seed) -> SplitSpec:
    """Partition non-train nodes into calibration/test uniformly at random.

    Calibration size is min(1000, floor(remaining / 2)); the pool of IID
    candidates is every node outside the training set.
    """
    train = np.unique(np.asarray(train_idx, dtype=np.int64))
    if train.size and (train.min() < 0 or train.max() >= g.n):
        raise GraphValidationError(f"train indices out of range [0, {g.n})")
    mask = np.ones(g.n, dtype=bool)
    mask[train] = False
    remaining = np.flatnonzero(mask)
    if remaining.size == 0:
        raise GraphValidationError("training set covers all nodes; no calibration data")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(remaining)
    n_calib = min(1000, remaining.size // 2)
    calib = np.sort(perm[:n_calib])
    test = np.sort(perm[n_calib:])
    return SplitSpec(train, calib, test, remaining)
