"""Personalized PageRank rows and PPR-biased training-set selection.

A PPR row is the source's row of (I - (1-alpha)*A_norm)^-1, computed by
Neumann iteration p <- e_source + (1-alpha) * A_norm @ p (the adjacency is
symmetric, so row and column iterations coincide). The dense inverse is
used only as a test oracle.
"""

from dataclasses import dataclass

import numpy as np

from .graph import NormalizedAdjacency, SparseGraph

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10000


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PPRVector:
    source: int
    alpha: float
    scores: np.ndarray


def ppr_row(
    adj: NormalizedAdjacency,
    source: int,
    alpha: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PPRVector:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not 0 <= source < adj.n:
        raise ValueError(f"source {source} out of range [0, {adj.n})")

    e = np.zeros(adj.n)
    e[source] = 1.0
    if alpha == 1.0:
        return PPRVector(source, alpha, e)

    damp = 1.0 - alpha
    p = e.copy()
    for _ in range(max_iter):
        p_next = e + damp * adj.matvec(p)
        residual = np.max(np.abs(p_next - p))
        p = p_next
        if residual < tol:
            return PPRVector(source, alpha, p)
    raise ConvergenceError(
        f"ppr_row did not reach tol={tol} within {max_iter} iterations "
        f"(residual {residual:.3e})"
    )


def biased_train_sample(
    g: SparseGraph,
    adj: NormalizedAdjacency,
    per_class: int,
    alpha: float,
    seed: int,
) -> np.ndarray:
    """Per class: pick one random seed node, then keep the per_class
    class members with the highest PPR score from that seed (ties broken
    by lower node index; the seed itself is always kept)."""
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(g.num_classes):
        members = np.flatnonzero(g.labels == c)
        if members.size < per_class:
            raise ValueError(
                f"class {c} has {members.size} nodes, fewer than per_class={per_class}"
            )
        seed_node = int(members[rng.integers(members.size)])
        scores = ppr_row(adj, seed_node, alpha).scores[members]
        # Stable sort on (-score, index); members is ascending already.
        order = np.argsort(-scores, kind="stable")
        ranked = [int(members[i]) for i in order if int(members[i]) != seed_node]
        chosen.extend([seed_node] + ranked[: per_class - 1])
    return np.sort(np.asarray(chosen, dtype=np.int64))


def dense_ppr_matrix(adj: NormalizedAdjacency, alpha: float) -> np.ndarray:
    """Dense-inverse oracle (I - (1-alpha)*A_norm)^-1; test use only."""
    return np.linalg.inv(np.eye(adj.n) - (1.0 - alpha) * adj.to_dense())
