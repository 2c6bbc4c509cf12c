"""Shared oracles and helpers: dense normalization, finite differences,
small hand-built graphs."""

import numpy as np
import pytest

from shiftcp.autodiff import Tensor, backward
from shiftcp.graph import make_graph


def dense_normalized_oracle(n, edges):
    """D^{-1/2} (A + I) D^{-1/2} computed densely, independent of the CSR path."""
    a = np.zeros((n, n))
    for u, v in edges:
        a[u, v] = a[v, u] = 1.0
    ai = a + np.eye(n)
    deg = ai.sum(axis=1)
    d_inv = np.diag(1.0 / np.sqrt(deg))
    return d_inv @ ai @ d_inv


def numeric_grad(f, x0, h=1e-4):
    """Central finite differences of a scalar function of one matrix."""
    g = np.zeros_like(x0)
    it = np.nditer(x0, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x0.copy()
        xp[idx] += h
        xm = x0.copy()
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def rel_err(a, b):
    denom = max(1.0, np.abs(a).max(), np.abs(b).max())
    return np.abs(a - b).max() / denom


def check_grad(build, x0, tol=1e-5, h=1e-4):
    """Compare engine gradients to central differences for build(Tensor)->scalar."""
    x = Tensor(x0.copy())
    out = build(x)
    backward(out)
    analytic = x.grad.copy()
    numeric = numeric_grad(lambda v: build(Tensor(v)).item(), x0, h)
    err = rel_err(analytic, numeric)
    assert err < tol, f"gradient mismatch: rel err {err:.3e} >= {tol}"


def path_graph(n, d=3, num_classes=2, seed=0):
    rng = np.random.default_rng(seed)
    edges = [(i, i + 1) for i in range(n - 1)]
    feats = rng.standard_normal((n, d))
    labels = rng.integers(num_classes, size=n)
    return make_graph(n, edges, feats, labels, num_classes)


def bridged_cliques(k=5):
    """Two k-cliques joined by a single bridge edge; labels = clique id."""
    edges = []
    for base in (0, k):
        for i in range(k):
            for j in range(i + 1, k):
                edges.append((base + i, base + j))
    edges.append((k - 1, k))
    n = 2 * k
    feats = np.zeros((n, 2))
    feats[:k, 0] = 1.0
    feats[k:, 1] = 1.0
    labels = np.array([0] * k + [1] * k)
    return make_graph(n, edges, feats, labels, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
