"""Differentiable two-sample discrepancies between representation matrices.

cmd() compares column means plus higher-order columnwise central moments
(squared L2 differences, unnormalized). mmd() is the biased squared-MMD
estimate mean(k(H1,H1)) - 2*mean(k(H1,H2)) + mean(k(H2,H2)); the rbf
bandwidth defaults to the median pairwise distance over both samples,
treated as a constant during differentiation. Gradients flow only through
the sample matrices.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class CmdConfig:
    """moment_order is the highest central moment compared; bounds document
    the representation range (tanh gives (-1, 1)) and do not rescale terms."""

    moment_order: int = 5
    bounds: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if self.moment_order < 1:
            raise ValueError(f"moment_order must be >= 1, got {self.moment_order}")
        a, b = self.bounds
        if not a < b:
            raise ValueError(f"bounds must satisfy a < b, got {self.bounds}")


@dataclass(frozen=True)
class MmdConfig:
    kernel: str = "rbf"
    bandwidth: float | None = None  # None selects the median heuristic

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"kernel must be 'linear' or 'rbf', got {self.kernel!r}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


def _check_samples(name, h1, h2):
    if h1.data.shape[0] == 0 or h2.data.shape[0] == 0:
        raise ValueError(f"{name}: samples must be nonempty")
    if h1.data.shape[1] != h2.data.shape[1]:
        raise ad.ShapeError(
            f"{name}: column counts differ: {h1.data.shape} vs {h2.data.shape}"
        )


def cmd(h1: Tensor, h2: Tensor, cfg: CmdConfig = CmdConfig()) -> Tensor:
    h1, h2 = ad._as_tensor(h1), ad._as_tensor(h2)
    _check_samples("cmd", h1, h2)
    m1, m2 = ad.col_mean(h1), ad.col_mean(h2)
    out = ad.sqnorm(ad.sub(m1, m2))
    if cfg.moment_order >= 2:
        c1, c2 = ad.sub(h1, m1), ad.sub(h2, m2)
        for k in range(2, cfg.moment_order + 1):
            mk1 = ad.col_mean(ad.powi(c1, k))
            mk2 = ad.col_mean(ad.powi(c2, k))
            out = ad.add(out, ad.sqnorm(ad.sub(mk1, mk2)))
    return out


def _pairwise_sq_dists(x, y):
    xx = (x * x).sum(axis=1)
    yy = (y * y).sum(axis=1)
    d2 = xx[:, None] + yy[None, :] - 2.0 * (x @ y.T)
    return np.maximum(d2, 0.0)


def median_bandwidth(x, y) -> float:
    """Median pairwise distance across the pooled sample (off-diagonal)."""
    pooled = np.vstack([x, y])
    d2 = _pairwise_sq_dists(pooled, pooled)
    iu = np.triu_indices(pooled.shape[0], k=1)
    if iu[0].size == 0:
        return 1.0
    med = float(np.median(np.sqrt(d2[iu])))
    return med if med > 0 else 1.0


def mmd(h1: Tensor, h2: Tensor, cfg: MmdConfig = MmdConfig()) -> Tensor:
    h1, h2 = ad._as_tensor(h1), ad._as_tensor(h2)
    _check_samples("mmd", h1, h2)
    if cfg.kernel == "linear":
        # mean(x.y) kernel sums collapse to the squared mean difference
        return ad.sqnorm(ad.sub(ad.col_mean(h1), ad.col_mean(h2)))
    return _rbf_mmd(h1, h2, cfg.bandwidth)


def _rbf_mmd(h1: Tensor, h2: Tensor, bandwidth) -> Tensor:
    x, y = h1.data, h2.data
    m, n = x.shape[0], y.shape[0]
    sigma = median_bandwidth(x, y) if bandwidth is None else float(bandwidth)
    inv = 1.0 / (2.0 * sigma * sigma)
    kxx = np.exp(-_pairwise_sq_dists(x, x) * inv)
    kxy = np.exp(-_pairwise_sq_dists(x, y) * inv)
    kyy = np.exp(-_pairwise_sq_dists(y, y) * inv)
    # a squared embedding distance; clamp the cancellation noise at zero
    value = max(kxx.mean() - 2.0 * kxy.mean() + kyy.mean(), 0.0)
    out = Tensor(np.array([[value]]), (h1, h2))

    def bwd(g):
        # d k(a,b)/da = k(a,b) * (b - a) / sigma^2
        s = g[0, 0] / (sigma * sigma)
        wxx = kxx / (m * m)
        wxy = kxy / (m * n)
        wyy = kyy / (n * n)
        # within-x term (weight +1), cross term (weight -2)
        h1.grad += s * (
            2.0 * (wxx @ x - wxx.sum(axis=1)[:, None] * x)
            - 2.0 * (wxy @ y - wxy.sum(axis=1)[:, None] * x)
        )
        h2.grad += s * (
            2.0 * (wyy @ y - wyy.sum(axis=1)[:, None] * y)
            - 2.0 * (wxy.T @ x - wxy.sum(axis=0)[:, None] * y)
        )

    out._bwd = bwd
    return out
