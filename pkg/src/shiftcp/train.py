"""Shift-regularized training: cross-entropy plus weighted CMD/MMD penalties
between the training-row representations and a fresh per-epoch IID sample
drawn from the non-train pool. Full-batch Adam, fixed epoch count, no early
stopping; runs are deterministic per seed.
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from . import discrepancy as dsc
from .autodiff import ParamSet, Tensor
from .graph import SparseGraph, NormalizedAdjacency, SplitSpec
from .models import ModelConfig, ForwardResult, forward, init_params


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lambda_cmd: float = 0.0
    lambda_mmd: float = 0.0
    epochs: int = 200
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    seed: int = 0
    # IID sample is redrawn every epoch (fixed policy), size = |train|.

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.lambda_cmd < 0 or self.lambda_mmd < 0:
            raise ValueError("lambda weights must be nonnegative")


@dataclass(frozen=True)
class TrainedModel:
    params: ParamSet
    model_config: ModelConfig
    train_config: TrainConfig
    loss_history: np.ndarray  # epochs x 4 columns: total, ce, cmd, mmd


def sample_iid(split: SplitSpec, m: int, rng) -> np.ndarray:
    """m indices uniformly without replacement from the non-train pool."""
    pool = split.iid_pool_idx
    if m > pool.size:
        raise ValueError(f"IID pool has {pool.size} nodes, cannot sample {m}")
    return rng.choice(pool, size=m, replace=False)


def condsr_loss(
    fw: ForwardResult,
    labels,
    train_idx,
    iid_idx,
    tcfg: TrainConfig,
    ccfg: dsc.CmdConfig = dsc.CmdConfig(),
    mcfg: dsc.MmdConfig = dsc.MmdConfig(),
):
    """Total objective and its components as floats (ce, cmd, mmd).

    Zero-weight penalty terms are skipped entirely so a run with both
    lambdas at 0 performs byte-for-byte the same arithmetic as plain
    cross-entropy training.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    iid_idx = np.asarray(iid_idx, dtype=np.int64)
    if train_idx.size == 0 or iid_idx.size == 0:
        raise ValueError("condsr_loss: empty index set")
    ce = ad.cross_entropy_mean(fw.logits, labels, train_idx)
    total = ce
    cmd_value = 0.0
    mmd_value = 0.0
    h_train = h_iid = None
    if tcfg.lambda_cmd > 0 or tcfg.lambda_mmd > 0:
        h_train = ad.take_rows(fw.hidden, train_idx)
        h_iid = ad.take_rows(fw.hidden, iid_idx)
    if tcfg.lambda_cmd > 0:
        cmd_term = dsc.cmd(h_train, h_iid, ccfg)
        cmd_value = cmd_term.item()
        total = ad.add(total, ad.scale(cmd_term, tcfg.lambda_cmd))
    if tcfg.lambda_mmd > 0:
        mmd_term = dsc.mmd(h_train, h_iid, mcfg)
        mmd_value = mmd_term.item()
        total = ad.add(total, ad.scale(mmd_term, tcfg.lambda_mmd))
    return total, (ce.item(), cmd_value, mmd_value)


class Adam:
    def __init__(self, params: ParamSet, lr, weight_decay=0.0, b1=0.9, b2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.wd = weight_decay
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self):
        self.t += 1
        for k, p in self.params.items():
            g = p.grad + self.wd * p.data
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1**self.t)
            vhat = self.v[k] / (1 - self.b2**self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train(
    g: SparseGraph,
    adj: NormalizedAdjacency,
    split: SplitSpec,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    ccfg: dsc.CmdConfig = dsc.CmdConfig(),
    kcfg: dsc.MmdConfig = dsc.MmdConfig(),
) -> TrainedModel:
    params = init_params(mcfg, g.feature_dim, g.num_classes, tcfg.seed)
    x = Tensor(g.features)
    m = split.train_idx.size
    iid_rng = np.random.default_rng((tcfg.seed, 1))
    opt = Adam(params, tcfg.learning_rate, tcfg.weight_decay)
    history = np.zeros((tcfg.epochs, 4))

    for epoch in range(tcfg.epochs):
        iid_idx = sample_iid(split, m, iid_rng)
        fw = forward(mcfg, params, adj, x)
        total, (ce_v, cmd_v, mmd_v) = condsr_loss(
            fw, g.labels, split.train_idx, iid_idx, tcfg, ccfg, kcfg
        )
        total_v = total.item()
        if not np.isfinite(total_v):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}: total={total_v} "
                f"ce={ce_v} cmd={cmd_v} mmd={mmd_v}"
            )
        history[epoch] = (total_v, ce_v, cmd_v, mmd_v)
        params.zero_grad()
        ad.backward(total)
        opt.step()

    return TrainedModel(params, mcfg, tcfg, history)


def predict_probs(model: TrainedModel, adj: NormalizedAdjacency, g: SparseGraph) -> np.ndarray:
    """Class-probability matrix of the trained model (values only)."""
    return forward(model.model_config, model.params, adj, g.features).probs.data


def measure_shift(
    model: TrainedModel,
    adj: NormalizedAdjacency,
    g: SparseGraph,
    split: SplitSpec,
    ccfg: dsc.CmdConfig = dsc.CmdConfig(),
) -> float:
    """CMD between training-row and whole-pool representations of a model."""
    fw = forward(model.model_config, model.params, adj, g.features)
    h_train = ad.take_rows(fw.hidden, split.train_idx)
    h_pool = ad.take_rows(fw.hidden, split.iid_pool_idx)
    return dsc.cmd(h_train, h_pool, ccfg).item()


def training_summary(model: TrainedModel) -> dict:
    return {
        "model_config": asdict(model.model_config),
        "train_config": asdict(model.train_config),
        "final_loss": dict(
            zip(("total", "ce", "cmd", "mmd"), map(float, model.loss_history[-1]))
        ),
    }
