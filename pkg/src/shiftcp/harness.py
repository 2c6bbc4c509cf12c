"""End-to-end experiment orchestration.

A run trains one model per (condition, run seed), then evaluates conformal
coverage/set size over many random calibration/test splits. Conditions:

* ``iid``    - uniform per-class training sample, no penalty terms
* ``biased`` - PPR-biased training sample, no penalty terms
* ``condsr`` - PPR-biased training sample plus the configured CMD/MMD terms

Seeds are derived as run_seed = seed + 1000*run and split_seed = run_seed +
split, so any cell can be reproduced in isolation. Outputs: ``rows.csv``
(one row per run/split/epsilon), ``summary.json`` (aggregates + config
echo), ``table.md`` (condition-transition table with relative improvements).
"""

import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .conformal import calibrate
from .graph import SparseGraph, load_graph, generate_sbm, normalize_adjacency, make_splits
from .models import ModelConfig
from .ppr import biased_train_sample
from .train import TrainConfig, train, predict_probs

CONDITIONS = ("iid", "biased", "condsr")

SBM_DEFAULTS = {
    "sizes": [100, 100, 100, 100],
    "p_in": 0.1,
    "p_out": 0.01,
    "d": 16,
    "feat_shift": 1.0,
    "seed": 0,
}

CSV_COLUMNS = (
    "run",
    "split",
    "epsilon",
    "condition",
    "accuracy",
    "coverage",
    "inefficiency",
    "lambda_cmd",
    "lambda_mmd",
    "alpha",
)


@dataclass(frozen=True)
class ExperimentConfig:
    condition: str = "iid"
    dataset: str | None = None
    sbm: dict | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    alpha: float = 0.1
    epsilons: tuple = (0.1, 0.05)
    n_runs: int = 1
    n_splits: int = 1
    per_class: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if (self.dataset is None) == (self.sbm is None):
            raise ValueError("exactly one of 'dataset' and 'sbm' must be given")
        if self.n_runs < 1 or self.n_splits < 1:
            raise ValueError("n_runs and n_splits must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not self.epsilons:
            raise ValueError("epsilons must be nonempty")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        model = ModelConfig(**raw.pop("model", {}))
        tr = TrainConfig(**raw.pop("train", {}))
        if "epsilons" in raw:
            raw["epsilons"] = tuple(raw["epsilons"])
        return cls(model=model, train=tr, **raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epsilons"] = list(self.epsilons)
        return d


@dataclass(frozen=True)
class ResultRow:
    run: int
    split: int
    epsilon: float
    condition: str
    accuracy: float
    coverage: float
    inefficiency: float
    lambda_cmd: float
    lambda_mmd: float
    alpha: float


class ResultTable:
    def __init__(self, rows=None):
        self.rows = list(rows or [])

    def extend(self, other: "ResultTable") -> None:
        self.rows.extend(other.rows)

    def sorted_rows(self):
        return sorted(
            self.rows,
            key=lambda r: (r.condition, r.lambda_cmd, r.lambda_mmd, r.run, r.split, r.epsilon),
        )

    def aggregate(self) -> dict:
        """Mean/std (population) of the metrics per (condition, lambdas, epsilon)."""
        groups = {}
        for r in self.rows:
            groups.setdefault(
                (r.condition, r.lambda_cmd, r.lambda_mmd, r.epsilon), []
            ).append(r)
        out = []
        for key in sorted(groups):
            condition, lc, lm, eps = key
            rs = groups[key]
            entry = {
                "condition": condition,
                "lambda_cmd": lc,
                "lambda_mmd": lm,
                "epsilon": eps,
                "n_rows": len(rs),
            }
            for name in ("accuracy", "coverage", "inefficiency"):
                vals = np.array([getattr(r, name) for r in rs])
                entry[f"{name}_mean"] = float(vals.mean())
                entry[f"{name}_std"] = float(vals.std())
            out.append(entry)
        return {"n_rows": len(self.rows), "groups": out}


def resolve_graph(cfg: ExperimentConfig) -> SparseGraph:
    if cfg.dataset is not None:
        return load_graph(cfg.dataset)
    spec = dict(SBM_DEFAULTS)
    spec.update(cfg.sbm or {})
    return generate_sbm(**spec)


def _uniform_train_sample(g: SparseGraph, per_class: int, rng) -> np.ndarray:
    chosen = []
    for c in range(g.num_classes):
        members = np.flatnonzero(g.labels == c)
        if members.size < per_class:
            raise ValueError(
                f"class {c} has {members.size} nodes, fewer than per_class={per_class}"
            )
        chosen.append(rng.choice(members, size=per_class, replace=False))
    return np.sort(np.concatenate(chosen))


def _train_one_run(cfg: ExperimentConfig, g, adj, run_seed: int):
    if cfg.condition == "iid":
        rng = np.random.default_rng((run_seed, 2))
        train_idx = _uniform_train_sample(g, cfg.per_class, rng)
    else:
        train_idx = biased_train_sample(g, adj, cfg.per_class, cfg.alpha, seed=run_seed)
    if cfg.condition == "condsr":
        lam_cmd, lam_mmd = cfg.train.lambda_cmd, cfg.train.lambda_mmd
    else:
        lam_cmd, lam_mmd = 0.0, 0.0
    tcfg = dataclasses.replace(
        cfg.train, lambda_cmd=lam_cmd, lambda_mmd=lam_mmd, seed=run_seed
    )
    split0 = make_splits(g, train_idx, seed=run_seed)
    model = train(g, adj, split0, cfg.model, tcfg)
    return train_idx, model, tcfg


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ResultTable:
    g = resolve_graph(cfg)
    adj = normalize_adjacency(g)
    table = ResultTable()

    for r in range(cfg.n_runs):
        run_seed = cfg.seed + 1000 * r
        train_idx, model, tcfg = _train_one_run(cfg, g, adj, run_seed)
        probs = predict_probs(model, adj, g)
        # rank structure of every node's probability row, computed once
        order = np.argsort(-probs, axis=1, kind="stable")
        cums = np.cumsum(np.take_along_axis(probs, order, axis=1), axis=1)
        pos = np.argmax(order == g.labels[:, None], axis=1)
        scores_all = np.take_along_axis(cums, pos[:, None], axis=1)[:, 0]

        for s in range(cfg.n_splits):
            split = make_splits(g, train_idx, seed=run_seed + s)
            test = split.test_idx
            acc = float(np.mean(pos[test] == 0))
            for eps in cfg.epsilons:
                cal = calibrate(scores_all[split.calib_idx], eps)
                sizes = (cums[test] <= cal.threshold).sum(axis=1)
                covered = pos[test] < sizes
                table.rows.append(
                    ResultRow(
                        run=r,
                        split=s,
                        epsilon=float(eps),
                        condition=cfg.condition,
                        accuracy=acc,
                        coverage=float(covered.mean()),
                        inefficiency=float(sizes.mean()),
                        lambda_cmd=tcfg.lambda_cmd,
                        lambda_mmd=tcfg.lambda_mmd,
                        alpha=cfg.alpha,
                    )
                )

    if out_dir is not None:
        emit_report(table, out_dir, config_echo=cfg.to_dict())
    return table


def sweep_lambdas(cfg: ExperimentConfig, grid_cmd, grid_mmd, out_dir=None) -> ResultTable:
    if not grid_cmd or not grid_mmd:
        raise ValueError("sweep grids must be nonempty")
    table = ResultTable()
    for lc in grid_cmd:
        for lm in grid_mmd:
            sub = dataclasses.replace(
                cfg,
                condition="condsr",
                train=dataclasses.replace(cfg.train, lambda_cmd=lc, lambda_mmd=lm),
            )
            table.extend(run_experiment(sub))
    if out_dir is not None:
        emit_report(table, out_dir, config_echo=cfg.to_dict())
    return table


def best_cell(table: ResultTable) -> dict:
    """Sweep cell with the highest mean accuracy."""
    groups = [g for g in table.aggregate()["groups"]]
    best = max(groups, key=lambda e: e["accuracy_mean"])
    return {
        "lambda_cmd": best["lambda_cmd"],
        "lambda_mmd": best["lambda_mmd"],
        "accuracy_mean": best["accuracy_mean"],
    }


def relative_improvement(before: float, after: float) -> float:
    """Percent change from before to after."""
    return (after - before) / before * 100.0


def _fmt_pct(mean, std):
    return f"{100 * mean:.2f} ± {100 * std:.2f}"


def _fmt_raw(mean, std):
    return f"{mean:.2f} ± {std:.2f}"


def _transition_line(label, entries, fmt):
    """entries: list of (condition, mean, std) in iid->biased->condsr order."""
    parts = [f"{entries[0][0]} {fmt(entries[0][1], entries[0][2])}"]
    for (_, prev_mean, _), (cond, mean, std) in zip(entries, entries[1:]):
        arrow = relative_improvement(prev_mean, mean)
        parts.append(f"--({arrow:+.2f}%)--> {cond} {fmt(mean, std)}")
    return f"| {label} | " + " ".join(parts) + " |"


def render_table_md(table: ResultTable) -> str:
    agg = table.aggregate()["groups"]
    epsilons = sorted({e["epsilon"] for e in agg})
    lines = ["# Experiment report", ""]
    for metric, fmt, title in (
        ("accuracy", _fmt_pct, "Accuracy (%)"),
        ("coverage", _fmt_pct, "Empirical coverage (%)"),
        ("inefficiency", _fmt_raw, "Prediction-set size"),
    ):
        lines += [f"## {title}", "", "| epsilon | transitions |", "| --- | --- |"]
        for eps in epsilons:
            entries = []
            for cond in CONDITIONS:
                cells = [
                    e for e in agg if e["condition"] == cond and e["epsilon"] == eps
                ]
                if cells:
                    # sweep tables carry several lambda cells; show the best
                    cell = max(cells, key=lambda e: e["accuracy_mean"])
                    entries.append((cond, cell[f"{metric}_mean"], cell[f"{metric}_std"]))
            if entries:
                lines.append(_transition_line(f"{eps:g}", entries, fmt))
        lines.append("")
    return "\n".join(lines)


def emit_report(table: ResultTable, out_dir, config_echo=None) -> None:
    if not table.rows:
        raise ValueError("emit_report: empty result table")
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, "rows.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in table.sorted_rows():
            writer.writerow([repr(getattr(r, c)) if isinstance(getattr(r, c), float)
                             else getattr(r, c) for c in CSV_COLUMNS])

    summary = {
        "version": __version__,
        "config": config_echo,
        "aggregates": table.aggregate(),
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")

    with open(os.path.join(out_dir, "table.md"), "w", encoding="utf-8") as fh:
        fh.write(render_table_md(table))


def read_rows_csv(path) -> ResultTable:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for rec in reader:
            rows.append(
                ResultRow(
                    run=int(rec["run"]),
                    split=int(rec["split"]),
                    epsilon=float(rec["epsilon"]),
                    condition=rec["condition"],
                    accuracy=float(rec["accuracy"]),
                    coverage=float(rec["coverage"]),
                    inefficiency=float(rec["inefficiency"]),
                    lambda_cmd=float(rec["lambda_cmd"]),
                    lambda_mmd=float(rec["lambda_mmd"]),
                    alpha=float(rec["alpha"]),
                )
            )
    return ResultTable(rows)
