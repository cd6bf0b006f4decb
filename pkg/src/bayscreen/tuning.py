"""Hyperparameter grid search on a fully labelled corpus.

Each combination drives the screening loop with oracle auto-review and is
scored sensitivity x efficiency; a partition tree over one-hot encoded
hyperparameters groups combinations into performance clusters.
"""

from __future__ import annotations

import itertools
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .bart import BartConfig
from .ensemble import EnsembleConfig, Limits
from .records import manual_labels
from .rulegen import CartConfig, CartNode, fit_cart
from .screening import auto_screen, label_initial
from .store import Workspace, read_annotation, write_annotation

__all__ = [
    "GridSpec", "TrialResult", "enumerate_grid", "run_trial",
    "ClusterReport", "analyse_grid",
]

QUANTILE_PRESETS = ((0.1, 0.5, 0.9), (0.05, 0.5, 0.95), (0.01, 0.5, 0.99))

COMBO_FIELDS = ["resample", "n_init", "n_models", "pos_mult", "pred_quants"]


@dataclass
class GridSpec:
    resample: tuple = (False, True)
    n_init: tuple = (50, 100, 250, 500)
    n_models: tuple = (1, 5, 10, 20, 40, 60)
    pos_mult: tuple = (1, 10, 20)
    pred_quants: tuple = QUANTILE_PRESETS

    def __post_init__(self):
        for name in COMBO_FIELDS:
            if not getattr(self, name):
                raise ValueError(f"empty grid axis: {name}")


def enumerate_grid(spec: GridSpec | None = None) -> list[dict]:
    spec = spec or GridSpec()
    axes = [getattr(spec, name) for name in COMBO_FIELDS]
    return [dict(zip(COMBO_FIELDS, values))
            for values in itertools.product(*axes)]


@dataclass
class TrialResult:
    combo: dict
    n_iterations: int
    positives_found: int
    total_positives: int
    reviewed: int
    total: int
    sensitivity: float
    efficiency: float
    score: float

    def to_row(self) -> dict:
        row = {k: (str(v) if k == "pred_quants" else v)
               for k, v in self.combo.items()}
        row.update(n_iterations=self.n_iterations,
                   positives_found=self.positives_found,
                   total_positives=self.total_positives,
                   reviewed=self.reviewed, total=self.total,
                   sensitivity=self.sensitivity, efficiency=self.efficiency,
                   score=self.score)
        return row


def run_trial(table: pd.DataFrame, oracle: dict[str, str], combo: dict,
              seed: int = 0, bart: BartConfig | None = None,
              stop_after: int = 4, workdir: Path | None = None) -> TrialResult:
    """Simulate a full screening session under one hyperparameter combination."""
    ids = [str(v) for v in table["ID"]]
    missing = [i for i in ids if oracle.get(i) not in ("y", "n")]
    if missing:
        raise ValueError(f"corpus not fully labelled; missing {missing[:3]}")
    bart = bart or BartConfig()
    config = EnsembleConfig(
        n_models=int(combo["n_models"]),
        oversample_mult=int(combo["pos_mult"]),
        pred_quantiles=tuple(combo["pred_quants"]),
        resample=bool(combo["resample"]),
        limits=Limits(stop_after=stop_after),
        bart=BartConfig(bart.n_trees, bart.n_iterations, bart.n_burnin, bart.k,
                        bart.split_prior_alpha, bart.split_prior_beta, seed))

    tmp = workdir or Path(tempfile.mkdtemp(prefix="bayscreen_trial_"))
    ws = Workspace(tmp)
    session = "trial"
    initial = label_initial(table, oracle, int(combo["n_init"]))
    write_annotation(ws, session, initial)
    results = auto_screen(ws, session, config, oracle)

    final = read_annotation(
        sorted(ws.session_dir(session).glob("Records_*.csv"))[-1])
    labels = manual_labels(final)
    found = int((labels == "y").sum())
    reviewed = int((labels != "").sum())
    total = len(final)
    total_pos = sum(1 for i in ids if oracle[i] == "y")
    sensitivity = found / total_pos if total_pos else 0.0
    efficiency = 1.0 - reviewed / total
    return TrialResult(combo=dict(combo), n_iterations=len(results),
                       positives_found=found, total_positives=total_pos,
                       reviewed=reviewed, total=total,
                       sensitivity=sensitivity, efficiency=efficiency,
                       score=sensitivity * efficiency)


# ---------------------------------------------------------------------------
# cluster analysis

@dataclass
class ClusterReport:
    clusters: pd.DataFrame          # cluster id, rule, size, mean score
    best_cluster: int
    best_row: pd.Series             # winning combination
    marginals: pd.DataFrame         # per parameter value, mean score


def _score_column(results: pd.DataFrame, score_kind: str) -> pd.Series:
    if score_kind == "sens_eff":
        return results["sensitivity"] * results["efficiency"]
    pos_rate = results["positives_found"] / results["reviewed"].clip(lower=1)
    if score_kind == "pos_rate":
        return pos_rate
    if score_kind == "pos_rate_sens":
        return pos_rate * results["sensitivity"]
    raise ValueError(f"unknown score kind: {score_kind!r}")


def _one_hot(results: pd.DataFrame) -> tuple[np.ndarray, list[str]]:
    columns = []
    names = []
    for param in COMBO_FIELDS:
        for value in sorted(results[param].astype(str).unique()):
            columns.append((results[param].astype(str) == value).to_numpy())
            names.append(f"{param}={value}")
    return np.column_stack(columns), names


def _leaf_assignments(tree: CartNode, X: np.ndarray,
                      names: list[str]) -> tuple[np.ndarray, dict]:
    """Leaf id per row plus leaf id -> path rule string."""
    assign = np.empty(X.shape[0], dtype=int)
    rules: dict[int, str] = {}
    counter = itertools.count()

    def walk(node: CartNode, idx: np.ndarray, path: list[str]):
        if node.is_leaf:
            leaf = next(counter)
            assign[idx] = leaf
            rules[leaf] = " & ".join(path) if path else "(all)"
            return
        mask = X[idx, node.feature].astype(bool)
        walk(node.left, idx[~mask], path + [f"not {names[node.feature]}"])
        walk(node.right, idx[mask], path + [names[node.feature]])

    walk(tree, np.arange(X.shape[0]), [])
    return assign, rules


def analyse_grid(results: pd.DataFrame, score_kind: str = "sens_eff",
                 cart_config: CartConfig | None = None) -> ClusterReport:
    """Partition-tree clustering of grid results; the winning combination is
    the max-sensitivity (then max-efficiency) row of the best-mean cluster."""
    results = results.reset_index(drop=True)
    score = _score_column(results, score_kind).to_numpy(dtype=float)
    cart_config = cart_config or CartConfig(max_depth=4, min_leaf=5)
    X, names = _one_hot(results)
    if np.unique(score).size < 2:
        assign = np.zeros(len(results), dtype=int)
        rules = {0: "(all)"}
    else:
        tree = fit_cart(X, score, cart_config)
        assign, rules = _leaf_assignments(tree, X, names)

    cluster_rows = []
    for leaf in sorted(rules):
        members = results[assign == leaf]
        member_scores = score[assign == leaf]
        best = members.assign(_score=member_scores).sort_values(
            ["sensitivity", "efficiency", "_score"],
            ascending=False, kind="mergesort").iloc[0]
        cluster_rows.append({
            "cluster": leaf, "rule": rules[leaf], "size": len(members),
            "mean_score": float(member_scores.mean()),
            "best_sensitivity": float(best["sensitivity"]),
            "best_efficiency": float(best["efficiency"]),
            **{f"best_{p}": best[p] for p in COMBO_FIELDS},
        })
    clusters = pd.DataFrame(cluster_rows).sort_values(
        "mean_score", ascending=False, kind="mergesort").reset_index(drop=True)

    best_cluster = int(clusters.iloc[0]["cluster"])
    in_best = results[assign == best_cluster]
    best_row = in_best.sort_values(
        ["sensitivity", "efficiency"] + COMBO_FIELDS[:4],
        ascending=[False, False, True, True, True, True],
        kind="mergesort").iloc[0]

    marginal_rows = []
    for param in COMBO_FIELDS:
        for value in sorted(results[param].astype(str).unique()):
            mask = (results[param].astype(str) == value).to_numpy()
            marginal_rows.append({"parameter": param, "value": value,
                                  "mean_score": float(score[mask].mean()),
                                  "n": int(mask.sum())})
    marginals = pd.DataFrame(marginal_rows)
    return ClusterReport(clusters=clusters, best_cluster=best_cluster,
                         best_row=best_row, marginals=marginals)
