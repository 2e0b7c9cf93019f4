"""Black-box baselines and their projection onto sentences.

Projection finds the sentence minimizing ``sum |omega_i|`` over rows where
it disagrees with the black box. That equals maximizing ``sum s_i d_i`` with
``s_i = |omega_i| * (2 * bb_i - 1)``, so the ordinary sentence search does
the work.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .core import ClauseUniverse, ColumnKind, DataError, ProfitParams, RctDataset, SentencePolicy, eval_sentence
from .profit import ProfitReport, ipw_profit, omega_weights, plugin_policy, policy_loss
from .search import DEFAULT_MAX_CANDIDATES, brute_force_weights, greedy_weights

PROVENANCES = ("external-file", "knn-plugin", "oracle")


@dataclass(frozen=True)
class BlackBoxPolicy:
    assignment: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise DataError(f"unknown provenance {self.provenance!r}")
        if not np.all(np.isin(self.assignment, (0, 1))):
            raise DataError("black-box assignment must be 0/1")

    @property
    def n(self) -> int:
        return len(self.assignment)

    def take(self, idx) -> "BlackBoxPolicy":
        return BlackBoxPolicy(self.assignment[idx], self.provenance)


@dataclass(frozen=True)
class ProjectionResult:
    policy: SentencePolicy
    loss: float
    profit: ProfitReport
    agreement: float
    search: object


# ---------------------------------------------------------------------------
# k-NN CATE baseline


class KnnCate:
    """Difference of k-nearest-neighbour outcome means between arms.

    Features are the numeric and binary covariates plus one-hot categorical
    levels, standardized with the fitting data's moments.
    """

    def __init__(self, k_neighbors: int = 50):
        if k_neighbors < 1:
            raise DataError("k_neighbors must be >= 1")
        self.k = k_neighbors

    def fit(self, data: RctDataset) -> "KnnCate":
        treated = data.W == 1
        if treated.sum() < self.k or (~treated).sum() < self.k:
            raise DataError(
                f"need at least {self.k} treated and {self.k} control rows, "
                f"got {int(treated.sum())} and {int((~treated).sum())}"
            )
        table = data.covariates
        self.levels_ = {
            name: sorted(set(table.columns[name].tolist()))
            for name, kind in zip(table.names, table.kinds)
            if kind is ColumnKind.CATEGORICAL
        }
        X = self._raw_features(data)
        mean = X.mean(axis=0) if X.shape[1] else np.zeros(0)
        sd = X.std(axis=0) if X.shape[1] else np.zeros(0)
        keep = sd > 0
        if X.shape[1] and not keep.all():
            warnings.warn(
                f"{int((~keep).sum())} zero-variance feature(s) excluded from the distance", stacklevel=2
            )
        self.keep_, self.mean_, self.sd_ = keep, mean[keep], sd[keep]
        Z = self._standardize(X)
        self.y_t_ = data.Y[treated]
        self.y_c_ = data.Y[~treated]
        self.tree_t_ = cKDTree(Z[treated])
        self.tree_c_ = cKDTree(Z[~treated])
        return self

    def _raw_features(self, data: RctDataset) -> np.ndarray:
        table = data.covariates
        cols = []
        for name, kind in zip(table.names, table.kinds):
            col = table.columns[name]
            if kind is ColumnKind.CATEGORICAL:
                cols.extend((col == lvl).astype(np.float64) for lvl in self.levels_[name])
            else:
                cols.append(col.astype(np.float64))
        if not cols:
            return np.zeros((data.n, 0))
        return np.column_stack(cols)

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        Z = (X[:, self.keep_] - self.mean_) / self.sd_
        if Z.shape[1] == 0:
            Z = np.zeros((X.shape[0], 1))
        return Z

    def predict(self, data: RctDataset) -> np.ndarray:
        Z = self._standardize(self._raw_features(data))
        _, it = self.tree_t_.query(Z, k=self.k)
        _, ic = self.tree_c_.query(Z, k=self.k)
        it = it.reshape(len(Z), -1)
        ic = ic.reshape(len(Z), -1)
        return self.y_t_[it].mean(axis=1) - self.y_c_[ic].mean(axis=1)


def knn_cate(data: RctDataset, k_neighbors: int = 50, query: Optional[RctDataset] = None) -> np.ndarray:
    """Estimated lift per row of ``query`` (default: ``data`` itself)."""
    model = KnnCate(k_neighbors).fit(data)
    return model.predict(query if query is not None else data)


def knn_blackbox(
    train: RctDataset, target: RctDataset, params: ProfitParams, k_neighbors: int = 50
) -> BlackBoxPolicy:
    beta = knn_cate(train, k_neighbors, target)
    return BlackBoxPolicy(plugin_policy(beta, params), "knn-plugin")


# ---------------------------------------------------------------------------
# projection


def projection_weights(data: RctDataset, params: ProfitParams, blackbox: BlackBoxPolicy):
    """Signed weights ``s`` and constant ``C`` with loss(d) = C - sum(s * d)."""
    if blackbox.n != data.n:
        raise DataError(f"black box has {blackbox.n} rows, data has {data.n}")
    mag = np.abs(omega_weights(data, params).omega)
    bb = blackbox.assignment.astype(np.float64)
    return mag * (2.0 * bb - 1.0), math.fsum(mag[bb == 1])


def project_down(
    data: RctDataset,
    params: ProfitParams,
    blackbox: BlackBoxPolicy,
    universe: ClauseUniverse,
    l: int,
    method: str = "greedy",
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> ProjectionResult:
    """Sentence of length ``l`` closest to the black box in profit-weighted loss."""
    s, _ = projection_weights(data, params, blackbox)
    if method == "greedy":
        result = greedy_weights(s, universe, l)
    elif method == "brute":
        result = brute_force_weights(s, universe, l, 0.0, max_candidates)
    else:
        raise ValueError(f"unknown method {method!r}")
    d = eval_sentence(result.best, universe)
    return ProjectionResult(
        policy=result.best,
        loss=policy_loss(data, params, blackbox.assignment, d),
        profit=ipw_profit(data, params, d),
        agreement=float(np.mean(d == blackbox.assignment)),
        search=result,
    )


def cost_of_explanation(blackbox_profit: ProfitReport, comp_profit: ProfitReport) -> float:
    """Per-person black-box profit minus comprehensible-policy profit."""
    if blackbox_profit.n != comp_profit.n:
        raise DataError(
            f"profit reports cover different rows ({blackbox_profit.n} vs {comp_profit.n})"
        )
    return blackbox_profit.mean - comp_profit.mean


# ---------------------------------------------------------------------------
# policy files


def save_policy(path, assignment) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["d"])
        writer.writerows([[int(v)] for v in assignment])


def load_external_policy(path, n: Optional[int] = None) -> BlackBoxPolicy:
    """Read a single-column CSV with header ``d``."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["d"]:
        raise DataError(f"{path}: expected a single column with header 'd'")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 1 or row[0].strip() not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: policy value must be 0 or 1, got {','.join(row)!r}")
        values.append(int(row[0]))
    if n is not None and len(values) != n:
        raise DataError(f"{path}: {len(values)} policy rows, dataset has {n}")
    return BlackBoxPolicy(np.array(values, dtype=np.int8), "external-file")
