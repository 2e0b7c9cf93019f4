"""Inference for policy profits, greedy worst-case bounds and balance checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Atom, ClauseUniverse, ColumnKind, DataError, ProfitParams, RctDataset
from .profit import ipw_scores, omega_weights


@dataclass(frozen=True)
class CiReport:
    point: float
    se: float
    lower: float
    upper: float
    level: float
    B: int
    seed: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _replicate_rngs(seed: int, B: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(B)]


def bootstrap_ci(
    data: RctDataset,
    params: ProfitParams,
    d,
    B: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> CiReport:
    """Percentile bootstrap for the per-person IPW profit of a fixed policy.

    Rows are resampled with replacement; the policy is not re-fit.
    Replicate ``b`` draws from its own stream spawned from ``seed``.
    """
    if B < 2:
        raise DataError("bootstrap needs B >= 2")
    if not 0 < level < 1:
        raise DataError("level must lie in (0, 1)")
    if data.n == 0:
        raise DataError("empty dataset")
    scores = ipw_scores(data, params, d)
    return _percentile_ci(scores, B, level, seed)


def _percentile_ci(scores: np.ndarray, B: int, level: float, seed: int) -> CiReport:
    n = len(scores)
    reps = np.empty(B)
    for b, rng in enumerate(_replicate_rngs(seed, B)):
        reps[b] = scores[rng.integers(0, n, n)].mean()
    lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
    return CiReport(float(scores.mean()), float(reps.std(ddof=1)), float(lo), float(hi), level, B, seed)


def bootstrap_reoptimized(
    data: RctDataset,
    params: ProfitParams,
    fit: Callable[[RctDataset], np.ndarray],
    B: int = 200,
    level: float = 0.95,
    seed: int = 0,
) -> CiReport:
    """Slow variant: re-fit the policy on every replicate, then score it on that replicate.

    ``fit`` maps a dataset to a 0/1 assignment over its rows.
    """
    if B < 2:
        raise DataError("bootstrap needs B >= 2")
    point = float(ipw_scores(data, params, fit(data)).mean())
    reps = np.empty(B)
    for b, rng in enumerate(_replicate_rngs(seed, B)):
        sample = data.take(rng.integers(0, data.n, data.n))
        reps[b] = ipw_scores(sample, params, fit(sample)).mean()
    lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
    return CiReport(point, float(reps.std(ddof=1)), float(lo), float(hi), level, B, seed)


def analytic_se(data: RctDataset, params: ProfitParams, d) -> float:
    """Standard error of the per-person IPW profit from the per-row scores."""
    if data.n < 2:
        raise DataError("analytic SE needs n >= 2")
    scores = ipw_scores(data, params, d)
    return float(scores.std(ddof=1) / math.sqrt(data.n))


# ---------------------------------------------------------------------------
# greedy guarantee


def greedy_guarantee(alpha: float, gamma: float) -> float:
    """Fraction of the optimum the greedy chain is guaranteed: (1/a)(1 - exp(-a g))."""
    if alpha < 0 or not 0 <= gamma <= 1:
        raise ValueError(f"need alpha >= 0 and gamma in [0, 1], got ({alpha}, {gamma})")
    x = alpha * gamma
    if x < 1e-8:
        # series form; avoids dividing by a subnormal alpha
        return float(gamma * (1.0 - 0.5 * x))
    return float(-math.expm1(-x) / alpha)


@dataclass(frozen=True)
class BoundEstimate:
    alpha: float
    gamma: float
    guarantee: float
    restriction: str = "chain-restricted"
    degenerate: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def estimate_alpha_gamma(
    data: RctDataset, params: ProfitParams, universe: ClauseUniverse, greedy_result
) -> BoundEstimate:
    """Curvature and submodularity ratio along the greedy chain.

    The sentence's atoms are read as a union (all-``or``) so the objective is
    the weighted coverage ``F(S) = sum(omega_i, i covered by S)``. Ratios are
    taken over the nested chain sets, the rest of the chain, and single
    extensions by un-negated clauses, rather than over all subsets.
    """
    omega = omega_weights(data, params).omega
    return estimate_alpha_gamma_weights(omega, universe, greedy_result.best.atoms)


def estimate_alpha_gamma_weights(omega: np.ndarray, universe: ClauseUniverse, atoms) -> BoundEstimate:
    chain: list[Atom] = list(dict.fromkeys(atoms))
    if len(chain) < 2:
        return BoundEstimate(0.0, 1.0, 1.0, degenerate=True)
    T = universe.truth_matrix
    tol = 1e-10 * max(1.0, float(np.abs(omega).sum()))
    pos = [Atom(cid) for cid in range(universe.k)]
    extras = [a for a in pos if a not in chain]

    def cover(a: Atom) -> np.ndarray:
        return universe.atom_truth(a)

    def gain(mask: np.ndarray) -> float:
        return math.fsum(omega[mask])

    L = len(chain)
    covered = [np.zeros(universe.n_rows, dtype=bool)]
    for a in chain:
        covered.append(covered[-1] | cover(a))

    ratios_gamma = []
    for t in range(L):
        U = covered[t]
        rest = chain[t:]
        singles = sum(gain(cover(v) & ~U) for v in rest)
        joint = gain(covered[L] & ~U)
        if joint > tol:
            ratios_gamma.append(singles / joint)
        s = chain[t]
        s_new = cover(s) & ~U
        rho_s = gain(s_new)
        if extras:
            ext = T[[a.clause_id for a in extras]]
            rho_a = (ext & ~U) @ omega
            overlap = ext @ np.where(s_new, omega, 0.0)
            pair = rho_s + rho_a - overlap
            ok = pair > tol
            ratios_gamma.extend(((rho_s + rho_a[ok]) / pair[ok]).tolist())

    ratios_alpha = []
    for j in range(L):
        before = covered[j]
        s_new = cover(chain[j]) & ~before
        base = gain(s_new)
        if base <= tol:
            continue
        later = np.zeros(universe.n_rows, dtype=bool)
        for a in chain[j + 1 :]:
            later |= cover(a)
        ratios_alpha.append(gain(s_new & ~later) / base)
        if extras:
            ext = T[[a.clause_id for a in extras]]
            ratios_alpha.extend(((base - ext @ np.where(s_new, omega, 0.0)) / base).tolist())

    gamma = min([1.0] + ratios_gamma)
    gamma = min(1.0, max(0.0, gamma))
    alpha = 1.0 - min([1.0] + ratios_alpha)
    alpha = min(1.0, max(0.0, alpha))
    return BoundEstimate(alpha, gamma, greedy_guarantee(alpha, gamma))


# ---------------------------------------------------------------------------
# balance


def balance_diagnostics(data: RctDataset, threshold: float = 0.1) -> list[dict]:
    """Standardized mean difference between arms for every covariate (levels one-hot)."""
    t = data.W == 1
    if t.all() or not t.any():
        raise DataError("both arms need at least one row")
    out = []
    table = data.covariates
    for name, kind in zip(table.names, table.kinds):
        col = table.columns[name]
        if kind is ColumnKind.CATEGORICAL:
            series = [(f"{name}={lvl}", (col == lvl).astype(np.float64)) for lvl in sorted(set(col.tolist()))]
        else:
            series = [(name, col.astype(np.float64))]
        for label, x in series:
            xt, xc = x[t], x[~t]
            var_t = xt.var(ddof=1) if len(xt) > 1 else 0.0
            var_c = xc.var(ddof=1) if len(xc) > 1 else 0.0
            pooled = math.sqrt((var_t + var_c) / 2)
            diff = float(xt.mean() - xc.mean())
            if pooled > 0:
                smd = diff / pooled
            else:
                smd = 0.0 if diff == 0 else math.copysign(math.inf, diff)
            out.append({"covariate": label, "smd": smd, "flag": abs(smd) > threshold})
    return out


def mc_standard_error(values, ddof: int = 1) -> Optional[float]:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return None
    return float(values.std(ddof=ddof) / math.sqrt(len(values)))
