"""Direct search over sentences: exhaustive enumeration and the greedy builder.

Both searches maximize ``constant + sum(weights * d)`` over sentences with a
fixed number of atoms. For profit maximization the weights are the
per-row omega weights; the ex-post projection reuses the same machinery
with signed loss weights.

Candidates are scored in bulk. With prefix assignment ``p`` and clause truth
``t`` every (operator, atom) extension follows from three weighted counts
``w.p``, ``w.t`` and ``w.(p&t)``, so one matrix-vector product per prefix
scores all ``6k`` extensions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    OPS,
    Atom,
    ClauseUniverse,
    LogicOp,
    ProfitParams,
    RctDataset,
    SentencePolicy,
    StructuralError,
    eval_sentence,
    render_sentence,
)
from .profit import omega_weights

DEFAULT_MAX_CANDIDATES = 10**9
_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class SentenceClass:
    """Which operators and atom signs a search may use.

    The default is the full class. ``SentenceClass((LogicOp.OR,), False)``
    gives unions of plain clauses, a weighted coverage problem.
    """

    ops: tuple[LogicOp, ...] = OPS
    negation: bool = True

    def __post_init__(self):
        if not self.ops or any(op not in OPS for op in self.ops):
            raise ValueError(f"ops must be a nonempty subset of {[o.value for o in OPS]}")

    @property
    def is_full(self) -> bool:
        return set(self.ops) == set(OPS) and self.negation

    def atom_mask(self, k: int) -> np.ndarray:
        mask = np.ones((k, 2), dtype=bool)
        mask[:, 1] = self.negation
        return mask

    def extension_mask(self, k: int) -> np.ndarray:
        mask = np.zeros((k, 2, 3), dtype=bool)
        for op in self.ops:
            mask[:, 0, OPS.index(op)] = True
            mask[:, 1, OPS.index(op)] = self.negation
        return mask

    def count(self, k: int, l: int) -> int:
        signs = 2 if self.negation else 1
        return (signs * k) ** l * len(self.ops) ** (l - 1)


FULL_CLASS = SentenceClass()


class BudgetExceeded(RuntimeError):
    pass


def search_space_size(k: int, l: int, algorithm: str = "brute") -> int:
    """Number of candidate sentences scored.

    ``brute``: every sentence, 3^(l-1) (2k)^l. ``greedy``: what the greedy
    builder here scores, 2k + 6k(l-1). ``greedy-published`` (alias
    ``greedy-paper``): the published count 6(l-1)kl, reported for
    comparison only.
    """
    if k < 1 or l < 1:
        raise ValueError("k and l must be >= 1")
    if algorithm == "brute":
        return 3 ** (l - 1) * (2 * k) ** l
    if algorithm in ("greedy", "greedy-implemented"):
        return 2 * k + 6 * k * (l - 1)
    if algorithm in ("greedy-published", "greedy-paper"):
        return 6 * (l - 1) * k * l
    raise ValueError(f"unknown algorithm {algorithm!r}")


@dataclass(frozen=True)
class TrajectoryStep:
    l: int
    policy: SentencePolicy
    profit: float


@dataclass
class SearchResult:
    algorithm: str
    best: SentencePolicy
    best_profit: float
    n: int
    trajectory: list[TrajectoryStep]
    evaluations: int
    tie_breaks: list[dict] = field(default_factory=list)
    monotone: bool = True

    @property
    def best_mean(self) -> float:
        return self.best_profit / self.n

    def to_dict(self, universe: Optional[ClauseUniverse] = None) -> dict:
        def text(p):
            return render_sentence(p, universe) if universe is not None else None

        return {
            "algorithm": self.algorithm,
            "best": self.best.to_dict(),
            "sentence": text(self.best),
            "best_profit": self.best_profit,
            "best_mean": self.best_mean,
            "n": self.n,
            "evaluations": self.evaluations,
            "trajectory": [
                {"l": s.l, "policy": s.policy.to_dict(), "sentence": text(s.policy), "profit": s.profit}
                for s in self.trajectory
            ],
            "tie_breaks": self.tie_breaks,
            "monotone": self.monotone,
        }


class _Scorer:
    """Bulk scoring of sentence extensions against fixed row weights."""

    def __init__(self, weights: np.ndarray, universe: ClauseUniverse):
        if universe.k == 0:
            raise StructuralError("empty clause universe")
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (universe.n_rows,):
            raise StructuralError(
                f"weights have {weights.shape[0]} rows, universe is bound to {universe.n_rows}"
            )
        self.w = weights
        self.T = universe.truth_matrix
        self.k = universe.k
        self.w_total = math.fsum(weights)
        self.wt = self._weighted_counts(weights)
        self.tol = _TIE_RTOL * max(1.0, math.fsum(np.abs(weights)))

    def _weighted_counts(self, v: np.ndarray) -> np.ndarray:
        chunk = max(1024, 4_000_000 // self.k)
        out = np.zeros(self.k)
        for s in range(0, self.T.shape[1], chunk):
            out += self.T[:, s : s + chunk] @ v[s : s + chunk]
        return out

    def atoms(self) -> np.ndarray:
        """Scores of the 2k single-atom sentences, shape (k, 2)."""
        return np.stack([self.wt, self.w_total - self.wt], axis=1)

    def extensions(self, prefix: np.ndarray) -> np.ndarray:
        """Scores of ``prefix <op> [not] clause``, shape (k, 2, 3) = (clause, negated, op)."""
        wp = math.fsum(self.w[prefix])
        wpt = self._weighted_counts(np.where(prefix, self.w, 0.0))
        wt, W = self.wt, self.w_total
        out = np.empty((self.k, 2, 3))
        out[:, 0, 0] = wpt
        out[:, 0, 1] = wp + wt - wpt
        out[:, 0, 2] = wp + wt - 2.0 * wpt
        wnt, wpnt = W - wt, wp - wpt
        out[:, 1, 0] = wpnt
        out[:, 1, 1] = wp + wnt - wpnt
        out[:, 1, 2] = wp + wnt - 2.0 * wpnt
        return out


def _atom_from_flat(idx: int) -> Atom:
    cid, neg = divmod(idx, 2)
    return Atom(cid, bool(neg))


def _ext_from_flat(idx: int) -> tuple[LogicOp, Atom]:
    cid, rem = divmod(idx, 6)
    neg, op = divmod(rem, 3)
    return OPS[op], Atom(cid, bool(neg))


def _objective(universe, weights, constant, policy) -> float:
    d = eval_sentence(policy, universe).astype(bool)
    return constant + math.fsum(weights[d])


def _pick(scores: np.ndarray, tol: float, mask: Optional[np.ndarray] = None) -> tuple[int, int]:
    """First flat index within ``tol`` of the max, and how many are tied."""
    flat = scores.ravel() if mask is None else np.where(mask, scores, -np.inf).ravel()
    top = flat.max()
    tied = np.flatnonzero(flat >= top - tol)
    return int(tied[0]), len(tied)


def _all_sentences(k: int, l: int, cls: SentenceClass = FULL_CLASS):
    """Every sentence of length ``l`` in ascending sort-key order."""
    signs = (False, True) if cls.negation else (False,)
    atoms = [Atom(cid, neg) for cid in range(k) for neg in signs]
    ops = [op for op in OPS if op in cls.ops]
    if l == 1:
        for a in atoms:
            yield SentencePolicy((a,))
        return
    for prefix in _all_sentences(k, l - 1, cls):
        for a in atoms:
            for op in ops:
                yield prefix.extend(op, a)


def greedy_weights(
    weights: np.ndarray,
    universe: ClauseUniverse,
    l: int,
    constant: float = 0.0,
    sentence_class: SentenceClass = FULL_CLASS,
) -> SearchResult:
    """Grow a sentence one (operator, atom) at a time, keeping the prefix fixed."""
    if l < 1:
        raise ValueError("l must be >= 1")
    scorer = _Scorer(weights, universe)
    weights = scorer.w
    atom_mask = sentence_class.atom_mask(universe.k)
    ext_mask = sentence_class.extension_mask(universe.k)
    scores = scorer.atoms()
    evaluations = int(atom_mask.sum())
    idx, n_tied = _pick(scores, scorer.tol, atom_mask)
    policy = SentencePolicy((_atom_from_flat(idx),))
    ties = []
    if n_tied > 1:
        ties.append({"step": 1, "n_tied": n_tied, "chosen": policy.to_dict()})
    trajectory = [TrajectoryStep(1, policy, _objective(universe, weights, constant, policy))]
    monotone = True
    for step in range(2, l + 1):
        prefix = eval_sentence(policy, universe).astype(bool)
        scores = scorer.extensions(prefix)
        evaluations += int(ext_mask.sum())
        idx, n_tied = _pick(scores, scorer.tol, ext_mask)
        op, atom = _ext_from_flat(idx)
        policy = policy.extend(op, atom)
        if n_tied > 1:
            ties.append({"step": step, "n_tied": n_tied, "chosen": policy.to_dict()})
        value = _objective(universe, weights, constant, policy)
        if value < trajectory[-1].profit - scorer.tol:
            monotone = False
            warnings.warn(
                f"greedy step {step} lowered the objective from {trajectory[-1].profit} to {value}",
                stacklevel=2,
            )
        trajectory.append(TrajectoryStep(step, policy, value))
    return SearchResult(
        "greedy", policy, trajectory[-1].profit, universe.n_rows, trajectory, evaluations, ties, monotone
    )


def brute_force_weights(
    weights: np.ndarray,
    universe: ClauseUniverse,
    l: int,
    constant: float = 0.0,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
    sentence_class: SentenceClass = FULL_CLASS,
) -> SearchResult:
    """Exhaustive argmax over all sentences with exactly ``l`` atoms."""
    if l < 1:
        raise ValueError("l must be >= 1")
    if universe.k == 0:
        raise StructuralError("empty clause universe")
    size = sentence_class.count(universe.k, l)
    if max_candidates is not None and size > max_candidates:
        formula = (
            f"3^(l-1)*(2k)^l = 3^{l - 1}*{2 * universe.k}^{l} = " if sentence_class.is_full else ""
        )
        raise BudgetExceeded(
            f"exhaustive search would score {formula}{size:,} "
            f"sentences, above the cap of {max_candidates:,}; lower l, coarsen the clauses, "
            "use the greedy search, or raise the cap"
        )
    scorer = _Scorer(weights, universe)
    weights = scorer.w
    atom_mask = sentence_class.atom_mask(universe.k)
    ext_mask = sentence_class.extension_mask(universe.k)
    n_ext = int(ext_mask.sum())
    if l == 1:
        scores = scorer.atoms()
        idx, n_tied = _pick(scores, scorer.tol, atom_mask)
        best = SentencePolicy((_atom_from_flat(idx),))
        evaluations = int(atom_mask.sum())
        ties = [{"step": 1, "n_tied": n_tied, "chosen": best.to_dict()}] if n_tied > 1 else []
    else:
        prefixes = list(_all_sentences(universe.k, l - 1, sentence_class))
        prefix_max = np.empty(len(prefixes))
        evaluations = 0
        for j, prefix in enumerate(prefixes):
            scores = scorer.extensions(eval_sentence(prefix, universe).astype(bool))
            evaluations += n_ext
            prefix_max[j] = scores[ext_mask].max()
        top = prefix_max.max()
        contenders = np.flatnonzero(prefix_max >= top - scorer.tol)
        n_tied = 0
        best = None
        for j in contenders:
            scores = scorer.extensions(eval_sentence(prefixes[j], universe).astype(bool))
            tied = np.flatnonzero(np.where(ext_mask, scores, -np.inf).ravel() >= top - scorer.tol)
            n_tied += len(tied)
            if best is None and len(tied):
                op, atom = _ext_from_flat(int(tied[0]))
                best = prefixes[j].extend(op, atom)
        ties = [{"step": l, "n_tied": n_tied, "chosen": best.to_dict()}] if n_tied > 1 else []
    value = _objective(universe, weights, constant, best)
    return SearchResult(
        "brute", best, value, universe.n_rows, [TrajectoryStep(l, best, value)], evaluations, ties
    )


def brute_force(
    data: RctDataset,
    params: ProfitParams,
    universe: ClauseUniverse,
    l: int,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> SearchResult:
    """Best ``l``-atom sentence by in-sample IPW profit, by full enumeration."""
    ow = omega_weights(data, params)
    return brute_force_weights(ow.omega, universe, l, ow.constant, max_candidates)


def greedy(data: RctDataset, params: ProfitParams, universe: ClauseUniverse, l: int) -> SearchResult:
    """Greedy ``l``-atom sentence by in-sample IPW profit."""
    ow = omega_weights(data, params)
    return greedy_weights(ow.omega, universe, l, ow.constant)


def search(
    data: RctDataset,
    params: ProfitParams,
    universe: ClauseUniverse,
    l: int,
    algorithm: str = "greedy",
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> SearchResult:
    if algorithm == "greedy":
        return greedy(data, params, universe, l)
    if algorithm == "brute":
        return brute_force(data, params, universe, l, max_candidates)
    raise ValueError(f"unknown algorithm {algorithm!r}")


__all__ = [
    "BudgetExceeded",
    "FULL_CLASS",
    "SentenceClass",
    "SearchResult",
    "TrajectoryStep",
    "brute_force",
    "brute_force_weights",
    "greedy",
    "greedy_weights",
    "search",
    "search_space_size",
]
