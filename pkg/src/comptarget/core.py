"""Datasets, clauses and sentence policies.

A sentence policy is an ordered list of atoms (clauses, possibly negated)
joined by ``and``/``or``/``xor``. Sentences are evaluated strictly left to
right with no operator precedence: ``A or B and C`` means ``(A or B) and C``.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np


class StructuralError(ValueError):
    """A policy or universe is malformed."""


class DataError(ValueError):
    """Input data violates a domain constraint."""

    def __init__(self, message: str, diagnostics: Optional[Sequence[str]] = None):
        self.diagnostics = list(diagnostics or [message])
        super().__init__(message)


class ColumnKind(str, Enum):
    BINARY = "binary"
    CATEGORICAL = "categorical"
    CONTINUOUS = "continuous"


def infer_kind(values: np.ndarray) -> ColumnKind:
    """Guess a column kind: {0,1} -> binary, non-numeric -> categorical."""
    if values.dtype.kind in "fiub":
        uniq = np.unique(values)
        if np.all(np.isin(uniq, (0, 1))):
            return ColumnKind.BINARY
        return ColumnKind.CONTINUOUS
    return ColumnKind.CATEGORICAL


@dataclass(frozen=True)
class CovariateTable:
    """Column-oriented covariates. Numeric columns are float64, categorical are str."""

    names: tuple[str, ...]
    kinds: tuple[ColumnKind, ...]
    columns: Mapping[str, np.ndarray]

    def __post_init__(self):
        if len(self.names) != len(self.kinds):
            raise DataError("names and kinds differ in length")
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate column names")
        problems = []
        lengths = {len(self.columns[name]) for name in self.names}
        if len(lengths) > 1:
            problems.append(f"columns have unequal lengths {sorted(lengths)}")
        for name, kind in zip(self.names, self.kinds):
            col = self.columns[name]
            if kind is ColumnKind.CATEGORICAL:
                missing = [i for i, v in enumerate(col) if v is None or v == ""]
            else:
                missing = np.flatnonzero(np.isnan(col)).tolist()
            if missing:
                problems.append(f"column {name!r}: missing cell(s) at rows {missing[:5]}")
                continue
            if kind is ColumnKind.BINARY and not np.all(np.isin(col, (0, 1))):
                bad = np.flatnonzero(~np.isin(col, (0, 1)))
                problems.append(
                    f"column {name!r}: binary column has value {col[bad[0]]!r} at row {bad[0]}"
                )
        if problems:
            raise DataError("; ".join(problems), problems)

    @classmethod
    def from_columns(
        cls,
        columns: Mapping[str, Iterable],
        kinds: Optional[Mapping[str, str]] = None,
    ) -> "CovariateTable":
        kinds = dict(kinds or {})
        names, kind_list, cols = [], [], {}
        for name, raw in columns.items():
            arr = np.asarray(raw)
            kind = ColumnKind(kinds[name]) if name in kinds else infer_kind(arr)
            if kind is ColumnKind.CATEGORICAL:
                arr = np.array(["" if v is None else str(v) for v in arr], dtype=object)
            else:
                try:
                    arr = arr.astype(np.float64)
                except (TypeError, ValueError) as exc:
                    raise DataError(f"column {name!r}: non-numeric value for {kind.value} column") from exc
            names.append(name)
            kind_list.append(kind)
            cols[name] = arr
        return cls(tuple(names), tuple(kind_list), cols)

    @property
    def n_rows(self) -> int:
        if not self.names:
            return 0
        return len(self.columns[self.names[0]])

    def kind(self, name: str) -> ColumnKind:
        return self.kinds[self.names.index(name)]

    def take(self, idx: np.ndarray) -> "CovariateTable":
        return CovariateTable(self.names, self.kinds, {n: self.columns[n][idx] for n in self.names})


@dataclass(frozen=True)
class ProfitParams:
    """Margin ``m`` and per-person treatment cost ``c``."""

    m: float
    c: float

    def __post_init__(self):
        if not self.m > 0:
            raise DataError(f"margin must be positive, got {self.m}")
        if not self.c >= 0:
            raise DataError(f"cost must be non-negative, got {self.c}")


@dataclass(frozen=True)
class RctDataset:
    """Randomized-experiment rows: covariates, treatment, outcome, propensity.

    ``y0``/``y1`` hold the potential outcomes when the data are synthetic.
    """

    covariates: CovariateTable
    W: np.ndarray
    Y: np.ndarray
    e: np.ndarray
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.covariates.n_rows if self.covariates.names else len(self.W)
        for name in ("W", "Y", "e"):
            if len(getattr(self, name)) != n:
                raise DataError(f"{name} has {len(getattr(self, name))} rows, expected {n}")
        if not np.all(np.isin(self.W, (0, 1))):
            raise DataError("treatment W must be 0/1")
        if np.any(np.isnan(self.Y)):
            raise DataError("outcome Y has missing values")
        if not np.all((self.e > 0) & (self.e < 1)):
            bad = np.flatnonzero(~((self.e > 0) & (self.e < 1)))
            raise DataError(f"propensity must lie in (0, 1); row {bad[0]} has {self.e[bad[0]]}")
        if (self.y0 is None) != (self.y1 is None):
            raise DataError("potential outcomes must be given as a pair")
        if self.y0 is not None:
            composed = np.where(self.W == 1, self.y1, self.y0)
            if not np.array_equal(composed, self.Y):
                raise DataError("Y does not equal W*Y(1) + (1-W)*Y(0)")

    @classmethod
    def create(cls, covariates, W, Y, e, y0=None, y1=None) -> "RctDataset":
        n = len(W)
        e_arr = np.broadcast_to(np.asarray(e, dtype=np.float64), (n,)).copy()
        return cls(
            covariates,
            np.asarray(W).astype(np.int8),
            np.asarray(Y, dtype=np.float64),
            e_arr,
            None if y0 is None else np.asarray(y0, dtype=np.float64),
            None if y1 is None else np.asarray(y1, dtype=np.float64),
        )

    @property
    def n(self) -> int:
        return len(self.W)

    @property
    def has_potential(self) -> bool:
        return self.y0 is not None

    def take(self, idx) -> "RctDataset":
        idx = np.asarray(idx)
        return RctDataset(
            self.covariates.take(idx),
            self.W[idx],
            self.Y[idx],
            self.e[idx],
            None if self.y0 is None else self.y0[idx],
            None if self.y1 is None else self.y1[idx],
        )


# ---------------------------------------------------------------------------
# clauses


@dataclass(frozen=True)
class Predicate:
    """Re-applicable test behind a clause.

    ``op`` is one of ``eq`` (v == value), ``le`` (v <= value), ``gt``
    (v > value) or ``between`` (value < v <= upper).
    """

    column: str
    op: str
    value: object
    upper: Optional[float] = None

    def apply(self, table: CovariateTable) -> np.ndarray:
        col = table.columns[self.column]
        if self.op == "eq":
            if table.kind(self.column) is ColumnKind.CATEGORICAL:
                return col == str(self.value)
            return col == self.value
        if self.op == "le":
            return col <= self.value
        if self.op == "gt":
            return col > self.value
        if self.op == "between":
            return (col > self.value) & (col <= self.upper)
        raise StructuralError(f"unknown predicate op {self.op!r}")

    def to_dict(self) -> dict:
        out = {"column": self.column, "op": self.op, "value": self.value}
        if self.upper is not None:
            out["upper"] = self.upper
        return out


@dataclass(frozen=True)
class Clause:
    id: int
    label: str
    truth: np.ndarray = field(repr=False, compare=False)
    predicate: Optional[Predicate] = None
    bin: str = ""

    def __post_init__(self):
        if not self.label.strip():
            raise StructuralError("clause label must be nonempty")
        if '"' in self.label:
            raise StructuralError(f"clause label may not contain double quotes: {self.label!r}")


@dataclass(frozen=True, order=True)
class Atom:
    clause_id: int
    negated: bool = False

    def negate(self) -> "Atom":
        return Atom(self.clause_id, not self.negated)


class LogicOp(Enum):
    AND = "and"
    OR = "or"
    XOR = "xor"

    @property
    def rank(self) -> int:
        return _OP_RANK[self]

    def apply(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        if self is LogicOp.AND:
            return left & right
        if self is LogicOp.OR:
            return left | right
        return left ^ right


_OP_RANK = {LogicOp.AND: 0, LogicOp.OR: 1, LogicOp.XOR: 2}
OPS = (LogicOp.AND, LogicOp.OR, LogicOp.XOR)


@dataclass(frozen=True)
class SentencePolicy:
    atoms: tuple[Atom, ...]
    ops: tuple[LogicOp, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "ops", tuple(self.ops))
        if not self.atoms:
            raise StructuralError("a sentence needs at least one atom")
        if len(self.ops) != len(self.atoms) - 1:
            raise StructuralError(
                f"{len(self.atoms)} atoms need {len(self.atoms) - 1} operators, got {len(self.ops)}"
            )

    @property
    def length(self) -> int:
        return len(self.atoms)

    def extend(self, op: LogicOp, atom: Atom) -> "SentencePolicy":
        return SentencePolicy(self.atoms + (atom,), self.ops + (op,))

    @property
    def reuses_clause(self) -> bool:
        """True when some clause appears more than once (possibly negated)."""
        ids = [a.clause_id for a in self.atoms]
        return len(set(ids)) < len(ids)

    def sort_key(self) -> tuple:
        key = []
        for j, atom in enumerate(self.atoms):
            key.append(atom.clause_id)
            key.append(int(atom.negated))
            key.append(self.ops[j - 1].rank if j else -1)
        return tuple(key)

    def to_dict(self) -> dict:
        return {
            "atoms": [[a.clause_id, a.negated] for a in self.atoms],
            "ops": [op.value for op in self.ops],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SentencePolicy":
        return cls(
            tuple(Atom(int(cid), bool(neg)) for cid, neg in data["atoms"]),
            tuple(LogicOp(op) for op in data["ops"]),
        )


class ClauseUniverse:
    """The clauses available to sentences, with truths bound to one table.

    ``truth_matrix`` is a ``(k, n_rows)`` boolean array materialized once.
    """

    def __init__(self, clauses: Sequence[Clause], n_rows: Optional[int] = None):
        self.clauses = tuple(clauses)
        ids = [c.id for c in self.clauses]
        if ids != list(range(len(ids))):
            raise StructuralError("clause ids must be 0..k-1 in order")
        labels = [c.label for c in self.clauses]
        if len(set(labels)) != len(labels):
            dup = sorted({x for x in labels if labels.count(x) > 1})
            raise StructuralError(f"duplicate clause labels: {dup}")
        lengths = {len(c.truth) for c in self.clauses}
        if len(lengths) > 1:
            raise StructuralError("clauses are bound to tables of different sizes")
        if n_rows is None:
            n_rows = lengths.pop() if lengths else 0
        elif lengths and lengths != {n_rows}:
            raise StructuralError("clause truth length does not match n_rows")
        self.n_rows = n_rows
        if self.clauses:
            self.truth_matrix = np.vstack([np.asarray(c.truth, dtype=bool) for c in self.clauses])
        else:
            self.truth_matrix = np.zeros((0, n_rows), dtype=bool)
        self.truth_matrix.setflags(write=False)
        self._by_label = {c.label: c.id for c in self.clauses}

    @property
    def k(self) -> int:
        return len(self.clauses)

    def __len__(self) -> int:
        return self.k

    def __getitem__(self, clause_id: int) -> Clause:
        return self.clauses[clause_id]

    @property
    def source(self) -> dict[int, tuple[str, str]]:
        return {
            c.id: (c.predicate.column if c.predicate else "", c.bin) for c in self.clauses
        }

    def id_for_label(self, label: str) -> int:
        try:
            return self._by_label[label]
        except KeyError:
            raise StructuralError(f"no clause labelled {label!r}") from None

    def atom_truth(self, atom: Atom) -> np.ndarray:
        if not 0 <= atom.clause_id < self.k:
            raise StructuralError(f"unknown clause id {atom.clause_id}")
        t = self.truth_matrix[atom.clause_id]
        return ~t if atom.negated else t

    def bind(self, table: CovariateTable) -> "ClauseUniverse":
        """Re-materialize every clause's truth on another table."""
        rebound = []
        for c in self.clauses:
            if c.predicate is None:
                raise StructuralError(f"clause {c.label!r} has no predicate to re-apply")
            rebound.append(Clause(c.id, c.label, c.predicate.apply(table), c.predicate, c.bin))
        return ClauseUniverse(rebound, table.n_rows)

    def describe(self) -> list[dict]:
        return [
            {
                "id": c.id,
                "label": c.label,
                "bin": c.bin,
                "predicate": c.predicate.to_dict() if c.predicate else None,
                "coverage": int(self.truth_matrix[c.id].sum()),
            }
            for c in self.clauses
        ]


def eval_sentence(policy: SentencePolicy, universe: ClauseUniverse) -> np.ndarray:
    """Per-row 0/1 assignment of a sentence, folded left to right."""
    out = universe.atom_truth(policy.atoms[0]).copy()
    for op, atom in zip(policy.ops, policy.atoms[1:]):
        out = op.apply(out, universe.atom_truth(atom))
    return out.astype(np.int8)


# ---------------------------------------------------------------------------
# text form

_PREFIX = "Target customer if she"
_TOKEN = re.compile(r'\s*(?:"([^"]*)"|(\S+))')


def _quote(label: str) -> str:
    return f'"{label}"' if (" " in label or label in ("and", "or", "xor", "not")) else label


def render_sentence(policy: SentencePolicy, universe: ClauseUniverse) -> str:
    parts = [_PREFIX]
    for j, atom in enumerate(policy.atoms):
        if j:
            parts.append(policy.ops[j - 1].value)
        if atom.negated:
            parts.append("not")
        if not 0 <= atom.clause_id < universe.k:
            raise StructuralError(f"unknown clause id {atom.clause_id}")
        parts.append(_quote(universe[atom.clause_id].label))
    return " ".join(parts)


def parse_sentence(text: str, universe: ClauseUniverse) -> SentencePolicy:
    """Inverse of :func:`render_sentence`."""
    text = text.strip()
    if not text.startswith(_PREFIX):
        raise StructuralError(f"sentence must start with {_PREFIX!r}")
    rest = text[len(_PREFIX):]
    tokens: list[tuple[str, bool]] = []
    pos = 0
    while pos < len(rest):
        if not rest[pos:].strip():
            break
        m = _TOKEN.match(rest, pos)
        if m is None:
            raise StructuralError(f"cannot tokenize sentence near {rest[pos:]!r}")
        quoted = m.group(1) is not None
        tokens.append((m.group(1) if quoted else m.group(2), quoted))
        pos = m.end()

    atoms: list[Atom] = []
    ops: list[LogicOp] = []
    i = 0
    expect_atom = True
    while i < len(tokens):
        tok, quoted = tokens[i]
        if expect_atom:
            negated = False
            if tok == "not" and not quoted:
                negated = True
                i += 1
                if i >= len(tokens):
                    raise StructuralError("dangling 'not'")
                tok, quoted = tokens[i]
            atoms.append(Atom(universe.id_for_label(tok), negated))
            expect_atom = False
        else:
            if quoted or tok not in ("and", "or", "xor"):
                raise StructuralError(f"expected and/or/xor, got {tok!r}")
            ops.append(LogicOp(tok))
            expect_atom = True
        i += 1
    if expect_atom:
        raise StructuralError("sentence ends without an atom")
    return SentencePolicy(tuple(atoms), tuple(ops))


# ---------------------------------------------------------------------------
# clause generation


def _warn_empty(clause: Clause) -> None:
    if not np.any(clause.truth):
        warnings.warn(f"clause {clause.label!r} covers no rows", stacklevel=3)


def clauses_from_binary(column: np.ndarray, name: str, start_id: int = 0) -> list[Clause]:
    column = np.asarray(column, dtype=np.float64)
    if not np.all(np.isin(column, (0, 1))):
        bad = column[~np.isin(column, (0, 1))][0]
        raise DataError(f"column {name!r} is not binary (found {bad!r})")
    clause = Clause(start_id, f"is {name}", column == 1, Predicate(name, "eq", 1.0), "true")
    _warn_empty(clause)
    return [clause]


def clauses_from_categorical(column: np.ndarray, name: str, start_id: int = 0) -> list[Clause]:
    column = np.array([str(v) for v in column], dtype=object)
    levels = sorted(set(column.tolist()), key=_level_key)
    if len(levels) < 2:
        raise DataError(f"column {name!r}: degenerate categorical (single level {levels[:1]})")
    return [
        Clause(start_id + j, f"has {name} {level}", column == level, Predicate(name, "eq", level), level)
        for j, level in enumerate(levels)
    ]


def _level_key(level: str):
    try:
        return (0, float(level), level)
    except ValueError:
        return (1, 0.0, level)


def empirical_quantile(values: np.ndarray, num: int, den: int) -> float:
    """Smallest observed v with F(v) >= num/den, using exact integer arithmetic."""
    s = np.sort(values)
    idx = -(-len(s) * num // den) - 1
    return float(s[max(idx, 0)])


def clauses_from_continuous(
    column: np.ndarray, name: str, zero_share_threshold: float = 0.5, start_id: int = 0
) -> list[Clause]:
    """Three bin clauses for a numeric column.

    Zero-inflated, non-negative columns get {zero, low among spenders, high
    among spenders} split at the median of the nonzero values; other
    columns get terciles. A value equal to a cut belongs to the lower bin.
    """
    v = np.asarray(column, dtype=np.float64)
    if len(v) == 0 or np.all(v == v[0]):
        raise DataError(f"column {name!r} is constant")
    zero_share = float(np.mean(v == 0))
    if zero_share >= zero_share_threshold and np.all(v >= 0):
        med = empirical_quantile(v[v != 0], 1, 2)
        specs = [
            ("zero", f"has zero {name}", Predicate(name, "eq", 0.0)),
            ("low", f"has low {name} among spenders", Predicate(name, "between", 0.0, med)),
            ("high", f"has high {name} among spenders", Predicate(name, "gt", med)),
        ]
    else:
        if len(np.unique(v)) < 3:
            raise DataError(f"column {name!r} has fewer than 3 distinct values")
        lo = empirical_quantile(v, 1, 3)
        hi = empirical_quantile(v, 2, 3)
        specs = [
            ("low", f"has low {name}", Predicate(name, "le", lo)),
            ("mid", f"has mid {name}", Predicate(name, "between", lo, hi)),
            ("high", f"has high {name}", Predicate(name, "gt", hi)),
        ]
    table = CovariateTable((name,), (ColumnKind.CONTINUOUS,), {name: v})
    out = []
    for j, (bin_name, label, pred) in enumerate(specs):
        clause = Clause(start_id + j, label, pred.apply(table), pred, bin_name)
        _warn_empty(clause)
        out.append(clause)
    return out


@dataclass(frozen=True)
class UniverseConfig:
    zero_share_threshold: float = 0.5
    exclude: tuple[str, ...] = ()


def build_universe(table: CovariateTable, config: Optional[UniverseConfig] = None) -> ClauseUniverse:
    """All clauses for a table, ordered by column then bin."""
    config = config or UniverseConfig()
    clauses: list[Clause] = []
    problems: list[str] = []
    for name, kind in zip(table.names, table.kinds):
        if name in config.exclude:
            continue
        col = table.columns[name]
        try:
            if kind is ColumnKind.BINARY:
                new = clauses_from_binary(col, name, len(clauses))
            elif kind is ColumnKind.CATEGORICAL:
                new = clauses_from_categorical(col, name, len(clauses))
            else:
                new = clauses_from_continuous(col, name, config.zero_share_threshold, len(clauses))
        except DataError as exc:
            problems.extend(exc.diagnostics)
            continue
        clauses.extend(new)
    if problems:
        raise DataError(f"{len(problems)} column(s) rejected: " + "; ".join(problems), problems)
    return ClauseUniverse(clauses, table.n_rows)
