"""Sentence to decision-tree conversion.

A sentence with ``l`` atoms becomes a full decision tree of depth ``l``:
start from a single split on the first atom, then for each ``<op> D``
grow a split on ``D`` under the leaves selected by the operator.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .core import OPS, Atom, ClauseUniverse, LogicOp, SentencePolicy, StructuralError


@dataclass(frozen=True)
class Node:
    id: int
    depth: int
    split: Optional[Atom] = None
    true_child: Optional[int] = None
    false_child: Optional[int] = None
    label: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass(frozen=True)
class DecisionTree:
    nodes: tuple[Node, ...]

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @property
    def depth(self) -> int:
        return max(n.depth for n in self.nodes if n.is_leaf)

    @property
    def split_clauses(self) -> set[int]:
        return {n.split.clause_id for n in self.nodes if not n.is_leaf}

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes if n.is_leaf]

    def to_records(self, universe: Optional[ClauseUniverse] = None) -> list[dict]:
        out = []
        for n in self.nodes:
            rec = {"id": n.id, "depth": n.depth}
            if n.is_leaf:
                rec["leaf"] = n.label
            else:
                rec["split"] = _atom_text(n.split, universe)
                rec["true"] = n.true_child
                rec["false"] = n.false_child
            out.append(rec)
        return out

    def to_text(self, universe: Optional[ClauseUniverse] = None) -> str:
        lines: list[str] = []

        def walk(node_id: int, indent: int, prefix: str) -> None:
            node = self.nodes[node_id]
            pad = "  " * indent
            if node.is_leaf:
                lines.append(f"{pad}{prefix}target = {node.label}")
                return
            lines.append(f"{pad}{prefix}split on {_atom_text(node.split, universe)}")
            walk(node.true_child, indent + 1, "true:  ")
            walk(node.false_child, indent + 1, "false: ")

        walk(0, 0, "")
        return "\n".join(lines) + "\n"

    def to_dot(self, universe: Optional[ClauseUniverse] = None) -> str:
        lines = ["digraph sentence_tree {"]
        for n in self.nodes:
            if n.is_leaf:
                lines.append(f'  n{n.id} [shape=box, label="{n.label}"];')
            else:
                text = _atom_text(n.split, universe).replace('"', "'")
                lines.append(f'  n{n.id} [label="{text}"];')
                lines.append(f'  n{n.id} -> n{n.true_child} [label="true"];')
                lines.append(f'  n{n.id} -> n{n.false_child} [label="false"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json(self, universe: Optional[ClauseUniverse] = None) -> str:
        return json.dumps(self.to_records(universe), indent=2)


def _atom_text(atom: Atom, universe: Optional[ClauseUniverse]) -> str:
    name = universe[atom.clause_id].label if universe is not None else f"clause {atom.clause_id}"
    return f"not {name}" if atom.negated else name


class _Builder:
    def __init__(self):
        self.nodes: list[dict] = []

    def leaf(self, depth: int, label: int) -> int:
        self.nodes.append({"depth": depth, "label": label})
        return len(self.nodes) - 1

    def grow(self, node_id: int, atom: Atom, if_true: int, if_false: int) -> None:
        depth = self.nodes[node_id]["depth"]
        t = self.leaf(depth + 1, if_true)
        f = self.leaf(depth + 1, if_false)
        self.nodes[node_id] = {"depth": depth, "split": atom, "true": t, "false": f}

    def freeze(self) -> DecisionTree:
        return DecisionTree(
            tuple(
                Node(i, n["depth"], n.get("split"), n.get("true"), n.get("false"), n.get("label"))
                for i, n in enumerate(self.nodes)
            )
        )


def sentence_to_tree(policy: SentencePolicy) -> DecisionTree:
    b = _Builder()
    root = b.leaf(0, 0)
    b.grow(root, policy.atoms[0], 1, 0)
    for op, atom in zip(policy.ops, policy.atoms[1:]):
        current = [i for i, n in enumerate(b.nodes) if "label" in n]
        for i in current:
            value = b.nodes[i]["label"]
            if op is LogicOp.AND and value == 1:
                b.grow(i, atom, 1, 0)
            elif op is LogicOp.OR and value == 0:
                b.grow(i, atom, 1, 0)
            elif op is LogicOp.XOR:
                # under a 1-leaf the label flips when the clause holds
                b.grow(i, atom, 1 - value, value)
    return b.freeze()


TruthSource = Union[ClauseUniverse, Mapping[int, np.ndarray]]


def tree_eval(tree: DecisionTree, truths: TruthSource) -> np.ndarray:
    """Route every row from the root to a leaf and return the leaf labels."""

    def clause_truth(cid: int) -> np.ndarray:
        if isinstance(truths, ClauseUniverse):
            if not 0 <= cid < truths.k:
                raise StructuralError(f"missing truth for clause {cid}")
            return truths.truth_matrix[cid]
        if cid not in truths:
            raise StructuralError(f"missing truth for clause {cid}")
        return np.asarray(truths[cid], dtype=bool)

    n_rows = truths.n_rows if isinstance(truths, ClauseUniverse) else len(next(iter(truths.values())))
    out = np.zeros(n_rows, dtype=np.int8)
    stack = [(0, np.arange(n_rows))]
    while stack:
        node_id, rows = stack.pop()
        node = tree.nodes[node_id]
        if node.is_leaf:
            out[rows] = node.label
            continue
        t = clause_truth(node.split.clause_id)[rows]
        if node.split.negated:
            t = ~t
        stack.append((node.true_child, rows[t]))
        stack.append((node.false_child, rows[~t]))
    return out


def truth_patterns(clause_ids: Sequence[int]) -> dict[int, np.ndarray]:
    """All 2^m joint truth assignments of the given clauses, one row each."""
    ids = list(dict.fromkeys(clause_ids))
    grid = np.array(list(itertools.product((False, True), repeat=len(ids))), dtype=bool)
    return {cid: grid[:, j] for j, cid in enumerate(ids)}


def find_equivalent_sentence(tree: DecisionTree, l: int, clause_ids: Optional[Sequence[int]] = None):
    """Search sentences of length ``l`` over the given clauses for one matching the tree.

    Returns ``(sentence or None, number of candidates checked)``.
    """
    ids = sorted(clause_ids if clause_ids is not None else tree.split_clauses)
    patterns = truth_patterns(ids)
    target = tree_eval(tree, patterns)
    atoms = [Atom(cid, neg) for cid in ids for neg in (False, True)]
    checked = 0
    for combo in itertools.product(atoms, repeat=l):
        for ops in itertools.product(OPS, repeat=l - 1):
            checked += 1
            value = _truth(patterns, combo[0])
            for op, atom in zip(ops, combo[1:]):
                value = op.apply(value, _truth(patterns, atom))
            if np.array_equal(value.astype(np.int8), target):
                return SentencePolicy(combo, ops), checked
    return None, checked


def _truth(patterns, atom: Atom) -> np.ndarray:
    t = patterns[atom.clause_id]
    return ~t if atom.negated else t


def multiplexer_tree(a: int, b: int, c: int) -> DecisionTree:
    """Depth-2 tree 'if a then b else c' using three distinct clauses."""
    bld = _Builder()
    root = bld.leaf(0, 0)
    bld.grow(root, Atom(a), 0, 0)
    t, f = bld.nodes[root]["true"], bld.nodes[root]["false"]
    bld.grow(t, Atom(b), 1, 0)
    bld.grow(f, Atom(c), 1, 0)
    return bld.freeze()
