import itertools
import json

import numpy as np
import pytest

from comptarget.core import OPS, Atom, LogicOp, SentencePolicy, StructuralError, eval_sentence
from comptarget.treemap import (
    find_equivalent_sentence,
    multiplexer_tree,
    sentence_to_tree,
    tree_eval,
    truth_patterns,
)
from conftest import make_universe


def pattern_universe(l):
    patterns = truth_patterns(range(l))
    return make_universe(*[patterns[j] for j in range(l)]), patterns


class TestConversion:
    def test_single_atom(self):
        tree = sentence_to_tree(SentencePolicy((Atom(0),)))
        assert tree.depth == 1
        assert tree.root.split == Atom(0)
        assert [tree.nodes[tree.root.true_child].label, tree.nodes[tree.root.false_child].label] == [1, 0]

    def test_conjunction_shape(self):
        tree = sentence_to_tree(SentencePolicy((Atom(0), Atom(1)), (LogicOp.AND,)))
        root = tree.root
        t, f = tree.nodes[root.true_child], tree.nodes[root.false_child]
        assert root.split == Atom(0)
        assert f.is_leaf and f.label == 0
        assert t.split == Atom(1)
        assert tree.nodes[t.true_child].label == 1 and tree.nodes[t.false_child].label == 0

    def test_xor_odd_parity(self):
        u, patterns = pattern_universe(2)
        tree = sentence_to_tree(SentencePolicy((Atom(0), Atom(1)), (LogicOp.XOR,)))
        got = tree_eval(tree, u)
        assert got.tolist() == (patterns[0] ^ patterns[1]).astype(int).tolist()

    def test_conjunction_agrees_with_sentence(self):
        u, _ = pattern_universe(2)
        pol = SentencePolicy((Atom(0), Atom(1)), (LogicOp.AND,))
        np.testing.assert_array_equal(tree_eval(sentence_to_tree(pol), u), eval_sentence(pol, u))

    @pytest.mark.parametrize("l", [1, 2, 3, 4, 5])
    def test_exhaustive_agreement_and_depth(self, l):
        u, patterns = pattern_universe(l)
        for negs in itertools.product((False, True), repeat=l):
            for ops in itertools.product(OPS, repeat=l - 1):
                pol = SentencePolicy(tuple(Atom(j, n) for j, n in enumerate(negs)), ops)
                tree = sentence_to_tree(pol)
                assert tree.depth == l
                np.testing.assert_array_equal(tree_eval(tree, u), eval_sentence(pol, u))
                np.testing.assert_array_equal(tree_eval(tree, patterns), eval_sentence(pol, u))

    def test_random_five_atom_sentence(self, rng):
        u, _ = pattern_universe(5)
        pol = SentencePolicy(
            tuple(Atom(int(c), bool(rng.integers(2))) for c in rng.permutation(5)),
            tuple(OPS[int(i)] for i in rng.integers(0, 3, 4)),
        )
        assert len(u.truth_matrix[0]) == 32
        np.testing.assert_array_equal(tree_eval(sentence_to_tree(pol), u), eval_sentence(pol, u))

    def test_missing_truth(self):
        tree = sentence_to_tree(SentencePolicy((Atom(0), Atom(3)), (LogicOp.OR,)))
        with pytest.raises(StructuralError):
            tree_eval(tree, {0: np.array([True])})


class TestExport:
    def test_text_and_dot(self):
        u = make_universe([1], [0], labels=["is new", "has app"])
        tree = sentence_to_tree(SentencePolicy((Atom(0), Atom(1, True)), (LogicOp.AND,)))
        text = tree.to_text(u)
        assert text.startswith("split on is new\n")
        assert "not has app" in text
        dot = tree.to_dot(u)
        assert dot.startswith("digraph") and dot.count("->") == 4

    def test_json(self):
        tree = sentence_to_tree(SentencePolicy((Atom(0),)))
        recs = json.loads(tree.to_json())
        assert recs[0]["split"] == "clause 0"
        assert {r.get("leaf") for r in recs[1:]} == {0, 1}


class TestNonRepresentability:
    def test_multiplexer_has_no_two_atom_sentence(self):
        tree = multiplexer_tree(0, 1, 2)
        assert tree.depth == 2
        found, checked = find_equivalent_sentence(tree, 2, [0, 1, 2])
        assert found is None
        assert checked == 6**2 * 3

    def test_multiplexer_semantics(self):
        patterns = truth_patterns([0, 1, 2])
        got = tree_eval(multiplexer_tree(0, 1, 2), patterns).astype(bool)
        want = np.where(patterns[0], patterns[1], patterns[2])
        np.testing.assert_array_equal(got, want)

    def test_search_finds_representable_trees(self):
        pol = SentencePolicy((Atom(0), Atom(1, True)), (LogicOp.OR,))
        found, _ = find_equivalent_sentence(sentence_to_tree(pol), 2)
        assert found is not None
        patterns = truth_patterns([0, 1])
        np.testing.assert_array_equal(
            tree_eval(sentence_to_tree(found), patterns), tree_eval(sentence_to_tree(pol), patterns)
        )
