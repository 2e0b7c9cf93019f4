import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from comptarget.core import (
    OPS,
    Atom,
    ColumnKind,
    CovariateTable,
    DataError,
    LogicOp,
    SentencePolicy,
    StructuralError,
    build_universe,
    clauses_from_binary,
    clauses_from_categorical,
    clauses_from_continuous,
    empirical_quantile,
    eval_sentence,
    parse_sentence,
    render_sentence,
)
from conftest import make_universe


def sentence(*parts):
    """sentence(A, 'and', B, ...) where atoms are (id, negated) tuples or ids."""
    atoms, ops = [], []
    for j, p in enumerate(parts):
        if j % 2:
            ops.append(LogicOp(p))
        else:
            atoms.append(Atom(*p) if isinstance(p, tuple) else Atom(p))
    return SentencePolicy(tuple(atoms), tuple(ops))


def fold_oracle(values, negs, ops):
    """Recursive left fold on python bools, written independently of the library."""
    def atom(j):
        return (not values[j]) if negs[j] else values[j]

    def go(j):
        if j == 0:
            return atom(0)
        left = go(j - 1)
        op = ops[j - 1]
        if op == "and":
            return left and atom(j)
        if op == "or":
            return left or atom(j)
        return left != atom(j)

    return int(go(len(values) - 1))


class TestEvalSentence:
    def test_conjunction_of_true_atoms(self):
        u = make_universe([1], [1])
        assert eval_sentence(sentence(0, "and", 1), u).tolist() == [1]

    def test_left_associative_without_precedence(self):
        u = make_universe([1], [0], [0])
        assert eval_sentence(sentence(0, "or", 1, "and", 2), u).tolist() == [0]

    def test_negated_xor(self):
        u = make_universe([1], [1])
        assert eval_sentence(sentence((0, True), "xor", 1), u).tolist() == [1]

    @pytest.mark.parametrize("l", [1, 2, 3, 4, 5])
    def test_exhaustive_against_recursive_fold(self, l):
        patterns = list(itertools.product([0, 1], repeat=l))
        truths = [[p[j] for p in patterns] for j in range(l)]
        u = make_universe(*truths)
        for negs in itertools.product([False, True], repeat=l):
            for ops in itertools.product(["and", "or", "xor"], repeat=l - 1):
                pol = SentencePolicy(
                    tuple(Atom(j, n) for j, n in enumerate(negs)), tuple(LogicOp(o) for o in ops)
                )
                got = eval_sentence(pol, u).tolist()
                want = [fold_oracle(p, negs, ops) for p in patterns]
                assert got == want

    def test_unknown_clause_rejected(self):
        u = make_universe([1, 0])
        with pytest.raises(StructuralError):
            eval_sentence(SentencePolicy((Atom(3),)), u)

    def test_empty_sentence_rejected(self):
        with pytest.raises(StructuralError):
            SentencePolicy(())

    def test_operator_count_must_match(self):
        with pytest.raises(StructuralError):
            SentencePolicy((Atom(0), Atom(1)), ())

    def test_exactly_three_operators(self):
        assert len(LogicOp) == 3 and set(OPS) == set(LogicOp)

    def test_negation_involution(self, rng):
        u = make_universe(rng.random(50) < 0.5)
        a = Atom(0)
        assert a.negate().negate() == a
        np.testing.assert_array_equal(u.atom_truth(a.negate().negate()), u.atom_truth(a))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=40))
    def test_de_morgan(self, rows):
        a = [r[0] for r in rows]
        b = [r[1] for r in rows]
        u = make_universe(a, b)
        lhs = eval_sentence(sentence((0, True), "and", (1, True)), u)
        rhs = 1 - eval_sentence(sentence(0, "or", 1), u)
        np.testing.assert_array_equal(lhs, rhs)

    def test_pure(self, rng):
        u = make_universe(rng.random(30) < 0.5, rng.random(30) < 0.5)
        pol = sentence(0, "xor", (1, True))
        first = eval_sentence(pol, u)
        np.testing.assert_array_equal(first, eval_sentence(pol, u))

    def test_reused_clause_flagged(self):
        assert sentence(0, "and", (0, True)).reuses_clause
        assert not sentence(0, "and", 1).reuses_clause


CATALOG_LABELS = [
    "has bought high amount of items during Christmas over the last two years",
    "has high spending during Spring over the last two years",
    "has low spending during last years holiday mailer promotional period",
]


class TestRenderParse:
    def test_single_atom(self):
        u = make_universe([1], labels=["is_new"])
        assert render_sentence(SentencePolicy((Atom(0),)), u) == "Target customer if she is_new"

    def test_labels_with_spaces_are_quoted(self):
        u = make_universe([1], labels=["is a new user"])
        assert render_sentence(SentencePolicy((Atom(0),)), u) == 'Target customer if she "is a new user"'

    def test_three_clause_example(self):
        u = make_universe([1], [0], [1], labels=CATALOG_LABELS)
        pol = sentence(0, "and", (1, True), "or", 2)
        text = render_sentence(pol, u)
        assert text == (
            'Target customer if she "has bought high amount of items during Christmas over the last two years"'
            ' and not "has high spending during Spring over the last two years"'
            ' or "has low spending during last years holiday mailer promotional period"'
        )
        assert parse_sentence(text, u) == pol

    def test_random_round_trip(self, rng):
        labels = ["x1", "has low x2", "is a new user", "and", "has channel app"]
        u = make_universe(*[[0]] * len(labels), labels=labels)
        for _ in range(100):
            l = int(rng.integers(1, 7))
            atoms = tuple(Atom(int(rng.integers(len(labels))), bool(rng.integers(2))) for _ in range(l))
            ops = tuple(OPS[int(rng.integers(3))] for _ in range(l - 1))
            pol = SentencePolicy(atoms, ops)
            assert parse_sentence(render_sentence(pol, u), u) == pol

    @pytest.mark.parametrize(
        "text",
        [
            "Target if she x",
            "Target customer if she",
            "Target customer if she x and",
            "Target customer if she x nand x",
            "Target customer if she unknown",
            "Target customer if she not",
        ],
    )
    def test_malformed(self, text):
        u = make_universe([1], labels=["x"])
        with pytest.raises(StructuralError):
            parse_sentence(text, u)


class TestClauseGeneration:
    def test_binary(self):
        [c] = clauses_from_binary(np.array([1, 0, 1]), "a new user")
        assert c.label == "is a new user"
        assert c.truth.tolist() == [True, False, True]

    def test_binary_all_zero_warns(self):
        with pytest.warns(UserWarning, match="covers no rows"):
            [c] = clauses_from_binary(np.zeros(4), "flag")
        assert not c.truth.any()

    def test_binary_rejects_other_values(self):
        with pytest.raises(DataError):
            clauses_from_binary(np.array([0, 1, 2]), "flag")

    def test_categorical_one_clause_per_level(self):
        col = np.array(["iPhone", "Android", "flip", "iPhone"], dtype=object)
        cl = clauses_from_categorical(col, "phone")
        assert len(cl) == 3
        assert {c.bin for c in cl} == {"iPhone", "Android", "flip"}
        np.testing.assert_array_equal(np.sum([c.truth for c in cl], axis=0), 1)

    def test_categorical_two_levels(self):
        assert len(clauses_from_categorical(np.array([1, 2, 2, 1]), "group")) == 2

    def test_categorical_constant_rejected(self):
        with pytest.raises(DataError, match="degenerate categorical"):
            clauses_from_categorical(np.array(["a", "a"]), "g")

    def test_zero_inflated_spend(self):
        v = np.concatenate([np.zeros(97), [50.0, 129.99, 300.0]])
        zero, low, high = clauses_from_continuous(v, "past November sales")
        assert zero.label == "has zero past November sales"
        assert low.label == "has low past November sales among spenders"
        assert high.label == "has high past November sales among spenders"
        assert low.predicate.upper == 129.99
        assert zero.truth.sum() == 97
        assert v[low.truth].tolist() == [50.0, 129.99]
        assert v[high.truth].tolist() == [300.0]

    def test_terciles_one_to_nine(self):
        v = np.arange(1.0, 10.0)
        assert empirical_quantile(v, 1, 3) == 3.0
        assert empirical_quantile(v, 2, 3) == 6.0
        low, mid, high = clauses_from_continuous(v, "x")
        assert v[low.truth].tolist() == [1, 2, 3]
        assert v[mid.truth].tolist() == [4, 5, 6]
        assert v[high.truth].tolist() == [7, 8, 9]

    def test_constant_rejected(self):
        with pytest.raises(DataError, match="constant"):
            clauses_from_continuous(np.full(5, 2.0), "x")

    def test_too_few_distinct_values(self):
        with pytest.raises(DataError, match="fewer than 3"):
            clauses_from_continuous(np.array([1.0, 2.0, 1.0, 2.0]), "x")

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=60))
    def test_three_bins_partition_rows(self, values):
        v = np.array(values)
        if len(np.unique(v)) < 3:
            return
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cl = clauses_from_continuous(v, "x")
        np.testing.assert_array_equal(np.sum([c.truth for c in cl], axis=0), 1)


class TestUniverse:
    def test_count_for_continuous_columns(self, rng):
        table = CovariateTable.from_columns({f"x{j}": rng.normal(size=40) for j in range(150)})
        assert build_universe(table).k == 450

    def test_single_binary(self):
        table = CovariateTable.from_columns({"flag": [0, 1, 1]})
        assert build_universe(table).k == 1

    def test_mixed(self, rng):
        table = CovariateTable.from_columns(
            {
                "flag": rng.integers(0, 2, 30),
                "phone": rng.choice(["a", "b", "c"], 30),
                "spend": rng.normal(size=30),
            }
        )
        u = build_universe(table)
        assert u.k == 7
        assert [c.id for c in u.clauses] == list(range(7))
        assert u.source[1][0] == "phone"

    def test_collects_all_diagnostics(self):
        table = CovariateTable.from_columns(
            {"a": ["x", "x"], "b": [1.5, 1.5], "c": [0, 1]}, {"a": "categorical", "b": "continuous"}
        )
        with pytest.raises(DataError) as info:
            build_universe(table)
        assert len(info.value.diagnostics) == 2

    def test_bind_reapplies_cuts(self, rng):
        table = CovariateTable.from_columns({"x": np.arange(1.0, 10.0)})
        u = build_universe(table)
        other = CovariateTable.from_columns({"x": [0.0, 3.0, 3.5, 100.0]})
        bound = u.bind(other)
        assert bound.truth_matrix.astype(int).T.tolist() == [[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]

    def test_table_rejects_missing(self):
        with pytest.raises(DataError, match="missing"):
            CovariateTable.from_columns({"x": [1.0, np.nan, 2.0]})

    def test_table_rejects_non_binary(self):
        with pytest.raises(DataError):
            CovariateTable.from_columns({"x": [0, 2]}, {"x": "binary"})

    def test_kind_inference(self):
        t = CovariateTable.from_columns({"b": [0, 1], "c": [0.5, 2.0], "s": ["u", "v"]})
        assert t.kinds == (ColumnKind.BINARY, ColumnKind.CONTINUOUS, ColumnKind.CATEGORICAL)
