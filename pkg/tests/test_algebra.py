import random

import pytest

from provopt.algebra import (
    ANCESTOR, NOT_ANCESTOR, ON_ALL_PATHS,
    Agg, Arith, Attr, Cmp, Const, Cross, DupElim, GraphError,
    Join, Project, Relation, SchemaError, Select, Union, Window,
    all_nodes, ancestry, expr_attrs, expr_size, fresh_name, node_count,
    parent_map, right_output_names, schema_of, structurally_equal, substitute,
    substitute_attrs,
)


def rel(name="R", attrs=("a", "b")):
    return Relation(name, tuple(attrs))


class TestSchemaOf:
    def test_join_concatenates(self):
        q = Join((("a", "c"),), rel("R", ("a", "b")), rel("S", ("c", "d")))
        assert schema_of(q) == ("a", "b", "c", "d")

    def test_select_copies_child(self):
        q = Select(Cmp("<", Attr("a"), Const(5)), rel())
        assert schema_of(q) == ("a", "b")

    def test_window_appends_output(self):
        q = Window("sum", "b", "x", (), (), rel())
        assert schema_of(q) == ("a", "b", "x")

    def test_instrumented_projection_has_seven_attrs(self, shop_query):
        from provopt.instrument import instrument_query
        assert len(schema_of(instrument_query(shop_query))) == 7

    def test_agg_schema(self):
        q = Agg(("b",), (("sum", "a", "s"), ("count", "a", "c")), rel())
        assert schema_of(q) == ("b", "s", "c")

    def test_join_collision_qualified_with_primes(self):
        q = Cross(rel("R", ("a", "b")), rel("S", ("b", "c")))
        assert schema_of(q) == ("a", "b", "b'", "c")
        assert right_output_names(q) == ("b'", "c")

    def test_unresolved_attribute_raises(self):
        q = Select(Cmp("=", Attr("zz"), Const(1)), rel())
        with pytest.raises(SchemaError):
            schema_of(q)

    def test_duplicate_projection_output_raises(self):
        q = Project(((Attr("a"), "x"), (Attr("b"), "x")), rel())
        with pytest.raises(SchemaError):
            schema_of(q)

    def test_union_arity_mismatch_raises(self):
        q = Union(rel("R", ("a", "b")), rel("S", ("c",)))
        with pytest.raises(SchemaError):
            schema_of(q)


class TestSubstitute:
    def test_wrap_shared_subgraph_once(self):
        shared = rel()
        left = Select(Cmp("<", Attr("a"), Const(3)), shared)
        root = Union(left, Select(Cmp(">", Attr("a"), Const(0)), shared))
        wrapped = Select(Cmp("=", Attr("a"), Attr("b")), shared)
        new_root = substitute(root, shared, wrapped)
        leaves = [n for n in all_nodes(new_root) if isinstance(n, Relation)]
        assert len(leaves) == 1  # still shared, not duplicated
        selects = [n for n in all_nodes(new_root)
                   if isinstance(n, Select) and n.cond == Cmp("=", Attr("a"), Attr("b"))]
        assert len(selects) == 1
        assert len(parent_map(new_root)[selects[0]]) == 2

    def test_identity_substitution(self):
        q = Select(Cmp("<", Attr("a"), Const(3)), rel())
        assert substitute(q, q, q) is q

    def test_diamond_rebinds_both_paths(self):
        leaf = rel()
        l = Select(Cmp("<", Attr("a"), Const(3)), leaf)
        r = Select(Cmp(">", Attr("a"), Const(0)), leaf)
        root = Union(l, r)
        replacement = rel("R2", ("a", "b"))
        new_root = substitute(root, leaf, replacement)
        names = {n.name for n in all_nodes(new_root) if isinstance(n, Relation)}
        assert names == {"R2"}

    def test_node_count_bounded(self):
        leaf = rel()
        root = Union(Select(Cmp("<", Attr("a"), Const(3)), leaf), DupElim(leaf))
        before = node_count(root)
        wrapped = Select(Cmp("=", Attr("a"), Attr("b")), leaf)
        after = node_count(substitute(root, leaf, wrapped))
        assert after <= before + node_count(wrapped)

    def test_target_not_in_graph(self):
        with pytest.raises(GraphError):
            substitute(rel(), rel("S"), rel("T"))

    def test_schema_mismatch_checked(self):
        q = DupElim(rel())
        with pytest.raises(SchemaError):
            substitute(q, q.child, rel("S", ("x",)))


class TestAncestry:
    def test_linear_chain_on_all_paths(self):
        leaf = rel()
        mid = Select(Cmp("<", Attr("a"), Const(3)), leaf)
        root = DupElim(mid)
        assert ancestry(root, leaf, root) == ON_ALL_PATHS
        assert ancestry(root, leaf, mid) == ON_ALL_PATHS

    def test_diamond_one_branch_is_plain_ancestor(self):
        leaf = rel()
        branch = DupElim(leaf)
        other = Select(Cmp(">", Attr("a"), Const(0)), leaf)
        root = Union(branch, other)
        assert ancestry(root, leaf, branch) == ANCESTOR

    def test_root_has_no_ancestors(self):
        leaf = rel()
        root = DupElim(leaf)
        assert ancestry(root, root, leaf) == NOT_ANCESTOR

    def test_consistency_on_random_dags(self):
        rng = random.Random(7)
        for _ in range(50):
            leaf = rel()
            nodes = [leaf]
            for _ in range(rng.randint(1, 6)):
                child = rng.choice(nodes)
                nodes.append(DupElim(child))
            root = nodes[-1]
            for _ in range(len(nodes)):
                a, b = rng.choice(nodes), rng.choice(nodes)
                if a not in set(all_nodes(root)) or b not in set(all_nodes(root)):
                    continue
                res = ancestry(root, a, b)
                if res == ON_ALL_PATHS:
                    assert ancestry(root, a, b) != NOT_ANCESTOR


class TestExprHelpers:
    def test_expr_size_attr(self):
        assert expr_size(Attr("a")) == 1

    def test_expr_size_nested(self):
        e = Arith("+", Attr("a"), Arith("+", Attr("d"), Attr("e")))
        assert expr_size(e) == 5

    def test_self_doubling_growth_detectable(self):
        # substituting b := a+a doubles references per level
        e = Arith("+", Attr("a"), Attr("a"))
        for _ in range(9):
            e = substitute_attrs(Arith("+", Attr("b"), Attr("b")), {"b": e})
        assert expr_size(e) >= 2 ** 10

    def test_expr_attrs(self):
        e = Cmp("=", Attr("a"), Arith("+", Attr("b"), Const(1)))
        assert expr_attrs(e) == {"a", "b"}

    def test_fresh_name_primes(self):
        assert fresh_name("b", ("a", "b", "b'")) == "b''"


def test_structural_equality_ignores_identity():
    q1 = Select(Cmp("<", Attr("a"), Const(3)), rel())
    q2 = Select(Cmp("<", Attr("a"), Const(3)), rel())
    assert q1 is not q2
    assert structurally_equal(q1, q2)
    q3 = Select(Cmp("<", Attr("a"), Const(4)), rel())
    assert not structurally_equal(q1, q3)
