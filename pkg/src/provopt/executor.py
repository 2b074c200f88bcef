"""Bag-semantics evaluator, annotated evaluator, and cost model.

The plain evaluator is the correctness oracle for the rest of the package:
each operator implements its multiset definition directly. The annotated
evaluator propagates provenance polynomials (sums of products of tuple
variables) over the fragment where that semantics is defined, and
:func:`encode_provenance` flattens those polynomials into the relational
encoding (one output row per monomial, witness values in duplicated
columns).

The cost model is a deterministic textbook estimator; it exists to give the
cost-based optimizer a total order over plans, not to predict real runtimes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .algebra import (
    Agg, Arith, Attr, BoolOp, Cmp, Cond, Const, Cross, Diff, DupElim, Expr,
    FRAME_PARTITION, Intersect, Join, Node, Project, Relation,
    Select, Union, Window, Value,
    concat_qualified, schema_of,
)


class EvalError(Exception):
    """Runtime evaluation failure: unbound relation, type error, etc."""


# ---------------------------------------------------------------------------
# bags


@dataclass
class BagRelation:
    """A multiset of equal-width tuples with strictly positive counts."""

    schema: tuple[str, ...]
    tuples: dict[tuple, int] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, schema: Iterable[str], rows: Iterable[tuple]) -> "BagRelation":
        bag = cls(tuple(schema))
        for row in rows:
            bag.add(tuple(row))
        return bag

    def add(self, row: tuple, count: int = 1) -> None:
        if count <= 0:
            raise EvalError("multiplicities must be positive")
        if len(row) != len(self.schema):
            raise EvalError(f"row width {len(row)} does not match schema width {len(self.schema)}")
        self.tuples[row] = self.tuples.get(row, 0) + count

    def rows(self):
        """(tuple, multiplicity) pairs."""
        return self.tuples.items()

    @property
    def total(self) -> int:
        return sum(self.tuples.values())

    def support(self) -> frozenset[tuple]:
        return frozenset(self.tuples)

    def renamed(self, schema: Iterable[str]) -> "BagRelation":
        schema = tuple(schema)
        if len(schema) != len(self.schema):
            raise EvalError("renaming must preserve arity")
        return BagRelation(schema, dict(self.tuples))

    def contains(self, other: "BagRelation") -> bool:
        """Bag containment: every tuple of `other` occurs here at least as often."""
        return all(self.tuples.get(t, 0) >= m for t, m in other.tuples.items())


def bags_equal(a: BagRelation, b: BagRelation, *, by_name: bool = False) -> bool:
    """Multiset equality; with by_name, reorder columns by attribute name."""
    if by_name:
        if set(a.schema) != set(b.schema) or len(a.schema) != len(b.schema):
            return False
        b = reorder_columns(b, a.schema)
    return a.schema == b.schema and a.tuples == b.tuples


def reorder_columns(bag: BagRelation, schema: Iterable[str]) -> BagRelation:
    """Project a bag onto the same columns in a different order."""
    schema = tuple(schema)
    if set(schema) != set(bag.schema) or len(schema) != len(bag.schema):
        raise EvalError("reorder_columns needs a permutation of the schema")
    idx = [bag.schema.index(col) for col in schema]
    out = BagRelation(schema)
    for t, m in bag.rows():
        out.add(tuple(t[i] for i in idx), m)
    return out


# ---------------------------------------------------------------------------
# expression evaluation


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def eval_expr(e: Expr, env: Mapping[str, Value]) -> Value:
    if isinstance(e, Attr):
        if e.name not in env:
            raise EvalError(f"unbound attribute {e.name!r}")
        return env[e.name]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Arith):
        lv, rv = eval_expr(e.left, env), eval_expr(e.right, env)
        if not _is_number(lv) or not _is_number(rv):
            raise EvalError(f"arithmetic on non-numeric values {lv!r}, {rv!r}")
        if e.op == "+":
            return lv + rv
        if e.op == "-":
            return lv - rv
        if e.op == "*":
            return lv * rv
        if rv == 0:
            raise EvalError("division by zero")
        return lv / rv
    if isinstance(e, Cmp):
        return _compare(e.op, eval_expr(e.left, env), eval_expr(e.right, env))
    if isinstance(e, BoolOp):
        vals = [eval_expr(a, env) for a in e.args]
        for v in vals:
            if not isinstance(v, bool):
                raise EvalError(f"boolean operator over non-boolean value {v!r}")
        if e.op == "and":
            return all(vals)
        if e.op == "or":
            return any(vals)
        return not vals[0]
    if isinstance(e, Cond):
        pred = eval_expr(e.pred, env)
        if not isinstance(pred, bool):
            raise EvalError(f"conditional test is not boolean: {pred!r}")
        return eval_expr(e.if_true if pred else e.if_false, env)
    raise EvalError(f"not an expression: {e!r}")


def _compare(op: str, lv: Value, rv: Value) -> bool:
    # null compares unequal to everything, including null
    if lv is None or rv is None:
        return op == "<>"
    lb, rb = isinstance(lv, bool), isinstance(rv, bool)
    if lb != rb:
        raise EvalError(f"cannot compare boolean with non-boolean ({lv!r}, {rv!r})")
    if not lb and _is_number(lv) != _is_number(rv):
        raise EvalError(f"cannot compare values of different types ({lv!r}, {rv!r})")
    if op == "=":
        return lv == rv
    if op == "<>":
        return lv != rv
    if op == "<":
        return lv < rv
    if op == "<=":
        return lv <= rv
    if op == ">":
        return lv > rv
    return lv >= rv


def _predicate(cond: Expr, env: Mapping[str, Value]) -> bool:
    v = eval_expr(cond, env)
    if not isinstance(v, bool):
        raise EvalError(f"selection condition evaluated to non-boolean {v!r}")
    return v


def aggregate(fn: str, values: list[tuple[Value, int]]) -> Value:
    """Apply an aggregation function to a weighted multiset of values.

    count of an empty multiset is 0; the other functions raise, since the
    evaluator never produces empty groups.
    """
    n = sum(m for _, m in values)
    if fn == "count":
        return n
    if n == 0:
        raise EvalError(f"{fn} over an empty group")
    if fn == "sum":
        total = 0
        for v, m in values:
            if not _is_number(v):
                raise EvalError(f"sum over non-numeric value {v!r}")
            total += v * m
        return total
    if fn == "avg":
        return aggregate("sum", values) / n
    flat = [v for v, _ in values]
    try:
        return min(flat) if fn == "min" else max(flat)
    except TypeError as exc:
        raise EvalError(f"{fn} over incomparable values") from exc


# ---------------------------------------------------------------------------
# plain evaluation


def evaluate(root: Node, db: Mapping[str, BagRelation]) -> BagRelation:
    """Evaluate a graph over named base relations; shared nodes run once."""
    memo: dict[Node, BagRelation] = {}

    def rec(n: Node) -> BagRelation:
        if n in memo:
            return memo[n]
        out = compute(n)
        memo[n] = out
        return out

    def compute(n: Node) -> BagRelation:
        sch = schema_of(n)
        if isinstance(n, Relation):
            if n.name not in db:
                raise EvalError(f"unbound relation {n.name!r}")
            rel = db[n.name]
            if len(rel.schema) != len(n.attrs):
                raise EvalError(f"relation {n.name!r} bound with wrong arity")
            return rel.renamed(n.attrs)
        if isinstance(n, Select):
            child = rec(n.child)
            out = BagRelation(sch)
            for t, m in child.rows():
                if _predicate(n.cond, dict(zip(child.schema, t))):
                    out.add(t, m)
            return out
        if isinstance(n, Project):
            child = rec(n.child)
            out = BagRelation(sch)
            for t, m in child.rows():
                env = dict(zip(child.schema, t))
                out.add(tuple(eval_expr(e, env) for e, _ in n.targets), m)
            return out
        if isinstance(n, Join):
            left, right = rec(n.left), rec(n.right)
            li = [left.schema.index(a) for a, _ in n.pairs]
            ri = [right.schema.index(b) for _, b in n.pairs]
            out = BagRelation(sch)
            for lt, lm in left.rows():
                for rt, rm in right.rows():
                    if all(_compare("=", lt[i], rt[j]) for i, j in zip(li, ri)):
                        out.add(lt + rt, lm * rm)
            return out
        if isinstance(n, Cross):
            left, right = rec(n.left), rec(n.right)
            out = BagRelation(sch)
            for lt, lm in left.rows():
                for rt, rm in right.rows():
                    out.add(lt + rt, lm * rm)
            return out
        if isinstance(n, Union):
            left, right = rec(n.left), rec(n.right)
            out = BagRelation(sch)
            for t, m in left.rows():
                out.add(t, m)
            for t, m in right.rows():
                out.add(t, m)
            return out
        if isinstance(n, Intersect):
            left, right = rec(n.left), rec(n.right)
            out = BagRelation(sch)
            for t, m in left.rows():
                other = right.tuples.get(t, 0)
                if other:
                    out.add(t, min(m, other))
            return out
        if isinstance(n, Diff):
            left, right = rec(n.left), rec(n.right)
            out = BagRelation(sch)
            for t, m in left.rows():
                rest = m - right.tuples.get(t, 0)
                if rest > 0:
                    out.add(t, rest)
            return out
        if isinstance(n, Agg):
            child = rec(n.child)
            gi = [child.schema.index(a) for a in n.group_by]
            args = [child.schema.index(a) for _, a, _ in n.aggs]
            groups: dict[tuple, list[tuple[tuple, int]]] = {}
            for t, m in child.rows():
                groups.setdefault(tuple(t[i] for i in gi), []).append((t, m))
            out = BagRelation(sch)
            for key, members in groups.items():
                vals = tuple(
                    aggregate(fn, [(t[ai], m) for t, m in members])
                    for (fn, _, _), ai in zip(n.aggs, args)
                )
                out.add(key + vals, 1)
            return out
        if isinstance(n, DupElim):
            child = rec(n.child)
            out = BagRelation(sch)
            for t in child.tuples:
                out.add(t, 1)
            return out
        if isinstance(n, Window):
            return _window(n, rec(n.child), sch)
        raise EvalError(f"unknown operator {type(n).__name__}")

    return rec(root)


def _window(n: Window, child: BagRelation, sch) -> BagRelation:
    pi = [child.schema.index(a) for a in n.partition_by]
    oi = [child.schema.index(a) for a in n.order_by]
    ai = child.schema.index(n.arg)
    parts: dict[tuple, list[tuple[tuple, int]]] = {}
    for t, m in child.rows():
        parts.setdefault(tuple(t[i] for i in pi), []).append((t, m))
    out = BagRelation(sch)
    for members in parts.values():
        for t, m in members:
            if n.frame == FRAME_PARTITION or not oi:
                window = members
            else:
                key = _order_key(t, oi)
                window = [(u, um) for u, um in members if _order_key(u, oi) <= key]
            val = aggregate(n.fn, [(u[ai], um) for u, um in window])
            out.add(t + (val,), m)
    return out


def _order_key(t: tuple, oi: list[int]) -> tuple:
    key = tuple(t[i] for i in oi)
    for v in key:
        if v is None:
            raise EvalError("null in window ordering")
    return key


# ---------------------------------------------------------------------------
# annotated evaluation


@dataclass(frozen=True, order=True)
class TupleVar:
    """One variable per base tuple copy, named after its source relation."""

    rel: str
    idx: int

    def __str__(self):
        return f"{self.rel}{self.idx}"


Monomial = tuple[TupleVar, ...]  # sorted variables, repetition allowed
Poly = dict[Monomial, int]  # monomial -> coefficient >= 1


def poly_product(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = tuple(sorted(ma + mb))
            out[m] = out.get(m, 0) + ca * cb
    return out


def poly_sum(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for m, c in b.items():
        out[m] = out.get(m, 0) + c
    return out


def poly_weight(p: Poly) -> int:
    """Evaluate the polynomial with every variable set to 1."""
    return sum(p.values())


def format_poly(p: Poly) -> str:
    terms = []
    for m, c in sorted(p.items()):
        body = "*".join(str(v) for v in m)
        terms.append(body if c == 1 else f"{c}*{body}")
    return " + ".join(terms) if terms else "0"


@dataclass
class AnnotatedDb:
    """Base relations where every tuple copy carries a distinct variable."""

    tables: dict[str, list[tuple[tuple, TupleVar]]]
    schemas: dict[str, tuple[str, ...]]
    var_rows: dict[TupleVar, tuple]


def annotate(db: Mapping[str, BagRelation]) -> AnnotatedDb:
    tables: dict[str, list[tuple[tuple, TupleVar]]] = {}
    schemas: dict[str, tuple[str, ...]] = {}
    var_rows: dict[TupleVar, tuple] = {}
    for name in sorted(db):
        rel = db[name]
        rows = []
        idx = 1
        for t in sorted(rel.tuples, key=repr):
            for _ in range(rel.tuples[t]):
                var = TupleVar(name, idx)
                idx += 1
                rows.append((t, var))
                var_rows[var] = t
        tables[name] = rows
        schemas[name] = rel.schema
    return AnnotatedDb(tables, schemas, var_rows)


@dataclass
class AnnotatedRelation:
    """Rows paired with provenance polynomials; one row per distinct tuple."""

    schema: tuple[str, ...]
    rows: list[tuple[tuple, Poly]]
    #: source relations in leaf order, for the relational encoding
    sources: tuple[str, ...]
    var_rows: Mapping[TupleVar, tuple]
    source_schemas: Mapping[str, tuple[str, ...]]

    def as_bag(self) -> BagRelation:
        """Drop annotations, interpreting each polynomial's weight as a count."""
        out = BagRelation(self.schema)
        for t, p in self.rows:
            out.add(t, poly_weight(p))
        return out


_ANNOTATED = (Relation, Select, Project, Join, Cross, Union, Agg, DupElim)


def evaluate_annotated(root: Node, adb: AnnotatedDb) -> AnnotatedRelation:
    """Propagate provenance polynomials through the supported fragment."""
    sources: list[str] = []

    def merge(schema, pairs: Iterable[tuple[tuple, Poly]]) -> list[tuple[tuple, Poly]]:
        acc: dict[tuple, Poly] = {}
        for t, p in pairs:
            acc[t] = poly_sum(acc.get(t, {}), p)
        return list(acc.items())

    memo: dict[Node, list[tuple[tuple, Poly]]] = {}

    def rec(n: Node) -> list[tuple[tuple, Poly]]:
        if n in memo:
            return memo[n]
        if not isinstance(n, _ANNOTATED):
            raise EvalError(f"operator {type(n).__name__} outside the annotated fragment")
        out = compute(n)
        memo[n] = out
        return out

    def compute(n: Node) -> list[tuple[tuple, Poly]]:
        sch = schema_of(n)
        if isinstance(n, Relation):
            if n.name not in adb.tables:
                raise EvalError(f"unbound relation {n.name!r}")
            if n.name not in sources:
                sources.append(n.name)
            return merge(sch, ((t, {(var,): 1}) for t, var in adb.tables[n.name]))
        if isinstance(n, Select):
            child = rec(n.child)
            csch = schema_of(n.child)
            return [(t, p) for t, p in child if _predicate(n.cond, dict(zip(csch, t)))]
        if isinstance(n, Project):
            child = rec(n.child)
            csch = schema_of(n.child)
            pairs = []
            for t, p in child:
                env = dict(zip(csch, t))
                pairs.append((tuple(eval_expr(e, env) for e, _ in n.targets), p))
            return merge(sch, pairs)
        if isinstance(n, (Join, Cross)):
            left, right = rec(n.left), rec(n.right)
            ls, rs = schema_of(n.left), schema_of(n.right)
            if isinstance(n, Join):
                li = [ls.index(a) for a, _ in n.pairs]
                ri = [rs.index(b) for _, b in n.pairs]
            pairs = []
            for lt, lp in left:
                for rt, rp in right:
                    if isinstance(n, Join) and not all(
                            _compare("=", lt[i], rt[j]) for i, j in zip(li, ri)):
                        continue
                    pairs.append((lt + rt, poly_product(lp, rp)))
            return merge(sch, pairs)
        if isinstance(n, Union):
            return merge(sch, rec(n.left) + rec(n.right))
        if isinstance(n, Agg):
            child = rec(n.child)
            csch = schema_of(n.child)
            gi = [csch.index(a) for a in n.group_by]
            args = [csch.index(a) for _, a, _ in n.aggs]
            groups: dict[tuple, list[tuple[tuple, Poly]]] = {}
            for t, p in child:
                groups.setdefault(tuple(t[i] for i in gi), []).append((t, p))
            pairs = []
            for key, members in groups.items():
                vals = tuple(
                    aggregate(fn, [(t[ai], poly_weight(p)) for t, p in members])
                    for (fn, _, _), ai in zip(n.aggs, args)
                )
                poly: Poly = {}
                for _, p in members:
                    poly = poly_sum(poly, p)
                pairs.append((key + vals, poly))
            return merge(sch, pairs)
        if isinstance(n, DupElim):
            # rows are merged by tuple already; alternatives stay summed
            return rec(n.child)
        raise EvalError(f"operator {type(n).__name__} outside the annotated fragment")

    rows = rec(root)
    return AnnotatedRelation(schema_of(root), rows, tuple(sources), adb.var_rows, adb.schemas)


def prov_attr_name(rel: str, occurrence: int, attr: str) -> str:
    """SQL-safe name for a duplicated provenance column."""
    return f"prov_{rel}_{occurrence}_{attr}"


def encode_provenance(ann: AnnotatedRelation) -> BagRelation:
    """Flatten polynomials into the relational provenance encoding.

    One output row per (tuple, monomial); the original attributes are
    followed by one block of witness columns per source relation. A
    monomial drawing two tuples from the same relation cannot be widened
    into that layout and raises.
    """
    schema = list(ann.schema)
    blocks: list[tuple[str, tuple[str, ...]]] = []
    for rel in ann.sources:
        attrs = ann.source_schemas[rel]
        blocks.append((rel, attrs))
        schema.extend(prov_attr_name(rel, 0, a) for a in attrs)
    out = BagRelation(tuple(schema))
    for t, poly in ann.rows:
        for mono, coeff in poly.items():
            by_rel: dict[str, TupleVar] = {}
            for var in mono:
                if var.rel in by_rel and by_rel[var.rel] != var:
                    raise EvalError(
                        f"monomial uses two tuples of relation {var.rel!r}; "
                        "self-joins need occurrence disambiguation before encoding")
                by_rel[var.rel] = var
            row = list(t)
            for rel, attrs in blocks:
                if rel in by_rel:
                    row.extend(ann.var_rows[by_rel[rel]])
                else:
                    row.extend([None] * len(attrs))
            out.add(tuple(row), coeff)
    return out


# ---------------------------------------------------------------------------
# cost model


#: per-input-row processing weight
CPU_WEIGHT = 1.0
#: per-output-row construction weight
BUILD_WEIGHT = 2.0
#: selectivity assumed for non-equality predicates
RANGE_SELECTIVITY = 1.0 / 3.0


@dataclass
class TableStats:
    rows: float
    distinct: dict[str, float]


@dataclass
class CostEstimate:
    total: float
    per_node: dict[Node, tuple[float, float]]  # node -> (est rows, cost)


def _sort_term(rows: float) -> float:
    return rows * math.log2(rows + 1.0)


def cost(root: Node, stats: Mapping[str, TableStats]) -> CostEstimate:
    """Deterministic bottom-up cost estimate; shared nodes are charged once."""
    info: dict[Node, tuple[float, dict[str, float]]] = {}
    per_node: dict[Node, tuple[float, float]] = {}

    def distinct_of(d: Mapping[str, float], attr: str, rows: float) -> float:
        return max(1.0, min(d.get(attr, rows), rows))

    def selectivity(cond: Expr, d: Mapping[str, float], rows: float) -> float:
        if isinstance(cond, BoolOp):
            if cond.op == "and":
                s = 1.0
                for c in cond.args:
                    s *= selectivity(c, d, rows)
                return s
            if cond.op == "or":
                s = 1.0
                for c in cond.args:
                    s *= 1.0 - selectivity(c, d, rows)
                return 1.0 - s
            return max(0.0, 1.0 - selectivity(cond.args[0], d, rows))
        if isinstance(cond, Cmp) and cond.op == "=":
            sides = [cond.left, cond.right]
            attrs = [s.name for s in sides if isinstance(s, Attr)]
            if len(attrs) == 2:
                return 1.0 / max(distinct_of(d, attrs[0], rows), distinct_of(d, attrs[1], rows))
            if len(attrs) == 1:
                return 1.0 / distinct_of(d, attrs[0], rows)
            return RANGE_SELECTIVITY
        if isinstance(cond, Const) and cond.value is True:
            return 1.0
        return RANGE_SELECTIVITY

    def rec(n: Node) -> tuple[float, dict[str, float]]:
        if n in info:
            return info[n]
        est, d, own = compute(n)
        info[n] = (est, d)
        per_node[n] = (est, own)
        return info[n]

    def cap(d: Mapping[str, float], rows: float) -> dict[str, float]:
        return {a: max(1.0, min(v, rows)) for a, v in d.items()}

    def compute(n: Node) -> tuple[float, dict[str, float], float]:
        sch = schema_of(n)
        if isinstance(n, Relation):
            if n.name not in stats:
                raise EvalError(f"missing statistics for relation {n.name!r}")
            st = stats[n.name]
            d = {a: st.distinct.get(a, st.rows) for a in n.attrs}
            return st.rows, cap(d, st.rows), CPU_WEIGHT * st.rows
        if isinstance(n, Select):
            in_rows, d = rec(n.child)
            est = in_rows * selectivity(n.cond, d, in_rows)
            return est, cap(d, est), CPU_WEIGHT * in_rows + BUILD_WEIGHT * est
        if isinstance(n, Project):
            in_rows, d = rec(n.child)
            out = {}
            for e, name in n.targets:
                out[name] = d.get(e.name, in_rows) if isinstance(e, Attr) else in_rows
            return in_rows, cap(out, in_rows), CPU_WEIGHT * in_rows + BUILD_WEIGHT * in_rows
        if isinstance(n, (Join, Cross)):
            lr, ld = rec(n.left)
            rr, rd = rec(n.right)
            _, right_names = concat_qualified(schema_of(n.left), schema_of(n.right))
            d = dict(ld)
            for orig, out_name in zip(schema_of(n.right), right_names):
                d[out_name] = rd.get(orig, rr)
            est = lr * rr
            if isinstance(n, Join):
                for a, b in n.pairs:
                    est /= max(distinct_of(ld, a, lr), distinct_of(rd, b, rr))
            return est, cap(d, est), CPU_WEIGHT * (lr + rr) + BUILD_WEIGHT * est
        if isinstance(n, Union):
            lr, ld = rec(n.left)
            rr, rd = rec(n.right)
            est = lr + rr
            d = {a: ld.get(a, lr) + rd.get(b, rr)
                 for a, b in zip(schema_of(n.left), schema_of(n.right))}
            return est, cap(d, est), CPU_WEIGHT * (lr + rr) + BUILD_WEIGHT * est
        if isinstance(n, Intersect):
            lr, ld = rec(n.left)
            rr, _ = rec(n.right)
            est = min(lr, rr)
            return est, cap(ld, est), CPU_WEIGHT * (lr + rr) + BUILD_WEIGHT * est
        if isinstance(n, Diff):
            lr, ld = rec(n.left)
            rr, _ = rec(n.right)
            est = lr
            return est, cap(ld, est), CPU_WEIGHT * (lr + rr) + BUILD_WEIGHT * est
        if isinstance(n, Agg):
            in_rows, d = rec(n.child)
            groups = 1.0
            for a in n.group_by:
                groups *= distinct_of(d, a, in_rows)
            est = min(in_rows, groups) if n.group_by else min(in_rows, 1.0)
            out = {a: distinct_of(d, a, est) for a in n.group_by}
            for _, _, name in n.aggs:
                out[name] = est
            own = CPU_WEIGHT * in_rows + BUILD_WEIGHT * est + _sort_term(in_rows)
            return est, cap(out, est), own
        if isinstance(n, DupElim):
            in_rows, d = rec(n.child)
            groups = 1.0
            for a in schema_of(n.child):
                groups *= distinct_of(d, a, in_rows)
            est = min(in_rows, groups)
            return est, cap(d, est), CPU_WEIGHT * in_rows + BUILD_WEIGHT * est
        if isinstance(n, Window):
            in_rows, d = rec(n.child)
            out = dict(d)
            out[n.out] = in_rows
            own = CPU_WEIGHT * in_rows + BUILD_WEIGHT * in_rows + _sort_term(in_rows)
            return in_rows, cap(out, in_rows), own
        raise EvalError(f"unknown operator {type(n).__name__}")

    rec(root)
    total = sum(c for _, c in per_node.values())
    return CostEstimate(total, per_node)
