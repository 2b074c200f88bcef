"""Relational algebra intermediate representation.

Operators form an immutable rooted DAG: a query graph is identified by its
root operator, and a node may be referenced by several parents (shared
subexpression). Expressions are immutable trees with structural equality;
operator nodes deliberately compare by identity so that two structurally
identical subtrees can still be distinct (unshared) parts of one graph.

Schemas are ordered tuples of attribute names, unique within one schema.
Name collisions that would arise when concatenating the inputs of a join or
cross product are resolved by suffixing the right-hand attribute with primes
(``b`` collides -> ``b'``); the mapping is derivable from the child schemas
alone so that :func:`schema_of` stays a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Union


class AlgebraError(Exception):
    """Base error for malformed expressions or graphs."""


class SchemaError(AlgebraError):
    """Unresolvable attribute, duplicate output name, or arity mismatch."""


class GraphError(AlgebraError):
    """Structural problem: node not in graph, incompatible substitution."""


Value = Union[int, float, str, bool, None]

ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = ("=", "<>", "<", "<=", ">", ">=")
BOOL_OPS = ("and", "or", "not")
AGG_FNS = ("sum", "count", "min", "max", "avg")

#: window frame covering rows up to the current row in the partition order
FRAME_RUNNING = "running"
#: window frame covering the whole partition
FRAME_PARTITION = "partition"


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Attr:
    name: str


@dataclass(frozen=True)
class Const:
    value: Value


@dataclass(frozen=True)
class Arith:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in ARITH_OPS:
            raise AlgebraError(f"unknown arithmetic operator {self.op!r}")


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise AlgebraError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class BoolOp:
    op: str
    args: tuple["Expr", ...]

    def __post_init__(self):
        if self.op not in BOOL_OPS:
            raise AlgebraError(f"unknown boolean operator {self.op!r}")
        if self.op == "not" and len(self.args) != 1:
            raise AlgebraError("'not' takes exactly one operand")
        if self.op in ("and", "or") and len(self.args) < 1:
            raise AlgebraError(f"'{self.op}' needs at least one operand")


@dataclass(frozen=True)
class Cond:
    """CASE-style conditional: evaluates to if_true when pred holds."""

    pred: "Expr"
    if_true: "Expr"
    if_false: "Expr"


Expr = Union[Attr, Const, Arith, Cmp, BoolOp, Cond]


def expr_children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (Attr, Const)):
        return ()
    if isinstance(e, (Arith, Cmp)):
        return (e.left, e.right)
    if isinstance(e, BoolOp):
        return e.args
    if isinstance(e, Cond):
        return (e.pred, e.if_true, e.if_false)
    raise AlgebraError(f"not an expression: {e!r}")


def expr_size(e: Expr) -> int:
    """Node count of an expression tree."""
    return 1 + sum(expr_size(c) for c in expr_children(e))


def expr_attrs(e: Expr) -> frozenset[str]:
    """All attribute names referenced by an expression."""
    if isinstance(e, Attr):
        return frozenset((e.name,))
    out: frozenset[str] = frozenset()
    for c in expr_children(e):
        out |= expr_attrs(c)
    return out


def substitute_attrs(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace attribute references by expressions, bottom-up."""
    if isinstance(e, Attr):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Arith):
        return Arith(e.op, substitute_attrs(e.left, mapping), substitute_attrs(e.right, mapping))
    if isinstance(e, Cmp):
        return Cmp(e.op, substitute_attrs(e.left, mapping), substitute_attrs(e.right, mapping))
    if isinstance(e, BoolOp):
        return BoolOp(e.op, tuple(substitute_attrs(a, mapping) for a in e.args))
    if isinstance(e, Cond):
        return Cond(
            substitute_attrs(e.pred, mapping),
            substitute_attrs(e.if_true, mapping),
            substitute_attrs(e.if_false, mapping),
        )
    raise AlgebraError(f"not an expression: {e!r}")


def rename_attrs(e: Expr, mapping: Mapping[str, str]) -> Expr:
    return substitute_attrs(e, {a: Attr(b) for a, b in mapping.items()})


def conjuncts(e: Expr) -> list[Expr]:
    """Flatten nested conjunctions into a list of conjuncts."""
    if isinstance(e, BoolOp) and e.op == "and":
        out: list[Expr] = []
        for a in e.args:
            out.extend(conjuncts(a))
        return out
    return [e]


def conjunction(parts: Iterable[Expr]) -> Expr:
    parts = list(parts)
    if not parts:
        return Const(True)
    if len(parts) == 1:
        return parts[0]
    return BoolOp("and", tuple(parts))


def disjunction(parts: Iterable[Expr]) -> Expr:
    parts = list(parts)
    if not parts:
        return Const(False)
    if len(parts) == 1:
        return parts[0]
    return BoolOp("or", tuple(parts))


def fresh_name(base: str, taken: Iterable[str]) -> str:
    """Derive an unused attribute name by priming the base name."""
    taken = set(taken)
    name = base
    while name in taken:
        name += "'"
    return name


# ---------------------------------------------------------------------------
# operators
#
# eq=False keeps identity semantics: nodes hash by object identity, which is
# what dictionaries keyed by graph node need.


@dataclass(frozen=True, eq=False)
class Node:
    """Base class for algebra operators."""

    @property
    def children(self) -> tuple["Node", ...]:
        return ()


@dataclass(frozen=True, eq=False)
class Relation(Node):
    name: str
    attrs: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class Select(Node):
    cond: Expr
    child: Node

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True, eq=False)
class Project(Node):
    #: (expression, output name) pairs, in output order
    targets: tuple[tuple[Expr, str], ...]
    child: Node
    #: sqlgen fence: emit this node as a non-mergeable subquery
    materialize: bool = False

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True, eq=False)
class Join(Node):
    """Equi-join on pairwise equal attributes (left attr, right attr)."""

    pairs: tuple[tuple[str, str], ...]
    left: Node
    right: Node

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False)
class Cross(Node):
    left: Node
    right: Node

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False)
class Union(Node):
    left: Node
    right: Node

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False)
class Intersect(Node):
    left: Node
    right: Node

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False)
class Diff(Node):
    left: Node
    right: Node

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False)
class Agg(Node):
    group_by: tuple[str, ...]
    #: (function, input attr, output attr) triples
    aggs: tuple[tuple[str, str, str], ...]
    child: Node

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True, eq=False)
class DupElim(Node):
    child: Node

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True, eq=False)
class Window(Node):
    fn: str
    arg: str
    out: str
    partition_by: tuple[str, ...]
    order_by: tuple[str, ...]
    child: Node
    frame: str = FRAME_RUNNING

    @property
    def children(self):
        return (self.child,)


def replace_children(node: Node, kids: tuple[Node, ...]) -> Node:
    """Copy a node with new children, preserving every other field."""
    if isinstance(node, Relation):
        if kids:
            raise GraphError("relation takes no children")
        return node
    if isinstance(node, Select):
        return Select(node.cond, kids[0])
    if isinstance(node, Project):
        return Project(node.targets, kids[0], node.materialize)
    if isinstance(node, Join):
        return Join(node.pairs, kids[0], kids[1])
    if isinstance(node, Cross):
        return Cross(kids[0], kids[1])
    if isinstance(node, Union):
        return Union(kids[0], kids[1])
    if isinstance(node, Intersect):
        return Intersect(kids[0], kids[1])
    if isinstance(node, Diff):
        return Diff(kids[0], kids[1])
    if isinstance(node, Agg):
        return Agg(node.group_by, node.aggs, kids[0])
    if isinstance(node, DupElim):
        return DupElim(kids[0])
    if isinstance(node, Window):
        return Window(node.fn, node.arg, node.out, node.partition_by,
                      node.order_by, kids[0], node.frame)
    raise GraphError(f"unknown operator {type(node).__name__}")


# ---------------------------------------------------------------------------
# schema computation


def concat_qualified(left: tuple[str, ...], right: tuple[str, ...]) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Concatenate two schemas, priming right-side names that collide.

    Returns (output schema, output names of the right side aligned with its
    own attribute order).
    """
    out = list(left)
    right_out = []
    for a in right:
        name = fresh_name(a, out)
        out.append(name)
        right_out.append(name)
    return tuple(out), tuple(right_out)


def schema_of(node: Node, _memo: Optional[dict[Node, tuple[str, ...]]] = None) -> tuple[str, ...]:
    """Output schema of an operator, computed bottom-up.

    Pure in the node variant and child schemas; raises SchemaError on
    unresolved attribute references or duplicate output names.
    """
    memo: dict[Node, tuple[str, ...]] = {} if _memo is None else _memo

    def rec(n: Node) -> tuple[str, ...]:
        if n in memo:
            return memo[n]
        sch = compute(n)
        memo[n] = sch
        return sch

    def need(attrs: Iterable[str], sch: tuple[str, ...], what: str) -> None:
        missing = set(attrs) - set(sch)
        if missing:
            raise SchemaError(f"{what}: unresolved attribute(s) {sorted(missing)} in schema {list(sch)}")

    def compute(n: Node) -> tuple[str, ...]:
        if isinstance(n, Relation):
            if len(set(n.attrs)) != len(n.attrs):
                raise SchemaError(f"relation {n.name}: duplicate attribute names")
            return n.attrs
        if isinstance(n, Select):
            sch = rec(n.child)
            need(expr_attrs(n.cond), sch, "selection condition")
            return sch
        if isinstance(n, Project):
            sch = rec(n.child)
            out = []
            for expr, name in n.targets:
                need(expr_attrs(expr), sch, f"projection target {name}")
                if name in out:
                    raise SchemaError(f"duplicate output name {name!r} in projection")
                out.append(name)
            return tuple(out)
        if isinstance(n, Join):
            ls, rs = rec(n.left), rec(n.right)
            for a, b in n.pairs:
                need((a,), ls, "join condition (left)")
                need((b,), rs, "join condition (right)")
            return concat_qualified(ls, rs)[0]
        if isinstance(n, Cross):
            return concat_qualified(rec(n.left), rec(n.right))[0]
        if isinstance(n, (Union, Intersect, Diff)):
            ls, rs = rec(n.left), rec(n.right)
            if len(ls) != len(rs):
                raise SchemaError(f"{type(n).__name__.lower()}: inputs have different arity "
                                  f"({len(ls)} vs {len(rs)})")
            return ls
        if isinstance(n, Agg):
            sch = rec(n.child)
            need(n.group_by, sch, "group-by")
            out = list(n.group_by)
            for fn, arg, name in n.aggs:
                if fn not in AGG_FNS:
                    raise SchemaError(f"unknown aggregation function {fn!r}")
                need((arg,), sch, f"aggregation {fn}({arg})")
                if name in out:
                    raise SchemaError(f"duplicate output name {name!r} in aggregation")
                out.append(name)
            return tuple(out)
        if isinstance(n, DupElim):
            return rec(n.child)
        if isinstance(n, Window):
            sch = rec(n.child)
            if n.fn not in AGG_FNS:
                raise SchemaError(f"unknown window function {n.fn!r}")
            need((n.arg,), sch, "window argument")
            need(n.partition_by, sch, "partition-by")
            need(n.order_by, sch, "order-by")
            if n.out in sch:
                raise SchemaError(f"window output {n.out!r} duplicates an input attribute")
            if n.frame not in (FRAME_RUNNING, FRAME_PARTITION):
                raise SchemaError(f"unknown window frame {n.frame!r}")
            return sch + (n.out,)
        raise SchemaError(f"unknown operator {type(n).__name__}")

    return rec(node)


def right_output_names(node: Node) -> tuple[str, ...]:
    """Output names of a join/cross right input, aligned with its schema."""
    if not isinstance(node, (Join, Cross)):
        raise GraphError("right_output_names applies to join/cross only")
    return concat_qualified(schema_of(node.left), schema_of(node.right))[1]


# ---------------------------------------------------------------------------
# graph utilities


def all_nodes(root: Node) -> list[Node]:
    """All nodes reachable from the root, children before parents."""
    seen: dict[Node, None] = {}

    def rec(n: Node) -> None:
        if n in seen:
            return
        for c in n.children:
            rec(c)
        seen[n] = None

    rec(root)
    return list(seen)


def parent_map(root: Node) -> dict[Node, list[Node]]:
    """Parents of each node; a parent appears once per child slot."""
    parents: dict[Node, list[Node]] = {n: [] for n in all_nodes(root)}
    for n in parents:
        for c in n.children:
            parents[c].append(n)
    return parents


def node_count(root: Node) -> int:
    return len(all_nodes(root))


def substitute(root: Node, target: Node, replacement: Node, *, check_schema: bool = True) -> Node:
    """Return the graph with one node replaced, preserving sharing.

    Every parent of the target ends up referencing the replacement; nodes not
    on a path to the target are reused as-is. The replacement may itself
    contain the target (wrapping a subgraph is the common case).
    """
    if target not in set(all_nodes(root)):
        raise GraphError("substitution target is not part of the graph")
    if check_schema and schema_of(target) != schema_of(replacement):
        raise SchemaError("replacement schema differs from target schema "
                          f"({list(schema_of(replacement))} vs {list(schema_of(target))})")
    memo: dict[Node, Node] = {}

    def rebuild(n: Node) -> Node:
        if n is target:
            return replacement
        if n in memo:
            return memo[n]
        kids = tuple(rebuild(c) for c in n.children)
        new = n if all(k is c for k, c in zip(kids, n.children)) else replace_children(n, kids)
        memo[n] = new
        return new

    return rebuild(root)


NOT_ANCESTOR = "not_ancestor"
ANCESTOR = "ancestor"
ON_ALL_PATHS = "on_all_paths"


def ancestry(root: Node, op1: Node, op2: Node) -> str:
    """Relation of op2 to op1: downstream on some path, on all paths, or not.

    op2 is an ancestor of op1 when some parent path from op1 toward the root
    passes through op2; on_all_paths when every such path does. A node is on
    all paths from itself.
    """
    nodes = set(all_nodes(root))
    if op1 not in nodes or op2 not in nodes:
        raise GraphError("node not in graph")
    if op1 is op2:
        return ON_ALL_PATHS
    parents = parent_map(root)

    reachable: set[Node] = set()
    stack = [op1]
    while stack:
        n = stack.pop()
        for p in parents[n]:
            if p not in reachable:
                reachable.add(p)
                stack.append(p)
    if op2 not in reachable:
        return NOT_ANCESTOR

    # op2 is on all paths iff the root cannot be reached while avoiding op2
    if root is op2:
        return ON_ALL_PATHS
    seen = {op1}
    stack = [op1]
    while stack:
        n = stack.pop()
        for p in parents[n]:
            if p is op2 or p in seen:
                continue
            if p is root:
                return ANCESTOR
            seen.add(p)
            stack.append(p)
    return ON_ALL_PATHS


def identity_targets(attrs: Iterable[str]) -> tuple[tuple[Expr, str], ...]:
    """Projection targets that pass attributes through unchanged."""
    return tuple((Attr(a), a) for a in attrs)


def structurally_equal(a: Node, b: Node) -> bool:
    """Compare two graphs by shape and fields, ignoring node identity."""
    if type(a) is not type(b):
        return False
    if _own_fields(a) != _own_fields(b):
        return False
    return all(structurally_equal(ca, cb) for ca, cb in zip(a.children, b.children))


def _own_fields(n: Node):
    if isinstance(n, Select):
        return ("select", n.cond)
    if isinstance(n, Project):
        return ("project", n.targets, n.materialize)
    if isinstance(n, Join):
        return ("join", n.pairs)
    if isinstance(n, Cross):
        return ("cross",)
    if isinstance(n, Union):
        return ("union",)
    if isinstance(n, Intersect):
        return ("intersect",)
    if isinstance(n, Diff):
        return ("diff",)
    if isinstance(n, Agg):
        return ("agg", n.group_by, n.aggs)
    if isinstance(n, DupElim):
        return ("dupelim",)
    if isinstance(n, Window):
        return ("window", n.fn, n.arg, n.out, n.partition_by, n.order_by, n.frame)
    if isinstance(n, Relation):
        return ("rel", n.name, n.attrs)
    raise GraphError(f"unknown operator {type(n).__name__}")
