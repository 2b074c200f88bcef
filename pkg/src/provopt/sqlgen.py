"""Deterministic SQL text generation for algebra graphs.

Every operator renders to a canonical SELECT block over parenthesized
subqueries. Nodes referenced by more than one parent, and projections
flagged as materialization fences, become named common table expressions
emitted once in dependency order; a fence additionally carries a
``/*MATERIALIZE*/`` comment (and optionally the MATERIALIZED keyword,
which some engines honor).

Identifiers are emitted bare when they are plain lowercase-safe names and
double-quoted otherwise, so generated provenance columns read naturally
while primed join aliases stay valid.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from .algebra import (
    Agg, Arith, Attr, BoolOp, Cmp, Cond, Const, Cross, Diff, DupElim, Expr,
    FRAME_PARTITION, Intersect, Join, Node, Project, Relation, Select, Union,
    Window, all_nodes, parent_map, right_output_names, schema_of,
)


class SqlGenError(Exception):
    pass


@dataclass
class SqlUnit:
    text: str
    cte_defs: tuple[tuple[str, str], ...] = ()
    dialect: str = "generic"


_PLAIN = re.compile(r"^[a-zA-Z_][a-zA-Z0-9_]*$")

_RESERVED = frozenset("""
    all and as asc between by case cross current default delete desc distinct
    else end except exists from full group having in inner insert intersect
    into is join left like limit natural not null offset on or order outer
    over partition right rows select set table then union update using values
    when where window with
""".split())


def quote_ident(name: str) -> str:
    if _PLAIN.match(name) and name.lower() not in _RESERVED:
        return name
    return '"' + name.replace('"', '""') + '"'


def render_value(v) -> str:
    if v is None:
        return "NULL"
    if v is True:
        return "TRUE"
    if v is False:
        return "FALSE"
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return repr(v)


_PRECEDENCE = {"*": 2, "/": 2, "+": 1, "-": 1}


def render_expr(e: Expr) -> str:
    if isinstance(e, Attr):
        return quote_ident(e.name)
    if isinstance(e, Const):
        return render_value(e.value)
    if isinstance(e, Arith):
        return _render_arith(e)
    if isinstance(e, Cmp):
        return f"{_operand(e.left)}{e.op}{_operand(e.right)}"
    if isinstance(e, BoolOp):
        if e.op == "not":
            return f"NOT ({render_expr(e.args[0])})"
        joiner = " AND " if e.op == "and" else " OR "
        return joiner.join(_bool_operand(a) for a in e.args)
    if isinstance(e, Cond):
        return (f"CASE WHEN {render_expr(e.pred)} THEN {render_expr(e.if_true)}"
                f" ELSE {render_expr(e.if_false)} END")
    raise SqlGenError(f"cannot render expression {e!r}")


def _render_arith(e: Arith) -> str:
    def side(x: Expr, parent_prec: int, right: bool) -> str:
        if isinstance(x, Arith):
            prec = _PRECEDENCE[x.op]
            if prec < parent_prec or (right and prec == parent_prec):
                return f"({_render_arith(x)})"
            return _render_arith(x)
        return _operand(x)

    prec = _PRECEDENCE[e.op]
    return f"{side(e.left, prec, False)}{e.op}{side(e.right, prec, True)}"


def _operand(x: Expr) -> str:
    if isinstance(x, (Attr, Const, Cond)):
        return render_expr(x)
    if isinstance(x, Arith):
        return f"({_render_arith(x)})"
    return f"({render_expr(x)})"


def _bool_operand(x: Expr) -> str:
    if isinstance(x, BoolOp) and x.op in ("and", "or"):
        return f"({render_expr(x)})"
    return render_expr(x)


def to_sql(root: Node, *, materialized_keyword: bool = False) -> SqlUnit:
    """Render a graph to SQL; shared nodes and fences become CTEs."""
    parents = parent_map(root)
    order = all_nodes(root)
    cte_nodes = [n for n in order
                 if (len(parents[n]) > 1 and not isinstance(n, Relation))
                 or (isinstance(n, Project) and n.materialize and n is not root)]
    cte_names = {n: f"q{i}" for i, n in enumerate(cte_nodes)}

    alias_counter = [0]

    def next_alias() -> str:
        alias_counter[0] += 1
        return f"t{alias_counter[0]}"

    def from_clause(n: Node) -> tuple[str, str]:
        """FROM-able rendering of an input: (sql fragment, alias)."""
        alias = next_alias()
        if n in cte_names:
            return f"{cte_names[n]} AS {alias}", alias
        if isinstance(n, Relation):
            return f"{quote_ident(n.name)} AS {alias}", alias
        return f"({render(n)}) AS {alias}", alias

    def simple_from(n: Node) -> str:
        """FROM rendering without alias, for single-input operators."""
        if n in cte_names:
            return cte_names[n]
        if isinstance(n, Relation):
            return quote_ident(n.name)
        return f"({render(n)})"

    def render(n: Node) -> str:
        if isinstance(n, Relation):
            cols = ", ".join(quote_ident(a) for a in n.attrs)
            return f"SELECT {cols} FROM {quote_ident(n.name)}"
        if isinstance(n, Select):
            return (f"SELECT * FROM {simple_from(n.child)}"
                    f" WHERE {render_expr(n.cond)}")
        if isinstance(n, Project):
            cols = []
            for e, name in n.targets:
                rendered = render_expr(e)
                if isinstance(e, Attr) and e.name == name:
                    cols.append(rendered)
                else:
                    cols.append(f"{rendered} AS {quote_ident(name)}")
            return f"SELECT {', '.join(cols)} FROM {simple_from(n.child)}"
        if isinstance(n, (Join, Cross)):
            left_sql, la = from_clause(n.left)
            right_sql, ra = from_clause(n.right)
            left_schema = schema_of(n.left)
            right_schema = schema_of(n.right)
            right_names = right_output_names(n)
            cols = [f"{la}.{quote_ident(a)}" for a in left_schema]
            for src, out in zip(right_schema, right_names):
                ref = f"{ra}.{quote_ident(src)}"
                cols.append(ref if src == out else f"{ref} AS {quote_ident(out)}")
            if isinstance(n, Join):
                on = " AND ".join(f"{la}.{quote_ident(a)}={ra}.{quote_ident(b)}"
                                  for a, b in n.pairs)
                return (f"SELECT {', '.join(cols)} FROM {left_sql}"
                        f" INNER JOIN {right_sql} ON {on}")
            return (f"SELECT {', '.join(cols)} FROM {left_sql}"
                    f" CROSS JOIN {right_sql}")
        if isinstance(n, (Union, Intersect, Diff)):
            op = {"Union": "UNION ALL", "Intersect": "INTERSECT ALL",
                  "Diff": "EXCEPT ALL"}[type(n).__name__]
            left_sql, _ = from_clause(n.left)
            right_sql, _ = from_clause(n.right)
            return (f"SELECT * FROM {left_sql} {op} SELECT * FROM {right_sql}")
        if isinstance(n, Agg):
            cols = [quote_ident(a) for a in n.group_by]
            cols += [f"{fn}({quote_ident(arg)}) AS {quote_ident(out)}"
                     for fn, arg, out in n.aggs]
            sql = f"SELECT {', '.join(cols)} FROM {simple_from(n.child)}"
            if n.group_by:
                sql += " GROUP BY " + ", ".join(quote_ident(a) for a in n.group_by)
            return sql
        if isinstance(n, DupElim):
            cols = ", ".join(quote_ident(a) for a in schema_of(n))
            return f"SELECT DISTINCT {cols} FROM {simple_from(n.child)}"
        if isinstance(n, Window):
            over = []
            if n.partition_by:
                over.append("PARTITION BY " + ", ".join(quote_ident(a) for a in n.partition_by))
            if n.order_by:
                over.append("ORDER BY " + ", ".join(quote_ident(a) for a in n.order_by))
            if n.frame == FRAME_PARTITION:
                over.append("ROWS BETWEEN UNBOUNDED PRECEDING AND UNBOUNDED FOLLOWING")
            elif n.order_by:
                over.append("RANGE BETWEEN UNBOUNDED PRECEDING AND CURRENT ROW")
            window = f"{n.fn}({quote_ident(n.arg)}) OVER ({' '.join(over)})"
            cols = ", ".join(quote_ident(a) for a in schema_of(n.child))
            return (f"SELECT {cols}, {window} AS {quote_ident(n.out)}"
                    f" FROM {simple_from(n.child)}")
        raise SqlGenError(f"unknown operator {type(n).__name__}")

    def render_input(n: Node) -> str:
        if n in cte_names:
            return f"SELECT * FROM {cte_names[n]}"
        return render(n)

    cte_defs = []
    for n in cte_nodes:
        body = render(n)
        cte_defs.append((cte_names[n], body))

    main = render_input(root) if root in cte_names else render(root)
    if cte_defs:
        parts = []
        for (name, body), node in zip(cte_defs, cte_nodes):
            fence = isinstance(node, Project) and node.materialize
            hint = " /*MATERIALIZE*/" if fence else ""
            keyword = " MATERIALIZED" if fence and materialized_keyword else ""
            parts.append(f"{name} AS{keyword}{hint} (\n  {body}\n)")
        text = "WITH " + ",\n".join(parts) + "\n" + main
    else:
        text = main
    return SqlUnit(text + ";\n", tuple(cte_defs), "generic")
