"""Provenance instrumentation and update reenactment.

``instrument_query`` rewrites a query so that evaluating the rewritten
query yields the relational provenance encoding: the original columns
followed by one block of duplicated witness columns per base-relation
occurrence. Aggregations can be instrumented two equivalent ways (joining
the aggregate back to the witness rows, or recomputing it as a window over
them); the choice goes through a callback so a cost-based optimizer can
drive it.

``reenact`` compiles a sequence of updates against one relation into a
stack of conditional projections over the pre-state, and
``scope_to_updated`` narrows a reenactment to the tuples the transaction
actually touched, either by filtering on the disjunction of the updates'
conditions or by joining against the post-commit version from a
:class:`VersionedStore`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .algebra import (
    Agg, Arith, Attr, BoolOp, Cmp, Cond, Const, Cross, DupElim, Expr, Join,
    Node, Project, Relation, Select, Union, Window,
    FRAME_PARTITION, disjunction, expr_attrs, fresh_name, identity_targets,
    schema_of, substitute_attrs,
)
from .executor import BagRelation, EvalError, _predicate, eval_expr, prov_attr_name


class InstrumentError(Exception):
    """Unsupported operator or schema problem during instrumentation."""


AGG_WINDOW = 0
AGG_JOIN = 1

ChoiceFn = Callable[[int], int]


@dataclass
class _Instrumented:
    node: Node
    prov_attrs: tuple[str, ...]  # provenance columns, in leaf order


def instrument_query(root: Node, choice: Optional[ChoiceFn] = None,
                     agg_method: Optional[str] = None) -> Node:
    """Rewrite a query to produce its relational provenance encoding.

    The output schema is the original schema followed by the provenance
    columns. ``choice`` is consulted once per aggregation (0 selects the
    window method, 1 the join method); ``agg_method`` forces one method for
    every aggregation and bypasses the callback.
    """
    if agg_method not in (None, "window", "join", "cbo"):
        raise InstrumentError(f"unknown aggregation method {agg_method!r}")
    if agg_method == "window":
        decide: ChoiceFn = lambda n: AGG_WINDOW
    elif agg_method == "join":
        decide = lambda n: AGG_JOIN
    else:
        decide = choice if choice is not None else (lambda n: AGG_WINDOW)

    occurrences: dict[str, int] = {}
    memo: dict[Node, _Instrumented] = {}

    def rec(n: Node) -> _Instrumented:
        if n in memo:
            return memo[n]
        out = rewrite(n)
        memo[n] = out
        return out

    def rewrite(n: Node) -> _Instrumented:
        if isinstance(n, Relation):
            occ = occurrences.get(n.name, 0)
            occurrences[n.name] = occ + 1
            prov = tuple(prov_attr_name(n.name, occ, a) for a in n.attrs)
            targets = identity_targets(n.attrs) + tuple(
                (Attr(a), p) for a, p in zip(n.attrs, prov))
            return _Instrumented(Project(targets, n), prov)
        if isinstance(n, Select):
            child = rec(n.child)
            return _Instrumented(Select(n.cond, child.node), child.prov_attrs)
        if isinstance(n, Project):
            child = rec(n.child)
            targets = n.targets + identity_targets(child.prov_attrs)
            return _Instrumented(Project(targets, child.node), child.prov_attrs)
        if isinstance(n, (Join, Cross)):
            left, right = rec(n.left), rec(n.right)
            overlap = set(left.prov_attrs) & set(right.prov_attrs)
            if overlap:
                raise InstrumentError(
                    f"provenance columns collide across join inputs: {sorted(overlap)}; "
                    "self-joins must use distinct relation occurrences")
            if isinstance(n, Join):
                node: Node = Join(n.pairs, left.node, right.node)
            else:
                node = Cross(left.node, right.node)
            return _Instrumented(node, left.prov_attrs + right.prov_attrs)
        if isinstance(n, Union):
            left, right = rec(n.left), rec(n.right)
            orig_left = schema_of(n.left)
            orig_right = schema_of(n.right)
            prov = left.prov_attrs + right.prov_attrs
            lt = identity_targets(orig_left + left.prov_attrs) + tuple(
                (Const(None), p) for p in right.prov_attrs)
            rt = (tuple((Attr(b), a) for b, a in zip(orig_right, orig_left))
                  + tuple((Const(None), p) for p in left.prov_attrs)
                  + identity_targets(right.prov_attrs))
            node = Union(Project(lt, left.node), Project(rt, right.node))
            return _Instrumented(node, prov)
        if isinstance(n, Agg):
            child = rec(n.child)
            if decide(2) == AGG_WINDOW:
                node = instrument_agg_window(n, child.node, child.prov_attrs)
            else:
                node = instrument_agg_join(n, child.node, child.prov_attrs)
            return _Instrumented(node, child.prov_attrs)
        if isinstance(n, DupElim):
            # provenance rows are per-witness; eliminating duplicates would
            # collapse distinct witnesses, so the operator is dropped here
            return rec(n.child)
        raise InstrumentError(
            f"operator {type(n).__name__} is outside the instrumentable fragment")

    inst = rec(root)
    want = schema_of(root) + inst.prov_attrs
    if schema_of(inst.node) == want:
        return inst.node
    # joins interleave the left input's provenance columns with the right
    # input's original ones; normalize to originals-then-provenance
    return Project(identity_targets(want), inst.node)


def instrument_agg_join(agg: Agg, instrumented_child: Node,
                        prov_attrs: tuple[str, ...]) -> Node:
    """Join method: compute the original aggregate, then attach witness rows
    by joining on the group-by attributes (renamed on the witness side).

    Without group-by attributes the join degenerates into a cross product
    with the single aggregate row.
    """
    out_schema = schema_of(agg)
    taken = set(out_schema) | set(prov_attrs)
    if agg.group_by:
        fresh = []
        for g in agg.group_by:
            name = fresh_name(g, taken)
            taken.add(name)
            fresh.append(name)
        witness = Project(
            tuple((Attr(g), f) for g, f in zip(agg.group_by, fresh))
            + identity_targets(prov_attrs),
            instrumented_child)
        joined: Node = Join(tuple(zip(agg.group_by, fresh)), agg, witness)
    else:
        witness = Project(identity_targets(prov_attrs), instrumented_child)
        joined = Cross(agg, witness)
    return Project(identity_targets(out_schema) + identity_targets(prov_attrs), joined)


def instrument_agg_window(agg: Agg, instrumented_child: Node,
                          prov_attrs: tuple[str, ...]) -> Node:
    """Window method: recompute each aggregate over the witness rows with a
    whole-partition window partitioned by the group-by attributes."""
    node: Node = instrumented_child
    for fn, arg, out in agg.aggs:
        node = Window(fn, arg, out, agg.group_by, (), node, FRAME_PARTITION)
    return Project(identity_targets(schema_of(agg)) + identity_targets(prov_attrs), node)


# ---------------------------------------------------------------------------
# update reenactment


@dataclass(frozen=True)
class UpdateStmt:
    """UPDATE <relation> SET attr = expr, ... WHERE cond."""

    relation: str
    set_clauses: tuple[tuple[str, Expr], ...]
    where: Expr


def reenact(updates: list[UpdateStmt], base: Optional[Node] = None,
            schema: Optional[Iterable[str]] = None) -> Node:
    """Compile updates over one relation into stacked conditional projections.

    The innermost projection reenacts the first update; an empty update list
    yields the base relation itself. Evaluating the result over the
    pre-transaction state produces the post-transaction state.
    """
    if base is None:
        if not updates or schema is None:
            raise InstrumentError("reenact needs a base node or a relation schema")
        base = Relation(updates[0].relation, tuple(schema))
    if not updates:
        return base
    rel = updates[0].relation
    if any(u.relation != rel for u in updates):
        raise InstrumentError("all updates of one reenactment must target the same relation")
    node = base
    base_schema = schema_of(base)
    for u in updates:
        node = Project(update_targets(u, base_schema), node)
    return node


def update_targets(u: UpdateStmt, schema: tuple[str, ...]) -> tuple[tuple[Expr, str], ...]:
    """Projection targets expressing one update as conditional assignments."""
    assigned = dict(u.set_clauses)
    unknown = set(assigned) - set(schema)
    if unknown:
        raise InstrumentError(f"update assigns unknown attribute(s) {sorted(unknown)}")
    unknown = set(expr_attrs(u.where)) - set(schema)
    for _, e in u.set_clauses:
        unknown |= set(expr_attrs(e)) - set(schema)
    if unknown:
        raise InstrumentError(f"update references unknown attribute(s) {sorted(unknown)}")
    targets = []
    for a in schema:
        if a in assigned:
            targets.append((Cond(u.where, assigned[a], Attr(a)), a))
        else:
            targets.append((Attr(a), a))
    return tuple(targets)


def replay(updates: list[UpdateStmt], state: BagRelation) -> BagRelation:
    """Imperative update application; oracle for the reenactment compiler."""
    current = state
    for u in updates:
        out = BagRelation(current.schema)
        assigned = dict(u.set_clauses)
        for t, m in current.rows():
            env = dict(zip(current.schema, t))
            if _predicate(u.where, env):
                row = tuple(eval_expr(assigned[a], env) if a in assigned else env[a]
                            for a in current.schema)
            else:
                row = t
            out.add(row, m)
        current = out
    return current


def conditions_over_prestate(updates: list[UpdateStmt], schema: tuple[str, ...]) -> list[Expr]:
    """Each update's condition rewritten in terms of pre-transaction values.

    Update i sees the state after updates 1..i-1, so its condition is
    composed with the earlier updates' conditional assignments.
    """
    env: dict[str, Expr] = {a: Attr(a) for a in schema}
    out = []
    for u in updates:
        out.append(substitute_attrs(u.where, env))
        new_env = dict(env)
        for a, e in u.set_clauses:
            new_env[a] = Cond(substitute_attrs(u.where, env),
                              substitute_attrs(e, env), env[a])
        env = new_env
    return out


# ---------------------------------------------------------------------------
# transaction scoping


FILTER_UPDATED = "filter"
HIST_JOIN = "histjoin"


@dataclass
class VersionedStore:
    """In-memory snapshot store with per-tuple last-updater tracking.

    Tuples are identified by a declared key, which updates must not assign;
    the store records, per key value, the last transaction whose condition
    matched the tuple.
    """

    snapshots: dict[str, dict[int, BagRelation]] = field(default_factory=dict)
    keys: dict[str, tuple[str, ...]] = field(default_factory=dict)
    last_updater: dict[str, dict[tuple, int]] = field(default_factory=dict)
    txn_versions: dict[int, tuple[str, int, int]] = field(default_factory=dict)

    def load(self, name: str, rel: BagRelation, key: Optional[Iterable[str]] = None) -> None:
        self.snapshots[name] = {0: rel}
        if key:
            self.keys[name] = tuple(key)
        self.last_updater.setdefault(name, {})

    def current(self, name: str) -> BagRelation:
        versions = self.snapshots[name]
        return versions[max(versions)]

    def snapshot(self, name: str, version: int) -> BagRelation:
        return self.snapshots[name][version]

    def start_version(self, txn_id: int) -> int:
        return self.txn_versions[txn_id][1]

    def apply_transaction(self, txn_id: int, updates: list[UpdateStmt]) -> None:
        """Run the updates sequentially, snapshot the commit state, and mark
        the tuples some update matched."""
        if not updates:
            raise InstrumentError("empty transaction")
        name = updates[0].relation
        if name not in self.snapshots:
            raise EvalError(f"relation {name!r} not loaded")
        key = self.keys.get(name)
        if key:
            for u in updates:
                overlap = {a for a, _ in u.set_clauses} & set(key)
                if overlap:
                    raise InstrumentError(
                        f"update assigns key attribute(s) {sorted(overlap)}; "
                        "tracked relations need immutable keys")
        start = max(self.snapshots[name])
        state = self.snapshots[name][start]
        touched: set[tuple] = set()
        for u in updates:
            assigned = dict(u.set_clauses)
            out = BagRelation(state.schema)
            for t, m in state.rows():
                env = dict(zip(state.schema, t))
                if _predicate(u.where, env):
                    row = tuple(eval_expr(assigned[a], env) if a in assigned else env[a]
                                for a in state.schema)
                    if key:
                        touched.add(tuple(env[k] for k in key))
                else:
                    row = t
                out.add(row, m)
            state = out
        commit = start + 1
        self.snapshots[name][commit] = state
        if key:
            marks = self.last_updater.setdefault(name, {})
            for kv in touched:
                marks[kv] = txn_id
        self.txn_versions[txn_id] = (name, start, commit)

    def updated_keys(self, txn_id: int, name: str) -> BagRelation:
        """Key values of tuples whose last updater is the transaction."""
        if name not in self.keys:
            raise InstrumentError(f"relation {name!r} has no declared key; "
                                  "the history join needs one")
        key = self.keys[name]
        out = BagRelation(key)
        for kv, txn in self.last_updater.get(name, {}).items():
            if txn == txn_id:
                out.add(kv, 1)
        return out


def scope_to_updated(reenact_root: Node, updates: list[UpdateStmt],
                     store: Optional[VersionedStore], method: str,
                     txn_id: Optional[int] = None
                     ) -> tuple[Node, dict[str, BagRelation]]:
    """Restrict a reenactment to tuples the transaction modified.

    Returns the rewritten graph plus extra relations that must be bound when
    evaluating it (the history join materializes the updated key set from
    the store).
    """
    base = _reenact_base(reenact_root)
    schema = schema_of(base)
    if method == FILTER_UPDATED:
        cond = disjunction(conditions_over_prestate(updates, schema))
        filtered = Select(cond, base)
        return _swap_base(reenact_root, base, filtered), {}
    if method == HIST_JOIN:
        if store is None or txn_id is None:
            raise InstrumentError("history join needs a store and transaction id")
        name = updates[0].relation
        keys = store.updated_keys(txn_id, name)
        key = store.keys[name]
        taken = set(schema)
        fresh = []
        for k in key:
            nk = fresh_name(k, taken)
            taken.add(nk)
            fresh.append(nk)
        keys_rel_name = f"updated_{name}_{txn_id}"
        keys_node = Project(
            tuple((Attr(a), f) for a, f in zip(key, fresh)),
            Relation(keys_rel_name, tuple(key)))
        joined = Join(tuple(zip(key, fresh)), base, keys_node)
        narrowed = Project(identity_targets(schema), joined)
        return _swap_base(reenact_root, base, narrowed), {keys_rel_name: keys}
    raise InstrumentError(f"unknown scoping method {method!r}")


def _reenact_base(root: Node) -> Node:
    n = root
    while isinstance(n, Project):
        n = n.child
    return n


def _swap_base(root: Node, base: Node, replacement: Node) -> Node:
    if root is base:
        return replacement
    if isinstance(root, Project):
        return Project(root.targets, _swap_base(root.child, base, replacement),
                       root.materialize)
    raise InstrumentError("reenactment graph must be a projection stack")


# ---------------------------------------------------------------------------
# UPDATE micro-grammar


class UpdateSyntaxError(Exception):
    pass


_UPD_TOKEN = re.compile(
    r"\s*(<=|>=|<>|[-+*/=<>(),]|'(?:[^']|'')*'|[A-Za-z_][A-Za-z0-9_]*|\d+\.\d+|\d+)")


def parse_updates(text: str) -> list[UpdateStmt]:
    """Parse semicolon-terminated UPDATE statements.

        UPDATE R SET a = a + 2, b = 0 WHERE a = 1 AND b < 5;

    Expressions support comparisons, + - * /, AND/OR/NOT, parentheses,
    numbers, single-quoted strings, and TRUE/FALSE/NULL. ``--`` starts a
    line comment; a missing WHERE clause means every tuple matches.
    """
    statements = []
    for raw in text.split(";"):
        body = "\n".join(line.split("--", 1)[0] for line in raw.splitlines())
        if body.strip():
            statements.append(body.strip())
    return [_parse_update(s) for s in statements]


def _tokenize_update(text: str) -> list[str]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _UPD_TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise UpdateSyntaxError(f"cannot read input at {text[pos:pos + 20]!r}")
            break
        toks.append(m.group(1))
        pos = m.end()
    return toks


class _UpdParser:
    def __init__(self, toks: list[str]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> Optional[str]:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> str:
        if self.pos >= len(self.toks):
            raise UpdateSyntaxError("unexpected end of statement")
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, kw: str) -> None:
        t = self.next()
        if t.upper() != kw:
            raise UpdateSyntaxError(f"expected {kw}, found {t!r}")

    def disjunction(self) -> Expr:
        parts = [self.conjunction()]
        while (self.peek() or "").upper() == "OR":
            self.next()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else BoolOp("or", tuple(parts))

    def conjunction(self) -> Expr:
        parts = [self.negation()]
        while (self.peek() or "").upper() == "AND":
            self.next()
            parts.append(self.negation())
        return parts[0] if len(parts) == 1 else BoolOp("and", tuple(parts))

    def negation(self) -> Expr:
        if (self.peek() or "").upper() == "NOT":
            self.next()
            return BoolOp("not", (self.negation(),))
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        if self.peek() in ("=", "<>", "<", "<=", ">", ">="):
            op = self.next()
            return Cmp(op, left, self.additive())
        return left

    def additive(self) -> Expr:
        e = self.multiplicative()
        while self.peek() in ("+", "-"):
            op = self.next()
            e = Arith(op, e, self.multiplicative())
        return e

    def multiplicative(self) -> Expr:
        e = self.atom()
        while self.peek() in ("*", "/"):
            op = self.next()
            e = Arith(op, e, self.atom())
        return e

    def atom(self) -> Expr:
        t = self.next()
        if t == "(":
            e = self.disjunction()
            self.expect(")")
            return e
        if t.startswith("'"):
            return Const(t[1:-1].replace("''", "'"))
        if re.fullmatch(r"\d+\.\d+", t):
            return Const(float(t))
        if re.fullmatch(r"\d+", t):
            return Const(int(t))
        if t == "-":
            inner = self.atom()
            if isinstance(inner, Const) and isinstance(inner.value, (int, float)):
                return Const(-inner.value)
            return Arith("-", Const(0), inner)
        up = t.upper()
        if up == "TRUE":
            return Const(True)
        if up == "FALSE":
            return Const(False)
        if up == "NULL":
            return Const(None)
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", t):
            return Attr(t)
        raise UpdateSyntaxError(f"cannot read expression at {t!r}")


def _parse_update(stmt: str) -> UpdateStmt:
    p = _UpdParser(_tokenize_update(stmt))
    p.expect("UPDATE")
    rel = p.next()
    p.expect("SET")
    clauses = []
    while True:
        attr = p.next()
        p.expect("=")
        clauses.append((attr, p.additive()))
        if p.peek() == ",":
            p.next()
            continue
        break
    where: Expr = Const(True)
    if (p.peek() or "").upper() == "WHERE":
        p.next()
        where = p.disjunction()
    if p.peek() is not None:
        raise UpdateSyntaxError(f"trailing input {p.peek()!r}")
    return UpdateStmt(rel, tuple(clauses), where)
