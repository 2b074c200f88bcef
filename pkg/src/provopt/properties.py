"""Operator property inference: keys, equivalence classes, needed columns,
and duplicate insensitivity.

All four inferences are sound but deliberately incomplete: a missing key or
equivalence only costs a rewrite opportunity, never correctness. The rules
are written for trees and extended to DAGs conservatively: a shared node
takes the union of its parents' column demands, the conjunction of its
parents' duplicate-insensitivity, and accumulates equivalence information
from every parent.

Equivalence classes are frozensets whose members are attribute names (str)
or ``EcConst`` wrappers; a class holds at most one constant in practice but
nothing breaks if contradictory selections put two there (the corresponding
instances are empty).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union as TUnion

from .algebra import (
    Agg, Attr, BoolOp, Cmp, Const, Cross, Diff, DupElim, Expr,
    Intersect, Join, Node, Project, Relation, Select, Union, Window,
    all_nodes, expr_attrs, right_output_names, schema_of,
)


@dataclass(frozen=True)
class EcConst:
    """Constant member of an equivalence class."""

    value: object


EcMember = TUnion[str, EcConst]
EcClass = frozenset
KeySet = frozenset


@dataclass
class PropertyStore:
    """Per-node inferred properties for one graph."""

    keys: dict[Node, frozenset[KeySet]] = field(default_factory=dict)
    ecs: dict[Node, frozenset[EcClass]] = field(default_factory=dict)
    icols: dict[Node, frozenset[str]] = field(default_factory=dict)
    dup_insensitive: dict[Node, bool] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# equivalence-class machinery


def ec_closure(classes: Iterable[frozenset]) -> frozenset[EcClass]:
    """Merge overlapping classes to a fixpoint (transitivity of equality)."""
    pending = [set(c) for c in classes if c]
    merged: list[set] = []
    while pending:
        cur = pending.pop()
        changed = True
        while changed:
            changed = False
            for other in merged:
                if cur & other:
                    merged.remove(other)
                    cur |= other
                    changed = True
                    break
        merged.append(cur)
    return frozenset(frozenset(c) for c in merged)


def singletons(attrs: Iterable[str]) -> frozenset[EcClass]:
    return frozenset(frozenset((a,)) for a in attrs)


def class_of(classes: Iterable[EcClass], member: EcMember) -> Optional[EcClass]:
    for c in classes:
        if member in c:
            return c
    return None


def _rename_classes(classes: Iterable[EcClass], mapping: Mapping[str, str]) -> frozenset[EcClass]:
    out = []
    for c in classes:
        out.append(frozenset(mapping.get(m, m) if isinstance(m, str) else m for m in c))
    return frozenset(out)


def _restrict_classes(classes: Iterable[EcClass], attrs: set[str], *, keep_consts: bool) -> frozenset[EcClass]:
    out = []
    for c in classes:
        kept = frozenset(m for m in c
                         if (isinstance(m, str) and m in attrs)
                         or (not isinstance(m, str) and keep_consts))
        if kept:
            out.append(kept)
    return frozenset(out)


def _subtract_classes(classes: Iterable[EcClass], attrs: set[str]) -> frozenset[EcClass]:
    out = []
    for c in classes:
        kept = frozenset(m for m in c if not (isinstance(m, str) and m in attrs))
        if kept:
            out.append(kept)
    return frozenset(out)


# ---------------------------------------------------------------------------
# CNF normalization (equality harvesting only)


def to_cnf_conjuncts(e: Expr, cap: int = 64) -> Optional[list[Expr]]:
    """Conjuncts of the CNF of a condition, or None when it would blow up.

    Only used to harvest equality conjuncts, so an opaque result merely
    skips equivalence-class seeding for that selection.
    """

    def cnf(x: Expr, budget: list[int]) -> Optional[list[list[Expr]]]:
        # a CNF is a list of clauses; a clause is a list of literals
        budget[0] -= 1
        if budget[0] < 0:
            return None
        if isinstance(x, BoolOp) and x.op == "and":
            out: list[list[Expr]] = []
            for a in x.args:
                sub = cnf(a, budget)
                if sub is None:
                    return None
                out.extend(sub)
            return out
        if isinstance(x, BoolOp) and x.op == "or":
            parts = []
            for a in x.args:
                sub = cnf(a, budget)
                if sub is None:
                    return None
                parts.append(sub)
            out = [[]]
            for sub in parts:
                nxt = []
                for clause in out:
                    for other in sub:
                        merged = clause + other
                        nxt.append(merged)
                        if len(nxt) > cap:
                            return None
                out = nxt
            return out
        return [[x]]

    clauses = cnf(e, [cap * 4])
    if clauses is None:
        return None
    out = []
    for clause in clauses:
        if len(clause) == 1:
            out.append(clause[0])
        else:
            out.append(BoolOp("or", tuple(clause)))
    return out


def equality_classes_from_condition(e: Expr, cap: int = 64) -> frozenset[EcClass]:
    """{a,b} and {a,const} classes implied by a selection condition."""
    cnf_parts = to_cnf_conjuncts(e, cap)
    if cnf_parts is None:
        return frozenset()
    out = []
    for part in cnf_parts:
        if isinstance(part, Cmp) and part.op == "=":
            left, right = part.left, part.right
            if isinstance(left, Attr) and isinstance(right, Attr):
                out.append(frozenset((left.name, right.name)))
            elif isinstance(left, Attr) and isinstance(right, Const):
                out.append(frozenset((left.name, EcConst(right.value))))
            elif isinstance(left, Const) and isinstance(right, Attr):
                out.append(frozenset((right.name, EcConst(left.value))))
    return frozenset(out)


# ---------------------------------------------------------------------------
# traversal helpers


def _positional_rename(src: tuple[str, ...], dst: tuple[str, ...]) -> dict[str, str]:
    return dict(zip(src, dst))


def _pure_renames(node: Project) -> dict[str, str]:
    """output name -> source attr, for plain attribute targets only."""
    return {name: e.name for e, name in node.targets if isinstance(e, Attr)}


# ---------------------------------------------------------------------------
# keys (bottom-up)


def _min_keys(keys: Iterable[frozenset]) -> frozenset[KeySet]:
    ks = set(keys)
    return frozenset(k for k in ks if not any(o < k for o in ks))


def infer_keys(root: Node, base_keys: Optional[Mapping[str, Iterable[Iterable[str]]]] = None) -> dict[Node, frozenset[KeySet]]:
    """Candidate keys per operator; sound, MIN-reduced, possibly incomplete."""
    base_keys = base_keys or {}
    out: dict[Node, frozenset[KeySet]] = {}

    for n in all_nodes(root):
        out[n] = _min_keys(_keys_of(n, out, base_keys))
    return out


def _keys_of(n: Node, out, base_keys) -> frozenset[KeySet]:
    if isinstance(n, Relation):
        declared = base_keys.get(n.name, ())
        sch = set(n.attrs)
        keys = []
        for k in declared:
            k = frozenset(k)
            if k and k <= sch:
                keys.append(k)
        return frozenset(keys)
    if isinstance(n, Select):
        return out[n.child]
    if isinstance(n, Project):
        renames = _pure_renames(n)
        # a source attr may be exported under several names; any one works
        by_source: dict[str, str] = {}
        for name, src in renames.items():
            by_source.setdefault(src, name)
        keys = []
        for k in out[n.child]:
            if all(a in by_source for a in k):
                keys.append(frozenset(by_source[a] for a in k))
        return frozenset(keys)
    if isinstance(n, Join):
        left_keys, right_keys = out[n.left], out[n.right]
        right_map = dict(zip(schema_of(n.right), right_output_names(n)))
        la = frozenset(a for a, _ in n.pairs)
        rb = frozenset(right_map[b] for _, b in n.pairs)
        keys = []
        for k1 in left_keys:
            for k2 in right_keys:
                k2m = frozenset(right_map[a] for a in k2)
                keys.append((k1 | la) | (k2m - rb))
                keys.append((k2m | rb) | (k1 - la))
        return frozenset(keys)
    if isinstance(n, Cross):
        right_map = dict(zip(schema_of(n.right), right_output_names(n)))
        keys = []
        for k1 in out[n.left]:
            for k2 in out[n.right]:
                keys.append(k1 | frozenset(right_map[a] for a in k2))
        return frozenset(keys)
    if isinstance(n, Agg):
        outs = frozenset(name for _, _, name in n.aggs)
        if not n.group_by:
            return frozenset(frozenset((o,)) for o in outs)
        group = frozenset(n.group_by)
        contained = [k for k in out[n.child] if k <= group]
        if contained:
            return frozenset(contained)
        return frozenset((group,))
    if isinstance(n, DupElim):
        child = out[n.child]
        if child:
            return child
        return frozenset((frozenset(schema_of(n)),))
    if isinstance(n, Union):
        return frozenset()
    if isinstance(n, Intersect):
        rename = _positional_rename(schema_of(n.right), schema_of(n.left))
        renamed = frozenset(frozenset(rename[a] for a in k) for k in out[n.right])
        return out[n.left] | renamed
    if isinstance(n, Diff):
        return out[n.left]
    if isinstance(n, Window):
        return out[n.child]
    raise TypeError(f"unknown operator {type(n).__name__}")


# ---------------------------------------------------------------------------
# equivalence classes (bottom-up, then top-down)


def infer_ec(root: Node, cnf_cap: int = 64) -> dict[Node, frozenset[EcClass]]:
    """Equivalence classes per operator.

    Bottom-up pass seeds classes from conditions and merges across
    operators; the top-down pass then pushes ancestor-derived classes back
    into the inputs. A node with several parents only keeps what every
    parent path supports (pairwise intersection of the contributions), so
    the combination stays sound on DAGs.
    """
    up: dict[Node, frozenset[EcClass]] = {}
    order = all_nodes(root)
    for n in order:
        up[n] = ec_closure(_ec_up(n, up, cnf_cap) | singletons(schema_of(n)))

    slots: dict[Node, list[tuple[Node, int]]] = {n: [] for n in order}
    for n in order:
        for idx, child in enumerate(n.children):
            slots[child].append((n, idx))

    down: dict[Node, frozenset[EcClass]] = {root: up[root]}
    for n in reversed(order):  # every parent is finalized before its child
        if n is root:
            continue
        combined: Optional[frozenset[EcClass]] = None
        for parent, idx in slots[n]:
            contrib = _ec_down(parent, idx, down[parent])
            if contrib is None:
                contrib = frozenset()
            combined = contrib if combined is None else _intersect_class_sets(combined, contrib)
        down[n] = ec_closure(up[n] | (combined or frozenset()))
    return down


def _intersect_class_sets(a: Iterable[EcClass], b: Iterable[EcClass]) -> frozenset[EcClass]:
    out = []
    for c1 in a:
        for c2 in b:
            inter = c1 & c2
            if inter:
                out.append(inter)
    return frozenset(out)


def ec_transfer_down(parent: Node, child_idx: int,
                     classes: frozenset) -> frozenset[EcClass]:
    """Map equivalence classes from a parent's output into one child's
    naming, per the top-down transfer rules; empty when nothing survives."""
    out = _ec_down(parent, child_idx, classes)
    return frozenset() if out is None else out


def infer_ec_bottom_up(root: Node, cnf_cap: int = 64) -> dict[Node, frozenset[EcClass]]:
    """Equivalence classes from the bottom-up pass only (intrinsic to each
    operator's output, independent of where it sits in the query)."""
    up: dict[Node, frozenset[EcClass]] = {}
    for n in all_nodes(root):
        up[n] = ec_closure(_ec_up(n, up, cnf_cap) | singletons(schema_of(n)))
    return up


def _ec_up(n: Node, up, cnf_cap) -> frozenset[EcClass]:
    if isinstance(n, Relation):
        return singletons(n.attrs)
    if isinstance(n, Select):
        return up[n.child] | equality_classes_from_condition(n.cond, cnf_cap)
    if isinstance(n, Project):
        renames = _pure_renames(n)
        child = up[n.child]
        classes = []
        names = list(renames)
        for i, b1 in enumerate(names):
            for b2 in names[i + 1:]:
                c = class_of(child, renames[b1])
                if c is not None and renames[b2] in c:
                    classes.append(frozenset((b1, b2)))
        return frozenset(classes)
    if isinstance(n, Join):
        right_map = dict(zip(schema_of(n.right), right_output_names(n)))
        right = _rename_classes(up[n.right], right_map)
        pairs = frozenset(frozenset((a, right_map[b])) for a, b in n.pairs)
        return up[n.left] | right | pairs
    if isinstance(n, Cross):
        right_map = dict(zip(schema_of(n.right), right_output_names(n)))
        return up[n.left] | _rename_classes(up[n.right], right_map)
    if isinstance(n, Agg):
        group = set(n.group_by)
        kept = _restrict_classes(up[n.child], group, keep_consts=False)
        return kept | singletons(name for _, _, name in n.aggs)
    if isinstance(n, DupElim):
        return up[n.child]
    if isinstance(n, Union):
        rename = _positional_rename(schema_of(n.right), schema_of(n.left))
        right = _rename_classes(up[n.right], rename)
        return _intersect_class_sets(up[n.left], right)
    if isinstance(n, Intersect):
        rename = _positional_rename(schema_of(n.right), schema_of(n.left))
        return up[n.left] | _rename_classes(up[n.right], rename)
    if isinstance(n, Diff):
        return up[n.left]
    if isinstance(n, Window):
        return up[n.child] | frozenset((frozenset((n.out,)),))
    raise TypeError(f"unknown operator {type(n).__name__}")


def _ec_down(n: Node, child_idx: int, own: frozenset[EcClass]) -> Optional[frozenset[EcClass]]:
    """Classes a parent contributes to one child; None resets to singletons."""
    if isinstance(n, (Select, DupElim)):
        return own
    if isinstance(n, Project):
        renames = _pure_renames(n)
        classes = []
        for c in own:
            named = [renames[m] for m in c if isinstance(m, str) and m in renames]
            for i, a1 in enumerate(named):
                for a2 in named[i + 1:]:
                    if a1 != a2:
                        classes.append(frozenset((a1, a2)))
        return frozenset(classes)
    if isinstance(n, (Join, Cross)):
        left_schema = set(schema_of(n.left))
        right_names = right_output_names(n)
        right_schema = schema_of(n.right)
        if child_idx == 0:
            return _subtract_classes(own, set(right_names))
        back = dict(zip(right_names, right_schema))
        kept = _subtract_classes(own, left_schema)
        return _rename_classes(kept, back)
    if isinstance(n, Agg):
        # only equalities over group-by attributes survive the trip through
        # an aggregation: filtering other child columns would change the
        # groups' aggregate values
        return _restrict_classes(own, set(n.group_by), keep_consts=True)
    if isinstance(n, Union):
        if child_idx == 0:
            return own
        rename = _positional_rename(schema_of(n.left), schema_of(n.right))
        return _rename_classes(own, rename)
    if isinstance(n, Intersect):
        if child_idx == 0:
            return own
        rename = _positional_rename(schema_of(n.left), schema_of(n.right))
        return _rename_classes(own, rename)
    if isinstance(n, Diff):
        if child_idx == 0:
            return own
        return None  # difference right input: reset to singletons
    if isinstance(n, Window):
        # same reasoning as aggregation, with partition attributes in the
        # role of the group-by (order attributes are not safe: a running
        # frame aggregates over rows a filter would remove)
        return _restrict_classes(own, set(n.partition_by), keep_consts=True)
    raise TypeError(f"unknown operator {type(n).__name__}")


# ---------------------------------------------------------------------------
# needed columns (top-down)


def infer_icols(root: Node) -> dict[Node, frozenset[str]]:
    """Minimal output attributes each operator must produce for its ancestors.

    The virtual root demands the full output schema; shared nodes take the
    union of all parents' demands.
    """
    order = all_nodes(root)
    icols: dict[Node, set[str]] = {n: set() for n in order}
    icols[root] = set(schema_of(root))
    for n in reversed(order):  # parents processed before their children
        need = frozenset(icols[n])
        for child_idx, child in enumerate(n.children):
            icols[child] |= _icols_down(n, child_idx, need)
    return {n: frozenset(cols) for n, cols in icols.items()}


def _icols_down(n: Node, child_idx: int, need: frozenset[str]) -> set[str]:
    if isinstance(n, Select):
        return set(need) | set(expr_attrs(n.cond))
    if isinstance(n, Project):
        cols: set[str] = set()
        for e, name in n.targets:
            if name in need:
                cols |= set(expr_attrs(e))
        return cols
    if isinstance(n, (Join, Cross)):
        left_schema = schema_of(n.left)
        right_schema = schema_of(n.right)
        right_names = right_output_names(n)
        demanded = set(need)
        if isinstance(n, Join):
            right_map = dict(zip(right_schema, right_names))
            for a, b in n.pairs:
                demanded.add(a)
                demanded.add(right_map[b])
        if child_idx == 0:
            return demanded & set(left_schema)
        back = dict(zip(right_names, right_schema))
        return {back[a] for a in demanded if a in back}
    if isinstance(n, Agg):
        return set(n.group_by) | {arg for _, arg, _ in n.aggs}
    if isinstance(n, DupElim):
        return set(schema_of(n.child))
    if isinstance(n, Union):
        if child_idx == 0:
            return set(need)
        rename = _positional_rename(schema_of(n.left), schema_of(n.right))
        return {rename[a] for a in need}
    if isinstance(n, (Intersect, Diff)):
        return set(schema_of(n.children[child_idx]))
    if isinstance(n, Window):
        return ((set(need) - {n.out}) | {n.arg}
                | set(n.partition_by) | set(n.order_by))
    raise TypeError(f"unknown operator {type(n).__name__}")


# ---------------------------------------------------------------------------
# duplicate insensitivity (top-down)


def infer_set(root: Node) -> dict[Node, bool]:
    """True when a duplicate elimination downstream on every path makes the
    operator's multiplicities irrelevant (no aggregation or window operator
    in between)."""
    order = all_nodes(root)
    value: dict[Node, Optional[bool]] = {n: None for n in order}
    value[root] = False
    for n in reversed(order):
        own = value[n]
        for child in n.children:
            if isinstance(n, DupElim):
                contrib = True
            elif isinstance(n, (Agg, Window)):
                contrib = False
            else:
                contrib = bool(own)
            prev = value[child]
            value[child] = contrib if prev is None else (prev and contrib)
    return {n: bool(v) for n, v in value.items()}


def infer_all(root: Node, base_keys: Optional[Mapping[str, Iterable[Iterable[str]]]] = None) -> PropertyStore:
    return PropertyStore(
        keys=infer_keys(root, base_keys),
        ecs=infer_ec(root),
        icols=infer_icols(root),
        dup_insensitive=infer_set(root),
    )


def format_class(c: EcClass) -> str:
    names = sorted(m if isinstance(m, str) else repr(m.value) for m in c)
    return "{" + ",".join(names) + "}"


def format_properties(store: PropertyStore, node: Node) -> str:
    keys = sorted("{" + ",".join(sorted(k)) + "}" for k in store.keys.get(node, ()))
    ecs = sorted(format_class(c) for c in store.ecs.get(node, ()) if len(c) > 1)
    icols = sorted(store.icols.get(node, ()))
    return (f"keys={{{','.join(keys)}}} ec={{{','.join(ecs)}}} "
            f"icols={{{','.join(icols)}}} set={str(store.dup_insensitive.get(node, False)).lower()}")
