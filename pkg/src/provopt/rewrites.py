"""Equivalence-preserving rewrite rules and the fixed-order pipeline.

Every rule maps a graph to an equivalent graph; preconditions come from the
property inference in :mod:`provopt.properties`. Rules that can shrink or
reorder an operator's output schema validate the rewritten graph and skip
the candidate when ancestors would break (for example, a column drop under
one input of a positional set operator).

The projection-merge safety check is what keeps reenactment stacks from
exploding: merging is rejected when a non-trivial inner definition is
referenced more than once by the outer projection (each such merge can
double the reference count, so chains of them grow exponentially), or when
the merged expressions outgrow the inputs by more than a constant factor.
A rejected pair marks the inner projection as a materialization fence for
SQL generation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

from .algebra import (
    Agg, Arith, Attr, BoolOp, Cmp, Cond, Const, Cross, Diff, DupElim, Expr,
    Intersect, Join, Node, Project, Select, Union, Window,
    all_nodes, conjuncts, conjunction, expr_attrs, expr_size,
    identity_targets, parent_map, replace_children, right_output_names,
    schema_of, structurally_equal, substitute as graph_substitute,
    substitute_attrs, SchemaError,
)
from .properties import (
    EcConst, ec_transfer_down, infer_ec, infer_ec_bottom_up, infer_icols,
    infer_keys, infer_set,
)

ChoiceFn = Callable[[int], int]

RULE_ORDER = (
    "factor_attributes",
    "merge_projections",
    "merge_selections",
    "selection_move_around",
    "pull_up_prov_projection",
    "project_to_icols",
    "remove_window",
    "remove_dupelim_by_key",
    "remove_dupelim_by_set",
    "remove_redundant_projection",
)


@dataclass
class RewriteConfig:
    rounds: int = 2
    #: reject a merge when the result exceeds this multiple of the input sizes
    merge_growth_factor: float = 4.0
    #: inner definitions larger than one node may be referenced at most this often
    merge_ref_limit: int = 1
    #: hard ceiling on CNF expansion during equivalence-class seeding
    cnf_cap: int = 64
    #: rule names to run; None enables the full pipeline
    enabled: Optional[frozenset] = None
    #: per-candidate callback for the set-based duplicate elimination removal
    #: (0 removes, 1 keeps); None always removes
    dupelim_set_choice: Optional[ChoiceFn] = None
    #: declared candidate keys of base relations
    base_keys: Mapping[str, Iterable[Iterable[str]]] = field(default_factory=dict)
    #: test-only: disable the merge safety check
    unsafe_naive_merge: bool = False

    def rule_enabled(self, name: str) -> bool:
        return self.enabled is None or name in self.enabled


def _substitute(root: Node, target: Node, replacement: Node) -> Node:
    return graph_substitute(root, target, replacement, check_schema=False)


def _try_substitute(root: Node, target: Node, replacement: Node) -> Optional[Node]:
    """Substitute and validate; None when ancestors cannot absorb the change."""
    try:
        new_root = _substitute(root, target, replacement)
        schema_of(new_root)
        return new_root
    except SchemaError:
        return None


def count_attr_refs(e: Expr, name: str) -> int:
    if isinstance(e, Attr):
        return 1 if e.name == name else 0
    if isinstance(e, Const):
        return 0
    if isinstance(e, (Arith, Cmp)):
        return count_attr_refs(e.left, name) + count_attr_refs(e.right, name)
    if isinstance(e, BoolOp):
        return sum(count_attr_refs(a, name) for a in e.args)
    if isinstance(e, Cond):
        return (count_attr_refs(e.pred, name) + count_attr_refs(e.if_true, name)
                + count_attr_refs(e.if_false, name))
    raise TypeError(f"not an expression: {e!r}")


def total_expression_size(root: Node) -> int:
    """Summed size of all projection/selection expressions in a graph."""
    total = 0
    for n in all_nodes(root):
        if isinstance(n, Project):
            total += sum(expr_size(e) for e, _ in n.targets)
        elif isinstance(n, Select):
            total += expr_size(n.cond)
    return total


# ---------------------------------------------------------------------------
# attribute factoring


_NEUTRAL = {"+": Const(0), "-": Const(0), "*": Const(1), "/": Const(1)}
_COMMUTES = ("+", "*")


def factor_expression(e: Expr) -> Expr:
    """Rewrite ``if p then A(+)c else A`` into ``A (+) (if p then c else e)``
    where e is the neutral element, recursively; the reverse branch order is
    factored symmetrically."""
    if isinstance(e, (Attr, Const)):
        return e
    if isinstance(e, Arith):
        return Arith(e.op, factor_expression(e.left), factor_expression(e.right))
    if isinstance(e, Cmp):
        return Cmp(e.op, factor_expression(e.left), factor_expression(e.right))
    if isinstance(e, BoolOp):
        return BoolOp(e.op, tuple(factor_expression(a) for a in e.args))
    if isinstance(e, Cond):
        pred = factor_expression(e.pred)
        then = factor_expression(e.if_true)
        other = factor_expression(e.if_false)
        factored = _factor_cond(pred, then, other, negate=False)
        if factored is None:
            factored = _factor_cond(pred, other, then, negate=True)
        return factored if factored is not None else Cond(pred, then, other)
    raise TypeError(f"not an expression: {e!r}")


def _factor_cond(pred: Expr, bigger: Expr, base: Expr, *, negate: bool) -> Optional[Expr]:
    if not isinstance(bigger, Arith):
        return None
    op = bigger.op
    candidates = []
    if bigger.left == base:
        candidates.append(bigger.right)
    if op in _COMMUTES and bigger.right == base:
        candidates.append(bigger.left)
    for delta in candidates:
        neutral = _NEUTRAL[op]
        branch = Cond(pred, neutral, delta) if negate else Cond(pred, delta, neutral)
        return Arith(op, base, branch)
    return None


def factor_attributes(root: Node) -> Node:
    """Apply expression factoring inside every projection."""
    memo: dict[Node, Node] = {}

    def rec(n: Node) -> Node:
        if n in memo:
            return memo[n]
        kids = tuple(rec(c) for c in n.children)
        node = n if all(k is c for k, c in zip(kids, n.children)) else replace_children(n, kids)
        if isinstance(node, Project):
            targets = tuple((factor_expression(e), name) for e, name in node.targets)
            if targets != node.targets:
                node = Project(targets, node.child, node.materialize)
        memo[n] = node
        return node

    return rec(root)


# ---------------------------------------------------------------------------
# merging adjacent projections / selections


def _merge_safe(outer: Project, inner: Project, cfg: RewriteConfig,
                merged: tuple[tuple[Expr, str], ...]) -> bool:
    if cfg.unsafe_naive_merge:
        return True
    for e, name in inner.targets:
        if expr_size(e) <= 1:
            continue
        refs = sum(count_attr_refs(oe, name) for oe, _ in outer.targets)
        if refs > cfg.merge_ref_limit:
            return False
    merged_size = sum(expr_size(e) for e, _ in merged)
    input_size = (sum(expr_size(e) for e, _ in outer.targets)
                  + sum(expr_size(e) for e, _ in inner.targets))
    return merged_size <= cfg.merge_growth_factor * input_size


def merge_projections(root: Node, cfg: Optional[RewriteConfig] = None) -> Node:
    """Collapse adjacent projections, substituting inner definitions.

    Pairs failing the safety check stay separate and the inner projection is
    flagged as a materialization fence.
    """
    cfg = cfg or RewriteConfig()
    while True:
        parents = parent_map(root)
        candidate = None
        for n in all_nodes(root):
            if (isinstance(n, Project) and isinstance(n.child, Project)
                    and len(parents[n.child]) == 1
                    and not n.child.materialize):
                candidate = n
                break
        if candidate is None:
            return root
        inner = candidate.child
        defs = {name: e for e, name in inner.targets}
        merged = tuple((substitute_attrs(e, defs), name) for e, name in candidate.targets)
        if _merge_safe(candidate, inner, cfg, merged):
            new_node = Project(merged, inner.child, candidate.materialize)
            root = _substitute(root, candidate, new_node)
        else:
            fenced = Project(inner.targets, inner.child, materialize=True)
            root = _substitute(root, inner, fenced)


def merge_selections(root: Node) -> Node:
    while True:
        parents = parent_map(root)
        candidate = None
        for n in all_nodes(root):
            if (isinstance(n, Select) and isinstance(n.child, Select)
                    and len(parents[n.child]) == 1):
                candidate = n
                break
        if candidate is None:
            return root
        inner = candidate.child
        new_node = Select(conjunction([candidate.cond, inner.cond]), inner.child)
        root = _substitute(root, candidate, new_node)


def remove_redundant_projection(root: Node) -> Node:
    skipped: set[int] = set()
    while True:
        found = None
        for n in all_nodes(root):
            if isinstance(n, Project) and not n.materialize and id(n) not in skipped:
                child_schema = schema_of(n.child)
                if (len(n.targets) == len(child_schema)
                        and all(isinstance(e, Attr) and e.name == a and name == a
                                for (e, name), a in zip(n.targets, child_schema))):
                    found = n
                    break
        if found is None:
            return root
        new_root = _try_substitute(root, found, found.child)
        if new_root is None:
            skipped.add(id(found))
            continue
        root = new_root


# ---------------------------------------------------------------------------
# duplicate elimination removal


def remove_dupelim_by_key(root: Node, base_keys=None) -> Node:
    while True:
        keys = infer_keys(root, base_keys)
        found = None
        for n in all_nodes(root):
            if isinstance(n, DupElim) and keys[n.child]:
                found = n
                break
        if found is None:
            return root
        root = _substitute(root, found, found.child)


def remove_dupelim_by_set(root: Node, choice: Optional[ChoiceFn] = None,
                          decided_keep: Optional[set] = None) -> Node:
    """Drop duplicate eliminations whose effect is absorbed downstream.

    With a choice callback, each removable operator becomes a cost-based
    decision (0 removes, 1 keeps); ``decided_keep`` carries keep-decisions
    across pipeline rounds so one operator is decided once.
    """
    decided_keep = set() if decided_keep is None else decided_keep
    while True:
        dup = infer_set(root)
        found = None
        for n in all_nodes(root):
            if isinstance(n, DupElim) and dup[n] and id(n) not in decided_keep:
                found = n
                break
        if found is None:
            return root
        if choice is not None and choice(2) == 1:
            decided_keep.add(id(found))
            continue
        root = _substitute(root, found, found.child)


# ---------------------------------------------------------------------------
# column pruning


def _positional_descendants(root: Node) -> set[Node]:
    """Nodes below a positional set operator (column order matters there)."""
    out: set[Node] = set()
    for n in all_nodes(root):
        if isinstance(n, (Union, Intersect, Diff)):
            stack = list(n.children)
            while stack:
                cur = stack.pop()
                if cur in out:
                    continue
                out.add(cur)
                stack.extend(cur.children)
    return out


def project_to_icols(root: Node) -> Node:
    """Insert pruning projections above operators producing unneeded columns."""
    while True:
        icols = infer_icols(root)
        parents = parent_map(root)
        applied = False
        for n in all_nodes(root):
            if n is root:
                continue
            need = icols[n]
            sch = schema_of(n)
            if set(sch) == set(need):
                continue
            if parents[n] and all(isinstance(p, Project) for p in parents[n]):
                continue  # demand is already expressed by projections
            keep = tuple(a for a in sch if a in need)
            if not keep:
                continue
            wrapper = Project(identity_targets(keep), n)
            new_root = _try_substitute(root, n, wrapper)
            if new_root is not None:
                root = new_root
                applied = True
                break
        if not applied:
            return root


def remove_window(root: Node) -> Node:
    skipped: set[int] = set()
    while True:
        icols = infer_icols(root)
        found = None
        for n in all_nodes(root):
            if isinstance(n, Window) and n.out not in icols[n] and id(n) not in skipped:
                found = n
                break
        if found is None:
            return root
        new_root = _try_substitute(root, found, found.child)
        if new_root is None:
            skipped.add(id(found))
            continue
        root = new_root


# ---------------------------------------------------------------------------
# provenance projection pull-up


_PULL_THROUGH = (Select, Join, Cross, DupElim)


def pull_up_prov_projection(root: Node) -> Node:
    """Move pure attribute duplications above operators that neither use nor
    drop them, so intermediate results stay narrow.

    Applies to a projection whose parent passes all child columns through;
    the duplicated column is re-created by a new projection above the
    parent. Repeats until no more duplications can climb.
    """
    while True:
        moved = False
        parents = parent_map(root)
        positional = _positional_descendants(root)
        for proj in all_nodes(root):
            if not isinstance(proj, Project) or proj.materialize:
                continue
            if len(parents[proj]) != 1:
                continue
            parent = parents[proj][0]
            if not isinstance(parent, _PULL_THROUGH):
                continue
            if parent in positional or proj in positional:
                continue
            used = _own_used_attrs(parent)
            exported = {name for e, name in proj.targets if isinstance(e, Attr) and e.name == name}
            pulled = []
            kept = []
            for e, name in proj.targets:
                if (isinstance(e, Attr) and name != e.name and name not in used
                        and e.name in exported):
                    pulled.append((e.name, name))
                else:
                    kept.append((e, name))
            if not pulled or not kept:
                continue
            reduced = Project(tuple(kept), proj.child, proj.materialize)
            slot = [i for i, c in enumerate(parent.children) if c is proj]
            kids = list(parent.children)
            for i in slot:
                kids[i] = reduced
            new_parent = replace_children(parent, tuple(kids))
            try:
                parent_schema = schema_of(new_parent)
            except SchemaError:
                continue
            if any(src not in parent_schema for src, _ in pulled):
                continue
            wrapper = Project(
                identity_targets(parent_schema)
                + tuple((Attr(src), name) for src, name in pulled),
                new_parent)
            new_root = _try_substitute(root, parent, wrapper)
            if new_root is not None:
                root = new_root
                moved = True
                break
        if not moved:
            return root


def _own_used_attrs(n: Node) -> frozenset[str]:
    """Attributes an operator itself consumes from its inputs."""
    if isinstance(n, Select):
        return frozenset(expr_attrs(n.cond))
    if isinstance(n, Join):
        return frozenset(a for pair in n.pairs for a in pair)
    if isinstance(n, Agg):
        return frozenset(n.group_by) | frozenset(a for _, a, _ in n.aggs)
    if isinstance(n, Window):
        return frozenset((n.arg,)) | frozenset(n.partition_by) | frozenset(n.order_by)
    if isinstance(n, Project):
        out: frozenset[str] = frozenset()
        for e, _ in n.targets:
            out |= expr_attrs(e)
        return out
    return frozenset()


# ---------------------------------------------------------------------------
# selection move-around


def selection_move_around(root: Node, cfg: Optional[RewriteConfig] = None) -> Node:
    """Derive new selections from equivalence classes and push them toward
    the leaves: conditions guarding one join input transfer to the other
    input when the join pairs the attributes they mention, and attribute
    pairs equated by ancestors are enforced early."""
    cfg = cfg or RewriteConfig()
    root = _transfer_join_conditions(root)
    root = _enforce_ancestor_equalities(root, cfg)
    return root


def _chain_conjuncts(node: Node) -> list[Expr]:
    """Conjuncts guaranteed on every tuple flowing out of a sigma/delta chain."""
    out: list[Expr] = []
    cur = node
    while isinstance(cur, (Select, DupElim)):
        if isinstance(cur, Select):
            out.extend(conjuncts(cur.cond))
        cur = cur.child
    return out


def _transfer_join_conditions(root: Node) -> Node:
    while True:
        applied = False
        for j in all_nodes(root):
            if not isinstance(j, Join):
                continue
            left_map = {a: b for a, b in j.pairs}
            right_map = {b: a for a, b in j.pairs}
            for src_idx, mapping in ((0, left_map), (1, right_map)):
                src = j.children[src_idx]
                dst = j.children[1 - src_idx]
                existing = _chain_conjuncts(dst)
                for cond in _chain_conjuncts(src):
                    attrs = expr_attrs(cond)
                    if not attrs or not attrs <= set(mapping):
                        continue
                    transferred = substitute_attrs(cond, {a: Attr(b) for a, b in mapping.items()})
                    if any(transferred == e for e in existing):
                        continue
                    placed, inserted = _place_pushed(transferred, dst)
                    if not inserted:
                        continue
                    kids = list(j.children)
                    kids[1 - src_idx] = placed
                    new_root = _try_substitute(root, j, replace_children(j, tuple(kids)))
                    if new_root is not None:
                        root = new_root
                        applied = True
                        break
                if applied:
                    break
            if applied:
                break
        if not applied:
            return root


def _place_pushed(cond: Expr, node: Node) -> tuple[Node, bool]:
    """Insert a selection as deep as it can legally travel.

    Returns the rewritten subtree and False when an identical conjunct
    already guards the path (nothing to do)."""
    attrs = set(expr_attrs(cond))

    if isinstance(node, Select):
        if any(cond == c for c in conjuncts(node.cond)):
            return node, False
        inner, inserted = _place_pushed(cond, node.child)
        return (Select(node.cond, inner), True) if inserted else (node, False)
    if isinstance(node, DupElim):
        inner, inserted = _place_pushed(cond, node.child)
        return (DupElim(inner), True) if inserted else (node, False)
    if isinstance(node, Project):
        renames: dict[str, str] = {}
        for e, name in node.targets:
            if isinstance(e, Attr):
                renames[name] = e.name
        if attrs <= set(renames):
            rewritten = substitute_attrs(cond, {o: Attr(s) for o, s in renames.items()})
            inner, inserted = _place_pushed(rewritten, node.child)
            if inserted:
                return Project(node.targets, inner, node.materialize), True
            return node, False
        return Select(cond, node), True
    if isinstance(node, (Join, Cross)):
        left_schema = set(schema_of(node.left))
        if attrs <= left_schema:
            inner, inserted = _place_pushed(cond, node.left)
            if inserted:
                return replace_children(node, (inner, node.right)), True
            return node, False
        right_names = right_output_names(node)
        back = dict(zip(right_names, schema_of(node.right)))
        if attrs <= set(right_names):
            rewritten = substitute_attrs(cond, {o: Attr(s) for o, s in back.items()})
            inner, inserted = _place_pushed(rewritten, node.right)
            if inserted:
                return replace_children(node, (node.left, inner)), True
            return node, False
        return Select(cond, node), True
    if isinstance(node, Union):
        # a filter over a union must reach both branches
        rename = dict(zip(schema_of(node.left), schema_of(node.right)))
        right_cond = substitute_attrs(cond, {a: Attr(b) for a, b in rename.items()})
        left, li = _place_pushed(cond, node.left)
        right, ri = _place_pushed(right_cond, node.right)
        if not li and not ri:
            return node, False
        return Union(left, right), True
    if isinstance(node, (Intersect, Diff)):
        inner, inserted = _place_pushed(cond, node.left)
        if inserted:
            return replace_children(node, (inner, node.right)), True
        return node, False
    if isinstance(node, Agg):
        if attrs <= set(node.group_by):
            inner, inserted = _place_pushed(cond, node.child)
            if inserted:
                return Agg(node.group_by, node.aggs, inner), True
            return node, False
        return Select(cond, node), True
    if isinstance(node, Window):
        if attrs <= set(node.partition_by):
            inner, inserted = _place_pushed(cond, node.child)
            if inserted:
                return replace_children(node, (inner,)), True
            return node, False
        return Select(cond, node), True
    return Select(cond, node), True


def _enforce_ancestor_equalities(root: Node, cfg: RewriteConfig) -> Node:
    while True:
        down = infer_ec(root, cfg.cnf_cap)
        up_only = infer_ec_bottom_up(root, cfg.cnf_cap)
        parents = parent_map(root)
        applied = False
        for n in all_nodes(root):
            if n is root:
                continue
            cond = _new_equality(n, down, up_only[n], parents)
            if cond is None:
                continue
            new_root = _try_substitute(root, n, Select(cond, n))
            if new_root is not None:
                root = new_root
                applied = True
                break
        if not applied:
            return root


def _new_equality(n: Node, down, up_classes, parents) -> Optional[Expr]:
    """First equality licensed by ancestors at this node that is neither
    intrinsic here, nor enforceable deeper down, nor already filtered by an
    ancestor selection the new filter would merely duplicate."""
    for cls in sorted(down[n], key=_class_sort_key):
        if len(cls) < 2:
            continue
        members = sorted(cls, key=_member_sort_key)
        for i, m1 in enumerate(members):
            for m2 in members[i + 1:]:
                if isinstance(m1, EcConst) and isinstance(m2, EcConst):
                    continue
                if _same_up_class(up_classes, m1, m2):
                    continue
                if _licensed_below(n, down, m1, m2):
                    continue
                if _pair_guarded_above(n, parents, m1, m2, {}):
                    continue
                return Cmp("=", _member_expr(m1), _member_expr(m2))
    return None


def _licensed_below(n: Node, down, m1, m2) -> bool:
    """True when the equality can be enforced at one of the node's inputs
    instead (insertion happens at the deepest licensed position only)."""
    for idx, child in enumerate(n.children):
        mapped = ec_transfer_down(n, idx, frozenset((frozenset((m1, m2)),)))
        if not mapped:
            continue
        for cls in mapped:
            if len(cls) < 2:
                continue
            for dcls in down[child]:
                if cls <= dcls:
                    return True
    return False


def _pair_guarded_above(n: Node, parents, m1, m2, memo) -> bool:
    """True when every path to the root already filters on this equality
    through operators the filter commutes with, making a new selection at
    this node a no-op."""
    key = (id(n), m1, m2)
    if key in memo:
        return memo[key]
    memo[key] = False  # cycles are impossible; this breaks re-entry cheaply
    result = bool(parents.get(n))
    for p in parents.get(n, ()):
        mapped = _map_members_up(p, n, (m1, m2))
        if mapped is None:
            result = False
            break
        pm1, pm2 = mapped
        if isinstance(p, Select) and any(
                c == Cmp("=", _member_expr(pm1), _member_expr(pm2))
                or c == Cmp("=", _member_expr(pm2), _member_expr(pm1))
                for c in conjuncts(p.cond)):
            continue
        if not _pair_guarded_above(p, parents, pm1, pm2, memo):
            result = False
            break
    memo[key] = result
    return result


def _map_members_up(parent: Node, child: Node, members):
    """Map equality members from a child's output names into the parent's,
    restricted to operators an equality filter commutes with; None when the
    filter cannot travel (so a selection above cannot guard the child)."""

    def map_one(m, mapping):
        if isinstance(m, EcConst):
            return m
        return mapping(m)

    if isinstance(parent, (Select, DupElim)):
        return members
    if isinstance(parent, Project):
        exported = {}
        for e, name in parent.targets:
            if isinstance(e, Attr) and e.name not in exported:
                exported[e.name] = name
        out = tuple(map_one(m, lambda a: exported.get(a)) for m in members)
        return None if None in out else out
    if isinstance(parent, (Join, Cross)):
        if parent.children[0] is child:
            return members
        back = dict(zip(schema_of(parent.right), right_output_names(parent)))
        out = tuple(map_one(m, lambda a: back.get(a)) for m in members)
        return None if None in out else out
    if isinstance(parent, Union):
        if parent.children[0] is child:
            return members
        rename = dict(zip(schema_of(parent.right), schema_of(parent.left)))
        out = tuple(map_one(m, lambda a: rename.get(a)) for m in members)
        return None if None in out else out
    if isinstance(parent, (Intersect, Diff)):
        if parent.children[0] is child:
            return members
        return None
    if isinstance(parent, Agg):
        out = tuple(map_one(m, lambda a: a if a in parent.group_by else None)
                    for m in members)
        return None if None in out else out
    if isinstance(parent, Window):
        out = tuple(map_one(m, lambda a: a if a in parent.partition_by else None)
                    for m in members)
        return None if None in out else out
    return None


def _member_expr(m) -> Expr:
    return Const(m.value) if isinstance(m, EcConst) else Attr(m)


def _member_sort_key(m):
    return (0, m) if isinstance(m, str) else (1, repr(m.value))


def _class_sort_key(cls):
    return tuple(sorted(_member_sort_key(m) for m in cls))


def _same_up_class(up_classes, m1, m2) -> bool:
    for cls in up_classes:
        if m1 in cls and m2 in cls:
            return True
    return False


# ---------------------------------------------------------------------------
# pipeline


#: extra fixpoint rounds allowed beyond the configured minimum
_EXTRA_ROUNDS = 14


def apply_pats(root: Node, cfg: Optional[RewriteConfig] = None) -> Node:
    """Run the fixed-order rewrite pipeline, then restore the original root
    schema (rules may reorder columns).

    The configured round count is a minimum: rounds repeat while a pass
    still changes the graph, so a rewritten plan is a fixpoint and a second
    application is a no-op. A late-created opportunity (say, a pruning
    projection inserted after the merge pass ran) is picked up by the next
    round.
    """
    cfg = cfg or RewriteConfig()
    original_schema = schema_of(root)
    kept_dupelims: set = set()
    for rnd in range(cfg.rounds + _EXTRA_ROUNDS):
        before = root
        if cfg.rule_enabled("factor_attributes"):
            root = factor_attributes(root)
        if cfg.rule_enabled("merge_projections"):
            root = merge_projections(root, cfg)
        if cfg.rule_enabled("merge_selections"):
            root = merge_selections(root)
        if cfg.rule_enabled("selection_move_around"):
            root = selection_move_around(root, cfg)
        if cfg.rule_enabled("pull_up_prov_projection"):
            root = pull_up_prov_projection(root)
        if cfg.rule_enabled("project_to_icols"):
            root = project_to_icols(root)
        if cfg.rule_enabled("remove_window"):
            root = remove_window(root)
        if cfg.rule_enabled("remove_dupelim_by_key"):
            root = remove_dupelim_by_key(root, cfg.base_keys)
        if cfg.rule_enabled("remove_dupelim_by_set"):
            root = remove_dupelim_by_set(root, cfg.dupelim_set_choice, kept_dupelims)
        if cfg.rule_enabled("remove_redundant_projection"):
            root = remove_redundant_projection(root)
        if rnd + 1 >= cfg.rounds and structurally_equal(before, root):
            break
    if schema_of(root) != original_schema:
        # rules may have reordered columns; restore and fold the fix-up
        # projection so reapplying the pipeline starts from a fixpoint
        root = Project(identity_targets(original_schema), root)
        if cfg.rule_enabled("merge_projections"):
            root = merge_projections(root, cfg)
        if cfg.rule_enabled("remove_redundant_projection"):
            root = remove_redundant_projection(root)
    return root
