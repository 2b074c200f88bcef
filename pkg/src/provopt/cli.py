"""Command-line front end.

Subcommands:

* ``run``: full pipeline (parse, instrument, rewrite, cost-based search,
  SQL generation) with evaluation of the winning plan,
* ``instrument``: print the instrumented plan for a provenance request or
  a reenacted transaction,
* ``optimize``: apply the heuristic rewrite pipeline to a plan,
* ``explain-properties``: dump inferred per-operator properties,
* ``sql``: translate a plan to SQL,
* ``bench``: synthetic workloads comparing instrumentation methods.

Inputs are plan files in the parenthesized text format, CSV data
directories with sidecar schema files, and UPDATE scripts in the
micro-grammar (see README). The environment variable PROVOPT_SEED
overrides ``--seed``.
"""
from __future__ import annotations

import argparse
import os
import random
import sys
import time
from pathlib import Path

from . import algebra, datafiles, instrument as instr, optimizer, plantext, rewrites, sqlgen
from .executor import BagRelation, TableStats, cost, evaluate
from .properties import format_properties, infer_all


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except plantext.PlanSyntaxError as exc:
        print(f"plan syntax error: {exc}", file=sys.stderr)
        return 2
    except (algebra.AlgebraError, datafiles.DataError, instr.InstrumentError,
            instr.UpdateSyntaxError, optimizer.EnumerationError,
            sqlgen.SqlGenError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="provopt",
                                description="provenance instrumentation and optimization")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, data_required=False):
        sp.add_argument("--data", type=Path, required=data_required,
                        help="directory with CSV files and .schema sidecars")
        sp.add_argument("--out", type=Path, help="write output to a file")
        sp.add_argument("--seed", type=int, default=0,
                        help="RNG seed (PROVOPT_SEED overrides)")

    run = sub.add_parser("run", help="full pipeline with cost-based search")
    add_common(run, data_required=True)
    run.add_argument("--prov-of", type=Path, help="plan file to compute provenance of")
    run.add_argument("--reenact", type=Path, help="UPDATE script to reenact")
    run.add_argument("--plan", type=Path, help="plan file to evaluate as-is")
    run.add_argument("--scope", choices=["filter", "histjoin", "none"], default="none")
    run.add_argument("--agg-method", choices=["join", "window", "cbo"], default="cbo")
    run.add_argument("--strategy", choices=["seq", "bin", "sa"], default="seq")
    run.add_argument("--stop", default="none",
                     help="none, adaptive, or max-iters=N")
    run.add_argument("--sa-temp", type=float, default=10.0)
    run.add_argument("--sa-cooling", type=float, default=0.8)
    run.add_argument("--no-heuristics", action="store_true",
                     help="skip the rewrite pipeline")
    run.add_argument("--trace-plans", type=Path,
                     help="write one line per iteration: path and cost")
    run.set_defaults(func=cmd_run)

    inst = sub.add_parser("instrument", help="print an instrumented plan")
    add_common(inst)
    inst.add_argument("--prov-of", type=Path)
    inst.add_argument("--reenact", type=Path)
    inst.add_argument("--agg-method", choices=["join", "window", "cbo"], default="window")
    inst.add_argument("--scope", choices=["filter", "histjoin", "none"], default="none")
    inst.set_defaults(func=cmd_instrument)

    opt = sub.add_parser("optimize", help="apply the heuristic rewrite pipeline")
    add_common(opt)
    opt.add_argument("--plan", type=Path, required=True)
    opt.add_argument("--rules", help="comma-separated rule names to enable")
    opt.add_argument("--rounds", type=int, default=2)
    opt.add_argument("--dump-steps", action="store_true",
                     help="print the plan after each rule pass")
    opt.set_defaults(func=cmd_optimize)

    props = sub.add_parser("explain-properties", help="dump inferred properties")
    add_common(props)
    props.add_argument("--plan", type=Path, required=True)
    props.set_defaults(func=cmd_explain)

    sql = sub.add_parser("sql", help="translate a plan to SQL")
    add_common(sql)
    sql.add_argument("--plan", type=Path, required=True)
    sql.set_defaults(func=cmd_sql)

    bench = sub.add_parser("bench", help="synthetic workload comparisons")
    bench.add_argument("--seed", type=int, default=0,
                       help="RNG seed (PROVOPT_SEED overrides)")
    bench.add_argument("--mode", choices=["agg", "reenact"], default="agg")
    bench.add_argument("--aggs", type=int, default=3, help="stacked aggregations")
    bench.add_argument("--rows", type=int, default=1000)
    bench.add_argument("--fanin", type=int, default=4, help="group fan-in per level")
    bench.add_argument("--updates", type=int, default=12, help="updates per transaction")
    bench.add_argument("--out", type=Path)
    bench.set_defaults(func=cmd_bench)
    return p


def _seed(args) -> int:
    env = os.environ.get("PROVOPT_SEED")
    return int(env) if env is not None else args.seed


def _load_data(args):
    db, key_decls = datafiles.load_directory(args.data)
    catalog = {name: rel.schema for name, rel in db.items()}
    stats = {name: TableStats(rel.total, _distincts(rel)) for name, rel in db.items()}
    return db, key_decls, catalog, stats


def _distincts(rel: BagRelation) -> dict[str, float]:
    out = {}
    for i, attr in enumerate(rel.schema):
        out[attr] = float(len({t[i] for t in rel.tuples}))
    return out


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        args.out.write_text(text)
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def format_bag(bag: BagRelation) -> str:
    header = " | ".join(bag.schema)
    lines = [header, "-" * len(header)]
    for t in sorted(bag.tuples, key=repr):
        m = bag.tuples[t]
        row = " | ".join("null" if v is None else str(v) for v in t)
        lines.append(row if m == 1 else f"{row}  (x{m})")
    lines.append(f"({bag.total} row(s))")
    return "\n".join(lines)


def _parse_stop(spec: str):
    if spec == "none":
        return "none", None
    if spec == "adaptive":
        return "adaptive", None
    if spec.startswith("max-iters="):
        return "none", int(spec.split("=", 1)[1])
    raise ValueError(f"unknown stop rule {spec!r} (use none, adaptive, or max-iters=N)")


def cmd_run(args) -> int:
    db, key_decls, catalog, stats = _load_data(args)
    base_keys = {name: [tuple(k) for k in ks] for name, ks in key_decls.items()}
    rng = random.Random(_seed(args))
    stop, max_iters = _parse_stop(args.stop)

    extra_rels: dict[str, BagRelation] = {}

    if args.reenact is not None:
        updates = instr.parse_updates(args.reenact.read_text())
        name = updates[0].relation
        reenacted = instr.reenact(updates, schema=db[name].schema)
        if args.scope != "none":
            store = None
            if args.scope == "histjoin":
                store = instr.VersionedStore()
                store.load(name, db[name], key=(base_keys.get(name) or [None])[0])
                store.apply_transaction(1, updates)
            method = instr.FILTER_UPDATED if args.scope == "filter" else instr.HIST_JOIN
            reenacted, extra_rels = instr.scope_to_updated(reenacted, updates, store,
                                                           method, txn_id=1)
        source = reenacted
        instrument_step = False
    elif args.prov_of is not None:
        source = plantext.parse_plan(args.prov_of.read_text(), catalog)
        instrument_step = True
    elif args.plan is not None:
        source = plantext.parse_plan(args.plan.read_text(), catalog)
        instrument_step = False
    else:
        print("run needs one of --prov-of, --reenact, --plan", file=sys.stderr)
        return 2

    for name, rel in extra_rels.items():
        stats[name] = TableStats(rel.total, _distincts(rel))

    def pipeline(choose):
        graph = source
        if instrument_step:
            method = None if args.agg_method == "cbo" else args.agg_method
            graph = instr.instrument_query(graph, choice=choose, agg_method=method)
        if not args.no_heuristics:
            cfg = rewrites.RewriteConfig(base_keys=base_keys, dupelim_set_choice=choose)
            graph = rewrites.apply_pats(graph, cfg)
        return graph

    result = optimizer.optimize(
        pipeline, lambda g: cost(g, stats).total,
        strategy=args.strategy, stop=stop, max_iters=max_iters,
        rng=rng, sa_temp=args.sa_temp, sa_cooling=args.sa_cooling,
        sql_fn=lambda g: sqlgen.to_sql(g).text)

    if args.trace_plans:
        lines = [f"{list(p.path)}\t{p.cost}" for p in result.trace]
        args.trace_plans.write_text("\n".join(lines) + "\n")

    bag = evaluate(result.best.graph, {**db, **extra_rels})
    out = []
    out.append(f"seed: {_seed(args)}")
    out.append(f"iterations: {len(result.trace)}")
    for i, p in enumerate(result.trace):
        out.append(f"  iter {i}: path={list(p.path)} cost={p.cost:.6g}")
    out.append(f"chosen path: {list(result.best.path)} cost={result.best.cost:.6g}")
    out.append("")
    out.append(format_bag(bag))
    out.append("")
    out.append("SQL:")
    out.append(result.best.sql or sqlgen.to_sql(result.best.graph).text)
    _emit(args, "\n".join(out))
    return 0


def _instrument_source(args, catalog, db, base_keys):
    if args.reenact is not None:
        updates = instr.parse_updates(args.reenact.read_text())
        name = updates[0].relation
        schema = catalog.get(name) if catalog else None
        if schema is None:
            raise instr.InstrumentError(
                f"relation {name!r} needs --data to supply its schema")
        reenacted = instr.reenact(updates, schema=schema)
        extra: dict[str, BagRelation] = {}
        if args.scope != "none":
            store = None
            if args.scope == "histjoin":
                store = instr.VersionedStore()
                store.load(name, db[name], key=(base_keys.get(name) or [None])[0])
                store.apply_transaction(1, updates)
            method = instr.FILTER_UPDATED if args.scope == "filter" else instr.HIST_JOIN
            reenacted, extra = instr.scope_to_updated(reenacted, updates, store, method, txn_id=1)
        return reenacted, extra
    if args.prov_of is not None:
        plan = plantext.parse_plan(args.prov_of.read_text(), catalog)
        method = "window" if args.agg_method == "cbo" else args.agg_method
        return instr.instrument_query(plan, agg_method=method), {}
    raise instr.InstrumentError("instrument needs --prov-of or --reenact")


def cmd_instrument(args) -> int:
    db, key_decls, catalog = {}, {}, None
    base_keys = {}
    if args.data:
        db, key_decls, catalog, _ = _load_data(args)
        base_keys = {name: [tuple(k) for k in ks] for name, ks in key_decls.items()}
    graph, _ = _instrument_source(args, catalog, db, base_keys)
    _emit(args, plantext.format_plan(graph))
    return 0


def cmd_optimize(args) -> int:
    catalog = None
    base_keys = {}
    if args.data:
        _, key_decls, catalog, _ = _load_data(args)
        base_keys = {name: [tuple(k) for k in ks] for name, ks in key_decls.items()}
    plan = plantext.parse_plan(args.plan.read_text(), catalog)
    enabled = frozenset(args.rules.split(",")) if args.rules else None
    cfg = rewrites.RewriteConfig(rounds=args.rounds, enabled=enabled, base_keys=base_keys)
    if args.dump_steps:
        lines = []
        current = plan
        for rnd in range(cfg.rounds):
            for name in rewrites.RULE_ORDER:
                if not cfg.rule_enabled(name):
                    continue
                current = _apply_single_rule(current, name, cfg)
                lines.append(f"; round {rnd + 1}, after {name}")
                lines.append(plantext.format_plan(current))
        _emit(args, "\n".join(lines) + "\n")
        return 0
    _emit(args, plantext.format_plan(rewrites.apply_pats(plan, cfg)))
    return 0


def _apply_single_rule(root, name: str, cfg: rewrites.RewriteConfig):
    if name == "factor_attributes":
        return rewrites.factor_attributes(root)
    if name == "merge_projections":
        return rewrites.merge_projections(root, cfg)
    if name == "merge_selections":
        return rewrites.merge_selections(root)
    if name == "selection_move_around":
        return rewrites.selection_move_around(root, cfg)
    if name == "pull_up_prov_projection":
        return rewrites.pull_up_prov_projection(root)
    if name == "project_to_icols":
        return rewrites.project_to_icols(root)
    if name == "remove_window":
        return rewrites.remove_window(root)
    if name == "remove_dupelim_by_key":
        return rewrites.remove_dupelim_by_key(root, cfg.base_keys)
    if name == "remove_dupelim_by_set":
        return rewrites.remove_dupelim_by_set(root, cfg.dupelim_set_choice)
    if name == "remove_redundant_projection":
        return rewrites.remove_redundant_projection(root)
    raise ValueError(f"unknown rule {name!r}")


def cmd_explain(args) -> int:
    catalog = None
    base_keys = {}
    if args.data:
        _, key_decls, catalog, _ = _load_data(args)
        base_keys = {name: [tuple(k) for k in ks] for name, ks in key_decls.items()}
    plan = plantext.parse_plan(args.plan.read_text(), catalog)
    store = infer_all(plan, base_keys)
    lines = []
    for i, node in enumerate(reversed(algebra.all_nodes(plan))):
        label = plantext.format_plan(node)
        if len(label) > 72:
            label = label[:69] + "..."
        lines.append(f"#{i} {label}")
        lines.append(f"    {format_properties(store, node)}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_sql(args) -> int:
    catalog = None
    if args.data:
        _, _, catalog, _ = _load_data(args)
    plan = plantext.parse_plan(args.plan.read_text(), catalog)
    _emit(args, sqlgen.to_sql(plan).text)
    return 0


# ---------------------------------------------------------------------------
# benchmark harness


def stacked_agg_workload(levels: int, rows: int, fanin: int, rng: random.Random):
    """Base relation with one bucket column per level plus a value column,
    and a query stacking one aggregation per level with shrinking groups."""
    attrs = tuple(f"g{i}" for i in range(1, levels + 1)) + ("val",)
    bag = BagRelation(attrs)
    for key in range(rows):
        buckets = tuple(key // (fanin ** i) for i in range(1, levels + 1))
        bag.add(buckets + (rng.randrange(100),), 1)
    node: algebra.Node = algebra.Relation("base", attrs)
    arg = "val"
    for level in range(1, levels + 1):
        group = tuple(f"g{i}" for i in range(level, levels + 1))
        out = f"s{level}"
        node = algebra.Agg(group, ((("sum"), arg, out),), node)
        arg = out
    return {"base": bag}, node


def cmd_bench(args) -> int:
    rng = random.Random(_seed(args))
    lines = []
    if args.mode == "agg":
        db, query = stacked_agg_workload(args.aggs, args.rows, args.fanin, rng)
        stats = {"base": TableStats(db["base"].total, _distincts(db["base"]))}
        lines.append("method,heuristics,plans,cost,eval_seconds")
        for method in ("join", "window", "cbo"):
            for heu in (True, False):
                def pipeline(choose, method=method, heu=heu):
                    m = None if method == "cbo" else method
                    g = instr.instrument_query(query, choice=choose, agg_method=m)
                    if heu:
                        g = rewrites.apply_pats(g, rewrites.RewriteConfig())
                    return g
                result = optimizer.optimize(pipeline, lambda g: cost(g, stats).total)
                started = time.perf_counter()
                evaluate(result.best.graph, db)
                elapsed = time.perf_counter() - started
                lines.append(f"{method},{'heu' if heu else 'noheu'},"
                             f"{len(result.trace)},{result.best.cost:.6g},{elapsed:.4f}")
    else:
        attrs = tuple(f"a{i}" for i in range(1, args.updates + 1)) + ("b",)
        updates = [
            instr.UpdateStmt("r", ((f"a{i}", algebra.Arith("+", algebra.Attr(f"a{i}"),
                                                           algebra.Const(i))),),
                             algebra.Cmp("=", algebra.Attr("b"), algebra.Const(i % 3)))
            for i in range(1, args.updates + 1)
        ]
        reenacted = instr.reenact(updates, schema=attrs)
        plain_size = rewrites.total_expression_size(reenacted)
        optimized = rewrites.apply_pats(reenacted, rewrites.RewriteConfig(base_keys={}))
        opt_size = rewrites.total_expression_size(optimized)
        naive = rewrites.merge_projections(
            rewrites.factor_attributes(reenacted),
            rewrites.RewriteConfig(unsafe_naive_merge=True))
        naive_size = rewrites.total_expression_size(naive)
        lines.append("variant,total_expression_size")
        lines.append(f"unoptimized,{plain_size}")
        lines.append(f"heuristic,{opt_size}")
        lines.append(f"naive_merge,{naive_size}")
    text = "\n".join(lines) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        print(text, end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
