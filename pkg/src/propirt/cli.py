"""Command-line entry point: ``propirt <subcommand> [flags]``.

Exit codes: 0 ok, 1 failed theorem check, 2 schema/data error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import data_io, model, simulation
from .annotation import AnnotationRequest, ChatClient, ResponseCache, annotate_batch
from .assessor import FEATURE_SETS, AssessorConfig, compare_feature_sets
from .errors import DegenerateFold, MalformedInstance, SchemaError, SingleClass
from .estimation import FitConfig, fit
from .model import PropensityWindow

DEFAULT_SEED = 2026

EXIT_OK, EXIT_CHECK, EXIT_SCHEMA, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("propirt")


def _fit_config(args) -> FitConfig:
    return FitConfig(theta_min=args.theta_min, theta_max=args.theta_max, grid_step=args.grid_step)


def cmd_fit(args) -> int:
    bank = data_io.load_item_bank(args.items)
    rows = data_io.load_outcomes(args.outcomes, bank)
    groups = defaultdict(list)
    for row in rows:
        dataset = str(bank[row.item_id].metadata.get("dataset", ""))
        groups[(row.agent_id, dataset, row.incitation)].append(row)
    config = _fit_config(args)
    results = []
    for key, members in groups.items():
        items = [bank[r.item_id].item for r in members]
        result = fit(items, [r.y for r in members], config)
        results.append((key, result))
        if result.at_boundary or not result.converged:
            log.warning("%s: theta_hat=%.4f at_boundary=%s converged=%s", key,
                        result.theta_hat, result.at_boundary, result.converged)
    data_io.write_fit_report(args.out, results)
    print(f"wrote {len(results)} fit(s) to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    dist = simulation.WindowDistribution(support=(args.support_min, args.support_max),
                                         count=args.n_items, seed=args.seed, a=args.a)
    windows = simulation.sample_windows(dist)
    ids = [f"w{k:05d}" for k in range(len(windows))]
    agent = simulation.SyntheticAgent(args.theta, args.agent)
    records = simulation.simulate_outcomes(agent, windows, seed=args.seed + 1, item_ids=ids)
    out = Path(args.out)
    bank = [data_io.ItemRecord(i, w, {"dataset": "synthetic"}) for i, w in zip(ids, windows)]
    data_io.write_item_bank(out / "items.jsonl", bank)
    data_io.write_outcomes(out / "outcomes.jsonl",
                           [data_io.OutcomeRow(args.agent, r.item_id, r.y) for r in records])
    print(f"wrote {len(windows)} items and outcomes to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    checks = simulation.validate_theorems(seed=args.seed)
    lines = []
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"{status}  {c.name:<28} worst={c.worst_deviation:.3e} tol={c.tolerance:.1e}"
                     + (f"  ({c.detail})" if c.detail else ""))
    n_fail = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - n_fail}/{len(checks)} checks passed")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        data_io.atomic_write(args.out, text)
    return EXIT_OK if n_fail == 0 else EXIT_CHECK


def cmd_assess(args) -> int:
    instances = data_io.load_instances(args.instances)
    config = AssessorConfig(n_folds=args.folds, min_samples_split=args.min_split,
                            n_trees=args.trees, seed=args.seed, include_width=args.include_width)
    sets = FEATURE_SETS if args.feature_set == "all" else (args.feature_set,)
    results = compare_feature_sets(instances, config, feature_sets=sets)
    text = data_io.comparison_table(results)
    if args.out:
        data_io.atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_annotate(args) -> int:
    bank = data_io.load_item_bank(args.items)
    rubric = Path(args.rubric).read_text(encoding="utf-8")
    requests, ids = [], []
    for item_id, rec in bank.items():
        meta = rec.metadata
        if "question_text" not in meta:
            raise SchemaError(0, "metadata.question_text", f"item {item_id!r} has no question text")
        requests.append(AnnotationRequest(
            propensity_name=meta.get("propensity_name", args.propensity),
            rubric_text=rubric,
            question_text=meta["question_text"],
            model_name=args.model,
        ))
        ids.append(item_id)
    cache = ResponseCache(args.cache) if args.cache else None
    client = ChatClient(args.endpoint, max_retries=args.retries, backoff=args.backoff) if args.endpoint else None
    try:
        results = annotate_batch(requests, client, args.concurrency, cache)
    finally:
        if client is not None:
            client.close()
    annotated, failures = [], []
    for item_id, res in zip(ids, results):
        if res.ok and res.window.radius < model.R_MIN:
            # a single-level answer cannot be fitted; keep the bank loadable
            failures.append({"id": item_id, "error_type": "DegenerateWindow",
                             "error": f"zero-width interval [{res.window.lower:g}, {res.window.upper:g}]"})
        elif res.ok:
            annotated.append(data_io.ItemRecord(item_id, res.window, bank[item_id].metadata))
        else:
            failures.append({"id": item_id, "error_type": res.error_type, "error": res.error})
    data_io.write_item_bank(args.out, annotated)
    if args.errors:
        data_io.atomic_write(args.errors, data_io.dumps_jsonl(failures))
    n_cached = sum(r.cached for r in results)
    print(f"annotated {len(annotated)}/{len(results)} items ({n_cached} from cache, "
          f"{len(failures)} failed)", file=sys.stderr)
    return EXIT_OK


def cmd_plot_data(args) -> int:
    if args.kind == "irc":
        window = PropensityWindow(args.b_l, args.b_u, args.a)
        lo = window.lower - 3 * max(1.0, window.radius)
        hi = window.upper + 3 * max(1.0, window.radius)
        thetas = lo + args.step * np.arange(int(round((hi - lo) / args.step)) + 1)
        inputs = {"window": window, "thetas": thetas}
    else:
        if args.outcomes and not args.items:
            raise ValueError("--outcomes needs --items")
        if args.items:
            bank = data_io.load_item_bank(args.items)
            windows = [r.item for r in bank.values() if isinstance(r.item, PropensityWindow)]
        else:
            dist = simulation.WindowDistribution(count=args.n_items, seed=args.seed, a=args.a)
            windows = simulation.sample_windows(dist)
        if args.kind == "surface":
            inputs = {"theta": args.theta, "windows": windows}
        else:
            if args.outcomes:
                rows = data_io.load_outcomes(args.outcomes)
                by_id = {r.item_id: r.y for r in rows}
                pairs = [(r.item, by_id[i]) for i, r in bank.items() if i in by_id
                         and isinstance(r.item, PropensityWindow)]
                windows = [w for w, _ in pairs]
                ys = [y for _, y in pairs]
            else:
                agent = simulation.SyntheticAgent(args.theta)
                ys = [r.y for r in simulation.simulate_outcomes(agent, windows, seed=args.seed + 1)]
            finite = [w for w in windows if not w.is_one_sided]
            lo = min((w.lower for w in finite), default=0.0)
            hi = max((w.upper for w in finite), default=0.0)
            xs = lo + args.step * np.arange(int(round((hi - lo) / args.step)) + 1)
            inputs = {"windows": windows, "outcomes": ys, "xs": xs}
    data_io.export_plot_data(args.kind, inputs, path=args.out)
    print(f"wrote {args.kind} data to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propirt", description="Two-sided propensity (2x2PL) and capability (2PL) measurement tools.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def seed(p):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help=f"random seed (default {DEFAULT_SEED})")

    def theta_bounds(p):
        p.add_argument("--theta-min", type=float, default=-10.0, help="lower search bound (default -10)")
        p.add_argument("--theta-max", type=float, default=10.0, help="upper search bound (default 10)")
        p.add_argument("--grid-step", type=float, default=0.05, help="initialisation grid step (default 0.05)")

    p = sub.add_parser("fit", help="estimate one latent trait per (agent, dataset, incitation)")
    p.add_argument("--items", required=True, help="item bank JSONL")
    p.add_argument("--outcomes", required=True, help="outcome JSONL")
    p.add_argument("--out", required=True, help="fit report CSV")
    theta_bounds(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="write a synthetic window bank and outcomes")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--theta", type=float, default=-1.5, help="true propensity (default -1.5)")
    p.add_argument("--n-items", type=int, default=1000, help="number of windows (default 1000)")
    p.add_argument("--support-min", type=float, default=-5.0, help="window support lower end (default -5)")
    p.add_argument("--support-max", type=float, default=5.0, help="window support upper end (default 5)")
    p.add_argument("--a", type=float, default=1.0, help="base discrimination (default 1)")
    p.add_argument("--agent", default="synthetic", help="agent id written to outcomes")
    seed(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="numerically check the response-curve theorems")
    p.add_argument("--out", help="also write the report here")
    seed(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("assess", help="cross-validated AUROC per feature set")
    p.add_argument("--instances", required=True, help="instance JSONL")
    p.add_argument("--out", help="comparison CSV")
    p.add_argument("--folds", type=int, default=10, help="number of CV folds (default 10)")
    p.add_argument("--trees", type=int, default=100, help="trees per forest (default 100)")
    p.add_argument("--min-split", type=int, default=50, help="minimum samples to split a node (default 50)")
    p.add_argument("--feature-set", default="all", choices=("all",) + FEATURE_SETS,
                   help="feature set to evaluate (default all three)")
    p.add_argument("--include-width", action="store_true", help="append window widths as extra features")
    seed(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("annotate", help="annotate propensity windows with a chat-completions model")
    p.add_argument("--items", required=True, help="item bank JSONL with metadata.question_text")
    p.add_argument("--rubric", required=True, help="rubric text file")
    p.add_argument("--propensity", default="", help="propensity name when items carry none")
    p.add_argument("--out", required=True, help="annotated item bank JSONL")
    p.add_argument("--errors", help="per-item failure JSONL")
    p.add_argument("--endpoint", help="chat-completions URL; API key from $PROPIRT_API_KEY")
    p.add_argument("--model", default="gpt-4.1", help="model name (default gpt-4.1)")
    p.add_argument("--concurrency", type=int, default=4, help="in-flight requests (default 4)")
    p.add_argument("--cache", help="response cache directory")
    p.add_argument("--retries", type=int, default=4, help="retries for transient failures (default 4)")
    p.add_argument("--backoff", type=float, default=1.0, help="initial backoff seconds (default 1)")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("plot-data", help="emit plot-ready CSV for curves, surfaces and collapse")
    p.add_argument("--kind", required=True, choices=("irc", "surface", "collapse"))
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--b-l", type=float, default=-2.0, help="irc: window lower bound (default -2)")
    p.add_argument("--b-u", type=float, default=4.0, help="irc: window upper bound (default 4)")
    p.add_argument("--a", type=float, default=1.0, help="base discrimination (default 1)")
    p.add_argument("--step", type=float, default=0.01, help="theta/x grid step (default 0.01)")
    p.add_argument("--theta", type=float, default=-1.5, help="surface/collapse: true propensity")
    p.add_argument("--n-items", type=int, default=1000, help="surface/collapse: synthetic windows")
    p.add_argument("--items", help="surface/collapse: item bank instead of synthetic windows")
    p.add_argument("--outcomes", help="collapse: observed outcomes for --items")
    seed(p)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SchemaError, DegenerateFold, SingleClass, MalformedInstance, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
