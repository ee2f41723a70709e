"""Command-line pipeline: generate -> inject -> ingest -> detect /
baseline -> eval, plus bench (scaling runs) and savings (reissue
policy replay).

Every command writes into an output directory together with a
manifest.json recording the package version, resolved flags, seeds,
and SHA-256 digests of the inputs.  Exit codes: 0 success, 1 usage
error, 2 data error, 3 non-convergence under --strict.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, baselines, detector, engine, evaluate, report
from .graph import (DEFAULT_SCHEMA, BipartiteGraph, ColumnSchema, DataError,
                    IngestStats, build_graph, ingest_transactions)
from .synth import (GeneratorConfig, GroundTruth, InjectionConfig,
                    InjectionError, generate_corpus, inject_pocs,
                    random_bipartite_graph)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NOT_CONVERGED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def _params(args) -> dict:
    return {k: v for k, v in vars(args).items()
            if k not in ("func", "needs_seed", "config")}


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class OutputDir:
    """Collects files written by one command; removes them on failure."""

    def __init__(self, path: str):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.created: list[Path] = []

    def file(self, name: str) -> Path:
        p = self.path / name
        self.created.append(p)
        return p

    def cleanup(self) -> None:
        for p in self.created:
            p.unlink(missing_ok=True)

    def write_manifest(self, command: str, params: dict,
                       inputs: dict[str, str]) -> None:
        manifest = {
            "tool": "pocfinder",
            "version": __version__,
            "command": command,
            "params": params,
            "inputs": {name: {"path": str(path), "sha256": _sha256(Path(path))}
                       for name, path in inputs.items()},
        }
        self.file("manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config(path: str) -> dict[str, str]:
    config = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"bad config line (expected key=value): {raw!r}")
        key, _, value = line.partition("=")
        config[key.strip().replace("-", "_")] = value.strip()
    return config


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser,
                  argv_flags: set[str]) -> None:
    """Config file values override defaults but never explicit flags."""
    if not getattr(args, "config", None):
        return
    config = _load_config(args.config)
    for action in parser._actions:
        dest = action.dest
        if dest in ("help", "config") or dest not in config:
            continue
        if any(opt.lstrip("-").replace("-", "_") == dest
               for opt in action.option_strings) and dest in argv_flags:
            continue
        raw = config.pop(dest)
        if action.type is not None:
            try:
                value = action.type(raw)
            except ValueError as exc:
                raise UsageError(f"config {dest}: {exc}")
        elif isinstance(action.const, bool) or isinstance(
                getattr(args, dest, None), bool):
            value = raw.lower() in ("1", "true", "yes")
        else:
            value = raw
        setattr(args, dest, value)


def write_locations_csv(path: Path, rows) -> None:
    """rows: (location_key, score, z, n_neighbors, n_fraud_neighbors)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location_key", "theta", "z", "n_neighbors",
                         "n_fraud_neighbors"])
        for key, theta, z, n, f in rows:
            writer.writerow([key, _fmt(theta), _fmt(z), n, f])


def read_locations_csv(path: Path) -> list[tuple[str, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "location_key" not in reader.fieldnames:
            raise DataError(f"{path}: not a locations CSV")
        return [(row["location_key"], float(row["theta"])) for row in reader]


def _detector_rows(graph: BipartiteGraph, theta, z):
    degrees = graph.location_degrees()
    fraud_counts = graph.fraud_neighbor_counts()
    order = np.lexsort((np.arange(len(theta)), -np.asarray(theta)))
    return [(graph.location_keys[j], theta[j], z[j], int(degrees[j]),
             int(fraud_counts[j])) for j in order]


def write_corpus_csv(path: Path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["card_id", "terminal_id", "timestamp", "amount",
                         "is_fraud"])
        for rec in records:
            writer.writerow([rec.card_id, rec.terminal_id, rec.timestamp,
                             rec.amount, int(rec.is_fraud)])


def _read_corpus(path: Path, args) -> tuple[list, IngestStats]:
    schema = ColumnSchema(
        card=getattr(args, "col_card", DEFAULT_SCHEMA.card),
        terminal=getattr(args, "col_terminal", DEFAULT_SCHEMA.terminal),
        timestamp=getattr(args, "col_timestamp", DEFAULT_SCHEMA.timestamp),
        amount=getattr(args, "col_amount", DEFAULT_SCHEMA.amount),
        fraud=getattr(args, "col_fraud", DEFAULT_SCHEMA.fraud))
    stats = IngestStats()
    policy = "skip" if getattr(args, "skip_bad_rows", False) else "abort"
    with open(path, newline="") as fh:
        records = list(ingest_transactions(fh, schema, policy, stats))
    return records, stats


# --- subcommands ---------------------------------------------------------


def cmd_generate(args, out: OutputDir) -> int:
    config = GeneratorConfig(
        num_cards=args.cards, num_terminals=args.terminals, weeks=args.weeks,
        transactions_per_card=args.txn_mean,
        terminal_popularity=args.zipf, amount_median=args.amount_median,
        amount_sigma=args.amount_sigma, seed=args.seed)
    records = generate_corpus(config)
    write_corpus_csv(out.file("transactions.csv"), records)
    out.write_manifest("generate", _params(args), {})
    print(f"wrote {len(records)} transactions to "
          f"{out.path / 'transactions.csv'}")
    return EXIT_OK


def cmd_inject(args, out: OutputDir) -> int:
    records, _ = _read_corpus(Path(args.input), args)
    injection = InjectionConfig(
        num_pocs=args.pocs, steal_probability=args.p,
        noise_multiplier=args.noise, seed=args.seed,
        min_bucket_cards=args.min_bucket_cards)
    labeled, truth = inject_pocs(records, injection)
    write_corpus_csv(out.file("transactions.csv"), labeled)
    out.file("ground_truth.json").write_text(truth.to_json() + "\n")
    out.write_manifest("inject", _params(args),
                       {"input": args.input})
    fraud_cards = sum(1 for c in truth.culprits.values())
    print(f"injected {len(truth.injected_pocs)} POCs, "
          f"{fraud_cards} fraud-cards")
    return EXIT_OK


def cmd_ingest(args, out: OutputDir) -> int:
    records, stats = _read_corpus(Path(args.input), args)
    graph = build_graph(records, min_fraud_cards=args.min_fraud_cards)
    graph.save(out.file("graph.pocg"))
    summary = graph.stats() | {"rows_read": stats.rows_read,
                               "rows_skipped": stats.rows_skipped}
    out.file("stats.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    out.write_manifest("ingest", _params(args),
                       {"input": args.input})
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _worker_count(args) -> int:
    if args.workers is not None:
        return args.workers
    return int(os.environ.get("POCFINDER_WORKERS", "1"))


def cmd_detect(args, out: OutputDir) -> int:
    graph = BipartiteGraph.load(args.graph)
    prior = detector.PriorParams(alpha=args.alpha, beta=args.beta,
                                 epsilon=args.epsilon,
                                 max_iterations=args.max_iterations)
    workers = _worker_count(args)
    timings: list[engine.StepTiming] = []
    result = engine.run(graph, prior, num_workers=workers, timings=timings)
    z = detector.blame_totals(result.blames, graph)
    write_locations_csv(out.file("locations.csv"),
                        _detector_rows(graph, result.theta, z))
    with open(out.file("convergence.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "l1_residual"])
        for it, residual in evaluate.convergence_rows(result.residuals):
            writer.writerow([it, _fmt(residual)])
    with open(out.file("timing.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "superstep", "worker_count", "millis"])
        for t in timings:
            writer.writerow([t.iteration, t.superstep, t.worker_count,
                             _fmt(t.millis)])
    report.plot_convergence(result.residuals, out.file("convergence.png"))
    if args.blames:
        with open(out.file("blames.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["card_id", "location_key", "blame"])
            for e in range(graph.num_edges):
                if result.blames[e] >= args.min_blame:
                    writer.writerow([
                        graph.card_ids[graph.card_of_edge[e]],
                        graph.location_keys[graph.card_indices[e]],
                        _fmt(result.blames[e])])
    out.write_manifest("detect", _params(args),
                       {"graph": args.graph})
    status = "converged" if result.converged else "NOT converged"
    print(f"{status} after {result.iterations} iterations "
          f"(last residual {result.residuals[-1]:.3g})")
    if args.strict and not result.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_baseline(args, out: OutputDir) -> int:
    graph = BipartiteGraph.load(args.graph)
    prior = detector.PriorParams(alpha=args.alpha, beta=args.beta)
    if args.method == "ratio":
        ranked = baselines.ratio_score(graph)
    elif args.method == "ratio-prior":
        ranked = baselines.ratio_prior_score(graph, prior)
    elif args.method == "vertex-cover":
        ranked = baselines.greedy_vertex_cover(graph)
    elif args.method == "fabp":
        coupling = (baselines.safe_coupling(graph)
                    if args.homophily == "auto" else float(args.homophily))
        ranked = baselines.linearized_bp_score(graph, coupling)
    else:
        raise UsageError(f"unknown method {args.method!r}")
    degrees = graph.location_degrees()
    fraud_counts = graph.fraud_neighbor_counts()
    rows = [(graph.location_keys[j], score, 0.0, int(degrees[j]),
             int(fraud_counts[j])) for j, score in ranked]
    write_locations_csv(out.file("locations.csv"), rows)
    out.write_manifest("baseline", _params(args),
                       {"graph": args.graph})
    print(f"ranked {len(rows)} locations with {args.method}")
    return EXIT_OK


def cmd_eval(args, out: OutputDir) -> int:
    truth = GroundTruth.from_json(Path(args.truth).read_text())
    positives = set(truth.injected_pocs)
    rankings = {}
    for spec_item in args.ranking:
        name, _, path = spec_item.partition("=")
        if not path:
            raise UsageError(
                f"--ranking expects NAME=PATH, got {spec_item!r}")
        rankings[name] = read_locations_csv(Path(path))
    summary = {}
    pr_curves, roc_curves = {}, {}
    for name, ranking in rankings.items():
        result = evaluate.score_ranking(ranking, positives)
        summary[name] = {"auc": result.auc,
                         "average_precision": result.average_precision}
        pr_curves[name] = result.pr
        roc_curves[name] = result.roc
        for kind in ("roc", "pr"):
            with open(out.file(f"{kind}_{name}.csv"), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["threshold", "tp", "fp", "precision",
                                 "recall", "fpr"])
                for p in result.roc:
                    writer.writerow([_fmt(p.threshold), p.tp, p.fp,
                                     _fmt(p.precision), _fmt(p.recall),
                                     _fmt(p.fpr)])
    out.file("summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    report.plot_pr_curves(pr_curves, out.file("pr_curves.png"))
    report.plot_roc_curves(roc_curves, out.file("roc_curves.png"))
    inputs = {"truth": args.truth}
    for spec_item in args.ranking:
        name, _, path = spec_item.partition("=")
        inputs[f"ranking_{name}"] = path
    out.write_manifest("eval", _params(args), inputs)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_bench(args, out: OutputDir) -> int:
    edge_counts = [int(e) for e in args.edges.split(",")]
    worker_counts = [int(w) for w in args.workers_list.split(",")]
    prior = detector.PriorParams(max_iterations=args.iterations,
                                 epsilon=1e-300)
    summary_rows = []
    with open(out.file("timing.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["edges", "iteration", "superstep", "worker_count",
                         "millis"])
        for edges in edge_counts:
            graph = random_bipartite_graph(
                num_cards=max(edges // 25, 10),
                num_locations=max(edges // 10, 10),
                num_edges=edges, fraud_fraction=0.1, seed=args.seed)
            for workers in worker_counts:
                timings: list[engine.StepTiming] = []
                engine.run(graph, prior, num_workers=workers,
                           timings=timings)
                for t in timings:
                    writer.writerow([graph.num_edges, t.iteration,
                                     t.superstep, t.worker_count,
                                     _fmt(t.millis)])
                per_iter = {}
                for t in timings:
                    per_iter[t.iteration] = per_iter.get(t.iteration, 0.0) \
                        + t.millis / 1e3
                steady = [v for it, v in sorted(per_iter.items()) if it >= 1]
                summary_rows.append((graph.num_edges, workers,
                                     float(np.median(steady))))
    with open(out.file("scaling.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["edges", "worker_count", "seconds_per_iteration"])
        for edges, workers, secs in summary_rows:
            writer.writerow([edges, workers, _fmt(secs)])
    report.plot_scaling(summary_rows, out.file("scaling.png"))
    out.write_manifest("bench", _params(args), {})
    print(f"benchmarked {len(edge_counts)} graph sizes x "
          f"{len(worker_counts)} worker counts")
    return EXIT_OK


def weekly_theta(records, prior, min_fraud_cards):
    """Detector thetas keyed by week, using only data up to each week's
    end (no lookahead)."""
    from .graph import bucketize
    weeks = sorted({bucketize(r).week_index for r in records})
    out = {}
    for week in weeks:
        subset = [r for r in records if bucketize(r).week_index <= week]
        try:
            graph = build_graph(subset, min_fraud_cards=min_fraud_cards)
        except DataError:
            out[week] = {}
            continue
        result = detector.run(graph, prior)
        out[week] = {graph.location_keys[j]: float(t)
                     for j, t in enumerate(result.theta)}
    return out


def cmd_savings(args, out: OutputDir) -> int:
    records, _ = _read_corpus(Path(args.transactions), args)
    prior = detector.PriorParams(alpha=args.alpha, beta=args.beta)
    theta_by_week = weekly_theta(records, prior, args.min_fraud_cards)
    policy = evaluate.SavingsPolicy(theta_threshold=args.threshold,
                                    reissue_cost=args.reissue_cost)
    result = evaluate.savings_simulation(theta_by_week, records, policy)
    with open(out.file("savings.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["week", "cards_reissued", "reissue_cost",
                         "fraud_prevented", "net"])
        for w in result.weeks:
            writer.writerow([w.week, w.cards_reissued, w.reissue_cost,
                             w.fraud_prevented, w.net])
    out.file("savings.json").write_text(json.dumps(
        {"total_net": result.total_net,
         "weeks": len(result.weeks)}, indent=2, sort_keys=True) + "\n")
    report.plot_savings(result.weeks, out.file("savings.png"))
    out.write_manifest("savings", _params(args),
                       {"transactions": args.transactions})
    print(f"total net savings: {result.total_net}")
    return EXIT_OK


# --- parser --------------------------------------------------------------


def _add_schema_flags(p):
    p.add_argument("--col-card", default=DEFAULT_SCHEMA.card)
    p.add_argument("--col-terminal", default=DEFAULT_SCHEMA.terminal)
    p.add_argument("--col-timestamp", default=DEFAULT_SCHEMA.timestamp)
    p.add_argument("--col-amount", default=DEFAULT_SCHEMA.amount)
    p.add_argument("--col-fraud", default=DEFAULT_SCHEMA.fraud)
    p.add_argument("--skip-bad-rows", action="store_true",
                   help="skip and count malformed rows instead of aborting")


def _add_prior_flags(p):
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--beta", type=float, default=15.0)


def build_parser() -> _Parser:
    parser = _Parser(prog="pocfinder",
                     description="Point-of-Compromise detection pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-o", "--out-dir", required=True)
        p.add_argument("--config", help="key=value config file "
                       "(flags take precedence)")

    p = sub.add_parser("generate", help="generate a clean synthetic corpus")
    p.add_argument("--cards", type=int, default=20_000)
    p.add_argument("--terminals", type=int, default=2_000)
    p.add_argument("--weeks", type=int, default=26)
    p.add_argument("--txn-mean", type=float, default=16.0)
    p.add_argument("--zipf", type=float, default=1.1)
    p.add_argument("--amount-median", type=int, default=2_500)
    p.add_argument("--amount-sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_generate, needs_seed=True)

    p = sub.add_parser("inject", help="inject ground-truth POCs")
    p.add_argument("--input", required=True)
    p.add_argument("--pocs", type=int, default=20)
    p.add_argument("--p", type=float, default=0.1,
                   help="stealing probability")
    p.add_argument("--noise", type=float, default=0.0,
                   help="noise fraud-card multiplier (1.0 doubles)")
    p.add_argument("--min-bucket-cards", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    _add_schema_flags(p)
    common(p)
    p.set_defaults(func=cmd_inject, needs_seed=True)

    p = sub.add_parser("ingest", help="build the bipartite graph snapshot")
    p.add_argument("--input", required=True)
    p.add_argument("--min-fraud-cards", type=int, default=5)
    _add_schema_flags(p)
    common(p)
    p.set_defaults(func=cmd_ingest, needs_seed=False)

    p = sub.add_parser("detect", help="run the alternating detector")
    p.add_argument("--graph", required=True)
    _add_prior_flags(p)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--workers", type=int, default=None,
                   help="engine worker count (default POCFINDER_WORKERS or 1)")
    p.add_argument("--strict", action="store_true",
                   help="exit 3 if the run does not converge")
    p.add_argument("--blames", action="store_true",
                   help="also write the per-edge blame CSV")
    p.add_argument("--min-blame", type=float, default=0.0)
    common(p)
    p.set_defaults(func=cmd_detect, needs_seed=False)

    p = sub.add_parser("baseline", help="run a comparison ranker")
    p.add_argument("--graph", required=True)
    p.add_argument("--method", required=True,
                   choices=["ratio", "ratio-prior", "vertex-cover", "fabp"])
    _add_prior_flags(p)
    p.add_argument("--homophily", default="auto",
                   help="belief coupling strength, or 'auto'")
    common(p)
    p.set_defaults(func=cmd_baseline, needs_seed=False)

    p = sub.add_parser("eval", help="score rankings against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--ranking", action="append", required=True,
                   metavar="NAME=PATH")
    common(p)
    p.set_defaults(func=cmd_eval, needs_seed=False)

    p = sub.add_parser("bench", help="scaling benchmark over graph sizes")
    p.add_argument("--edges", default="100000,300000,1000000,3000000")
    p.add_argument("--workers", dest="workers_list", default="1")
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_bench, needs_seed=False)

    p = sub.add_parser("savings", help="weekly reissue policy simulation")
    p.add_argument("--transactions", required=True)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--reissue-cost", type=int, default=1000)
    p.add_argument("--min-fraud-cards", type=int, default=5)
    _add_prior_flags(p)
    _add_schema_flags(p)
    common(p)
    p.set_defaults(func=cmd_savings, needs_seed=False)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        argv_flags = {a.lstrip("-").split("=")[0].replace("-", "_")
                      for a in argv if a.startswith("--")}
        subparser = next(
            (sp for sp in parser._subparsers._group_actions[0].choices.values()
             if sp.get_default("func") is args.func), parser)
        _apply_config(args, subparser, argv_flags)
        if args.needs_seed and args.seed is None:
            raise UsageError(
                f"{args.command} requires an explicit --seed "
                "(reproducibility-first)")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = OutputDir(args.out_dir)
    try:
        return args.func(args, out)
    except UsageError as exc:
        out.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InjectionError, evaluate.EvalError,
            baselines.DivergenceError, FileNotFoundError, ValueError) as exc:
        out.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
