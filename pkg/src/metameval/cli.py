"""Command-line entry point: ``metameval <subcommand> ...``.

Exit status: 0 on success, 1 on usage errors, 2 on data or validation
errors. Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import warnings
from pathlib import Path
from typing import Sequence

from .core import AnnotatedDataset, MetaEvalError, PartitionSolution, validate_assignment, validate_dataset
from .ingest import (
    export_scores,
    load_dataset,
    parse_assignment,
    parse_mqm_tsv,
    parse_scores_tsv,
    save_dataset,
)
from .partition import brute_force_partition, restrict_dataset, solve_partition
from .protocols import SeverityWeights, assemble_evaluator, get_protocol, load_weights_config
from .significance import GRANULARITIES, RankConfig, RankingReport, parse_measures, rank_table
from .synth import SynthConfig, gen_dataset

log = logging.getLogger("metameval")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metameval", description="Rank MT evaluators, human and automatic, against a gold evaluator.")
    p.add_argument("--config", help="key = value config file; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--log", help="append timestamped diagnostics to this file")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    s = sub.add_parser("ingest", help="validate score files and write a canonical dataset directory")
    s.add_argument("--scores", action="append", default=[], help="scores.tsv (repeatable)")
    s.add_argument("--out", help="output directory")
    s.add_argument("--testset", default=None)
    s.add_argument("--langpair", default="")

    s = sub.add_parser("partition", help="split raters into k independent groups")
    s.add_argument("--assign", help="assign.tsv")
    s.add_argument("--k", type=int)
    s.add_argument("--out", help="partition.json")
    s.add_argument("--total-partition", action="store_true", help="every rater must join a group")
    s.add_argument("--solver", choices=("bnb", "brute"), default="bnb")

    s = sub.add_parser("score", help="build composite evaluators from a rater partition")
    s.add_argument("--protocol", help="MQM, ESA, pSQM or DA+SQM")
    s.add_argument("--annotations", help="spans.tsv for MQM, scores.tsv keyed by rater otherwise")
    s.add_argument("--assign", help="assign.tsv")
    s.add_argument("--partition", help="partition.json")
    s.add_argument("--out", help="output scores.tsv")
    s.add_argument("--prefix", default=None, help="evaluator name prefix (default: protocol name)")
    s.add_argument("--systems", type=_csv, default=None)
    s.add_argument("--weights", help="severity weight config file")
    s.add_argument("--weight", action="append", default=[], metavar="SEV[.CATEGORY]=W",
                   help="severity weight override (repeatable)")

    s = sub.add_parser("rank", help="rank evaluators against a gold evaluator")
    s.add_argument("--data", help="dataset directory (scores.tsv, optional meta.json)")
    s.add_argument("--gold")
    s.add_argument("--human", type=_csv, default=[])
    s.add_argument("--evaluators", type=_csv, default=None, help="evaluators to rank (default: all but gold)")
    s.add_argument("--measure", default="spa,acc-eq")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--perm", type=int, default=1000, help="PERM-BOTH permutations")
    s.add_argument("--spa-perm", type=int, default=None, help="permutations behind SPA p-values (default: --perm)")
    s.add_argument("--seed", type=int)
    s.add_argument("--eps-gold", type=float, default=0.0)
    s.add_argument("--swap", choices=GRANULARITIES, default="item")
    s.add_argument("--smoothing", type=float, default=1.0)
    s.add_argument("--partition", help="partition.json; keep only its retained segments")
    s.add_argument("--no-restrict", action="store_true",
                   help="fail instead of dropping segments not covered by every evaluator")
    s.add_argument("--format", choices=("tsv", "markdown", "json"), default="markdown")
    s.add_argument("--out", default="-")

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--segments", type=int, default=200)
    s.add_argument("--systems", type=int, default=10)
    s.add_argument("--noise", type=lambda t: tuple(float(x) for x in _csv(t)), default=(0.1, 0.5, 1.0))
    s.add_argument("--bins", type=lambda t: tuple(int(x) for x in _csv(t)), default=(0,))
    s.add_argument("--gold-bins", type=int, default=0)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")

    s = sub.add_parser("report", help="re-render a JSON ranking report")
    s.add_argument("--in", dest="input")
    s.add_argument("--format", choices=("tsv", "markdown", "json"), default="markdown")
    s.add_argument("--out", default="-")
    return p


def _read_config(path: str) -> dict[str, str]:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string("[config]\n" + Path(path).read_text(encoding="utf-8"))
    return dict(parser["config"].items())


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str], settings: dict[str, str]) -> None:
    """Turn config entries into subparser defaults so flags still win."""
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sub in sub_action.choices.values():
        defaults = {}
        for action in sub._actions:
            key = action.dest.replace("_", "-")
            for name in (key, action.dest):
                if name in settings and action.dest != "help":
                    raw = settings[name]
                    if action.type is not None and action.type is not str:
                        value = action.type(raw)
                    elif isinstance(action, argparse._StoreTrueAction):
                        value = raw.strip().lower() in ("1", "true", "yes", "on")
                    elif isinstance(action, argparse._AppendAction):
                        value = [raw]
                    else:
                        value = raw
                    defaults[action.dest] = value
                    break
        sub.set_defaults(**defaults)


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise UsageError(f"{args.command}: missing required argument(s) {', '.join(missing)}")


def _inputs_exist(*paths):
    for path in paths:
        if path is not None and not Path(path).exists():
            raise FileNotFoundError(f"input not found: {path}")


def _write_output(path: str, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def cmd_ingest(args, settings) -> int:
    _require(args, "out")
    if not args.scores:
        raise UsageError("ingest: at least one --scores file is required")
    _inputs_exist(*args.scores)
    tables = []
    for path in args.scores:
        tables.extend(parse_scores_tsv(_read(path)))
    names = [t.evaluator_id for t in tables]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise MetaEvalError(f"evaluators defined in more than one file: {dup}")
    dataset = AnnotatedDataset.from_tables(
        tables, testset_id=args.testset or Path(args.out).name, langpair=args.langpair
    )
    violations = validate_dataset(dataset)
    for v in violations:
        log.error(v)
    if violations:
        return EXIT_DATA
    save_dataset(dataset, args.out)
    log.info("wrote %d evaluators, %d systems, %d segments to %s",
             len(tables), len(dataset.systems), len(dataset.segments), args.out)
    return EXIT_OK


def cmd_partition(args, settings) -> int:
    _require(args, "assign", "k", "out")
    _inputs_exist(args.assign)
    assignment = parse_assignment(_read(args.assign))
    for v in validate_assignment(assignment):
        log.warning(v)
    solver = brute_force_partition if args.solver == "brute" else solve_partition
    solution = solver(assignment, args.k, total=args.total_partition)
    log.info("retained %d of %d segments", solution.objective, len(assignment.covers))
    _write_output(args.out, json.dumps(solution.to_json(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_score(args, settings) -> int:
    _require(args, "protocol", "annotations", "assign", "partition", "out")
    _inputs_exist(args.annotations, args.assign, args.partition, args.weights)
    protocol = get_protocol(args.protocol)
    assignment = parse_assignment(_read(args.assign))
    solution = PartitionSolution.from_json(json.loads(_read(args.partition)))
    weights = SeverityWeights()
    weight_settings = {k: v for k, v in settings.items() if k.startswith("severity.weights.")}
    if weight_settings:
        weights = weights.updated(weight_settings)
    if args.weights:
        weights = load_weights_config(_read(args.weights), weights)
    if args.weight:
        pairs = {}
        for item in args.weight:
            key, sep, value = item.partition("=")
            if not sep:
                raise UsageError(f"--weight expects SEV[.CATEGORY]=W, got {item!r}")
            pairs[key] = value
        weights = weights.updated(pairs)
    if protocol.scalar:
        annotations = {t.evaluator_id: t for t in parse_scores_tsv(_read(args.annotations))}
    else:
        annotations = parse_mqm_tsv(_read(args.annotations))
    prefix = args.prefix or protocol.name
    tables = [
        assemble_evaluator(
            group, annotations, assignment, solution.retained_segments,
            systems=args.systems, evaluator_id=f"{prefix}-{i}", weights=weights,
            protocol=protocol if protocol.scalar else None,
        )
        for i, group in enumerate(solution.canonical_groups(), start=1)
    ]
    _write_output(args.out, export_scores(tables))
    return EXIT_OK


def cmd_rank(args, settings) -> int:
    _require(args, "data", "gold", "seed")
    _inputs_exist(args.data, args.partition)
    try:
        measures = parse_measures(args.measure)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dataset = load_dataset(args.data)
    evaluators = args.evaluators or [e for e in dataset.evaluators if e != args.gold]
    solution = None
    if args.partition:
        solution = PartitionSolution.from_json(json.loads(_read(args.partition)))
    if not args.no_restrict:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            dataset = restrict_dataset(dataset, solution, [args.gold, *evaluators])
        for w in caught:
            log.warning("%s", w.message)
        if not dataset.segments:
            raise MetaEvalError("no segment is scored by every evaluator")
    elif solution is not None:
        dataset = restrict_dataset(dataset, solution)
    log.info("ranking %d evaluators on %d segments x %d systems",
             len(evaluators), len(dataset.segments), len(dataset.systems))
    config = RankConfig(
        seed=args.seed,
        measures=measures,
        alpha=args.alpha,
        n_perm=args.perm,
        spa_perm=args.spa_perm or args.perm,
        eps_gold=args.eps_gold,
        granularity=args.swap,
        smoothing=args.smoothing,
        threads=max(1, int(os.environ.get("METAMEVAL_THREADS", "1") or 1)),
    )
    report = rank_table(dataset, args.gold, args.human, measures, config, evaluators=evaluators)
    _write_output(args.out, _render(report, args.format))
    return EXIT_OK


def _render(report: RankingReport, fmt: str) -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "tsv":
        return report.to_tsv()
    return report.to_markdown()


def cmd_synth(args, settings) -> int:
    _require(args, "seed", "out")
    config = SynthConfig(
        n_segments=args.segments, n_systems=args.systems, noise_sd=args.noise,
        bins=args.bins, seed=args.seed, gold_bins=args.gold_bins,
    )
    save_dataset(gen_dataset(config), args.out)
    return EXIT_OK


def cmd_report(args, settings) -> int:
    _require(args, "input")
    _inputs_exist(args.input)
    report = RankingReport.from_json(_read(args.input))
    _write_output(args.out, _render(report, args.format))
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "partition": cmd_partition,
    "score": cmd_score,
    "rank": cmd_rank,
    "synth": cmd_synth,
    "report": cmd_report,
}


def _setup_logging(verbose: bool, log_file: str | None) -> None:
    root = logging.getLogger("metameval")
    root.handlers.clear()
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False
    err = logging.StreamHandler(sys.stderr)
    err.setFormatter(logging.Formatter("metameval: %(levelname)s: %(message)s"))
    err.setLevel(logging.DEBUG if verbose else logging.WARNING)
    root.addHandler(err)
    if log_file:
        fh = logging.FileHandler(log_file, encoding="utf-8")
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(fh)


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre, _ = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    settings: dict[str, str] = {}
    if pre.config:
        try:
            settings = _read_config(pre.config)
            _apply_config(parser, argv, settings)
        except (OSError, configparser.Error, ValueError) as exc:
            print(f"metameval: error: bad config {pre.config}: {exc}", file=sys.stderr)
            return EXIT_DATA
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("metameval: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    _setup_logging(args.verbose, args.log)
    try:
        return COMMANDS[args.command](args, settings)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"metameval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MetaEvalError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"metameval: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
