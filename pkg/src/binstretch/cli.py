"""Command-line front end.

Exit codes: 0 when a lower bound is found (or a file verifies), 1 when
none is found (or the file is rejected), 2 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .checker import check
from .core import GameParams, StructureError
from .dag import DotParseError, build_dag, dag_stats, emit_dot, parse_dot, tree_to_dag
from .hashing import DEFAULT_HASH_BITS, DEFAULT_SEED
from .search import HeuristicSwitches, SearchContext, SearchResult, sequential

EXIT_FOUND, EXIT_NOT_FOUND, EXIT_ERROR = 0, 1, 2
ENV_SEED = "BINSTRETCH_SEED"
ENV_WORKERS = "BINSTRETCH_WORKERS"

log = logging.getLogger("binstretch")


class UsageError(Exception):
    pass


@dataclass
class RunReport:
    params: GameParams
    verdict: str
    monotonicity: Optional[int] = None
    tree_nodes: Optional[int] = None
    dag_nodes: Optional[int] = None
    compressed_nodes: Optional[int] = None
    wall_time: float = 0.0
    seed: int = DEFAULT_SEED
    workers: int = 1
    extra: dict = field(default_factory=dict)

    def text(self) -> str:
        p = self.params
        ratio = f"{p.t}/{p.g}"
        lines = [f"{p.m} bins, ratio {ratio} ({p.t / p.g:.4f}): {self.verdict}"]
        if self.monotonicity is not None:
            lines.append(f"monotonicity: {self.monotonicity}")
        if self.dag_nodes is not None:
            lines.append(f"nodes: tree {self.tree_nodes}, dag {self.dag_nodes}, "
                         f"compressed dag {self.compressed_nodes}")
        lines.append(f"elapsed: {self.wall_time:.2f}s with {self.workers} worker(s), seed {self.seed}")
        return "\n".join(lines)

    def keyvalues(self) -> str:
        fields = {
            "m": self.params.m, "t": self.params.t, "g": self.params.g, "verdict": self.verdict,
            "monotonicity": "full" if self.monotonicity is None else self.monotonicity,
            "tree_nodes": self.tree_nodes, "dag_nodes": self.dag_nodes,
            "compressed_nodes": self.compressed_nodes, "seconds": f"{self.wall_time:.3f}",
            "seed": self.seed, "workers": self.workers,
        }
        fields.update(self.extra)
        return "\n".join(f"{k}={'' if v is None else v}" for k, v in fields.items())


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw, 0)
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {raw!r}") from None


def _parse_items(text: Optional[str]) -> list[int]:
    if not text:
        return []
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise UsageError(f"--initial expects comma-separated integers, got {text!r}") from None


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    mono = p.add_mutually_exclusive_group()
    mono.add_argument("--monotonicity", "-k", type=int, default=None,
                      help="restrict items to at least (previous item - k); default full generality")
    mono.add_argument("--iterate-monotonicity", action="store_true",
                      help="try k = 0, 1, ... and report the smallest k that wins")
    p.add_argument("--initial", default=None, help='fixed opening items, e.g. "5,1,1"')
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker threads (default 1, or ${ENV_WORKERS})")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                   help=f"Zobrist and eviction seed (default {DEFAULT_SEED:#x}, or ${ENV_SEED})")
    p.add_argument("--hash-bits", type=int, default=DEFAULT_HASH_BITS,
                   help="log2 of the cache sizes (default %(default)s)")
    p.add_argument("--no-gs", action="store_true", help="disable good situation pruning")
    p.add_argument("--no-large-item", action="store_true", help="disable the large item heuristic")
    p.add_argument("--no-five-nine", action="store_true", help="disable the five/nine heuristic")
    p.add_argument("--two-sided-cache", action="store_true",
                   help="also cache adversary wins (default caches algorithm wins only)")
    p.add_argument("--item-order", choices=("desc", "asc"), default="desc",
                   help="order in which the adversary tries items (default %(default)s)")
    p.add_argument("--task-depth", type=int, default=6, help="task frontier item count (parallel)")
    p.add_argument("--task-load-fraction", type=float, default=0.3,
                   help="task frontier volume as a fraction of g (parallel)")
    p.add_argument("--batch-size", type=int, default=300, help="tasks per batch (parallel)")
    p.add_argument("--time-limit", type=float, default=None,
                   help="stop after this many seconds and report an unknown verdict")
    p.add_argument("--progress-every", type=float, default=30.0,
                   help="seconds between progress lines in parallel runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="binstretch",
                                     description="Search for and verify lower bounds for online bin stretching.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", help="search for an adversary strategy")
    s.add_argument("--bins", "-m", type=int, required=True)
    s.add_argument("--target", "-t", type=int, required=True, help="load the adversary aims for")
    s.add_argument("--guarantee", "-g", type=int, required=True, help="offline bin capacity")
    s.add_argument("--output", "-o", default=None, help="write the strategy DAG here (DOT)")
    s.add_argument("--no-compress", action="store_true", help="keep forced item runs expanded")
    _add_engine_flags(s)

    v = sub.add_parser("verify", help="check a strategy DAG")
    v.add_argument("file")

    st = sub.add_parser("stats", help="print node and edge counts of a strategy DAG")
    st.add_argument("file")

    sw = sub.add_parser("sweep", help="search several ratios and print a summary table")
    sw.add_argument("--bins", "-m", type=int, required=True)
    sw.add_argument("--ratios", required=True, help='comma-separated t/g pairs, e.g. "19/14,22/16"')
    _add_engine_flags(sw)
    return parser


def _context(params: GameParams, args) -> tuple[SearchContext, int, int]:
    seed = args.seed if args.seed is not None else _env_int(ENV_SEED, DEFAULT_SEED)
    workers = args.workers if args.workers is not None else _env_int(ENV_WORKERS, 1)
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    if not 8 <= args.hash_bits <= 34:
        raise UsageError("--hash-bits must be between 8 and 34")
    if args.monotonicity is not None and args.monotonicity < 0:
        raise UsageError("--monotonicity must be non-negative")
    if args.time_limit is not None and args.time_limit <= 0:
        raise UsageError("--time-limit must be positive")
    switches = HeuristicSwitches(not args.no_gs, not args.no_large_item, not args.no_five_nine)
    ctx = SearchContext(params, args.monotonicity, seed=seed, hash_bits=args.hash_bits,
                        heuristics=switches, two_sided_cache=args.two_sided_cache,
                        item_order=args.item_order)
    return ctx, seed, workers


def _run(params: GameParams, args, ctx: SearchContext, workers: int, record: bool) -> SearchResult:
    prefix = _parse_items(args.initial)

    def once(c: SearchContext) -> SearchResult:
        if workers == 1:
            return sequential(params, c, prefix, record, args.time_limit)
        from .parallel import TaskThresholds, parallel_search

        thresholds = TaskThresholds(args.task_depth, args.task_load_fraction)

        def progress(info: dict) -> None:
            log.info("progress %s", " ".join(f"{k}={v}" for k, v in info.items()))

        return parallel_search(params, c, workers, thresholds, prefix, record, args.batch_size,
                               progress, args.progress_every, args.time_limit)

    if not args.iterate_monotonicity:
        return once(ctx)
    result = SearchResult(False)
    for k in range(params.g):
        ctx.set_monotonicity(k)
        log.info("trying monotonicity %d", k)
        result = once(ctx)
        if not result.complete:
            return result
        if result.found:
            result.monotonicity = k
            return result
    result.monotonicity = None
    return result


def cmd_search(args) -> int:
    try:
        params = GameParams(args.bins, args.target, args.guarantee)
    except StructureError as exc:
        raise UsageError(str(exc)) from None
    ctx, seed, workers = _context(params, args)
    t0 = time.monotonic()
    result = _run(params, args, ctx, workers, record=args.output is not None)
    verdict = "found" if result.found else "not found"
    if not result.complete:
        verdict = "unknown (time limit)"
    report = RunReport(params, verdict,
                       result.monotonicity if result.found and result.monotonicity != -1 else None,
                       seed=seed, workers=workers)
    report.extra.update({k: v for k, v in result.stats.items()
                         if k in ("adv_nodes", "alg_nodes", "tasks", "tasks_pruned")})
    if result.found and result.tree is not None:
        dag = tree_to_dag(result.tree, params)
        final = build_dag(result.tree, params, compress=not args.no_compress)
        report.tree_nodes = result.tree.tree_size()
        report.dag_nodes = len(dag)
        report.compressed_nodes = len(final)
        text = emit_dot(final)
        try:
            with open(args.output, "w", encoding="ascii", newline="\n") as fh:
                fh.write(text)
            with open(args.output, encoding="ascii") as fh:
                written = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot write {args.output}: {exc}") from None
        verdict = check(parse_dot(written))
        if not verdict.accepted:
            print(f"internal error: emitted strategy fails verification: {verdict}", file=sys.stderr)
            return EXIT_ERROR
        report.extra["self_check"] = "accepted"
    report.wall_time = time.monotonic() - t0
    print(report.text())
    print(report.keyvalues())
    return EXIT_FOUND if result.found else EXIT_NOT_FOUND


def _read(path: str):
    try:
        with open(path, encoding="ascii") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    try:
        return parse_dot(text)
    except (DotParseError, StructureError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_verify(args) -> int:
    dag = _read(args.file)
    verdict = check(dag)
    p = dag.params
    if verdict.accepted:
        print(f"{args.file}: accepted, lower bound {p.t}/{p.g} for {p.m} bins")
        return EXIT_FOUND
    print(f"{args.file}: {verdict}", file=sys.stderr)
    return EXIT_NOT_FOUND


def cmd_stats(args) -> int:
    dag = _read(args.file)
    s = dag_stats(dag)
    p = dag.params
    print(f"m={p.m} t={p.t} g={p.g}")
    for k, v in s.as_dict().items():
        print(f"{k}={v}")
    return EXIT_FOUND


def cmd_sweep(args) -> int:
    pairs = []
    for part in args.ratios.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            t, g = (int(x) for x in part.split("/"))
        except ValueError:
            raise UsageError(f"bad ratio {part!r}; expected t/g") from None
        pairs.append((t, g))
    if not pairs:
        raise UsageError("--ratios is empty")
    print(f"{'Fraction':>10} {'Decimal':>8} {'L. b.':>6} {'Mon.':>5} {'Time':>9}")
    for t, g in pairs:
        try:
            params = GameParams(args.bins, t, g)
        except StructureError as exc:
            raise UsageError(str(exc)) from None
        ctx, _, workers = _context(params, args)
        t0 = time.monotonic()
        result = _run(params, args, ctx, workers, record=False)
        mono = "" if not result.found else ("full" if result.monotonicity in (None, -1)
                                            else str(result.monotonicity))
        answer = "Yes" if result.found else ("No" if result.complete else "?")
        print(f"{f'{t}/{g}':>10} {float(Fraction(t, g)):>8.4f} {answer:>6} "
              f"{mono:>5} {time.monotonic() - t0:>8.2f}s", flush=True)
    return EXIT_FOUND


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_FOUND
    level = logging.WARNING if args.verbose == 0 else (logging.INFO if args.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"search": cmd_search, "verify": cmd_verify, "stats": cmd_stats, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (StructureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
