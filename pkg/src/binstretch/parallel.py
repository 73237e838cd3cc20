"""Coordinator/worker evaluation of the game tree.

The coordinator expands the game from the start configuration(s) down to
a task frontier: the first adversary vertex on each branch whose items
reach a volume threshold or a count threshold becomes a task. Tasks are
deduplicated by configuration and handed to workers in batches.

Workers are threads, each with a private :class:`SearchContext` sharing
the two caches with the others. The search kernel releases the GIL, so
workers run truly in parallel. Messages travel over in-process queues:

* coordinator -> worker: ``("assign", [task ids])`` or ``("shutdown",)``
* worker -> coordinator: ``("result", worker, task id, winner)``,
  ``("idle", worker)`` after a batch, ``("failed", worker, [ids], error)``

Pruning is signalled through a shared abort array indexed by task id;
the kernel polls it at every adversary vertex.
"""

from __future__ import annotations

import enum
import logging
import math
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BinConfiguration, GameParams
from .pruning import any_good_situation, five_nine_heuristic, large_item_heuristic
from .search import (
    ABORTED,
    ADV,
    ALG,
    SearchAborted,
    SearchContext,
    SearchResult,
    apply_initial_strategy,
    placements,
    record_strategy,
)

log = logging.getLogger(__name__)

DEFAULT_BATCH = 300


@dataclass(frozen=True)
class TaskThresholds:
    """Where the coordinator stops expanding and hands out a task.

    ``depth_k`` counts items sent, ``load_fraction`` is a fraction of g;
    the first adversary vertex with ``count == depth_k`` or
    ``volume >= ceil(load_fraction * g)`` becomes a task. The values
    recommended for real runs are k in {5, 6, 7} and fractions 0.2 to 0.4;
    other positive values are accepted for testing.
    """

    depth_k: int = 6
    load_fraction: float = 0.3

    def __post_init__(self) -> None:
        if self.depth_k < 1:
            raise ValueError(f"task depth must be positive, got {self.depth_k}")
        if not 0 < self.load_fraction <= 1:
            raise ValueError(f"task load fraction must be in (0, 1], got {self.load_fraction}")

    def load(self, g: int) -> int:
        return math.ceil(self.load_fraction * g)

    def is_task(self, c: BinConfiguration, g: int) -> bool:
        return c.items.total >= self.load(g) or len(c.items) >= self.depth_k


class TaskStatus(enum.Enum):
    PENDING = "pending"
    ASSIGNED = "assigned"
    DONE = "done"
    PRUNED = "pruned"


@dataclass
class Task:
    id: int
    config: BinConfiguration
    prev_y: int
    status: TaskStatus = TaskStatus.PENDING
    winner: Optional[int] = None


@dataclass
class Batch:
    ids: list[int]


@dataclass
class Vertex:
    """A coordinator-owned vertex of the frontier graph.

    Adversary vertices hold a configuration and algorithm-vertex
    children; algorithm vertices hold the item and adversary children.
    """

    kind: int  # ADV: adversary to move, ALG: algorithm to place ``item``
    config: Optional[BinConfiguration] = None
    item: int = 0
    children: list[int] = field(default_factory=list)
    parents: list[int] = field(default_factory=list)
    value: Optional[int] = None
    task: Optional[int] = None


@dataclass
class Frontier:
    vertices: list[Vertex]
    roots: list[int]

    def verdict(self) -> Optional[int]:
        values = [self.vertices[r].value for r in self.roots]
        if any(v == ALG for v in values):
            return ALG
        if all(v == ADV for v in values):
            return ADV
        return None


def generate_tasks(params: GameParams, thresholds: TaskThresholds, ctx: SearchContext,
                   starts: Optional[Sequence[BinConfiguration]] = None,
                   deadline: Optional[float] = None,
                   progress: Optional[Callable[[dict], None]] = None,
                   progress_every: float = 10.0) -> tuple[Frontier, list[Task]]:
    """Expand from the start configurations down to the task frontier.

    Vertices settled on the way (good situations, adversary heuristics,
    no sendable item, every placement overflowing) get their value
    immediately. Tasks are numbered in generation order. Raises
    :class:`SearchAborted` once ``time.monotonic()`` passes ``deadline``.
    """
    if starts is None:
        starts = apply_initial_strategy(params, [], track_last=not ctx.full_generality)
    vertices: list[Vertex] = []
    tasks: list[Task] = []
    index: dict[tuple, int] = {}
    h = ctx.heuristics
    t, g = params.t, params.g
    last_report = [time.monotonic()]
    calls = [0]

    def checkpoint() -> None:
        calls[0] += 1
        if calls[0] % 1024:
            return
        now = time.monotonic()
        if deadline is not None and now >= deadline:
            raise SearchAborted("time limit reached while generating tasks")
        if progress is not None and now - last_report[0] >= progress_every:
            progress({"phase": "generating", "vertices": len(vertices), "tasks": len(tasks)})
            last_report[0] = now

    def adversary(c: BinConfiguration, prev_y: int, parent: Optional[int]) -> int:
        checkpoint()
        key = c.key()
        got = index.get(key)
        if got is not None:
            if parent is not None:
                vertices[got].parents.append(parent)
            return got
        vid = len(vertices)
        v = Vertex(ADV, c)
        if parent is not None:
            v.parents.append(parent)
        vertices.append(v)
        index[key] = vid
        loads = np.asarray(c.loads, dtype=np.int64)
        if h.good_situations and any_good_situation(loads, params.m, t, g):
            v.value = ALG
            return vid
        if h.large_item and c.loads[0] >= t - g and \
                large_item_heuristic(c, params, ctx.tables, ctx.feas_cache) is not None:
            v.value = ADV
            return vid
        if h.five_nine and five_nine_heuristic(c, params, ctx.tables, ctx.feas_cache) is not None:
            v.value = ADV
            return vid
        if thresholds.is_task(c, g):
            v.task = len(tasks)
            tasks.append(Task(v.task, c, prev_y))
            return vid
        y = ctx.max_feasible(c, prev_y)
        low = ctx.min_item(c)
        if y < low:
            v.value = ALG
            return vid
        sizes = range(y, low - 1, -1) if ctx.item_order == "desc" else range(low, y + 1)
        for e in sizes:
            aid = len(vertices)
            vertices.append(Vertex(ALG, c, e, parents=[vid]))
            v.children.append(aid)
            kids, _ = placements(c.loads, e, t)
            after = c.items.with_items(e)
            last = e if c.last_item is not None else None
            for kid in kids:
                child = adversary(BinConfiguration(kid, after, last), y, aid)
                vertices[aid].children.append(child)
        return vid

    roots = [adversary(c, g, None) for c in starts]
    frontier = Frontier(vertices, roots)
    # settle everything decidable before any task runs; shared vertices may
    # sit below parents with larger ids, so push each change upwards
    for vid in range(len(vertices)):
        if vertices[vid].value is not None:
            _propagate(frontier, vid)
    for vid in reversed(range(len(vertices))):
        if _settle(frontier, vid):
            _propagate(frontier, vid)
    return frontier, tasks


def _settle(frontier: Frontier, vid: int) -> bool:
    """Recompute an internal vertex from its children; True if it changed."""
    v = frontier.vertices[vid]
    if v.value is not None or v.task is not None:
        return False
    values = [frontier.vertices[c].value for c in v.children]
    win, lose = (ADV, ALG) if v.kind == ADV else (ALG, ADV)
    if any(x == win for x in values):
        v.value = win
    elif all(x == lose for x in values):
        # an adversary vertex without items, or an item that overflows everywhere
        v.value = lose
    else:
        return False
    return True


def _propagate(frontier: Frontier, vid: int) -> None:
    stack = list(frontier.vertices[vid].parents)
    while stack:
        p = stack.pop()
        if _settle(frontier, p):
            stack.extend(frontier.vertices[p].parents)


def _needed_tasks(frontier: Frontier) -> set[int]:
    """Tasks still reachable from the undecided roots through undecided vertices."""
    need: set[int] = set()
    seen: set[int] = set()
    stack = [r for r in frontier.roots if frontier.vertices[r].value is None]
    while stack:
        vid = stack.pop()
        if vid in seen:
            continue
        seen.add(vid)
        v = frontier.vertices[vid]
        if v.value is not None:
            continue
        if v.task is not None:
            need.add(v.task)
            continue
        stack.extend(v.children)
    return need


class WorkerPool:
    """Threads evaluating tasks against shared caches."""

    def __init__(self, ctx: SearchContext, workers: int):
        if workers < 1:
            raise ValueError(f"need at least one worker, got {workers}")
        self.ctx = ctx
        self.size = workers
        self.contexts = [ctx.worker_clone() for _ in range(workers)]
        self.inboxes: list[queue.Queue] = [queue.Queue() for _ in range(workers)]
        self.results: queue.Queue = queue.Queue()
        self.threads: list[threading.Thread] = []
        self.abort = np.zeros(1, dtype=np.int64)
        self.tasks: list[Task] = []

    def sync(self, tasks: Sequence[Task]) -> None:
        """Share the full task table with every worker before assignment."""
        self.tasks = list(tasks)
        self.abort = np.zeros(max(1, len(tasks)), dtype=np.int64)
        for c in self.contexts:
            c.abort = self.abort

    def start(self) -> None:
        for w in range(self.size):
            th = threading.Thread(target=run_worker, name=f"binstretch-worker-{w}",
                                  args=(w, self.contexts[w], self.tasks, self.inboxes[w],
                                        self.results, self.abort), daemon=True)
            th.start()
            self.threads.append(th)

    def assign(self, worker: int, batch: Batch) -> None:
        self.inboxes[worker].put(("assign", batch.ids))

    def prune(self, ids) -> None:
        for i in ids:
            self.abort[i] = 1

    def shutdown(self) -> None:
        self.abort[:] = 1
        for box in self.inboxes:
            box.put(("shutdown",))
        for th in self.threads:
            th.join()


def run_worker(worker: int, ctx: SearchContext, tasks: Sequence[Task], inbox: queue.Queue,
               results: queue.Queue, abort: np.ndarray) -> None:
    """Evaluate assigned batches until told to shut down, streaming results."""
    while True:
        msg = inbox.get()
        if msg[0] == "shutdown":
            return
        ids = list(msg[1])
        done = 0
        try:
            for tid in ids:
                if abort[tid]:
                    results.put(("result", worker, tid, ABORTED))
                else:
                    task = tasks[tid]
                    ctx.task_slot = tid
                    r = ctx.run_adv(task.config, task.prev_y)
                    results.put(("result", worker, tid, int(r)))
                done += 1
        except Exception as exc:  # reported to the coordinator, which reassigns
            results.put(("failed", worker, ids[done:], repr(exc)))
            continue
        results.put(("idle", worker))


@dataclass
class CoordinatorReport:
    verdict: Optional[int]
    tasks: int
    evaluated: int
    pruned: int
    elapsed: float
    timed_out: bool = False


def run_coordinator(frontier: Frontier, tasks: Sequence[Task], pool: WorkerPool,
                    batch_size: int = DEFAULT_BATCH,
                    progress: Optional[Callable[[dict], None]] = None,
                    progress_every: float = 10.0,
                    time_limit: Optional[float] = None) -> CoordinatorReport:
    """Drive the workers until the root verdict is known or ``time_limit`` passes."""
    if batch_size < 1:
        raise ValueError("batch size must be positive")
    t0 = time.monotonic()
    vertex_of = {}
    for vid, v in enumerate(frontier.vertices):
        if v.task is not None:
            vertex_of[v.task] = vid
    pending = [tk.id for tk in tasks]
    pending.reverse()  # pop() hands out tasks in generation order
    evaluated = 0
    timed_out = False
    last_report = t0

    def next_batch() -> Batch:
        ids = []
        while pending and len(ids) < batch_size:
            tid = pending.pop()
            if tasks[tid].status is TaskStatus.PENDING:
                tasks[tid].status = TaskStatus.ASSIGNED
                ids.append(tid)
        return Batch(ids)

    def counts() -> dict:
        by = {s: 0 for s in TaskStatus}
        for tk in tasks:
            by[tk.status] += 1
        return {"tasks": len(tasks), "done": by[TaskStatus.DONE], "pruned": by[TaskStatus.PRUNED],
                "assigned": by[TaskStatus.ASSIGNED], "pending": by[TaskStatus.PENDING],
                "elapsed": round(time.monotonic() - t0, 2)}

    def prune_unneeded() -> None:
        need = _needed_tasks(frontier)
        dropped = []
        for tk in tasks:
            if tk.status in (TaskStatus.PENDING, TaskStatus.ASSIGNED) and tk.id not in need:
                tk.status = TaskStatus.PRUNED
                dropped.append(tk.id)
        pool.prune(dropped)

    if frontier.verdict() is None and tasks:
        pool.sync(tasks)
        pool.start()
        busy = 0
        for w in range(pool.size):
            b = next_batch()
            if b.ids:
                pool.assign(w, b)
                busy += 1
        since_prune = 0
        deadline = None if time_limit is None else t0 + time_limit
        while frontier.verdict() is None and busy:
            try:
                wait = None if deadline is None else max(0.0, min(deadline - time.monotonic(), 1.0))
                msg = pool.results.get(timeout=wait)
            except queue.Empty:
                msg = ("tick",)
            if deadline is not None and time.monotonic() >= deadline:
                log.info("time limit of %ss reached", time_limit)
                timed_out = True
                break
            if msg[0] == "result":
                _, w, tid, r = msg
                tk = tasks[tid]
                if r != ABORTED and tk.status is not TaskStatus.DONE:
                    evaluated += 1
                    tk.winner = r
                    if tk.status is not TaskStatus.PRUNED:
                        tk.status = TaskStatus.DONE
                    vid = vertex_of[tid]
                    frontier.vertices[vid].value = r
                    _propagate(frontier, vid)
                    since_prune += 1
                    if since_prune >= 64:
                        prune_unneeded()
                        since_prune = 0
            elif msg[0] == "failed":
                _, w, ids, err = msg
                log.warning("worker %d failed (%s); reassigning %d tasks", w, err, len(ids))
                for tid in ids:
                    if tasks[tid].status is TaskStatus.ASSIGNED:
                        tasks[tid].status = TaskStatus.PENDING
                        pending.append(tid)
                msg = ("idle", w)
            if msg[0] == "idle":
                _, w = msg
                prune_unneeded()
                b = next_batch()
                if b.ids:
                    pool.assign(w, b)
                else:
                    busy -= 1
            now = time.monotonic()
            if progress is not None and now - last_report >= progress_every:
                progress(counts())
                last_report = now
        prune_unneeded()
        pool.shutdown()
    if progress is not None:
        progress(counts())
    c = counts()
    return CoordinatorReport(frontier.verdict(), len(tasks), evaluated, c["pruned"],
                             time.monotonic() - t0, timed_out)


def parallel_search(params: GameParams, ctx: SearchContext, workers: int = 4,
                    thresholds: Optional[TaskThresholds] = None,
                    start: Optional[Sequence[int]] = None, record: bool = True,
                    batch_size: int = DEFAULT_BATCH,
                    progress: Optional[Callable[[dict], None]] = None,
                    progress_every: float = 10.0, limit: Optional[float] = None) -> SearchResult:
    """Parallel counterpart of :func:`binstretch.search.sequential`.

    The winning strategy, when found, is recorded afterwards by a single
    worker; it reuses the caches the parallel pass filled.
    """
    thresholds = thresholds or TaskThresholds()
    prefix = list(start or [])
    starts = apply_initial_strategy(params, prefix, track_last=not ctx.full_generality)
    if not starts:
        from .search import sequential

        return sequential(params, ctx, prefix, record, limit)
    t0 = time.monotonic()
    try:
        frontier, tasks = generate_tasks(params, thresholds, ctx, starts,
                                         None if limit is None else t0 + limit,
                                         progress, progress_every)
    except SearchAborted:
        log.info("time limit of %ss reached while generating tasks", limit)
        return SearchResult(False, None, ctx.monotonicity, ctx.stat_dict(), len(starts), complete=False)
    if progress is not None:
        progress({"phase": "generated", "vertices": len(frontier.vertices), "tasks": len(tasks)})
    remaining = None if limit is None else max(0.001, limit - (time.monotonic() - t0))
    pool = WorkerPool(ctx, workers)
    report = run_coordinator(frontier, tasks, pool, batch_size, progress, progress_every, remaining)
    stats = ctx.stat_dict()
    for wctx in pool.contexts:
        for k, v in wctx.stat_dict().items():
            stats[k] = stats.get(k, 0) + v
    stats.update(tasks=report.tasks, tasks_evaluated=report.evaluated, tasks_pruned=report.pruned)
    if report.timed_out:
        return SearchResult(False, None, ctx.monotonicity, stats, len(starts), complete=False)
    found = report.verdict == ADV
    tree = record_strategy(starts, ctx, prefix) if found and record else None
    return SearchResult(found, tree, ctx.monotonicity, stats, len(starts))


__all__ = [
    "TaskThresholds", "Task", "TaskStatus", "Batch", "Frontier", "Vertex", "WorkerPool",
    "CoordinatorReport", "generate_tasks", "run_coordinator", "run_worker", "parallel_search",
]
