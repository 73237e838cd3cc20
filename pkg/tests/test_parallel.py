import pytest

from binstretch.checker import check
from binstretch.core import BinConfiguration, GameParams
from binstretch.dag import build_dag
from binstretch.parallel import (
    TaskThresholds, TaskStatus, WorkerPool, generate_tasks, parallel_search, run_coordinator,
)
from binstretch.search import SearchContext, apply_initial_strategy, sequential
from oracle import make_oracle


def ctx_for(p, k=None):
    return SearchContext(p, k, hash_bits=14)


@pytest.mark.parametrize("m,t,g", [(3, 8, 6), (3, 7, 5), (2, 8, 6), (3, 9, 7), (2, 6, 4)])
@pytest.mark.parametrize("workers", [1, 3])
@pytest.mark.parametrize("depth_k", [1, 2, 4])
def test_parallel_agrees_with_brute_force(m, t, g, workers, depth_k):
    p = GameParams(m, t, g)
    want = make_oracle(m, t, g)()
    res = parallel_search(p, ctx_for(p), workers, TaskThresholds(depth_k, 1.0), batch_size=2)
    assert res.found == want
    if res.found:
        assert check(build_dag(res.tree, p))


@pytest.mark.parametrize("k", [0, 1])
def test_parallel_with_monotonicity(k):
    p = GameParams(3, 8, 6)
    want = make_oracle(3, 8, 6, k)()
    assert parallel_search(p, ctx_for(p, k), 2, TaskThresholds(2, 0.5), record=False).found == want


def test_threshold_rule():
    th = TaskThresholds(3, 0.3)
    assert th.load(14) == 5
    p = GameParams(3, 19, 14)
    assert th.is_task(BinConfiguration.from_items((5, 0, 0), [5], 14), 14)
    assert th.is_task(BinConfiguration.from_items((1, 1, 1), [1, 1, 1], 14), 14)
    assert not th.is_task(BinConfiguration.from_items((2, 1, 0), [2, 1], 14), 14)
    with pytest.raises(ValueError):
        TaskThresholds(0, 0.3)
    with pytest.raises(ValueError):
        TaskThresholds(3, 0.0)


def test_tasks_are_unique_and_at_the_frontier():
    p = GameParams(3, 19, 14)
    th = TaskThresholds(3, 0.3)
    ctx = ctx_for(p)
    frontier, tasks = generate_tasks(p, th, ctx, apply_initial_strategy(p, []))
    assert tasks
    keys = [(tk.config.loads, tk.config.items.key()) for tk in tasks]
    assert len(keys) == len(set(keys))
    for tk in tasks:
        assert th.is_task(tk.config, p.g)
        assert tk.status is TaskStatus.PENDING


def test_coordinator_prunes_and_reports():
    p = GameParams(3, 19, 14)
    ctx = ctx_for(p)
    frontier, tasks = generate_tasks(p, TaskThresholds(3, 0.3), ctx, apply_initial_strategy(p, []))
    seen = []
    pool = WorkerPool(ctx, 2)
    report = run_coordinator(frontier, tasks, pool, batch_size=4,
                             progress=seen.append, progress_every=0.0)
    assert report.verdict is not None
    assert report.evaluated <= report.tasks and 0 < report.pruned < report.tasks
    assert seen


def test_bad_batch_size():
    p = GameParams(3, 8, 6)
    ctx = ctx_for(p)
    frontier, tasks = generate_tasks(p, TaskThresholds(2, 1.0), ctx, apply_initial_strategy(p, []))
    with pytest.raises(ValueError):
        run_coordinator(frontier, tasks, WorkerPool(ctx, 1), batch_size=0)


def test_parallel_with_prefix_matches_sequential():
    p = GameParams(3, 8, 6)
    a = parallel_search(p, ctx_for(p), 2, TaskThresholds(2, 1.0), start=[2], record=False)
    b = sequential(p, ctx_for(p), start=[2], record=False)
    assert a.found == b.found


def test_four_bins_in_parallel():
    p = GameParams(4, 19, 14)
    res = parallel_search(p, SearchContext(p, None, hash_bits=20), 4, TaskThresholds(5, 0.3))
    assert res.found
    assert check(build_dag(res.tree, p))


def test_time_limit_gives_an_incomplete_result():
    p = GameParams(6, 19, 14)
    seen = []
    res = parallel_search(p, SearchContext(p, None, hash_bits=16), 2, TaskThresholds(4, 0.3),
                          record=False, progress=seen.append, progress_every=0.5, limit=3.0)
    assert not res.complete and not res.found
    assert seen
