import random

import pytest
from hypothesis import given, settings

from dop import geometry
from dop.errors import MalformedTrace
from dop.manager import TraceEvent
from dop.model import (
    Attribute,
    Builder,
    ClassSchema,
    Internal,
    Need,
    Parameter,
    Registry,
    derive_production_tree,
)
from dop.scheduler import (
    Cost,
    CostModel,
    compare,
    critical_path,
    is_properly_nested,
    replay_trace,
    schedule_builds,
    simulate_workflow,
)
from strategies import random_cost_model, random_instance, seeds

REG = geometry.registry()


def centroid_tree():
    return derive_production_tree(REG, "TRIANGLE", "centroid")


def longest_chain(tree, cost):
    """Oracle: enumerate every root-to-leaf path."""
    best = 0.0
    stack = [(tree.root, cost.node_cost(tree, tree.root).cpu_seconds)]
    while stack:
        p, acc = stack.pop()
        kids = tree.children(p)
        if not kids:
            best = max(best, acc)
        for k in kids:
            stack.append((k, acc + cost.node_cost(tree, k).cpu_seconds))
    return best


def star(n_leaves):
    """A root needing ``n_leaves`` parameters directly."""
    attrs = tuple(Attribute(f"p{i}", "REAL", Parameter("REAL")) for i in range(n_leaves))
    attrs += (Attribute("v", "REAL", Internal("v_build"), needs=tuple(Need(a.name) for a in attrs)),)
    return derive_production_tree(Registry([ClassSchema("S", attrs)]), "S", "v")


# -- cost model ----------------------------------------------------------------


def test_zero_model():
    r = simulate_workflow(centroid_tree(), CostModel())
    assert r.total == Cost() and r.critical_path_cpu == 0.0


def test_uniform_costs_count_nodes_and_depth():
    t = centroid_tree()
    r = simulate_workflow(t, CostModel.uniform(1.0))
    assert r.total.cpu_seconds == len(t) == 13
    assert r.critical_path_cpu == t.depth() == 3
    assert r.critical_path[0] == ""


def test_default_and_entries():
    m = CostModel.parse("# costs\ndefault 2 0 0\nPOINT.position 0.5 10 1  # cheap\n")
    assert m.cost("POINT", "position") == Cost(0.5, 10, 1)
    assert m.cost("TRIANGLE", "centroid") == Cost(2, 0, 0)
    assert m.cost("POINT", "x") == Cost(2, 0, 0)


@pytest.mark.parametrize("text", ["POINT.position 1 2", "POINT 1 2 3", "A.b x 0 0", "A.b -1 0 0"])
def test_malformed_cost_lines(text):
    with pytest.raises(ValueError):
        CostModel.parse(text)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_critical_path_matches_enumeration(seed):
    reg, _, tree, _ = random_instance(seed)
    cost = random_cost_model(random.Random(seed), reg)
    cp, chain = critical_path(tree, cost)
    assert cp == pytest.approx(longest_chain(tree, cost))
    assert chain[0] == tree.root and not tree.children(chain[-1])
    assert all(tree.parent(b) == a for a, b in zip(chain, chain[1:]))


# -- schedules -------------------------------------------------------------------


def test_one_worker_is_sequential():
    t = centroid_tree()
    s = schedule_builds(t, CostModel.uniform(1.0), 1)
    s.validate(t)
    assert s.makespan == 13


def test_three_leaves_three_workers():
    t = star(3)
    s = schedule_builds(t, CostModel.uniform(1.0), 3)
    s.validate(t)
    assert s.makespan == 2


def test_enough_workers_reach_the_critical_path():
    t = centroid_tree()
    cost = CostModel.uniform(1.0)
    s = schedule_builds(t, cost, len(t.leaves()))
    assert s.makespan == critical_path(t, cost)[0]
    assert schedule_builds(t, cost, 3).makespan < 13


def test_workers_must_be_positive():
    with pytest.raises(ValueError):
        schedule_builds(centroid_tree(), CostModel.uniform(), 0)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_schedule_bounds_and_monotonicity(seed):
    reg, _, tree, _ = random_instance(seed)
    cost = random_cost_model(random.Random(seed), reg)
    total = simulate_workflow(tree, cost).total.cpu_seconds
    cp = critical_path(tree, cost)[0]
    prev = None
    for w in range(1, 7):
        s = schedule_builds(tree, cost, w)
        s.validate(tree)
        assert s.makespan >= max(cp, total / w) - 1e-9
        if prev is not None:
            assert s.makespan <= prev + 1e-9
        prev = s.makespan
    assert schedule_builds(tree, cost, 1).makespan == pytest.approx(total)


def test_pyramid_chain():
    t = derive_production_tree(REG, "TRIANGULAR_PYRAMID", "base_surface")
    s = schedule_builds(t, CostModel.uniform(1.0), 100)
    assert s.makespan == t.depth() == 4


# -- trace replay ----------------------------------------------------------------


def ev(ts, kind, path="", sub="s"):
    return TraceEvent(ts, kind, path, sub).to_line()


def test_empty_trace():
    obs = replay_trace([])
    assert obs.intervals == () and obs.span == 0 and is_properly_nested(obs)


def test_single_pair():
    obs = replay_trace([ev(1, "store_miss"), ev(1, "build_start"), ev(5, "build_end")])
    assert len(obs.intervals) == 1 and obs.span == 4 and obs.store_misses == 1


def test_unbalanced_and_crossed_traces():
    with pytest.raises(MalformedTrace):
        replay_trace([ev(1, "build_start")])
    with pytest.raises(MalformedTrace):
        replay_trace([ev(1, "build_start", "a"), ev(2, "build_start", "b"),
                      ev(3, "build_end", "a"), ev(4, "build_end", "b")])
    with pytest.raises(MalformedTrace):
        replay_trace(["garbage"])


def test_compare_with_plan():
    from dop.manager import ObjectManager, TraceLog

    t = centroid_tree()
    log = TraceLog()
    m = ObjectManager.create(REG, "TRIANGLE", "centroid", procedures=geometry.PROCEDURES,
                             parameters=geometry.triangle_parameters((0, 0, 0), (1, 0, 0), (0, 1, 0)),
                             trace=log)
    m.provide("centroid")
    obs = replay_trace(log)
    report = compare(obs, schedule_builds(t, CostModel.uniform(), 1), t)
    assert report["observed_builds"] == report["planned_nodes"] == 4
    assert report["unplanned"] == report["skipped"] == []
