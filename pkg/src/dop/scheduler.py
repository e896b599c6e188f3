"""Cost simulation and simulated distribution of production-tree builds.

The same tree that drives value computation drives any other per-node
quantity: give each ``(class, sub-state)`` a cpu/memory/disk estimate and the
tree yields totals, a critical path and a schedule on ``w`` identical
workers.  Nodes wait for all their children (a parent is built from them).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import MalformedTrace
from .manager import TraceEvent
from .model import Path, ProductionTree, parse_path, path_str


@dataclass(frozen=True)
class Cost:
    cpu_seconds: float = 0.0
    memory_bytes: float = 0.0
    disk_bytes: float = 0.0

    def __post_init__(self):
        if min(self.cpu_seconds, self.memory_bytes, self.disk_bytes) < 0:
            raise ValueError(f"costs must be >= 0, got {self}")


@dataclass
class CostModel:
    entries: dict[tuple[str, str], Cost] = field(default_factory=dict)
    default: Cost = Cost()

    def cost(self, class_name: str, substate: str | None) -> Cost:
        return self.entries.get((class_name, substate or "-"), self.default)

    def node_cost(self, tree: ProductionTree, path: Path) -> Cost:
        n = tree.nodes[path]
        return self.cost(n.class_name, n.substate)

    @classmethod
    def uniform(cls, cpu: float = 1.0, memory: float = 0.0, disk: float = 0.0) -> "CostModel":
        return cls(default=Cost(cpu, memory, disk))

    @classmethod
    def parse(cls, text: str) -> "CostModel":
        """Read ``CLASS.substate cpu mem disk`` lines.

        ``default cpu mem disk`` sets the fallback; ``#`` starts a comment.
        """
        model = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 'CLASS.substate cpu mem disk', got {raw!r}")
            try:
                cost = Cost(*(float(p) for p in parts[1:]))
            except ValueError as e:
                raise ValueError(f"line {lineno}: {e}") from None
            if parts[0] == "default":
                model.default = cost
                continue
            cls_name, dot, sub = parts[0].partition(".")
            if not dot or not cls_name or not sub:
                raise ValueError(f"line {lineno}: expected CLASS.substate, got {parts[0]!r}")
            model.entries[(cls_name, sub)] = cost
        return model


@dataclass(frozen=True)
class WorkflowReport:
    per_node: dict[str, Cost]
    total: Cost
    critical_path_cpu: float
    critical_path: tuple[str, ...]


def _bottom_up(tree: ProductionTree) -> list[Path]:
    """Children before parents."""
    return [n.path for _, n in tree.walk()][::-1]


def critical_path(tree: ProductionTree, cost: CostModel) -> tuple[float, list[Path]]:
    """Longest cpu-weighted chain from a leaf up to the root."""
    best: dict[Path, tuple[float, Path | None]] = {}
    for p in _bottom_up(tree):
        kids = tree.children(p)
        here = cost.node_cost(tree, p).cpu_seconds
        if kids:
            k = max(kids, key=lambda c: best[c][0])
            best[p] = (here + best[k][0], k)
        else:
            best[p] = (here, None)
    chain, p = [], tree.root
    while p is not None:
        chain.append(p)
        p = best[p][1]
    return best[tree.root][0], chain


def simulate_workflow(tree: ProductionTree, cost: CostModel) -> WorkflowReport:
    per_node = {path_str(n.path): cost.node_cost(tree, n.path) for _, n in tree.walk()}
    total = Cost(
        sum(c.cpu_seconds for c in per_node.values()),
        sum(c.memory_bytes for c in per_node.values()),
        sum(c.disk_bytes for c in per_node.values()),
    )
    cp, chain = critical_path(tree, cost)
    return WorkflowReport(per_node, total, cp, tuple(path_str(p) for p in chain))


@dataclass(frozen=True)
class Assignment:
    node: str
    worker: int
    start: float
    end: float


@dataclass(frozen=True)
class Schedule:
    workers: int
    assignments: tuple[Assignment, ...]
    makespan: float

    def validate(self, tree: ProductionTree, eps: float = 1e-9) -> None:
        """Raise ``AssertionError`` unless precedence and worker exclusivity hold."""
        by_node = {a.node: a for a in self.assignments}
        assert set(by_node) == {path_str(n.path) for _, n in tree.walk()}, "nodes missing"
        for p, kids in tree.edges.items():
            for k in kids:
                assert by_node[path_str(k)].end <= by_node[path_str(p)].start + eps, (
                    f"{path_str(p)!r} starts before child {path_str(k)!r} ends")
        per_worker: dict[int, list[Assignment]] = {}
        for a in self.assignments:
            assert 0 <= a.worker < self.workers
            per_worker.setdefault(a.worker, []).append(a)
        for items in per_worker.values():
            items.sort(key=lambda a: (a.start, a.end))
            for x, y in zip(items, items[1:]):
                assert x.end <= y.start + eps, f"overlap on worker {x.worker}: {x} / {y}"


def _upward_rank(tree: ProductionTree, cost: CostModel) -> dict[Path, float]:
    """Cpu time from the start of a node to the end of the root."""
    rank: dict[Path, float] = {}
    for _, n in tree.walk():
        parent = tree.parent(n.path)
        here = cost.node_cost(tree, n.path).cpu_seconds
        rank[n.path] = here + (rank[parent] if parent is not None else 0.0)
    return rank


def _list_schedule(tree: ProductionTree, cost: CostModel, workers: int) -> Schedule:
    rank = _upward_rank(tree, cost)
    dur = {n.path: cost.node_cost(tree, n.path).cpu_seconds for _, n in tree.walk()}
    waiting = {p: len(tree.children(p)) for p in dur}
    ready: list = []
    for p, w in waiting.items():
        if w == 0:
            heapq.heappush(ready, (-rank[p], path_str(p), p))
    idle = list(range(workers))
    heapq.heapify(idle)
    running: list = []  # (end, worker, path_str, path)
    now = 0.0
    out: list[Assignment] = []
    while ready or running:
        while ready and idle:
            _, name, p = heapq.heappop(ready)
            w = heapq.heappop(idle)
            end = now + dur[p]
            out.append(Assignment(name, w, now, end))
            heapq.heappush(running, (end, w, name, p))
        end, w, _, p = heapq.heappop(running)
        now = end
        finished = [(w, p)]
        while running and running[0][0] <= now:
            _, w2, _, p2 = heapq.heappop(running)
            finished.append((w2, p2))
        for w2, p2 in finished:
            heapq.heappush(idle, w2)
            parent = tree.parent(p2)
            if parent is not None:
                waiting[parent] -= 1
                if waiting[parent] == 0:
                    heapq.heappush(ready, (-rank[parent], path_str(parent), parent))
    makespan = max((a.end for a in out), default=0.0)
    return Schedule(workers, tuple(out), makespan)


def schedule_builds(tree: ProductionTree, cost: CostModel, workers: int) -> Schedule:
    """Critical-path-first list schedule of all nodes on ``workers`` workers.

    List scheduling can get worse when workers are added, so the schedules
    for ``1..workers`` active workers are all computed and the shortest one
    kept: a schedule that leaves workers idle is still valid.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    best = None
    for k in range(1, min(workers, len(tree)) + 1):
        s = _list_schedule(tree, cost, k)
        if best is None or s.makespan < best.makespan:
            best = s
    return Schedule(workers, best.assignments, best.makespan)


# -- trace replay -------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    path: str
    substate: str
    start: int
    end: int
    depth: int


@dataclass(frozen=True)
class ObservedSchedule:
    intervals: tuple[Interval, ...]
    store_hits: int
    store_misses: int

    @property
    def span(self) -> int:
        if not self.intervals:
            return 0
        return max(i.end for i in self.intervals) - min(i.start for i in self.intervals)

    def build_order(self) -> list[tuple[str, str]]:
        return [(i.path, i.substate) for i in sorted(self.intervals, key=lambda i: (i.start, i.depth))]


def replay_trace(lines: Iterable) -> ObservedSchedule:
    """Rebuild build intervals from manager trace lines and check nesting.

    Raises ``MalformedTrace`` if a ``build_end`` does not close the most
    recent open ``build_start`` or a build is left open.
    """
    stack: list[TraceEvent] = []
    intervals = []
    hits = misses = 0
    for raw in lines:
        ev = raw if isinstance(raw, TraceEvent) else None
        if ev is None:
            if not raw.strip():
                continue
            ev = TraceEvent.from_line(raw)
        if ev.event == "build_start":
            stack.append(ev)
        elif ev.event == "build_end":
            if not stack or (stack[-1].path, stack[-1].substate) != (ev.path, ev.substate):
                raise MalformedTrace(f"build_end of {ev.path}:{ev.substate} without matching start")
            start = stack.pop()
            if ev.timestamp < start.timestamp:
                raise MalformedTrace(f"build of {ev.path}:{ev.substate} ends before it starts")
            intervals.append(Interval(ev.path, ev.substate, start.timestamp, ev.timestamp, len(stack)))
        elif ev.event == "store_hit":
            hits += 1
        elif ev.event == "store_miss":
            misses += 1
    if stack:
        raise MalformedTrace(f"unbalanced build_start of {stack[-1].path}:{stack[-1].substate}")
    return ObservedSchedule(tuple(intervals), hits, misses)


def is_properly_nested(observed: ObservedSchedule) -> bool:
    """Any two intervals are disjoint or one contains the other."""
    iv = sorted(observed.intervals, key=lambda i: (i.start, -i.end))
    open_ends: list[int] = []
    for i in iv:
        while open_ends and open_ends[-1] <= i.start:
            open_ends.pop()
        if open_ends and i.end > open_ends[-1]:
            return False
        open_ends.append(i.end)
    return True


def compare(observed: ObservedSchedule, predicted: Schedule, tree: ProductionTree) -> dict:
    """Observed build order against the predicted single-worker plan."""
    built = {i.path for i in observed.intervals}
    planned = [a.node for a in sorted(predicted.assignments, key=lambda a: a.start)
               if tree.nodes[parse_path(a.node)].kind != "parameter"]
    return {
        "observed_builds": len(observed.intervals),
        "planned_nodes": len(planned),
        "unplanned": sorted(built - set(planned)),
        "skipped": sorted(set(planned) - built),
        "observed_span_ns": observed.span,
        "predicted_makespan": predicted.makespan,
    }
