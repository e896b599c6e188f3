"""The nine acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import json
import math
import os
import random
import subprocess
import sys
import textwrap
import threading

import pytest

from dop import geometry
from dop.errors import CycleDetected
from dop.manager import ObjectManager, ProcedureTable, TraceLog, build_stats, iterate
from dop.model import (
    Attribute,
    Builder,
    ClassSchema,
    Internal,
    Need,
    Parameter,
    Registry,
    check_well_built,
    derive_production_tree,
    path_str,
)
from dop.dsl import SourceUnit, parse_class, parse_classes, render_interface
from dop.params import ParameterFile
from dop.scheduler import (
    critical_path,
    is_properly_nested,
    replay_trace,
    schedule_builds,
    simulate_workflow,
)
from dop.store import derive_key
from strategies import random_cost_model, random_instance

REG = geometry.registry()
P = geometry.PROCEDURES
FIX = os.path.join(os.path.dirname(__file__), "fixtures")
RIGHT = geometry.triangle_parameters((0, 0, 0), (3, 0, 0), (0, 4, 0))


@pytest.fixture
def verdict(capsys, request):
    """Print one PASS/FAIL line for the criterion, whatever happens."""
    label = request.node.function.__doc__.strip().splitlines()[0]
    state = {"ok": False}
    yield state
    with capsys.disabled():
        print(f"\n[{'PASS' if state['ok'] else 'FAIL'}] {label}")


def test_criterion_1_geometry_oracle(verdict):
    """criterion 1: geometry oracle (perimeter 12, surface 6, centroids)"""
    m = ObjectManager.create(REG, "TRIANGLE", procedures=P, parameters=RIGHT)
    assert m.provide("perimeter") == 12.0
    surface = m.provide("surface")
    shoelace = 0.5 * abs(0 * (0 - 4) + 3 * (4 - 0) + 0 * (0 - 0))
    assert math.isclose(surface, 6.0, rel_tol=1e-9)
    assert math.isclose(surface, shoelace, rel_tol=1e-9)
    c = m.provide("centroid")
    assert math.isclose(c[0], 1.0) and math.isclose(c[1], 4 / 3) and c[2] == 0.0
    simplex = ObjectManager.create(REG, "TRIANGLE", "centroid", procedures=P,
                                   parameters=geometry.triangle_parameters((1, 0, 0), (0, 1, 0), (0, 0, 1)))
    assert all(math.isclose(x, 1 / 3, rel_tol=1e-15) for x in simplex.provide("centroid"))
    verdict["ok"] = True


def test_criterion_2_memoization(verdict):
    """criterion 2: cold provide runs each procedure once, warm provide runs none"""
    m = ObjectManager.create(REG, "TRIANGLE", "surface", procedures=P, parameters=RIGHT)
    m.provide("surface")
    cold = build_stats(m)
    assert all(c["builds"] == 1 for c in cold.values()) and len(cold) == 6
    m.provide("surface")
    assert build_stats(m) == cold
    verdict["ok"] = True


def _cli(*argv, env=None):
    return subprocess.run([sys.executable, "-m", "dop", *argv], capture_output=True, text=True,
                          env={**os.environ, **(env or {})}, timeout=60)


def test_criterion_3_persistence_across_processes(verdict, tmp_path):
    """criterion 3: a second process reuses stored values (0 builds, >=1 hit)"""
    params = tmp_path / "tri.params"
    params.write_text(ParameterFile.render(RIGHT))
    store = str(tmp_path / "store")
    argv = ("build", "TRIANGLE", "surface", "--params", str(params), "--store", store,
            "--format", "json-lines")
    first = _cli(*argv)
    assert first.returncode == 0, first.stderr
    one = json.loads(first.stdout.splitlines()[-1])["totals"]
    assert one["builds"] == 6 and one["store_hits"] == 0
    second = _cli(*argv)
    assert second.returncode == 0, second.stderr
    rows = [json.loads(line) for line in second.stdout.splitlines()]
    assert rows[0]["value"] == 6.0
    assert rows[-1]["totals"]["builds"] == 0 and rows[-1]["totals"]["store_hits"] >= 1
    verdict["ok"] = True


def test_criterion_4_invalidation_minimality(verdict):
    """criterion 4: 200 random trees: NotReady set == ancestors; iterate == fresh build"""
    for seed in range(200):
        reg, procs, tree, params = random_instance(seed)
        assert len(tree) <= 50
        rng = random.Random(seed)
        leaves = [n.path for _, n in tree.walk() if n.kind == "parameter"]
        m = ObjectManager.create(reg, "C0", "v", procedures=procs, parameters=params)
        m.provide("v")
        for _ in range(3):
            leaf = rng.choice(leaves)
            m.set_parameter(leaf, m.parameters()[path_str(leaf)] + rng.randint(1, 9))
            assert m.not_ready_nodes() == set(tree.ancestors(leaf)), seed
            m.provide("v")
        moves = [(path_str(rng.choice(leaves)), rng.randint(1, 3)) for _ in range(2)]
        res = iterate(m, "v", [(p, lambda i, cur, d=d: cur + d) for p, d in moves], 3)
        fresh = ObjectManager.create(reg, "C0", "v", procedures=procs, parameters=m.parameters())
        assert fresh.provide("v").hex() == res[-1].value.hex(), seed
    verdict["ok"] = True


def test_criterion_5_well_built(verdict):
    """criterion 5: TRIANGLE well built; TRIANGLE + color split into {vertices}/{color}"""
    assert check_well_built(REG, "TRIANGLE").well_built
    tri = REG["TRIANGLE"]
    reg = Registry(s for s in REG.values() if s.name != "TRIANGLE")
    reg.add(ClassSchema("TRIANGLE", tri.attributes + (Attribute("color", "POINT", Builder("position")),)))
    r = check_well_built(reg, "TRIANGLE")
    assert not r.well_built
    assert set(r.leaf_clusters) == {frozenset({"vertices"}), frozenset({"color"})}
    verdict["ok"] = True


def _mutual(distinct):
    sub_b, sub_a = ("q", "p") if distinct else ("p", "p")
    a = ClassSchema("A", (
        Attribute("x", "REAL", Parameter("REAL")),
        Attribute("b", "B", Builder(sub_b)),
        Attribute("p", "REAL", Internal("p_build"),
                  needs=(Need("x"),) if distinct else (Need("b", "p"),)),
        Attribute("r", "REAL", Internal("r_build"), needs=(Need("b", sub_b),)),
    ))
    b = ClassSchema("B", (
        Attribute("y", "REAL", Parameter("REAL")),
        Attribute("a", "A", Builder(sub_a)),
        Attribute("q", "REAL", Internal("q_build"), needs=(Need("y"),)),
        Attribute("p", "REAL", Internal("p_build"), needs=(Need("a", sub_a),)),
        Attribute("s", "REAL", Internal("s_build"), needs=(Need("a", sub_a),)),
    ))
    procs = ProcedureTable()
    procs.add("A", "p_build", lambda **kw: 2.0 * next(iter(kw.values())))
    procs.add("A", "r_build", lambda b: b + 100.0)
    procs.add("B", "q_build", lambda y: 3.0 * y)
    procs.add("B", "p_build", lambda a: a - 1.0)
    procs.add("B", "s_build", lambda a: a + 10.0)
    return Registry([a, b]), procs


def _within(seconds, fn):
    box = {}

    def run():
        try:
            box["value"] = fn()
        except BaseException as e:  # noqa: BLE001
            box["error"] = e

    t = threading.Thread(target=run, daemon=True)
    t.start()
    t.join(seconds)
    assert not t.is_alive(), "did not finish within the time limit"
    return box


def test_criterion_6_cycles(verdict):
    """criterion 6: A<->B at distinct sub-states builds both ways; same sub-state is a cycle"""
    reg, procs = _mutual(True)
    assert ObjectManager.create(reg, "A", "r", procedures=procs, parameters={"b.y": 2.0}).provide("r") == 106.0
    assert ObjectManager.create(reg, "B", "s", procedures=procs, parameters={"a.x": 4.0}).provide("s") == 18.0
    reg, procs = _mutual(False)
    for root in ("A", "B"):
        box = _within(1.0, lambda root=root: ObjectManager.create(reg, root, "p", procedures=procs))
        assert isinstance(box.get("error"), CycleDetected)
    verdict["ok"] = True


def test_criterion_7_dsl_round_trip(verdict):
    """criterion 7: listings parse cleanly, parse.render.parse is idempotent, fuzz never crashes"""
    for name in ("triangle_interface.dop", "triangular_pyramid.dop"):
        s1, d1 = parse_class(SourceUnit.from_path(os.path.join(FIX, name)))
        assert not [d for d in d1 if d.severity == "error"]
        s2, d2 = parse_class(render_interface(s1))
        assert s2 == s1 and not [d for d in d2 if d.severity == "error"]
        assert render_interface(s2) == render_interface(s1)
    rng = random.Random(7)
    alphabet = "class feature end needs uses internal builder count is do ( ) : , \" `` '' [ ] { } -- \n A b 1"
    words = alphabet.split(" ")
    for _ in range(10_000):
        if rng.random() < 0.5:
            text = " ".join(rng.choice(words) for _ in range(rng.randint(0, 30)))
        else:
            text = "".join(chr(rng.randint(1, 0x17F)) for _ in range(rng.randint(0, 40)))
        parse_classes(SourceUnit(text))
    verdict["ok"] = True


KEY_SCRIPT = textwrap.dedent("""
    from dop import geometry
    from dop.model import derive_production_tree
    from dop.store import derive_key
    t = derive_production_tree(geometry.registry(), "TRIANGLE", "surface")
    p = geometry.triangle_parameters((0, 0, 0), (3, 0, 0), (0, 4, 0))
    print(derive_key(t, (), "surface", p).digest)
""")


def test_criterion_8_key_properties(verdict):
    """criterion 8: keys agree across processes, react to one ulp, ignore the apex for the base"""
    tree = derive_production_tree(REG, "TRIANGLE", "surface")
    here = derive_key(tree, (), "surface", RIGHT).digest
    digests = {
        subprocess.run([sys.executable, "-c", KEY_SCRIPT], capture_output=True, text=True, check=True,
                       env={**os.environ, "PYTHONHASHSEED": seed}).stdout.strip()
        for seed in ("1", "2")
    }
    assert digests == {here}
    bumped = {**RIGHT, "vertices[3].y": math.nextafter(4.0, 5.0)}
    assert derive_key(tree, (), "surface", bumped).digest != here
    pyr = derive_production_tree(REG, "TRIANGULAR_PYRAMID")
    base = geometry.triangle_parameters((0, 0, 0), (3, 0, 0), (0, 4, 0), prefix="base.")
    keys = {derive_key(pyr, "base", "surface", {**base, **geometry.point_parameters(apex, "apex.")})
            for apex in ((0, 0, 1), (5, 5, 5), (-1, 2, 1e9))}
    assert len(keys) == 1
    verdict["ok"] = True


def test_criterion_9_scheduler_bounds(verdict):
    """criterion 9: 100 random instances: monotone makespan, lower bounds, nested traces"""
    for seed in range(100):
        reg, procs, tree, params = random_instance(seed)
        cost = random_cost_model(random.Random(seed), reg)
        total = simulate_workflow(tree, cost).total.cpu_seconds
        cp = critical_path(tree, cost)[0]
        prev = math.inf
        for w in range(1, 9):
            s = schedule_builds(tree, cost, w)
            s.validate(tree)
            assert s.makespan <= prev + 1e-9
            assert s.makespan >= max(cp, total / w) - 1e-9
            prev = s.makespan
        log = TraceLog()
        m = ObjectManager.create(reg, "C0", "v", procedures=procs, parameters=params, trace=log)
        m.provide("v")
        obs = replay_trace(log.lines())
        assert is_properly_nested(obs)
        assert obs.build_order()[0] == ("", "v")
    verdict["ok"] = True
