"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]`` / ``[FAIL]`` line with the measured
numbers (shown even without ``-s``) and then asserts.  Thresholds are the
stated ones; nothing here is loosened.
"""

import hashlib
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from conftest import FIXTURES
from test_energy import _random_move
from test_metrics import census_iou, obj, one_room, relation_fixture

from idslkit import geometry as geo
from idslkit import parse_idsl, scenes, serialize_idsl
from idslkit.cad import parse_cad
from idslkit.cli import main
from idslkit.energy import FactorIndex, compile_factors, delta_energy, total_energy
from idslkit.metrics import EvalConfig, common_domain, csr_count_soft, csr_rel, evaluate, layout_fidelity, physics_stats
from idslkit.optimizer import OptimizerConfig, OptTrace, operator_probs, optimize, sample_operator, temperature
from idslkit.scenegen import carve_openings, generate_walls
from idslkit.scenegen.refine import RefineConfig, RefineProblem, refine
from idslkit.text import parse_text


@pytest.fixture
def verdict(capsys):
    def emit(n: int, title: str, ok: bool, detail: str) -> bool:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n:>2} {title}: {detail}")
        return ok

    return emit


# ---------------------------------------------------------------------------
# 1 + 2 + 4: the optimizer suite, run once through the command line
# ---------------------------------------------------------------------------

SUITE_SEEDS = range(10)


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    root = tmp_path_factory.mktemp("suite")
    runs = []
    for seed in SUITE_SEEDS:
        s0 = scenes.random_room_scene(seed)
        src = root / f"scene{seed}.idsl.json"
        src.write_bytes(serialize_idsl(s0))
        out, tr = root / f"out{seed}.idsl.json", root / f"trace{seed}.jsonl"
        t0 = time.perf_counter()
        code = main(["optimize", str(src), "--out", str(out), "--trace", str(tr), "--seed", str(seed), "-q"])
        dt = time.perf_counter() - t0
        final = parse_idsl(out.read_bytes())
        runs.append(
            {
                "seed": seed,
                "code": code,
                "n": len(s0.objects),
                "stats": physics_stats(final),
                "trace": OptTrace.from_jsonl(tr.read_text()),
                "seconds": dt,
            }
        )
    return runs


def test_criterion_01_zero_violation_physics(suite, verdict):
    cfg = OptimizerConfig()
    bad = [r["seed"] for r in suite if r["code"] != 0 or r["stats"][1:] != (0, 0) or len(r["trace"].records) > cfg.max_iters or r["seconds"] >= 30]
    sizes = [r["n"] for r in suite]
    worst_t = max(r["seconds"] for r in suite)
    worst_it = max(len(r["trace"].records) for r in suite)
    ok = not bad and all(8 <= n <= 15 for n in sizes)
    detail = f"{len(suite) - len(bad)}/10 scenes with n_ob = n_cn = 0; objects {min(sizes)}-{max(sizes)}; max {worst_it} iterations; max {worst_t:.2f} s"
    assert verdict(1, "zero-violation physics", ok, detail + (f"; failing seeds {bad}" if bad else ""))


def test_criterion_02_structural_monotonicity(suite, verdict):
    worst = -math.inf
    n_acc = 0
    rising = 0
    for r in suite:
        prev = None
        for rec in r["trace"].records:
            if rec.accepted:
                n_acc += 1
                worst = max(worst, rec.dS)
            if prev is not None and prev.stage == rec.stage and rec.E_struct > prev.E_struct + 1e-9:
                rising += 1
            prev = rec
    ok = worst <= 1e-9 and rising == 0
    assert verdict(2, "structural monotonicity", ok, f"max accepted dE_struct = {worst:.3e} over {n_acc} accepted moves; {rising} within-stage rises")


def test_criterion_03_local_delta_exactness(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    n = 0
    t0 = time.perf_counter()
    for k in range(10):
        s = scenes.random_room_scene(500 + k, n_objects=12)
        fs = compile_factors(s)
        index = FactorIndex(fs)
        ids = sorted(s.objects)
        for _ in range(100):
            upd = _random_move(rng, s, ids)
            s2 = s.with_objects(upd)
            active = {1, 2, 3} if rng.random() < 0.5 else {1}
            d = delta_energy(s, s2, upd, active, 1.0, 0.6, index)
            full = total_energy(s2, active, 1.0, 0.6, fs).E_total - total_energy(s, active, 1.0, 0.6, fs).E_total
            worst = max(worst, abs(d.d_total - full))
            n += 1
            if rng.random() < 0.3:
                s = s2
    dt = time.perf_counter() - t0
    ok = n == 1000 and worst <= 1e-9 and dt < 10
    assert verdict(3, "localized-delta exactness", ok, f"max |local - full| = {worst:.3e} over {n} proposals in {dt:.2f} s")


def test_criterion_04_annealing_laws(suite, verdict):
    cfg = OptimizerConfig()
    worst_sum = max(abs(sum(rec.probs) - 1.0) for r in suite for rec in r["trace"].records)
    t_law = all(rec.T == temperature(rec.t, rec.rho, cfg) for r in suite for rec in r["trace"].records)
    ends = temperature(0, 0.0, cfg) == cfg.T0 and temperature(0, 1.0, cfg) == 0.0
    rho = 0.37
    names, p = operator_probs(rho, cfg)
    rng = np.random.Generator(np.random.PCG64(99))
    draws = 1_000_000
    counts = dict.fromkeys(names, 0)
    for _ in range(draws):
        counts[sample_operator(0, rho, cfg, rng)[0]] += 1
    z = max(abs(counts[nm] - draws * pi) / math.sqrt(draws * pi * (1 - pi)) for nm, pi in zip(names, p) if 0 < pi < 1)
    ok = worst_sum <= 1e-12 and t_law and ends and z <= 3
    detail = f"max |sum p - 1| = {worst_sum:.1e}; T(0) = {temperature(0, 0.0, cfg)}, T(1) = {temperature(0, 1.0, cfg)}; T law on every record: {t_law}; max |z| = {z:.2f} over 1e6 draws"
    assert verdict(4, "annealing laws", ok, detail)


# ---------------------------------------------------------------------------
# 5: metric oracles
# ---------------------------------------------------------------------------


def test_criterion_05_metric_oracles(verdict):
    identity = [layout_fidelity(s, s)[0] for s in (scenes.random_room_scene(1000 + k) for k in range(50))]
    cfg = EvalConfig()
    census_ok = True
    for shift in (0.0, 0.13, 0.4, 0.77):
        ref = one_room([obj("bed", "bed", 2.0, 1.5, 2.0, 1.6), obj("chair", "chair", 4.0, 3.0, 0.6, 0.6)])
        gen = one_room([obj("bed", "bed", 2.0 + shift, 1.5, 2.0, 1.6), obj("chair", "chair", 4.0, 3.0 - shift, 0.6, 0.6)])
        _, per = layout_fidelity(ref, gen, cfg)
        dom = common_domain(ref, gen)

        def rects(s):
            items = sorted(s.objects.values(), key=lambda o: (-geo.rect_area(o.footprint), o.object_id))
            return [(o.category, o.footprint) for o in items]

        for cat in ("bed", "chair"):
            census = census_iou(rects(ref), rects(gen), dom, cfg.cell, cat)
            a, b = ref.objects[cat].footprint, gen.objects[cat].footprint
            inter = geo.rect_overlap_area(a, b)
            union = geo.rect_area(a) + geo.rect_area(b) - inter
            perim = 2 * (a[2] - a[0] + a[3] - a[1]) + 2 * (b[2] - b[0] + b[3] - b[1])
            census_ok &= per[cat] == census and abs(per[cat] - inter / union) <= perim * cfg.cell / union
    soft = csr_count_soft({"chair": 4}, {"chair": 3})
    state, labelled = relation_fixture()
    _, verdicts = csr_rel(state, [c for c, _ in labelled])
    agree = sum(v.satisfied == want for v, (_, want) in zip(verdicts, labelled))
    ok = all(v == 1.0 for v in identity) and census_ok and soft == 0.75 and agree == len(labelled) == 20
    detail = f"LF(S,S) = 1 on {sum(v == 1.0 for v in identity)}/50; census match {census_ok}; soft count {soft}; relation fixture {agree}/20"
    assert verdict(5, "metric oracles", ok, detail)


# ---------------------------------------------------------------------------
# 6: ablation direction
# ---------------------------------------------------------------------------


def test_criterion_06_ablation_direction(verdict):
    rows = []
    for seed in range(10):
        s0 = parse_text(scenes.ablation_prompt(seed))
        ref = scenes.reference_layout(s0, seed)
        full, _ = optimize(s0, OptimizerConfig(seed=seed))
        a, b = evaluate(ref, s0), evaluate(ref, full)
        rows.append((a.csr_rel, b.csr_rel, a.lf, b.lf))
    m = np.median(np.array(rows), axis=0)
    ok = m[0] < m[1] and m[2] < m[3]
    detail = f"median CSR_rel identity {m[0]:.3f} < full {m[1]:.3f}; median LF identity {m[2]:.3f} < full {m[3]:.3f}"
    assert verdict(6, "ablation direction", ok, detail)


# ---------------------------------------------------------------------------
# 7: IDSL round trip
# ---------------------------------------------------------------------------


def test_criterion_07_round_trip(listing, listing_bytes, verdict):
    def stable(s):
        once = serialize_idsl(s)
        back = parse_idsl(once)
        return back == s and serialize_idsl(back) == once

    docs = [scenes.random_room_scene(2000 + k) for k in range(70)]
    docs += [parse_cad(scenes.random_plan_bytes(3000 + k), "json") for k in range(30)]
    n_ok = sum(stable(s) for s in docs)
    dining = listing.rooms["dining-room_0/0"]
    seg = dining.relations[0].segment
    listing_ok = stable(listing)
    ok = listing_ok and n_ok == 100 and dining.area == 36.0 and (seg.a, seg.b) == ((7.5, 1.5), (7.5, 7.5))
    detail = f"listing stable {listing_ok}; {n_ok}/100 generated scenes stable; area {dining.area}; SharedEdge {seg.a}-{seg.b}"
    assert verdict(7, "IDSL round trip", ok, detail)


# ---------------------------------------------------------------------------
# 8: geometry soundness
# ---------------------------------------------------------------------------


def test_criterion_08_geometry_soundness(verdict):
    watertight = 0
    shapes = {"l_shaped": 0, "shared_walls": 0}
    anchors = 0
    worst = 0.0
    for seed in range(20):
        state = parse_cad(scenes.random_plan_bytes(seed, l_shaped=seed % 2 == 0), "json")
        rooms = [state.rooms[k] for k in sorted(state.rooms)]
        shapes["l_shaped"] += any(len(r.polygon) > 4 for r in rooms)
        shapes["shared_walls"] += any(r.relations for r in rooms)
        openings = [state.objects[k] for k in sorted(state.objects) if state.objects[k].opening is not None]
        mesh = carve_openings(generate_walls(rooms), openings)
        watertight += mesh.is_watertight() and mesh.is_consistently_oriented()
        for o in openings:
            a, b = o.opening.wall
            worst = max(worst, geo.point_to_segment_distance(o.opening.anchor, a, b))
            anchors += 1
    ok = watertight == 20 and worst <= 1e-6 and shapes["l_shaped"] > 0 and shapes["shared_walls"] == 20
    detail = f"{watertight}/20 plans watertight after carving ({shapes['l_shaped']} with L-shaped rooms); {anchors} anchors, max off-wall {worst:.1e} m"
    assert verdict(8, "geometry soundness", ok, detail)


# ---------------------------------------------------------------------------
# 9: refinement fixture
# ---------------------------------------------------------------------------


def test_criterion_09_refinement_fixture(verdict):
    s = scenes.lamp_on_table_scene(0.05)
    res = refine(s, RefineConfig(max_iters=500))
    lamp, desk = res.state.objects["table_lamp_0"], res.state.objects["desk_0"]
    gap = float(lamp.world_bounds[0][2] - desk.world_bounds[1][2])
    worst = 0.0
    for g0 in (0.05, 0.2, -0.03):
        prob = RefineProblem(scenes.lamp_on_table_scene(g0), RefineConfig())
        x = prob.x0.copy()
        x[:, :2] += [[0.011, -0.017], [0.006, 0.009]]
        ga, gf = prob.analytic_gradient(x), prob.fd_gradient(x, h=1e-6)
        worst = max(worst, float(np.abs(ga - gf).max() / max(np.abs(gf).max(), 1e-12)))
    ok = abs(gap) < 1e-3 and res.iterations <= 500 and res.collision_after <= res.collision_before and worst <= 1e-4
    detail = f"gap {gap:.2e} m after {res.iterations} steps; collision {res.collision_before:.3g} -> {res.collision_after:.3g}; gradient rel. error {worst:.1e}"
    assert verdict(9, "refinement fixture", ok, detail)


# ---------------------------------------------------------------------------
# 10: determinism
# ---------------------------------------------------------------------------


def test_criterion_10_determinism(tmp_path, verdict):
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        env = {**os.environ, "PYTHONHASHSEED": "random"}
        argv = [sys.executable, "-m", "idslkit", "pipeline", "--example", "bedroom", "--out-dir", str(out), "--seed", "42", "--trace", str(out / "trace.jsonl"), "-q"]
        proc = subprocess.run(argv, capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stderr
        digests.append({p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(out.iterdir())})
    names = ["trace.jsonl", "scene.idsl.json", "scene.obj", "scene.svg"]
    same = [n for n in names if digests[0].get(n) is not None and digests[0][n] == digests[1].get(n)]
    ok = same == names
    assert verdict(10, "determinism", ok, f"byte-identical across two processes: {', '.join(same) or 'none'}")
