import math

import numpy as np
import pytest

from idslkit import scenes
from idslkit.energy import compile_factors, total_energy
from idslkit.idsl import SceneState, validate
from idslkit.optimizer import (
    OPERATORS,
    OptimizerConfig,
    OptTrace,
    TraceRecord,
    accept,
    advance_stage,
    operator_probs,
    optimize,
    sample_operator,
    spawn_streams,
    temperature,
)
from idslkit.pose import quat_from_yaw


def test_probs_at_rho_zero_are_normalised_beta0():
    cfg = OptimizerConfig()
    names, p = operator_probs(0.0, cfg)
    b = np.array([cfg.operators[n][0] for n in names])
    assert np.allclose(p, b / b.sum(), atol=0, rtol=1e-15)


def test_probs_hand_example():
    cfg = OptimizerConfig(operators={"translate": (1, 0), "rotate": (1, 1)})
    _, p = operator_probs(0.5, cfg)
    assert p == pytest.approx([2 / 3, 1 / 3], abs=1e-15)


@pytest.mark.parametrize("rho", np.linspace(0, 1, 21))
def test_probs_sum_to_one(rho):
    _, p = operator_probs(float(rho), OptimizerConfig())
    assert abs(p.sum() - 1.0) <= 1e-12
    assert (p >= 0).all()


def test_rho_one_concentrates_on_refiners():
    names, p = operator_probs(1.0, OptimizerConfig())
    assert dict(zip(names, p))["relation_snap"] == 1.0


def test_rho_one_without_refiner_falls_back_uniform():
    cfg = OptimizerConfig(operators={"translate": (4, 1), "rotate": (1, 1)})
    _, p = operator_probs(1.0, cfg)
    assert list(p) == [0.5, 0.5]


def test_operator_frequencies_within_3_sigma():
    cfg = OptimizerConfig()
    rho = 0.37
    names, p = operator_probs(rho, cfg)
    rng = np.random.Generator(np.random.PCG64(11))
    n = 200_000
    counts = dict.fromkeys(names, 0)
    for _ in range(n):
        counts[sample_operator(0, rho, cfg, rng)[0]] += 1
    for name, pi in zip(names, p):
        sigma = math.sqrt(n * pi * (1 - pi))
        assert abs(counts[name] - n * pi) <= 3 * sigma + 1e-9


def test_temperature_law():
    cfg = OptimizerConfig()
    assert temperature(0, 0.0, cfg) == cfg.T0
    assert temperature(0, 1.0, cfg) == 0.0
    assert temperature(0, 0.5, cfg) == 0.25
    ts = [temperature(0, r, cfg) for r in np.linspace(0, 1, 50)]
    assert all(a >= b for a, b in zip(ts, ts[1:]))


def test_accept_rules():
    rng = np.random.Generator(np.random.PCG64(0))
    assert accept(-0.1, 1e6, False, 0.0, rng)
    assert accept(0.0, 0.0, True, 0.0, rng)
    assert not accept(0.1, -5.0, False, 1.0, rng)
    assert not accept(0.0, 0.1, True, 0.0, rng)
    assert accept(0.0, -0.1, True, 0.0, rng)


def test_accept_metropolis_frequency():
    rng = np.random.Generator(np.random.PCG64(3))
    T = 0.7
    n = 100_000
    k = sum(accept(0.0, T * math.log(2), True, T, rng) for _ in range(n))
    assert abs(k - n / 2) <= 3 * math.sqrt(n * 0.25)


def _rec(t, stage, rho, accepted=False, dS=0.0):
    return TraceRecord(t, stage, rho, 0.0, "translate", [], accepted, dS, 0.0, 0.0, 0.0, rho)


def test_advance_stage():
    cfg = OptimizerConfig(W=5)
    quiet = [_rec(t, 1, 0.97) for t in range(5)]
    assert advance_stage(quiet, 1, cfg) == 2
    assert advance_stage(quiet[:4], 1, cfg) == 1
    low = quiet[:4] + [_rec(4, 1, 0.9)]
    assert advance_stage(low, 1, cfg) == 1
    gain = quiet[:4] + [_rec(4, 1, 0.99, accepted=True, dS=-0.01)]
    assert advance_stage(gain, 1, cfg) == 1
    noise = quiet[:4] + [_rec(4, 1, 1.0, accepted=True, dS=-1e-15)]
    assert advance_stage(noise, 1, cfg) == 2
    top = [_rec(t, 3, 1.0) for t in range(5)]
    assert advance_stage(top, 3, cfg) == 3


def test_fixed_point_returns_input():
    s = scenes.random_room_scene(0, n_objects=2)
    a, b = sorted(s.objects)
    objs = dict(s.objects)
    # strip relations and park both pieces apart
    objs[a] = scenes.furniture_object(a, s.objects[a].category, 1.5, 1.5, 0.0)
    objs[b] = scenes.furniture_object(b, s.objects[b].category, 3.5, 3.5, 0.0)
    s0 = SceneState(s.building, s.rooms, objs)
    out, trace = optimize(s0, OptimizerConfig(seed=1))
    assert out is s0
    assert trace.exit_reason == "fixed_point"
    assert trace.records == []


@pytest.fixture(scope="module")
def run():
    s0 = scenes.random_room_scene(2)
    cfg = OptimizerConfig(seed=5)
    out, trace = optimize(s0, cfg)
    return s0, cfg, out, trace


def test_trace_laws(run):
    _, cfg, _, trace = run
    assert trace.records
    for r in trace.records:
        assert abs(sum(r.probs) - 1) <= 1e-12
        assert r.T == temperature(r.t, r.rho, cfg)
        assert r.op in OPERATORS


def test_structural_monotone_within_stage(run):
    _, _, _, trace = run
    prev = None
    for r in trace.records:
        if r.accepted:
            assert r.dS <= 1e-9
        if prev is not None and prev.stage == r.stage:
            assert r.E_struct <= prev.E_struct + 1e-9
        prev = r


def test_stage_sequence_monotone(run):
    _, cfg, _, trace = run
    stages = [r.stage for r in trace.records]
    assert all(a <= b for a, b in zip(stages, stages[1:]))
    assert max(stages) <= cfg.L


def test_stage_changes_match_advance_stage(run):
    _, cfg, _, trace = run
    recs = trace.records
    for t in range(1, len(recs)):
        expect = advance_stage(recs[:t], recs[t - 1].stage, cfg)
        assert recs[t].stage == expect


def test_trace_energy_matches_recompute(run):
    s0, cfg, out, trace = run
    last = trace.records[-1]
    e = total_energy(out, set(range(1, last.stage + 1)))
    assert abs(e.E_struct - last.E_struct) <= 1e-9
    assert abs(e.E_sem - last.E_sem) <= 1e-9


def test_result_is_valid_and_in_rooms(run):
    s0, _, out, trace = run
    assert not [i for i in validate(out) if i.severity == "error"]
    assert trace.exit_reason == "plateau"
    fs = compile_factors(out)
    assert all(f.raw(out.objects) <= f.eps for f in fs if f.kind in ("collision", "out_of_room"))


def test_determinism():
    s0 = scenes.random_room_scene(6)
    cfg = OptimizerConfig(seed=9, max_iters=1500)
    a_out, a = optimize(s0, cfg)
    b_out, b = optimize(s0, cfg)
    assert a.to_jsonl() == b.to_jsonl()
    assert {k: v.position_world for k, v in a_out.objects.items()} == {k: v.position_world for k, v in b_out.objects.items()}
    c_out, c = optimize(s0, OptimizerConfig(seed=10, max_iters=1500))
    assert c.to_jsonl() != a.to_jsonl()


def test_trace_jsonl_roundtrip(run):
    _, _, _, trace = run
    text = trace.to_jsonl()
    assert OptTrace.from_jsonl(text).to_jsonl() == text


def test_spawned_streams_independent():
    a, b, c = spawn_streams(42)
    assert a.random() != b.random() != c.random()
    a2, _, _ = spawn_streams(42)
    a3, _, _ = spawn_streams(42)
    assert a2.random() == a3.random()


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(T0=0)
    with pytest.raises(ValueError):
        OptimizerConfig(rho_advance=1.5)
    with pytest.raises(ValueError):
        OptimizerConfig(operators={"teleport": (1, 1)})
    with pytest.raises(ValueError):
        OptimizerConfig.from_dict({"nope": 1})
    cfg = OptimizerConfig.from_dict({"T0": 2.0, "energy": {"weights": {"near": 2.0}}})
    assert cfg.energy.weight("near") == 2.0
    assert OptimizerConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_onto_support_moves_children():
    from idslkit.idsl import RelationSpec, make_object

    s = scenes.random_room_scene(0, n_objects=2)
    label = next(iter(s.rooms))
    table = make_object("table", "table", (2.0, 2.0, 0.0), quat_from_yaw(0.3), local_center=(0, 0, 0.375), local_size=(1.2, 0.8, 0.75))
    lamp = make_object(
        "lamp", "lamp", (2.0, 2.0, 0.8), local_center=(0, 0, 0.2), local_size=(0.3, 0.3, 0.4), relation_graph=[RelationSpec("OnTopOf", "table")]
    )
    s0 = SceneState(s.building, s.rooms, {"table": table, "lamp": lamp})
    out, trace = optimize(s0, OptimizerConfig(seed=3, max_iters=3000))
    fs = [f for f in compile_factors(out) if f.kind == "on_top_of"]
    assert fs[0].raw(out.objects) <= 1e-6
    assert label in out.rooms
