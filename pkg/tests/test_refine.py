from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idslkit.idsl import RelationSpec, make_object
from idslkit.scenegen import RefineConfig, RefineError, refine, refine_placements
from idslkit.scenegen.refine import RefineProblem
from idslkit.scenes import lamp_on_table_scene, random_room_scene


def gap(state):
    lamp, desk = state.objects["table_lamp_0"], state.objects["desk_0"]
    return float(lamp.world_bounds[0][2] - desk.world_bounds[1][2])


def test_lamp_settles_onto_desk():
    s = lamp_on_table_scene(0.05)
    assert gap(s) == pytest.approx(0.05, abs=1e-12)
    res = refine(s, RefineConfig(max_iters=500))
    assert res.iterations <= 500
    assert abs(gap(res.state)) < 1e-3
    assert res.collision_after <= res.collision_before
    assert res.reason in {"converged", "stationary", "no_descent"}


def test_objective_history_is_monotone():
    res = refine(lamp_on_table_scene(0.2))
    h = np.array(res.objective)
    assert len(h) >= 2 and np.all(np.diff(h) < 0)


def test_aligned_scene_does_not_move():
    s = lamp_on_table_scene(0.0)
    res = refine(s)
    assert res.iterations == 0
    assert all(d == 0.0 for d in res.displacement.values())
    assert res.state.objects["table_lamp_0"] is s.objects["table_lamp_0"]


@pytest.mark.parametrize("g0", [0.05, 0.3, -0.02])
def test_analytic_gradient_matches_finite_differences(g0):
    prob = RefineProblem(lamp_on_table_scene(g0), RefineConfig())
    x = prob.x0.copy()
    x[:, :2] += np.array([[0.013, -0.021], [0.007, 0.004]])
    ga = prob.analytic_gradient(x)
    gf = prob.fd_gradient(x, h=1e-6)
    scale = max(np.abs(gf).max(), 1e-12)
    assert np.abs(ga - gf).max() / scale < 1e-4


@settings(max_examples=25, deadline=None)
@given(dz=st.floats(-0.3, 0.6), dx=st.floats(-0.2, 0.2))
def test_gradient_check_property(dz, dx):
    prob = RefineProblem(lamp_on_table_scene(0.05), RefineConfig())
    x = prob.x0.copy()
    x[1, 2] += dz
    x[1, 0] += dx
    ga, gf = prob.analytic_gradient(x), prob.fd_gradient(x, h=1e-6)
    assert np.allclose(ga, gf, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("seed", [0, 3])
def test_random_rooms_never_gain_collision(seed):
    res = refine(random_room_scene(seed), RefineConfig(max_iters=60))
    assert res.collision_after <= res.collision_before + 1e-12
    assert np.all(np.diff(res.objective) < 0)


def test_pull_through_neighbour_is_blocked():
    # lamp wants to sit on the desk, but a box sits directly on the desk in the way
    s = lamp_on_table_scene(0.4)
    desk = s.objects["desk_0"]
    top = float(desk.world_bounds[1][2])
    lamp_xy = s.objects["table_lamp_0"].position_world[:2]
    box = make_object(
        "box_0",
        "box",
        position=(float(lamp_xy[0]), float(lamp_xy[1]), top),
        local_center=(0, 0, 0.1),
        local_size=(0.3, 0.3, 0.2),
        relation_graph=(RelationSpec("OnTopOf", "desk_0", child_plane_idx=0, parent_plane_idx=1),),
    )
    s = s.with_objects({"box_0": box})
    res = refine(s)
    assert res.collision_after <= res.collision_before + 1e-12


def test_unknown_target_and_bad_plane():
    s = lamp_on_table_scene()
    lamp = s.objects["table_lamp_0"]
    bad = replace(lamp, relation_graph=(RelationSpec("OnTopOf", "ghost_0", child_plane_idx=0, parent_plane_idx=1),))
    with pytest.raises(RefineError, match="unknown entity"):
        refine(s.with_objects({"table_lamp_0": bad}))
    bad = replace(lamp, relation_graph=(RelationSpec("OnTopOf", "desk_0", child_plane_idx=9, parent_plane_idx=1),))
    with pytest.raises(RefineError, match="plane reference"):
        refine(s.with_objects({"table_lamp_0": bad}))


@pytest.mark.parametrize("kw", [{"step": 0}, {"lam_stab": -1}, {"fd_h": 0}, {"max_iters": -1}])
def test_invalid_config(kw):
    with pytest.raises(RefineError):
        RefineConfig(**kw)


def test_refine_placements_returns_state():
    s = refine_placements(lamp_on_table_scene(0.05))
    assert abs(gap(s)) < 1e-3
