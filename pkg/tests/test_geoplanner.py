import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecgr import counters, geoplanner as gp, gridmap
from vecgr.errors import PartialResult, PlanningTimeout, PreconditionError

STRAIGHT = math.hypot(8, 8)


def cfg(seed=0, iters=800, **kw):
    return gp.PlannerConfig(rng_seed=seed, max_iterations=iters, **kw)


def assert_path_invariants(grid, path, start, goal, clearance):
    assert np.allclose(path.waypoints[0], start, atol=1e-9)
    assert np.allclose(path.waypoints[-1], goal, atol=1e-9)
    assert path.cost == pytest.approx(gp.path_length(path.waypoints), abs=1e-9)
    assert gp.path_clearance_ok(grid, path, clearance, spacing=0.25)


def test_free_map_near_straight_line(free_grid):
    path = gp.plan(free_grid, (1, 1), (9, 9), cfg(iters=1500))
    assert path.cost <= 1.05 * STRAIGHT
    assert_path_invariants(free_grid, path, (1, 1), (9, 9), gp.WALL_LIM)


def test_start_equals_goal(free_grid):
    path = gp.plan(free_grid, (3, 3), (3, 3), cfg())
    assert len(path) == 1 and path.cost == 0.0


def test_start_inside_obstacle(corridor_grid):
    with pytest.raises(PreconditionError):
        gp.plan(corridor_grid, (5, 5), (1, 1), cfg())


def test_goal_inside_obstacle(corridor_grid):
    with pytest.raises(PreconditionError):
        gp.plan(corridor_grid, (1, 1), (5, 5), cfg())


def test_tiny_budget_times_out(corridor_grid):
    with pytest.raises(PlanningTimeout):
        gp.plan(corridor_grid, (1.5, 5), (8.5, 5), cfg(iters=3))


def test_deterministic(corridor_grid):
    a = gp.plan(corridor_grid, (1.5, 5), (8.5, 5), cfg(seed=4))
    b = gp.plan(corridor_grid, (1.5, 5), (8.5, 5), cfg(seed=4))
    assert gp.format_path_csv(a) == gp.format_path_csv(b)


def test_anytime_monotone(corridor_grid):
    search = gp.RRTStar(corridor_grid, (1.5, 5), (8.5, 5), cfg(seed=2, iters=1200))
    search.run()
    hist = np.array(search.best_cost_history)
    finite = hist[np.isfinite(hist)]
    assert len(finite) > 0
    assert np.all(np.diff(finite) <= 1e-12)
    # once finite, stays finite
    first = np.argmax(np.isfinite(hist))
    assert np.isfinite(hist[first:]).all()


def test_collision_soundness_dense(corridor_grid):
    for seed in range(4):
        c = cfg(seed=seed, iters=1000)
        path = gp.plan(corridor_grid, (1.5, 5), (8.5, 5), c)
        assert gp.path_clearance_ok(corridor_grid, path, c.clearance, spacing=c.step_size / 4)
        # an even denser independent check
        pts = path.array
        for p, q in zip(pts[:-1], pts[1:]):
            s = np.linspace(0, 1, 400)[:, None]
            d = corridor_grid.wall_distance_many(p + s * (q - p))
            assert d.min() >= c.clearance - 1e-9


def test_plan_k_singleton_matches_plan(free_grid):
    c = cfg(seed=11)
    (only,) = gp.plan_k(free_grid, (1, 1), (9, 9), c, 1)
    direct = gp.plan(free_grid, (1, 1), (9, 9), cfg(seed=gp.derived_seed(11, 0, 0)))
    assert only == direct


def test_plan_k_five_free_map(free_grid):
    paths = gp.plan_k(free_grid, (1, 1), (9, 9), cfg(seed=1, iters=1500), 5)
    assert len(paths) == 5
    for p in paths:
        assert p.cost <= 1.05 * STRAIGHT


def corridor_of(path):
    """+1 for the upper corridor, -1 for the lower one (block occupies y in [3, 7])."""
    mid = [y for x, y in path.waypoints if 3 <= x <= 7]
    if not mid:
        pts = path.array
        mid = [np.interp(5.0, pts[:, 0], pts[:, 1])]
    return 1 if np.mean(mid) > 5 else -1


def test_plan_k_uses_both_corridors(corridor_grid):
    paths = gp.plan_k(corridor_grid, (1.5, 5), (8.5, 5), cfg(seed=0, iters=800), 6)
    assert {corridor_of(p) for p in paths} == {1, -1}
    for p in paths:
        assert_path_invariants(corridor_grid, p, (1.5, 5), (8.5, 5), gp.WALL_LIM)


def test_plan_k_partial_result():
    rows = ["." * 40 for _ in range(40)]
    for r in range(40):
        rows[r] = "." * 19 + "@@" + "." * 19  # wall splits the map
    grid = gridmap.from_rows(rows)
    with pytest.raises(PartialResult) as err:
        gp.plan_k(grid, (1, 5), (9, 5), cfg(iters=50, max_retries=1), 2)
    assert err.value.paths == [] and err.value.requested == 2


def test_planner_calls_counted(free_grid):
    before = counters.planner_calls()
    gp.plan_k(free_grid, (1, 1), (4, 4), cfg(iters=100), 3)
    assert counters.planner_calls() - before == 3


def test_simplify_collinear(free_grid):
    path = gp.PositionPath.from_points([(1, 1), (2, 2), (3, 3)])
    out = gp.simplify(path, free_grid)
    assert len(out) == 2 and out.cost == pytest.approx(path.cost)


def test_simplify_fixed_point(free_grid):
    path = gp.PositionPath.from_points([(1, 1), (3, 4)])
    assert gp.simplify(path, free_grid) == path


def test_simplify_zigzag_strictly_shorter(free_grid):
    path = gp.PositionPath.from_points([(1, 1), (2, 3), (3, 1), (4, 3), (5, 1)])
    out = gp.simplify(path, free_grid)
    assert out.cost < path.cost
    assert out.waypoints[0] == path.waypoints[0] and out.waypoints[-1] == path.waypoints[-1]


def test_simplify_keeps_clearance(corridor_grid):
    path = gp.plan(corridor_grid, (1.5, 5), (8.5, 5), cfg(seed=3))
    out = gp.simplify(path, corridor_grid, gp.WALL_LIM)
    assert len(out) <= len(path) and out.cost <= path.cost + 1e-9
    assert gp.path_clearance_ok(corridor_grid, out, gp.WALL_LIM, spacing=0.25)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0.5, 9.5), st.floats(0.5, 9.5)), min_size=2, max_size=6),
       st.floats(0.2, 2.0))
def test_densify_preserves_geometry(points, spacing):
    path = gp.PositionPath.from_points(points)
    dense = gp.densify(path, spacing)
    assert dense.waypoints[0] == path.waypoints[0] and dense.waypoints[-1] == path.waypoints[-1]
    assert gp.path_length(dense.waypoints) == pytest.approx(path.cost, abs=1e-9)
    seg = np.hypot(*np.diff(dense.array, axis=0).T)
    assert (seg <= spacing + 1e-9).all()


def test_path_csv_round_trip(free_grid):
    path = gp.plan(free_grid, (1, 1), (6, 2), cfg())
    back = gp.parse_path_csv(gp.format_path_csv(path))
    assert np.allclose(back.array, path.array, atol=1e-8)
    assert back.cost == pytest.approx(path.cost, abs=1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        gp.PlannerConfig(time_limit=0)
    with pytest.raises(ValueError):
        gp.PlannerConfig(goal_bias=1.5)
    with pytest.raises(ValueError):
        gp.PlannerConfig(clearance=-1)
