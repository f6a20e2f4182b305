import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecgr import sim
from vecgr.errors import ConfigError, ControllerTimeout, ParseError
from vecgr.geoplanner import PositionPath


def test_wrap_angle():
    assert sim.wrap_angle(math.pi) == pytest.approx(math.pi)
    assert sim.wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert sim.wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert sim.wrap_angle(-7.0) == pytest.approx(-7.0 + 2 * math.pi)


@settings(max_examples=200, deadline=None)
@given(st.floats(-100, 100))
def test_wrap_angle_range(a):
    w = sim.wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_step_euler():
    s = sim.step(sim.UnicycleState(0, 0, 0), sim.ControlInput(1.0, 0.0), 0.1)
    assert (s.x, s.y, s.theta, s.t) == pytest.approx((0.1, 0.0, 0.0, 0.1))
    s = sim.step(sim.UnicycleState(1, 1, math.pi / 2), sim.ControlInput(2.0, 1.0), 0.5)
    assert (s.x, s.y, s.theta) == pytest.approx((1.0, 2.0, math.pi / 2 + 0.5))
    with pytest.raises(ValueError):
        sim.step(s, sim.ControlInput(1, 0), 0.0)


def test_pivot_in_place():
    s = sim.step(sim.UnicycleState(2, 3, 0), sim.ControlInput(0.0, 3.0), 0.1)
    assert (s.x, s.y) == (2, 3) and s.theta == pytest.approx(0.3)


def test_config_validation():
    with pytest.raises(ConfigError):
        sim.FollowerConfig(v_max=0)
    with pytest.raises(ConfigError):
        sim.FollowerConfig(lookahead=0)


def test_test_point_indices():
    assert sim.test_point_indices(71) == (10, 20, 30, 40, 50, 60)
    assert sim.test_point_indices(8) == (1, 2, 3, 4, 5, 6)
    assert sim.test_point_indices(1) == (0,) * 6


def test_straight_line(free_grid):
    path = PositionPath.from_points([(1, 1), (6, 1)])
    stream = sim.follow_path(free_grid, path)
    pos = stream.full.positions
    assert np.hypot(*(pos[-1] - [6, 1])) <= 0.05
    # cruise at v_max in a straight line
    assert stream.duration == pytest.approx(5.0, abs=0.15)
    assert np.abs(pos[:, 1] - 1).max() < 1e-9
    assert sim.stream_violations(free_grid, stream, 1.0) == {"speed": 0, "clearance": 0,
                                                             "spacing": 0}


def test_initial_heading_turn(free_grid):
    path = PositionPath.from_points([(5, 5), (8, 5)])
    facing = sim.follow_path(free_grid, path)
    backwards = sim.follow_path(free_grid, path, sim.FollowerConfig(initial_theta=math.pi))
    assert backwards.duration > facing.duration
    assert sim.stream_violations(free_grid, backwards, 1.0)["speed"] == 0


def test_corridor_route(corridor_grid):
    path = PositionPath.from_points([(1.5, 5.0), (2.5, 7.5), (7.5, 7.5), (8.5, 5.0)])
    stream = sim.follow_path(corridor_grid, path)
    pos = stream.full.positions
    assert pos[:, 1].max() > 7.0
    assert sim.stream_violations(corridor_grid, stream, 1.0) == {"speed": 0, "clearance": 0,
                                                                 "spacing": 0}


def test_degenerate_path(free_grid):
    stream = sim.follow_path(free_grid, PositionPath.from_points([(2, 2), (2, 2)]))
    assert len(stream.full) == 1 and len(stream.test_points) == 6


def test_timeout(free_grid):
    path = PositionPath.from_points([(1, 1), (9, 9)])
    cfg = sim.FollowerConfig(budget_factor=0.1, budget_slack=0.1)
    with pytest.raises(ControllerTimeout):
        sim.follow_path(free_grid, path, cfg)


def test_test_points_are_samples(free_grid):
    stream = sim.follow_path(free_grid, PositionPath.from_points([(1, 1), (4, 5)]))
    obs = stream.test_points
    assert [o.t for o in obs] == list(stream.test_indices)
    for o in obs:
        assert o.state == stream.full.at(o.t)


def test_violations_detect_speed(free_grid):
    from vecgr.quintic import Trajectory
    fast = sim.ObservationStream(Trajectory([[1, 1, 0, 0], [1.5, 1, 0, 0]]), (0,) * 6)
    assert sim.stream_violations(free_grid, fast, 1.0)["speed"] == 1


def test_stream_csv_roundtrip(free_grid, tmp_path):
    stream = sim.follow_path(free_grid, PositionPath.from_points([(1, 1), (3, 2)]))
    text = sim.format_stream_csv(stream, ["seed=3"])
    back = sim.parse_stream_csv(text)
    assert back.test_indices == stream.test_indices
    assert np.allclose(back.full.states, stream.full.states, atol=1e-9)
    sim.save_stream(stream, tmp_path / "s.csv")
    assert sim.load_stream(tmp_path / "s.csv").test_indices == stream.test_indices
    with pytest.raises(ParseError):
        sim.parse_stream_csv(text.replace("# test_points=", "# other="))
