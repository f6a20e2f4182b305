import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecgr import gridmap
from vecgr.errors import BoundsError, DimensionError, InfeasibleScenario, ParseError


def _map_text(rows):
    return f"type octile\nheight {len(rows)}\nwidth {len(rows[0])}\nmap\n" + "\n".join(rows) + "\n"


def test_parse_hand_built_map():
    grid = gridmap.parse_map(_map_text([".@.", "...", "@.."]))
    assert (grid.width, grid.height) == (3, 3)
    obstacles = {(r, c) for r in range(3) for c in range(3) if not grid.cells[r, c]}
    assert obstacles == {(0, 1), (2, 0)}
    assert grid.meters_per_cell == pytest.approx(10 / 3)


def test_glyphs():
    grid = gridmap.parse_map(_map_text([".G@OTWS"]))
    assert grid.cells[0].tolist() == [True, True, False, False, False, False, False]


def test_all_free_map_has_no_obstacles():
    grid = gridmap.parse_map(_map_text(["....", "...."]))
    assert grid.obstacle_count == 0


def test_row_count_mismatch():
    text = "type octile\nheight 3\nwidth 2\nmap\n..\n..\n"
    with pytest.raises(DimensionError):
        gridmap.parse_map(text)


def test_row_length_mismatch():
    with pytest.raises(DimensionError):
        gridmap.parse_map("type octile\nheight 2\nwidth 3\nmap\n...\n..\n")


@pytest.mark.parametrize("bad, line", [
    ("kind octile\nheight 2\nwidth 2\nmap\n..\n..\n", 1),
    ("type octile\nheight x\nwidth 2\nmap\n..\n..\n", 2),
    ("type octile\nheight 2\nwidth 2\nbody\n..\n..\n", 4),
])
def test_header_errors_carry_line(bad, line):
    with pytest.raises(ParseError) as err:
        gridmap.parse_map(bad)
    assert err.value.line == line


def test_round_trip():
    rows = [".@..T", "..W..", "@...."]
    grid = gridmap.parse_map(_map_text(rows))
    again = gridmap.parse_map(gridmap.format_map(grid))
    assert again == grid


def test_wall_distance_center_of_free_map(free_grid):
    assert gridmap.wall_distance(free_grid, 5.0, 5.0) == pytest.approx(5.0)


def test_wall_distance_inside_obstacle():
    grid = gridmap.from_rows([".....", "..@..", "....."] + ["....."] * 2)
    x, y = grid.cell_center(1, 2)
    assert gridmap.wall_distance(grid, x, y) == 0.0


def test_wall_distance_single_obstacle_one_cell_away():
    rows = ["." * 20 for _ in range(20)]
    rows[10] = "." * 10 + "@" + "." * 9
    grid = gridmap.from_rows(rows)
    ox, oy = grid.cell_center(10, 10)
    qx, qy = grid.cell_center(10, 11)
    # brute force over obstacle cells and the boundary
    obst = [grid.cell_center(r, c) for r in range(20) for c in range(20) if not grid.cells[r, c]]
    brute = min(min(math.hypot(qx - a, qy - b) for a, b in obst), qx, qy, 10 - qx, 10 - qy)
    assert brute == pytest.approx(grid.meters_per_cell)
    assert gridmap.wall_distance(grid, qx, qy) == pytest.approx(brute)


def test_wall_distance_out_of_bounds(free_grid):
    with pytest.raises(BoundsError):
        gridmap.wall_distance(free_grid, -0.1, 5.0)
    with pytest.raises(BoundsError):
        gridmap.wall_distance(free_grid, 5.0, 10.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 9.99), st.floats(0.01, 9.99), st.floats(0.01, 9.99), st.floats(0.01, 9.99))
def test_wall_distance_is_1_lipschitz(x1, y1, x2, y2):
    rows = ["." * 40 for _ in range(40)]
    rows[12] = "." * 5 + "@" * 20 + "." * 15
    rows[30] = "." * 25 + "@@@" + "." * 12
    grid = gridmap.from_rows(rows)
    d1, d2 = grid.wall_distance(x1, y1), grid.wall_distance(x2, y2)
    assert abs(d1 - d2) <= math.hypot(x1 - x2, y1 - y2) + 1e-9


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_sample_eight_points_free_map(free_grid, seed):
    pts = gridmap.sample_scenario_points(free_grid, 8, seed)
    assert len(pts) == 8
    for p in pts:
        assert free_grid.wall_distance(p.x, p.y) >= 0.23
        assert 0 <= p.theta < 2 * math.pi
    for i, p in enumerate(pts):
        for q in pts[i + 1:]:
            assert math.hypot(p.x - q.x, p.y - q.y) >= 2.0
    assert gridmap.check_scenario(free_grid, pts)


def test_sampling_is_deterministic(free_grid):
    assert gridmap.sample_scenario_points(free_grid, 8, 3) == \
        gridmap.sample_scenario_points(free_grid, 8, 3)


def test_single_point(free_grid):
    (p,) = gridmap.sample_scenario_points(free_grid, 1, 0)
    assert free_grid.wall_distance(p.x, p.y) >= 0.23


def test_infeasible_scenario():
    # free area is roughly 1 m x 1 m
    rows = ["@" * 50 for _ in range(50)]
    for r in range(20, 25):
        rows[r] = "@" * 20 + "." * 5 + "@" * 25
    grid = gridmap.from_rows(rows)
    with pytest.raises(InfeasibleScenario):
        gridmap.sample_scenario_points(grid, 8, 0, max_attempts=20000)


def test_scenario_file_round_trip(tmp_path, free_grid):
    pts = gridmap.sample_scenario_points(free_grid, 4, 2)
    path = tmp_path / "s.txt"
    gridmap.save_scenario(pts, path)
    back = gridmap.load_scenario(path)
    assert np.allclose([p.xy for p in back], [p.xy for p in pts], atol=1e-6)
