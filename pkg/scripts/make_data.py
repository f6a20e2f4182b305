"""Generate the maps, scenarios and discrete problems under data/.

Usage: python3 scripts/make_data.py [--root data]
"""
import argparse
import math
import random
from pathlib import Path

import numpy as np

from vecgr import gridmap, strips

# ---------------------------------------------------------------- maps


def open_map(size=64):
    """Obstacle-light arena: four small pillars."""
    rows = np.full((size, size), ".")
    s = size / 10.0
    for cx, cy in ((3.0, 3.0), (7.0, 3.2), (3.2, 7.0), (6.8, 6.8)):
        r0, c0 = int(cy * s), int(cx * s)
        rows[r0 - 1:r0 + 2, c0 - 1:c0 + 2] = "@"
    return ["".join(r) for r in rows]


def corridor_map(size=100):
    """Square block in the middle leaving two corridors on each side."""
    rows = np.full((size, size), ".")
    rows[30:70, 30:70] = "@"
    return ["".join(r) for r in rows]


def corridor_points():
    """Points 0 and 2 face each other across the block; 1 and 3 flank point 2.

    Both corridors from 2 to 0 have equal length, so which one a planner
    picks is a coin toss.
    """
    return [gridmap.ScenarioPoint(8.5, 5.0, round(math.pi, 6)),
            gridmap.ScenarioPoint(1.2, 9.0, 0.0),
            gridmap.ScenarioPoint(1.5, 5.0, 0.0),
            gridmap.ScenarioPoint(1.2, 1.0, 0.0)]


# ---------------------------------------------------------------- discrete domains

BLOCKS = """(define (domain blocksworld)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x - block ?y - block) (ontable ?x - block) (clear ?x - block)
               (handempty) (holding ?x - block))
  (:action pick-up
    :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (not (ontable ?x)) (not (clear ?x)) (not (handempty)) (holding ?x)))
  (:action put-down
    :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (not (holding ?x)) (clear ?x) (handempty) (ontable ?x)))
  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (not (holding ?x)) (not (clear ?y)) (clear ?x) (handempty) (on ?x ?y)))
  (:action unstack
    :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (clear ?x)) (not (handempty)) (not (on ?x ?y)))))
"""

GRID = """(define (domain grid-nav)
  (:requirements :strips :typing)
  (:types cell)
  (:predicates (at ?c - cell) (adj ?a - cell ?b - cell) (visited ?c - cell))
  (:action move
    :parameters (?from - cell ?to - cell)
    :precondition (and (at ?from) (adj ?from ?to))
    :effect (and (not (at ?from)) (at ?to) (visited ?to))))
"""

GRIPPER = """(define (domain gripper)
  (:requirements :strips :typing)
  (:types room ball gripper)
  (:predicates (at-robby ?r - room) (at ?b - ball ?r - room) (free ?g - gripper)
               (carry ?b - ball ?g - gripper))
  (:action move
    :parameters (?from - room ?to - room)
    :precondition (at-robby ?from)
    :effect (and (at-robby ?to) (not (at-robby ?from))))
  (:action pick
    :parameters (?b - ball ?r - room ?g - gripper)
    :precondition (and (at ?b ?r) (at-robby ?r) (free ?g))
    :effect (and (carry ?b ?g) (not (at ?b ?r)) (not (free ?g))))
  (:action drop
    :parameters (?b - ball ?r - room ?g - gripper)
    :precondition (and (carry ?b ?g) (at-robby ?r))
    :effect (and (at ?b ?r) (free ?g) (not (carry ?b ?g)))))
"""


def fmt(atoms):
    return " ".join(strips.format_atom(a) for a in atoms)


def problem_text(domain, name, objects, init, goal):
    objs = " ".join(f"{' '.join(names)} - {t}" for t, names in objects.items())
    return (f"(define (problem {name}) (:domain {domain})\n"
            f"  (:objects {objs})\n"
            f"  (:init {fmt(init)})\n"
            f"  (:goal (and {fmt(goal)})))\n")


def blocks_instance(rng, n_blocks=4, n_goals=5):
    names = "abcdefgh"[:n_blocks]
    order = list(names)
    rng.shuffle(order)
    init = [("handempty",)]
    # random towers
    towers, cur = [], []
    for b in order:
        cur.append(b)
        if rng.random() < 0.4:
            towers.append(cur)
            cur = []
    if cur:
        towers.append(cur)
    for t in towers:
        init.append(("ontable", t[0]))
        for lo, hi in zip(t, t[1:]):
            init.append(("on", hi, lo))
        init.append(("clear", t[-1]))
    goals = set()
    while len(goals) < n_goals:
        x, y = rng.sample(names, 2)
        z = rng.choice([b for b in names if b not in (x, y)])
        goals.add(frozenset({("on", x, y), ("clear", x)} if rng.random() < 0.5
                            else {("on", x, y), ("ontable", z)}))
    return {"block": list(names)}, init, sorted(goals, key=sorted)


def grid_instance(rng, w=4, h=3, n_goals=5):
    cells = [f"c{x}{y}" for y in range(h) for x in range(w)]
    init = []
    for y in range(h):
        for x in range(w):
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                if 0 <= x + dx < w and 0 <= y + dy < h:
                    init.append(("adj", f"c{x}{y}", f"c{x + dx}{y + dy}"))
    start = rng.choice(cells)
    init.append(("at", start))
    targets = rng.sample([c for c in cells if c != start], n_goals)
    return {"cell": cells}, init, [frozenset({("at", c)}) for c in targets]


def gripper_instance(rng, n_balls=3, n_goals=5):
    rooms, balls = ["rooma", "roomb", "roomc"], [f"ball{i}" for i in range(1, n_balls + 1)]
    init = [("at-robby", "rooma"), ("free", "left"), ("free", "right")]
    init += [("at", b, "rooma") for b in balls]
    goals = set()
    while len(goals) < n_goals:
        bs = rng.sample(balls, 2)
        goals.add(frozenset(("at", b, rng.choice(rooms[1:])) for b in bs))
    return {"room": rooms, "ball": balls, "gripper": ["left", "right"]}, init, sorted(goals, key=sorted)


DOMAINS = {
    "blocksworld": (BLOCKS, blocks_instance),
    "grid": (GRID, grid_instance),
    "gripper": (GRIPPER, gripper_instance),
}


def write_discrete(root: Path, n_problems: int, seed: int):
    for dname, (dtext, maker) in DOMAINS.items():
        ddir = root / "discrete" / dname
        ddir.mkdir(parents=True, exist_ok=True)
        (ddir / "domain.pddl").write_text(dtext)
        domain = strips.parse_domain(dtext)
        rng = random.Random(f"{seed}-{dname}")
        made = 0
        while made < n_problems:
            objects, init, goals = maker(rng)
            pname = f"p{made + 1:02d}"
            true_idx = rng.randrange(len(goals))
            text = problem_text(domain.name, pname, objects, init, sorted(goals[true_idx]))
            problem = strips.parse_problem(text, domain)
            if any(g <= problem.init for g in goals):
                continue
            try:
                plan = strips.topk_plans(problem, goals[true_idx], 1)[0]
                for g in goals:
                    strips.topk_plans(problem, g, 1)
            except Exception:
                continue
            pdir = ddir / pname
            pdir.mkdir(exist_ok=True)
            (pdir / "problem.pddl").write_text(text)
            (pdir / "hyps.dat").write_text("".join(fmt(sorted(g)) + "\n" for g in goals))
            (pdir / "obs.dat").write_text("".join(str(a) + "\n" for a in plan.actions))
            made += 1


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default="data")
    ap.add_argument("--problems", type=int, default=6, help="discrete problems per domain")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    root = Path(args.root)
    (root / "maps").mkdir(parents=True, exist_ok=True)
    (root / "scenarios").mkdir(parents=True, exist_ok=True)
    for name, rows in (("open", open_map()), ("corridor", corridor_map())):
        gridmap.save_map(gridmap.from_rows(rows), root / "maps" / f"{name}.map")
    gridmap.save_scenario(corridor_points(), root / "scenarios" / "corridor.txt")
    write_discrete(root, args.problems, args.seed)
    print(f"wrote data under {root}")


if __name__ == "__main__":
    main()
