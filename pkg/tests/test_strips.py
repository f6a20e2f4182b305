import itertools
import math
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecgr import counters, strips
from vecgr.errors import (InapplicableAction, ParseError, StripsTypeError, Unsolvable,
                          UnsupportedFeature)
from vecgr.recognizer import euclid_discrete

DATA = Path(__file__).resolve().parents[1] / "data" / "discrete"

BLOCKS = (DATA / "blocksworld" / "domain.pddl").read_text()
GRIPPER = (DATA / "gripper" / "domain.pddl").read_text()
GRID = (DATA / "grid" / "domain.pddl").read_text()

LIGHTS = """(define (domain lights)
  (:requirements :strips :typing)
  (:types switch)
  (:predicates (on ?s - switch) (off ?s - switch) (free))
  (:action flip-on :parameters (?s - switch)
     :precondition (and (off ?s) (free)) :effect (and (on ?s) (not (off ?s))))
  (:action flip-off :parameters (?s - switch)
     :precondition (and (on ?s) (free)) :effect (and (off ?s) (not (on ?s)))))"""


def blocks3():
    d = strips.parse_domain(BLOCKS)
    return strips.parse_problem("""(define (problem b3) (:domain blocksworld)
      (:objects a b c - block)
      (:init (clear a) (on a b) (ontable b) (clear c) (ontable c) (handempty))
      (:goal (and (on b c))))""", d)


def gripper2():
    d = strips.parse_domain(GRIPPER)
    return strips.parse_problem("""(define (problem g2) (:domain gripper)
      (:objects ra rb - room b1 b2 - ball left right - gripper)
      (:init (at-robby ra) (free left) (free right) (at b1 ra) (at b2 ra))
      (:goal (and (at b1 rb) (at b2 rb))))""", d)


def grid3x2():
    d = strips.parse_domain(GRID)
    cells = [f"c{x}{y}" for y in range(2) for x in range(3)]
    adj = []
    for x, y in itertools.product(range(3), range(2)):
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if 0 <= x + dx < 3 and 0 <= y + dy < 2:
                adj.append(f"(adj c{x}{y} c{x + dx}{y + dy})")
    return strips.parse_problem(f"""(define (problem g) (:domain grid-nav)
      (:objects {' '.join(cells)} - cell)
      (:init {' '.join(adj)} (at c00))
      (:goal (and (at c21))))""", d)


def lights3():
    d = strips.parse_domain(LIGHTS)
    return strips.parse_problem("""(define (problem l) (:domain lights)
      (:objects s1 s2 s3 - switch)
      (:init (off s1) (off s2) (off s3) (free))
      (:goal (and (on s1) (on s3))))""", d)


PROBLEMS = {"blocks3": blocks3, "gripper2": gripper2, "grid3x2": grid3x2, "lights3": lights3}


def oracle_costs(problem, goal, k):
    """Layered BFS over loop-free action sequences, using frozenset semantics only."""
    goal = frozenset(goal)
    costs = []
    layer = [(problem.init, (problem.init,))]
    depth = 0
    while layer and len(costs) < k:
        for s, _ in layer:
            if goal <= s:
                costs.append(depth)
        nxt = []
        for s, seen in layer:
            for a in problem.actions:
                if a.pre <= s:
                    t = (s - a.delete) | a.add
                    if t not in seen:
                        nxt.append((t, seen + (t,)))
        layer = nxt
        depth += 1
    return costs[:k]


# ---------------------------------------------------------------- parsing

def test_parse_sexpr_nested():
    assert strips.parse_sexpr("(a (b c) ; comment\n d)") == ["a", ["b", "c"], "d"]


@pytest.mark.parametrize("text", ["(a (b c)", "(a))", ""])
def test_parse_sexpr_unbalanced(text):
    with pytest.raises(ParseError):
        strips.parse_sexpr(text)


def test_parse_error_has_line():
    with pytest.raises(ParseError) as exc:
        strips.parse_sexpr("(define\n (domain x)\n (:types a")
    assert exc.value.line is not None


def test_domain_structure():
    d = strips.parse_domain(GRIPPER)
    assert d.name == "gripper"
    assert {"room", "ball", "gripper"} <= set(d.types)
    assert [s.name for s in d.action_schemas] == ["move", "pick", "drop"]


def test_type_hierarchy():
    d = strips.parse_domain("""(define (domain t) (:types truck - vehicle vehicle place)
      (:predicates (at ?v - vehicle ?p - place))
      (:action go :parameters (?t - truck ?a - place ?b - place)
        :precondition (at ?t ?a) :effect (and (at ?t ?b) (not (at ?t ?a)))))""")
    assert d.is_subtype("truck", "vehicle") and d.is_subtype("truck", "object")
    assert not d.is_subtype("vehicle", "truck")
    p = strips.parse_problem("""(define (problem q) (:domain t)
      (:objects t1 - truck x y - place) (:init (at t1 x)) (:goal (at t1 y)))""", d)
    assert len(p.actions) == 4  # go t1 with a, b over {x, y}
    assert [strips.format_atom(a.name) for a in p.actions][:2] == ["(go t1 x x)", "(go t1 x y)"]


@pytest.mark.parametrize("snippet", [
    "(or (on ?s) (off ?s))",
    "(forall (?x - switch) (on ?x))",
    "(exists (?x - switch) (on ?x))",
    "(= ?s ?s)",
    "(not (on ?s))",
])
def test_unsupported_preconditions(snippet):
    text = LIGHTS.replace("(and (off ?s) (free))", snippet)
    with pytest.raises(UnsupportedFeature):
        strips.parse_domain(text)


def test_unsupported_effects_and_sections():
    with pytest.raises(UnsupportedFeature):
        strips.parse_domain(LIGHTS.replace("(and (on ?s) (not (off ?s)))",
                                           "(when (free) (on ?s))"))
    with pytest.raises(UnsupportedFeature):
        strips.parse_domain(LIGHTS.replace("(:types switch)",
                                           "(:types switch) (:functions (cost))"))
    with pytest.raises(UnsupportedFeature):
        strips.parse_domain(LIGHTS.replace("(:action flip-on", "(:durative-action flip-on"))


def test_type_errors():
    with pytest.raises(StripsTypeError):
        strips.parse_domain(LIGHTS.replace("(off ?s - switch) ", ""))
    with pytest.raises(StripsTypeError):
        strips.parse_domain(LIGHTS.replace("(on ?s) (not (off ?s))", "(on ?t) (not (off ?s))"))
    d = strips.parse_domain(LIGHTS)
    with pytest.raises(StripsTypeError):
        strips.parse_problem("""(define (problem l) (:domain lights)
          (:objects s1 - switch) (:init (off s9)) (:goal (on s1)))""", d)
    with pytest.raises(StripsTypeError):
        strips.parse_problem("""(define (problem l) (:domain lights)
          (:objects s1 - lamp) (:init (off s1)) (:goal (on s1)))""", d)
    assert issubclass(StripsTypeError, TypeError)


def test_load_all_data_problems():
    paths = sorted(DATA.glob("*/p*/problem.pddl"))
    assert len(paths) >= 18
    for p in paths:
        prob = strips.load_problem(p.parent.parent / "domain.pddl", p)
        goals = strips.parse_hypotheses((p.parent / "hyps.dat").read_text(), prob)
        obs = strips.parse_observations((p.parent / "obs.dat").read_text(), prob)
        assert len(goals) == 5 and obs
        assert frozenset(prob.goals[0]) in goals
        assert strips.validate_plan(prob, obs, prob.goals[0])


def test_hypotheses_format():
    goals = strips.parse_hypotheses("(on a b), (clear a)\n; comment\n(and (on b c))\n")
    assert goals == [frozenset({("on", "a", "b"), ("clear", "a")}), frozenset({("on", "b", "c")})]


def test_unknown_observation_action():
    p = blocks3()
    with pytest.raises(StripsTypeError):
        strips.parse_observations("(fly a)\n", p)


# ---------------------------------------------------------------- semantics

def test_apply_example():
    p = blocks3()
    a = p.action("(unstack a b)")
    s = strips.apply(p.init, a)
    assert ("holding", "a") in s and ("clear", "b") in s
    assert ("on", "a", "b") not in s and ("handempty",) not in s
    with pytest.raises(InapplicableAction):
        strips.apply(p.init, p.action("(pick-up b)"))


def test_rollout_reports_failing_step():
    p = blocks3()
    plan = [p.action("(unstack a b)"), p.action("(put-down a)"), p.action("(stack c a)")]
    with pytest.raises(InapplicableAction) as exc:
        strips.rollout(p, plan)
    assert exc.value.step == 3
    traj = strips.rollout(p, plan[:2])
    assert len(traj) == 3 and traj.at(0) == p.init and traj.at(99) == traj.states[-1]


def test_observed_states_excludes_init():
    p = blocks3()
    plan = [p.action("(unstack a b)"), p.action("(put-down a)")]
    states = strips.observed_states(p, plan)
    assert len(states) == 2 and states[-1] == strips.rollout(p, plan).states[-1]


def test_format_plan_roundtrip():
    p = blocks3()
    plan = strips.topk_plans(p, p.goals[0], 1)[0]
    text = strips.format_plan(plan)
    assert text.rstrip().endswith(f"; cost = {plan.cost}")
    assert strips.parse_observations(text, p) == list(plan.actions)


# ---------------------------------------------------------------- top-k

@pytest.mark.parametrize("name", sorted(PROBLEMS))
@pytest.mark.parametrize("k", [1, 2, 5])
def test_topk_matches_bfs_oracle(name, k):
    p = PROBLEMS[name]()
    goal = p.goals[0]
    plans = strips.topk_plans(p, goal, k)
    assert [pl.cost for pl in plans] == oracle_costs(p, goal, k)
    assert len({pl.actions for pl in plans}) == len(plans)
    for pl in plans:
        assert strips.validate_plan(p, pl, goal)
        states = strips.rollout(p, pl).states
        assert len(set(states)) == len(states)


def test_topk_nondecreasing_and_deterministic():
    p = gripper2()
    a = strips.topk_plans(p, p.goals[0], 8)
    b = strips.topk_plans(p, p.goals[0], 8)
    assert [x.actions for x in a] == [x.actions for x in b]
    assert all(x.cost <= y.cost for x, y in zip(a, a[1:]))


def test_two_block_swap():
    d = strips.parse_domain(BLOCKS)
    p = strips.parse_problem("""(define (problem b2) (:domain blocksworld)
      (:objects a b - block)
      (:init (clear a) (on a b) (ontable b) (handempty))
      (:goal (and (on b a))))""", d)
    plans = strips.topk_plans(p, p.goals[0], 2)
    assert plans[0].cost == 4
    assert [str(a) for a in plans[0].actions] == ["(unstack a b)", "(put-down a)",
                                                 "(pick-up b)", "(stack b a)"]
    assert len(plans) == 1  # every other plan revisits a state


def test_two_block_stack_has_one_loop_free_plan():
    d = strips.parse_domain(BLOCKS)
    p = strips.parse_problem("""(define (problem b2) (:domain blocksworld)
      (:objects a b - block)
      (:init (clear a) (clear b) (ontable a) (ontable b) (handempty))
      (:goal (and (on a b))))""", d)
    plans = strips.topk_plans(p, p.goals[0], 2)
    assert [str(a) for a in plans[0].actions] == ["(pick-up a)", "(stack a b)"]
    # any longer plan puts a block down or unstacks, returning to a visited state
    assert [pl.cost for pl in plans] == [2] == oracle_costs(p, p.goals[0], 2)


def test_symmetric_grid_routes():
    d = strips.parse_domain(GRID)
    cells = ["c00", "c10", "c01", "c11"]
    adj = " ".join(f"(adj {a} {b}) (adj {b} {a})" for a, b in
                   (("c00", "c10"), ("c00", "c01"), ("c10", "c11"), ("c01", "c11")))
    p = strips.parse_problem(f"""(define (problem sq) (:domain grid-nav)
      (:objects {' '.join(cells)} - cell) (:init {adj} (at c00)) (:goal (at c11)))""", d)
    plans = strips.topk_plans(p, p.goals[0], 4)
    assert [pl.cost for pl in plans[:2]] == [2, 2]
    assert plans[0].actions != plans[1].actions


def test_optimal_only():
    p = lights3()
    plans = strips.topk_plans(p, p.goals[0], 5, optimal_only=True)
    assert {pl.cost for pl in plans} == {2} and len(plans) == 2


def test_goal_already_true():
    p = lights3()
    plans = strips.topk_plans(p, [("free",)], 1)
    assert plans[0].cost == 0 and plans[0].actions == ()


def test_unsolvable():
    p = lights3()
    p2 = strips.ground(p.domain, p.objects, p.init - {("free",)}, [p.goals[0]])
    with pytest.raises(Unsolvable):
        strips.topk_plans(p2, p2.goals[0], 1)


def test_topk_counts_one_planner_call():
    p = lights3()
    before = counters.planner_calls()
    strips.topk_plans(p, p.goals[0], 5)
    assert counters.planner_calls() - before == 1


def test_invalid_k():
    p = lights3()
    with pytest.raises(ValueError):
        strips.topk_plans(p, p.goals[0], 0)


# ---------------------------------------------------------------- symmetric difference

def sym_diff_count(a, b):
    n = 0
    for f in set(a) | set(b):
        n += (f in a) != (f in b)
    return n


@settings(max_examples=300, deadline=None)
@given(st.frozensets(st.integers(0, 30)), st.frozensets(st.integers(0, 30)))
def test_euclid_discrete_property(a, b):
    assert euclid_discrete(a, b) == math.sqrt(sym_diff_count(a, b))
    assert euclid_discrete(a, b) == euclid_discrete(b, a)
    assert euclid_discrete(a, a) == 0
