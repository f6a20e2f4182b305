"""STRIPS subset of PDDL: parsing, grounding, progression and top-k plans.

Facts and grounded actions are tuples of lower-case strings, e.g.
``("on", "a", "b")`` and ``("stack", "a", "b")``.  A state is a frozenset of
facts.
"""
from __future__ import annotations

import heapq
import io
import itertools
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from . import counters
from .errors import InapplicableAction, ParseError, StripsTypeError, Unsolvable, UnsupportedFeature

Fact = tuple
GroundState = frozenset

_UNSUPPORTED = {
    "or": "disjunction", "imply": "implication", "forall": "universal quantifier",
    "exists": "existential quantifier", "when": "conditional effect",
    "=": "equality", "increase": "numeric fluent", "decrease": "numeric fluent",
    "assign": "numeric fluent", "scale-up": "numeric fluent", "scale-down": "numeric fluent",
    ":functions": "numeric fluent", ":durative-action": "durative action",
    ":derived": "derived predicate", "either": "either-type",
}


# ---------------------------------------------------------------- s-expressions

def _tokenize(text):
    text = re.sub(r";[^\n]*", "", text.lower())
    tokens = []
    for lineno, line in enumerate(text.splitlines(), 1):
        for tok in re.findall(r"\(|\)|[^\s()]+", line):
            tokens.append((tok, lineno))
    return tokens


def parse_sexpr(text):
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty input")
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of input", line=tokens[-1][1])
        tok, line = tokens[pos]
        pos += 1
        if tok == "(":
            out = []
            while True:
                if pos >= len(tokens):
                    raise ParseError("unbalanced parenthesis", line=line)
                if tokens[pos][0] == ")":
                    pos += 1
                    return _Expr(out, line)
                out.append(read())
        if tok == ")":
            raise ParseError("unexpected ')'", line=line)
        return tok

    expr = read()
    if pos != len(tokens):
        raise ParseError("trailing tokens after definition", line=tokens[pos][1])
    return expr


class _Expr(list):
    def __init__(self, items, line):
        super().__init__(items)
        self.line = line


def _line(expr):
    return getattr(expr, "line", None)


def _typed_list(items, where):
    """``a b - t c`` -> [(a, t), (b, t), (c, object)]."""
    out, pending = [], []
    i = 0
    while i < len(items):
        tok = items[i]
        if isinstance(tok, list):
            if tok and tok[0] == "either":
                raise UnsupportedFeature(f"either-type in {where} (line {_line(tok)})")
            raise ParseError(f"unexpected list in {where}", line=_line(tok))
        if tok == "-":
            if i + 1 >= len(items) or isinstance(items[i + 1], list):
                bad = items[i + 1] if i + 1 < len(items) else None
                if isinstance(bad, list) and bad and bad[0] == "either":
                    raise UnsupportedFeature(f"either-type in {where} (line {_line(bad)})")
                raise ParseError(f"dangling '-' in {where}")
            out += [(name, items[i + 1]) for name in pending]
            pending = []
            i += 2
            continue
        pending.append(tok)
        i += 1
    out += [(name, "object") for name in pending]
    return out


def _check_supported(expr, where):
    if isinstance(expr, list):
        if expr and isinstance(expr[0], str) and expr[0] in _UNSUPPORTED:
            raise UnsupportedFeature(
                f"{_UNSUPPORTED[expr[0]]} in {where} (line {_line(expr)})")
        for e in expr:
            _check_supported(e, where)


def _conjuncts(expr, where):
    """Flatten ``(and ...)``; return a list of atoms (as lists)."""
    if not isinstance(expr, list):
        raise ParseError(f"expected a formula in {where}")
    if len(expr) == 0:
        return []
    if expr[0] == "and":
        out = []
        for e in expr[1:]:
            out += _conjuncts(e, where)
        return out
    return [expr]


# ---------------------------------------------------------------- domain

@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple  # ((var, type), ...)
    precondition: tuple  # atoms: (pred, arg, ...)
    add: tuple
    delete: tuple


@dataclass(frozen=True)
class DomainModel:
    name: str
    types: dict  # type -> parent
    predicates: dict  # name -> tuple of param types
    constants: tuple  # ((name, type), ...)
    action_schemas: tuple

    def is_subtype(self, t, ancestor) -> bool:
        seen = set()
        while t is not None and t not in seen:
            if t == ancestor:
                return True
            seen.add(t)
            t = self.types.get(t)
        return ancestor == "object"


def parse_domain(text: str) -> DomainModel:
    expr = parse_sexpr(text)
    if not (isinstance(expr, list) and expr and expr[0] == "define"):
        raise ParseError("expected (define (domain ...) ...)", line=_line(expr))
    name = None
    types = {"object": None}
    predicates = {}
    constants = []
    schemas = []
    for part in expr[1:]:
        if not isinstance(part, list) or not part:
            raise ParseError("malformed domain section", line=_line(part))
        head = part[0]
        if head == "domain":
            name = part[1]
        elif head == ":requirements":
            continue
        elif head == ":types":
            for t, parent in _typed_list(part[1:], ":types"):
                types[t] = parent
                types.setdefault(parent, "object" if parent != "object" else None)
        elif head == ":constants":
            constants += _typed_list(part[1:], ":constants")
        elif head == ":predicates":
            for p in part[1:]:
                if not isinstance(p, list) or not p:
                    raise ParseError("malformed predicate", line=_line(part))
                predicates[p[0]] = tuple(t for _, t in _typed_list(p[1:], f"predicate {p[0]}"))
        elif head == ":action":
            schemas.append(_parse_action(part))
        elif head in _UNSUPPORTED:
            raise UnsupportedFeature(f"{_UNSUPPORTED[head]} (line {_line(part)})")
        else:
            raise UnsupportedFeature(f"section {head} (line {_line(part)})")
    if name is None:
        raise ParseError("missing (domain <name>)")
    types = {t: (None if t == "object" else p) for t, p in types.items()}
    domain = DomainModel(name, types, predicates, tuple(constants), tuple(schemas))
    for s in domain.action_schemas:
        _validate_schema(domain, s)
    return domain


def _parse_action(part):
    name = part[1]
    fields = {}
    i = 2
    while i < len(part):
        key = part[i]
        if not isinstance(key, str) or not key.startswith(":") or i + 1 >= len(part):
            raise ParseError(f"malformed action {name}", line=_line(part))
        fields[key] = part[i + 1]
        i += 2
    where = f"action {name}"
    params = tuple(_typed_list(fields.get(":parameters", []), where))
    pre_expr = fields.get(":precondition", [])
    eff_expr = fields.get(":effect", [])
    _check_supported(pre_expr, where)
    _check_supported(eff_expr, where)
    pre = []
    for atom in _conjuncts(pre_expr, where):
        if atom[0] == "not":
            raise UnsupportedFeature(f"negative precondition in {where} (line {_line(atom)})")
        pre.append(tuple(atom))
    add, delete = [], []
    for atom in _conjuncts(eff_expr, where):
        if atom[0] == "not":
            if len(atom) != 2 or not isinstance(atom[1], list):
                raise ParseError(f"malformed negation in {where}", line=_line(atom))
            delete.append(tuple(atom[1]))
        else:
            add.append(tuple(atom))
    for atom in pre + add + delete:
        if any(isinstance(a, list) for a in atom):
            raise UnsupportedFeature(f"nested formula in {where}")
    return ActionSchema(name, params, tuple(pre), tuple(add), tuple(delete))


def _validate_schema(domain, schema):
    var_types = dict(schema.parameters)
    consts = dict(domain.constants)
    for atom in schema.precondition + schema.add + schema.delete:
        pred, args = atom[0], atom[1:]
        if pred not in domain.predicates:
            raise StripsTypeError(f"undeclared predicate {pred} in action {schema.name}")
        sig = domain.predicates[pred]
        if len(sig) != len(args):
            raise StripsTypeError(
                f"{pred} expects {len(sig)} arguments, got {len(args)} in action {schema.name}")
        for a, t in zip(args, sig):
            if a.startswith("?"):
                if a not in var_types:
                    raise StripsTypeError(f"unbound variable {a} in action {schema.name}")
                at = var_types[a]
            elif a in consts:
                at = consts[a]
            else:
                raise StripsTypeError(f"unknown constant {a} in action {schema.name}")
            if not (domain.is_subtype(at, t) or domain.is_subtype(t, at)):
                raise StripsTypeError(
                    f"argument {a} of {pred} has type {at}, expected {t} in action {schema.name}")


# ---------------------------------------------------------------- grounding

@dataclass(frozen=True)
class GroundAction:
    name: tuple
    pre: frozenset
    add: frozenset
    delete: frozenset

    def __str__(self):
        return format_atom(self.name)


@dataclass(frozen=True)
class Plan:
    actions: tuple
    cost: int

    def __len__(self):
        return len(self.actions)


@dataclass(frozen=True)
class StateTrajectory:
    states: tuple

    def __len__(self):
        return len(self.states)

    def at(self, t: int):
        return self.states[min(max(int(t), 0), len(self.states) - 1)]


@dataclass(eq=False)
class GroundProblem:
    domain: DomainModel
    objects: dict  # name -> type
    facts: tuple
    actions: tuple
    init: frozenset
    goals: list
    name: str = "problem"
    _fact_bit: dict = field(default_factory=dict, repr=False)
    _action_by_name: dict = field(default_factory=dict, repr=False)
    _masks: list = field(default_factory=list, repr=False)
    _graphs: dict = field(default_factory=dict, repr=False)  # max_states -> StateGraph

    def __post_init__(self):
        self._fact_bit = {f: i for i, f in enumerate(self.facts)}
        self._action_by_name = {a.name: a for a in self.actions}
        self._masks = [(self.mask(a.pre), self.mask(a.add), self.mask(a.delete))
                       for a in self.actions]

    def mask(self, facts) -> int:
        m = 0
        for f in facts:
            try:
                m |= 1 << self._fact_bit[f]
            except KeyError:
                raise StripsTypeError(f"fact {format_atom(f)} is not in the fact universe") from None
        return m

    def unmask(self, m: int) -> frozenset:
        return frozenset(f for f, i in self._fact_bit.items() if m >> i & 1)

    def action(self, name) -> GroundAction:
        if isinstance(name, str):
            name = parse_atom(name)
        try:
            return self._action_by_name[tuple(name)]
        except KeyError:
            raise StripsTypeError(f"unknown grounded action {format_atom(name)}") from None

    def check_facts(self, facts, where):
        for f in facts:
            if f not in self._fact_bit:
                raise StripsTypeError(f"{where}: {format_atom(f)} is not a valid fact")


def _objects_of(domain, objects, t):
    return sorted(o for o, ot in objects.items() if domain.is_subtype(ot, t))


def ground(domain: DomainModel, objects: dict, init, goals, name="problem") -> GroundProblem:
    facts = []
    for pred in sorted(domain.predicates):
        doms = [_objects_of(domain, objects, t) for t in domain.predicates[pred]]
        facts += [(pred, *args) for args in itertools.product(*doms)]
    facts.sort()
    actions = []
    for s in domain.action_schemas:
        doms = [_objects_of(domain, objects, t) for _, t in s.parameters]
        names = [v for v, _ in s.parameters]
        for args in itertools.product(*doms):
            binding = dict(zip(names, args))

            def inst(atom):
                return (atom[0], *[binding.get(a, a) for a in atom[1:]])

            actions.append(GroundAction((s.name, *args),
                                        frozenset(map(inst, s.precondition)),
                                        frozenset(map(inst, s.add)),
                                        frozenset(map(inst, s.delete))))
    actions.sort(key=lambda a: a.name)
    prob = GroundProblem(domain, dict(objects), tuple(facts), tuple(actions),
                         frozenset(init), [frozenset(g) for g in goals], name)
    prob.check_facts(prob.init, ":init")
    for g in prob.goals:
        prob.check_facts(g, ":goal")
    return prob


def parse_problem(text: str, domain: DomainModel) -> GroundProblem:
    expr = parse_sexpr(text)
    if not (isinstance(expr, list) and expr and expr[0] == "define"):
        raise ParseError("expected (define (problem ...) ...)", line=_line(expr))
    name = "problem"
    objects = dict(domain.constants)
    init, goal = [], []
    for part in expr[1:]:
        if not isinstance(part, list) or not part:
            raise ParseError("malformed problem section", line=_line(part))
        head = part[0]
        if head == "problem":
            name = part[1]
        elif head == ":domain":
            continue
        elif head == ":requirements":
            continue
        elif head == ":objects":
            for o, t in _typed_list(part[1:], ":objects"):
                if t not in domain.types:
                    raise StripsTypeError(f"object {o} has undeclared type {t}")
                objects[o] = t
        elif head == ":init":
            for atom in part[1:]:
                _check_supported(atom, ":init")
                init.append(_ground_atom(atom, domain, objects, ":init"))
        elif head == ":goal":
            _check_supported(part[1], ":goal")
            for atom in _conjuncts(part[1], ":goal"):
                if atom[0] == "not":
                    raise UnsupportedFeature(f"negative goal (line {_line(atom)})")
                goal.append(_ground_atom(atom, domain, objects, ":goal"))
        elif head == ":metric":
            raise UnsupportedFeature(f"numeric fluent (:metric, line {_line(part)})")
        else:
            raise UnsupportedFeature(f"section {head} (line {_line(part)})")
    return ground(domain, objects, init, [goal], name)


def _ground_atom(atom, domain, objects, where):
    if not isinstance(atom, list) or not atom or any(isinstance(a, list) for a in atom):
        raise ParseError(f"malformed atom in {where}", line=_line(atom))
    pred, args = atom[0], tuple(atom[1:])
    if pred not in domain.predicates:
        raise StripsTypeError(f"undeclared predicate {pred} in {where}")
    sig = domain.predicates[pred]
    if len(sig) != len(args):
        raise StripsTypeError(f"{pred} expects {len(sig)} arguments, got {len(args)} in {where}")
    for a, t in zip(args, sig):
        if a not in objects:
            raise StripsTypeError(f"undeclared object {a} in {where}")
        if not domain.is_subtype(objects[a], t):
            raise StripsTypeError(f"object {a} of type {objects[a]} used as {t} in {where}")
    return (pred, *args)


def load_problem(domain_path, problem_path) -> GroundProblem:
    domain = parse_domain(Path(domain_path).read_text())
    return parse_problem(Path(problem_path).read_text(), domain)


def format_atom(atom) -> str:
    return "(" + " ".join(atom) + ")"


def parse_atom(text: str) -> tuple:
    inner = text.strip().lower()
    if not (inner.startswith("(") and inner.endswith(")")):
        raise ParseError(f"expected '(name args...)', got {text!r}")
    parts = inner[1:-1].split()
    if not parts:
        raise ParseError("empty atom")
    return tuple(parts)


def parse_fact_conjunction(line: str) -> frozenset:
    """Facts of one hypothesis line: ``(on a b) (clear a)``, commas and ``and`` ignored."""
    atoms = re.findall(r"\(([^()]*)\)", line.lower())
    facts = []
    for a in atoms:
        parts = a.replace(",", " ").split()
        if parts and parts[0] != "and":
            facts.append(tuple(parts))
    return frozenset(facts)


def parse_hypotheses(text: str, problem: GroundProblem | None = None) -> list[frozenset]:
    goals = []
    for raw in text.splitlines():
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        g = parse_fact_conjunction(line)
        if problem is not None:
            problem.check_facts(g, "hypothesis")
        goals.append(g)
    return goals


def parse_observations(text: str, problem: GroundProblem) -> list[GroundAction]:
    out = []
    for raw in text.splitlines():
        line = raw.split(";", 1)[0].strip()
        if line:
            out.append(problem.action(parse_atom(line)))
    return out


def format_plan(plan: Plan) -> str:
    lines = [str(a) for a in plan.actions]
    lines.append(f"; cost = {plan.cost}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- semantics

def apply(s: GroundState, a: GroundAction) -> GroundState:
    missing = a.pre - s
    if missing:
        raise InapplicableAction(
            f"{a} needs {', '.join(format_atom(f) for f in sorted(missing))}")
    return (s - a.delete) | a.add


def rollout(problem: GroundProblem, plan) -> StateTrajectory:
    actions = plan.actions if isinstance(plan, Plan) else plan
    states = [problem.init]
    for step, a in enumerate(actions, 1):
        try:
            states.append(apply(states[-1], a))
        except InapplicableAction as exc:
            raise InapplicableAction(str(exc), step=step) from None
    return StateTrajectory(tuple(states))


def observed_states(problem: GroundProblem, action_observations) -> list[GroundState]:
    """States reached after each observed action (the initial state excluded)."""
    return list(rollout(problem, list(action_observations)).states[1:])


def validate_plan(problem: GroundProblem, plan, goal) -> bool:
    try:
        final = rollout(problem, plan).states[-1]
    except InapplicableAction:
        return False
    return frozenset(goal) <= final


# ---------------------------------------------------------------- top-k

DEFAULT_MAX_STATES = 200_000


class StateGraph:
    """Explicit reachable state graph over bitmask states."""

    def __init__(self, problem: GroundProblem, max_states: int = DEFAULT_MAX_STATES):
        self.problem = problem
        masks = problem._masks
        init = problem.mask(problem.init)
        self.ids = {init: 0}
        self.states = [init]
        self.succ: list[list[tuple[int, int]]] = []
        queue = deque([init])
        self.complete = True
        while queue:
            s = queue.popleft()
            edges = []
            for a_idx, (pre, add, dele) in enumerate(masks):
                if s & pre == pre:
                    t = (s & ~dele) | add
                    tid = self.ids.get(t)
                    if tid is None:
                        if len(self.states) >= max_states:
                            self.complete = False
                            continue
                        tid = len(self.states)
                        self.ids[t] = tid
                        self.states.append(t)
                        queue.append(t)
                    edges.append((a_idx, tid))
            self.succ.append(edges)

    def distances_to(self, goal_mask: int) -> list[float]:
        """Shortest number of actions from every state to a goal state."""
        n = len(self.states)
        pred = [[] for _ in range(n)]
        for s, edges in enumerate(self.succ):
            for _, t in edges:
                pred[t].append(s)
        dist = [float("inf")] * n
        queue = deque()
        for i, s in enumerate(self.states):
            if s & goal_mask == goal_mask:
                dist[i] = 0
                queue.append(i)
        while queue:
            t = queue.popleft()
            for s in pred[t]:
                if dist[s] == float("inf"):
                    dist[s] = dist[t] + 1
                    queue.append(s)
        return dist


def topk_plans(problem: GroundProblem, goal, k: int, optimal_only: bool = False,
               max_states: int = DEFAULT_MAX_STATES) -> list[Plan]:
    """Up to ``k`` distinct loop-free plans for ``goal`` in nondecreasing cost order.

    Plans that visit any state twice are excluded, which makes the plan set
    finite.  The search is best-first over partial plans using the exact
    goal distance of the reachable state graph as heuristic, so complete
    plans are produced cheapest first; equal-cost plans are ordered by their
    action indices.
    """
    counters.record_planner_call()
    if k < 1:
        raise ValueError("k must be positive")
    goal_mask = problem.mask(goal)
    graph = problem._graphs.get(max_states)
    if graph is None:
        # the reachable graph depends only on the problem, so goals share it
        graph = problem._graphs[max_states] = StateGraph(problem, max_states)
    if graph.complete:
        h = graph.distances_to(goal_mask)
    else:
        h = [0] * len(graph.states)
    if h[0] == float("inf"):
        raise Unsolvable(f"goal {sorted(goal)} is unreachable")
    plans = []
    heap = [(h[0], (), (0,))]
    while heap and len(plans) < k:
        f, acts, visited = heapq.heappop(heap)
        sid = visited[-1]
        if graph.states[sid] & goal_mask == goal_mask:
            plans.append(Plan(tuple(problem.actions[a] for a in acts), len(acts)))
        on_path = set(visited)
        g = len(acts) + 1
        for a_idx, tid in graph.succ[sid]:
            if tid in on_path or h[tid] == float("inf"):
                continue
            heapq.heappush(heap, (g + h[tid], acts + (a_idx,), visited + (tid,)))
    if not plans:
        raise Unsolvable(f"goal {sorted(goal)} is unreachable")
    if optimal_only:
        plans = [p for p in plans if p.cost == plans[0].cost]
    return plans
