"""Constructed problems and hand-checkable fixture networks.

The problem bank is built for this package (the tutor's original problems
are not public).  ``P-fig3`` is the worked example used throughout: start
state ``A->C, C->E, ~E&D, A|F`` with conclusion ``F``.
"""

from __future__ import annotations

import numpy as np

from .logic import Problem, find_derivation
from .netbuild import (DELETE, DERIVE, Action, AttemptLog, Edge, InteractionNetwork,
                       StepRecord, Vertex, build_network)

P_FIG3 = Problem("P-fig3", ("A->C", "C->E", "~E&D", "A|F"), "F", "easy")

PRETEST = (
    Problem("pre1", ("A&D", "A->B", "B->C"), "C", "easy"),
    Problem("pre2", ("A|B", "~A", "B->C", "E"), "C&E", "easy"),
)

TRAINING = (
    Problem("t1", ("A->B", "B->C", "A"), "C", "easy"),
    Problem("t2", ("P->Q", "~Q", "P|R"), "R", "easy"),
    Problem("t3", ("A&B", "A->C", "B->D"), "C&D", "hard"),
    Problem("t4", ("A->B", "B->C", "C->D", "A"), "D", "easy"),
    Problem("t5", ("A|B", "A->C", "~C", "B->D"), "D", "easy"),
    Problem("t6", ("P&Q", "Q->R", "R->~S", "S|T"), "T", "hard"),
    Problem("t7", ("A->B", "~B&C", "A|D", "D->E"), "E&C", "hard"),
    Problem("t8", ("A->(B&C)", "A", "C->D"), "D", "easy"),
    Problem("t9", ("P->Q", "Q->R", "~R", "P|S", "S->T"), "T", "hard"),
    Problem("t10", ("A|B", "~B", "A->C", "C->D", "D->E"), "E", "hard"),
    Problem("t11", ("(A|B)->C", "A", "C->D"), "D|E", "hard"),
    Problem("t12", ("A->B", "C->D", "A|C", "~B"), "D", "easy"),
    Problem("t13", ("P->Q", "R->S", "P", "S->T", "R"), "Q&T", "hard"),
    Problem("t14", ("A&~B", "C->B", "C|D", "D->E"), "E", "hard"),
    Problem("t15", ("A->B", "B->C", "~C", "A|D", "D->E", "E->F"), "F", "hard"),
)

POSTTEST = (
    Problem("post1", ("A->B", "B->C", "C->D", "~D", "A|E", "E->F", "F->G"), "G", "hard"),
    Problem("post2", ("P&Q", "Q->R", "R->S", "S->T", "P->U", "T&U->W"), "W", "hard"),
    Problem("post3", ("A|B", "~A&C", "B->D", "D->E", "C->F", "E&F->G"), "G", "hard"),
    Problem("post4", ("A->B", "~B", "A|C", "C->D", "D->E", "E->F", "F->G"), "G", "hard"),
)

ALL_PROBLEMS = (P_FIG3,) + PRETEST + TRAINING + POSTTEST
PROBLEMS_BY_ID = {p.problem_id: p for p in ALL_PROBLEMS}


# ---------------------------------------------------------------------------
# trajectories on P-fig3

T_SHORT = ("A->E", "~E", "~A", "F")
T_MEDIUM = ("A->E", "D", "~E", "~A", "F")
T_LONG = ("A->E", "~E", "~C", "D", "~C&D", "D|A", "~A", "F")
# extra completions that keep the historical median length at 8
T_SHORTCUT = ("A->E", "~E", "~C", "~A", "D", "~A&D", "F")
T_OTHER = ("D", "~E", "~C", "~A", "~C&D", "D|A", "~A&D", "F")
JUNK = "(A->C)|C"

TRAJECTORIES = {"short": T_SHORT, "medium": T_MEDIUM, "long": T_LONG}

# (trajectory, 1-based step) flagged inefficient by an expert
EXPERT_INEFFICIENT = frozenset({("long", 3), ("long", 4), ("long", 5), ("long", 6)})

EXPECTED_INEFFICIENT = {
    "LocalAbsolute": frozenset(),
    "LocalRelative": frozenset({("long", 3)}),
    "GlobalRelative": frozenset({("medium", 2), ("long", 3)}),
    "GlobalAbsolute": EXPERT_INEFFICIENT,
}


def derivation_for(problem: Problem, statements, text: str):
    """First legal derivation of ``text`` from ``statements`` (rule, premise indices)."""
    state = problem.start()
    for s in statements[len(problem.givens):]:
        state = state.derive(s)
    d = find_derivation(state, text, atom_pool=problem.atoms)
    if d is not None:
        return d
    raise ValueError(f"{text!r} is not derivable in one step from {statements}")


def trajectory_attempt(problem: Problem, texts, student_id: str, completed=None,
                       durations=None, attempt: int = 0) -> AttemptLog:
    """Attempt that derives ``texts`` in order with real rules and premise indices."""
    cur = tuple(problem.givens)
    steps = []
    t = 0.0
    for i, text in enumerate(texts):
        d = derivation_for(problem, cur, text)
        dur = 10.0 if durations is None else float(durations[i])
        post = cur + (text,)
        steps.append(StepRecord(student_id, problem.problem_id, attempt, i, cur,
                                Action(DERIVE, rule=d.rule, premises=d.premises, derived=text),
                                post, dur, 0, t))
        t += dur
        cur = post
    if completed is None:
        completed = problem.conclusion in cur
    return AttemptLog(student_id, problem.problem_id, attempt, steps, completed)


# counts tuned so that the four efficiency metrics reproduce the expert labelling
_COMPLETE_COUNTS = (("short", T_SHORT, 7), ("medium", T_MEDIUM, 1), ("long", T_LONG, 4),
                    ("shortcut", T_SHORTCUT, 1), ("other", T_OTHER, 6))
_DEAD_END_PREFIXES = ((T_MEDIUM[:2], 1), (T_LONG[:6], 3), (T_LONG[:7], 2), (T_SHORTCUT[:4], 1))


def three_trajectory_attempts() -> list:
    """Historical corpus on P-fig3 with the short/medium/long trajectories plus abandoned branches."""
    out = []
    n = 0
    for name, traj, count in _COMPLETE_COUNTS:
        for _ in range(count):
            out.append(trajectory_attempt(P_FIG3, traj, f"{name}{n:02d}", True))
            n += 1
    for prefix, count in _DEAD_END_PREFIXES:
        for _ in range(count):
            out.append(trajectory_attempt(P_FIG3, prefix + (JUNK,), f"quit{n:02d}", False))
            n += 1
    return out


def three_trajectory_network() -> InteractionNetwork:
    return build_network(three_trajectory_attempts(), P_FIG3.problem_id)


def trajectory_key(traj, n_steps: int) -> str:
    from .netbuild import state_key_of
    return state_key_of(P_FIG3.problem_id, P_FIG3.givens + tuple(traj[:n_steps]))


def goal_reward_attempts() -> list:
    """Completed lengths 4, 5, 8, 8, 8: distinct lengths {4, 5, 8}, median 8."""
    out = [trajectory_attempt(P_FIG3, T_SHORT, "g0"), trajectory_attempt(P_FIG3, T_MEDIUM, "g1")]
    out += [trajectory_attempt(P_FIG3, T_LONG, f"g{i}") for i in range(2, 5)]
    return out


def goal_reward_network() -> InteractionNetwork:
    return build_network(goal_reward_attempts(), P_FIG3.problem_id)


# ---------------------------------------------------------------------------
# small networks


def chain_network() -> InteractionNetwork:
    """start -> s1 -> goal on problem t1 (solution length 2)."""
    p = PROBLEMS_BY_ID["t1"]
    return build_network([trajectory_attempt(p, ("B", "C"), "c0")], p.problem_id)


def branch_network() -> InteractionNetwork:
    """start splits evenly between s1 (-> goal) and an abandoned s2."""
    p = PROBLEMS_BY_ID["t1"]
    atts = [trajectory_attempt(p, ("B", "C"), "b0"),
            trajectory_attempt(p, ("A->C",), "b1", completed=False)]
    return build_network(atts, p.problem_id)


def cycle_network() -> InteractionNetwork:
    """P-fig3 with a derive-then-delete loop back to the start state."""
    p = P_FIG3
    base = trajectory_attempt(p, ("D",), "cy0", completed=False)
    first = base.steps[0]
    back = StepRecord("cy0", p.problem_id, 0, 1, first.post_state, Action(DELETE, index=4),
                      first.pre_state, 5.0, 0, 10.0)
    rest = trajectory_attempt(p, T_SHORT, "cy0").steps
    rest = [StepRecord(s.student_id, s.problem_id, 0, s.seq_no + 2, s.pre_state, s.action,
                       s.post_state, s.duration_s, 0, s.timestamp + 15.0) for s in rest]
    looped = AttemptLog("cy0", p.problem_id, 0, [first, back] + rest, True)
    atts = [looped, trajectory_attempt(p, T_MEDIUM, "cy1"),
            trajectory_attempt(p, ("D", JUNK), "cy2", completed=False)]
    return build_network(atts, p.problem_id)


def fixture_networks() -> dict:
    """The five shipped fixture networks."""
    return {
        "chain": chain_network(),
        "branch": branch_network(),
        "cycle": cycle_network(),
        "goal_reward": goal_reward_network(),
        "three_trajectory": three_trajectory_network(),
    }


def random_network(rng: np.random.Generator, n_states: int, p_edge: float = 0.3,
                   n_goals: int = 2) -> InteractionNetwork:
    """Random network over opaque state keys, possibly cyclic.

    Vertex 0 is the start; the last ``n_goals`` vertices are goals.  Every
    other vertex gets at least one outgoing edge unless it is drawn as a
    dead end.
    """
    n_states = max(n_states, n_goals + 1)
    pid = "rand"
    keys = [f"{pid}|s{i:02d}" for i in range(n_states)]
    net = InteractionNetwork(pid)
    goal_ids = set(range(n_states - n_goals, n_states))
    for i, k in enumerate(keys):
        net.vertices[k] = Vertex(visit_count=int(rng.integers(1, 6)), is_start=(i == 0))
    for g in goal_ids:
        net.vertices[keys[g]].is_goal = True
        net.vertices[keys[g]].solution_length = int(rng.integers(2, 9))
    for i in range(n_states):
        if i in goal_ids:
            continue
        if i > 0 and rng.random() < 0.15:
            net.vertices[keys[i]].is_dead_end = True
            continue
        targets = [j for j in range(n_states) if j != i and rng.random() < p_edge]
        if not targets:
            targets = [int(rng.choice([j for j in range(n_states) if j != i]))]
        for j in targets:
            net.edges[(keys[i], f"a{j}")] = Edge(keys[j], int(rng.integers(1, 10)))
    return net
