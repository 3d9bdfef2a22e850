"""Proactive-hint policy, hint selection, simulated students and help-behavior accounting."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .features import FeatureTracker
from .fixtures import derivation_for
from .logic import RULES, ProofSearch, legal_derivations
from .netbuild import (DELETE, DERIVE, HINT_GIVEN, HINT_JUSTIFY, HINT_REQUEST, ON_DEMAND,
                       PROACTIVE, Action, AttemptLog, StepRecord, state_key_of)
from .stepclass import (DEFAULT_METRIC, StepClass, accuracy, capped_time, classify_steps,
                        hjr, optimality, solution_quartiles, step_windows)

ADAPTIVE = "Adaptive"
CONTROL = "Control"
RANDOM = "Random"
GIVE = "GiveProactive"
WITHHOLD = "Withhold"
HN, OK = 1, 0

TOO_QUICK_S = 17.0


class NoSuccessor(LookupError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    mode: str = CONTROL
    random_p: float = 0.0
    max_consecutive_proactive: Optional[int] = 3

    def __post_init__(self):
        if self.mode not in (ADAPTIVE, CONTROL, RANDOM):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if not 0.0 <= self.random_p <= 1.0:
            raise ValueError("random_p must lie in [0, 1]")


def policy_decide(cfg: PolicyConfig, prediction, consecutive_proactive: int, rng=None) -> str:
    """Give a proactive hint or withhold it at step start."""
    capped = (cfg.max_consecutive_proactive is not None
              and consecutive_proactive >= cfg.max_consecutive_proactive)
    if cfg.mode == CONTROL or capped:
        return WITHHOLD
    if cfg.mode == ADAPTIVE:
        return GIVE if prediction == HN else WITHHOLD
    rng = rng if rng is not None else np.random.default_rng()
    return GIVE if rng.random() < cfg.random_p else WITHHOLD


@dataclass(frozen=True)
class HintContent:
    target: str
    state_key: str
    justified: bool = False


def choose_hint(state_key: str, net, q) -> HintContent:
    """Derived statement of the highest-GQV observed successor.

    Ties go to the more traversed edge, then the lexicographically smaller
    statement.  Deletion edges carry no statement and are ignored.
    """
    best = None
    for sig, edge in net.out_edges(state_key):
        if not sig.startswith(DERIVE + ":") or edge.to_key not in q:
            continue
        target = sig.split(":", 3)[3]
        rank = (-q.gqv(edge.to_key), -edge.traversal_count, target)
        if best is None or rank < best[0]:
            best = (rank, target)
    if best is None:
        raise NoSuccessor(state_key)
    return HintContent(best[1], state_key)


# ---------------------------------------------------------------------------
# simulated students


@dataclass(frozen=True)
class SimStudent:
    student_id: str
    skill: float
    hint_follow: float
    help_seek: float
    speed: float
    seed: int

    def __post_init__(self):
        for name in ("skill", "hint_follow", "help_seek"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.speed <= 0:
            raise ValueError("speed must be positive")


@dataclass(frozen=True)
class PopulationSpec:
    """Parameter distributions for a simulated cohort."""

    n_students: int = 40
    skill_beta: tuple = (1.9, 1.6)
    hint_follow: tuple = (0.8, 1.0)
    help_seek: tuple = (0.0, 0.4)
    speed_sd: float = 0.25
    base_time_s: dict = field(default_factory=lambda: {"easy": 16.0, "hard": 26.0})
    time_sd: float = 0.55
    delete_prob: float = 0.08
    wrong_rate: float = 0.8
    restart_prob: float = 0.05
    new_session_prob: float = 0.15
    id_prefix: str = "st"


def make_population(spec: PopulationSpec, seed: int) -> list:
    rng = np.random.default_rng([seed, 0x5EED])
    child_seeds = np.random.SeedSequence(seed).generate_state(spec.n_students)
    out = []
    for i in range(spec.n_students):
        out.append(SimStudent(
            f"{spec.id_prefix}{i:03d}",
            float(rng.beta(*spec.skill_beta)),
            float(rng.uniform(*spec.hint_follow)),
            float(rng.uniform(*spec.help_seek)),
            float(math.exp(rng.normal(0.0, spec.speed_sd))),
            int(child_seeds[i]),
        ))
    return out


@dataclass(frozen=True)
class Phase:
    name: str
    problems: tuple
    cfg: PolicyConfig = PolicyConfig()
    on_demand: bool = True
    predict: bool = False


class Tutor:
    """Historical knowledge available while tutoring: networks, qualities and predictors."""

    def __init__(self, problems, networks=None, qualities=None, models=None):
        self.problems = {p.problem_id: p for p in problems}
        self.search = {}
        for p in problems:
            s = ProofSearch(p)
            s.solve(p.givens)  # raises UnsolvableProblem early
            self.search[p.problem_id] = s
        self.networks = networks or {}
        self.qualities = qualities or {}
        self.models = models
        self.difficulty = {p.problem_id: p.difficulty for p in problems}

    def hint_for(self, problem, state) -> HintContent:
        key = state.key()
        net = self.networks.get(problem.problem_id)
        q = self.qualities.get(problem.problem_id)
        if net is not None and q is not None and key in net.vertices:
            try:
                h = choose_hint(key, net, q)
                if h.target not in state.statements:
                    return h
            except NoSuccessor:
                pass
        _, firsts = self.search[problem.problem_id].solve(state.statements)
        return HintContent(firsts[0], key)


@dataclass
class SimResult:
    attempts: list
    predictions: dict  # (student, problem, attempt, seq) -> (label, prob, state_known)

    def extend(self, other: "SimResult"):
        self.attempts.extend(other.attempts)
        self.predictions.update(other.predictions)


def _random_move(state, problem, rng, spec):
    derived = len(state.derived)
    if derived and rng.random() < spec.delete_prob:
        return ("delete", len(state.givens) + int(rng.integers(derived)))
    # uniform over rules that have a move, then uniform within the rule;
    # trying rules in random order draws from exactly that distribution
    for i in rng.permutation(len(RULES)):
        moves = legal_derivations(state, rules=(RULES[i],), atom_pool=problem.atoms)
        if moves:
            return ("derive", moves[int(rng.integers(len(moves)))])
    raise RuntimeError("no legal move")


def simulate_student(student: SimStudent, phases, tutor: Tutor, spec: PopulationSpec,
                     metric=DEFAULT_METRIC) -> SimResult:
    """Run one student through the phases; fully determined by ``student.seed``."""
    rng = np.random.default_rng(student.seed)
    tracker = FeatureTracker(tutor.difficulty)
    clock = 0.0
    attempts, predictions = [], {}
    first_problem = True
    for phase in phases:
        if not first_problem:
            clock += 86400.0
        for pi, pid in enumerate(phase.problems):
            if pi and rng.random() < spec.new_session_prob:
                clock += 7200.0
            first_problem = False
            problem = tutor.problems[pid]
            attempt_no = 0
            restarted = False
            while True:
                att, clock, restart = _simulate_attempt(student, problem, attempt_no, phase, tutor,
                                                        spec, rng, tracker, clock, predictions,
                                                        allow_restart=not restarted)
                attempts.append(att)
                tracker.end_attempt(att.completed, gave_up=not att.completed and not restart)
                clock += 5.0
                if not restart:
                    break
                restarted = True
                attempt_no += 1
    return SimResult(attempts, predictions)


def _simulate_attempt(student, problem, attempt_no, phase, tutor, spec, rng, tracker, clock,
                      predictions, allow_restart):
    search = tutor.search[problem.problem_id]
    state = problem.start()
    opt = search.distance(state.statements)
    cap = 2 * opt + 6
    sid, pid = student.student_id, problem.problem_id
    tracker.start_attempt(pid, state.statements, clock, state.key())
    records = []
    seq = 0
    consecutive = 0
    pending = None
    last_inefficient = False
    n_steps = 0
    restart = False
    base = spec.base_time_s.get(problem.difficulty, spec.base_time_s["easy"])
    q_hist = tutor.qualities.get(pid)

    def emit(action, pre, post, duration, wrong=0):
        nonlocal seq, clock
        rec = StepRecord(sid, pid, attempt_no, seq, pre, action, post, round(duration, 3), wrong,
                         round(clock, 3))
        seq += 1
        clock += rec.duration_s
        records.append(rec)
        tracker.record(rec)
        return rec

    while not state.is_goal():
        if n_steps >= cap:
            break
        if allow_restart and n_steps >= opt + 4 and rng.random() < spec.restart_prob:
            restart = True
            break
        pre = state.statements
        if pending is not None and pending.state_key != state.key():
            pending = None  # a hint only applies to the state it was given in
        pred = prob = None
        if phase.predict and tutor.models is not None:
            from .predictor import predict_step
            x, known = tracker.snapshot(q_hist)
            pred, prob = predict_step(tutor.models, x, known)
        decision = policy_decide(phase.cfg, pred, consecutive, rng)
        if decision == GIVE:
            pending = tutor.hint_for(problem, state)
            emit(Action(HINT_GIVEN, hint_kind=PROACTIVE, hint_text=pending.target), pre, pre, 0.0)
            consecutive += 1
        else:
            consecutive = 0
            if (phase.on_demand and pending is None and last_inefficient
                    and rng.random() < student.help_seek):
                delay = 20.0 * math.exp(rng.normal(0.0, 0.6)) / student.speed
                emit(Action(HINT_REQUEST), pre, pre, delay)
                pending = tutor.hint_for(problem, state)
                emit(Action(HINT_GIVEN, hint_kind=ON_DEMAND, hint_text=pending.target), pre, pre, 0.0)

        dist_before = search.distance(state.statements)
        follow = pending is not None and rng.random() < student.hint_follow
        time_scale = 1.0
        wrong = 0
        if follow:
            text = pending.target
            d = derivation_for(problem, state.statements, text)
            action = Action(DERIVE, rule=d.rule, premises=d.premises, derived=text)
            time_scale = 0.5
        else:
            wrong = int(rng.poisson(spec.wrong_rate * (1.0 - student.skill)))
            if rng.random() < student.skill:
                _, firsts = search.solve(state.statements)
                text = firsts[int(rng.integers(len(firsts)))]
                d = derivation_for(problem, state.statements, text)
                action = Action(DERIVE, rule=d.rule, premises=d.premises, derived=text)
            else:
                kind, mv = _random_move(state, problem, rng, spec)
                if kind == "delete":
                    action = Action(DELETE, index=mv)
                else:
                    action = Action(DERIVE, rule=mv.rule, premises=mv.premises, derived=mv.derived)
        new_state = state.delete(action.index) if action.kind == DELETE else state.derive(action.derived)
        duration = (base * math.exp(rng.normal(0.0, spec.time_sd)) * time_scale
                    / (student.speed * (0.35 + student.skill)) + 4.0 * wrong)
        rec = emit(action, pre, new_state.statements, duration, wrong)
        if pred is not None:
            predictions[(sid, pid, attempt_no, rec.seq_no)] = (pred, prob, known)
        n_steps += 1
        state = new_state
        if pending is not None and action.kind == DERIVE and action.derived == pending.target:
            emit(Action(HINT_JUSTIFY, hint_text=pending.target), state.statements, state.statements, 0.0)
            pending = None
        elif pending is not None and pending.target in state.statements:
            pending = None
        if not state.is_goal():
            last_inefficient = search.distance(state.statements) >= dist_before
    att = AttemptLog(sid, pid, attempt_no, records, state.is_goal())
    return att, clock, restart


def simulate_population(students, phases, tutor: Tutor, spec: PopulationSpec) -> SimResult:
    """Simulate every student independently (per-student RNG streams)."""
    out = SimResult([], {})
    for st in students:
        out.extend(simulate_student(st, phases, tutor, spec))
    return out


# ---------------------------------------------------------------------------
# help-behavior accounting

EIGHT_WAY = (
    "pred-OK + noHints-OK", "pred-OK + hinted-OK", "pred-HN + hinted-OK", "pred-HN + noHints-OK",
    "pred-HN + noHints-HN", "pred-HN + hinted-HN", "pred-OK + hinted-HN", "pred-OK + noHints-HN",
)


@dataclass(frozen=True)
class StepView:
    student_id: str
    problem_id: str
    seq_no: int
    predicted: int
    observed: int
    hinted: bool
    requested: bool
    step_class: StepClass

    @property
    def category(self) -> str:
        p = "pred-HN" if self.predicted else "pred-OK"
        h = "hinted" if self.hinted else "noHints"
        o = "HN" if self.observed else "OK"
        return f"{p} + {h}-{o}"


def step_views(attempts, predictions: dict, qualities: dict, durations, metric=DEFAULT_METRIC,
               problems=None) -> list:
    """Join predictions, observed classes and hint provision for each state-changing step."""
    out = []
    for att in attempts:
        if problems is not None and att.problem_id not in problems:
            continue
        q = qualities.get(att.problem_id)
        classes = classify_steps(att, q, durations, metric)
        for (step, hints), c in zip(step_windows(att), classes):
            pred = predictions.get((att.student_id, att.problem_id, att.attempt, step.seq_no))
            predicted = pred[0] if pred is not None else OK
            hinted = any(h.action.kind == HINT_GIVEN for h in hints)
            requested = any(h.action.kind == HINT_REQUEST for h in hints)
            out.append(StepView(att.student_id, att.problem_id, step.seq_no, int(predicted),
                                int(c.helpneed), hinted, requested, c.step_class))
    return out


def eight_way(views) -> dict:
    counts = {k: 0 for k in EIGHT_WAY}
    for v in views:
        counts[v.category] += 1
    return counts


@dataclass
class HelpBehaviorReport:
    per_student: dict
    eight_way: dict
    n_steps: int

    def mean(self, name: str) -> float:
        vals = [s[name] for s in self.per_student.values() if s[name] is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def to_json(self) -> dict:
        return {"n_steps": self.n_steps, "eight_way": self.eight_way,
                "means": {k: self.mean(k) for k in ("possible_help_avoidance", "possible_help_abuse",
                                                     "possible_help_appropriateness", "hjr")},
                "per_student": self.per_student}


def hint_counts(attempts, problems=None) -> dict:
    c = Counter()
    for att in attempts:
        if problems is not None and att.problem_id not in problems:
            continue
        for rec in att.steps:
            a = rec.action
            if a.kind == HINT_GIVEN:
                c[a.hint_kind] += 1
                c["given"] += 1
            elif a.kind == HINT_JUSTIFY:
                c["justified"] += 1
            elif a.kind == HINT_REQUEST:
                c["requested"] += 1
                if rec.duration_s < TOO_QUICK_S:
                    c["too_quick"] += 1
    return {k: c[k] for k in (PROACTIVE, ON_DEMAND, "given", "justified", "requested", "too_quick")}


def evaluate_help_behavior(attempts, predictions: dict, qualities: dict, durations,
                           metric=DEFAULT_METRIC, problems=None) -> HelpBehaviorReport:
    """Per-student possible help avoidance, abuse and appropriateness (percent of steps) and HJR."""
    views = step_views(attempts, predictions, qualities, durations, metric, problems)
    by_student = defaultdict(list)
    for v in views:
        by_student[v.student_id].append(v)
    hints_by_student = defaultdict(list)
    for att in attempts:
        hints_by_student[att.student_id].append(att)
    per = {}
    for s, vs in sorted(by_student.items()):
        n = len(vs)
        hc = hint_counts(hints_by_student[s], problems)
        per[s] = {
            "steps": n,
            "possible_help_avoidance": 100.0 * sum(v.observed and not v.hinted for v in vs) / n,
            "possible_help_abuse": 100.0 * sum(v.requested and not v.predicted and not v.observed
                                               for v in vs) / n,
            "possible_help_appropriateness": 100.0 * sum(v.predicted and v.hinted for v in vs) / n,
            "hinted_fraction": sum(v.hinted for v in vs) / n,
            "hjr": hjr(hc["given"], hc["justified"]),
            "too_quick_requests": hc["too_quick"],
        }
    return HelpBehaviorReport(per, eight_way(views), len(views))


# ---------------------------------------------------------------------------
# experiment


@dataclass(frozen=True)
class ExperimentSpec:
    pretest: tuple
    training: tuple
    posttest: tuple
    historical: PopulationSpec = PopulationSpec(n_students=60, id_prefix="h")
    cohort: PopulationSpec = PopulationSpec(n_students=40, id_prefix="s")
    n_trees: int = 100
    max_depth: int = 12
    multipliers: tuple = (("state_based", 1.0), ("state_free", 1.0))
    metric: str = DEFAULT_METRIC.value

    @property
    def problems(self):
        return self.pretest + self.training + self.posttest


def historical_corpus(spec: ExperimentSpec, seed: int) -> SimResult:
    """Control-condition cohort used to build networks and train the predictor."""
    tutor = Tutor(spec.problems)
    students = make_population(spec.historical, seed)
    phases = _phases(spec, PolicyConfig(CONTROL), predict=False)
    return simulate_population(students, phases, tutor, spec.historical)


def _phases(spec, cfg, predict):
    ids = lambda ps: tuple(p.problem_id for p in ps)
    return (Phase("pretest", ids(spec.pretest), PolicyConfig(CONTROL), on_demand=False),
            Phase("training", ids(spec.training), cfg, on_demand=True, predict=predict),
            Phase("posttest", ids(spec.posttest), PolicyConfig(CONTROL), on_demand=False))


@dataclass
class Knowledge:
    networks: dict
    qualities: dict
    durations: object
    models: dict
    dataset: object
    history: list = field(default_factory=list)


def learn_from_history(history: SimResult, spec: ExperimentSpec, seed: int) -> Knowledge:
    from .features import build_dataset
    from .netbuild import build_networks
    from .predictor import ForestParams, train_models
    from .quality import compute_quality
    from .stepclass import DurationModel

    nets = build_networks(history.attempts)
    qs = {pid: compute_quality(n) for pid, n in nets.items()}
    dur = DurationModel.fit(history.attempts)
    diff = {p.problem_id: p.difficulty for p in spec.problems}
    train_ids = {p.problem_id for p in spec.training}
    data = build_dataset(history.attempts, qs, dur, spec.metric, diff, train_ids, tag="hist")
    params = ForestParams(n_trees=spec.n_trees, max_depth=spec.max_depth)
    models = train_models(data, dict(spec.multipliers), seed, params)
    return Knowledge(nets, qs, dur, models, data, list(history.attempts))


def _per_student_posttest(attempts, quartiles, post_ids):
    opt, time_, acc = defaultdict(list), defaultdict(float), {}
    right, wrong = Counter(), Counter()
    for att in attempts:
        if att.problem_id not in post_ids:
            continue
        time_[att.student_id] += capped_time(r.duration_s for r in att.steps)
        for r in att.steps:
            right[att.student_id] += r.action.kind == DERIVE
            wrong[att.student_id] += r.wrong_app_count
        if att.completed and att.problem_id in quartiles:
            q1, q3 = quartiles[att.problem_id]
            if q3 > q1 > 0:
                opt[att.student_id].append(optimality(len(att.state_steps), q1, q3))
    students = sorted(time_)
    for s in students:
        acc[s] = accuracy(right[s], wrong[s])
    return ({s: (float(np.mean(opt[s])) if opt[s] else 0.0) for s in students}, dict(time_), acc)


@dataclass
class ConditionReport:
    name: str
    step_classes: dict
    hints: dict
    help_behavior: HelpBehaviorReport
    posttest_optimality: dict
    posttest_time: dict
    posttest_accuracy: dict
    per_student_classes: dict

    def to_json(self) -> dict:
        return {"name": self.name, "step_classes": self.step_classes, "hints": self.hints,
                "hjr": hjr(self.hints["given"], self.hints["justified"]),
                "help_behavior": self.help_behavior.to_json(),
                "posttest_optimality": self.posttest_optimality,
                "posttest_time_min": self.posttest_time,
                "posttest_accuracy": self.posttest_accuracy}


@dataclass
class ExperimentReport:
    seed: int
    conditions: dict
    comparisons: dict
    settings: dict

    def to_json(self) -> dict:
        return {"seed": self.seed, "settings": self.settings,
                "conditions": {k: c.to_json() for k, c in self.conditions.items()},
                "comparisons": self.comparisons}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1, default=_json_default)

    def table5_csv(self) -> str:
        return _table([c.value for c in StepClass],
                      {k: c.step_classes for k, c in self.conditions.items()})

    def table6_csv(self) -> str:
        rows = {k: dict(c.hints, hjr=hjr(c.hints["given"], c.hints["justified"]))
                for k, c in self.conditions.items()}
        return _table(list(next(iter(rows.values()))), rows)

    def eight_way_csv(self) -> str:
        return _table(list(EIGHT_WAY), {k: c.help_behavior.eight_way for k, c in self.conditions.items()})

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["condition", "student", "hinted_fraction", "too_quick_requests"])
        for k, c in self.conditions.items():
            for s, d in c.help_behavior.per_student.items():
                w.writerow([k, s, repr(d["hinted_fraction"]), d["too_quick_requests"]])
        return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def _table(row_names, columns: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow(["category"] + names)
    for r in row_names:
        w.writerow([r] + [columns[n].get(r) for n in names])
    return buf.getvalue()


def _compare(a: dict, b: dict) -> dict:
    from .stats import mann_whitney_u, welch_t
    x = [v for v in a.values() if v is not None]
    y = [v for v in b.values() if v is not None]
    out = {"n": [len(x), len(y)], "mean": [float(np.mean(x)) if x else None,
                                           float(np.mean(y)) if y else None]}
    if x and y:
        mw = mann_whitney_u(x, y)
        out["mann_whitney"] = {"U": mw.statistic, "z": mw.z_or_df, "p": mw.p_value}
    if len(x) > 1 and len(y) > 1:
        wt = welch_t(x, y)
        out["welch"] = {"t": wt.statistic, "df": wt.z_or_df, "p": wt.p_value}
    return out


def run_experiment(cfg_a: PolicyConfig, cfg_b: PolicyConfig, spec: ExperimentSpec, seed: int,
                   names=("Adaptive", "Control"), knowledge: Knowledge = None) -> ExperimentReport:
    """Historical cohort, then the same new cohort under two policies, then comparisons."""
    from .netbuild import build_networks
    from .quality import compute_quality

    if knowledge is None:
        knowledge = learn_from_history(historical_corpus(spec, seed), spec, seed)
    tutor = Tutor(spec.problems, knowledge.networks, knowledge.qualities, knowledge.models)
    students = make_population(spec.cohort, seed + 1)
    results = {}
    for name, cfg in zip(names, (cfg_a, cfg_b)):
        results[name] = simulate_population(students, _phases(spec, cfg, predict=True), tutor,
                                            spec.cohort)

    # observed classes use networks pooled over history and both conditions
    pool = list(knowledge.history) + [a for r in results.values() for a in r.attempts]
    eval_nets = build_networks(pool)
    eval_q = {pid: compute_quality(n) for pid, n in eval_nets.items()}
    train_ids = {p.problem_id for p in spec.training}
    post_ids = {p.problem_id for p in spec.posttest}
    quartiles = solution_quartiles(knowledge.history)

    conditions = {}
    for name, res in results.items():
        hb = evaluate_help_behavior(res.attempts, res.predictions, eval_q, knowledge.durations,
                                    spec.metric, train_ids)
        views = step_views(res.attempts, res.predictions, eval_q, knowledge.durations,
                           spec.metric, train_ids)
        counts = Counter(v.step_class.value for v in views)
        per_student = defaultdict(Counter)
        for v in views:
            per_student[v.student_id][v.step_class.value] += 1
        opt, tm, acc = _per_student_posttest(res.attempts, quartiles, post_ids)
        conditions[name] = ConditionReport(
            name, {c.value: counts.get(c.value, 0) for c in StepClass},
            hint_counts(res.attempts, train_ids), hb, opt, tm, acc,
            {s: dict(c) for s, c in sorted(per_student.items())})

    a, b = (conditions[n] for n in names)
    comparisons = {
        "posttest_optimality": _compare(a.posttest_optimality, b.posttest_optimality),
        "posttest_time_min": _compare(a.posttest_time, b.posttest_time),
        "posttest_accuracy": _compare(a.posttest_accuracy, b.posttest_accuracy),
    }
    students_ids = sorted(set(a.per_student_classes) | set(b.per_student_classes))
    for c in StepClass:
        comparisons[f"training_{c.value}"] = _compare(
            {s: a.per_student_classes.get(s, {}).get(c.value, 0) for s in students_ids},
            {s: b.per_student_classes.get(s, {}).get(c.value, 0) for s in students_ids})
    for key in ("possible_help_avoidance", "possible_help_abuse", "possible_help_appropriateness"):
        comparisons[key] = _compare({s: d[key] for s, d in a.help_behavior.per_student.items()},
                                    {s: d[key] for s, d in b.help_behavior.per_student.items()})
    settings = {"conditions": {n: asdict(c) for n, c in zip(names, (cfg_a, cfg_b))},
                "historical_students": spec.historical.n_students,
                "cohort_students": spec.cohort.n_students, "n_trees": spec.n_trees,
                "max_depth": spec.max_depth, "metric": spec.metric,
                "multipliers": dict(spec.multipliers), "too_quick_s": TOO_QUICK_S}
    return ExperimentReport(seed, conditions, comparisons, settings)
