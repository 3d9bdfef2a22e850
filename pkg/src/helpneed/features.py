"""Step-start feature extraction at step, problem and total granularity.

A single incremental :class:`FeatureTracker` is used both for replaying
logged attempts into a training table and for live prediction inside the
simulator, so the two can never disagree.

Indirect-proof, direction-change, backward-step and rule-description
counters are part of the layout but stay 0: the logs carry no such events.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .netbuild import DELETE, DERIVE, HINT_GIVEN, HINT_REQUEST, ON_DEMAND, PROACTIVE
from .stepclass import DEFAULT_METRIC, EfficiencyMetric, classify_steps, step_windows

STATE_FEATURES = ("GAP", "GRP", "LAP", "LRP", "localPrevious", "globalPrevious",
                  "localCurrent", "globalCurrent")

_LEVELS = {
    "Time": "spt",
    "AvgStepTime": "pt",
    "ActionCount": "spt",
    "DirectProofActionCount": "spt",
    "IndirectProofActionCount": "spt",
    "DirectionChange": "spt",
    "FDActionCount": "spt",
    "BDActionCount": "spt",
    "StepCount": "pt",
    "SolSize": "p",
    "RuleDescription": "spt",
    "HintRequest": "spt",
    "ProactiveHintCount": "spt",
    "OnDemandHintCount": "spt",
    "Deleted": "pt",
    "RightApp": "pt",
    "WrongApp": "spt",
    "Accuracy": "spt",
    "SessionCount": "t",
    "NewSession": "p",
    "Skips": "t",
    "Restarts": "t",
    "EasyProblems": "t",
    "DifficultProblems": "t",
}

FREE_FEATURES = tuple(lvl + name for name, levels in _LEVELS.items() for lvl in levels)
FEATURE_NAMES = STATE_FEATURES + FREE_FEATURES
FEATURE_INDEX = {n: i for i, n in enumerate(FEATURE_NAMES)}
_ALWAYS_ZERO = ("IndirectProofActionCount", "DirectionChange", "BDActionCount", "RuleDescription")


def label_step(step_class) -> int:
    """1 for HelpNeed (FarOff or Futile), else 0."""
    return int(step_class.helpneed)


def _counter():
    return defaultdict(float)


def _accuracy(c) -> float:
    total = c["RightApp"] + c["WrongApp"]
    return c["RightApp"] / total if total > 0 else 0.0


class FeatureTracker:
    """Accumulates one student's interaction history in time order.

    Call :meth:`start_attempt` before each attempt, :meth:`record` for every
    record as it happens, :meth:`snapshot` at each step start and
    :meth:`end_attempt` when the attempt stops.
    """

    def __init__(self, difficulty=None, session_gap_s: float = 1800.0):
        self.difficulty = difficulty or {}
        self.session_gap_s = session_gap_s
        self.t = _counter()
        self.p = _counter()
        self.s = _counter()
        self.window = _counter()
        self.last_ts = None
        self.new_session = 0
        self.attempts_seen = defaultdict(int)
        self.cur_problem = None
        self.cur_statements = ()
        self.prev_key = None
        self.cur_key = None
        self.start_key = None

    # -- lifecycle ---------------------------------------------------------
    def start_attempt(self, problem_id: str, start_state, ts: float, start_key: str):
        if self.last_ts is None or ts - self.last_ts > self.session_gap_s:
            self.t["SessionCount"] += 1
            self.new_session = 1
        else:
            self.new_session = 0
        if self.attempts_seen[problem_id] > 0:
            self.t["Restarts"] += 1
        self.attempts_seen[problem_id] += 1
        self.cur_problem = problem_id
        self.cur_statements = tuple(start_state)
        self.p = _counter()
        self.s = _counter()
        self.window = _counter()
        self.start_key = self.prev_key = self.cur_key = start_key
        self.last_ts = ts

    def end_attempt(self, completed: bool, gave_up: bool = False):
        # hint events after the last state change still count toward totals
        for k, v in self.window.items():
            self.t[k] += v
        self.window = _counter()
        if completed:
            if self.difficulty.get(self.cur_problem, "easy") == "hard":
                self.t["DifficultProblems"] += 1
            else:
                self.t["EasyProblems"] += 1
        elif gave_up:
            self.t["Skips"] += 1

    def record(self, rec):
        """Feed one log record (hint event or state-changing step)."""
        w = self.window
        act = rec.action
        w["Time"] += rec.duration_s
        w["ActionCount"] += 1 + rec.wrong_app_count
        w["WrongApp"] += rec.wrong_app_count
        if act.kind == HINT_REQUEST:
            w["HintRequest"] += 1
        elif act.kind == HINT_GIVEN:
            if act.hint_kind == PROACTIVE:
                w["ProactiveHintCount"] += 1
            elif act.hint_kind == ON_DEMAND:
                w["OnDemandHintCount"] += 1
        elif act.kind == DERIVE:
            w["RightApp"] += 1
        elif act.kind == DELETE:
            w["Deleted"] += 1
        self.last_ts = rec.timestamp + rec.duration_s
        if act.changes_state:
            w["StepCount"] += 1
            for c in (self.p, self.t):
                for k, v in w.items():
                    c[k] += v
            self.s = w
            self.window = _counter()
            self.prev_key, self.cur_key = rec.pre_key, rec.post_key
            self.cur_statements = tuple(rec.post_state)

    # -- features ----------------------------------------------------------
    def snapshot(self, q=None):
        """Feature vector at the start of the next step and whether its state is known."""
        x = np.zeros(len(FEATURE_NAMES))
        known = q is not None and all(k in q for k in (self.start_key, self.prev_key, self.cur_key))
        if known:
            g0, gp, gc = q.gqv(self.start_key), q.gqv(self.prev_key), q.gqv(self.cur_key)
            l0, lp, lc = q.lqv(self.start_key), q.lqv(self.prev_key), q.lqv(self.cur_key)
            x[:8] = (gc - g0, gc - gp, lc - l0, lc - lp, lp, gp, lc, gc)
        levels = {"s": self.s, "p": self.p, "t": self.t}
        for name in FREE_FEATURES:
            lvl, base = name[0], name[1:]
            c = levels[lvl]
            if base in ("ActionCount", "DirectProofActionCount", "FDActionCount"):
                v = c["ActionCount"]
            elif base in _ALWAYS_ZERO:
                v = 0.0
            elif base == "AvgStepTime":
                v = c["Time"] / c["StepCount"] if c["StepCount"] else 0.0
            elif base == "Accuracy":
                v = _accuracy(c)
            elif base == "SolSize":
                v = float(len(self.cur_statements))
            elif base == "NewSession":
                v = float(self.new_session)
            else:
                v = c[base]
            x[FEATURE_INDEX[name]] = v
        return x, bool(known)


@dataclass
class StepDataset:
    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    state_known: np.ndarray
    tags: np.ndarray
    keys: list = field(default_factory=list)
    names: tuple = FEATURE_NAMES

    def __len__(self):
        return len(self.y)

    def subset(self, mask) -> "StepDataset":
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return StepDataset(self.X[idx], self.y[idx], self.groups[idx], self.state_known[idx],
                           self.tags[idx], [self.keys[i] for i in idx], self.names)

    @property
    def positive_rate(self) -> float:
        return float(self.y.mean()) if len(self.y) else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["student", "tag", "state_known"] + list(self.names) + ["label"])
        for i in range(len(self.y)):
            w.writerow([self.groups[i], self.tags[i], int(self.state_known[i])]
                       + [repr(float(v)) for v in self.X[i]] + [int(self.y[i])])
        return buf.getvalue()

    @classmethod
    def concat(cls, parts) -> "StepDataset":
        parts = list(parts)
        return cls(np.vstack([p.X for p in parts]), np.concatenate([p.y for p in parts]),
                   np.concatenate([p.groups for p in parts]),
                   np.concatenate([p.state_known for p in parts]),
                   np.concatenate([p.tags for p in parts]),
                   [k for p in parts for k in p.keys], parts[0].names)


def student_histories(attempts) -> dict:
    """Attempts grouped per student in time order."""
    by_student = defaultdict(list)
    for att in attempts:
        by_student[att.student_id].append(att)
    for lst in by_student.values():
        lst.sort(key=lambda a: (a.steps[0].timestamp if a.steps else 0.0, a.problem_id, a.attempt))
    return dict(sorted(by_student.items()))


def _gave_up(att, history, i):
    """An incomplete attempt is a skip unless the student restarts the same problem next."""
    if att.completed:
        return False
    nxt = history[i + 1] if i + 1 < len(history) else None
    return not (nxt is not None and nxt.problem_id == att.problem_id)


def replay_attempt(tracker: FeatureTracker, att, q=None, on_step=None, gave_up=False):
    """Feed one attempt through ``tracker``; ``on_step(window_index, x, known)`` fires at each step start."""
    if not att.steps:
        return
    first = att.steps[0]
    tracker.start_attempt(att.problem_id, first.pre_state, first.timestamp, first.pre_key)
    idx = 0
    for win_step, hints in step_windows(att):
        if on_step is not None:
            x, known = tracker.snapshot(q)
            on_step(idx, x, known)
        for h in hints:
            tracker.record(h)
        tracker.record(win_step)
        idx += 1
    last = max((i for i, r in enumerate(att.steps) if r.action.changes_state), default=-1)
    for rec in att.steps[last + 1:]:
        tracker.record(rec)
    tracker.end_attempt(att.completed, gave_up)


def extract_features(history, attempt, t: int, q=None, difficulty=None):
    """Features at the start of step ``t`` (0-based) of ``attempt`` given earlier attempts."""
    tracker = FeatureTracker(difficulty)
    for i, att in enumerate(history):
        replay_attempt(tracker, att, None, gave_up=_gave_up(att, list(history) + [attempt], i))
    out = {}

    def grab(i, x, known):
        if i == t:
            out["v"] = (x, known)

    replay_attempt(tracker, attempt, q, grab)
    if "v" not in out:
        raise IndexError(f"attempt has no step {t}")
    return out["v"]


def build_dataset(attempts, qualities: dict, durations, metric=DEFAULT_METRIC, difficulty=None,
                  problems=None, tag: str = "") -> StepDataset:
    """Labelled step-start table for every state-changing step of the listed problems.

    All attempts feed the counters; rows are emitted only for attempts whose
    problem is in ``problems`` (default: every problem with a quality table
    and a duration threshold).
    """
    metric = EfficiencyMetric.parse(metric)
    rows, labels, groups, known_flags, keys = [], [], [], [], []
    for student, history in student_histories(attempts).items():
        tracker = FeatureTracker(difficulty)
        for i, att in enumerate(history):
            q = qualities.get(att.problem_id)
            emit = (q is not None and att.problem_id in durations.p75
                    and (problems is None or att.problem_id in problems))
            classes = classify_steps(att, q, durations, metric) if emit else None

            def on_step(j, x, known, att=att, classes=classes):
                if classes is None:
                    return
                rows.append(x)
                labels.append(label_step(classes[j].step_class))
                groups.append(student)
                known_flags.append(known)
                keys.append((student, att.problem_id, att.attempt, classes[j].seq_no))

            replay_attempt(tracker, att, q, on_step, _gave_up(att, history, i))
    n = len(labels)
    X = np.vstack(rows) if rows else np.zeros((0, len(FEATURE_NAMES)))
    return StepDataset(X, np.array(labels, dtype=int), np.array(groups, dtype=object),
                       np.array(known_flags, dtype=bool), np.array([tag] * n, dtype=object), keys)
