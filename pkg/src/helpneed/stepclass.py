"""Step duration, efficiency and HelpNeed classification, plus performance metrics."""

from __future__ import annotations

import csv
import enum
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats as _st

from .netbuild import AttemptLog


class EfficiencyMetric(str, enum.Enum):
    GLOBAL_ABSOLUTE = "GlobalAbsolute"
    GLOBAL_RELATIVE = "GlobalRelative"
    LOCAL_ABSOLUTE = "LocalAbsolute"
    LOCAL_RELATIVE = "LocalRelative"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for m in cls:
            if value in (m.value, m.name, m.name.lower(), m.value.lower()):
                return m
        raise ValueError(f"unknown efficiency metric {value!r}")


DEFAULT_METRIC = EfficiencyMetric.GLOBAL_ABSOLUTE


class StepClass(str, enum.Enum):
    EXPERT = "Expert"
    STRATEGIC = "Strategic"
    OPPORTUNISTIC = "Opportunistic"
    FAR_OFF = "FarOff"
    FUTILE = "Futile"

    @property
    def helpneed(self) -> bool:
        return self in (StepClass.FAR_OFF, StepClass.FUTILE)


class InsufficientData(ValueError):
    pass


class UnknownState(KeyError):
    pass


class DegenerateQuartiles(ValueError):
    pass


class ZeroVariance(ValueError):
    pass


# ---------------------------------------------------------------------------
# duration


def duration_threshold(durations) -> float:
    """75th percentile (linear interpolation) of historical step durations."""
    d = np.asarray(list(durations), dtype=float)
    if len(d) < 4:
        raise InsufficientData(f"need at least 4 step durations, got {len(d)}")
    return float(np.percentile(d, 75, method="linear"))


def step_windows(attempt: AttemptLog) -> list:
    """Group records into state-changing steps.

    Each window is ``(state_step, hint_events)`` where ``hint_events`` are the
    hint records that happened while that step was being worked on.  Hint
    records after the last state change form no window.
    """
    windows, pending = [], []
    for rec in attempt.steps:
        if rec.action.changes_state:
            windows.append((rec, pending))
            pending = []
        else:
            pending.append(rec)
    return windows


def window_duration(window) -> float:
    step, hints = window
    return step.duration_s + sum(h.duration_s for h in hints)


@dataclass
class DurationModel:
    p75: dict

    @classmethod
    def fit(cls, attempts, estimator: str = "per_step", min_steps: int = 4):
        """Per-problem thresholds from historical attempts.

        ``per_step`` pools every state-changing step of the problem;
        ``per_solution`` takes each attempt's mean step time first.
        """
        pools = defaultdict(list)
        for att in attempts:
            times = [window_duration(w) for w in step_windows(att)]
            if not times:
                continue
            if estimator == "per_step":
                pools[att.problem_id].extend(times)
            elif estimator == "per_solution":
                pools[att.problem_id].append(float(np.mean(times)))
            else:
                raise ValueError(f"unknown duration estimator {estimator!r}")
        out = {}
        for pid, values in pools.items():
            if len(values) >= min_steps:
                thr = duration_threshold(values)
                if thr > 0:
                    out[pid] = thr
        return cls(out)

    def is_long(self, problem_id: str, duration_s: float) -> bool:
        return duration_s > self.p75[problem_id]


# ---------------------------------------------------------------------------
# efficiency


def progress(metric, q, start_key: str, pre_key: str, post_key: str) -> float:
    metric = EfficiencyMetric.parse(metric)
    for key in (start_key, pre_key, post_key):
        if key not in q:
            raise UnknownState(key)
    if metric is EfficiencyMetric.GLOBAL_ABSOLUTE:
        return q.gqv(post_key) - q.gqv(start_key)
    if metric is EfficiencyMetric.GLOBAL_RELATIVE:
        return q.gqv(post_key) - q.gqv(pre_key)
    if metric is EfficiencyMetric.LOCAL_ABSOLUTE:
        return q.lqv(post_key) - q.lqv(start_key)
    return q.lqv(post_key) - q.lqv(pre_key)


def is_efficient(progress_value: float) -> bool:
    return progress_value >= 0


@dataclass
class ClassifiedStep:
    student_id: str
    problem_id: str
    seq_no: int
    step_class: StepClass
    metric_value: Optional[float]
    duration_s: float
    is_long: bool
    efficient: Optional[bool]

    @property
    def helpneed(self) -> bool:
        return self.step_class.helpneed


def classify_steps(attempt: AttemptLog, q, dur: DurationModel, metric=DEFAULT_METRIC) -> list:
    """Classify each state-changing step of an attempt.

    Quick inefficient steps form runs: the first of a run is Opportunistic,
    later ones FarOff.  Any efficient or long step ends a run.  When a state
    is missing from ``q`` the step counts as inefficient (quick ones stay
    eligible for Opportunistic; long ones are Futile).
    """
    metric = EfficiencyMetric.parse(metric)
    windows = step_windows(attempt)
    if not windows:
        return []
    start_key = windows[0][0].pre_key
    out = []
    in_run = False
    for win in windows:
        step = win[0]
        duration = window_duration(win)
        long_ = dur.is_long(attempt.problem_id, duration)
        try:
            value = progress(metric, q, start_key, step.pre_key, step.post_key)
            efficient = is_efficient(value)
        except UnknownState:
            value, efficient = None, None
        if efficient:
            cls = StepClass.STRATEGIC if long_ else StepClass.EXPERT
            in_run = False
        elif long_:
            cls = StepClass.FUTILE
            in_run = False
        else:
            cls = StepClass.FAR_OFF if in_run else StepClass.OPPORTUNISTIC
            in_run = True
        out.append(ClassifiedStep(attempt.student_id, attempt.problem_id, step.seq_no, cls,
                                  value, duration, long_, efficient))
    return out


def classify_attempt(attempt: AttemptLog, q, dur: DurationModel, metric=DEFAULT_METRIC) -> list:
    return [c.step_class for c in classify_steps(attempt, q, dur, metric)]


def classify_sequence(flags) -> list:
    """Classes for ``(is_long, efficient)`` pairs, using the same run rule."""
    out, in_run = [], False
    for long_, efficient in flags:
        if efficient:
            out.append(StepClass.STRATEGIC if long_ else StepClass.EXPERT)
            in_run = False
        elif long_:
            out.append(StepClass.FUTILE)
            in_run = False
        else:
            out.append(StepClass.FAR_OFF if in_run else StepClass.OPPORTUNISTIC)
            in_run = True
    return out


def classified_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["student", "problem", "seq", "class", "metric_value", "duration_s", "is_long"])
    for r in rows:
        w.writerow([r.student_id, r.problem_id, r.seq_no, r.step_class.value,
                    "" if r.metric_value is None else repr(r.metric_value),
                    repr(r.duration_s), int(r.is_long)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# performance metrics


def optimality(steps: float, q1: float, q3: float) -> float:
    """``exp(-n)`` with steps normalized to the problem's interquartile range, clamped at 0."""
    if q3 == q1:
        raise DegenerateQuartiles(f"q1 == q3 == {q1}")
    if not (q3 > q1 > 0):
        raise ValueError("need q3 > q1 > 0")
    n = max(0.0, (steps - q1) / (q3 - q1))
    return math.exp(-n)


def solution_quartiles(attempts) -> dict:
    """Per-problem (Q1, Q3) of state-changing step counts in completed attempts."""
    counts = defaultdict(list)
    for att in attempts:
        if att.completed:
            counts[att.problem_id].append(len(att.state_steps))
    return {pid: (float(np.percentile(c, 25)), float(np.percentile(c, 75)))
            for pid, c in counts.items()}


def capped_time(durations, cap_s: float = 60.0) -> float:
    """Total minutes with each action capped at ``cap_s`` seconds."""
    return sum(min(float(d), cap_s) for d in durations) / 60.0


def accuracy(right_apps: int, wrong_apps: int) -> Optional[float]:
    total = right_apps + wrong_apps
    return right_apps / total if total > 0 else None


def hjr(hints_given: int, hints_justified: int) -> Optional[float]:
    return hints_justified / hints_given if hints_given > 0 else None


@dataclass
class PearsonResult:
    r: float
    t_statistic: float
    p_value: float
    n: int


def pearson(x, y) -> PearsonResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length 1-d sequences")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ZeroVariance("a variable has zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return PearsonResult(r, math.copysign(math.inf, r), 0.0, n)
    t = r * math.sqrt((n - 2) / (1 - r * r))
    p = 2 * float(_st.t.sf(abs(t), n - 2))
    return PearsonResult(r, t, p, n)


# ---------------------------------------------------------------------------
# metric selection


def helpneed_rate(classified) -> Optional[float]:
    classified = list(classified)
    if not classified:
        return None
    return sum(c.helpneed for c in classified) / len(classified)


def correlate_metrics(training, posttest, qualities: dict, durations: DurationModel,
                      quartiles: dict) -> dict:
    """Correlate per-student training HelpNeed rate with posttest optimality, per metric.

    ``training``/``posttest`` are attempt lists; ``qualities`` maps problem id
    to its quality table; ``quartiles`` maps posttest problem id to (Q1, Q3).
    Returns ``{metric: (helpneed_pct, PearsonResult)}``.
    """
    opt = defaultdict(list)
    for att in posttest:
        if att.completed and att.problem_id in quartiles:
            q1, q3 = quartiles[att.problem_id]
            opt[att.student_id].append(optimality(len(att.state_steps), q1, q3))
    out = {}
    for metric in EfficiencyMetric:
        per_student = defaultdict(list)
        for att in training:
            q = qualities.get(att.problem_id)
            if q is None or att.problem_id not in durations.p75:
                continue
            per_student[att.student_id].extend(classify_steps(att, q, durations, metric))
        students = sorted(s for s in per_student if s in opt and per_student[s])
        rates = [helpneed_rate(per_student[s]) for s in students]
        opts = [float(np.mean(opt[s])) for s in students]
        total = sum(len(per_student[s]) for s in per_student)
        hn = sum(c.helpneed for s in per_student for c in per_student[s])
        out[metric] = (100.0 * hn / total if total else float("nan"), pearson(rates, opts))
    return out
