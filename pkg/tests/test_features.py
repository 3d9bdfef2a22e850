import numpy as np
import pytest

from helpneed import fixtures
from helpneed.features import (FEATURE_INDEX, FEATURE_NAMES, FREE_FEATURES, STATE_FEATURES,
                               FeatureTracker, StepDataset, build_dataset, extract_features,
                               label_step, replay_attempt)
from helpneed.netbuild import Action, AttemptLog, HINT_GIVEN, PROACTIVE, StepRecord
from helpneed.quality import compute_quality
from helpneed.stepclass import DurationModel, StepClass, progress

Q3T = compute_quality(fixtures.three_trajectory_network())


def _f(x, name):
    return x[FEATURE_INDEX[name]]


def test_layout():
    assert len(STATE_FEATURES) == 8
    assert FEATURE_NAMES[:8] == STATE_FEATURES
    assert len(set(FEATURE_NAMES)) == len(FEATURE_NAMES)
    assert "pTime" in FREE_FEATURES and "tSessionCount" in FREE_FEATURES


def test_first_step_features():
    att = fixtures.trajectory_attempt(fixtures.P_FIG3, fixtures.T_SHORT, "a")
    x, known = extract_features([], att, 0, Q3T)
    assert known
    for name in FREE_FEATURES:
        if name[0] in "pt" and name not in ("pSolSize", "pNewSession", "tSessionCount"):
            assert _f(x, name) == 0, name
    assert _f(x, "pNewSession") == 1
    assert _f(x, "pSolSize") == 4


def test_counters_after_one_rule_application():
    p = fixtures.PROBLEMS_BY_ID["t1"]
    att = fixtures.trajectory_attempt(p, ("B", "C"), "a", durations=[30.0, 10.0])
    assert att.steps[0].action.rule == "MP"
    x, _ = extract_features([], att, 1)
    assert _f(x, "pRightApp") == 1
    assert _f(x, "pAccuracy") == 1.0
    assert _f(x, "pTime") == 30.0
    assert _f(x, "sTime") == 30.0
    assert _f(x, "tStepCount") == 1


def test_state_features_equal_progress():
    att = fixtures.trajectory_attempt(fixtures.P_FIG3, fixtures.T_LONG, "a")
    for t in range(1, len(fixtures.T_LONG)):
        x, known = extract_features([], att, t, Q3T)
        start = fixtures.trajectory_key(fixtures.T_LONG, 0)
        prev = fixtures.trajectory_key(fixtures.T_LONG, t - 1)
        cur = fixtures.trajectory_key(fixtures.T_LONG, t)
        assert known
        assert _f(x, "GAP") == progress("GlobalAbsolute", Q3T, start, prev, cur)
        assert _f(x, "GRP") == progress("GlobalRelative", Q3T, start, prev, cur)
        assert _f(x, "LAP") == progress("LocalAbsolute", Q3T, start, prev, cur)
        assert _f(x, "LRP") == progress("LocalRelative", Q3T, start, prev, cur)
        assert _f(x, "globalCurrent") == Q3T.gqv(cur)


def test_unknown_state_features_zeroed():
    att = fixtures.trajectory_attempt(fixtures.PROBLEMS_BY_ID["t1"], ("B", "C"), "a")
    x, known = extract_features([], att, 1, Q3T)
    assert not known
    assert np.all(x[:8] == 0)


def test_history_carries_into_totals():
    p = fixtures.PROBLEMS_BY_ID["t1"]
    first = fixtures.trajectory_attempt(p, ("B", "C"), "a", durations=[5.0, 5.0])
    second = fixtures.trajectory_attempt(fixtures.P_FIG3, fixtures.T_SHORT, "a")
    second = AttemptLog("a", "P-fig3", 0, [
        StepRecord(s.student_id, s.problem_id, 0, s.seq_no, s.pre_state, s.action, s.post_state,
                   s.duration_s, 0, s.timestamp + 20.0) for s in second.steps], True)
    x, _ = extract_features([first], second, 0, None, {"t1": "easy"})
    assert _f(x, "tStepCount") == 2
    assert _f(x, "tTime") == 10.0
    assert _f(x, "tEasyProblems") == 1
    assert _f(x, "pNewSession") == 0
    assert _f(x, "tSessionCount") == 1


def test_trailing_hints_reach_totals():
    p = fixtures.PROBLEMS_BY_ID["t1"]
    att = fixtures.trajectory_attempt(p, ("B",), "a", completed=False)
    s = att.steps[0]
    hint = StepRecord("a", "t1", 0, 1, s.post_state, Action(HINT_GIVEN, hint_kind=PROACTIVE,
                                                            hint_text="C"), s.post_state, 0.0)
    att = AttemptLog("a", "t1", 0, [s, hint], False)
    tr = FeatureTracker()
    replay_attempt(tr, att)
    x, _ = tr.snapshot()
    assert _f(x, "tProactiveHintCount") == 1
    assert _f(x, "tSkips") == 0


def test_labels():
    assert label_step(StepClass.FUTILE) == 1
    assert label_step(StepClass.FAR_OFF) == 1
    assert label_step(StepClass.EXPERT) == 0
    assert label_step(StepClass.OPPORTUNISTIC) == 0


def test_build_dataset_rows_and_csv():
    atts = fixtures.three_trajectory_attempts()
    dur = DurationModel.fit(atts)
    data = build_dataset(atts, {"P-fig3": Q3T}, dur, tag="fx")
    assert len(data) == sum(len(a.state_steps) for a in atts)
    assert data.state_known.all()
    text = data.to_csv()
    assert text.splitlines()[0].startswith("student,tag,state_known,GAP")
    both = StepDataset.concat([data, data])
    assert len(both) == 2 * len(data)
    assert len(data.subset(data.y == 1)) == int(data.y.sum())


def test_dataset_is_deterministic(small_history, small_knowledge, small_spec):
    diff = {p.problem_id: p.difficulty for p in small_spec.problems}
    train_ids = {p.problem_id for p in small_spec.training}
    again = build_dataset(small_history.attempts, small_knowledge.qualities,
                          small_knowledge.durations, small_spec.metric, diff, train_ids, tag="hist")
    assert again.to_csv() == small_knowledge.dataset.to_csv()
    assert 0.1 < again.positive_rate < 0.4
