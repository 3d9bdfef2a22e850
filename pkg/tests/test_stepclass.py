import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from helpneed import fixtures
from helpneed.netbuild import Action, AttemptLog, HINT_GIVEN, HINT_REQUEST, StepRecord
from helpneed.quality import compute_quality
from helpneed.stepclass import (DegenerateQuartiles, DurationModel, EfficiencyMetric,
                                InsufficientData, StepClass, ZeroVariance, accuracy, capped_time,
                                classified_to_csv, classify_sequence, classify_steps,
                                correlate_metrics, duration_threshold, hjr, is_efficient, optimality,
                                pearson, progress, solution_quartiles, step_windows,
                                window_duration)

Q3T = compute_quality(fixtures.three_trajectory_network())
QUICK, LONG = False, True


def _key(traj, n):
    return fixtures.trajectory_key(traj, n)


# ---------------------------------------------------------------------------
# durations


def test_percentile_interpolation():
    assert duration_threshold([1, 2, 3, 4]) == 3.25
    # numpy-free oracle: rank (n-1)*0.75 with linear interpolation
    vals = [5.0, 1.0, 9.0, 7.0, 3.0, 2.0]
    s = sorted(vals)
    pos = (len(s) - 1) * 0.75
    lo = int(pos)
    assert duration_threshold(vals) == pytest.approx(s[lo] + (pos - lo) * (s[lo + 1] - s[lo]))
    with pytest.raises(InsufficientData):
        duration_threshold([1, 2, 3])


def test_long_threshold_scale():
    dur = DurationModel({"hard": 5.48 * 60, "easy": 2.95 * 60})
    assert dur.is_long("hard", 5.49 * 60)
    assert not dur.is_long("hard", 5.48 * 60)
    assert dur.is_long("easy", 2.96 * 60)
    assert not dur.is_long("easy", 2.9 * 60)


def _hinted_attempt():
    p = fixtures.PROBLEMS_BY_ID["t1"]
    base = fixtures.trajectory_attempt(p, ("B", "C"), "h", durations=[10.0, 20.0])
    s0, s1 = base.steps
    g = p.givens
    hints = [StepRecord("h", "t1", 0, 1, s0.post_state, Action(HINT_REQUEST), s0.post_state, 7.0),
             StepRecord("h", "t1", 0, 2, s0.post_state, Action(HINT_GIVEN, hint_kind="on_demand",
                                                               hint_text="C"), s0.post_state, 0.0)]
    s1 = StepRecord("h", "t1", 0, 3, s1.pre_state, s1.action, s1.post_state, 20.0)
    return AttemptLog("h", "t1", 0, [s0] + hints + [s1], True), g


def test_step_windows_attach_hints():
    att, _ = _hinted_attempt()
    wins = step_windows(att)
    assert len(wins) == 2
    assert [len(h) for _, h in wins] == [0, 2]
    assert window_duration(wins[1]) == 27.0


def test_duration_estimators():
    atts = [fixtures.trajectory_attempt(fixtures.P_FIG3, fixtures.T_SHORT, "a", durations=[1, 2, 3, 4]),
            fixtures.trajectory_attempt(fixtures.P_FIG3, fixtures.T_MEDIUM, "b", durations=[5] * 5)]
    per_step = DurationModel.fit(atts, "per_step")
    assert per_step.p75["P-fig3"] == duration_threshold([1, 2, 3, 4, 5, 5, 5, 5, 5])
    more = atts + [fixtures.trajectory_attempt(fixtures.P_FIG3, fixtures.T_SHORT, c, durations=[d] * 4)
                   for c, d in (("c", 8.0), ("d", 12.0))]
    per_sol = DurationModel.fit(more, "per_solution")
    assert per_sol.p75["P-fig3"] == float(np.percentile([2.5, 5.0, 8.0, 12.0], 75))
    with pytest.raises(ValueError):
        DurationModel.fit(atts, "median")


# ---------------------------------------------------------------------------
# efficiency


def test_progress_examples():
    s = _key(fixtures.T_SHORT, 0)
    for m in EfficiencyMetric:
        assert progress(m, Q3T, s, s, s) == 0
    chain = compute_quality(fixtures.chain_network())
    keys = sorted(chain.values, key=chain.gqv)
    assert progress("GlobalRelative", chain, keys[0], keys[1], keys[2]) == pytest.approx(11.0)


def test_medium_second_step_direction():
    args = (_key(fixtures.T_MEDIUM, 0), _key(fixtures.T_MEDIUM, 1), _key(fixtures.T_MEDIUM, 2))
    assert progress("GlobalRelative", Q3T, *args) < 0
    # local quality is flat here (both states are three steps from the goal), so the step stays efficient
    assert progress("LocalRelative", Q3T, *args) == pytest.approx(0.0, abs=1e-9)


def test_efficiency_boundary():
    assert is_efficient(0)
    assert not is_efficient(-0.001)
    assert is_efficient(11)


def _inefficient(metric):
    bad = set()
    for name, traj in fixtures.TRAJECTORIES.items():
        for i in range(len(traj)):
            if progress(metric, Q3T, _key(traj, 0), _key(traj, i), _key(traj, i + 1)) < 0:
                bad.add((name, i + 1))
    return bad


@pytest.mark.parametrize("metric", list(EfficiencyMetric), ids=lambda m: m.value)
def test_three_trajectory_patterns(metric):
    assert _inefficient(metric) == fixtures.EXPECTED_INEFFICIENT[metric.value]


def test_global_absolute_matches_expert():
    assert _inefficient(EfficiencyMetric.GLOBAL_ABSOLUTE) == fixtures.EXPERT_INEFFICIENT
    total = sum(len(t) for t in fixtures.TRAJECTORIES.values())
    assert total == 17


# ---------------------------------------------------------------------------
# classification


def test_sequence_examples():
    assert classify_sequence([(QUICK, False)] * 3) == [StepClass.OPPORTUNISTIC, StepClass.FAR_OFF,
                                                       StepClass.FAR_OFF]
    assert classify_sequence([(LONG, True)]) == [StepClass.STRATEGIC]
    assert classify_sequence([(LONG, False)]) == [StepClass.FUTILE]
    assert classify_sequence([(QUICK, False), (QUICK, True), (QUICK, False)]) == \
        [StepClass.OPPORTUNISTIC, StepClass.EXPERT, StepClass.OPPORTUNISTIC]
    assert classify_sequence([(QUICK, False), (LONG, False), (QUICK, False)]) == \
        [StepClass.OPPORTUNISTIC, StepClass.FUTILE, StepClass.OPPORTUNISTIC]


def _reference_classes(flags):
    """Direct reading of the class table: FarOff iff the previous step was quick and inefficient."""
    out = []
    for i, (long_, eff) in enumerate(flags):
        if eff:
            out.append("Strategic" if long_ else "Expert")
        elif long_:
            out.append("Futile")
        elif i and not flags[i - 1][0] and not flags[i - 1][1]:
            out.append("FarOff")
        else:
            out.append("Opportunistic")
    return out


@given(st.lists(st.tuples(st.booleans(), st.booleans()), max_size=30))
def test_sequence_partition_and_reference(flags):
    got = classify_sequence(flags)
    assert len(got) == len(flags)
    assert [c.value for c in got] == _reference_classes(flags)


def test_helpneed_flags():
    assert StepClass.FUTILE.helpneed and StepClass.FAR_OFF.helpneed
    assert not StepClass.EXPERT.helpneed
    assert not StepClass.OPPORTUNISTIC.helpneed
    assert not StepClass.STRATEGIC.helpneed


def test_classify_attempt_skips_hint_events():
    att, _ = _hinted_attempt()
    q = compute_quality(fixtures.chain_network())
    dur = DurationModel({"t1": 15.0})
    rows = classify_steps(att, q, dur)
    assert [r.seq_no for r in rows] == [0, 3]
    assert [r.step_class for r in rows] == [StepClass.EXPERT, StepClass.STRATEGIC]
    text = classified_to_csv(rows)
    assert text.splitlines()[0] == "student,problem,seq,class,metric_value,duration_s,is_long"


def test_unknown_states_fall_back_to_duration():
    att = fixtures.trajectory_attempt(fixtures.PROBLEMS_BY_ID["t1"], ("B", "C"), "u",
                                      durations=[5.0, 50.0])
    empty = compute_quality(fixtures.branch_network())
    empty.values.clear()
    rows = classify_steps(att, empty, DurationModel({"t1": 20.0}))
    assert [r.step_class for r in rows] == [StepClass.OPPORTUNISTIC, StepClass.FUTILE]
    assert rows[0].metric_value is None


# ---------------------------------------------------------------------------
# performance metrics


def test_optimality_endpoints():
    assert optimality(3, 4, 8) == 1.0
    assert optimality(4, 4, 8) == 1.0
    assert optimality(8, 4, 8) == pytest.approx(math.exp(-1), abs=1e-12)
    assert optimality(6, 4, 8) == pytest.approx(math.exp(-0.5))
    with pytest.raises(DegenerateQuartiles):
        optimality(5, 4, 4)


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0.5, 10), st.floats(0.1, 10))
def test_optimality_monotone_and_bounded(a, b, q1, width):
    lo, hi = sorted((a, b))
    o_lo, o_hi = optimality(lo, q1, q1 + width), optimality(hi, q1, q1 + width)
    assert 0 < o_hi <= o_lo <= 1


def test_capped_time_and_rates():
    assert capped_time([30, 30]) == 1.0
    assert capped_time([600]) == 1.0
    assert capped_time([]) == 0.0
    assert accuracy(9, 1) == 0.9
    assert accuracy(0, 0) is None
    assert hjr(10, 9) == 0.9
    assert hjr(0, 0) is None


def test_pearson_examples_and_oracle():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    assert pearson(x, x).r == 1.0
    assert pearson(x, [-v for v in x]).r == -1.0
    xs = [2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 6.1, 2.8, 4.9, 3.7]
    ys = [1.2, 2.9, 1.1, 4.8, 3.1, 3.5, 5.2, 2.0, 3.9, 2.4]
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxy = sum(a * b for a, b in zip(xs, ys))
    sxx, syy = sum(a * a for a in xs), sum(b * b for b in ys)
    r = (n * sxy - sx * sy) / math.sqrt((n * sxx - sx ** 2) * (n * syy - sy ** 2))
    res = pearson(xs, ys)
    assert res.r == pytest.approx(r, abs=1e-12)
    assert res.p_value == pytest.approx(sps.pearsonr(xs, ys).pvalue, rel=1e-9)
    with pytest.raises(ZeroVariance):
        pearson([1, 1, 1], [1, 2, 3])


def test_solution_quartiles():
    atts = [fixtures.trajectory_attempt(fixtures.P_FIG3, t, f"q{i}")
            for i, t in enumerate([fixtures.T_SHORT, fixtures.T_MEDIUM, fixtures.T_LONG,
                                   fixtures.T_LONG])]
    q1, q3 = solution_quartiles(atts)["P-fig3"]
    assert (q1, q3) == (float(np.percentile([4, 5, 8, 8], 25)), float(np.percentile([4, 5, 8, 8], 75)))


def test_helpneed_rate_correlates_negatively(small_history, small_knowledge, small_spec):
    train_ids = {p.problem_id for p in small_spec.training}
    post_ids = {p.problem_id for p in small_spec.posttest}
    atts = small_history.attempts
    post = [a for a in atts if a.problem_id in post_ids]
    res = correlate_metrics([a for a in atts if a.problem_id in train_ids], post,
                            small_knowledge.qualities, small_knowledge.durations,
                            solution_quartiles(post))
    pct, pr = res[EfficiencyMetric.GLOBAL_ABSOLUTE]
    assert 0 < pct < 100
    assert pr.r < 0
