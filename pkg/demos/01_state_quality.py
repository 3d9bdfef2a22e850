"""Scoring proof states: local vs global quality, and which steps look inefficient.

Run with ``python3 demos/01_state_quality.py``.
"""
from helpneed import fixtures
from helpneed.quality import compute_quality, goal_rewards
from helpneed.stepclass import EfficiencyMetric, progress

# %% Goal rewards shrink as a finished proof gets longer than the typical one.
net = fixtures.goal_reward_network()
for key, reward in goal_rewards(net).items():
    print(f"goal after {net.vertices[key].solution_length} steps -> reward {reward:g}")

# %% A dead-end branch: local quality ignores it, global quality averages it in.
branch = fixtures.branch_network()
q = compute_quality(branch)
print(f"\nbranch start: LQV {q.lqv(branch.start_key):.2f}  GQV {q.gqv(branch.start_key):.2f}")

# %% Three students solve the same problem in 4, 5 and 8 steps.
q = compute_quality(fixtures.three_trajectory_network())
print("\nsteps flagged inefficient per metric:")
for metric in EfficiencyMetric:
    flagged = []
    for name, traj in fixtures.TRAJECTORIES.items():
        for i in range(len(traj)):
            keys = [fixtures.trajectory_key(traj, j) for j in (0, i, i + 1)]
            if progress(metric, q, *keys) < 0:
                flagged.append(f"{name}-{i + 1}")
    print(f"  {metric.value:15s} {', '.join(flagged) or '(none)'}")

# Only GlobalAbsolute flags exactly the detour in the long solution.
print("\nglobal quality along the long trajectory:")
print("  " + " ".join(f"{q.gqv(fixtures.trajectory_key(fixtures.T_LONG, i)):.1f}"
                      for i in range(len(fixtures.T_LONG) + 1)))
