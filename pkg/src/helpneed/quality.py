"""Local and global state quality by value iteration on interaction networks.

Local quality backs up the best successor (max); global quality backs up the
traversal-weighted expectation over all observed successors, with goal
rewards graded by solution length.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .netbuild import InteractionNetwork


class NoGoal(ValueError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, max_iterations, residual):
        self.max_iterations = max_iterations
        self.residual = residual
        super().__init__(f"no convergence after {max_iterations} sweeps (residual {residual:.3g})")


@dataclass(frozen=True)
class RewardConfig:
    goal_reward: float = 100.0
    error_penalty: float = -10.0
    use_error_penalty: bool = False
    action_cost: float = -1.0
    grade_floor: float = 80.0
    gamma: float = 0.9
    tolerance: float = 1e-9
    max_iterations: int = 100_000

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.grade_floor >= self.goal_reward:
            raise ValueError("grade_floor must be below goal_reward")

    @property
    def dead_end_reward(self) -> float:
        return self.error_penalty if self.use_error_penalty else 0.0


class CompiledNetwork:
    """Index arrays for a network: successor lists and transition weights."""

    def __init__(self, net: InteractionNetwork):
        self.net = net
        self.keys = list(net.vertices)
        self.index = {k: i for i, k in enumerate(self.keys)}
        n = len(self.keys)
        self.absorbing = np.array([net.vertices[k].absorbing for k in self.keys], dtype=bool)
        self.is_goal = np.array([net.vertices[k].is_goal for k in self.keys], dtype=bool)
        self.is_dead_end = np.array([net.vertices[k].is_dead_end for k in self.keys], dtype=bool)

        counts = [dict() for _ in range(n)]
        for (src, _), e in net.edges.items():
            i, j = self.index[src], self.index[e.to_key]
            if self.absorbing[i]:
                continue
            counts[i][j] = counts[i].get(j, 0) + e.traversal_count
        src, dst, prob, starts = [], [], [], [0]
        for i in range(n):
            total = sum(counts[i].values())
            for j, c in sorted(counts[i].items()):
                src.append(i)
                dst.append(j)
                prob.append(c / total)
            starts.append(len(dst))
        self.src = np.array(src, dtype=np.int64)
        self.dst = np.array(dst, dtype=np.int64)
        self.prob = np.array(prob, dtype=float)
        self.starts = np.array(starts, dtype=np.int64)
        self.has_out = np.diff(self.starts) > 0
        bad = ~self.absorbing & ~self.has_out
        if bad.any():
            raise ValueError(f"non-absorbing vertex without successors: {self.keys[int(np.argmax(bad))]}")

    def __len__(self):
        return len(self.keys)

    def reward_vector(self, cfg: RewardConfig, goal_values=None) -> np.ndarray:
        r = np.full(len(self.keys), cfg.action_cost, dtype=float)
        r[self.is_dead_end] = cfg.dead_end_reward
        for i in np.flatnonzero(self.is_goal):
            key = self.keys[i]
            r[i] = cfg.goal_reward if goal_values is None else goal_values[key]
        return r

    def transition_matrix(self) -> np.ndarray:
        p = np.zeros((len(self.keys), len(self.keys)))
        np.add.at(p, (self.src, self.dst), self.prob)
        return p

    def backup_local(self, v, reward, gamma):
        out = reward.copy()
        if len(self.dst):
            segs = self.starts[:-1][self.has_out]
            best = np.maximum.reduceat(v[self.dst], segs)
            out[self.has_out] = reward[self.has_out] + gamma * best
        return out

    def backup_global(self, v, reward, gamma):
        out = reward.copy()
        if len(self.dst):
            acc = np.zeros(len(v))
            np.add.at(acc, self.src, self.prob * v[self.dst])
            out[self.has_out] = reward[self.has_out] + gamma * acc[self.has_out]
        return out


@dataclass
class Solution:
    values: dict
    iterations: int
    residual: float


def _iterate(backup, reward, cfg, init):
    v = np.full(len(reward), float(init)) if np.ndim(init) == 0 else np.asarray(init, float).copy()
    # stop once the a-posteriori bound gamma/(1-gamma)*residual is within tolerance,
    # so any two starts end within 2*tolerance of each other
    stop = cfg.tolerance * (1 - cfg.gamma) / cfg.gamma
    residual = np.inf
    for it in range(1, cfg.max_iterations + 1):
        nv = backup(v, reward, cfg.gamma)
        residual = float(np.max(np.abs(nv - v))) if len(v) else 0.0
        v = nv
        if residual <= stop:
            return v, it, residual
    raise NonConvergence(cfg.max_iterations, residual)


def _compiled(net):
    return net if isinstance(net, CompiledNetwork) else CompiledNetwork(net)


def goal_rewards(net, cfg: RewardConfig = RewardConfig()) -> dict:
    """Length-graded goal rewards: shortest goal gets the full reward, median length the grade floor."""
    net = net.net if isinstance(net, CompiledNetwork) else net
    goals = {k: v for k, v in net.vertices.items() if v.is_goal}
    if not goals:
        raise NoGoal(f"network {net.problem_id!r} has no goal vertex")
    shortest = min(v.solution_length for v in goals.values())
    lengths = []
    for v in goals.values():
        lengths.extend([v.solution_length] * max(v.visit_count, 1))
    delta_median = float(np.median(lengths)) - shortest
    penalty = (cfg.goal_reward - cfg.grade_floor) / delta_median if delta_median > 0 else 0.0
    return {k: max(0.0, cfg.goal_reward - penalty * (v.solution_length - shortest))
            for k, v in sorted(goals.items())}


def local_quality(net, cfg: RewardConfig = RewardConfig(), init=0.0) -> Solution:
    comp = _compiled(net)
    reward = comp.reward_vector(cfg)
    v, it, res = _iterate(comp.backup_local, reward, cfg, init)
    return Solution(dict(zip(comp.keys, v.tolist())), it, res)


def global_quality(net, cfg: RewardConfig = RewardConfig(), gr=None, init=0.0) -> Solution:
    comp = _compiled(net)
    if gr is None:
        gr = goal_rewards(comp, cfg)
    reward = comp.reward_vector(cfg, gr)
    v, it, res = _iterate(comp.backup_global, reward, cfg, init)
    return Solution(dict(zip(comp.keys, v.tolist())), it, res)


def contraction_check(net, cfg: RewardConfig, v1, v2, kind: str = "global", gr=None,
                      slack: float = 1e-9) -> bool:
    """Check ``|B v1 - B v2|_inf <= gamma |v1 - v2|_inf`` for one backup operator.

    ``v1``/``v2`` are dicts keyed by state or arrays in network vertex order.
    """
    comp = _compiled(net)
    a = _as_vector(comp, v1)
    b = _as_vector(comp, v2)
    if kind == "global":
        reward = comp.reward_vector(cfg, gr if gr is not None else goal_rewards(comp, cfg))
        backup = comp.backup_global
    elif kind == "local":
        reward = comp.reward_vector(cfg)
        backup = comp.backup_local
    else:
        raise ValueError(f"unknown backup {kind!r}")
    lhs = np.max(np.abs(backup(a, reward, cfg.gamma) - backup(b, reward, cfg.gamma)), initial=0.0)
    rhs = cfg.gamma * np.max(np.abs(a - b), initial=0.0)
    return bool(lhs <= rhs + slack)


def _as_vector(comp, values):
    if isinstance(values, dict):
        return np.array([values[k] for k in comp.keys], dtype=float)
    return np.asarray(values, dtype=float)


@dataclass
class QualityValue:
    lqv: float
    gqv: float


@dataclass
class QualityTable:
    values: dict = field(default_factory=dict)
    iterations_local: int = 0
    iterations_global: int = 0
    final_residual_local: float = 0.0
    final_residual_global: float = 0.0
    goal_rewards: dict = field(default_factory=dict)
    start_key: str = ""

    def __contains__(self, key):
        return key in self.values

    def __getitem__(self, key) -> QualityValue:
        return self.values[key]

    def __len__(self):
        return len(self.values)

    def lqv(self, key) -> float:
        return self.values[key].lqv

    def gqv(self, key) -> float:
        return self.values[key].gqv

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state_key", "lqv", "gqv"])
        for key, q in self.values.items():
            w.writerow([key, repr(q.lqv), repr(q.gqv)])
        return buf.getvalue()


def compute_quality(net: InteractionNetwork, cfg: RewardConfig = RewardConfig()) -> QualityTable:
    comp = CompiledNetwork(net)
    gr = goal_rewards(comp, cfg)
    loc = local_quality(comp, cfg)
    glo = global_quality(comp, cfg, gr)
    values = {k: QualityValue(loc.values[k], glo.values[k]) for k in comp.keys}
    return QualityTable(values, loc.iterations, glo.iterations, loc.residual, glo.residual,
                        gr, net.start_key)


def quality_from_csv(text: str) -> QualityTable:
    rows = list(csv.DictReader(io.StringIO(text)))
    return QualityTable({r["state_key"]: QualityValue(float(r["lqv"]), float(r["gqv"])) for r in rows})
