"""Command-line pipeline: gen, ingest, build, solve, classify, correlate, train, cv, predict,
simulate, report and fixture-check.

Exit codes: 0 success, 1 validation failure, 2 internal error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

from . import fixtures
from .netbuild import (ChainBreak, FormatError, SchemaError, build_networks, deserialize_network,
                       dump_attempts, read_attempts, serialize_network)
from .quality import RewardConfig, compute_quality, quality_from_csv
from .stepclass import DurationModel, EfficiencyMetric, classified_to_csv, classify_steps

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "metric": "GlobalAbsolute",
    "paths": {
        "logs": "out/logs.jsonl",
        "networks": "out/networks",
        "quality": "out/quality",
        "classified": "out/classified.csv",
        "dataset": "out/dataset.csv",
        "models": "out/models.json",
        "predictions": "out/predictions.csv",
        "reports": "out/reports",
    },
    "reward": {
        "goal_reward": 100.0,
        "error_penalty": -10.0,
        "use_error_penalty": False,
        "action_cost": -1.0,
        "grade_floor": 80.0,
        "gamma": 0.9,
        "tolerance": 1e-9,
        "max_iterations": 100000,
    },
    "durations": {"estimator": "per_step"},
    "predictor": {
        "n_trees": 100,
        "max_depth": 12,
        "k": 10,
        "mode": "kfold",
        "grid": [1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0],
        "auc_slack": 0.02,
    },
    "policy": {"max_consecutive_proactive": 3, "random_p": 0.0},
    "population": {
        "historical_students": 60,
        "cohort_students": 40,
        "hint_follow": [0.8, 1.0],
        "help_seek": [0.0, 0.4],
        "skill_beta": [1.9, 1.6],
    },
}


# ---------------------------------------------------------------------------
# config


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a table")
            out[key] = _merge(base[key], value, path + ".")
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    """Defaults overlaid with a JSON or TOML file; unknown keys are rejected."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    text = Path(path).read_text(encoding="utf-8")
    try:
        if str(path).endswith(".json"):
            doc = json.loads(text)
        else:
            doc = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return _merge(DEFAULTS, doc)


def reward_config(cfg) -> RewardConfig:
    try:
        return RewardConfig(**cfg["reward"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"reward: {exc}") from None


def metric_of(cfg) -> EfficiencyMetric:
    try:
        return EfficiencyMetric.parse(cfg["metric"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# io helpers


def _sha(path) -> str:
    h = hashlib.sha256()
    p = Path(path)
    files = sorted(p.rglob("*")) if p.is_dir() else [p]
    for f in files:
        if f.is_file():
            h.update(f.name.encode())
            h.update(f.read_bytes())
    return h.hexdigest()


def _record(cfg, stage, inputs, outputs):
    """Append input/output hashes for a stage so reruns are detectably identical."""
    rep = Path(cfg["paths"]["reports"])
    rep.mkdir(parents=True, exist_ok=True)
    mpath = rep / "manifest.json"
    manifest = json.loads(mpath.read_text()) if mpath.exists() else {}
    manifest[stage] = {"inputs": {str(p): _sha(p) for p in inputs if Path(p).exists()},
                       "outputs": {str(p): _sha(p) for p in outputs if Path(p).exists()}}
    mpath.write_text(json.dumps(manifest, sort_keys=True, indent=1))


def _write(path, text):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _attempts(cfg):
    return read_attempts(cfg["paths"]["logs"], fixtures.PROBLEMS_BY_ID)


def _networks(cfg):
    d = Path(cfg["paths"]["networks"])
    files = sorted(d.glob("*.inet.json"))
    if not files:
        raise ConfigError(f"no networks in {d}; run 'build' first")
    return {n.problem_id: n for n in (deserialize_network(f.read_bytes()) for f in files)}


def _qualities(cfg):
    d = Path(cfg["paths"]["quality"])
    files = sorted(d.glob("*.csv"))
    if not files:
        raise ConfigError(f"no quality tables in {d}; run 'solve' first")
    return {f.name[:-4]: quality_from_csv(f.read_text()) for f in files}


def _durations(cfg, attempts):
    est = cfg["durations"]["estimator"]
    if est not in ("per_step", "per_solution"):
        raise ConfigError(f"durations.estimator must be per_step or per_solution, got {est!r}")
    return DurationModel.fit(attempts, est)


def _params(cfg):
    from .predictor import ForestParams
    p = cfg["predictor"]
    return ForestParams(n_trees=int(p["n_trees"]), max_depth=int(p["max_depth"]))


def _population(cfg, n, prefix):
    from .policy import PopulationSpec
    p = cfg["population"]
    return PopulationSpec(n_students=int(n), skill_beta=tuple(p["skill_beta"]),
                          hint_follow=tuple(p["hint_follow"]), help_seek=tuple(p["help_seek"]),
                          id_prefix=prefix)


def _spec(cfg):
    from .policy import ExperimentSpec
    pr = cfg["predictor"]
    return ExperimentSpec(fixtures.PRETEST, fixtures.TRAINING, fixtures.POSTTEST,
                          historical=_population(cfg, cfg["population"]["historical_students"], "h"),
                          cohort=_population(cfg, cfg["population"]["cohort_students"], "s"),
                          n_trees=int(pr["n_trees"]), max_depth=int(pr["max_depth"]),
                          metric=metric_of(cfg).value)


def _dataset(cfg, attempts=None):
    from .features import build_dataset
    attempts = attempts if attempts is not None else _attempts(cfg)
    qs = _qualities(cfg)
    diff = {p.problem_id: p.difficulty for p in fixtures.ALL_PROBLEMS}
    train_ids = {p.problem_id for p in fixtures.TRAINING}
    return build_dataset(attempts, qs, _durations(cfg, attempts), metric_of(cfg), diff,
                         train_ids, tag="logs")


# ---------------------------------------------------------------------------
# stages


def cmd_gen(cfg, args):
    from .policy import historical_corpus
    res = historical_corpus(_spec(cfg), int(cfg["seed"]))
    out = cfg["paths"]["logs"]
    _write(out, dump_attempts(res.attempts))
    _record(cfg, "gen", [], [out])
    print(f"wrote {len(res.attempts)} attempts to {out}")


def cmd_ingest(cfg, args):
    atts = _attempts(cfg)
    summary = {"attempts": len(atts), "completed": sum(a.completed for a in atts),
               "records": sum(len(a.steps) for a in atts),
               "state_steps": sum(len(a.state_steps) for a in atts),
               "students": len({a.student_id for a in atts}),
               "problems": sorted({a.problem_id for a in atts})}
    out = Path(cfg["paths"]["reports"]) / "ingest.json"
    _write(out, json.dumps(summary, indent=1, sort_keys=True))
    _record(cfg, "ingest", [cfg["paths"]["logs"]], [out])
    print(json.dumps(summary, sort_keys=True))


def cmd_build(cfg, args):
    nets = build_networks(_attempts(cfg))
    d = Path(cfg["paths"]["networks"])
    d.mkdir(parents=True, exist_ok=True)
    for pid, net in nets.items():
        (d / f"{pid}.inet.json").write_bytes(serialize_network(net))
    _record(cfg, "build", [cfg["paths"]["logs"]], [d])
    print(f"built {len(nets)} networks in {d}")


def cmd_solve(cfg, args):
    rc = reward_config(cfg)
    if args.network:
        net = deserialize_network(Path(args.network).read_bytes())
        q = compute_quality(net, rc)
        text = q.to_csv()
        if args.out:
            _write(args.out, text)
        else:
            sys.stdout.write(text)
        return
    d = Path(cfg["paths"]["quality"])
    d.mkdir(parents=True, exist_ok=True)
    for pid, net in _networks(cfg).items():
        (d / f"{pid}.csv").write_text(compute_quality(net, rc).to_csv())
    _record(cfg, "solve", [cfg["paths"]["networks"]], [d])
    print(f"quality tables written to {d}")


def cmd_classify(cfg, args):
    atts = _attempts(cfg)
    qs = _qualities(cfg)
    dur = _durations(cfg, atts)
    rows = []
    for att in atts:
        if att.problem_id in qs and att.problem_id in dur.p75:
            rows.extend(classify_steps(att, qs[att.problem_id], dur, metric_of(cfg)))
    out = cfg["paths"]["classified"]
    _write(out, classified_to_csv(rows))
    _record(cfg, "classify", [cfg["paths"]["logs"], cfg["paths"]["quality"]], [out])
    print(f"classified {len(rows)} steps into {out}")


def cmd_correlate(cfg, args):
    from .stepclass import correlate_metrics, solution_quartiles
    atts = _attempts(cfg)
    train_ids = {p.problem_id for p in fixtures.TRAINING}
    post_ids = {p.problem_id for p in fixtures.POSTTEST}
    training = [a for a in atts if a.problem_id in train_ids]
    post = [a for a in atts if a.problem_id in post_ids]
    quart = {k: v for k, v in solution_quartiles(post).items() if v[1] > v[0] > 0}
    res = correlate_metrics(training, post, _qualities(cfg), _durations(cfg, atts), quart)
    doc = {m.value: {"helpneed_pct": pct, "r": pr.r, "t": pr.t_statistic, "p": pr.p_value, "n": pr.n}
           for m, (pct, pr) in res.items()}
    out = Path(cfg["paths"]["reports"]) / "correlate.json"
    _write(out, json.dumps(doc, indent=1, sort_keys=True))
    _record(cfg, "correlate", [cfg["paths"]["logs"], cfg["paths"]["quality"]], [out])
    print(json.dumps(doc, sort_keys=True))


def cmd_train(cfg, args):
    from .predictor import expert_weight_search, save_models, train_models, STATE_BASED, STATE_FREE
    data = _dataset(cfg)
    _write(cfg["paths"]["dataset"], data.to_csv())
    pr = cfg["predictor"]
    mult = {}
    if args.expert:
        for v in (STATE_BASED, STATE_FREE):
            mult[v] = expert_weight_search(data, v, pr["grid"], int(pr["k"]), int(cfg["seed"]),
                                           _params(cfg), float(pr["auc_slack"]), pr["mode"]).multiplier
    models = train_models(data, mult, int(cfg["seed"]), _params(cfg))
    Path(cfg["paths"]["models"]).parent.mkdir(parents=True, exist_ok=True)
    save_models(models, cfg["paths"]["models"])
    _record(cfg, "train", [cfg["paths"]["logs"], cfg["paths"]["quality"]],
            [cfg["paths"]["models"], cfg["paths"]["dataset"]])
    print(f"trained models on {len(data)} steps (positive rate {data.positive_rate:.3f})")


def cmd_cv(cfg, args):
    from .predictor import expert_weight_search, STATE_BASED, STATE_FREE
    data = _dataset(cfg)
    pr = cfg["predictor"]
    doc = {"positive_rate": data.positive_rate, "rows": len(data)}
    for v in (STATE_BASED, STATE_FREE):
        ws = expert_weight_search(data, v, pr["grid"], int(pr["k"]), int(cfg["seed"]), _params(cfg),
                                  float(pr["auc_slack"]), pr["mode"])
        doc[v] = ws.to_json()
        print(f"{v}: automated recall {ws.automated.mean_recall:.3f} auc {ws.automated.mean_auc:.3f}; "
              f"expert x{ws.multiplier} recall {ws.expert.mean_recall:.3f} auc {ws.expert.mean_auc:.3f}")
    out = Path(cfg["paths"]["reports"]) / "cv.json"
    _write(out, json.dumps(doc, indent=1, sort_keys=True))
    _record(cfg, "cv", [cfg["paths"]["logs"], cfg["paths"]["quality"]], [out])


def cmd_predict(cfg, args):
    from .features import FeatureTracker, _gave_up, replay_attempt, student_histories
    from .predictor import load_models, predict_step
    models = load_models(cfg["paths"]["models"])
    qs = _qualities(cfg)
    diff = {p.problem_id: p.difficulty for p in fixtures.ALL_PROBLEMS}
    rows = []
    for student, hist in student_histories(_attempts(cfg)).items():
        tracker = FeatureTracker(diff)
        for i, att in enumerate(hist):
            from .stepclass import step_windows
            wins = step_windows(att)

            def on_step(j, x, known, att=att, wins=wins):
                label, p = predict_step(models, x, known)
                rows.append([student, att.problem_id, att.attempt, wins[j][0].seq_no,
                             "state_based" if known else "state_free", label, repr(p)])

            replay_attempt(tracker, att, qs.get(att.problem_id), on_step, _gave_up(att, hist, i))
    out = cfg["paths"]["predictions"]
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["student", "problem", "attempt", "seq", "model", "label", "probability"])
        w.writerows(rows)
    _record(cfg, "predict", [cfg["paths"]["logs"], cfg["paths"]["models"]], [out])
    print(f"{len(rows)} predictions written to {out}")


def cmd_simulate(cfg, args):
    from .policy import ADAPTIVE, CONTROL, PolicyConfig, run_experiment
    pol = cfg["policy"]
    cap = pol["max_consecutive_proactive"]
    cap = None if cap in (None, 0, "off") else int(cap)
    a = PolicyConfig(ADAPTIVE, 0.0, cap)
    b = PolicyConfig(CONTROL, 0.0, cap)
    rep = run_experiment(a, b, _spec(cfg), int(cfg["seed"]))
    d = Path(cfg["paths"]["reports"])
    outs = {"experiment.json": rep.dumps(), "table5_step_classes.csv": rep.table5_csv(),
            "table6_hints.csv": rep.table6_csv(), "eight_way.csv": rep.eight_way_csv(),
            "hint_histogram.csv": rep.histogram_csv()}
    for name, text in outs.items():
        _write(d / name, text)
    _record(cfg, "simulate", [], [d / n for n in outs])
    print(rep.table5_csv(), end="")


def cmd_report(cfg, args):
    d = Path(cfg["paths"]["reports"])
    doc = {"config": cfg, "artifacts": {}}
    for name in ("ingest.json", "correlate.json", "cv.json", "experiment.json"):
        p = d / name
        if p.exists():
            doc["artifacts"][name] = json.loads(p.read_text())
    out = d / "summary.json"
    _write(out, json.dumps(doc, indent=1, sort_keys=True))
    print(f"summary written to {out}")


def fixture_check() -> list:
    """(name, passed, detail) for the shipped fixture checks."""
    from .quality import goal_rewards
    from .stepclass import progress
    results = []
    gr = sorted(goal_rewards(fixtures.goal_reward_network()).values())
    results.append(("goal rewards {100, 95, 80}", gr == [80.0, 95.0, 100.0], str(gr)))
    q = compute_quality(fixtures.three_trajectory_network())
    for m in EfficiencyMetric:
        bad = set()
        for name, traj in fixtures.TRAJECTORIES.items():
            for i in range(len(traj)):
                v = progress(m, q, fixtures.trajectory_key(traj, 0), fixtures.trajectory_key(traj, i),
                             fixtures.trajectory_key(traj, i + 1))
                if v < 0:
                    bad.add((name, i + 1))
        want = fixtures.EXPECTED_INEFFICIENT[m.value]
        results.append((f"three-trajectory {m.value}", bad == want, str(sorted(bad))))
    short = [q.gqv(fixtures.trajectory_key(fixtures.T_SHORT, i)) for i in range(5)]
    results.append(("GQV increases along T_short", all(b > a for a, b in zip(short, short[1:])),
                    str([round(v, 3) for v in short])))
    chain = compute_quality(fixtures.chain_network())
    results.append(("chain LQV(start) = 79.1", abs(chain.lqv(chain.start_key) - 79.1) < 1e-6,
                    repr(chain.lqv(chain.start_key))))
    return results


def cmd_fixture_check(cfg, args):
    results = fixture_check()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    if not all(ok for _, ok, _ in results):
        return 1
    return 0


def cmd_write_fixtures(cfg, args):
    """Write the shipped fixture networks (handy for `solve --network`)."""
    d = Path(args.out or cfg["paths"]["networks"])
    d.mkdir(parents=True, exist_ok=True)
    for name, net in fixtures.fixture_networks().items():
        (d / f"{name}.inet.json").write_bytes(serialize_network(net))
    print(f"fixture networks written to {d}")


COMMANDS = {
    "gen": cmd_gen, "ingest": cmd_ingest, "build": cmd_build, "solve": cmd_solve,
    "classify": cmd_classify, "correlate": cmd_correlate, "train": cmd_train, "cv": cmd_cv,
    "predict": cmd_predict, "simulate": cmd_simulate, "report": cmd_report,
    "fixture-check": cmd_fixture_check, "fixtures": cmd_write_fixtures,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="helpneed", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON or TOML config file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--metric", help="GlobalAbsolute, GlobalRelative, LocalAbsolute or LocalRelative")
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--network", help="solve: a single network file")
    ap.add_argument("--out", help="solve/fixtures: output path")
    ap.add_argument("--expert", action="store_true", help="train: grid-search expert weights first")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.metric is not None:
            cfg["metric"] = args.metric
        if args.gamma is not None:
            cfg["reward"]["gamma"] = args.gamma
        metric_of(cfg)
        reward_config(cfg)
        rc = COMMANDS[args.command](cfg, args)
        return int(rc or 0)
    except (ConfigError, SchemaError, ChainBreak, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - reported, not raised
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
