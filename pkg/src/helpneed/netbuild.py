"""Attempt-log ingestion and per-problem interaction networks."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .logic import normalize

DERIVE = "DERIVE"
DELETE = "DELETE"
HINT_REQUEST = "HINT_REQUEST"
HINT_GIVEN = "HINT_GIVEN"
HINT_JUSTIFY = "HINT_JUSTIFY"

STATE_CHANGING = (DERIVE, DELETE)
HINT_EVENTS = (HINT_REQUEST, HINT_GIVEN, HINT_JUSTIFY)
PROACTIVE, ON_DEMAND = "proactive", "on_demand"

NET_FORMAT = "inet"
NET_VERSION = 1


class SchemaError(ValueError):
    def __init__(self, line, field_name, detail=""):
        self.line = line
        self.field = field_name
        msg = f"line {line}: bad or missing field {field_name!r}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class ChainBreak(ValueError):
    def __init__(self, line, detail=""):
        self.line = line
        super().__init__(f"line {line}: pre_state does not continue the previous step"
                         + (f" ({detail})" if detail else ""))


class EmptyInput(ValueError):
    pass


class FormatError(ValueError):
    def __init__(self, version, offset, detail=""):
        self.version = version
        self.offset = offset
        super().__init__(f"network file (version {version!r}) invalid at offset {offset}: {detail}")


@dataclass(frozen=True)
class Action:
    kind: str
    rule: Optional[str] = None
    premises: Optional[tuple] = None
    derived: Optional[str] = None
    index: Optional[int] = None
    hint_kind: Optional[str] = None
    hint_text: Optional[str] = None

    @property
    def changes_state(self) -> bool:
        return self.kind in STATE_CHANGING

    def signature(self) -> str:
        if self.kind == DERIVE:
            prem = ",".join(str(i) for i in (self.premises or ()))
            return f"DERIVE:{self.rule}:{prem}:{self.derived}"
        if self.kind == DELETE:
            return f"DELETE:{self.index}"
        return self.kind

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        for name in ("rule", "derived", "index", "hint_kind", "hint_text"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.premises is not None:
            out["premises"] = list(self.premises)
        return out


def state_key_of(problem_id: str, statements) -> str:
    return problem_id + "|" + ";".join(sorted(set(statements)))


@dataclass(frozen=True)
class StepRecord:
    student_id: str
    problem_id: str
    attempt: int
    seq_no: int
    pre_state: tuple
    action: Action
    post_state: tuple
    duration_s: float
    wrong_app_count: int = 0
    timestamp: float = 0.0

    @property
    def pre_key(self) -> str:
        return state_key_of(self.problem_id, self.pre_state)

    @property
    def post_key(self) -> str:
        return state_key_of(self.problem_id, self.post_state)

    @property
    def is_hint_event(self) -> bool:
        return self.action.kind in HINT_EVENTS

    def to_json(self) -> dict:
        return {
            "student": self.student_id,
            "problem": self.problem_id,
            "attempt": self.attempt,
            "seq": self.seq_no,
            "pre_state": list(self.pre_state),
            "action": self.action.to_json(),
            "post_state": list(self.post_state),
            "duration_s": self.duration_s,
            "wrong_apps": self.wrong_app_count,
            "ts": self.timestamp,
        }


@dataclass
class AttemptLog:
    student_id: str
    problem_id: str
    attempt: int
    steps: list
    completed: bool

    @property
    def state_steps(self) -> list:
        return [s for s in self.steps if s.action.changes_state]

    @property
    def start_state(self) -> tuple:
        return self.steps[0].pre_state if self.steps else ()

    @property
    def final_state(self) -> tuple:
        return self.steps[-1].post_state if self.steps else ()


def dump_attempts(attempts: Iterable[AttemptLog]) -> str:
    """Serialize attempts as JSON lines (one object per step)."""
    lines = []
    for att in attempts:
        for step in att.steps:
            lines.append(json.dumps(step.to_json(), sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# ingestion


def _field(obj, name, lineno, kinds):
    if name not in obj:
        raise SchemaError(lineno, name)
    value = obj[name]
    if not isinstance(value, kinds) or isinstance(value, bool) and bool not in kinds:
        raise SchemaError(lineno, name, f"wrong type {type(value).__name__}")
    return value


def _statements(obj, name, lineno):
    value = _field(obj, name, lineno, (list,))
    try:
        return tuple(normalize(s) for s in value)
    except (ValueError, TypeError) as exc:
        raise SchemaError(lineno, name, str(exc)) from None


def _parse_action(obj, lineno):
    act = _field(obj, "action", lineno, (dict,))
    kind = act.get("kind")
    if kind not in STATE_CHANGING + HINT_EVENTS:
        raise SchemaError(lineno, "action.kind", f"unknown kind {kind!r}")
    if kind == DERIVE:
        for name in ("rule", "premises", "derived"):
            if name not in act:
                raise SchemaError(lineno, f"action.{name}")
        try:
            derived = normalize(act["derived"])
        except ValueError as exc:
            raise SchemaError(lineno, "action.derived", str(exc)) from None
        return Action(DERIVE, rule=act["rule"], premises=tuple(act["premises"]), derived=derived)
    if kind == DELETE:
        if not isinstance(act.get("index"), int):
            raise SchemaError(lineno, "action.index")
        return Action(DELETE, index=act["index"])
    hint_kind = act.get("hint_kind")
    if kind == HINT_GIVEN and hint_kind not in (PROACTIVE, ON_DEMAND):
        raise SchemaError(lineno, "action.hint_kind")
    return Action(kind, hint_kind=hint_kind, hint_text=act.get("hint_text"))


def parse_step(obj: dict, lineno: int = 0) -> StepRecord:
    if not isinstance(obj, dict):
        raise SchemaError(lineno, "<record>", "not a JSON object")
    duration = _field(obj, "duration_s", lineno, (int, float))
    if not math.isfinite(duration) or duration < 0:
        raise SchemaError(lineno, "duration_s", "must be finite and >= 0")
    wrong = obj.get("wrong_apps", 0)
    if not isinstance(wrong, int) or isinstance(wrong, bool) or wrong < 0:
        raise SchemaError(lineno, "wrong_apps")
    rec = StepRecord(
        student_id=str(_field(obj, "student", lineno, (str, int))),
        problem_id=str(_field(obj, "problem", lineno, (str, int))),
        attempt=_field(obj, "attempt", lineno, (int,)),
        seq_no=_field(obj, "seq", lineno, (int,)),
        pre_state=_statements(obj, "pre_state", lineno),
        action=_parse_action(obj, lineno),
        post_state=_statements(obj, "post_state", lineno),
        duration_s=float(duration),
        wrong_app_count=wrong,
        timestamp=float(obj.get("ts", 0.0)),
    )
    same = rec.pre_key == rec.post_key
    if rec.is_hint_event != same:
        raise SchemaError(lineno, "post_state",
                          "hint events must keep the state and other actions must change it")
    return rec


def ingest_attempts(stream, conclusions: Optional[dict] = None) -> list:
    """Read JSONL step records into validated, chained attempts.

    ``stream`` is any iterable of lines.  ``conclusions`` maps problem id to
    its conclusion (text or a :class:`~helpneed.logic.Problem`); an attempt
    is completed when its final state contains the conclusion.  Without a
    mapping, a ``conclusion`` field on the records is used if present.
    """
    groups = defaultdict(list)
    record_conclusion = {}
    for lineno, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(lineno, "<json>", exc.msg) from None
        rec = parse_step(obj, lineno)
        if isinstance(obj.get("conclusion"), str):
            record_conclusion[rec.problem_id] = normalize(obj["conclusion"])
        groups[(rec.student_id, rec.problem_id, rec.attempt)].append((rec.seq_no, lineno, rec))

    goal_of = {}
    for pid, value in (conclusions or {}).items():
        goal_of[pid] = getattr(value, "conclusion", value)
    for pid, value in record_conclusion.items():
        goal_of.setdefault(pid, value)

    attempts = []
    for (student, problem, attempt), rows in groups.items():
        rows.sort(key=lambda r: r[0])
        seqs = [r[0] for r in rows]
        if len(set(seqs)) != len(seqs):
            raise SchemaError(rows[0][1], "seq", "duplicate sequence number")
        steps = []
        for i, (_, lineno, rec) in enumerate(rows):
            if i and rec.pre_key != steps[-1].post_key:
                raise ChainBreak(lineno)
            steps.append(rec)
        goal = goal_of.get(problem)
        completed = goal is not None and goal in steps[-1].post_state
        attempts.append(AttemptLog(student, problem, attempt, steps, completed))
    attempts.sort(key=lambda a: (a.problem_id, a.student_id, a.attempt))
    return attempts


def read_attempts(path, conclusions=None) -> list:
    with open(path, encoding="utf-8") as fh:
        return ingest_attempts(fh, conclusions)


# ---------------------------------------------------------------------------
# networks


@dataclass
class Vertex:
    visit_count: int = 0
    is_start: bool = False
    is_goal: bool = False
    solution_length: Optional[int] = None
    is_dead_end: bool = False

    @property
    def absorbing(self) -> bool:
        return self.is_goal or self.is_dead_end


@dataclass
class Edge:
    to_key: str
    traversal_count: int = 0


@dataclass
class InteractionNetwork:
    problem_id: str
    vertices: dict = field(default_factory=dict)
    edges: dict = field(default_factory=dict)

    @property
    def start_key(self) -> str:
        (key,) = [k for k, v in self.vertices.items() if v.is_start]
        return key

    @property
    def goal_keys(self) -> list:
        return sorted(k for k, v in self.vertices.items() if v.is_goal)

    def out_edges(self, key: str) -> list:
        return [(sig, e) for (src, sig), e in sorted(self.edges.items()) if src == key]

    def successors(self, key: str) -> dict:
        """Successor state -> summed traversal count."""
        out = defaultdict(int)
        for (src, _), e in self.edges.items():
            if src == key:
                out[e.to_key] += e.traversal_count
        return dict(sorted(out.items()))

    def transition_probs(self, key: str) -> dict:
        succ = self.successors(key)
        total = sum(succ.values())
        return {k: c / total for k, c in succ.items()} if total else {}

    def __eq__(self, other):
        if not isinstance(other, InteractionNetwork):
            return NotImplemented
        return (self.problem_id == other.problem_id and self.vertices == other.vertices
                and self.edges == other.edges)


def build_network(attempts, problem_id: str) -> InteractionNetwork:
    """Aggregate one problem's attempts into an interaction network.

    Hint events are skipped.  The final state of a completed attempt is a
    goal; a non-goal vertex with no observed way out is a dead end.  Both
    are absorbing.
    """
    attempts = [a for a in attempts if a.problem_id == problem_id]
    if not attempts:
        raise EmptyInput(f"no attempts for problem {problem_id!r}")
    net = InteractionNetwork(problem_id)
    starts = {state_key_of(problem_id, a.start_state) for a in attempts if a.steps}
    if len(starts) != 1:
        raise ValueError(f"problem {problem_id!r}: attempts disagree on the start state")
    start = next(iter(starts))
    start_size = len(next(a.start_state for a in attempts if a.steps))
    net.vertices[start] = Vertex(is_start=True)

    goals = set()
    for att in attempts:
        if att.completed:
            goals.add(state_key_of(problem_id, att.final_state))

    for att in attempts:
        if not att.steps:
            continue
        net.vertices[start].visit_count += 1
        for step in att.state_steps:
            pre, post = step.pre_key, step.post_key
            if pre in goals:
                break
            vtx = net.vertices.setdefault(post, Vertex())
            vtx.visit_count += 1
            edge = net.edges.setdefault((pre, step.action.signature()), Edge(post))
            edge.traversal_count += 1

    has_out = {src for (src, _) in net.edges}
    for key, vtx in net.vertices.items():
        if key in goals:
            vtx.is_goal = True
            vtx.solution_length = _statement_count(key) - start_size
        elif key not in has_out:
            vtx.is_dead_end = True
    net.vertices = dict(sorted(net.vertices.items()))
    net.edges = dict(sorted(net.edges.items()))
    return net


def _statement_count(key: str) -> int:
    body = key.partition("|")[2]
    return len(body.split(";")) if body else 0


def build_networks(attempts) -> dict:
    by_problem = defaultdict(list)
    for att in attempts:
        by_problem[att.problem_id].append(att)
    return {pid: build_network(atts, pid) for pid, atts in sorted(by_problem.items())}


def serialize_network(net: InteractionNetwork) -> bytes:
    doc = {
        "format": NET_FORMAT,
        "version": NET_VERSION,
        "problem_id": net.problem_id,
        "vertices": [
            {"key": k, "visit_count": v.visit_count, "is_start": v.is_start,
             "is_goal": v.is_goal, "solution_length": v.solution_length,
             "is_dead_end": v.is_dead_end}
            for k, v in sorted(net.vertices.items())
        ],
        "edges": [
            {"from": src, "action": sig, "to": e.to_key, "count": e.traversal_count}
            for (src, sig), e in sorted(net.edges.items())
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def deserialize_network(data: bytes) -> InteractionNetwork:
    try:
        doc = json.loads(data.decode("utf-8") if isinstance(data, bytes) else data)
    except json.JSONDecodeError as exc:
        raise FormatError(None, exc.pos, exc.msg) from None
    except UnicodeDecodeError as exc:
        raise FormatError(None, exc.start, "not UTF-8") from None
    if not isinstance(doc, dict) or doc.get("format") != NET_FORMAT:
        raise FormatError(doc.get("version") if isinstance(doc, dict) else None, 0,
                          "missing 'inet' format header")
    if doc.get("version") != NET_VERSION:
        raise FormatError(doc.get("version"), 0, "unsupported version")
    try:
        net = InteractionNetwork(doc["problem_id"])
        for v in doc["vertices"]:
            net.vertices[v["key"]] = Vertex(v["visit_count"], v["is_start"], v["is_goal"],
                                            v["solution_length"], v["is_dead_end"])
        for e in doc["edges"]:
            net.edges[(e["from"], e["action"])] = Edge(e["to"], e["count"])
    except (KeyError, TypeError) as exc:
        raise FormatError(NET_VERSION, 0, f"malformed body: {exc}") from None
    return net
