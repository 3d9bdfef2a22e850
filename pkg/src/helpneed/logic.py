"""Propositional logic statements, inference rules and proof states.

Statements use a small ASCII grammar::

    A..Z      atoms
    ~         not
    &         and
    |         or
    ->        implies (right associative)
    <->       iff

Precedence from tightest to loosest is ``~ & | -> <->``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Union


AND, OR, IMPLIES, IFF = "&", "|", "->", "<->"

# binding strength; larger binds tighter
_PREC = {IFF: 1, IMPLIES: 2, OR: 3, AND: 4}
_RIGHT_ASSOC = {IMPLIES}


class LogicSyntaxError(ValueError):
    """Malformed statement text."""

    def __init__(self, text, position, expected):
        self.text = text
        self.position = position
        self.expected = expected
        super().__init__(f"at position {position} in {text!r}: expected {expected}")


def _cached_hash(node, parts):
    # trees are immutable, so the recursive hash is computed once per node
    h = node.__dict__.get("_hash")
    if h is None:
        h = hash(parts)
        object.__setattr__(node, "_hash", h)
    return h


@dataclass(frozen=True)
class Atom:
    name: str

    def __post_init__(self):
        if len(self.name) != 1 or not ("A" <= self.name <= "Z"):
            raise ValueError(f"atom must be a single uppercase letter, got {self.name!r}")

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not:
    child: "Expr"

    def __str__(self):
        return canonical(self)

    def __hash__(self):
        return _cached_hash(self, ("~", self.child))


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in _PREC:
            raise ValueError(f"unknown operator {self.op!r}")

    def __str__(self):
        return canonical(self)

    def __hash__(self):
        return _cached_hash(self, (self.op, self.left, self.right))


Expr = Union[Atom, Not, Binary]


# ---------------------------------------------------------------------------
# parsing


def _tokenize(text):
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif text.startswith("<->", i):
            tokens.append((IFF, i))
            i += 3
        elif text.startswith("->", i):
            tokens.append((IMPLIES, i))
            i += 2
        elif c in "~&|()":
            tokens.append((c, i))
            i += 1
        elif "A" <= c <= "Z":
            tokens.append((c, i))
            i += 1
        else:
            raise LogicSyntaxError(text, i, "atom, operator or parenthesis")
    tokens.append(("$", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos][0]

    def take(self, expected=None):
        tok, at = self.tokens[self.pos]
        if expected is not None and tok != expected:
            raise LogicSyntaxError(self.text, at, repr(expected))
        self.pos += 1
        return tok

    def binary(self, min_prec):
        left = self.unary()
        while self.peek() in _PREC and _PREC[self.peek()] >= min_prec:
            op = self.take()
            # right-assoc operators recurse at the same level
            nxt = _PREC[op] if op in _RIGHT_ASSOC else _PREC[op] + 1
            right = self.binary(nxt)
            left = Binary(op, left, right)
        return left

    def unary(self):
        tok, at = self.tokens[self.pos]
        if tok == "~":
            self.take()
            return Not(self.unary())
        if tok == "(":
            self.take()
            inner = self.binary(1)
            self.take(")")
            return inner
        if len(tok) == 1 and "A" <= tok <= "Z":
            self.take()
            return Atom(tok)
        raise LogicSyntaxError(self.text, at, "atom, '~' or '('")


def parse(text: str) -> Expr:
    """Parse ASCII statement text into an expression tree."""
    return _parse_cached(text)


@functools.lru_cache(maxsize=65536)
def _parse_cached(text: str) -> Expr:
    # trees are immutable, so sharing parsed results is safe
    p = _Parser(text)
    expr = p.binary(1)
    tok, at = p.tokens[p.pos]
    if tok != "$":
        raise LogicSyntaxError(text, at, "end of input")
    return expr


def canonical(expr: Expr) -> str:
    """Minimally parenthesized text; ``parse(canonical(e)) == e``."""
    if isinstance(expr, Atom):
        return expr.name
    text = expr.__dict__.get("_text")
    if text is None:
        text = _render(expr)
        object.__setattr__(expr, "_text", text)
    return text


def _render(expr) -> str:
    if isinstance(expr, Not):
        inner = canonical(expr.child)
        if isinstance(expr.child, Binary):
            inner = f"({inner})"
        return "~" + inner
    prec = _PREC[expr.op]
    left, right = canonical(expr.left), canonical(expr.right)
    if isinstance(expr.left, Binary):
        lp = _PREC[expr.left.op]
        if lp < prec or (lp == prec and expr.op in _RIGHT_ASSOC):
            left = f"({left})"
    if isinstance(expr.right, Binary):
        rp = _PREC[expr.right.op]
        if rp < prec or (rp == prec and expr.op not in _RIGHT_ASSOC):
            right = f"({right})"
    return f"{left}{expr.op}{right}"


def normalize(text: str) -> str:
    """Canonical form of statement text."""
    return canonical(parse(text))


def atoms(expr: Expr) -> set:
    if isinstance(expr, Atom):
        return {expr.name}
    if isinstance(expr, Not):
        return atoms(expr.child)
    return atoms(expr.left) | atoms(expr.right)


def evaluate(expr: Expr, env: dict) -> bool:
    if isinstance(expr, Atom):
        return env[expr.name]
    if isinstance(expr, Not):
        return not evaluate(expr.child, env)
    a, b = evaluate(expr.left, env), evaluate(expr.right, env)
    if expr.op == AND:
        return a and b
    if expr.op == OR:
        return a or b
    if expr.op == IMPLIES:
        return (not a) or b
    return a == b


def entails(premises, conclusion) -> bool:
    """Truth-table check that ``premises`` semantically entail ``conclusion``."""
    names = sorted(set().union(*(atoms(p) for p in premises), atoms(conclusion)))
    for values in itertools.product((False, True), repeat=len(names)):
        env = dict(zip(names, values))
        if all(evaluate(p, env) for p in premises) and not evaluate(conclusion, env):
            return False
    return True


def subformulas(expr: Expr):
    yield expr
    if isinstance(expr, Not):
        yield from subformulas(expr.child)
    elif isinstance(expr, Binary):
        yield from subformulas(expr.left)
        yield from subformulas(expr.right)


# ---------------------------------------------------------------------------
# rules


@dataclass(frozen=True)
class Rule:
    name: str
    arity: int
    schema: str

    def __str__(self):
        return self.name


MP = Rule("MP", 2, "P, P->Q => Q")
MT = Rule("MT", 2, "P->Q, ~Q => ~P")
HS = Rule("HS", 2, "P->Q, Q->R => P->R")
DS = Rule("DS", 2, "P|Q, ~P => Q ; P|Q, ~Q => P")
SIMP = Rule("SIMP", 1, "P&Q => P ; P&Q => Q")
CONJ = Rule("CONJ", 2, "P, Q => P&Q")
ADD = Rule("ADD", 1, "P => P|X for problem atoms X")

RULES = (ADD, CONJ, DS, HS, MP, MT, SIMP)
RULES_BY_NAME = {r.name: r for r in RULES}


def _is(expr, op):
    return isinstance(expr, Binary) and expr.op == op


def _ordered(rule, premises, atom_pool):
    """Conclusions for premises taken in exactly the given order."""
    if rule.name == "SIMP":
        (p,) = premises
        return [p.left, p.right] if _is(p, AND) else []
    if rule.name == "ADD":
        (p,) = premises
        return [Binary(OR, p, Atom(a)) for a in sorted(atom_pool)]
    a, b = premises
    if rule.name == "MP":
        return [b.right] if _is(b, IMPLIES) and b.left == a else []
    if rule.name == "MT":
        if _is(a, IMPLIES) and isinstance(b, Not) and b.child == a.right:
            return [Not(a.left)]
        return []
    if rule.name == "HS":
        if _is(a, IMPLIES) and _is(b, IMPLIES) and a.right == b.left:
            return [Binary(IMPLIES, a.left, b.right)]
        return []
    if rule.name == "DS":
        if _is(a, OR) and isinstance(b, Not):
            out = []
            if b.child == a.left:
                out.append(a.right)
            if b.child == a.right:
                out.append(a.left)
            return out
        return []
    if rule.name == "CONJ":
        return [Binary(AND, a, b)]
    raise ValueError(f"unknown rule {rule.name}")


def _dedupe(exprs):
    seen, out = set(), []
    for e in exprs:
        if e not in seen:
            seen.add(e)
            out.append(e)
    return out


def apply_rule(rule: Rule, premises, atom_pool=None) -> list:
    """All conclusions of ``rule`` on ``premises`` (both orders for binary rules).

    ``atom_pool`` restricts the atoms ADD may disjoin; it defaults to the
    premise's own atoms.  A schema mismatch gives an empty list.
    """
    premises = [parse(p) if isinstance(p, str) else p for p in premises]
    if len(premises) != rule.arity:
        raise ValueError(f"{rule.name} takes {rule.arity} premise(s), got {len(premises)}")
    if atom_pool is None:
        atom_pool = set().union(*(atoms(p) for p in premises))
    out = _ordered(rule, premises, atom_pool)
    if rule.arity == 2:
        out += _ordered(rule, premises[::-1], atom_pool)
    return _dedupe(out)


# ---------------------------------------------------------------------------
# problems and states


@dataclass(frozen=True)
class Problem:
    problem_id: str
    givens: tuple
    conclusion: str
    difficulty: str = "easy"

    def __post_init__(self):
        object.__setattr__(self, "givens", tuple(normalize(g) for g in self.givens))
        object.__setattr__(self, "conclusion", normalize(self.conclusion))

    @property
    def atoms(self) -> set:
        out = atoms(parse(self.conclusion))
        for g in self.givens:
            out |= atoms(parse(g))
        return out

    def start(self) -> "ProofState":
        return ProofState(self.problem_id, self.givens, (), self.conclusion)


@dataclass(frozen=True)
class ProofState:
    """Workspace snapshot: givens first, then derived statements in order."""

    problem_id: str
    givens: tuple
    derived: tuple
    conclusion: str
    _exprs: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        stmts = self.givens + self.derived
        if len(set(stmts)) != len(stmts):
            raise ValueError("duplicate statements in proof state")
        if self._exprs is None:
            object.__setattr__(self, "_exprs", tuple(parse(s) for s in stmts))

    @property
    def statements(self) -> tuple:
        return self.givens + self.derived

    @property
    def expressions(self) -> tuple:
        return self._exprs

    def is_goal(self) -> bool:
        return self.conclusion in self.statements

    def key(self) -> str:
        return state_key(self)

    def derive(self, text: str) -> "ProofState":
        text = normalize(text)
        return ProofState(self.problem_id, self.givens, self.derived + (text,),
                          self.conclusion, self._exprs + (parse(text),))

    def delete(self, index: int) -> "ProofState":
        """Remove the statement at ``index``; givens cannot be deleted."""
        k = index - len(self.givens)
        if not 0 <= k < len(self.derived):
            raise ValueError(f"statement {index} is not a deletable derivation")
        derived = self.derived[:k] + self.derived[k + 1:]
        exprs = self._exprs[:index] + self._exprs[index + 1:]
        return ProofState(self.problem_id, self.givens, derived, self.conclusion, exprs)

    @property
    def solution_length(self) -> int:
        return len(self.derived)


def is_goal(state: ProofState) -> bool:
    return state.is_goal()


def state_key(state: ProofState) -> str:
    """Order-insensitive vertex identity: ``problem|s1;s2;...`` with sorted statements."""
    return state.problem_id + "|" + ";".join(sorted(set(state.statements)))


def key_statements(key: str) -> tuple:
    """Inverse of :func:`state_key` (problem id, statements)."""
    pid, _, body = key.partition("|")
    return pid, tuple(body.split(";")) if body else ()


@dataclass(frozen=True)
class Derivation:
    rule: str
    premises: tuple
    derived: str


def legal_derivations(state: ProofState, rules=RULES, atom_pool=None) -> list:
    """Every new statement derivable in one step, first occurrence per text.

    Ordered by rule name, then premise indices.  ADD only disjoins atoms
    from ``atom_pool`` (default: atoms of the state's statements).
    """
    exprs = state.expressions
    present = set(state.statements)
    if atom_pool is None:
        atom_pool = set().union(*(atoms(e) for e in exprs))
    seen = set()
    out = []
    n = len(exprs)
    for rule in sorted(rules, key=lambda r: r.name):
        if rule.arity == 1:
            combos = ((i,) for i in range(n))
        else:
            combos = ((i, j) for i in range(n) for j in range(n) if i != j)
        for idx in combos:
            for concl in _ordered(rule, [exprs[i] for i in idx], atom_pool):
                text = canonical(concl)
                if text in present or text in seen:
                    continue
                seen.add(text)
                out.append(Derivation(rule.name, idx, text))
    return out


def find_derivation(state: ProofState, text: str, rules=RULES, atom_pool=None):
    """First derivation of ``text`` in :func:`legal_derivations` order, or None."""
    target = parse(text)
    if text in state.statements:
        return None
    exprs = state.expressions
    if atom_pool is None:
        atom_pool = set().union(*(atoms(e) for e in exprs))
    n = len(exprs)
    for rule in sorted(rules, key=lambda r: r.name):
        if rule.arity == 1:
            combos = ((i,) for i in range(n))
        else:
            combos = ((i, j) for i in range(n) for j in range(n) if i != j)
        for idx in combos:
            if target in _ordered(rule, [exprs[i] for i in idx], atom_pool):
                return Derivation(rule.name, idx, canonical(target))
    return None


def check_derivation(state: ProofState, rule: str, premises, derived: str, atom_pool=None) -> bool:
    """True if ``derived`` follows from the indexed premises by ``rule``."""
    r = RULES_BY_NAME.get(rule)
    if r is None or len(premises) != r.arity:
        return False
    if any(not 0 <= i < len(state.statements) for i in premises):
        return False
    if atom_pool is None:
        atom_pool = set().union(*(atoms(e) for e in state.expressions))
    exprs = [state.expressions[i] for i in premises]
    target = parse(derived)
    outs = _ordered(r, exprs, atom_pool)
    if r.arity == 2:
        outs += _ordered(r, exprs[::-1], atom_pool)
    return target in outs


# ---------------------------------------------------------------------------
# shortest completions


class UnsolvableProblem(Exception):
    pass


class ProofSearch:
    """Breadth-first shortest completion over the problem's relevant statements.

    Conclusions are restricted to subformulas of the problem, their
    negations, and implications between subformulas (the HS closure).  CONJ
    and ADD only contribute when their result is itself a subformula.  The
    universe is finite, so search always terminates; results are memoized by
    statement set.
    """

    def __init__(self, problem: Problem, max_depth: int = 14):
        self.problem = problem
        self.max_depth = max_depth
        subs = set()
        for text in problem.givens + (problem.conclusion,):
            subs.update(subformulas(parse(text)))
        self._subs = subs
        self._atom_pool = problem.atoms
        self._cache = {}
        self._expr_cache = {}
        self._move_cache = {}
        # subformulas reachable by CONJ / ADD, indexed by their premises
        self._conj_targets = {(e.left, e.right): e for e in subs if _is(e, AND)}
        self._add_targets = {}
        for e in subs:
            if _is(e, OR) and isinstance(e.right, Atom) and e.right.name in self._atom_pool:
                self._add_targets.setdefault(e.left, []).append(e)

    def _relevant(self, expr):
        if expr in self._subs:
            return True
        if isinstance(expr, Not) and expr.child in self._subs:
            return True
        return _is(expr, IMPLIES) and expr.left in self._subs and expr.right in self._subs

    def _expr(self, text):
        e = self._expr_cache.get(text)
        if e is None:
            e = self._expr_cache[text] = parse(text)
        return e

    def _unary(self, a):
        out = list(self._add_targets.get(a, ()))
        if _is(a, AND):
            out += [a.left, a.right]
        return out

    def _pair(self, a, b):
        """Conclusions with ``a`` as first and ``b`` as second premise."""
        out = []
        if _is(b, IMPLIES):
            if b.left == a:
                out.append(b.right)
            if _is(a, IMPLIES) and a.right == b.left:
                out.append(Binary(IMPLIES, a.left, b.right))
        if isinstance(b, Not):
            if _is(a, IMPLIES) and b.child == a.right:
                out.append(Not(a.left))
            if _is(a, OR):
                if b.child == a.left:
                    out.append(a.right)
                if b.child == a.right:
                    out.append(a.left)
        conj = self._conj_targets.get((a, b))
        if conj is not None:
            out.append(conj)
        return out

    def _texts(self, exprs) -> frozenset:
        return frozenset(canonical(e) for e in exprs if self._relevant(e))

    def _with(self, text, others) -> frozenset:
        """Relevant conclusions that use statement ``text`` as a premise."""
        a = self._expr(text)
        found = self._unary(a)
        for o in others:
            if o == text:
                continue
            b = self._expr(o)
            found += self._pair(a, b)
            found += self._pair(b, a)
        return self._texts(found)

    def _reachable(self, node: frozenset) -> frozenset:
        hit = self._move_cache.get(node)
        if hit is None:
            hit = frozenset()
            seen = []
            for text in sorted(node):
                hit |= self._with(text, seen)
                seen.append(text)
            self._remember(node, hit)
        return hit

    def _remember(self, node, moves):
        if len(self._move_cache) > 500_000:
            self._move_cache.clear()
        self._move_cache[node] = moves

    def moves(self, statements) -> list:
        """Relevant one-step derivations from a statement set, as texts."""
        node = frozenset(statements)
        return sorted(self._reachable(node) - node)

    def solve(self, statements):
        """Return ``(distance, optimal_first_moves)`` from a statement set.

        ``distance`` is the minimal number of derivations to reach the
        conclusion; ``optimal_first_moves`` the sorted texts whose derivation
        starts some shortest completion.
        """
        root = frozenset(statements)
        hit = self._cache.get(root)
        if hit is not None:
            return hit
        goal = self.problem.conclusion
        if goal in root:
            result = (0, ())
            self._cache[root] = result
            return result
        frontier = {root: frozenset()}
        seen = {root}
        depth = 0
        while frontier and depth < self.max_depth:
            depth += 1
            nxt = {}
            winners = set()
            for node, firsts in frontier.items():
                reach = self._reachable(node)
                for text in sorted(reach - node):
                    labels = firsts or frozenset((text,))
                    if text == goal:
                        winners |= labels
                        continue
                    child = node | {text}
                    if child in seen and child not in nxt:
                        continue
                    if child not in self._move_cache:
                        self._remember(child, reach | self._with(text, node))
                    seen.add(child)
                    nxt[child] = nxt.get(child, frozenset()) | labels
            if winners:
                result = (depth, tuple(sorted(winners)))
                self._cache[root] = result
                return result
            frontier = nxt
        raise UnsolvableProblem(f"{self.problem.problem_id}: no completion within {self.max_depth} steps")

    def distance(self, statements) -> int:
        return self.solve(statements)[0]
