"""Parametric DTMC data model, the flat text format, and the induced graph."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .ratfun import (
    ExpressionSyntaxError,
    ParamTable,
    RationalFunction,
    UndeclaredParameter,
    parse_expr,
    rf_eval,
)

Valuation = Mapping[int, Fraction]

DEFAULT_LOW = Fraction(1, 100)
DEFAULT_HIGH = Fraction(99, 100)


class ModelError(Exception):
    pass


class ModelSyntaxError(ModelError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class UndeclaredParameterError(ModelSyntaxError):
    pass


class DuplicateInit(ModelSyntaxError):
    pass


class NoInit(ModelError):
    pass


class EmptyTarget(ModelError):
    pass


class InvalidModel(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class Pdtmc:
    """A parametric DTMC: states ``0..n_states-1``, one initial state,
    sparse rows of rational-function probabilities and state labels."""

    params: ParamTable
    n_states: int
    initial: int
    rows: dict[int, dict[int, RationalFunction]]
    labels: dict[int, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.initial < self.n_states:
            raise InvalidModel(f"initial state {self.initial} outside 0..{self.n_states - 1}")
        for s, row in self.rows.items():
            if not 0 <= s < self.n_states:
                raise InvalidModel(f"transition source {s} outside 0..{self.n_states - 1}")
            for t in row:
                if not 0 <= t < self.n_states:
                    raise InvalidModel(f"transition target {t} outside 0..{self.n_states - 1}")
        for s in range(self.n_states):
            if not self.rows.get(s):
                raise InvalidModel(f"state {s} has no outgoing transition")

    @property
    def transitions(self) -> dict[tuple[int, int], RationalFunction]:
        return {(s, t): f for s, row in sorted(self.rows.items()) for t, f in sorted(row.items())}

    @property
    def n_transitions(self) -> int:
        return sum(len(row) for row in self.rows.values())

    def successors(self, s: int) -> dict[int, RationalFunction]:
        return self.rows.get(s, {})

    def states_with_label(self, label: str) -> set[int]:
        return {s for s, ls in self.labels.items() if label in ls}

    def is_absorbing(self, s: int) -> bool:
        row = self.rows.get(s, {})
        return list(row) == [s] and row[s] == 1

    def structurally_equal(self, other: "Pdtmc") -> bool:
        if (self.params != other.params or self.n_states != other.n_states
                or self.initial != other.initial):
            return False
        if {s: set(ls) for s, ls in self.labels.items() if ls} != \
                {s: set(ls) for s, ls in other.labels.items() if ls}:
            return False
        a, b = self.transitions, other.transitions
        return a.keys() == b.keys() and all(a[k].structurally_equal(b[k]) for k in a)

    def render(self) -> str:
        return render_model(self)


@dataclass(frozen=True)
class InducedGraph:
    """Directed graph with one vertex per state and one edge per non-zero transition."""

    n: int
    succ: tuple[tuple[int, ...], ...]
    pred: tuple[tuple[int, ...], ...]

    @property
    def n_edges(self) -> int:
        return sum(len(s) for s in self.succ)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.succ[u]]


@dataclass(frozen=True)
class ReachabilityQuery:
    """``P=?[F R]`` with ``R`` given by a label or an explicit state set."""

    label: str | None = None
    states: frozenset[int] | None = None

    @classmethod
    def parse(cls, text: str) -> "ReachabilityQuery":
        text = text.strip()
        if text and all(part.strip().isdigit() for part in text.split(",")):
            return cls(states=frozenset(int(p) for p in text.split(",")))
        return cls(label=text)

    def __str__(self) -> str:
        if self.label is not None:
            return self.label
        return ",".join(str(s) for s in sorted(self.states or ()))


# ---------------------------------------------------------------------------
# parsing and rendering


def parse_model(text: str | Iterable[str]) -> Pdtmc:
    """Parse the line-oriented model format.

    Directives: ``param NAME``, ``states N``, ``init S``, ``label S NAME``,
    ``trans S T EXPR``.  ``#`` starts a comment.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    names: list[str] = []
    declared_states = 0
    init: int | None = None
    init_line = 0
    labels: dict[int, set[str]] = {}
    raw_trans: list[tuple[int, int, int, str]] = []
    max_state = -1

    def state_id(tok: str, lineno: int) -> int:
        if not tok.isdigit():
            raise ModelSyntaxError(lineno, f"expected a state index, got {tok!r}")
        return int(tok)

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 3)
        kw = parts[0]
        if kw == "param":
            if len(parts) != 2:
                raise ModelSyntaxError(lineno, "usage: param NAME")
            if parts[1] in names:
                raise ModelSyntaxError(lineno, f"duplicate parameter {parts[1]!r}")
            if not (parts[1][0].isalpha() or parts[1][0] == "_") or not parts[1].replace("_", "a").isalnum():
                raise ModelSyntaxError(lineno, f"invalid parameter name {parts[1]!r}")
            names.append(parts[1])
        elif kw == "states":
            if len(parts) != 2 or not parts[1].isdigit():
                raise ModelSyntaxError(lineno, "usage: states N")
            declared_states = int(parts[1])
        elif kw == "init":
            if len(parts) != 2:
                raise ModelSyntaxError(lineno, "usage: init S")
            if init is not None:
                raise DuplicateInit(lineno, f"initial state already set on line {init_line}")
            init = state_id(parts[1], lineno)
            init_line = lineno
            max_state = max(max_state, init)
        elif kw == "label":
            if len(parts) != 3:
                raise ModelSyntaxError(lineno, "usage: label S NAME")
            s = state_id(parts[1], lineno)
            labels.setdefault(s, set()).add(parts[2])
            max_state = max(max_state, s)
        elif kw == "trans":
            if len(parts) != 4:
                raise ModelSyntaxError(lineno, "usage: trans S T EXPR")
            s, t = state_id(parts[1], lineno), state_id(parts[2], lineno)
            raw_trans.append((lineno, s, t, parts[3]))
            max_state = max(max_state, s, t)
        else:
            raise ModelSyntaxError(lineno, f"unknown directive {kw!r}")

    if init is None:
        raise NoInit("model has no 'init' line")
    params = ParamTable(names)
    rows: dict[int, dict[int, RationalFunction]] = {}
    for lineno, s, t, expr in raw_trans:
        try:
            f = parse_expr(expr, params)
        except UndeclaredParameter as exc:
            raise UndeclaredParameterError(lineno, f"undeclared parameter {exc.args[0]!r}") from None
        except (ExpressionSyntaxError, ZeroDivisionError) as exc:
            raise ModelSyntaxError(lineno, str(exc)) from None
        if f.is_zero():
            continue
        row = rows.setdefault(s, {})
        row[t] = row[t] + f if t in row else f
        if row[t].is_zero():
            del row[t]
    n = max(declared_states, max_state + 1)
    return Pdtmc(params, n, init, rows, {s: frozenset(ls) for s, ls in labels.items()})


def render_model(m: Pdtmc) -> str:
    out = [f"param {name}" for name in m.params]
    out.append(f"states {m.n_states}")
    out.append(f"init {m.initial}")
    for s in sorted(m.labels):
        for label in sorted(m.labels[s]):
            out.append(f"label {s} {label}")
    for (s, t), f in m.transitions.items():
        out.append(f"trans {s} {t} {f.to_string(m.params)}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# checks and derived structures


@dataclass
class StochasticReport:
    violations: list[tuple[int, int, Fraction]] = field(default_factory=list)
    checked_points: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_stochastic(m: Pdtmc, points: Sequence[Valuation]) -> StochasticReport:
    """Check that every row sums to exactly 1 at every given valuation.

    Violations are ``(state, point index, row sum)`` triples.
    """
    report = StochasticReport(checked_points=len(points))
    for k, point in enumerate(points):
        for s in range(m.n_states):
            total = sum((rf_eval(f, point) for f in m.successors(s).values()), Fraction(0))
            if total != 1:
                report.violations.append((s, k, total))
    return report


def induced_graph(m: Pdtmc) -> InducedGraph:
    succ: list[list[int]] = [[] for _ in range(m.n_states)]
    pred: list[list[int]] = [[] for _ in range(m.n_states)]
    for s in range(m.n_states):
        for t, f in sorted(m.successors(s).items()):
            if not f.is_zero():
                succ[s].append(t)
                pred[t].append(s)
    for p in pred:
        p.sort()
    return InducedGraph(m.n_states, tuple(map(tuple, succ)), tuple(map(tuple, pred)))


def resolve_target(m: Pdtmc, q: ReachabilityQuery | str | Iterable[int]) -> frozenset[int]:
    if isinstance(q, str):
        q = ReachabilityQuery.parse(q)
    elif not isinstance(q, ReachabilityQuery):
        q = ReachabilityQuery(states=frozenset(q))
    if q.label is not None:
        found = m.states_with_label(q.label)
        if not found:
            raise EmptyTarget(f"no state carries label {q.label!r}")
        return frozenset(found)
    states = frozenset(q.states or ())
    if not states:
        raise EmptyTarget("empty target set")
    bad = [s for s in states if not 0 <= s < m.n_states]
    if bad:
        raise EmptyTarget(f"target states {sorted(bad)} do not exist")
    return states


def random_valuations(params: ParamTable | int, n: int, seed: int | None = 0,
                      low: Fraction = DEFAULT_LOW, high: Fraction = DEFAULT_HIGH,
                      resolution: int = 10_000) -> list[dict[int, Fraction]]:
    """Seeded parameter valuations drawn uniformly from a grid in ``(low, high)``.

    Every test, the oracle and the CLI draw points from here so that the
    same seed gives the same points everywhere.
    """
    count = params if isinstance(params, int) else len(params)
    rng = random.Random(seed)
    lo = int(low * resolution) + 1
    hi = int(high * resolution) - 1
    return [{i: Fraction(rng.randint(lo, hi), resolution) for i in range(count)} for _ in range(n)]


def valuation_from_names(params: ParamTable, values: Mapping[str, object]) -> dict[int, Fraction]:
    out = {}
    for name, v in values.items():
        out[params.index(name)] = v if isinstance(v, Fraction) else Fraction(str(v))
    return out
