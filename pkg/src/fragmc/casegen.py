"""Generators for the case-study model families (FX service workflow, loop chain)
plus a parameter-sweep transform.  All output is a :class:`Pdtmc` that
renders to the flat model format."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

from .model import Pdtmc, parse_model
from .ratfun import ParamTable, RationalFunction, parse_expr, rf_substitute

STRATEGIES = ("SEQ", "SEQ_R", "PAR", "PROB", "PROB_R")

# (#states, #transitions) published for the FX system, by (strategy, services)
PUBLISHED_SIZES = {
    ("SEQ", 1): (11, 22), ("SEQ", 2): (17, 34), ("SEQ", 3): (23, 46),
    ("SEQ", 4): (29, 58), ("SEQ", 5): (35, 70),
    ("PAR", 2): (40, 36), ("PAR", 3): (64, 111), ("PAR", 4): (112, 207),
    ("PAR", 5): (208, 399),
    ("PROB", 2): (23, 46), ("PROB", 3): (29, 64), ("PROB", 4): (35, 82),
    ("PROB", 5): (41, 100),
    ("SEQ_R", 2): (29, 58), ("SEQ_R", 3): (41, 82), ("SEQ_R", 4): (53, 106),
    ("SEQ_R", 5): (65, 130),
    ("PROB_R", 2): (29, 58), ("PROB_R", 3): (35, 75), ("PROB_R", 4): (41, 93),
    ("PROB_R", 5): (47, 111),
}

# FX operations, in parameter order: p{op}{service}
OPERATIONS = ("market_watch", "technical_analysis", "alarm",
              "fundamental_analysis", "order", "notification")
MW, TA, ALARM, FA, ORDER, NOTIF = range(1, 7)
BLOCK_ORDER = (NOTIF, ORDER, ALARM, TA, FA, MW)


@dataclass(frozen=True)
class FxSpec:
    strategy: str = "SEQ_R"
    services: int = 2

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not 1 <= self.services <= 5:
            raise ValueError("services per operation must be in 1..5")


@dataclass(frozen=True)
class LoopChainSpec:
    n: int = 5

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("loop chain needs n >= 1")


class _Builder:
    def __init__(self):
        self.names: list[str] = []
        self.group: dict[str, int] = {}
        self.n = 0
        self.edges: list[tuple[int, int, str]] = []
        self.labels: dict[int, set[str]] = {}

    def param(self, name: str, group: int = 0) -> str:
        if name not in self.names:
            self.names.append(name)
            self.group[name] = group
        return name

    def state(self, label: str | None = None) -> int:
        s = self.n
        self.n += 1
        if label:
            self.labels.setdefault(s, set()).add(label)
        return s

    def edge(self, s: int, t: int, expr: str) -> None:
        self.edges.append((s, t, expr))

    def build(self, initial: int = 0) -> Pdtmc:
        # parameters are listed by group (operation), then first use
        params = ParamTable(sorted(self.names, key=lambda n: (self.group[n], self.names.index(n))))
        rows: dict[int, dict[int, RationalFunction]] = {}
        for s, t, expr in self.edges:
            f = parse_expr(expr, params)
            row = rows.setdefault(s, {})
            row[t] = row[t] + f if t in row else f
        return Pdtmc(params, self.n, initial, rows,
                     {s: frozenset(ls) for s, ls in self.labels.items()})


def _stick(names: list[str], j: int) -> str:
    """Probability of picking option ``j`` out of ``len(names)+1`` by stick breaking."""
    head = [f"(1 - {q})" for q in names[:j]]
    if j < len(names):
        head.append(names[j])
    return " * ".join(head) if head else "1"


def gen_fx(spec: FxSpec | str, services: int | None = None) -> Pdtmc:
    """FX trading workflow with ``services`` functionally-equivalent
    implementations per operation, executed with the given strategy.

    Workflow: the initial state picks expert mode (``x``: market watch,
    then technical analysis) or normal mode (fundamental analysis).
    Technical analysis leads to an order (``y1``), another market watch
    (``(1-y1)*y2``) or an alarm.  Fundamental analysis leads to an order
    (``z1``), a new analysis (``(1-z1)*z2``) or expert mode.  Order is
    followed by notification; notification and alarm end in ``successFX``.
    An operation whose services all fail ends in ``failedFX``.

    Strategies, per operation with services ``j = 1..k``:

    * SEQ: invoke services in order until one succeeds (``p{i}{j}``).
    * SEQ_R: as SEQ, but a failed service is re-invoked with ``r{i}{j}``.
    * PAR: invoke all services at once; one state per joint outcome, then a
      response state that hands the result on (notification reports directly).
    * PROB: pick one service by stick-breaking weights ``q{i}{j}``.
    * PROB_R: as PROB, but a failure re-selects with probability ``r{i}``.
      For k >= 3 the notification retry is certain (no give-up branch),
      which reproduces the published transition counts.

    Branch choices use stick-breaking so every valuation in (0, 1) is valid.
    """
    if isinstance(spec, str):
        spec = FxSpec(spec, services if services is not None else 2)
    k = spec.services
    strat = spec.strategy
    b = _Builder()
    x = b.param("x")
    y1, y2, z1, z2 = (b.param(n) for n in ("y1", "y2", "z1", "z2"))

    # State numbering: the decision states first, then the operation blocks
    # downstream-first.  With ascending input-state selection this lets every
    # block close against already-assigned neighbours.
    ta_dec = b.state("ta_decision")
    fa_dec = b.state("fa_decision")
    entry: dict[int, int] = {}
    blocks = {}
    for op in BLOCK_ORDER:
        blocks[op] = _op_block(b, strat, op, k)
        entry[op] = blocks[op]["entry"]
    init = b.state("initial")
    success = b.state("successFX")
    fail = b.state("failedFX")

    follow = {MW: entry[TA], TA: ta_dec, ALARM: success, FA: fa_dec,
              ORDER: entry[NOTIF], NOTIF: success}
    for op in range(1, 7):
        for src, expr in blocks[op]["ok"]:
            b.edge(src, follow[op], expr)
        for src, expr in blocks[op]["ko"]:
            b.edge(src, fail, expr)

    b.edge(init, entry[MW], x)
    b.edge(init, entry[FA], f"1 - {x}")
    b.edge(ta_dec, entry[ORDER], y1)
    b.edge(ta_dec, entry[MW], f"(1 - {y1}) * {y2}")
    b.edge(ta_dec, entry[ALARM], f"(1 - {y1}) * (1 - {y2})")
    b.edge(fa_dec, entry[ORDER], z1)
    b.edge(fa_dec, entry[FA], f"(1 - {z1}) * {z2}")
    b.edge(fa_dec, entry[MW], f"(1 - {z1}) * (1 - {z2})")
    b.edge(success, success, "1")
    b.edge(fail, fail, "1")
    return b.build(init)


def _op_block(b: _Builder, strat: str, op: int, k: int) -> dict:
    """States of one operation.  Returns its entry state and the dangling
    success (``ok``) and failure (``ko``) edges as ``(source, expr)``."""
    ok: list[tuple[int, str]] = []
    ko: list[tuple[int, str]] = []
    tag = OPERATIONS[op - 1]
    if strat in ("SEQ", "SEQ_R"):
        invoke = [b.state(f"{tag}_s{j}" if j > 1 else tag) for j in range(1, k + 1)]
        failed = [b.state() for _ in range(k)] if strat == "SEQ_R" else []
        for j in range(k):
            p = b.param(f"p{op}{j + 1}", op)
            ok.append((invoke[j], p))
            nxt = invoke[j + 1] if j + 1 < k else None
            if strat == "SEQ":
                if nxt is None:
                    ko.append((invoke[j], f"1 - {p}"))
                else:
                    b.edge(invoke[j], nxt, f"1 - {p}")
            else:
                r = b.param(f"r{op}{j + 1}", op)
                b.edge(invoke[j], failed[j], f"1 - {p}")
                b.edge(failed[j], invoke[j], r)
                if nxt is None:
                    ko.append((failed[j], f"1 - {r}"))
                else:
                    b.edge(failed[j], nxt, f"1 - {r}")
        return {"entry": invoke[0], "ok": ok, "ko": ko}

    if strat == "PAR":
        invoke = b.state(tag)
        ps = [b.param(f"p{op}{j + 1}", op) for j in range(k)]
        outcomes = []
        for bits in range(1 << k):
            s = b.state()
            outcomes.append(s)
            factors = [ps[j] if bits >> j & 1 else f"(1 - {ps[j]})" for j in range(k)]
            b.edge(invoke, s, " * ".join(factors))
        response = b.state() if op != NOTIF else None
        for bits, s in enumerate(outcomes):
            if bits == 0:
                ko.append((s, "1"))
            elif response is None:
                ok.append((s, "1"))
            else:
                b.edge(s, response, "1")
        if response is not None:
            ok.append((response, "1"))
        return {"entry": invoke, "ok": ok, "ko": ko}

    # PROB / PROB_R
    select = b.state(tag)
    qs = [b.param(f"q{op}{j + 1}", op) for j in range(k - 1)]
    invoke = [b.state() for _ in range(k)]
    retry = b.state() if strat == "PROB_R" else None
    for j in range(k):
        b.edge(select, invoke[j], _stick(qs, j))
        p = b.param(f"p{op}{j + 1}", op)
        ok.append((invoke[j], p))
        if retry is None:
            ko.append((invoke[j], f"1 - {p}"))
        else:
            b.edge(invoke[j], retry, f"1 - {p}")
    if retry is not None:
        if op == NOTIF and k >= 3:
            b.edge(retry, select, "1")
        else:
            r = b.param(f"r{op}", op)
            b.edge(retry, select, r)
            ko.append((retry, f"1 - {r}"))
    return {"entry": select, "ok": ok, "ko": ko}


FX_INTRO_TEXT = """\
param p1
param p2
states 4
init 0
label 0 initial
label 2 success
label 3 fail
trans 0 2 p1
trans 0 1 1 - p1
trans 1 2 p2
trans 1 3 1 - p2
trans 2 2 1
trans 3 3 1
"""


def fx_intro() -> Pdtmc:
    """Two functionally equivalent services tried in turn: succeed with the
    first, else fall back to the second."""
    return parse_model(FX_INTRO_TEXT)


def gen_loop_chain(spec: LoopChainSpec | int) -> Pdtmc:
    """Population-style chain of ``n`` stages.

    Stage ``i`` advances with ``a{i}``; otherwise it stays put or loses the
    run, each with probability ``(1 - a{i})/2``.  The last stage advances to
    ``success``.  One parameter per stage.
    """
    if isinstance(spec, int):
        spec = LoopChainSpec(spec)
    n = spec.n
    b = _Builder()
    stages = [b.state("initial" if i == 0 else None) for i in range(n)]
    success = b.state("success")
    fail = b.state("fail")
    for i, s in enumerate(stages):
        a = b.param(f"a{i + 1}")
        nxt = stages[i + 1] if i + 1 < n else success
        b.edge(s, nxt, a)
        b.edge(s, s, f"(1 - {a}) / 2")
        b.edge(s, fail, f"(1 - {a}) / 2")
    b.edge(success, success, "1")
    b.edge(fail, fail, "1")
    return b.build(0)


def gen_param_sweep(m: Pdtmc, fraction: float | Fraction, seed: int = 0) -> Pdtmc:
    """Keep ``ceil(fraction * #params)`` parameters; see :func:`sweep_with_values`."""
    return sweep_with_values(m, fraction, seed)[0]


def sweep_with_values(m: Pdtmc, fraction: float | Fraction,
                      seed: int = 0) -> tuple[Pdtmc, dict[str, Fraction]]:
    """Keep ``ceil(fraction * #params)`` parameters (at least one) and fix the
    rest to seeded random constants in (0.01, 0.99).

    Transitions keep their structure: a non-constant transition never
    becomes 0 or 1 (values are redrawn if that would happen).  Also returns
    the substituted constants by parameter name.
    """
    fraction = Fraction(str(fraction)) if not isinstance(fraction, Fraction) else fraction
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    n = len(m.params)
    if n == 0:
        raise ValueError("model has no parameters")
    keep = max(1, math.ceil(fraction * n))
    if keep >= n:
        return m, {}
    rng = random.Random(seed)
    fixed = sorted(rng.sample(range(n), n - keep))
    kept = [i for i in range(n) if i not in set(fixed)]
    remap = {old: new for new, old in enumerate(kept)}
    params = ParamTable(m.params[i] for i in kept)
    for _ in range(100):
        values = {i: Fraction(rng.randint(101, 9899), 10_000) for i in fixed}
        rows: dict[int, dict[int, RationalFunction]] = {}
        degenerate = False
        for s, row in m.rows.items():
            new_row = {}
            for t, f in row.items():
                g = rf_substitute(f, values, remap)
                if not f.is_constant() and g.is_constant() and g.constant_value() in (0, 1):
                    degenerate = True
                new_row[t] = g
            rows[s] = new_row
        if not degenerate:
            return (Pdtmc(params, m.n_states, m.initial, rows, dict(m.labels)),
                    {m.params[i]: v for i, v in values.items()})
    raise RuntimeError("could not draw non-degenerate constants")
