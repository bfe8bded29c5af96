"""Parametric reachability by state elimination."""
from __future__ import annotations

import time
from collections import deque
from typing import Callable, Iterable

from .model import Pdtmc
from .ratfun import RationalFunction, rf_add, rf_div, rf_mul, rf_sub

ONE = RationalFunction.constant(1)
ZERO = RationalFunction.constant(0)


ELIM_ORDERS = ("auto", "markowitz", "weighted", "outdeg", "id", "reverse")
DEFAULT_ORDER = "auto"
# tried in turn by "auto" until one stays within the term budget
AUTO_ORDERS = ("markowitz", "weighted", "outdeg")

class PmcError(Exception):
    pass


class SelfLoopProbabilityOne(PmcError):
    pass


class PmcTimeout(PmcError, TimeoutError):
    pass


class NotAMultiStateFragment(PmcError, ValueError):
    pass


class PmcBudgetExceeded(PmcTimeout):
    """A formula outgrew the term budget (treated like a timeout)."""


def _prune(rows: dict[int, dict[int, RationalFunction]], initial: int, targets: set[int]):
    """Restrict to states reachable from ``initial`` that can reach a target;
    targets lose their outgoing edges."""
    seen = {initial}
    queue = deque([initial])
    while queue:
        s = queue.popleft()
        if s in targets:
            continue
        for t in rows.get(s, {}):
            if t not in seen:
                seen.add(t)
                queue.append(t)
    back: dict[int, list[int]] = {}
    for s in seen:
        if s in targets:
            continue
        for t in rows.get(s, {}):
            back.setdefault(t, []).append(s)
    useful = set(t for t in targets if t in seen)
    queue = deque(useful)
    while queue:
        t = queue.popleft()
        for s in back.get(t, ()):
            if s not in useful:
                useful.add(s)
                queue.append(s)
    succ = {}
    for s in useful:
        if s in targets:
            succ[s] = {}
        else:
            succ[s] = {t: f for t, f in rows.get(s, {}).items() if t in useful}
    return succ


def eliminate_reach(m: Pdtmc, targets: Iterable[int], order: str = DEFAULT_ORDER,
                    deadline: float | None = None,
                    max_terms: int | None = None) -> dict[int, RationalFunction]:
    """Probability of eventually reaching each target (made absorbing) from
    the initial state, as exact rational functions.

    ``order`` is ``"markowitz"`` (fewest in*out edge pairs first, ties by
    id), ``"weighted"`` (the same count weighted by numerator terms),
    ``"outdeg"`` (smallest out-degree first) or ``"id"`` / ``"reverse"`` for
    fixed orders.  ``"auto"`` runs the first three in turn and moves on only
    when one exceeds ``max_terms``.  ``deadline`` is an absolute
    ``time.monotonic()`` value; passing it raises :class:`PmcTimeout`.
    ``max_terms`` caps the numerator size of any intermediate formula
    (:class:`PmcBudgetExceeded`), which keeps hopeless runs from exhausting
    memory before the deadline is noticed.
    """
    return eliminate_rows(m.rows, m.initial, targets, order=order, deadline=deadline,
                          max_terms=max_terms)


def eliminate_rows(rows: dict[int, dict[int, RationalFunction]], initial: int,
                   targets: Iterable[int], order: str = DEFAULT_ORDER,
                   deadline: float | None = None,
                   max_terms: int | None = None) -> dict[int, RationalFunction]:
    targets = set(targets)
    if not targets:
        raise ValueError("no target states")
    if order == "auto":
        for k, o in enumerate(AUTO_ORDERS):
            try:
                return eliminate_rows(rows, initial, targets, order=o, deadline=deadline,
                                      max_terms=max_terms)
            except PmcBudgetExceeded:
                if k == len(AUTO_ORDERS) - 1:
                    raise
    if initial in targets:
        return {t: (ONE if t == initial else ZERO) for t in targets}
    succ = _prune(rows, initial, targets)
    result = {t: ZERO for t in targets}
    if initial not in succ:
        return result
    pred: dict[int, set[int]] = {s: set() for s in succ}
    for s, row in succ.items():
        for t in row:
            pred[t].add(s)

    remaining = [s for s in succ if s != initial and s not in targets]
    pick = _order_picker(order, remaining, succ, pred)
    guard = _Guard(deadline, max_terms)
    while True:
        guard.tick()
        v = pick()
        if v is None:
            break
        _eliminate(v, succ, pred, guard)

    row = succ[initial]
    loop = row.get(initial)
    scale = None
    if loop is not None:
        rest = rf_sub(ONE, loop)
        if rest.is_zero():
            raise SelfLoopProbabilityOne(f"initial state {initial} is absorbing but not a target")
        scale = rest
    for t in targets:
        f = row.get(t)
        if f is None:
            continue
        result[t] = rf_div(f, scale) if scale is not None else f
    return result


def _order_picker(order: str, remaining: list[int], succ, pred=None) -> Callable[[], int | None]:
    if order in ("markowitz", "weighted"):
        pool = set(remaining)
        weighted = order == "weighted"

        def cost(s):
            row = succ[s]
            ins = [u for u in pred[s] if u != s]
            outs = [w for w in row if w != s]
            if weighted:
                return (sum(len(succ[u][s].num.terms) for u in ins)
                        * sum(len(f.num.terms) for f in (row[w] for w in outs)), s)
            return (len(ins) * len(outs), s)

        def pick():
            if not pool:
                return None
            v = min(pool, key=cost)
            pool.discard(v)
            return v
        return pick
    if order == "outdeg":
        pool = set(remaining)

        def pick():
            if not pool:
                return None
            v = min(pool, key=lambda s: (len(succ[s]) - (s in succ[s]), s))
            pool.discard(v)
            return v
        return pick
    if order in ("id", "reverse"):
        seq = sorted(remaining, reverse=(order == "reverse"))
        it = iter(seq)
        return lambda: next(it, None)
    raise ValueError(f"unknown elimination order {order!r}")


class _Guard:
    def __init__(self, deadline: float | None, max_terms: int | None):
        self.deadline = deadline
        self.max_terms = max_terms

    def tick(self) -> None:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise PmcTimeout("state elimination exceeded its time budget")

    def precheck(self, a: RationalFunction, b: RationalFunction) -> None:
        # refuse a product whose expansion could dwarf the budget
        if self.max_terms is not None and len(a.num.terms) * len(b.num.terms) > 16 * self.max_terms:
            raise PmcBudgetExceeded(f"product would grow past {self.max_terms} terms")
        self.tick()

    def check(self, f: RationalFunction) -> None:
        if self.max_terms is not None and len(f.num.terms) > self.max_terms:
            raise PmcBudgetExceeded(f"formula grew past {self.max_terms} terms")
        self.tick()


def _eliminate(v: int, succ, pred, guard: _Guard | None = None) -> None:
    row = succ.pop(v)
    loop = row.pop(v, None)
    pred[v].discard(v)
    preds = pred.pop(v)
    for w in row:
        pred[w].discard(v)
    if loop is not None:
        rest = rf_sub(ONE, loop)
        if rest.is_zero():
            raise SelfLoopProbabilityOne(f"state {v} has a self-loop of probability 1")
        if guard is not None:
            for f in row.values():
                guard.check(f)
                guard.precheck(f, rest)
        row = {w: rf_div(f, rest) for w, f in row.items()}
    for u in preds:
        urow = succ[u]
        p_uv = urow.pop(v)
        for w, p_vw in row.items():
            if guard is not None:
                guard.precheck(p_uv, p_vw)
            contrib = rf_mul(p_uv, p_vw)
            if guard is not None:
                guard.check(contrib)
            if w in urow:
                total = rf_add(urow[w], contrib)
                if guard is not None:
                    guard.check(total)
                if total.is_zero():
                    del urow[w]
                    pred[w].discard(u)
                else:
                    urow[w] = total
            else:
                urow[w] = contrib
                pred[w].add(u)


# ---------------------------------------------------------------------------
# fragments


class FragmentModel:
    """Sub-chain over a fragment's states: entered at the input state, every
    output state made absorbing.  ``local`` maps original ids to dense ids."""

    def __init__(self, model: Pdtmc, local: dict[int, int], outputs: list[int]):
        self.model = model
        self.local = local
        self.outputs = outputs

    @property
    def global_ids(self) -> list[int]:
        inv = [0] * len(self.local)
        for g, l in self.local.items():
            inv[l] = g
        return inv


def fragment_model(m: Pdtmc, f) -> FragmentModel:
    """Build the fragment sub-model: outputs absorbing, edges leaving Z dropped.

    Edges from inner states back to the input state are kept; only the
    outputs' rows are replaced by self-loops.
    """
    if f.is_single:
        raise NotAMultiStateFragment("single-state fragments need no sub-model")
    ordered = [f.z0] + sorted(s for s in f.states if s != f.z0)
    local = {s: i for i, s in enumerate(ordered)}
    outputs = set(f.outputs)
    rows: dict[int, dict[int, RationalFunction]] = {}
    for s in ordered:
        ls = local[s]
        if s in outputs:
            rows[ls] = {ls: ONE}
            continue
        rows[ls] = {local[t]: p for t, p in m.successors(s).items() if t in local}
    sub = Pdtmc(m.params, len(ordered), 0, rows,
                {local[s]: frozenset({"output"}) for s in outputs})
    return FragmentModel(sub, local, sorted(outputs))


def fragment_reach_all(m: Pdtmc, f, order: str = DEFAULT_ORDER, deadline: float | None = None,
                       max_terms: int | None = None) -> dict[int, RationalFunction]:
    """Reachability formula for each output state of ``f`` (original ids)."""
    if f.is_single:
        return {f.z0: ONE}
    fm = fragment_model(m, f)
    local_targets = [fm.local[o] for o in fm.outputs]
    reach = eliminate_reach(fm.model, local_targets, order=order, deadline=deadline,
                            max_terms=max_terms)
    return {o: reach[fm.local[o]] for o in fm.outputs}


def monolithic(m: Pdtmc, targets: Iterable[int], order: str = DEFAULT_ORDER,
               deadline: float | None = None, max_terms: int | None = None) -> RationalFunction:
    """One-shot ``P=?[F targets]`` for the whole model."""
    reach = eliminate_reach(m, targets, order=order, deadline=deadline, max_terms=max_terms)
    total = ZERO
    for t in sorted(reach):
        total = rf_add(total, reach[t])
    return total

