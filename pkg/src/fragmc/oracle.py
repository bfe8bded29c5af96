"""Numeric ground truth: instantiate a pDTMC at a point and solve reachability
with a direct linear solve (exact rationals by default)."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .model import Pdtmc
from .ratfun import rf_eval


class NonStochasticAtPoint(ValueError):
    def __init__(self, rows: list[tuple[int, Fraction]]):
        shown = ", ".join(f"state {s}: sum {v}" for s, v in rows[:5])
        more = f" (+{len(rows) - 5} more)" if len(rows) > 5 else ""
        super().__init__(f"not stochastic at point: {shown}{more}")
        self.rows = rows


@dataclass(frozen=True)
class ConcreteDtmc:
    n: int
    initial: int
    rows: dict[int, dict[int, Fraction]]
    targets: frozenset[int]


def instantiate(m: Pdtmc, point: Mapping[int, Fraction], targets: Iterable[int] = ()) -> ConcreteDtmc:
    """Evaluate every transition at ``point``; rows must sum to exactly 1
    with every entry in [0, 1]."""
    rows: dict[int, dict[int, Fraction]] = {}
    bad = []
    for s in range(m.n_states):
        row = {t: rf_eval(f, point) for t, f in m.successors(s).items()}
        total = sum(row.values(), Fraction(0))
        if total != 1 or any(v < 0 or v > 1 for v in row.values()):
            bad.append((s, total))
        rows[s] = {t: v for t, v in row.items() if v != 0}
    if bad:
        raise NonStochasticAtPoint(bad)
    return ConcreteDtmc(m.n_states, m.initial, rows, frozenset(targets))


def can_reach(c: ConcreteDtmc) -> set[int]:
    """States with a positive-probability path to a target."""
    back: dict[int, list[int]] = {}
    for s, row in c.rows.items():
        for t in row:
            back.setdefault(t, []).append(s)
    good = set(c.targets)
    queue = deque(good)
    while queue:
        t = queue.popleft()
        for s in back.get(t, ()):
            if s not in good:
                good.add(s)
                queue.append(s)
    return good


def solve_reach(c: ConcreteDtmc, exact: bool = True, prune: bool = True) -> Fraction | float:
    """``Pr[F targets]`` from the initial state.

    Unknowns are the non-target states that can reach a target and are
    reachable from the initial state; all others are fixed to 0 (or 1 for
    targets).  ``prune=False`` skips the backward pass and instead relies on
    the solver (only useful to test the pruning).
    """
    if c.initial in c.targets:
        return Fraction(1) if exact else 1.0
    useful = can_reach(c) if prune else set(range(c.n))
    if c.initial not in useful:
        return Fraction(0) if exact else 0.0
    # forward closure restricted to useful states
    seen = {c.initial}
    queue = deque([c.initial])
    while queue:
        s = queue.popleft()
        if s in c.targets:
            continue
        for t in c.rows.get(s, {}):
            if t in useful and t not in seen:
                seen.add(t)
                queue.append(t)
    unknowns = sorted(s for s in seen if s not in c.targets)
    idx = {s: i for i, s in enumerate(unknowns)}
    if exact:
        return _solve_exact(c, unknowns, idx)
    return _solve_float(c, unknowns, idx)


def _system(c: ConcreteDtmc, unknowns, idx):
    # x_s - sum_{u} P(s,u) x_u = sum_{t in targets} P(s,t)
    eqs = []
    for s in unknowns:
        row: dict[int, Fraction] = {idx[s]: Fraction(1)}
        rhs = Fraction(0)
        for t, p in c.rows.get(s, {}).items():
            if t in c.targets:
                rhs += p
            elif t in idx:
                row[idx[t]] = row.get(idx[t], Fraction(0)) - p
        eqs.append((row, rhs))
    return eqs


def _solve_exact(c, unknowns, idx) -> Fraction:
    eqs = _system(c, unknowns, idx)
    n = len(eqs)
    rows = [dict(r) for r, _ in eqs]
    rhs = [b for _, b in eqs]
    # sparse Gauss-Jordan: pivot on column i using the row with the fewest entries
    for col in range(n):
        piv = None
        for r in range(col, n):
            if rows[r].get(col, 0) != 0 and (piv is None or len(rows[r]) < len(rows[piv])):
                piv = r
        if piv is None:
            # singular column: the state cannot leave a non-target loop; value 0
            continue
        rows[col], rows[piv] = rows[piv], rows[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        prow, pb = rows[col], rhs[col]
        inv = 1 / prow[col]
        if inv != 1:
            prow = {k: v * inv for k, v in prow.items()}
            pb = pb * inv
            rows[col], rhs[col] = prow, pb
        for r in range(n):
            if r == col:
                continue
            f = rows[r].get(col)
            if not f:
                continue
            row = rows[r]
            for k, v in prow.items():
                nv = row.get(k, 0) - f * v
                if nv:
                    row[k] = nv
                else:
                    row.pop(k, None)
            rhs[r] -= f * pb
    k = idx[c.initial]
    return rhs[k] if rows[k].get(k) == 1 else Fraction(0)


def _solve_float(c, unknowns, idx) -> float:
    n = len(unknowns)
    A = np.zeros((n, n))
    b = np.zeros(n)
    for i, (row, rhs) in enumerate(_system(c, unknowns, idx)):
        for j, v in row.items():
            A[i, j] = float(v)
        b[i] = float(rhs)
    x = np.linalg.solve(A, b)
    return float(x[idx[c.initial]])


def oracle_reach(m: Pdtmc, targets: Iterable[int], point: Mapping[int, Fraction],
                 exact: bool = True) -> Fraction | float:
    return solve_reach(instantiate(m, point, targets), exact=exact)


def relative_error(a, b) -> float:
    a, b = Fraction(a), Fraction(b)
    if a == b:
        return 0.0
    scale = max(abs(a), abs(b))
    return float(abs(a - b) / scale)
