"""Shared test utilities: seeded random pDTMCs and valuation helpers."""
from __future__ import annotations

import random
from fractions import Fraction

from fragmc.model import Pdtmc, random_valuations
from fragmc.ratfun import ParamTable, RationalFunction, parse_expr


def stick_breaking(params: list[str], n: int) -> list[str]:
    """n expressions summing to 1 built from n-1 parameters."""
    out = []
    rest = "1"
    for i in range(n - 1):
        out.append(f"({rest}) * {params[i]}")
        rest = f"({rest}) * (1 - {params[i]})"
    out.append(rest)
    return out


def random_model(seed: int, n_states: int | None = None, max_params: int = 6,
                 max_out: int = 3) -> Pdtmc:
    """Random stochastic pDTMC with absorbing ``target`` and ``sink`` states.

    Rows use stick-breaking over a small shared parameter pool so every row
    sums to 1 symbolically and no row is a lone self-loop.
    """
    rng = random.Random(seed)
    n = n_states if n_states is not None else rng.randint(3, 15)
    n = max(n, 3)
    names = [f"q{i}" for i in range(rng.randint(1, max_params))]
    params = ParamTable(names)
    target, sink = n - 2, n - 1
    rows: dict[int, dict[int, RationalFunction]] = {}
    for s in range(n - 2):
        k = rng.randint(1, max_out)
        succ = rng.sample(range(n), min(k, n))
        if succ == [s]:
            succ = [s, target]
        chosen = [rng.choice(names) for _ in range(len(succ) - 1)]
        exprs = stick_breaking(chosen, len(succ))
        row: dict[int, RationalFunction] = {}
        for t, e in zip(succ, exprs):
            f = parse_expr(e, params)
            row[t] = row[t] + f if t in row else f
        rows[s] = row
    rows[target] = {target: RationalFunction.constant(1)}
    rows[sink] = {sink: RationalFunction.constant(1)}
    return Pdtmc(params, n, 0, rows, {target: frozenset({"target"}), sink: frozenset({"sink"})})


def points(m: Pdtmc, n: int, seed: int = 0) -> list[dict[int, Fraction]]:
    return random_valuations(m.params, n, seed=seed)


def chain(n: int) -> Pdtmc:
    """0 -> 1 -> ... -> n-1 with probability-1 edges; last state absorbing."""
    one = RationalFunction.constant(1)
    rows = {i: {i + 1: one} for i in range(n - 1)}
    rows[n - 1] = {n - 1: one}
    return Pdtmc(ParamTable(), n, 0, rows, {n - 1: frozenset({"goal"})})
