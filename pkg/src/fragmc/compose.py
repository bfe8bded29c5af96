"""Abstract model over fragments and the resulting equation system."""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .fragmentation import FragmentationResult, FragmentSet
from .model import Pdtmc
from .pmc import DEFAULT_ORDER, eliminate_reach, fragment_reach_all
from .ratfun import (
    EvalDenominatorZero,
    ParamTable,
    RationalFunction,
    parse_expr,
    rf_add,
    rf_compose,
    rf_eval,
    rf_mul,
    rf_op_count,
    rf_substitute,
)

RESULT = "result"
# keeps a hopeless elimination from exhausting memory
DEFAULT_MAX_TERMS = 200_000


class ComposeError(Exception):
    pass


class InconsistentCoverage(ComposeError):
    pass


def synth_name(fragment: int, output: int) -> str:
    return f"f{fragment}_o{output}"


@dataclass
class AbstractModel:
    model: Pdtmc
    # abstract state i <-> fragment i
    synth: dict[tuple[int, int], int]  # (fragment, output) -> extended param id
    base_params: ParamTable

    @property
    def params(self) -> ParamTable:
        return self.model.params


@dataclass
class EquationSystem:
    params: ParamTable                      # base parameters
    bindings: list[tuple[str, RationalFunction]]   # over base + earlier names
    result: str = RESULT
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def extended(self) -> ParamTable:
        return self.params.extend(name for name, _ in self.bindings)

    def formula(self, name: str = RESULT) -> RationalFunction:
        for n, f in self.bindings:
            if n == name:
                return f
        raise KeyError(name)

    def __len__(self) -> int:
        return len(self.bindings)


def fragment_reach_maps(m: Pdtmc, fs: FragmentSet, order: str = DEFAULT_ORDER,
                        n_jobs: int = 1, deadline: float | None = None,
                        max_terms: int | None = None) -> dict[int, dict[int, RationalFunction]]:
    """Output-reach formulas for every multi-state fragment, keyed by index."""
    todo = [i for i, f in enumerate(fs) if not f.is_single]
    if n_jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = {i: pool.submit(fragment_reach_all, m, fs[i], order, deadline, max_terms)
                       for i in todo}
            return {i: futures[i].result() for i in todo}
    return {i: fragment_reach_all(m, fs[i], order=order, deadline=deadline, max_terms=max_terms)
            for i in todo}


def build_abstract(m: Pdtmc, fs: FragmentSet,
                   reach: Mapping[int, Mapping[int, RationalFunction]]) -> AbstractModel:
    """Collapse each fragment to one state.

    A multi-state fragment leaves through its outputs: output ``o`` of
    fragment ``f`` with edge ``o -> s`` gives an abstract edge to the owner of
    ``s`` weighted by the synthetic parameter for ``(f, o)``.  Single-state
    fragments keep their edges unchanged.
    """
    n = len(fs)
    synth: dict[tuple[int, int], int] = {}
    names = []
    base = m.params
    for i, f in enumerate(fs):
        if f.is_single:
            continue
        if i not in reach:
            raise InconsistentCoverage(f"no reach formulas for fragment {i}")
        for o in sorted(f.outputs):
            synth[(i, o)] = len(base) + len(names)
            names.append(synth_name(i, o))
    params = base.extend(names)
    rows: dict[int, dict[int, RationalFunction]] = {i: {} for i in range(n)}
    for i, f in enumerate(fs):
        for s in f.states:
            for t, p in m.successors(s).items():
                owner = fs.owner.get(t)
                if owner is None:
                    raise InconsistentCoverage(f"state {t} belongs to no fragment")
                if t in f.states and t != f.z0:
                    if s in f.outputs and not f.is_single:
                        raise InconsistentCoverage(f"output {s} re-enters fragment {i} at {t}")
                    continue
                if t not in f.states and fs[owner].z0 != t:
                    raise InconsistentCoverage(f"edge {s}->{t} enters fragment {owner} away from its input")
                if s not in f.outputs:
                    if t == f.z0 and t in f.states:
                        continue  # inner edge back to the input
                    raise InconsistentCoverage(f"edge {s}->{t} leaves fragment {i} from a non-output state")
                w = p if f.is_single else rf_mul(RationalFunction.variable(synth[(i, s)]), p)
                row = rows[i]
                row[owner] = rf_add(row[owner], w) if owner in row else w
    labels = {}
    for i, f in enumerate(fs):
        ls = set()
        for s in f.states:
            ls |= m.labels.get(s, frozenset())
        if ls:
            labels[i] = frozenset(ls)
    for i in range(n):
        rows[i] = {t: p for t, p in rows[i].items() if not p.is_zero()}
    model = Pdtmc(params, n, fs.owner[m.initial], rows, labels)
    return AbstractModel(model, synth, base)


def compose_system(abstract: AbstractModel, reach: Mapping[int, Mapping[int, RationalFunction]],
                   target_fragments: Iterable[int], order: str = DEFAULT_ORDER,
                   deadline: float | None = None, inline: bool = False,
                   max_terms: int | None = None) -> EquationSystem:
    """Solve the abstract model and bind everything into an equation system.

    Bindings list every synthetic parameter's formula (fragment order, then
    output id) followed by ``result``.  With ``inline`` the fragment formulas
    are substituted into ``result`` and only ``result`` is kept.
    """
    t0 = time.perf_counter()
    targets = set(target_fragments)
    reach_abs = eliminate_reach(abstract.model, targets, order=order, deadline=deadline,
                                max_terms=max_terms)
    result = RationalFunction.constant(0)
    for t in sorted(reach_abs):
        result = rf_add(result, reach_abs[t])
    t1 = time.perf_counter()
    base = abstract.base_params
    bindings = []
    by_id = {}
    used = result.variables()
    remap = {v: v for v in range(len(base))}
    for (i, o), pid in sorted(abstract.synth.items(), key=lambda kv: kv[1]):
        if pid not in used:
            continue  # fragment the result never depends on (e.g. unreachable)
        f = reach[i][o]
        remap[pid] = len(base) + len(bindings)
        bindings.append((synth_name(i, o), f))
        by_id[pid] = f
    if len(bindings) < len(abstract.synth) and not inline:
        result = rf_substitute(result, {}, remap)
    if inline:
        result = rf_compose(result, by_id)
        # drop synthetic ids from the table by keeping result over base params
        sys = EquationSystem(base, [(RESULT, result)])
    else:
        bindings.append((RESULT, result))
        sys = EquationSystem(base, bindings)
    sys.timings["abstract_pmc"] = t1 - t0
    sys.timings["compose"] = time.perf_counter() - t1
    return sys


def evaluate_system(sys: EquationSystem, point: Mapping[int, Fraction]) -> Fraction:
    """Evaluate bindings in order; each name becomes the next extended id."""
    values = dict(point)
    nb = len(sys.params)
    out = None
    for k, (name, f) in enumerate(sys.bindings):
        out = rf_eval(f, values)
        values[nb + k] = out
    if out is None:
        raise ComposeError("empty equation system")
    return values[nb + [n for n, _ in sys.bindings].index(sys.result)]


def system_op_count(sys: EquationSystem) -> int:
    return sum(rf_op_count(f) for _, f in sys.bindings)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineResult:
    fragmentation: FragmentationResult
    abstract: AbstractModel
    system: EquationSystem
    timings: dict[str, float]


def check(m: Pdtmc, targets: Iterable[int], alpha: int = 15, z0_order: str = "ascending",
          elim_order: str = DEFAULT_ORDER, n_jobs: int = 1, inline: bool = False,
          timeout: float | None = None, max_terms: int | None = DEFAULT_MAX_TERMS) -> PipelineResult:
    """Fragment, solve each fragment, build and solve the abstract model."""
    from .fragmentation import fragmentation

    deadline = time.monotonic() + timeout if timeout else None
    targets = frozenset(targets)
    timings = {}
    t = time.perf_counter()
    fr = fragmentation(m, targets, alpha=alpha, order=z0_order)
    timings["fragmentation"] = time.perf_counter() - t
    t = time.perf_counter()
    reach = fragment_reach_maps(fr.model, fr.fragments, order=elim_order, n_jobs=n_jobs,
                                deadline=deadline, max_terms=max_terms)
    timings["fragment_pmc"] = time.perf_counter() - t
    t = time.perf_counter()
    ab = build_abstract(fr.model, fr.fragments, reach)
    timings["build_abstract"] = time.perf_counter() - t
    tf = {fr.fragments.owner[s] for s in targets}
    sys = compose_system(ab, reach, tf, order=elim_order, deadline=deadline, inline=inline,
                         max_terms=max_terms)
    timings.update(sys.timings)
    sys.timings = timings
    return PipelineResult(fr, ab, sys, timings)


# ---------------------------------------------------------------------------
# JSON


def system_to_json(sys: EquationSystem) -> dict:
    ext = sys.extended
    return {
        "params": list(sys.params),
        "bindings": [{"name": n, "formula": f.to_string(ext)} for n, f in sys.bindings],
        "result": sys.result,
        "op_count": system_op_count(sys),
    }


def system_from_json(data: dict | str) -> EquationSystem:
    if isinstance(data, str):
        data = json.loads(data)
    base = ParamTable(data["params"])
    table = base
    bindings = []
    for b in data["bindings"]:
        f = parse_expr(b["formula"], table)
        bindings.append((b["name"], f))
        table = table.extend([b["name"]])
    return EquationSystem(base, bindings, data.get("result", RESULT))


__all__ = [
    "AbstractModel", "EquationSystem", "InconsistentCoverage", "ComposeError", "PipelineResult",
    "build_abstract", "compose_system", "evaluate_system", "system_op_count", "check",
    "fragment_reach_maps", "system_to_json", "system_from_json", "synth_name", "RESULT",
    "EvalDenominatorZero",
]
