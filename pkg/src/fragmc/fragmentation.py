"""Partition a pDTMC into fragments (single input state, absorbing-free
outputs), restructuring the chain where that helps a fragment close."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from .model import Pdtmc
from .ratfun import RationalFunction, rf_add, rf_mul

MULTI = "multi"
SINGLE = "single"


class FragmentationError(Exception):
    pass


class PreconditionViolated(FragmentationError, ValueError):
    pass


class InapplicableWhenZRetainsInternalSuccessors(PreconditionViolated):
    pass


@dataclass(frozen=True)
class Fragment:
    states: frozenset[int]
    z0: int
    outputs: frozenset[int]
    kind: str = MULTI

    @classmethod
    def single(cls, s: int) -> "Fragment":
        return cls(frozenset({s}), s, frozenset({s}), SINGLE)

    @property
    def is_single(self) -> bool:
        return self.kind == SINGLE

    @property
    def inner(self) -> frozenset[int]:
        return self.states - self.outputs - {self.z0}

    def to_dict(self, aux: Iterable[int] = ()) -> dict:
        aux = set(aux)
        return {
            "kind": self.kind,
            "z0": self.z0,
            "states": sorted(self.states),
            "outputs": sorted(self.outputs),
            "auxiliary": sorted(s for s in self.states if s in aux),
        }


@dataclass
class FragmentSet:
    fragments: list[Fragment] = field(default_factory=list)
    owner: dict[int, int] = field(default_factory=dict)

    def add(self, f: Fragment) -> int:
        clash = [s for s in f.states if s in self.owner]
        if clash:
            raise FragmentationError(f"states {sorted(clash)} already belong to a fragment")
        idx = len(self.fragments)
        self.fragments.append(f)
        for s in f.states:
            self.owner[s] = idx
        return idx

    def __len__(self) -> int:
        return len(self.fragments)

    def __iter__(self):
        return iter(self.fragments)

    def __getitem__(self, i: int) -> Fragment:
        return self.fragments[i]

    @property
    def n_multi(self) -> int:
        return sum(1 for f in self.fragments if not f.is_single)

    def covers(self, n_states: int) -> bool:
        return sorted(self.owner) == list(range(n_states))


@dataclass(frozen=True)
class Event:
    kind: str       # split | bypass | inapplicable | single | downgrade | fragment
    state: int
    detail: str = ""
    created: tuple[int, ...] = ()

    def __str__(self) -> str:
        extra = f" -> aux {list(self.created)}" if self.created else ""
        return f"{self.kind} @ {self.state}: {self.detail}{extra}"


class WorkingModel:
    """Mutable copy of a pDTMC with predecessor bookkeeping."""

    def __init__(self, m: Pdtmc):
        self.params = m.params
        self.initial = m.initial
        self.labels = dict(m.labels)
        self.rows: dict[int, dict[int, RationalFunction]] = {s: dict(r) for s, r in m.rows.items()}
        self.n_states = m.n_states
        self.preds: dict[int, set[int]] = {s: set() for s in range(m.n_states)}
        for s, row in self.rows.items():
            for t in row:
                self.preds[t].add(s)
        self.auxiliary: list[int] = []

    def succ(self, s: int) -> dict[int, RationalFunction]:
        return self.rows.get(s, {})

    def add_state(self) -> int:
        s = self.n_states
        self.n_states += 1
        self.rows[s] = {}
        self.preds[s] = set()
        return s

    def add_edge(self, s: int, t: int, p: RationalFunction) -> None:
        row = self.rows.setdefault(s, {})
        if t in row:
            total = rf_add(row[t], p)
            if total.is_zero():
                del row[t]
                self.preds[t].discard(s)
            else:
                row[t] = total
        else:
            row[t] = p
            self.preds[t].add(s)

    def remove_edge(self, s: int, t: int) -> RationalFunction:
        p = self.rows[s].pop(t)
        self.preds[t].discard(s)
        return p

    def snapshot(self):
        return ({s: dict(r) for s, r in self.rows.items()},
                {s: set(p) for s, p in self.preds.items()},
                self.n_states, list(self.auxiliary))

    def restore(self, snap) -> None:
        rows, preds, n, aux = snap
        self.rows = {s: dict(r) for s, r in rows.items()}
        self.preds = {s: set(p) for s, p in preds.items()}
        self.n_states = n
        self.auxiliary = list(aux)

    def freeze(self) -> Pdtmc:
        return Pdtmc(self.params, self.n_states, self.initial,
                     {s: dict(r) for s, r in self.rows.items()}, dict(self.labels))


# ---------------------------------------------------------------------------
# restructuring


def restructure_split(wm: WorkingModel, z: int, inside: set[int]) -> list[int]:
    """Route each edge from ``z`` to a state outside ``inside`` through a
    fresh auxiliary state (probability 1 onward).  Returns the new ids."""
    row = wm.succ(z)
    out = sorted(t for t in row if t not in inside)
    if not out:
        raise PreconditionViolated(f"state {z} has no successor outside the fragment")
    if not any(t in inside for t in row):
        raise PreconditionViolated(f"state {z} has no successor inside the fragment")
    one = RationalFunction.constant(1)
    created = []
    for t in out:
        p = wm.remove_edge(z, t)
        a = wm.add_state()
        wm.add_edge(z, a, p)
        wm.add_edge(a, t, one)
        wm.auxiliary.append(a)
        created.append(a)
    return created


def restructure_bypass(wm: WorkingModel, z: int, inside: set[int]) -> list[tuple[int, int]]:
    """Redirect every edge ``s -> z`` with ``s`` outside ``inside`` straight
    to the successors of ``z`` (product probabilities, parallel edges add).
    Returns the rewritten ``(s, z)`` edges."""
    ext_preds = sorted(s for s in wm.preds[z] if s not in inside and s != z)
    row = wm.succ(z)
    ext_succ = [t for t in row if t not in inside]
    if not ext_preds or not ext_succ:
        raise PreconditionViolated(f"state {z} needs external predecessors and successors")
    if z in row or any(t in inside for t in row):
        raise InapplicableWhenZRetainsInternalSuccessors(
            f"state {z} keeps successors inside the fragment")
    targets = sorted(row.items())
    rewritten = []
    for s in ext_preds:
        p = wm.remove_edge(s, z)
        for t, q in targets:
            wm.add_edge(s, t, rf_mul(p, q))
        rewritten.append((s, z))
    return rewritten


# ---------------------------------------------------------------------------
# validation


def validate_fragment(m: Pdtmc | WorkingModel, f: Fragment) -> bool:
    """Structural validity of a fragment of ``m``.

    Single-state fragments are always valid.  A multi-state fragment needs:
    ``z0`` is its only state entered from outside (the chain's initial state
    counts as entered from outside), the outputs are exactly the states with
    an edge leaving Z, outputs only lead outside or back to ``z0``, ``z0`` is
    not an output, every state is reachable from ``z0`` inside Z and can
    reach an output inside Z (so all of Z is transient).
    """
    if f.is_single:
        return f.states == {f.z0} and f.outputs == {f.z0}
    Z = f.states
    if f.z0 not in Z or not f.outputs or not f.outputs <= Z or f.z0 in f.outputs:
        return False
    succ = m.succ if isinstance(m, WorkingModel) else m.successors
    if m.initial in Z and m.initial != f.z0:
        return False
    leaving = set()
    entered = set()
    for s in Z:
        for t in succ(s):
            if t not in Z:
                leaving.add(s)
    preds = _preds_of(m, Z)
    for s in Z:
        if any(p not in Z for p in preds.get(s, ())):
            entered.add(s)
    if not entered <= {f.z0} or leaving != set(f.outputs):
        return False
    for o in f.outputs:
        if any(t in Z and t != f.z0 for t in succ(o)):
            return False
    # forward reachability from z0, backward from outputs, both inside Z
    seen = {f.z0}
    stack = [f.z0]
    while stack:
        s = stack.pop()
        if s in f.outputs:
            continue
        for t in succ(s):
            if t in Z and t not in seen:
                seen.add(t)
                stack.append(t)
    if seen != Z:
        return False
    back = set(f.outputs)
    stack = list(f.outputs)
    while stack:
        t = stack.pop()
        for p in preds.get(t, ()):
            if p in Z and p not in back and p not in f.outputs:
                back.add(p)
                stack.append(p)
    return back == Z


def _preds_of(m, Z) -> dict[int, set[int]]:
    if isinstance(m, WorkingModel):
        return {s: m.preds.get(s, set()) for s in Z}
    out: dict[int, set[int]] = {s: set() for s in Z}
    for s, row in m.rows.items():
        for t in row:
            if t in out:
                out[t].add(s)
    return out


# ---------------------------------------------------------------------------
# Algorithms


Z0Policy = Callable[[WorkingModel, set[int]], "int | None"]


def ascending(wm: WorkingModel, assigned: set[int]) -> int | None:
    for s in range(wm.n_states):
        if s not in assigned:
            return s
    return None


def bfs_order(wm: WorkingModel, assigned: set[int]) -> int | None:
    """First unassigned state in breadth-first order from the initial state,
    falling back to ascending ids for unreachable states."""
    seen = {wm.initial}
    queue = [wm.initial]
    i = 0
    while i < len(queue):
        s = queue[i]
        i += 1
        if s not in assigned:
            return s
        for t in sorted(wm.succ(s)):
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return ascending(wm, assigned)


Z0_POLICIES: dict[str, Z0Policy] = {"ascending": ascending, "bfs": bfs_order}


@dataclass
class FragContext:
    wm: WorkingModel
    alpha: int
    assigned: set[int]
    fs: FragmentSet
    events: list[Event] = field(default_factory=list)
    # per-candidate state
    Z: set[int] = field(default_factory=set)
    outputs: set[int] = field(default_factory=set)
    stack: list[int] = field(default_factory=list)
    pending: set[int] = field(default_factory=set)

    def push(self, s: int) -> None:
        if s in self.Z or s in self.pending:
            return
        self.stack.append(s)
        self.pending.add(s)

    def pop(self) -> int:
        s = self.stack.pop()
        self.pending.discard(s)
        return s

    def register_single(self, s: int, why: str) -> None:
        self.fs.add(Fragment.single(s))
        self.assigned.add(s)
        self.events.append(Event("single", s, why))


@dataclass
class FragmentationResult:
    model: Pdtmc
    fragments: FragmentSet
    events: list[Event]
    auxiliary: list[int]
    targets: frozenset[int]

    def report(self) -> dict:
        aux = set(self.auxiliary)
        return {
            "n_states": self.model.n_states,
            "n_transitions": self.model.n_transitions,
            "n_fragments": len(self.fragments),
            "n_multi": self.fragments.n_multi,
            "fragments": [dict(f.to_dict(aux), index=i) for i, f in enumerate(self.fragments)],
            "events": [
                {"kind": e.kind, "state": e.state, "detail": e.detail, "created": list(e.created)}
                for e in self.events
            ],
        }


def fragmentation(m: Pdtmc, target: Iterable[int], alpha: int = 15,
                  order: str | Z0Policy = "ascending") -> FragmentationResult:
    """Partition ``m`` into fragments, restructuring where needed.

    Targets become single-state fragments first.  Each remaining state, in
    ``order``, seeds a candidate grown from a stack of frontier states: a
    popped state whose predecessors are all in the candidate and whose
    successors all lie outside becomes an output; otherwise the candidate
    keeps growing while smaller than ``alpha`` and the popped state is
    restructured once it is not.  Candidates that fail
    :func:`validate_fragment` fall back to a single state.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    policy = Z0_POLICIES[order] if isinstance(order, str) else order
    targets = frozenset(target)
    wm = WorkingModel(m)
    out_degree_budget = m.n_transitions
    ctx = FragContext(wm, alpha, set(), FragmentSet())
    for r in sorted(targets):
        ctx.fs.add(Fragment.single(r))
        ctx.assigned.add(r)
    # a state whose only edge is a self-loop can never sit inside a fragment
    for s in range(wm.n_states):
        if s not in ctx.assigned and list(wm.succ(s)) == [s]:
            ctx.register_single(s, "absorbing")

    while True:
        z0 = policy(wm, ctx.assigned)
        if z0 is None:
            break
        _grow(ctx, z0)
        if len(wm.auxiliary) > out_degree_budget:
            raise FragmentationError("auxiliary states exceed the original transition count")

    model = wm.freeze()
    return FragmentationResult(model, ctx.fs, ctx.events, list(wm.auxiliary), targets)


def _grow(ctx: FragContext, z0: int) -> None:
    wm = ctx.wm
    snap = wm.snapshot()
    n_events = len(ctx.events)
    n_frags = len(ctx.fs)
    assigned = set(ctx.assigned)
    ctx.Z = {z0}
    ctx.outputs = set()
    ctx.stack = []
    ctx.pending = set()
    if ctx.alpha > 1:
        # with alpha == 1 no candidate may grow past its input
        traverse(ctx, z0, is_input=True)
    while ctx.stack:
        w = ctx.pop()
        if w in ctx.assigned or w in ctx.Z:
            continue
        if _output_condition(ctx, w) and (len(ctx.Z) >= ctx.alpha or _settled(ctx, w)):
            ctx.outputs.add(w)
        elif len(ctx.Z) < ctx.alpha:
            traverse(ctx, w, is_input=False)
            if w in ctx.assigned:
                continue
        else:
            restructure(ctx, w, is_input=False)
            if _output_condition(ctx, w, loose=True):
                ctx.outputs.add(w)
        ctx.Z.add(w)

    # close the candidate: states popped before their predecessors joined Z
    # may still turn out to leave it
    ctx.outputs = {s for s in ctx.Z if s != z0 and any(t not in ctx.Z for t in wm.succ(s))}
    f = Fragment(frozenset(ctx.Z), z0, frozenset(ctx.outputs), MULTI)
    if len(ctx.Z) > 1 and validate_fragment(wm, f):
        ctx.events.append(Event("fragment", z0, f"{len(f.states)} states, {len(f.outputs)} outputs"))
    else:
        # undo everything this candidate did to the model and the set
        wm.restore(snap)
        del ctx.events[n_events:]
        for g in ctx.fs.fragments[n_frags:]:
            for st in g.states:
                del ctx.fs.owner[st]
        del ctx.fs.fragments[n_frags:]
        ctx.assigned = assigned
        if len(ctx.Z) > 1:
            ctx.events.append(Event("downgrade", z0, f"candidate of {len(ctx.Z)} states failed validation"))
        f = Fragment.single(z0)
    ctx.fs.add(f)
    ctx.assigned |= f.states
    ctx.Z = set()


def _settled(ctx: FragContext, w: int) -> bool:
    # every successor already belongs to a fragment: nothing left to absorb
    return all(t in ctx.assigned for t in ctx.wm.succ(w))


def _output_condition(ctx: FragContext, w: int, loose: bool = False) -> bool:
    """All predecessors in Z, all successors outside the candidate.

    Successors still waiting on the stack count as inside: they are about
    to join Z.  ``loose`` also accepts pending predecessors (used right
    after a restructuring)."""
    wm = ctx.wm
    inside_pred = ctx.Z | ctx.pending if loose else ctx.Z
    if any(p not in inside_pred for p in wm.preds[w]):
        return False
    return not any(t in ctx.Z or t in ctx.pending or t == w for t in wm.succ(w))


def traverse(ctx: FragContext, w: int, is_input: bool) -> None:
    """Push frontier states around ``w``.

    For a non-input ``w``: its outside predecessors are pushed, unless one of
    them is already assigned, in which case ``w`` becomes a single-state
    fragment.  Then unassigned outside successors are pushed; an edge to an
    assigned successor triggers one restructuring of ``w`` (also when every
    outside successor is assigned).
    """
    wm = ctx.wm
    Z = ctx.Z
    if not is_input:
        I = sorted(i for i in wm.preds[w] if i not in Z)
        if any(i in ctx.assigned for i in I):
            ctx.register_single(w, "predecessor belongs to another fragment")
            return
        for i in I:
            ctx.push(i)
    O = sorted(o for o in wm.succ(w) if o not in Z)
    hits_assigned = False
    for o in O:
        if o not in ctx.assigned:
            ctx.push(o)
        else:
            hits_assigned = True
    if hits_assigned:
        restructure(ctx, w, is_input)


def restructure(ctx: FragContext, w: int, is_input: bool) -> None:
    """Try to make ``w`` closable: split its outside edges when it also has
    inside successors, otherwise bypass it from its outside predecessors."""
    wm = ctx.wm
    inside = ctx.Z | ctx.pending | {w}
    row = wm.succ(w)
    ext_succ = [t for t in row if t not in inside]
    if not ext_succ:
        return
    int_succ = [t for t in row if t in inside]
    ext_pred = [s for s in wm.preds[w] if s not in inside]
    try:
        if int_succ:
            if ext_pred and not is_input:
                raise PreconditionViolated("both outside predecessors and inside successors")
            created = restructure_split(wm, w, inside)
            ctx.events.append(Event("split", w, f"{len(created)} outside edge(s)", tuple(created)))
            for a in created:
                ctx.push(a)
        elif is_input:
            raise PreconditionViolated("the input has no successor inside the candidate")
        elif not any(s in ctx.Z or s in ctx.pending for s in wm.preds[w]):
            raise PreconditionViolated("no predecessor inside the candidate")
        else:
            rewritten = restructure_bypass(wm, w, inside)
            ctx.events.append(Event("bypass", w, f"{len(rewritten)} incoming edge(s) rerouted"))
    except PreconditionViolated as exc:
        ctx.events.append(Event("inapplicable", w, str(exc)))
