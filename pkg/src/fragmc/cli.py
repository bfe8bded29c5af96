"""``fragmc`` command line: check, fragment, eval, verify, bench, gen."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .casegen import STRATEGIES, gen_fx, gen_loop_chain, gen_param_sweep
from .compose import (
    ComposeError,
    EquationSystem,
    check,
    evaluate_system,
    system_from_json,
    system_op_count,
    system_to_json,
)
from .fragmentation import Z0_POLICIES, FragmentationError, fragmentation
from .model import ModelError, Pdtmc, parse_model, random_valuations, render_model, resolve_target
from .oracle import NonStochasticAtPoint, oracle_reach, relative_error
from .pmc import DEFAULT_ORDER, ELIM_ORDERS, PmcError
from .ratfun import RatFunError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATE = 4
EXIT_SOLVE = 5
EXIT_VERIFY = 6

TOLERANCE = 1e-9


class VerificationFailed(Exception):
    pass


@dataclass
class RunConfig:
    mode: str
    model: str | None = None
    target: str | None = None
    alpha: int = 15
    z0_policy: str = "ascending"
    elim_order: str = DEFAULT_ORDER
    seed: int = 0
    samples: int = 20
    output: str | None = None
    timeout: float | None = None
    jobs: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")


def _default_seed() -> int:
    raw = os.environ.get("FRAGMC_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"fragmc: FRAGMC_SEED must be an integer, got {raw!r}")


def load_model(path: str) -> Pdtmc:
    return parse_model(Path(path).read_text())


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(path).write_text(text)


def _run_pipeline(cfg: RunConfig, m: Pdtmc, alpha: int | None = None):
    targets = resolve_target(m, cfg.target)
    return targets, check(m, targets, alpha=alpha or cfg.alpha, z0_order=cfg.z0_policy,
                          elim_order=cfg.elim_order, n_jobs=cfg.jobs, timeout=cfg.timeout)


def _verify(m: Pdtmc, targets, sys_: EquationSystem, samples: int, seed: int) -> float:
    """Largest relative error against the oracle; raises when above tolerance."""
    worst = 0.0
    for k, point in enumerate(random_valuations(m.params, samples, seed=seed)):
        got = evaluate_system(sys_, point)
        want = oracle_reach(m, targets, point)
        err = relative_error(got, want)
        worst = max(worst, err)
        if err > TOLERANCE:
            raise VerificationFailed(f"sample {k}: system {float(got)!r} vs oracle {float(want)!r} "
                                     f"(relative error {err:.3g})")
    return worst


# ---------------------------------------------------------------------------
# commands


def cmd_check(cfg: RunConfig) -> int:
    m = load_model(cfg.model)
    t = time.perf_counter()
    _, res = _run_pipeline(cfg, m)
    wall = time.perf_counter() - t
    fr = res.fragmentation
    print(f"fragments: {len(fr.fragments)} ({fr.fragments.n_multi} multi-state)")
    print(f"states/transitions: {m.n_states}/{m.n_transitions} -> "
          f"{fr.model.n_states}/{fr.model.n_transitions}")
    print(f"op_count: {system_op_count(res.system)}")
    for phase, secs in res.timings.items():
        print(f"time {phase}: {secs:.4f}s")
    print(f"time total: {wall:.4f}s")
    if cfg.output:
        _write(cfg.output, json.dumps(system_to_json(res.system), indent=2))
    return EXIT_OK


def cmd_fragment(cfg: RunConfig) -> int:
    m = load_model(cfg.model)
    targets = resolve_target(m, cfg.target)
    fr = fragmentation(m, targets, alpha=cfg.alpha, order=cfg.z0_policy)
    if cfg.extra.get("explain"):
        for e in fr.events:
            print(e)
    report = fr.report()
    if cfg.output:
        _write(cfg.output, json.dumps(report, indent=2))
    else:
        print(f"fragments: {report['n_fragments']} ({report['n_multi']} multi-state), "
              f"states/transitions after restructuring: {report['n_states']}/{report['n_transitions']}")
    return EXIT_OK


def parse_point(text: str, names) -> dict[int, Fraction]:
    values = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, sep, val = part.partition("=")
        if not sep:
            raise ValueError(f"expected NAME=VALUE, got {part!r}")
        name = name.strip()
        if name not in names:
            raise ValueError(f"unknown parameter {name!r}")
        values[names.index(name)] = Fraction(val.strip())
    missing = [n for i, n in enumerate(names) if i not in values]
    if missing:
        raise ValueError(f"missing values for {', '.join(missing)}")
    return values


def cmd_eval(cfg: RunConfig) -> int:
    sys_ = system_from_json(Path(cfg.extra["system"]).read_text())
    point = parse_point(cfg.extra["point"], list(sys_.params))
    value = evaluate_system(sys_, point)
    print(f"{value} ({float(value):.12g})")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    m = load_model(cfg.model)
    if cfg.extra.get("system"):
        targets = resolve_target(m, cfg.target)
        sys_ = system_from_json(Path(cfg.extra["system"]).read_text())
        if list(sys_.params) != list(m.params):
            raise VerificationFailed("system parameters do not match the model")
    else:
        targets, res = _run_pipeline(cfg, m)
        sys_ = res.system
    worst = _verify(m, targets, sys_, cfg.samples, cfg.seed)
    print(f"verify: pass ({cfg.samples} samples, seed {cfg.seed}, max relative error {worst:.3g})")
    return EXIT_OK


def parse_alpha_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    a = int(lo)
    b = int(hi) if sep else a
    if a < 1 or b < a:
        raise ValueError(f"bad alpha range {text!r}")
    return range(a, b + 1)


BENCH_FIELDS = ("alpha", "time", "op_count", "n_fragments", "verified")


def cmd_bench(cfg: RunConfig) -> int:
    m = load_model(cfg.model)
    rows = []
    failed = solve_failed = False
    timed = not cfg.extra.get("no_time")
    for alpha in cfg.extra["alpha_range"]:
        t = time.perf_counter()
        try:
            targets, res = _run_pipeline(cfg, m, alpha=alpha)
        except PmcError as e:
            rows.append({"alpha": alpha, "time": f"{time.perf_counter() - t:.4f}" if timed else "",
                         "op_count": "", "n_fragments": "", "verified": f"error: {e}"})
            solve_failed = True
            continue
        elapsed = time.perf_counter() - t
        try:
            _verify(m, targets, res.system, cfg.samples, cfg.seed)
            ok = "pass"
        except VerificationFailed as e:
            ok = f"fail: {e}"
            failed = True
        rows.append({"alpha": alpha, "time": f"{elapsed:.4f}" if timed else "",
                     "op_count": system_op_count(res.system),
                     "n_fragments": len(res.fragmentation.fragments), "verified": ok})
    out = sys.stdout if cfg.output in (None, "-") else open(cfg.output, "w", newline="")
    try:
        w = csv.DictWriter(out, fieldnames=BENCH_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    if solve_failed:
        return EXIT_SOLVE
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_gen(cfg: RunConfig) -> int:
    x = cfg.extra
    if x.get("loop_chain") is not None:
        m = gen_loop_chain(x["loop_chain"])
    else:
        m = gen_fx(x["strategy"], x["services"])
    if x.get("sweep_fraction") is not None:
        m = gen_param_sweep(m, Fraction(str(x["sweep_fraction"])), seed=cfg.seed)
    _write(cfg.output, render_model(m))
    return EXIT_OK


COMMANDS = {"check": cmd_check, "fragment": cmd_fragment, "eval": cmd_eval,
            "verify": cmd_verify, "bench": cmd_bench, "gen": cmd_gen}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fragmc", description="Parametric reachability via fragmentation.")
    sub = p.add_subparsers(dest="mode", required=True)

    def pipeline_args(sp, with_target=True):
        sp.add_argument("model", help="model file")
        if with_target:
            sp.add_argument("-t", "--target", required=True, help="target label or comma-separated state ids")
        sp.add_argument("-a", "--alpha", type=int, default=15, help="fragment size threshold")
        sp.add_argument("--z0-policy", choices=sorted(Z0_POLICIES), default="ascending")
        sp.add_argument("--elim-order", choices=ELIM_ORDERS, default=DEFAULT_ORDER)
        sp.add_argument("--timeout", type=float, default=None, help="seconds per pipeline run")
        sp.add_argument("-j", "--jobs", type=int, default=1, help="workers for per-fragment solving")

    def seed_args(sp):
        sp.add_argument("--seed", type=int, default=None, help="defaults to $FRAGMC_SEED or 0")

    sp = sub.add_parser("check", help="build the equation system")
    pipeline_args(sp)
    sp.add_argument("-o", "--output", help="equation-system JSON file ('-' for stdout)")

    sp = sub.add_parser("fragment", help="fragment only and report")
    pipeline_args(sp)
    sp.add_argument("--explain", action="store_true", help="print every fragmentation event")
    sp.add_argument("-o", "--output", help="JSON report file ('-' for stdout)")

    sp = sub.add_parser("eval", help="evaluate an equation-system JSON file")
    sp.add_argument("system", help="equation-system JSON")
    sp.add_argument("--point", required=True, help="p1=0.9,p2=1/3,...")

    sp = sub.add_parser("verify", help="compare against the numeric oracle")
    pipeline_args(sp)
    sp.add_argument("--system", help="verify this equation-system JSON instead of rebuilding it")
    sp.add_argument("-n", "--samples", type=int, default=20)
    seed_args(sp)

    sp = sub.add_parser("bench", help="sweep alpha and write CSV")
    pipeline_args(sp)
    sp.add_argument("--alpha-range", required=True, help="A..B (inclusive)")
    sp.add_argument("-n", "--samples", type=int, default=20, help="verification samples per row")
    seed_args(sp)
    sp.add_argument("--no-time", action="store_true",
                    help="leave the time column empty so reruns compare byte for byte")
    sp.add_argument("-o", "--output", help="CSV file ('-' for stdout)")

    sp = sub.add_parser("gen", help="generate a case model")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--strategy", choices=STRATEGIES)
    g.add_argument("--loop-chain", type=int, metavar="N")
    sp.add_argument("--services", type=int, default=2)
    sp.add_argument("--sweep-fraction", type=float, default=None,
                    help="keep this fraction of parameters symbolic, fix the rest")
    seed_args(sp)
    sp.add_argument("-o", "--output", help="model file ('-' for stdout)")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    seed = getattr(ns, "seed", None)
    cfg = RunConfig(
        mode=ns.mode,
        model=getattr(ns, "model", None),
        target=getattr(ns, "target", None),
        alpha=getattr(ns, "alpha", 15),
        z0_policy=getattr(ns, "z0_policy", "ascending"),
        elim_order=getattr(ns, "elim_order", DEFAULT_ORDER),
        seed=_default_seed() if seed is None else seed,
        samples=getattr(ns, "samples", 20),
        output=getattr(ns, "output", None),
        timeout=getattr(ns, "timeout", None),
        jobs=getattr(ns, "jobs", 1),
    )
    if ns.mode == "fragment":
        cfg.extra["explain"] = ns.explain
    elif ns.mode == "eval":
        cfg.extra.update(system=ns.system, point=ns.point)
    elif ns.mode == "verify":
        cfg.extra["system"] = ns.system
    elif ns.mode == "bench":
        cfg.extra["alpha_range"] = parse_alpha_range(ns.alpha_range)
        cfg.extra["no_time"] = ns.no_time
    elif ns.mode == "gen":
        cfg.extra.update(strategy=ns.strategy, loop_chain=ns.loop_chain, services=ns.services,
                         sweep_fraction=ns.sweep_fraction)
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except ValueError as e:
        parser.error(str(e))
    try:
        return COMMANDS[cfg.mode](cfg)
    except (ModelError, RatFunError, json.JSONDecodeError, KeyError) as e:
        print(f"fragmc: parse error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (FragmentationError, ComposeError, NonStochasticAtPoint) as e:
        print(f"fragmc: invalid model: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_VALIDATE
    except PmcError as e:
        print(f"fragmc: solve failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVE
    except VerificationFailed as e:
        print(f"fragmc: verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except (ValueError, OSError) as e:
        print(f"fragmc: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
