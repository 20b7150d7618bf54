"""Command-line interface.

Exit codes: 0 success, 1 validation or consistency failure, 2 usage error.
Every ``FILE`` argument also accepts the name of a built-in scenario.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, TextIO

import numpy as np

from . import scenarios
from .ctxfile import ContextFile, ContextFileError
from .cvsolve import CalibrationError, InconsistentPinsError, build_F, solve_exact, solve_fixed, solve_pinv
from .gexpr import GExprError, parse
from .matcore import MatrixError
from .measurement import COMPLETENESS_ATOL, MeasurementError, State, completeness_defect
from .weaklimit import GridSpec, audit, generalized_weak_value, limit_from_samples, sample_point

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
UNIQUE_LIMIT_ATOL = 1e-6


class UsageError(Exception):
    pass


@dataclass
class SweepRecord:
    g: float
    alphas: Optional[np.ndarray]
    cond_avg: float
    cond_probs: Optional[np.ndarray]
    post_prob: float
    weak_value: float
    status: str = "ok"

    def row(self, n_outcomes: int) -> List[str]:
        alphas = self.alphas if self.alphas is not None else [math.nan] * n_outcomes
        probs = self.cond_probs if self.cond_probs is not None else [math.nan] * n_outcomes
        cells = [self.g, *alphas, self.cond_avg, *probs, self.post_prob, self.weak_value]
        return [repr(float(x)) for x in cells] + [self.status]


# --------------------------------------------------------------------------
# helpers

def _load(source: str, obs: Optional[str]) -> ContextFile:
    values = _split_obs(obs)
    if os.path.exists(source):
        cf = ContextFile.load(source)
        if not values:
            return cf
        try:
            return cf.with_diagonal_observable(values)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if source in scenarios.SCENARIOS:
        try:
            return scenarios.get(source, values)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    raise UsageError(f"no such file or scenario: {source!r} (scenarios: {', '.join(sorted(scenarios.SCENARIOS))})")


def _split_obs(obs: Optional[str]) -> Optional[List[str]]:
    if obs is None:
        return None
    values = [v.strip() for v in obs.split(",")]
    for v in values:
        try:
            if parse(v).depends_on_g:
                raise UsageError(f"--obs value {v!r} depends on g")
        except GExprError as exc:
            raise UsageError(f"bad --obs value {v!r}: {exc}") from None
    return values


def _pins(items: Sequence[str], n_outcomes: int) -> dict:
    pins = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--pin expects IDX=EXPR, got {item!r}")
        idx, expr = item.split("=", 1)
        try:
            j = int(idx)
        except ValueError:
            raise UsageError(f"--pin index must be an integer, got {idx!r}") from None
        if not 1 <= j <= n_outcomes:
            raise UsageError(f"--pin index {j} out of range 1..{n_outcomes}")
        try:
            pins[j - 1] = parse(expr)
        except GExprError as exc:
            raise UsageError(f"bad --pin expression {expr!r}: {exc}") from None
    return pins


def _method(name: str) -> str:
    return {"pinv": "pinv", "fixed": "fixed", "exact": "exact"}[name]


def _fmt(x: float) -> str:
    return f"{x:.15g}"


# --------------------------------------------------------------------------
# commands

def cmd_validate(args, out: TextIO) -> int:
    cf = _load(args.file, args.obs)
    ok = True
    print(f"file: {args.file}", file=out)
    try:
        ctx = cf.to_context(check=False)
    except (ContextFileError, GExprError) as exc:
        print(f"error: {exc}", file=out)
        return EXIT_FAIL
    lo, hi = ctx.validity
    print(f"dimension: {cf.dim}  outcomes: {len(ctx)}  validity: [{_fmt(lo)}, {_fmt(hi)}]", file=out)
    for section, getter in (("observable", cf.get_observable), ("state", cf.get_state), ("post", cf.get_post)):
        try:
            value = getter()
            status = "absent" if value is None else "ok"
        except (ContextFileError, MatrixError, MeasurementError, GExprError) as exc:
            status = f"INVALID ({exc})"
            ok = False
        print(f"{section}: {status}", file=out)
    worst, worst_g = 0.0, None
    try:
        for g in ctx.sample_grid():
            ops = ctx.operators_at(g)
            effects = np.conj(np.swapaxes(ops, -1, -2)) @ ops
            d = completeness_defect(effects)
            if d > worst:
                worst, worst_g = d, g
    except GExprError as exc:
        print(f"completeness: FAIL ({exc})", file=out)
        ok = False
    else:
        passed = worst <= COMPLETENESS_ATOL
        where = f" at g={_fmt(worst_g)}" if worst_g is not None else ""
        print(f"completeness: {'PASS' if passed else 'FAIL'} (max defect {worst:.3e}{where} over "
              f"{len(ctx.sample_grid())} samples)", file=out)
        ok = ok and passed
    print(f"result: {'PASS' if ok else 'FAIL'}", file=out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_solve(args, out: TextIO) -> int:
    cf = _load(args.file, args.obs)
    ctx = cf.to_context()
    obs = cf.get_observable()
    pins = _pins(args.pin, len(ctx))
    if args.method == "fixed" and not pins:
        raise UsageError("--method fixed needs at least one --pin")
    cal = build_F(obs, ctx, args.g)
    try:
        if args.method == "pinv":
            cv = solve_pinv(cal)
        elif args.method == "exact":
            cv = solve_exact(cal)
        else:
            cv = solve_fixed(cal, pins)
    except InconsistentPinsError as exc:
        print(f"error: inconsistent pins, residual {exc.residual:.3e}", file=out)
        return EXIT_FAIL
    except CalibrationError as exc:
        print(f"error: {exc}", file=out)
        return EXIT_FAIL
    print(f"method: {cv.method}", file=out)
    print(f"g: {_fmt(args.g)}", file=out)
    for label, a in zip(ctx.labels, cv.alphas):
        print(f"alpha_{label}: {_fmt(a)}", file=out)
    print(f"residual: {cv.residual:.3e}", file=out)
    print(f"norm_sq: {_fmt(cv.norm_sq)}", file=out)
    return EXIT_OK


def cmd_sweep(args, out: TextIO) -> int:
    cf = _load(args.file, args.obs)
    ctx = cf.to_context()
    obs = cf.get_observable()
    state, post = cf.get_state(), cf.get_post()
    if state is None or post is None:
        raise UsageError("sweep needs STATE and POST sections")
    pins = _pins(args.pin, len(ctx))
    if args.method == "fixed" and not pins:
        raise UsageError("--method fixed needs at least one --pin")
    if not 0 < args.gmin < args.gmax or args.points < 2:
        raise UsageError("need 0 < --gmin < --gmax and --points >= 2")
    gs = GridSpec(args.gmin, args.gmax, args.points).grid()
    wv = generalized_weak_value(obs, state, post).value

    def run(g):
        return sample_point(ctx, obs, float(g), _method(args.method), state, post, pins)

    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            samples = list(pool.map(run, gs))
    else:
        samples = [run(g) for g in gs]

    M = len(ctx)
    header = ["g", *(f"alpha_{lab}" for lab in ctx.labels), "cond_avg",
              *(f"P({lab}|f)" for lab in ctx.labels), "post_prob", "weak_value", "status"]
    print(",".join(header), file=out)
    good = []
    for s in sorted(samples, key=lambda s: s.g):
        if s.error is None:
            rec = SweepRecord(s.g, s.alphas, s.result.value, s.result.cond_probs, s.result.post_prob, wv)
            good.append(s)
        else:
            rec = SweepRecord(s.g, None, math.nan, None, math.nan, wv, status="error: " + s.error.replace(",", ";"))
        print(",".join(rec.row(M)), file=out)
    if len(good) < 6:
        print(f"# summary: too few successful points ({len(good)}) to extrapolate", file=out)
        return EXIT_FAIL
    est = limit_from_samples([s.g for s in good], [s.result.value for s in good],
                             [s.result.post_prob for s in good], wv)
    if not est.convergence_flag and est.pole_order:
        flag = f"divergent (pole order {est.pole_order})"
    elif est.discrepancy_vs_eq2 > UNIQUE_LIMIT_ATOL:
        flag = "context-dependent limit (deviates from weak value)"
    else:
        flag = "weak value recovered"
    print(f"# summary: extrapolated={est.extrapolated_value!r} weak_value={wv!r} "
          f"discrepancy={est.discrepancy_vs_eq2!r} converged={est.convergence_flag} "
          f"pole_order={est.pole_order} flag={flag}", file=out)
    return EXIT_OK


def cmd_audit(args, out: TextIO) -> int:
    cf = _load(args.file, args.obs)
    ctx = cf.to_context()
    obs = cf.get_observable()
    state = cf.get_state()
    if state is None:
        state = State.maximally_mixed(cf.dim)
        print("note: no STATE section, auditing with the maximally mixed state", file=out)
    report = audit(ctx, obs, state)
    print(report.render(), file=out)
    return EXIT_OK if report.overall else EXIT_FAIL


def cmd_scenario(args, out: TextIO) -> int:
    if args.name not in scenarios.SCENARIOS:
        raise UsageError(f"unknown scenario {args.name!r}; available: {', '.join(sorted(scenarios.SCENARIOS))}")
    try:
        cf = scenarios.get(args.name, _split_obs(args.obs))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.write(cf.dumps())
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctxvalues", description="Contextual values and weak limits.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, file=True):
        if file:
            sp.add_argument("file", help="context file or built-in scenario name")
        sp.add_argument("--obs", help="diagonal observable override, e.g. 1,-1")
        sp.add_argument("--out", help="write output to PATH instead of stdout")

    sp = sub.add_parser("validate", help="check a context file")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("solve", help="contextual values at one g")
    common(sp)
    sp.add_argument("--g", type=float, required=True)
    sp.add_argument("--method", choices=["pinv", "fixed", "exact"], default="pinv")
    sp.add_argument("--pin", action="append", default=[], metavar="IDX=EXPR",
                    help="fix alpha_IDX (1-based) to an expression in g; repeatable")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="conditioned averages over a g grid, CSV output")
    common(sp)
    sp.add_argument("--gmin", type=float, default=1e-4)
    sp.add_argument("--gmax", type=float, default=1e-2)
    sp.add_argument("--points", type=int, default=21)
    sp.add_argument("--method", choices=["pinv", "fixed", "exact"], default="pinv")
    sp.add_argument("--pin", action="append", default=[], metavar="IDX=EXPR")
    sp.add_argument("--jobs", type=int, default=1, help="evaluate grid points concurrently")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("audit", help="check the sufficient conditions for a unique weak limit")
    common(sp)
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("scenario", help="write a built-in context file")
    sp.add_argument("name", help=", ".join(sorted(scenarios.SCENARIOS)))
    common(sp, file=False)
    sp.set_defaults(func=cmd_scenario)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = open(args.out, "w", encoding="utf-8") if getattr(args, "out", None) else sys.stdout
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"ctxvalues: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContextFileError, GExprError, MeasurementError, MatrixError, CalibrationError) as exc:
        print(f"ctxvalues: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    finally:
        if out is not sys.stdout:
            out.close()


if __name__ == "__main__":
    raise SystemExit(main())
