"""Command line interface: ``stopbranch {validate,solve,simulate,verify} MODEL``.

Each command prints a short human table and, with ``--out``, writes a
machine report as sorted-key JSON.  The machine report holds no wall-clock
data, so identical inputs and seeds give byte-identical files.

Exit status: 0 pass, 1 a check failed (or a series did not converge),
2 bad input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__, feller, functionals, oracle, simulator, verifier
from .config_space import NO_STOP, Configuration, TestFunction
from .errors import DomainError, ModelError, NonConvergenceError, StopBranchError
from .generator import check_axioms
from .modelfile import Model, load_model, parse_start

EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _clean(x):
    """JSON-safe copy with plain floats; non-finite values become strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _echo(argv: list[str]) -> list[str]:
    # the output path does not change any result, so it is left out of the echo
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--out":
            skip = True
        elif not a.startswith("--out="):
            out.append(a)
    return out


def _base_report(command: str, argv: list[str], model: Model) -> dict:
    return {
        "command": command,
        "argv": _echo(argv),
        "version": __version__,
        "model": model.source,
        "config": model.resolved(),
    }


def _start(model: Model, args) -> Configuration:
    if args.start is None:
        return Configuration.single(0, 1)
    return parse_start(model.types, args.start)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(model: Model, args, argv) -> tuple[dict, list[str], int]:
    space = model.space()
    Q = model.generator(space)
    problems = check_axioms(Q)
    report = _base_report("validate", argv, model)
    report["result"] = {
        "states": len(space.states),
        "indices_with_overflow": space.size,
        "stopping_states": [model.format_config(c) for c in model.stopping],
        "empty_outside_S": Configuration() not in model.stopping,
        "axiom_problems": problems,
        "passed": not problems,
    }
    lines = [
        f"model {model.source}: {len(space.states)} states (+1 overflow) at N={model.truncation}",
        f"types {list(model.types.labels)}; |S| = {len(model.stopping)}",
        "generator axioms: " + ("ok" if not problems else f"{len(problems)} problem(s)"),
    ]
    lines += [f"  {p}" for p in problems]
    return report, lines, EXIT_PASS if not problems else EXIT_FAIL


def cmd_solve(model: Model, args, argv) -> tuple[dict, list[str], int]:
    space = model.space()
    Q = model.generator(space)
    alpha = _start(model, args)
    S = model.stopping if args.stopped else NO_STOP
    if alpha in S:
        raise DomainError(f"start {model.format_config(alpha)} lies in S")
    ctl = model.controls
    status, error = EXIT_PASS, None
    try:
        if args.stopped:
            series = feller.solve_stopped(Q, S, args.t0, args.t1, alpha, ctl)
        else:
            series = feller.solve(Q, args.t0, args.t1, alpha, ctl)
    except NonConvergenceError as exc:
        series, status, error = exc.partial, EXIT_FAIL, str(exc)
    ref = oracle.distribution(Q, args.t0, args.t1, alpha, S)
    gap = np.abs(series.probs - ref.probs)
    rows = []
    for i in np.nonzero((series.probs > args.threshold) | (ref.probs > args.threshold))[0]:
        rows.append(
            {
                "state": "overflow" if i == space.overflow else model.format_config(space.states[i]),
                "series": float(series.probs[i]),
                "oracle": float(ref.probs[i]),
                "disagreement": float(gap[i]),
            }
        )
    zero = space.index(Configuration())
    extinct = float(ref.probs[zero]) + (ref.mass_on(S) if not S.is_empty else 0.0)
    report = _base_report("solve", argv, model)
    report["flags"] = {"from": model.format_config(alpha), "t0": args.t0, "t1": args.t1, "stopped": args.stopped}
    report["result"] = {
        "table": rows,
        "max_disagreement": float(gap.max()),
        "series_tail": series.tail,
        "series_diagnostics": {k: v for k, v in series.diagnostics.items() if k != "term_masses"},
        "term_masses": series.diagnostics.get("term_masses", []),
        "oracle_overflow": ref.overflow,
        "series_overflow": series.overflow,
        "oracle_extinction": extinct,
        "error": error,
    }
    lines = [f"{'state':>12} {'series':>14} {'oracle':>14} {'gap':>10}"]
    for r in rows:
        lines.append(f"{r['state']:>12} {r['series']:14.10f} {r['oracle']:14.10f} {r['disagreement']:10.2e}")
    lines.append(f"tail {series.tail:.3e}  overflow {ref.overflow:.3e}  max gap {gap.max():.3e}")
    if error:
        lines.append(f"NONCONVERGENCE: {error}")
    return report, lines, status


def cmd_simulate(model: Model, args, argv) -> tuple[dict, list[str], int]:
    alpha = _start(model, args)
    S = model.stopping if args.stopped else NO_STOP
    seed = args.seed if args.seed is not None else model.seeds.get("simulate", 0)
    cap = args.cap if args.cap is not None else 10 * model.truncation
    horizon = args.t0 + args.horizon
    if args.replicas < 1:
        raise DomainError("--replicas must be >= 1")
    codes, _ = simulator.run_replicas(
        model.law, alpha, args.t0, horizon, S, args.replicas, seed, cap=cap
    )
    freqs = {}
    for code, name in enumerate(simulator.OUTCOME_NAMES):
        est = simulator.Estimate.from_samples((codes == code).astype(float), seed)
        freqs[name] = est.to_dict()
    report = _base_report("simulate", argv, model)
    report["flags"] = {
        "from": model.format_config(alpha),
        "t0": args.t0,
        "horizon": args.horizon,
        "replicas": args.replicas,
        "seed": seed,
        "cap": cap,
        "stopped": args.stopped,
    }
    report["result"] = {"outcomes": freqs}
    if args.trajectories:
        logs = []
        for r in range(min(args.replicas, args.trajectories)):
            tr = simulator.simulate(
                model.law, alpha, args.t0, horizon, S, simulator.replica_rng(seed, r), cap=cap
            )
            d = tr.to_dict()
            d["states"] = [model.format_config(c) for c in tr.states]
            if tr.stopped_at is not None:
                d["stopped_at"] = [tr.stopped_at[0], model.format_config(tr.stopped_at[1])]
            logs.append(d)
        report["result"]["trajectories"] = logs
    lines = [f"{args.replicas} replicas, seed {seed}, horizon {args.horizon}"]
    for name, e in freqs.items():
        lines.append(f"{name:>11}: {e['mean']:.6f} +/- {e['std_error']:.6f}")
    return report, lines, EXIT_PASS


SUITES = ("chapman", "branching", "density", "functional-eq")


def _suite_chapman(model, Q, alpha, args):
    mid = 0.5 * (args.t0 + args.t1)
    ctl = feller.SeriesControl(
        k_max=model.controls.k_max,
        tail_tol=model.controls.tail_tol,
        quad_nodes=model.controls.quad_nodes,
        panel_rate=model.controls.panel_rate,
    )
    out = []
    stops = [NO_STOP] + ([model.stopping] if not model.stopping.is_empty and alpha not in model.stopping else [])
    for S in stops:
        for route in ("oracle", "series"):
            out.append(verifier.check_chapman(Q, S, args.t0, mid, args.t1, alpha, route, ctl))
    return out


def _suite_branching(model, Q, alpha, args):
    dt = 0.5 * (args.t1 - args.t0)
    s = TestFunction.constant(model.types.d, args.s_value)
    out = [verifier.check_branching(Q, alpha, alpha, dt, t0=args.t0)]
    add = functionals.additivity_check(Q, None, alpha, alpha, s, dt, args.t0)
    out.append(verifier.ResidualReport("additivity[psi]", add.psi, 1e-12))
    out.append(
        verifier.ResidualReport(
            "additivity[product]", add.product, 1e-8, trace=[{"overflow": add.overflow}]
        )
    )
    if not model.stopping.is_empty and alpha not in model.stopping:
        out.append(verifier.check_branching(Q, alpha, alpha, dt, model.stopping, args.t0))
        add = functionals.additivity_check(Q, model.stopping, alpha, alpha, s, dt, args.t0)
        out.append(verifier.ResidualReport("additivity[psi,stopped]", add.psi, 1e-12, informational=True))
        out.append(verifier.ResidualReport("additivity[product,stopped]", add.product, 1e-8, informational=True))
    return out


def _suite_density(model, Q, alpha, args):
    space = Q.space
    row = Q.Q.getrow(space.index(alpha))
    targets = sorted(set(int(j) for j in row.indices) | {space.index(alpha)})
    out = []
    for j in targets:
        if j == space.overflow:
            continue
        out.append(verifier.check_density_limit(Q, alpha, space.states[j], t=args.t0))
    return out


def _suite_theorem(model, Q, alpha, args):
    f = TestFunction.constant(model.types.d, args.s_value)
    out = []
    stops = [NO_STOP] + ([model.stopping] if not model.stopping.is_empty else [])
    for S in stops:
        if alpha in S:
            continue
        study = verifier.theorem_study(Q, S, args.t0, args.t1, alpha, f)
        tag = "S=empty" if S.is_empty else "S=model"
        for rep in study.reports.values():
            rep.name = f"{rep.name}[{tag}]"
            out.append(rep)
        summ = study.summary()
        summ.name = f"{summ.name}[{tag}]"
        out.append(summ)
    return out


def cmd_verify(model: Model, args, argv) -> tuple[dict, list[str], int]:
    space = model.space()
    Q = model.generator(space)
    alpha = _start(model, args)
    suites = SUITES if args.suite == "all" else (args.suite,)
    runners = {
        "chapman": _suite_chapman,
        "branching": _suite_branching,
        "density": _suite_density,
        "functional-eq": _suite_theorem,
    }
    results = {}
    for name in suites:
        results[name] = [r.to_dict() for r in runners[name](model, Q, alpha, args)]
    failed = [r["name"] for reps in results.values() for r in reps if r["passed"] is False]
    report = _base_report("verify", argv, model)
    report["flags"] = {
        "from": model.format_config(alpha),
        "t0": args.t0,
        "t1": args.t1,
        "suite": args.suite,
        "s_value": args.s_value,
    }
    report["result"] = {"suites": results, "failed": failed, "passed": not failed}
    lines = []
    for name, reps in results.items():
        lines.append(f"[{name}]")
        for r in reps:
            flag = "info" if r["passed"] is None else ("PASS" if r["passed"] else "FAIL")
            slope = "" if r["slope"] is None else f" slope {r['slope']:.3f}"
            lines.append(f"  {flag:4} {r['name']:<40} {r['residual']:.3e} (tol {r['tolerance']:.0e}){slope}")
            if r["notes"]:
                lines.append(f"       {r['notes']}")
    lines.append("all checks passed" if not failed else f"{len(failed)} check(s) failed")
    return report, lines, EXIT_PASS if not failed else EXIT_FAIL


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stopbranch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("model", help="path to a JSON model file")
        sp.add_argument("--out", help="write the machine report (JSON) here")
        sp.add_argument("--quiet", action="store_true", help="suppress the human table")

    common(sub.add_parser("validate", help="check a model file and its generator"))

    sp = sub.add_parser("solve", help="series and oracle transition distributions")
    common(sp)
    sp.add_argument("--from", dest="start", help='start configuration "label:count,..." or "0"')
    sp.add_argument("--t0", type=float, default=0.0, help="start time")
    sp.add_argument("--t1", type=float, default=1.0, help="end time")
    sp.add_argument("--stopped", action="store_true", help="stop on entry into the model's S")
    sp.add_argument("--threshold", type=float, default=1e-12, help="hide states below this mass")

    sp = sub.add_parser("simulate", help="Monte Carlo outcome frequencies")
    common(sp)
    sp.add_argument("--from", dest="start", help='start configuration "label:count,..." or "0"')
    sp.add_argument("--t0", type=float, default=0.0, help="start time")
    sp.add_argument("--horizon", type=float, default=1.0, help="length of the observation window")
    sp.add_argument("--replicas", type=int, default=1000, help="number of independent runs")
    sp.add_argument("--seed", type=int, help="master seed (default: the model's simulate seed)")
    sp.add_argument("--cap", type=int, help="population cap (default 10 N)")
    sp.add_argument("--stopped", action="store_true", help="stop on entry into the model's S")
    sp.add_argument("--trajectories", type=int, default=0, help="log the first K trajectories")

    sp = sub.add_parser("verify", help="identity checks with residuals")
    common(sp)
    sp.add_argument("--from", dest="start", help='start configuration "label:count,..." or "0"')
    sp.add_argument("--t0", type=float, default=0.0, help="start time")
    sp.add_argument("--t1", type=float, default=1.0, help="end time")
    sp.add_argument("--suite", choices=SUITES + ("all",), default="all", help="which identities to check")
    sp.add_argument("--s-value", dest="s_value", type=float, default=-1.0, help="constant test function")
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_PASS
    started = time.perf_counter()
    try:
        model = load_model(args.model)
        if getattr(args, "t1", None) is not None and args.t1 < args.t0:
            raise DomainError("--t1 must be >= --t0")
        report, lines, status = COMMANDS[args.command](model, args, argv)
    except (ModelError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StopBranchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if not args.quiet:
        print("\n".join(lines))
        print(f"({time.perf_counter() - started:.2f} s)")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps_report(report))
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
