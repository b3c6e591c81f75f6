"""Command-line front end: ``r2d synth|check|simulate|example``.

Exit codes: 0 success, 2 bad input or configuration, 3 infeasible LMI or a
failed check, 4 divergence during simulation.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import documents, fixtures, sim, synthesis
from .documents import DocumentError, RunConfig, SystemDocument
from .model import InadmissibleUncertainty, InvalidSystem

log = logging.getLogger("r2d")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGED = 4


class UsageError(Exception):
    pass


def _configure_logging() -> None:
    level = os.environ.get("R2D_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _parse_lag(text: str) -> int | list[int]:
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"lag must be an integer or a comma list, got {text!r}") from None
    return parts[0] if len(parts) == 1 else parts


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="r2d", description="Asynchronous switching control of delayed 2D Roesser systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def inputs(p, with_run=True):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--system", type=Path, help="system document (JSON)")
        src.add_argument("--example", help="built-in fixture name")
        if with_run:
            p.add_argument("--run", type=Path, help="run configuration (JSON)")
            p.add_argument("--alpha", type=float)
            p.add_argument("--beta", type=float)
            p.add_argument("--seed", type=int)
            rate = p.add_mutually_exclusive_group()
            rate.add_argument("--ratio", type=float, help="target matched/mismatched ratio")
            rate.add_argument("--lambda-star", type=float, dest="lambda_star")
            p.add_argument("--N0", type=float, dest="N0")
            p.add_argument("--tau-a", type=float, dest="tau_a")
            p.add_argument("--lag", type=_parse_lag, help="constant lag or comma list, one per switch")
            p.add_argument("--horizon", type=int)
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = sub.add_parser("synth", help="design gains and write certificate.json")
    inputs(p)

    p = sub.add_parser("check", help="re-evaluate the design LMIs at given matrices")
    inputs(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--certificate", type=Path)
    src.add_argument("--reference", action="store_true", help="use the reference sec4 solution matrices")
    p.add_argument("--assignment", type=Path, help="JSON overrides merged into the certificate")
    p.add_argument("--tolerance", type=float, help="largest accepted lambda_max")

    p = sub.add_parser("simulate", help="simulate and write CSV, summary and plot script")
    inputs(p)
    p.add_argument("--certificate", type=Path, help="closed loop with these gains (open loop if omitted)")
    p.add_argument("--instants", type=_parse_ints, help="explicit switch instants")
    p.add_argument("--modes", type=_parse_ints, help="explicit 1-based modes, one per segment")
    p.add_argument("--z", type=int, help="initial diagonal (default max(z1, z2))")
    p.add_argument("--no-uncertainty", action="store_true")

    p = sub.add_parser("example", help="write a fixture's system.json and run.json")
    p.add_argument("name")
    p.add_argument("--out", type=Path, default=Path("."))
    return parser


def _load_inputs(args) -> tuple[SystemDocument, RunConfig]:
    run = RunConfig()
    if args.example is not None:
        if args.example not in fixtures.FIXTURES:
            raise UsageError(f"unknown example {args.example!r}; available: {', '.join(sorted(fixtures.FIXTURES))}")
        make_sys, make_bc, make_unc, run_dict = fixtures.FIXTURES[args.example]
        doc = SystemDocument(make_sys(), make_bc(), make_unc())
        run = RunConfig(**run_dict)
    elif args.system is not None:
        doc = documents.load_system(args.system)
    else:
        raise UsageError("give --system or --example")
    if getattr(args, "run", None) is not None:
        run = RunConfig.from_dict(documents.parse_json(args.run.read_text(), str(args.run)))
    for key in ("alpha", "beta", "seed", "N0", "tau_a", "lag", "horizon"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(run, key, value)
    if getattr(args, "ratio", None) is not None:
        run.ratio, run.lambda_star = args.ratio, None
    if getattr(args, "lambda_star", None) is not None:
        run.ratio, run.lambda_star = None, args.lambda_star
    if getattr(args, "instants", None) is not None:
        run.instants = args.instants
    if getattr(args, "modes", None) is not None:
        run.modes = args.modes
    run.check()
    return doc, run


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _fmt_matrix(m: np.ndarray) -> str:
    return "[" + "; ".join(" ".join(f"{x: .4f}" for x in row) for row in np.atleast_2d(m)) + "]"


def synth_report(cert: synthesis.SynthesisCertificate) -> str:
    lines = [f"alpha = {cert.alpha:g}, beta = {cert.beta:g}, seed = {cert.seed}"]
    for m in cert.matched:
        lines.append(f"mode {m.mode + 1}: K = {_fmt_matrix(m.K)}  eps = {m.eps:.4f}  margin = {m.margin:.3e}")
    for (k, l), s in sorted(cert.mismatched.items()):
        lines.append(f"mismatched {k + 1}->{l + 1}: eps = {s.eps:.4f}  margin = {s.margin:.3e}")
    floor = " (floor applied)" if cert.mu_floor_applied else ""
    lines.append(f"mu1 = {cert.mu1:.4f}, mu2 = {cert.mu2:.4f}, mu = {cert.mu:.4f}{floor}")
    lines.append(f"lambda- = {cert.lambda_minus:.4f}, lambda+ = {cert.lambda_plus:.4f}, lambda* = {cert.lambda_star:.4f}")
    lines.append(f"tau_a* = {cert.tau_a_star:.4f}, required T-/T+ = {cert.required_ratio:.4f}")
    lines.append(f"zeta1 = {cert.zeta1:.4f}, zeta2 = {cert.zeta2:.4f}")
    return "\n".join(lines) + "\n"


def cmd_synth(args) -> int:
    doc, run = _load_inputs(args)
    try:
        cert = synthesis.synthesize(doc.system, run.alpha, run.beta, run.seed, run.lambda_star, run.ratio)
    except synthesis.SynthesisFailure as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(args.out / "certificate.json", documents.dumps(documents.certificate_to_dict(cert)))
    report = synth_report(cert)
    _write(args.out / "report.txt", report)
    sys.stdout.write(report)
    return EXIT_OK


def _merge(base, override):
    if isinstance(base, dict) and isinstance(override, dict):
        out = dict(base)
        for key, value in override.items():
            out[key] = _merge(base.get(key), value) if key in base else value
        return out
    if isinstance(base, list) and isinstance(override, list) and len(base) == len(override):
        if all(isinstance(x, dict) for x in base):
            return [_merge(b, o) for b, o in zip(base, override)]
    return override


def cmd_check(args) -> int:
    doc, run = _load_inputs(args)
    if args.reference:
        if args.example != "sec4":
            raise UsageError("--reference applies to --example sec4 only")
        cert_dict = documents.certificate_to_dict(fixtures.sec4_reference_certificate())
        tolerance = 1e-3 if args.tolerance is None else args.tolerance
    elif args.certificate is not None:
        cert_dict = documents.parse_json(args.certificate.read_text(), str(args.certificate))
        tolerance = args.tolerance
    else:
        raise UsageError("give --certificate or --reference")
    if args.assignment is not None:
        override = documents.parse_json(args.assignment.read_text(), str(args.assignment))
        cert_dict = _merge(cert_dict, override)
        # gains follow W X^-1 unless overridden explicitly
        if "gains" not in override and any("W" in m or "X" in m for m in override.get("matched", [])):
            cert_dict.pop("gains", None)
    cert = documents.certificate_from_dict(cert_dict)
    checks = synthesis.check_certificate(doc.system, cert)
    ok = True
    for c in checks:
        limit = -c.delta / 2 if tolerance is None else tolerance
        pd_bad = [name for name, v in c.pd_min.items() if not v > 0]
        good = c.lambda_max <= limit and not pd_bad
        ok &= good
        pd = ", ".join(f"{name} {v:.3e}" for name, v in c.pd_min.items())
        verdict = "ok" if good else "FAIL"
        print(f"{c.name}: lambda_max {c.lambda_max:.6e} (limit {limit:.3e})  pd_min {pd}  {verdict}")
        for name in pd_bad:
            print(f"  {c.name}: {name} is not positive definite")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def _make_plan(run: RunConfig, n_modes: int) -> sim.SwitchingPlan:
    if run.instants is not None:
        modes = run.modes
        if modes is None:
            modes = [1 + s % n_modes for s in range(len(run.instants) + 1)]
        if any(not 1 <= k <= n_modes for k in modes):
            raise DocumentError("modes", f"modes must lie in 1..{n_modes}")
        return sim.build_switching_plan(run.instants, [k - 1 for k in modes], run.lag, run.horizon)
    if isinstance(run.lag, list):
        raise DocumentError("lag", "a lag list needs explicit switch instants")
    start = 0 if run.modes is None else run.modes[0] - 1
    return sim.periodic_plan(run.tau_a, run.lag, run.horizon, n_modes, start)


def _finite(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def cmd_simulate(args) -> int:
    doc, run = _load_inputs(args)
    system = doc.system
    plan = _make_plan(run, system.n_modes)
    cert = documents.load_certificate(args.certificate) if args.certificate is not None else None
    uncertainty = None if args.no_uncertainty else doc.uncertainty
    grid = sim.simulate(system, doc.boundary, plan, uncertainty, cert.gains if cert else None)
    z = max(doc.boundary.z1, doc.boundary.z2) if args.z is None else args.z
    z = min(max(z, 0), run.horizon)
    est = sim.estimate_decay(grid, z)
    trace = sim.lyapunov_trace(grid, cert, plan) if cert is not None and not grid.diverged else None
    summary = {
        "horizon": run.horizon,
        "z": z,
        "closed_loop": cert is not None,
        "diverged": grid.diverged,
        "diverged_at": grid.diverged_at,
        "c": _finite(est.c),
        "eta": est.eta,
        "c_norm": est.c_norm,
        "fit_window": list(est.fit_window),
        "final_energy": float(est.diagonal_energy[-1]),
        "switch_instants": list(plan.instants),
        "modes": [k + 1 for k in plan.modes],
        "lags": list(plan.lags),
        "T_minus": plan.T_minus(z, run.horizon),
        "T_plus": plan.T_plus(z, run.horizon),
    }
    dwell = sim.average_dwell_time_check(plan, z, run.horizon, run.N0, run.tau_a)
    summary["dwell_check"] = {"ok": dwell.ok, "switches": dwell.switches, "allowed": dwell.allowed, "tau_a": run.tau_a, "N0": run.N0}
    if cert is not None:
        scheme = synthesis.DwellTimeScheme.from_certificate(cert, run.tau_a, run.N0)
        summary["required_ratio"] = cert.required_ratio
        summary["tau_a_star"] = cert.tau_a_star
        summary["realized_ratio"] = _finite(sim.realized_ratio(plan, z, run.horizon))
        verdict = sim.verify_bound(est, cert, scheme, plan, z)
        summary["bound"] = {"status": verdict.status, "reason": verdict.reason}
    else:
        summary["bound"] = {"status": "not-applicable", "reason": "no certificate"}
    V = trace.cell_values if trace is not None else None
    V_sums = trace.diagonal_sums if trace is not None else None
    _write(args.out / "trajectory.csv", documents.trajectory_csv(grid, V))
    _write(args.out / "diagonals.csv", documents.diagonal_csv(est.diagonal_energy, V_sums, plan))
    _write(args.out / "summary.json", documents.dumps(summary))
    _write(args.out / "plot.gp", documents.GNUPLOT_SCRIPT)
    print(f"c = {est.c:.4g}, eta = {est.eta:.4g}, final energy = {summary['final_energy']:.3e}, bound {summary['bound']['status']}")
    if grid.diverged:
        print(f"diverged at diagonal {grid.diverged_at}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_example(args) -> int:
    if args.name not in fixtures.FIXTURES:
        raise UsageError(f"unknown example {args.name!r}; available: {', '.join(sorted(fixtures.FIXTURES))}")
    make_sys, make_bc, make_unc, run_dict = fixtures.FIXTURES[args.name]
    doc = SystemDocument(make_sys(), make_bc(), make_unc())
    _write(args.out / "system.json", documents.dump_system(doc))
    _write(args.out / "run.json", documents.dumps(RunConfig(**run_dict).to_dict()))
    print(f"wrote {args.out / 'system.json'} and {args.out / 'run.json'}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "check": cmd_check, "simulate": cmd_simulate, "example": cmd_example}


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DocumentError, InvalidSystem, InadmissibleUncertainty, sim.InvalidPlan, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
