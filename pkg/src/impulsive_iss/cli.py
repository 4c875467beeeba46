"""Command-line front end: ``impulsive-iss {simulate,certify,verify,phi} DOC``.

Exit codes: 0 success, 1 verification failure (or a run that could not
finish), 2 configuration/argument error, 3 a certificate inequality is
violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .certificates import IssReport, adt_strengthen, certify
from .config import SystemDocument, load_document
from .errors import (
    ArgumentError,
    ConfigurationError,
    EscapeError,
    HorizonError,
    NotExponentiallyStableError,
    PreconditionError,
    ThresholdError,
    WrongVariantError,
)
from .gswl import GswlSystem, simulate, theta_budgets
from .linear_core import STRONG, WEAK, Certificate, envelope_distance, estimate_envelope, transition_matrix
from .switched import cast_to_gswl, switched_certify
from .verify import monte_carlo_iss

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_THRESHOLD = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ArgumentError(f"expected comma-separated numbers, got {text!r}") from None


def _params(items: Optional[Sequence[str]]) -> Dict[str, float]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ArgumentError(f"--param expects name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ArgumentError(f"--param {name}: {value!r} is not a number") from None
    return out


def _system(doc: SystemDocument, args) -> GswlSystem:
    if doc.is_switched and "system" not in doc.raw:
        signals = doc.signals(args.horizon)
        if not signals:
            raise ConfigurationError("switched document has no signals to simulate")
        if not 0 <= args.signal < len(signals):
            raise ArgumentError(f"--signal {args.signal} out of range (0..{len(signals) - 1})")
        return cast_to_gswl(doc.switched_system(), signals[args.signal])
    return doc.system(args.horizon)


def _write_report(report: dict, path: Optional[str]) -> None:
    text = json.dumps(report, indent=2, sort_keys=True, default=float)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _fit_certificate(doc: SystemDocument, sys_: GswlSystem, args) -> Certificate:
    opts = doc.fit_options
    fit = estimate_envelope(
        sys_.linear_part(),
        opts.get("flavor", STRONG),
        step=args.step or opts.get("step", 1e-3),
        K_cap=opts.get("K_cap", 1e3),
        random_pairs=opts.get("random_pairs", 20),
        seed=args.seed if args.seed is not None else doc.seed,
    )
    return fit.certificate


def build_certificate(doc: SystemDocument, args) -> IssReport:
    """Dispatch to the switched or single-system certificate path."""
    if doc.is_switched:
        sw = doc.switched_system()
        signals = doc.signals(args.horizon)
        dwell = doc.dwell_class()
        source = "fit" if args.fit else doc.certificate()
        if source is None:
            raise ConfigurationError("no certificate block in the document; pass --fit")
        fit_kwargs = {}
        if args.fit:
            opts = doc.fit_options
            fit_kwargs = dict(step=args.step or opts.get("step", 1e-3), K_cap=opts.get("K_cap", 1e3),
                              random_pairs=opts.get("random_pairs", 20),
                              seed=args.seed if args.seed is not None else doc.seed)
        signal_class = signals if signals else dwell
        if signal_class is None:
            raise ConfigurationError("switched block needs signals or a dwell_class")
        return switched_certify(sw, signal_class, source, dwell_class=dwell if signals else None,
                                chosen_R=getattr(args, "chosen_R", None),
                                fit_flavor=doc.fit_options.get("flavor", STRONG), **fit_kwargs)

    sys_ = doc.system(args.horizon)
    bound = sys_.bound
    if bound is None:
        raise ConfigurationError("certify needs a bound block")
    cert = _fit_certificate(doc, sys_, args) if args.fit else doc.certificate()
    if cert is None:
        raise ConfigurationError("no certificate block in the document; pass --fit")
    route = "strong envelope"
    if cert.flavor == WEAK:
        dwell = doc.dwell_class()
        if dwell is None:
            raise PreconditionError("weak envelope without a dwell_class block cannot be certified")
        cert = adt_strengthen(cert, dwell)
        route = "weak envelope strengthened by average dwell time"
    budget = doc.theta_budget()
    if budget is None:
        budget = theta_budgets(sys_, args.step or doc.simulation.get("step", 1e-3))
    chosen_R = getattr(args, "chosen_R", None) or doc.verify_options.get("chosen_R")
    report = certify(cert, bound, budget[0], budget[1], chosen_R)
    report.route = route
    return report


def _render(report: IssReport) -> str:
    lines = [f"variant: {report.variant}", f"route: {report.route}",
             f"certificate source: {report.certificate.provenance}"]
    consts = report.constants()
    width = max(len(k) for k in consts)
    for key, value in consts.items():
        lines.append(f"  {key:<{width}} = {value:.12g}    [{report.provenance.get(key, 'input')}]")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(doc: SystemDocument, args) -> int:
    sim = doc.simulation
    sys_ = _system(doc, args)
    t0 = args.t0 if args.t0 is not None else float(sim.get("t0", 0.0))
    t_end = args.t_end if args.t_end is not None else float(sim.get("t_end", sys_.seq.horizon))
    x0 = _floats(args.x0) if args.x0 is not None else sim.get("x0")
    if x0 is None:
        raise ConfigurationError("no initial state (simulation.x0 or --x0)")
    if len(x0) != sys_.n:
        raise ArgumentError(f"x0 has {len(x0)} entries, n = {sys_.n}")
    u = doc.input_signal(json.loads(args.input) if args.input else None)
    step = args.step or float(sim.get("step", 1e-3))
    traj = simulate(sys_, t0, x0, u, t_end, step, float(sim.get("blowup_cap", 1e12)))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            traj.to_csv(fh)
        if not args.quiet:
            _emit(args, {
                "trajectory": args.out, "rows": int(traj.t.size), "impulses": len(traj.events),
                "final_norm": float(traj.norms[-1]), "x0": list(map(float, x0)), "t0": t0,
                "t_end": t_end, "step": step,
            }, doc)
        return EXIT_OK
    traj.to_csv(sys.stdout)
    return EXIT_OK


def cmd_certify(doc: SystemDocument, args) -> int:
    report = build_certificate(doc, args)
    if not args.quiet:
        print(_render(report))
    payload = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.report:
        _emit(args, {"certificate": payload, "certificate_file": args.out}, doc, path=args.report)
    return EXIT_OK


def cmd_verify(doc: SystemDocument, args) -> int:
    report = build_certificate(doc, args)
    opts = doc.verify_options
    sys_ = _system(doc, args)
    trials = args.trials if args.trials is not None else int(opts.get("trials", 50))
    seed = args.seed if args.seed is not None else doc.seed
    input_radius = args.input_radius if args.input_radius is not None else opts.get("input_radius")
    if input_radius is None:
        input_radius = report.chosen_R if report.chosen_R is not None else 1.0
    state_radius = args.state_radius if args.state_radius is not None else float(opts.get("state_radius", 1.0))
    gain_scale = args.gain_scale if args.gain_scale is not None else float(opts.get("gain_scale", 1.0))
    mc = monte_carlo_iss(
        sys_, report, trials, float(input_radius), state_radius, seed,
        step=args.step or float(doc.simulation.get("step", 1e-2)),
        input_spacing=float(opts.get("input_spacing", 0.5)),
        gain_scale=gain_scale, keep_series=bool(args.out),
    )
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["trial", "seed", "t", "lhs", "rhs", "margin"])
            primary = "S-ISS" if report.has_iss else "S-iISS"
            for trial, trial_seed, chk in mc.checks:
                if chk.kind != primary:
                    continue
                s = chk.series
                for t, lhs, rhs in zip(s["t"], s["lhs"], s["rhs"]):
                    writer.writerow([trial, trial_seed, repr(float(t)), repr(float(lhs)), repr(float(rhs)),
                                     repr(float(rhs - lhs))])
    violations = [
        {"seed": seed_k, "kind": chk.kind, "t": v[0], "lhs": v[1], "rhs": v[2], "margin": v[3]}
        for _, seed_k, chk in mc.checks for v in chk.violations[:5]
    ]
    summary = {
        "trials": mc.trials, "pass_rate": mc.pass_rate, "passed": mc.passed,
        "worst_margin": mc.worst_margin if math.isfinite(mc.worst_margin) else None,
        "input_radius": float(input_radius), "state_radius": state_radius, "gain_scale": gain_scale,
        "failures": [{"seed": s, "reason": r} for s, r in mc.failures],
        "violations": violations[:100], "violations_file": args.out,
        "certificate": report.to_dict(),
    }
    if not args.quiet:
        status = "PASS" if mc.passed else "FAIL"
        print(f"{status}: {mc.trials} trials, pass rate {mc.pass_rate:.3f}, worst margin {summary['worst_margin']}",
              file=sys.stderr)
    _emit(args, summary, doc, path=args.report)
    return EXIT_OK if mc.passed else EXIT_FAIL


def cmd_phi(doc: SystemDocument, args) -> int:
    sys_ = _system(doc, args)
    lin = sys_.linear_part()
    step = args.step or float(doc.simulation.get("step", 1e-3))
    Phi = transition_matrix(lin, args.s, args.t, step)
    with np.printoptions(precision=12, suppress=False):
        print(f"Phi({args.s:g}, {args.t:g}) =")
        print(Phi)
    norm = float(np.linalg.norm(Phi, 2))
    print(f"||Phi|| = {norm:.12g}")
    cert = doc.certificate()
    if cert is not None:
        d = envelope_distance(lin.seq, args.s, args.t, cert.flavor)
        bound = float(cert.bound(d))
        print(f"envelope K*exp(-lambda*d) = {bound:.12g} (d = {d:.12g}, {cert.flavor})")
        print(f"margin K*exp(-lambda*d) - ||Phi|| = {bound - norm:.12g}")
    return EXIT_OK


def _emit(args, payload: dict, doc: SystemDocument, path: Optional[str] = None) -> int:
    report = {
        "command": args.command,
        "document": doc.source,
        "input_digest": doc.digest,
        "arguments": {k: v for k, v in vars(args).items() if k not in ("func",)},
        "wall_time_s": time.perf_counter() - args._start,
        "version": __version__,
        **payload,
    }
    report["arguments"].pop("_start", None)
    _write_report(report, path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impulsive-iss",
        description="Simulate impulsive systems and compute/verify (i)ISS certificates from a system file.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("doc", help="system document (YAML or JSON); relative paths also searched in "
                                    "$IMPISS_CONFIG_DIR")
    common.add_argument("--step", type=float, default=None, help="integration step")
    common.add_argument("--horizon", type=float, default=None, help="working horizon of the impulse sequence")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (fitting pairs, Monte Carlo)")
    common.add_argument("--param", action="append", metavar="NAME=VALUE",
                        help="override a value of the document's params block")
    common.add_argument("--signal", type=int, default=0, help="switching signal index (switched documents)")
    common.add_argument("--quiet", action="store_true", help="suppress human-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate and write the trajectory CSV")
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--x0", default=None, help="initial state, comma separated")
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--input", default=None, help="input description as JSON, e.g. "
                                                 "'{\"kind\": \"constant\", \"value\": [0.1]}'")
    p.add_argument("--out", default=None, help="trajectory CSV path (default: stdout)")
    p.set_defaults(func=cmd_simulate)

    for name, func, text in (("certify", cmd_certify, "compute the (i)ISS certificate"),
                             ("verify", cmd_verify, "Monte Carlo check of the certificate")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--fit", action="store_true", help="fit (K, lambda) instead of using the document's")
        p.add_argument("--chosen-R", type=float, default=None, help="input threshold below R_max")
        p.add_argument("--out", default=None,
                       help="certificate JSON path" if name == "certify" else "per-trial CSV path")
        p.add_argument("--report", default=None, help="run report JSON path")
        if name == "verify":
            p.add_argument("--trials", type=int, default=None)
            p.add_argument("--input-radius", type=float, default=None)
            p.add_argument("--state-radius", type=float, default=None)
            p.add_argument("--gain-scale", type=float, default=None,
                           help="multiply the ISS gain (falsifiability checks)")
        p.set_defaults(func=func)

    p = sub.add_parser("phi", parents=[common], help="print the transition matrix Phi(t, s)")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.set_defaults(func=cmd_phi)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._start = time.perf_counter()
    try:
        if getattr(args, "trials", None) is not None and args.trials < 0:
            raise ArgumentError("--trials must be nonnegative")
        doc = load_document(args.doc, _params(args.param))
        return args.func(doc, args)
    except ThresholdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"  violated: {exc.inequality}  (left side {exc.value:.12g}, right side {exc.bound:.12g})",
              file=sys.stderr)
        return EXIT_THRESHOLD
    except (ConfigurationError, ArgumentError, HorizonError, PreconditionError, WrongVariantError,
            jsonschema.ValidationError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EscapeError as exc:
        print(f"error: finite escape at t={exc.time:.9g}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except NotExponentiallyStableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
