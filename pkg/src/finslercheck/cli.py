"""Command line front-end.

    finslercheck check   <config> [--json PATH] [--seed S] [--tol T] [--order K]
    finslercheck tensors <config> --x X1 X2 .. --y Y1 Y2 .. [--json PATH]
    finslercheck compare <config> [--json PATH]

Exit codes: 0 all verdicts pass, 1 some axiom fails, 2 configuration or parse
error, 3 more than half of the drawn samples were rejected as degenerate.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__, axioms, config as config_mod, core
from .connections import canonical_metric_connection, catalogue
from .dsl import ParseError
from .jets import InsufficientOrder, NumericDegeneracy

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DEGENERATE = 0, 1, 2, 3
REJECTION_LIMIT = 0.5


class _Abort(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------


def _header(cfg: config_mod.RunConfig, command: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "finslercheck", "version": __version__},
        "command": command,
        "config": cfg.echo(),
    }


def _samples(cfg: config_mod.RunConfig) -> tuple[axioms.SampleSet, dict]:
    try:
        S = axioms.sample_points(cfg.spec, cfg.count, cfg.seed, cfg.x_box, cfg.y_shell)
    except ValueError as exc:
        raise _Abort(EXIT_CONFIG, str(exc)) from exc
    info = {"requested": cfg.count, "accepted": len(S), "attempted": S.attempted,
            "rejected": S.rejected, "rejection_rate": S.rejection_rate}
    return S, info


def run_check(cfg: config_mod.RunConfig) -> tuple[dict, int]:
    report = _header(cfg, "check")
    S, info = _samples(cfg)
    report["samples"] = info
    if S.rejection_rate > REJECTION_LIMIT or len(S) == 0:
        report["results"] = []
        report["passed"] = False
        report["error"] = "pervasive numeric degeneracy: most samples rejected"
        return report, EXIT_DEGENERATE
    results = []
    for conn in cfg.connections():
        for suite in cfg.suites:
            if suite in axioms.CONNECTION_SUITES:
                rep = axioms.CONNECTION_SUITES[suite](conn, cfg.spec, S, cfg.suite_tol(suite), cfg.order)
                results.append(rep.to_dict())
    for suite in cfg.suites:
        if suite == "compatibility":
            rep = axioms.check_compatibility(cfg.spec, S, cfg.N_field(), cfg.suite_tol(suite), cfg.order)
            results.append(rep.to_dict())
        elif suite.startswith("uniqueness_"):
            kind = suite.split("_", 1)[1]
            probe = axioms.uniqueness_probe(kind, cfg.spec, S, cfg.probe_trials, cfg.seed,
                                            cfg.suite_tol(suite), cfg.order, cfg.probe_points)
            results.append({"suite": suite, "connection": kind, "passed": probe["passed"], "probe": probe})
    report["results"] = results
    report["passed"] = all(r["passed"] for r in results)
    return report, EXIT_OK if report["passed"] else EXIT_FAIL


def _arr(x) -> list:
    return np.asarray(x, dtype=float).tolist()


def run_tensors(cfg: config_mod.RunConfig, x, y) -> dict:
    if len(x) != cfg.n or len(y) != cfg.n:
        raise _Abort(EXIT_CONFIG, f"--x and --y need {cfg.n} values each")
    p = core.BasePoint(tuple(x), tuple(y))
    if not cfg.spec.guard_ok(p.x, p.y):
        raise _Abort(EXIT_DEGENERATE, "point violates the Lagrangian guard")
    geom = core.geometry(cfg.spec, p, cfg.order)
    try:
        g = geom.g.value
    except NumericDegeneracy as exc:
        raise _Abort(EXIT_DEGENERATE, str(exc)) from exc
    C = geom.C.value
    gam, Gam = geom.gamma_formal.value, geom.Gamma.value
    Gb, L = geom.berwald.value, geom.landsberg.value
    R = geom.R_nl.value
    tensors = {
        "g": _arr(g),
        "g_inv": _arr(geom.ginv.value),
        "C": _arr(C),
        "G": _arr(geom.G.value),
        "N": _arr(geom.N_barthel.value),
        "gamma": _arr(gam),
        "Gamma": _arr(Gam),
        "berwald": _arr(Gb),
        "landsberg": _arr(L),
        "R_nonlinear": _arr(R),
    }
    perms = [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    tol = 1e-10 * (1.0 + float(np.max(np.abs(g))))

    def tot(t):
        return bool(max(np.max(np.abs(t - t.transpose(pp))) for pp in perms) <= tol * (1 + np.max(np.abs(t))))

    flags = {
        "g_symmetric": bool(np.max(np.abs(g - g.T)) <= tol),
        "C_totally_symmetric": tot(C),
        "L_totally_symmetric": tot(L),
        "Gamma_symmetric_lower": bool(np.max(np.abs(Gam - Gam.transpose(0, 2, 1))) <= tol * (1 + np.max(np.abs(Gam)))),
        "berwald_symmetric_lower": bool(np.max(np.abs(Gb - Gb.transpose(0, 2, 1))) <= tol * (1 + np.max(np.abs(Gb)))),
        "all_finite": bool(all(np.all(np.isfinite(np.asarray(v))) for v in tensors.values())),
    }
    report = _header(cfg, "tensors")
    report["point"] = {"x": list(p.x), "y": list(p.y)}
    report["tensors"] = tensors
    report["flags"] = flags
    report["passed"] = all(flags.values())
    return report


def run_compare(cfg: config_mod.RunConfig) -> tuple[dict, int]:
    report = _header(cfg, "compare")
    S, info = _samples(cfg)
    report["samples"] = info
    if S.rejection_rate > REJECTION_LIMIT or len(S) == 0:
        report["error"] = "pervasive numeric degeneracy: most samples rejected"
        return report, EXIT_DEGENERATE
    suites = [s for s in cfg.suites if s in axioms.CONNECTION_SUITES] or list(axioms.CONNECTION_SUITES)
    matrix = {}
    for conn in cfg.connections():
        row = {}
        for s in suites:
            rep = axioms.CONNECTION_SUITES[s](conn, cfg.spec, S, cfg.suite_tol(s), cfg.order)
            worst = max((c.residual / c.tol for c in rep.conditions.values()), default=0.0)
            row[s] = {"passed": rep.passed, "failing": rep.failing(),
                      "worst_residual_over_tol": worst if np.isfinite(worst) else None}
        matrix[conn.name] = row
    report["suites"] = suites
    report["matrix"] = matrix
    cartan = catalogue("cartan")
    agreement = {}
    for conn in cfg.connections():
        can = canonical_metric_connection(conn)
        worst = 0.0
        for p in S:
            try:
                geom = core.geometry(cfg.spec, p, cfg.order)
                worst = max(worst, axioms.coefficient_distance(can.at(geom), cartan.at(geom)))
            except NumericDegeneracy:
                continue
        agreement[conn.name] = worst
    report["canonical_metric_connection_distance_to_cartan"] = agreement
    expected = {k: {s: v for s, v in axioms.EXPECTED_PATTERN[k].items() if s in suites}
                for k in matrix if k in axioms.EXPECTED_PATTERN}
    observed = {k: {s: matrix[k][s]["passed"] for s in suites} for k in expected}
    report["matches_generic_pattern"] = observed == expected
    report["passed"] = True
    return report, EXIT_OK


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.2e}"


def render_table(report: dict) -> str:
    """Human-readable summary derived from the JSON report."""
    lines = []
    cmd = report.get("command")
    lag = report["config"]["lagrangian"]
    lines.append(f"finslercheck {report['tool']['version']}  {cmd}  L = {lag['text']}  (n={lag['n']})")
    if "samples" in report:
        s = report["samples"]
        lines.append(f"samples: {s['accepted']} accepted, {s['rejected']} rejected of {s['attempted']} drawn")
    if "error" in report:
        lines.append(f"error: {report['error']}")
    if cmd == "check":
        for r in report.get("results", []):
            mark = "PASS" if r["passed"] else "FAIL"
            lines.append(f"[{mark}] {r['suite']:<18} {r['connection']}")
            for name, c in r.get("conditions", {}).items():
                m = "ok " if c["passed"] else "BAD"
                lines.append(f"    {m} {name:<34} {_fmt(c['residual'])}  (tol {c['tol']:.0e})")
            if "probe" in r:
                pr = r["probe"]
                lines.append(f"    detected {pr['detected']}/{pr['trials']}  failing: {pr['failing_conditions']}")
    elif cmd == "compare":
        suites = report["suites"]
        lines.append("connection    " + "".join(f"{s:>14}" for s in suites))
        for name, row in report["matrix"].items():
            cells = "".join(f"{('pass' if row[s]['passed'] else 'FAIL'):>14}" for s in suites)
            lines.append(f"{name:<14}{cells}")
        lines.append("canonical metric connection vs Cartan:")
        for name, dist in report["canonical_metric_connection_distance_to_cartan"].items():
            lines.append(f"    {name:<14} {dist:.2e}")
        lines.append(f"matches generic pattern: {report['matches_generic_pattern']}")
    elif cmd == "tensors":
        lines.append(f"point x={report['point']['x']} y={report['point']['y']}")
        for k, v in report["tensors"].items():
            lines.append(f"  {k}: {json.dumps(v)}")
        lines.append(f"  flags: {report['flags']}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("config", help="TOML run configuration")
    p.add_argument("--json", metavar="PATH", help="write the JSON report here ('-' for stdout)")
    p.add_argument("--seed", type=int, help="override the sampling seed")
    p.add_argument("--tol", type=float, help="override the default tolerance")
    p.add_argument("--order", type=int, help="override the jet order of the pipeline")
    p.add_argument("--timing", action="store_true", help="include wall-clock time in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finslercheck", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("check", help="run the configured suites"))
    t = sub.add_parser("tensors", help="dump the Finsler tensors at one point")
    _common(t)
    t.add_argument("--x", type=float, nargs="+", required=True)
    t.add_argument("--y", type=float, nargs="+", required=True)
    _common(sub.add_parser("compare", help="characterization matrix of the connections"))
    return parser


def _apply_overrides(cfg: config_mod.RunConfig, args):
    if args.seed is not None:
        if args.seed < 0:
            raise config_mod.ConfigError("--seed must be non-negative")
        cfg.seed = args.seed
    if args.tol is not None:
        if not args.tol > 0:
            raise config_mod.ConfigError("--tol must be positive")
        cfg.tol = args.tol
    if args.order is not None:
        if args.order < 2:
            raise config_mod.ConfigError("--order must be at least 2")
        cfg.order = args.order


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    start = time.perf_counter()
    try:
        cfg = config_mod.load(args.config)
        _apply_overrides(cfg, args)
        if args.command == "check":
            report, code = run_check(cfg)
        elif args.command == "compare":
            report, code = run_compare(cfg)
        else:
            report = run_tensors(cfg, args.x, args.y)
            code = EXIT_OK
    except (config_mod.ConfigError, ParseError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientOrder as exc:
        print(f"configuration error: jet order too low for the requested suites ({exc})", file=sys.stderr)
        return EXIT_CONFIG
    except _Abort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    if args.timing:
        report["wall_clock_seconds"] = time.perf_counter() - start
    text = dumps(report)
    out = args.json or cfg.output
    if out == "-":
        sys.stdout.write(text)
    else:
        if out:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
        sys.stdout.write(render_table(report))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
