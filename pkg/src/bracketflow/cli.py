"""Command line interface: ``flow run | sweep | fixtures | check``.

Exit codes: 0 success, 1 failed fixture checks, 2 invalid input, 3 integration failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import fixtures, flows, liealg, soliton
from .curvature import FlowKind, FlowPreconditionViolated, StructureViolation, flow_generator, flow_pq
from .hermitian import ce_differential, decompose_operator, is_closed, is_integrable
from .integrator import StepSizeUnderflow
from .liealg import LieBracket
from .model import ModelError, ModelFile, fixture_model, load

log = logging.getLogger("bracketflow")

EXIT_OK, EXIT_CHECKS, EXIT_INVALID, EXIT_INTEGRATION = 0, 1, 2, 3
EMIT_CHOICES = ("series", "report", "limit")
SERIES_HEAD = ["t", "mu_norm", "R", "trP", "ric_ac_norm", "pq_norm"]


@dataclass
class RunConfig:
    flow: FlowKind
    t_end: float
    tol: float = 1e-9
    blowup_norm: float = flows.BLOWUP_NORM
    emit: frozenset = frozenset(EMIT_CHOICES)
    seed_fixture: Optional[str] = None
    limit_tol: float = 1e-6

    def validate(self) -> None:
        if not math.isfinite(self.t_end) or self.t_end == 0:
            raise ModelError(f"t_end must be finite and nonzero, got {self.t_end}")
        if not 1e-14 < self.tol < 1e-2:
            raise ModelError(f"tol must lie in (1e-14, 1e-2), got {self.tol}")
        if not self.blowup_norm > 0:
            raise ModelError("blowup norm must be positive")
        bad = set(self.emit) - set(EMIT_CHOICES)
        if bad:
            raise ModelError(f"unknown emit option(s) {sorted(bad)}")


def setup_logging() -> None:
    level = os.environ.get("FLOW_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG", "WARNING"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")


def _clean(x):
    """JSON-safe copy: numpy to builtins, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, FlowKind):
        return x.value
    return x


def series_columns(dim: int) -> list[str]:
    cols = list(SERIES_HEAD)
    for i in range(1, dim + 1):
        for j in range(i + 1, dim + 1):
            cols.extend(f"c_{i}_{j}_{k}" for k in range(1, dim + 1))
    return cols


def write_series(path, traj: flows.FlowTrajectory) -> None:
    d = traj.mus.shape[1]
    diag = traj.diagnostics
    iu, ju = np.triu_indices(d, k=1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(series_columns(d))
        for n, t in enumerate(traj.times):
            row = [t] + [diag[k][n] for k in SERIES_HEAD[1:]] + list(traj.mus[n][iu, ju, :].reshape(-1))
            w.writerow([repr(float(v)) for v in row])


def _check(name: str, passed: bool, value=None, detail: str = "") -> dict:
    return {"name": name, "passed": bool(passed), "value": value, "detail": detail}


def invariant_checks(kind: FlowKind, mu0: LieBracket, triple, traj: flows.FlowTrajectory,
                     alg: soliton.SolitonCertificate, full: soliton.SolitonCertificate) -> list[dict]:
    out = []
    jac = float(np.max(traj.diagnostics["jacobi"]))
    out.append(_check("jacobi_along_flow", jac <= 1e-6, jac, "relative Jacobi residual <= 1e-6"))
    worst = 0.0
    for c in (traj.mus[0], traj.mus[-1]):
        mu = LieBracket(c)
        P, Q = flow_pq(kind, mu, triple, check=False)
        Qac = decompose_operator(Q, triple.J)[1]
        gap = abs(np.sum((P + Qac) ** 2) - np.sum(P ** 2) - np.sum(Qac ** 2))
        worst = max(worst, gap / max(1.0, np.sum(P ** 2) + np.sum(Qac ** 2)))
    out.append(_check("orthogonality_P_Qac", worst <= 1e-12, worst))
    s = 1.7
    A1 = flow_generator(kind, mu0, triple)
    As = flow_generator(kind, mu0 * s, triple)
    err = float(np.linalg.norm(As - s * s * A1)) / max(1.0, float(np.linalg.norm(As)))
    out.append(_check("scaling_identity", err <= 1e-12, err, "A(s mu) = s^2 A(mu)"))
    if kind is FlowKind.SCF:
        dw = max(float(np.abs(ce_differential(LieBracket(c), triple.omega)).max()) / max(1.0, np.linalg.norm(c))
                 for c in traj.mus)
        out.append(_check("almost_kahler_preserved", dw <= 1e-7, dw))
    if kind is FlowKind.CRF and len(traj) > 1:
        tr = traj.diagnostics["trP"]
        step = np.diff(tr) * np.sign(traj.times[-1] - traj.times[0])
        drop = float(-step.min())
        out.append(_check("trP_monotone", drop <= 1e-9 * max(1.0, np.abs(tr).max()), drop,
                          "tr P non-decreasing in forward time"))
    if kind is FlowKind.ACRF and len(traj) > 1:
        R = traj.diagnostics["R"]
        drop = float(-(np.diff(R) * np.sign(traj.times[-1] - traj.times[0])).min())
        out.append(_check("R_monotone", drop <= 1e-9 * max(1.0, np.abs(R).max()), drop))
    if traj.singularity is not None and traj.singularity.side == "forward":
        lb = traj.singularity.lowerBound
        out.append(_check("blowup_lower_bound", lb > 0, lb, "|mu| |T - t|^(1/2) bounded below"))
    out.append(_check("full_residual_le_algebraic", full.residual <= alg.residual + 1e-12,
                      [full.residual, alg.residual]))
    return out


def _limit_dict(lim: Optional[flows.Limit]) -> Optional[dict]:
    if lim is None:
        return None
    return {"entries": [list(e) for e in lim.lam.entries(1e-14)], "residual": lim.residual}


def simulate(config: RunConfig, model: ModelFile) -> tuple[Optional[flows.FlowTrajectory], dict]:
    """Run one model: integrate, certify, look for a limit, evaluate invariants.

    Raises ModelError for invalid input; integration failures are reported in the returned
    dict with ``status = "failed"`` and the partial trajectory when available.
    """
    config.validate()
    mu0, triple = model.build()
    kind = config.flow
    try:
        flow_pq(kind, mu0, triple, check=True)
    except (FlowPreconditionViolated, StructureViolation) as exc:
        raise ModelError(str(exc)) from None
    report = {"flow": kind.value, "model": model.to_dict(), "t_end": config.t_end, "tol": config.tol}
    alg = soliton.detect_algebraic(kind, mu0, triple)
    full = soliton.detect_full(kind, mu0, triple)
    report["certificate"] = {"algebraic": alg.to_dict(), "full": full.to_dict()}
    try:
        traj = flows.integrate_bracket(kind, mu0, triple, config.t_end, tol=config.tol,
                                       blowup_norm=config.blowup_norm)
    except StepSizeUnderflow as exc:
        part = getattr(exc, "trajectory", None)
        if part is not None:
            part.diagnostics = flows._diagnostics(kind, part.mus, triple)
        report.update(status="failed", error=str(exc), t_reached=float(exc.t))
        return part, _clean(report)
    report["status"] = traj.status
    report["t_reached"] = float(traj.times[-1])
    report["samples"] = len(traj)
    sing = traj.singularity
    report["singularity"] = None if sing is None else {
        "T_est": sing.T_est, "side": sing.side, "fitExponent": sing.fitExponent, "lowerBound": sing.lowerBound}
    if "limit" in config.emit:
        if sing is not None:
            lim = flows.detect_limit(traj, tol=config.limit_tol)
        else:
            # dense samples over the last 5% so the trailing window is populated even at a fixed point
            marks = np.linspace(0.95 * config.t_end, config.t_end, 25)[:-1]
            normed = flows.integrate_bracket(kind, mu0, triple, config.t_end, tol=config.tol, normalized=True,
                                             diagnostics=False, checkpoints=marks)
            lim = flows.detect_limit(normed, tol=config.limit_tol)
        report["limit"] = _limit_dict(lim)
    report["invariants"] = invariant_checks(kind, mu0, triple, traj, alg, full)
    report["final"] = {k: float(v[-1]) for k, v in traj.diagnostics.items()}
    return traj, _clean(report)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _load_model(args) -> ModelFile:
    if args.model and args.fixture:
        raise ModelError("give either --model or --fixture, not both")
    if args.fixture:
        if args.fixture not in fixtures.CATALOG:
            raise ModelError(f"unknown fixture {args.fixture!r}; known: {', '.join(fixtures.CATALOG)}")
        m = fixture_model(args.fixture)
    elif args.model:
        m = load(args.model)
    else:
        raise ModelError("a model is required (--model PATH or --fixture NAME)")
    params = {}
    for p in getattr(args, "param", None) or []:
        key, _, val = p.partition("=")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise ModelError(f"bad --param {p!r}; expected name=value") from None
    return m.with_params(**params) if params else m


def _config(args) -> RunConfig:
    emit = frozenset(e.strip() for e in args.emit.split(",") if e.strip())
    cfg = RunConfig(FlowKind.parse(args.flow), float(args.t_end), float(args.tol), float(args.blowup_norm),
                    emit, args.fixture, float(args.limit_tol))
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    try:
        model = _load_model(args)
        cfg = _config(args)
        traj, report = simulate(cfg, model)
    except (ModelError, ValueError) as exc:
        msg = exc.format(args.model or args.fixture) if isinstance(exc, ModelError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    if traj is not None and args.out and "series" in cfg.emit:
        write_series(args.out, traj)
    if args.report and "report" in cfg.emit:
        _write_json(args.report, report)
    if report["status"] == "failed":
        print(f"integration failed: {report['error']}", file=sys.stderr)
        return EXIT_INTEGRATION
    sing = report.get("singularity")
    line = f"{report['flow']}: status={report['status']} t={report['t_reached']:.6g}"
    if sing:
        line += f" T_est={sing['T_est']:.10g} ({sing['side']}) slope={sing['fitExponent']:.4f}"
    cert = report["certificate"]["full"]
    line += f" soliton={cert['kind']} c={cert['c']:.6g}"
    if report.get("limit"):
        line += f" limit_residual={report['limit']['residual']:.2e}"
    print(line)
    failed = [c["name"] for c in report["invariants"] if not c["passed"]]
    if failed:
        print("invariant checks failed: " + ", ".join(failed), file=sys.stderr)
    return EXIT_OK


def parse_grid(specs) -> list[dict]:
    """``["a=0.5,1,2", "b=1"]`` to the list of parameter dicts of their product."""
    axes = []
    for spec in specs or []:
        key, sep, vals = spec.partition("=")
        if not sep or not key.strip():
            raise ModelError(f"bad --grid {spec!r}; expected name=v1,v2,...")
        try:
            values = [float(v) for v in vals.split(",") if v.strip()]
        except ValueError:
            raise ModelError(f"bad --grid values in {spec!r}") from None
        axes.append((key.strip(), values))
    if not axes:
        return []
    names = [a[0] for a in axes]
    return [dict(zip(names, combo)) for combo in itertools.product(*(a[1] for a in axes))]


def _sweep_point(cfg: RunConfig, model: ModelFile, params: dict) -> tuple[dict, dict]:
    try:
        _, report = simulate(cfg, model.with_params(**params))
    except Exception as exc:  # recorded per point; the sweep goes on
        report = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    return params, report


def cmd_sweep(args) -> int:
    try:
        model = _load_model(args)
        cfg = _config(args)
        grid = parse_grid(args.grid)
        if grid and not model.family:
            raise ModelError("sweeps need a model with a family of parameters")
        for point in grid:
            model.with_params(**point)
    except ModelError as exc:
        print(f"error: {exc.format(args.model or args.fixture)}", file=sys.stderr)
        return EXIT_INVALID
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    index = []
    jobs = args.jobs or os.cpu_count() or 1

    def record(n, params, report):
        # only the parent process writes files
        name = f"point_{n:04d}.json"
        _write_json(outdir / name, report)
        entry = {"params": params, "report": name, "status": report.get("status")}
        if report.get("status") == "failed":
            entry["error"] = report.get("error")
        else:
            full = report["certificate"]["full"]
            entry.update(singularity=report.get("singularity"),
                         certificate={"kind": full["kind"], "c": full["c"], "residual": full["residual"]},
                         limit=report.get("limit"))
        index.append((n, entry))

    if jobs == 1 or len(grid) <= 1:
        for n, p in enumerate(grid):
            record(n, *_sweep_point(cfg, model, p))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(_sweep_point, cfg, model, p): n for n, p in enumerate(grid)}
            for fut in as_completed(futs):
                record(futs[fut], *fut.result())
    index.sort(key=lambda e: e[0])
    _write_json(outdir / "index.json", _clean([e for _, e in index]))
    failed = sum(1 for _, e in index if e["status"] == "failed")
    print(f"sweep: {len(index)} points, {failed} failed, index at {outdir / 'index.json'}")
    return EXIT_OK


def fixture_suite() -> list[tuple[str, str, float, bool]]:
    """Built-in end-to-end checks; rows are (fixture, check, value, passed)."""
    rows = []
    f = fixtures.n4(1.0, 1.0)
    tr = flows.integrate_bracket("scf", f.mu, f.triple, 10.0)
    err = float(np.max(np.abs(tr.norms / (2 * (2.5 * tr.times + 1) ** -0.5) - 1)))
    rows.append(("n4", "SCF closed form |mu(t)|, t in [0,10]", err, err < 1e-6))
    cert = soliton.detect_algebraic("scf", f.mu, f.triple)
    rows.append(("n4", "soliton c = -5/4", cert.c, cert.is_soliton and abs(cert.c + 1.25) < 1e-10))

    f = fixtures.anna(1.0, 1.0)
    tr = flows.integrate_bracket("scf", f.mu, f.triple, 1000.0, normalized=True, diagnostics=False)
    lam = fixtures.anna_bracket(1.0, 2.0) * (1 / math.sqrt(20))
    dist = float(np.linalg.norm(tr.mus[-1] / tr.norms[-1] - lam.coeffs))
    rows.append(("anna", "normalized limit mu_{1,2}/sqrt(20)", dist, dist < 1e-3))
    cert = soliton.detect_algebraic("scf", *_pair(fixtures.anna(1.0, 2.0)))
    rows.append(("anna", "b = 2a is an algebraic soliton", cert.residual, cert.is_soliton))

    f = fixtures.aff()
    tr = flows.integrate_bracket("crf", f.mu, f.triple, -1.0)
    T = tr.singularity.T_est if tr.singularity else float("nan")
    rows.append(("aff", "backward CRF blow-up at -1/2", T, abs(T + 0.5) < 1e-3))
    slope = tr.singularity.fitExponent if tr.singularity else float("nan")
    rows.append(("aff", "blow-up exponent -1/2", slope, abs(slope + 0.5) <= 0.02))
    cert = soliton.detect_full("crf", f.mu, f.triple)
    rows.append(("aff", "static soliton c = -1", cert.c, cert.static and abs(cert.c + 1) < 1e-10))

    f = fixtures.abelian()
    rhs = float(np.linalg.norm(flows.bracket_rhs("crf", f.mu, f.triple)))
    rows.append(("abelian", "fixed point", rhs, rhs == 0.0))

    f = fixtures.product83()
    cert = soliton.detect_full("crf", f.mu, f.triple)
    rows.append(("product83", "not a Chern-Ricci soliton", cert.residual,
                 cert.kind == "none" and cert.residual > soliton.REJECT_TOL))
    return rows


def _pair(f: fixtures.Fixture):
    return f.mu, f.triple


def cmd_fixtures(args) -> int:
    if args.list or not args.all:
        for name, make in fixtures.CATALOG.items():
            fx = make()
            print(f"{name:10s} dim={fx.mu.dim}  flows={','.join(fx.flows):13s} {fx.note}")
        if not args.all:
            return EXIT_OK
    rows = fixture_suite()
    width = max(len(r[1]) for r in rows)
    for name, check, value, ok in rows:
        print(f"{name:10s} {check:{width}s} {value: .6e}  {'PASS' if ok else 'FAIL'}")
    n_fail = sum(1 for r in rows if not r[3])
    print(f"{len(rows) - n_fail}/{len(rows)} passed")
    return EXIT_OK if n_fail == 0 else EXIT_CHECKS


def cmd_check(args) -> int:
    try:
        model = _load_model(args)
        mu, triple = model.build()
    except ModelError as exc:
        print(f"error: {exc.format(args.model or args.fixture)}", file=sys.stderr)
        return EXIT_INVALID
    closed = is_closed(mu, triple.omega)
    print(f"dim={mu.dim} entries={len(model.bracket)} jacobi_residual={mu.jacobi_residual():.3e} "
          f"compatibility={triple.compatibility_residual():.3e}")
    print(f"almost_kahler={closed} integrable={is_integrable(mu, triple.J)} "
          f"flows={','.join(['crf', 'acrf'] + (['scf'] if closed else []))}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flow", description="Bracket-flow simulation of curvature flows on Lie groups.")
    sub = ap.add_subparsers(dest="command", required=True)

    def model_args(p):
        p.add_argument("--model", help="model JSON file")
        p.add_argument("--fixture", help="built-in fixture instead of a model file")
        p.add_argument("--param", action="append", help="override a family parameter, name=value")

    def run_args(p):
        model_args(p)
        p.add_argument("--flow", required=True, choices=[k.value for k in FlowKind])
        p.add_argument("--t-end", required=True, type=float)
        p.add_argument("--tol", type=float, default=1e-9, help="relative tolerance (default 1e-9)")
        p.add_argument("--blowup-norm", type=float, default=flows.BLOWUP_NORM)
        p.add_argument("--emit", default="series,report,limit", help="comma list of series,report,limit")
        p.add_argument("--limit-tol", type=float, default=1e-6)

    p = sub.add_parser("run", help="integrate one model")
    run_args(p)
    p.add_argument("--out", help="series CSV path")
    p.add_argument("--report", help="JSON report path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter grid over a model family")
    run_args(p)
    p.add_argument("--grid", action="append", help="name=v1,v2,... (repeat per parameter)")
    p.add_argument("--outdir", required=True)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical cores)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fixtures", help="list fixtures or run the built-in suite")
    p.add_argument("--all", action="store_true", help="run the built-in check suite")
    p.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("check", help="validate a model file")
    model_args(p)
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
