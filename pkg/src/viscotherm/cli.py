"""Command line front end: ``viscotherm validate|run|audit|sweep``.

Exit codes: 0 pass, 1 check failure, 2 input error, 3 solver failure.

Run directories hold ``manifest.json`` (written before the run, finalised
after it), ``budgets.csv``, ``integrals.csv``, ``audit_report.json``,
``validation_report.json`` and one CSV per snapshot field. Every number is
written with ``repr`` so it round-trips exactly.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import multiprocessing
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, audit, kernels
from .config import ConfigError, SimulationConfig, load_document, parse_config
from .constitutive import validate_assumptions
from .regularization import RegularizedModel
from .solver import InitialDataError, Simulation, SolverError, with_overrides
from .spectral import ResolutionError

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3
DEFAULT_OUT = "viscotherm_out"
MANIFEST = "manifest.json"
SWEEP_AXES = ("epsilon", "k", "mu", "modes")
# files a run directory may hold without being in the inventory
UNLISTED_OK = {MANIFEST}


class InputError(Exception):
    pass


# --- file helpers -----------------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(fmt(v) for v in r) + "\n")
    return buf.getvalue()


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get("VISCOTHERM_OUT") or DEFAULT_OUT)


def parse_times(text: str | None):
    if not text:
        return None
    try:
        return tuple(sorted(float(v) for v in text.split(",") if v.strip()))
    except ValueError:
        raise InputError(f"--snapshots: expected comma separated times, got {text!r}") from None


def parse_grid(text: str | None):
    if not text:
        return None
    parts = text.lower().replace("*", "x").split("x")
    try:
        px, py = (int(p) for p in parts)
    except ValueError:
        raise InputError(f"--plot-grid: expected PxQ, got {text!r}") from None
    if px < 2 or py < 2:
        raise InputError("--plot-grid: need at least 2 points per direction")
    return px, py


def load(path, overrides=None) -> tuple[dict, SimulationConfig]:
    if not path:
        raise InputError("--config is required")
    doc = load_document(path)
    if overrides:
        doc = {**doc, **overrides}
    return doc, parse_config(doc)


# --- snapshots -------------------------------------------------------------------------------

def snapshot_fields(sim: Simulation, state, grid):
    """Fields on a uniform grid including the edges; x varies fastest within a row block."""
    r = sim.cfg.rect
    co = sim.cfg.coeffs
    xs = np.linspace(0.0, r.Lx, grid[0])
    ys = np.linspace(0.0, r.Ly, grid[1])
    sb, vb = sim.disc.scalar, sim.disc.velocity
    e = sb.at_points(state.e_c, xs, ys)
    b = sb.at_points(state.d, xs, ys)
    theta = sim.reg.theta_from_e(e, np.clip(b, co.b_min, co.b_max))
    vx, vy = vb.at_points(state.c, xs, ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    flat = lambda a: np.asarray(a).T.ravel()
    xy = (flat(X), flat(Y))
    return {
        "e": (("x", "y", "value"), np.column_stack(xy + (flat(e),))),
        "b": (("x", "y", "value"), np.column_stack(xy + (flat(b),))),
        "theta": (("x", "y", "value"), np.column_stack(xy + (flat(theta),))),
        "v": (("x", "y", "vx", "vy"), np.column_stack(xy + (flat(vx), flat(vy)))),
    }


def snapshot_name(k: int, name: str) -> str:
    return f"snapshot_{k:03d}_{name}.csv"


# --- run ---------------------------------------------------------------------------------------

def _manifest(doc, cfg, sim, started, status, files=None, verdicts=None, extra=None) -> dict:
    q = sim.disc.quad
    m = {
        "artifact": "viscotherm",
        "version": __version__,
        "status": status,
        "config": cfg.resolved(),
        "basis": {"velocity_modes": list(cfg.velocity_modes), "scalar_modes": list(cfg.scalar_modes),
                  "velocity_size": sim.disc.sizes[0], "scalar_size": sim.disc.sizes[1]},
        "quadrature": {"nx": q.nx, "ny": q.ny},
        "kernel_backend": kernels.backend(),
        "started": started,
        "finished": None,
        "verdicts": verdicts,
        "files": files or {},
    }
    if extra:
        m.update(extra)
    return m


def _inventory(run: Path, names) -> dict:
    inv = {}
    for n in names:
        p = run / n
        with open(p, "rb") as fh:
            rows = max(0, fh.read().count(b"\n") - 1) if n.endswith(".csv") else None
        inv[n] = {"sha256": sha256(p), "bytes": p.stat().st_size, "rows": rows}
    return inv


def run_document(doc: dict, run: Path, strict=False, snapshots=None, plot_grid=None,
                 threads: int | None = None) -> tuple[int, dict]:
    """Run one configuration into ``run``; returns (exit code, summary)."""
    summary = {"status": "input_error"}
    try:
        cfg = parse_config(doc)
        if snapshots is not None:
            cfg.snapshots = tuple(snapshots)
        if plot_grid is not None:
            cfg.plot_grid = tuple(plot_grid)
        for t in cfg.snapshots:
            if not cfg.t_span[0] <= t <= cfg.t_span[1]:
                raise InputError(f"snapshot time {t!r} outside t_span")
        sim = Simulation(cfg)
        state0 = sim.project_initial()
    except (ConfigError, InputError, InitialDataError, ResolutionError, ValueError) as exc:
        summary["error"] = str(exc)
        return EXIT_INPUT, summary

    if threads is not None:
        kernels.set_threads(threads)
    run.mkdir(parents=True, exist_ok=True)
    for pattern in ("budgets.csv", "integrals.csv", "snapshot_*.csv"):
        for stale in run.glob(pattern):
            stale.unlink()
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    validation = validate_assumptions(cfg.model, cfg.coeffs)
    written = []

    def put(name, text):
        atomic_write(run / name, text)
        written.append(name)

    put("validation_report.json", json.dumps(validation.as_dict(), indent=2))
    atomic_write(run / MANIFEST, json.dumps(_manifest(doc, cfg, sim, started, "running"), indent=2))
    if strict and not validation.passed:
        summary = {"status": "check_failed", "error": "model assumptions failed"}
        _finish(run, doc, cfg, sim, started, "check_failed", written, None, summary)
        return EXIT_CHECK, summary

    samples = []
    observers = [lambda st, nf: samples.append(audit.sample_budgets(sim, st, nf))]
    if strict:
        observers.append(audit.StrictMonitor(sim))
    status, code, error, traj = "complete", EXIT_OK, None, None
    with threadpool_limits(limits=1):
        try:
            traj = sim.integrate(state0, output_times=cfg.snapshots, observers=observers,
                                 record_budgets=False)
        except audit.StrictMonitor.Violation as exc:
            status, code, error = "check_failed", EXIT_CHECK, str(exc)
        except SolverError as exc:
            status, code, error = "solver_failed", EXIT_SOLVER, str(exc)
        except audit.AuditError as exc:
            status, code, error = "solver_failed", EXIT_SOLVER, str(exc)

    put("budgets.csv", csv_text(audit.BUDGET_COLUMNS, (s.row() for s in samples)))
    put("integrals.csv", csv_text(audit.INTEGRAL_COLUMNS, (s.integral_row() for s in samples)))

    snap_meta = []
    residuals = []
    final_theta = None
    if traj is not None:
        for k, t in enumerate(cfg.snapshots):
            fields = snapshot_fields(sim, traj.at(t), cfg.plot_grid)
            names = {}
            for name, (header, data) in fields.items():
                fn = snapshot_name(k, name)
                put(fn, csv_text(header, data))
                names[name] = fn
            residuals.append(_snapshot_residual(sim.reg, cfg, fields))
            snap_meta.append({"t": t, "files": names})
        final_theta = snapshot_fields(sim, traj.states[-1], cfg.plot_grid)["theta"][1][:, 2]

    report = audit.audit_samples(samples, cfg, sim.reg, residuals) if samples else audit.AuditReport()
    put("audit_report.json", report.to_json())
    if strict and code == EXIT_OK and not report.passed:
        status, code = "check_failed", EXIT_CHECK
    summary = {"status": status, "error": error, "report": report,
               "last": samples[-1] if samples else None, "final_theta": final_theta,
               "stats": traj.stats if traj else None}
    _finish(run, doc, cfg, sim, started, status, written, report, summary,
            {"snapshots": snap_meta, "integrator": traj.stats if traj else None, "error": error})
    return code, summary


def _snapshot_residual(reg, cfg, fields) -> float:
    e = fields["e"][1][:, 2]
    b = np.clip(fields["b"][1][:, 2], cfg.coeffs.b_min, cfg.coeffs.b_max)
    th = fields["theta"][1][:, 2]
    return audit.inversion_roundtrip_fields(reg, th, e, b)


def _finish(run, doc, cfg, sim, started, status, written, report, summary, extra=None):
    verdicts = None
    if report is not None:
        verdicts = {"passed": report.passed,
                    **{c.name: {"passed": c.passed, "measured": c.measured, "tolerance": c.tolerance}
                       for c in report.checks}}
    m = _manifest(doc, cfg, sim, started, status, _inventory(run, written), verdicts, extra)
    m["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    atomic_write(run / MANIFEST, json.dumps(m, indent=2, allow_nan=True))


# --- audit -------------------------------------------------------------------------------------

class CorruptRun(Exception):
    pass


def _read_csv(path: Path, header) -> list[dict]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CorruptRun(f"{path.name}: {exc.strerror}") from None
    if not rows or tuple(rows[0]) != tuple(header):
        raise CorruptRun(f"{path.name}: unexpected header")
    out = []
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise CorruptRun(f"{path.name}: line {i} has {len(r)} fields, expected {len(header)}")
        try:
            out.append({k: float(v) for k, v in zip(header, r)})
        except ValueError:
            raise CorruptRun(f"{path.name}: line {i} is not numeric") from None
    return out


def audit_run(run: Path) -> audit.AuditReport:
    """Recompute every verdict from the stored files of a run directory."""
    run = Path(run)
    try:
        manifest = json.loads((run / MANIFEST).read_text(encoding="utf-8"))
        files = manifest["files"]
        doc = manifest["config"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CorruptRun(f"{MANIFEST}: unreadable ({exc})") from None
    present = {p.name for p in run.iterdir() if p.is_file() and not p.name.startswith(".")}
    missing = sorted(set(files) - present)
    unlisted = sorted(present - set(files) - UNLISTED_OK)
    if missing or unlisted:
        raise CorruptRun(f"inventory mismatch: missing {missing}, unlisted {unlisted}")
    tampered = []
    for name, meta in files.items():
        if name.endswith(".csv"):
            with open(run / name, "rb") as fh:
                rows = max(0, fh.read().count(b"\n") - 1)
            if rows != meta.get("rows"):
                raise CorruptRun(f"{name}: {rows} rows, manifest lists {meta.get('rows')}")
        if sha256(run / name) != meta.get("sha256"):
            tampered.append(name)

    cfg_doc = {k: v for k, v in doc.items() if k not in ("model_resolved", "quadrature_resolved")}
    try:
        cfg = parse_config(cfg_doc)
    except ConfigError as exc:
        raise CorruptRun(f"{MANIFEST}: stored config invalid ({exc})") from None
    budgets = _read_csv(run / "budgets.csv", audit.BUDGET_COLUMNS)
    integrals = _read_csv(run / "integrals.csv", audit.INTEGRAL_COLUMNS)
    if len(budgets) != len(integrals) or not budgets:
        raise CorruptRun("budgets.csv and integrals.csv disagree or are empty")
    samples = [audit.BudgetSample.from_rows(b, g) for b, g in zip(budgets, integrals)]

    reg = RegularizedModel(cfg.model, cfg.reg_epsilon)
    residuals = []
    for snap in manifest.get("snapshots", []) or []:
        fields = {}
        for name, fn in snap["files"].items():
            header = ("x", "y", "vx", "vy") if name == "v" else ("x", "y", "value")
            data = _read_csv(run / fn, header)
            fields[name] = (header, np.array([[r[h] for h in header] for r in data]))
        residuals.append(_snapshot_residual(reg, cfg, fields))

    rep = audit.audit_samples(samples, cfg, reg, residuals)
    rep.checks.insert(0, audit.CheckResult("integrity", not tampered, float(len(tampered)), 0.0,
                                           {"checksum_mismatch": tampered}))
    return rep


# --- sweep -------------------------------------------------------------------------------------

SWEEP_COLUMNS = ("index", "value", "exit_code", "t_end", "total", "entropy", "min_b", "max_b",
                 "min_e", "min_theta", "energy_drift", "entropy_drop", "b_violation",
                 "positivity_violation", "inversion_residual", "theta_diff_prev")


def _parse_value(axis, text):
    if axis == "k" and text.strip().lower() == "off":
        return "off"
    try:
        return float(text)
    except ValueError:
        raise InputError(f"--values: {text!r} is not a number") from None


def _sweep_point(args):
    doc, run, strict, snapshots, plot_grid, threads = args
    code, summary = run_document(doc, Path(run), strict, snapshots, plot_grid, threads)
    rep = summary.get("report")
    last = summary.get("last")
    row = {"exit_code": code, "status": summary.get("status"), "error": summary.get("error")}
    if last is not None:
        row.update({k: getattr(last, k) for k in ("total", "entropy", "min_b", "max_b",
                                                   "min_e", "min_theta")})
        row["t_end"] = last.t
    if rep is not None and rep.checks:
        row["energy_drift"] = rep["energy_conservation"].measured
        row["entropy_drop"] = rep["entropy_monotone"].measured
        row["b_violation"] = rep["b_bounds"].measured
        row["positivity_violation"] = rep["positivity"].measured
        row["inversion_residual"] = rep["inversion_roundtrip"].measured
    row["final_theta"] = summary.get("final_theta")
    return row


def sweep(doc, axis, values, out: Path, workers=1, strict=False, snapshots=None, plot_grid=None,
          threads=None) -> list[dict]:
    numeric = [v for v in values if v != "off"]
    if not (numeric == sorted(numeric) or numeric == sorted(numeric, reverse=True)):
        raise InputError("--values must be sorted")
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i, v in enumerate(values):
        d = with_overrides(doc, axis, v)
        jobs.append((d, str(out / f"{axis}_{i:02d}"), strict, snapshots, plot_grid, threads))
    if workers > 1:
        # forked children inherit a live OpenMP runtime and can hang
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    prev = None
    for i, (v, row) in enumerate(zip(values, rows)):
        row["index"], row["value"] = i, (float("inf") if v == "off" else v)
        th = row.pop("final_theta")
        if prev is not None and th is not None and th.shape == prev.shape:
            row["theta_diff_prev"] = float(np.max(np.abs(th - prev)))
        prev = th
    table = csv_text(SWEEP_COLUMNS, ([r.get(c, float("nan")) for c in SWEEP_COLUMNS] for r in rows))
    atomic_write(out / "sweep_summary.csv", table)
    return rows


# --- entry points ------------------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        _, cfg = load(args.config)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rep = validate_assumptions(cfg.model, cfg.coeffs)
    out = out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "validation_report.json", json.dumps(rep.as_dict(), indent=2))
    for r in rep.rows:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.assumption} {r.check}: {r.value!r}")
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_run(args) -> int:
    try:
        doc = load_document(args.config) if args.config else None
        if doc is None:
            raise InputError("--config is required")
        snaps = parse_times(args.snapshots)
        grid = parse_grid(args.plot_grid)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    run = out_dir(args.out)
    code, summary = run_document(doc, run, args.strict, snaps, grid, args.threads)
    if summary.get("error"):
        print(f"error: {summary['error']}", file=sys.stderr)
    rep = summary.get("report")
    if rep is not None:
        for c in rep.checks:
            print(c.line())
    print(f"run directory: {run}")
    return code


def cmd_audit(args) -> int:
    run = Path(args.run_dir) if args.run_dir else out_dir(args.out)
    try:
        rep = audit_run(run)
    except CorruptRun as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for c in rep.checks:
        print(c.line())
    if args.report:
        atomic_write(Path(args.report), rep.to_json())
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_sweep(args) -> int:
    try:
        doc = load_document(args.config) if args.config else None
        if doc is None:
            raise InputError("--config is required")
        parse_config(doc)
        if args.axis not in SWEEP_AXES:
            raise InputError(f"--axis must be one of {', '.join(SWEEP_AXES)}")
        if not args.values:
            raise InputError("--values is required")
        values = [_parse_value(args.axis, v) for v in args.values.split(",") if v.strip()]
        rows = sweep(doc, args.axis, values, out_dir(args.out), args.workers, args.strict,
                     parse_times(args.snapshots), parse_grid(args.plot_grid), args.threads)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for r in rows:
        print(f"{args.axis}={r['value']!r}: exit {r['exit_code']} ({r['status']})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscotherm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"viscotherm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--out", help="output directory (default $VISCOTHERM_OUT or ./viscotherm_out)")

    def running(sp):
        sp.add_argument("--strict", action="store_true", help="abort on the first failed check")
        sp.add_argument("--snapshots", help="comma separated snapshot times")
        sp.add_argument("--plot-grid", help="snapshot grid PxQ (default 128x128)")
        sp.add_argument("--threads", type=int, default=None, help="kernel threads")

    sp = sub.add_parser("validate", help="check the model assumptions")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("run", help="integrate one configuration")
    common(sp)
    running(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("audit", help="recheck a finished run directory")
    sp.add_argument("run_dir", nargs="?", help="run directory (default --out)")
    common(sp, config=False)
    sp.add_argument("--report", help="also write the report JSON here")
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("sweep", help="run a family of configurations")
    common(sp)
    running(sp)
    sp.add_argument("--axis", required=True, help="epsilon, k, mu or modes")
    sp.add_argument("--values", required=True, help="comma separated, sorted")
    sp.add_argument("--workers", type=int, default=1, help="parallel runs")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
