"""Command-line front end: ``run``, ``sweep`` and ``plotdata``.

Exit codes: 0 success, 1 run failure (solver or harness error), 2 bad input
(config errors, empty sweeps, missing reports).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, from_sections, read_sections, with_override
from .errors import ConfigError, MonotonicityViolation, NLSLabError, SolverError
from .harness import _plain, run_experiment

log = logging.getLogger("nlslab")

SCHEMA_VERSION = 1
WORKERS_ENV = "NLSLAB_WORKERS"
CSV_FIELDS = ["schema_version", "index", "experiment", "param", "value", "config_hash", "status",
              "lhs", "rhs", "ratio", "guard_max"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.17g}"
    return str(v)


def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in fields})
    return buf.getvalue()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _error_record(exc: BaseException, **context) -> dict:
    rec = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "message": str(exc)}
    for attr in ("key", "t", "interval"):
        if getattr(exc, attr, None) is not None:
            rec[attr] = getattr(exc, attr)
    rec.update(context)
    return _plain(rec)


def _load_sections(path: str, seed: int | None) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", key="--config") from exc
    sections = read_sections(text)
    if seed is not None:
        sections = with_override(sections, "initial.seed", str(seed))
    return sections


# -- single job (also the sweep worker) -------------------------------------------


def execute(index: int, sections: dict, param: str = "", value: str = "") -> tuple[dict, dict]:
    """Run one config; return the CSV row and the report (or error record)."""
    chash = config_hash(sections)
    row = {"schema_version": SCHEMA_VERSION, "index": index, "param": param, "value": value,
           "config_hash": chash, "experiment": sections.get("experiment", {}).get("name", ""),
           "lhs": float("nan"), "rhs": float("nan"), "ratio": float("nan"), "guard_max": float("nan")}
    try:
        cfg = from_sections(sections)
        report = run_experiment(cfg)
    except ConfigError as exc:
        row["status"] = "failed:ConfigError"
        return row, _error_record(exc, index=index)
    except (SolverError, MonotonicityViolation, NLSLabError, FloatingPointError, ValueError) as exc:
        row["status"] = f"failed:{type(exc).__name__}"
        return row, _error_record(exc, index=index)
    row.update(status=report.status, lhs=float(report.lhs), rhs=float(report.rhs), ratio=float(report.ratio),
               guard_max=float(report.aux.get("guard_max", float("nan"))))
    return row, report.to_dict()


def _write_run_outputs(out: Path, index_rows: list[dict], payloads: list[dict], manifest: dict) -> None:
    for row, payload in zip(index_rows, payloads):
        name = "report.json" if "error" not in payload else "error.json"
        sub = out if len(index_rows) == 1 else out / f"run_{row['index']:04d}"
        atomic_write(sub / name, json.dumps(_plain(payload), indent=2, sort_keys=True))
    atomic_write(out / "aggregate.csv", csv_text(index_rows, CSV_FIELDS))
    atomic_write(out / "manifest.json", json.dumps(_plain(manifest), indent=2, sort_keys=True))


def cmd_run(args) -> int:
    out = Path(args.out)
    started = _now()
    try:
        sections = _load_sections(args.config, args.seed)
        from_sections(sections)  # validate before running
    except ConfigError as exc:
        rec = _error_record(exc)
        print(json.dumps(rec), file=sys.stderr)
        atomic_write(out / "error.json", json.dumps(rec, indent=2, sort_keys=True))
        return 2
    row, payload = execute(0, sections)
    manifest = {"schema_version": SCHEMA_VERSION, "tool_version": __version__, "config_hash": row["config_hash"],
                "seed": sections.get("initial", {}).get("seed", "0"), "started": started, "finished": _now(),
                "outputs": ["report.json" if "error" not in payload else "error.json", "aggregate.csv"]}
    _write_run_outputs(out, [row], [payload], manifest)
    if "error" in payload:
        print(json.dumps(payload), file=sys.stderr)
        return 1
    return 0


# -- sweep -----------------------------------------------------------------------


def _worker_count(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV, env)
    return 1


def _slope(pairs: list[tuple[float, float]]) -> float:
    pts = [(x, y) for x, y in pairs if x > 0 and y > 0]
    if len(pts) < 2:
        return float("nan")
    x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def summarize(rows: list[dict], payloads: list[dict]) -> dict:
    """Min / max / median ratio per experiment, spread, and the i_energy fit."""
    summary: dict = {"schema_version": SCHEMA_VERSION, "experiments": {}}
    by_exp: dict[str, list[float]] = {}
    for r in rows:
        if r["status"] in ("ok", "violation") and np.isfinite(r["ratio"]):
            by_exp.setdefault(r["experiment"], []).append(r["ratio"])
    for e, vals in sorted(by_exp.items()):
        v = np.array(vals)
        summary["experiments"][e] = {"count": int(v.size), "min_ratio": float(v.min()), "max_ratio": float(v.max()),
                                     "median_ratio": float(np.median(v)),
                                     "ratio_spread": float(v.max() / v.min()) if v.min() > 0 else float("nan")}
    pairs = []
    for p in payloads:
        if p.get("experiment") == "i_energy":
            pairs.extend(zip(p["aux"]["N"], p["aux"]["inc"]))
    if pairs:
        pairs = sorted(set((float(a), float(b)) for a, b in pairs))
        summary["i_energy"] = {"N": [a for a, _ in pairs], "inc": [b for _, b in pairs], "slope": _slope(pairs)}
    summary["failed"] = sum(1 for r in rows if r["status"].startswith("failed"))
    return summary


def cmd_sweep(args) -> int:
    out = Path(args.out)
    started = _now()
    values = [v.strip() for v in (args.values or "").split(",") if v.strip()]
    try:
        if not values:
            raise ConfigError("empty value list", key="--values")
        if not args.param:
            raise ConfigError("missing parameter name", key="--param")
        base = _load_sections(args.config, args.seed)
        jobs = []
        for v in values:
            sec = with_override(base, args.param, v)
            from_sections(sec)
            jobs.append(sec)
    except ConfigError as exc:
        rec = _error_record(exc)
        print(json.dumps(rec), file=sys.stderr)
        atomic_write(out / "error.json", json.dumps(rec, indent=2, sort_keys=True))
        return 2
    workers = _worker_count(args.workers)
    if workers == 1:
        results = [execute(i, sec, args.param, v) for i, (sec, v) in enumerate(zip(jobs, values))]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(execute, i, sec, args.param, v) for i, (sec, v) in enumerate(zip(jobs, values))]
            results = [f.result() for f in futures]  # ordered by config index
    rows = [r for r, _ in results]
    payloads = [p for _, p in results]
    manifest = {"schema_version": SCHEMA_VERSION, "tool_version": __version__, "config_hash": config_hash(base),
                "job_hashes": [r["config_hash"] for r in rows], "seed": base.get("initial", {}).get("seed", "0"),
                "param": args.param, "values": values, "workers": workers, "started": started, "finished": _now(),
                "outputs": ["aggregate.csv", "summary.json"] + [f"run_{r['index']:04d}" for r in rows]}
    _write_run_outputs(out, rows, payloads, manifest)
    atomic_write(out / "summary.json", json.dumps(_plain(summarize(rows, payloads)), indent=2, sort_keys=True))
    return 0


# -- plot data -------------------------------------------------------------------


SERIES_ORDER = ["t", "mass", "energy", "momentum_0", "momentum_1", "M_a", "action"]


def _series_rows(report: dict) -> tuple[list[str], list[dict]]:
    aux = report.get("aux", {})
    s = dict(aux.get("series", {}))
    if "action" in aux:
        s["action"] = aux["action"]
    cols = [c for c in SERIES_ORDER if c in s]
    n = len(s.get("t", []))
    rows = [{"schema_version": SCHEMA_VERSION, **{c: float(s[c][i]) for c in cols}} for i in range(n)]
    return ["schema_version"] + cols, rows


def svg_lines(x, ys: dict, title: str, width: int = 480, height: int = 300, logscale: bool = False) -> str:
    """A minimal static SVG line chart."""
    x = np.asarray(x, dtype=float)
    pad = 40
    tx = np.log(x) if logscale else x
    series = {k: (np.log(np.asarray(v, float)) if logscale else np.asarray(v, float)) for k, v in ys.items()}
    allv = np.concatenate([v[np.isfinite(v)] for v in series.values()]) if series else np.zeros(1)
    lo, hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    hi = hi if hi > lo else lo + 1.0
    x0, x1 = float(tx.min()), float(tx.max()) if tx.max() > tx.min() else float(tx.min()) + 1.0
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{pad}" y="20" font-size="12">{title}</text>',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="#888"/>']
    for i, (name, v) in enumerate(series.items()):
        px = pad + (tx - x0) / (x1 - x0) * (width - 2 * pad)
        py = height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py) if np.isfinite(b))
        c = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" points="{pts}"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * (i + 1)}" font-size="10" fill="{c}" '
                     f'text-anchor="end">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plotdata(args) -> int:
    root = Path(args.report_dir)
    reports = sorted(root.rglob("report.json")) if root.is_dir() else []
    if not reports:
        print(json.dumps({"error": "MissingReports", "message": f"no report.json under {root}"}), file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else root / "plotdata"
    ie_pairs = []
    for path in reports:
        rep = json.loads(path.read_text())
        tag = path.parent.name if path.parent != root else "run"
        fields, rows = _series_rows(rep)
        if rows:
            atomic_write(out / f"{tag}_series.csv", csv_text(rows, fields))
            if args.svg:
                t = [r["t"] for r in rows]
                ys = {c: [r[c] for r in rows] for c in fields[2:]}
                atomic_write(out / f"{tag}_series.svg", svg_lines(t, ys, f"{rep['experiment']} {tag}"))
        if rep.get("experiment") == "i_energy":
            ie_pairs.extend(zip(rep["aux"]["N"], rep["aux"]["inc"]))
    if ie_pairs:
        pairs = sorted(set((float(a), float(b)) for a, b in ie_pairs))
        rows = [{"schema_version": SCHEMA_VERSION, "N": a, "inc": b, "log_N": math.log(a),
                 "log_inc": math.log(b) if b > 0 else float("nan")} for a, b in pairs]
        atomic_write(out / "i_energy_loglog.csv", csv_text(rows, ["schema_version", "N", "inc", "log_N", "log_inc"]))
        if args.svg:
            atomic_write(out / "i_energy_loglog.svg",
                         svg_lines([a for a, _ in pairs], {"inc": [b for _, b in pairs]}, "inc(N)", logscale=True))
    return 0


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlslab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    s = sub.add_parser("sweep", help="run one experiment over a list of parameter values")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--seed", type=int)
    p = sub.add_parser("plotdata", help="export time series and log-log tables from reports")
    p.add_argument("report_dir")
    p.add_argument("--out")
    p.add_argument("--svg", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return {"run": cmd_run, "sweep": cmd_sweep, "plotdata": cmd_plotdata}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
