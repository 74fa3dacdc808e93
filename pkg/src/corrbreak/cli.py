"""Command-line front end.

    corrbreak detect          --input data.csv --orientation rows-are-variables
    corrbreak estimate        --input data.csv --orientation rows-are-times
    corrbreak smote-estimate  --input data.csv --orientation rows-are-times --gamma 0.9
    corrbreak simulate        --case 6 --p 100 --T 100 --method space --replications 200

Exit status: 0 success, 1 usage error, 2 data error, 3 method error.
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
from dataclasses import fields
from typing import Optional

import numpy as np

from .baselines import dette_estimate, kcp_estimate
from .detect import DetectionReport, SupportIndexSet, spad_detect
from .errors import (
    ChangePointError,
    ConfigError,
    DataError,
    EmptyFile,
    InvalidScenario,
    MethodError,
    NonNumericCell,
    RaggedRows,
)
from .estimate import EstimationReport, space_estimate
from .signflip import SignflipConfig, ThresholdReport
from .simlab import METHODS, MetricsSummary, SimScenario, run_experiment, spad_smote_experiment
from .smote import SmoteConfig, smote_space

log = logging.getLogger(__name__)

ORIENTATIONS = ("rows-are-variables", "rows-are-times")
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_METHOD = 0, 1, 2, 3
HISTOGRAM_BINS = 50


# --------------------------------------------------------------------------
# CSV ingestion

def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _number(cell: str) -> float:
    v = float(cell)
    if not math.isfinite(v):
        raise ValueError(cell)
    return v


def ingest_csv(path, orientation: Optional[str] = None) -> np.ndarray:
    """Read a numeric grid and return it as a ``p x T`` matrix.

    ``orientation`` may instead come from a first-line directive such as
    ``# orientation: rows-are-times``. An optional header row and an optional
    label column are recognised when none of their cells is numeric. Reported
    cell locations are 1-based file coordinates.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    start = 0
    if lines and lines[0].lstrip().startswith("#"):
        directive = lines[0].lstrip("# \t").split(":", 1)
        if len(directive) == 2 and directive[0].strip().lower() == "orientation":
            found = directive[1].strip()
            if found not in ORIENTATIONS:
                raise ConfigError(f"unknown orientation directive {found!r}")
            if orientation is not None and orientation != found:
                raise ConfigError(f"--orientation {orientation} contradicts file directive {found}")
            orientation = found
        start = 1
    if orientation is None:
        raise ConfigError("orientation must be given (--orientation) or set by a file directive")
    if orientation not in ORIENTATIONS:
        raise ConfigError(f"orientation must be one of {ORIENTATIONS}")

    rows = [(n, r) for n, r in enumerate(csv.reader(io.StringIO("\n".join(lines[start:]))),
                                         start=start + 1)
            if any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(f"{path} holds no data")
    width = len(rows[0][1])
    for n, r in rows:
        if len(r) != width:
            raise RaggedRows(n, width, len(r))

    first = [c.strip() for c in rows[0][1]]
    if len(rows) > 1 and not any(_is_number(c) for c in first if c):
        rows = rows[1:]
    label_col = all(not _is_number(r[0].strip()) for _, r in rows) and width > 1
    c0 = 1 if label_col else 0

    grid = np.empty((len(rows), width - c0))
    for a, (n, r) in enumerate(rows):
        for b in range(c0, width):
            try:
                grid[a, b - c0] = _number(r[b].strip())
            except ValueError:
                raise NonNumericCell(n, b + 1, r[b]) from None
    if grid.size == 0:
        raise EmptyFile(f"{path} holds no numeric cells")
    return grid if orientation == "rows-are-variables" else np.ascontiguousarray(grid.T)


# --------------------------------------------------------------------------
# Report serialization

def _f(x) -> Optional[float]:
    return None if x is None else float(x)


def _histogram(values: np.ndarray) -> dict:
    if values.size == 0:
        return {"edges": [], "counts": []}
    counts, edges = np.histogram(values, bins=HISTOGRAM_BINS)
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def _threshold_fields(th: Optional[ThresholdReport]) -> dict:
    if th is None:
        return {"tau1": None, "tau2": None, "seed": None, "q": None, "alpha": None,
                "threshold_label": None}
    return {"tau1": float(th.tau1), "tau2": float(th.tau2), "seed": int(th.seed),
            "q": int(th.q), "alpha": float(th.alpha), "threshold_label": th.label}


def _support_fields(s: SupportIndexSet) -> dict:
    return {"support": [[i, j] for i, j in s.pairs()], "p": int(s.p),
            "support_includes_diagonal": bool(s.include_diagonal)}


def report_to_dict(report) -> dict:
    """Plain-JSON form of a detection, estimation or metrics report."""
    if isinstance(report, DetectionReport):
        doc = {"kind": "detection", "verdict": bool(report.rejected), "beta_hat": None,
               "t_hat": None}
        doc.update(_support_fields(report.support))
        doc.update(_threshold_fields(report.thresholds))
        doc.update({"smote_iterations": None, "cusum_curve": None,
                    "w_histogram": _histogram(report.w),
                    "w": [float(v) for v in report.w]})
        return doc
    if isinstance(report, EstimationReport):
        doc = {"kind": "estimation", "verdict": None, "beta_hat": float(report.beta_hat),
               "t_hat": int(report.t_hat)}
        doc.update(_support_fields(report.support))
        doc.update(_threshold_fields(report.thresholds))
        doc.update({"smote_iterations": int(report.smote_iterations),
                    "cusum_curve": [float(v) for v in report.cusum],
                    "w_histogram": None, "method": report.method, "T": int(report.T),
                    "boundary": bool(report.boundary), "converged": bool(report.converged),
                    "scan_start": int(report.scan_start),
                    "notes": {k: report.notes[k] for k in sorted(report.notes)}})
        return doc
    if isinstance(report, MetricsSummary):
        doc = {"kind": "metrics"}
        for f in fields(MetricsSummary):
            doc[f.name] = getattr(report, f.name)
        return doc
    raise TypeError(f"cannot serialize {type(report).__name__}")


def report_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "metrics":
        return MetricsSummary(**{f.name: doc[f.name] for f in fields(MetricsSummary) if f.name in doc})
    th = None
    if doc.get("tau1") is not None:
        th = ThresholdReport(doc["tau1"], doc["tau2"], doc["q"], doc["alpha"], doc["seed"],
                             None, doc["threshold_label"])
    support = SupportIndexSet.from_pairs(doc["support"], doc["p"],
                                         doc.get("support_includes_diagonal", False))
    if kind == "detection":
        return DetectionReport(doc["verdict"], support, np.array(doc["w"], dtype=np.float64), th)
    if kind == "estimation":
        return EstimationReport(
            beta_hat=doc["beta_hat"], t_hat=doc["t_hat"],
            cusum=np.array(doc["cusum_curve"], dtype=np.float64), support=support,
            thresholds=th, smote_iterations=doc["smote_iterations"], T=doc["T"],
            boundary=doc["boundary"], converged=doc["converged"], method=doc["method"],
            scan_start=doc["scan_start"], notes=dict(doc["notes"]))
    raise ValueError(f"unknown report kind {kind!r}")


def dumps_report(report) -> str:
    return json.dumps(report_to_dict(report), indent=2) + "\n"


def loads_report(text: str):
    return report_from_dict(json.loads(text))


def _csv_tables(doc: dict) -> tuple[list, dict]:
    scalars = [(k, v) for k, v in doc.items() if not isinstance(v, (list, dict))]
    scalars += [(f"notes.{k}", v) for k, v in (doc.get("notes") or {}).items()]
    scalars += [(f"failure_kinds.{k}", v) for k, v in (doc.get("failure_kinds") or {}).items()]
    curves = {}
    if doc.get("support") is not None:
        curves["support"] = (["i", "j"], doc["support"])
    if doc.get("cusum_curve") is not None:
        start = doc.get("scan_start", 2)
        curves["cusum_curve"] = (["t", "U"], [[start + k, v] for k, v in enumerate(doc["cusum_curve"])])
    if doc.get("w") is not None:
        pairs = SupportIndexSet(np.arange(len(doc["w"])), doc["p"],
                                doc.get("support_includes_diagonal", False)).pairs()
        curves["w"] = (["i", "j", "w"], [[i, j, v] for (i, j), v in zip(pairs, doc["w"])])
    if doc.get("w_histogram"):
        h = doc["w_histogram"]
        curves["w_histogram"] = (["left_edge", "right_edge", "count"],
                                 [[a, b, c] for a, b, c in zip(h["edges"][:-1], h["edges"][1:], h["counts"])])
    if doc.get("records"):
        keys = sorted({k for r in doc["records"] for k in r})
        curves["records"] = (keys, [[r.get(k, "") for k in keys] for r in doc["records"]])
    return scalars, curves


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def emit_report(report, fmt: str = "json", output: Optional[str] = None) -> list[str]:
    """Write ``report`` to ``output`` (stdout when None or ``-``); return the paths written.

    CSV output puts the scalar fields in ``output`` as ``field,value`` rows and
    each curve in ``<stem>_<curve>.csv`` next to it.
    """
    if fmt == "json":
        text = dumps_report(report)
        if output in (None, "-"):
            sys.stdout.write(text)
            return []
        with open(output, "w", newline="") as fh:
            fh.write(text)
        return [output]
    if fmt != "csv":
        raise ConfigError(f"unknown format {fmt!r}")
    if output in (None, "-"):
        raise ConfigError("--format csv needs --output pointing to a file")
    scalars, curves = _csv_tables(report_to_dict(report))
    written = [output]
    with open(output, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["field", "value"])
        for k, v in scalars:
            wr.writerow([k, _fmt(v)])
    stem, ext = os.path.splitext(output)
    for name, (header, rows) in curves.items():
        path = f"{stem}_{name}{ext or '.csv'}"
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for row in rows:
                wr.writerow([_fmt(v) for v in row])
        written.append(path)
    return written


# --------------------------------------------------------------------------
# argparse plumbing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(sp, trials: int):
    sp.add_argument("--input", required=True, help="CSV file with the observations")
    sp.add_argument("--orientation", choices=ORIENTATIONS,
                    help="whether file rows are variables or time points")
    sp.add_argument("--trials", type=int, default=trials, help="signflip trials q")
    sp.add_argument("--alpha", type=float, default=0.95, help="quantile level for tau2")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    _output(sp)


def _output(sp):
    sp.add_argument("--output", default="-", help="output path ('-' for stdout)")
    sp.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="corrbreak", description="Change points in high-dimensional correlation matrices.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("detect", help="test for a change (SPAD)")
    _common(sp, 30)

    sp = sub.add_parser("estimate", help="estimate the change fraction (SPACE or a baseline)")
    _common(sp, 20)
    sp.add_argument("--method", choices=("space", "dette", "kcp"), default="space")

    sp = sub.add_parser("smote-estimate", help="SMOTE + SPACE for changes near the end")
    _common(sp, 20)
    sp.add_argument("--gamma", type=float, default=0.9)
    sp.add_argument("--epsilon", type=float, default=1e-3)
    sp.add_argument("--max-iterations", type=int, default=25)
    sp.add_argument("--window-frame", choices=("current", "original"), default="current",
                    help="minority window follows the working length or stays on the input length")

    sp = sub.add_parser("simulate", help="Monte Carlo experiment on a synthetic scenario")
    sp.add_argument("--config", help="scenario file with key=value lines")
    sp.add_argument("--case", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--T", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--beta2", type=float)
    sp.add_argument("--dist", choices=("gaussian", "student_t"))
    sp.add_argument("--variance", choices=("unit", "hetero", "var1", "var1_hetero", "garch", "ushift"))
    sp.add_argument("--method", default="space",
                    choices=sorted({m.replace("_", "-") for m in METHODS} | set(METHODS)
                                   | {"spad-smote", "spad_smote"}))
    sp.add_argument("--replications", type=int, default=200)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--alpha", type=float, default=0.95)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--gamma", type=float, default=0.9)
    sp.add_argument("--epsilon", type=float, default=None,
                    help="SMOTE tolerance (default 1e-3; 0.05 for spad-smote)")
    sp.add_argument("--window-frame", choices=("current", "original"), default=None,
                    help="SMOTE window frame (default: current for smote-space, original for spad-smote)")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--records", action="store_true", help="include per-replication records")
    _output(sp)
    return parser


def _scenario(args) -> SimScenario:
    kw = {}
    if args.config:
        with open(args.config) as fh:
            kw = {f.name: getattr(SimScenario.from_text(fh.read()), f.name) for f in fields(SimScenario)}
    for name in ("case", "p", "T", "beta", "beta2", "dist", "variance"):
        v = getattr(args, name)
        if v is not None:
            kw[name] = v
    return SimScenario(**kw)


def _run(args):
    if args.command == "simulate":
        scenario = _scenario(args)
        method = args.method.replace("-", "_")
        if method == "spad_smote":
            res = spad_smote_experiment(scenario, m=args.replications,
                                        epsilon=0.05 if args.epsilon is None else args.epsilon,
                                        q=args.trials or 30, alpha=args.alpha, gamma=args.gamma,
                                        seed=args.seed, workers=args.workers,
                                        window_frame=args.window_frame or "original")
            out = MetricsSummary(method="spad_smote", replications=res.datasets,
                                 true_beta=scenario.true_beta, rejection_rate=res.rate,
                                 success_rate=res.rate, mean_iterations=float(res.iterations),
                                 degenerate=res.datasets <= 1)
            if args.records:
                out.records = [{"round": k, "rate": r} for k, r in enumerate(res.rates)]
            return out
        return run_experiment(scenario, method, args.replications, seed=args.seed,
                              workers=args.workers, q=args.trials, alpha=args.alpha,
                              gamma=args.gamma,
                              epsilon=1e-3 if args.epsilon is None else args.epsilon,
                              keep_records=args.records,
                              window_frame=args.window_frame or "current")

    data = ingest_csv(args.input, args.orientation)
    cfg = SignflipConfig(q=args.trials, alpha=args.alpha, seed=args.seed, workers=args.workers)
    if args.command == "detect":
        return spad_detect(data, cfg)
    if args.command == "estimate":
        if args.method == "dette":
            return dette_estimate(data, cfg=cfg)
        if args.method == "kcp":
            return kcp_estimate(data)
        return space_estimate(data, cfg)
    if args.command == "smote-estimate":
        sm = SmoteConfig(gamma=args.gamma, epsilon=args.epsilon,
                         max_iterations=args.max_iterations, seed=args.seed,
                         window_frame=args.window_frame)
        return smote_space(data, cfg, sm)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = _run(args)
        emit_report(report, args.format, args.output)
    except (ConfigError, InvalidScenario) as exc:
        print(f"corrbreak: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"corrbreak: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MethodError, ChangePointError) as exc:
        print(f"corrbreak: method error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_METHOD
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
