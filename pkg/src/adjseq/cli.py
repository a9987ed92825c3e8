"""Command line front end.

Subcommands ``weights``, ``corr``, ``bounds``, ``analyze`` and ``simulate``
read one configuration file.  Results go to stdout; messages to stderr.
Exit status is 0 on success, 1 for invalid input and 2 for numerical
failure.
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
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .boundaries import bonferroni_bounds, wpgsd_bounds
from .config import FORMATS, ConfigError, RunConfig, load_config
from .gaussian import NumericalError, normal_sf
from .graph import enumerate_closure, subset_weights
from .inference import SequentialEngine, closed_test_report
from .simulation import SimulationPlan, simulate

log = logging.getLogger("adjseq")


def _fmt(x: float, digits: int = 4) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{digits}f}"


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(str(c).rjust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    out = [line(header), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _meta(cfg: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config_sha256": cfg.digest,
        "mvn_seed": cfg.design.mvn.seed,
        "mvn_tol": cfg.design.mvn.tol,
    }


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _subset_name(cfg: RunConfig, sub) -> str:
    return cfg.design.hypotheses.subset_label(sub)


def cmd_weights(cfg: RunConfig, args) -> str:
    d = cfg.design
    labels = d.hypotheses.labels
    subsets = enumerate_closure(d.hypotheses, d.hypotheses.closure_cap)
    table = {s: subset_weights(d.strategy, s) for s in subsets}
    if args.format == "json":
        rows = [
            {"subset": [labels[i] for i in s], "weights": {labels[i]: float(w) for i, w in zip(s, table[s])}}
            for s in subsets
        ]
        return _json({**_meta(cfg, "weights"), "weights": rows})
    header = ["subset"] + list(labels)
    rows = []
    for s in subsets:
        full = dict(zip(s, table[s]))
        if args.format == "csv":
            rows.append([_subset_name(cfg, s)] + [repr(float(full[i])) if i in full else "" for i in range(d.m)])
        else:
            rows.append([_subset_name(cfg, s)] + [_fmt(full[i]) if i in full else "-" for i in range(d.m)])
    return _csv(header, rows) if args.format == "csv" else _table(header, rows)


def _stat_labels(cfg: RunConfig) -> list[str]:
    d = cfg.design
    return [f"{d.hypotheses.labels[j]}@{k + 1}" for k in range(d.K) for j in range(d.m)]


def cmd_corr(cfg: RunConfig, args) -> str:
    c = cfg.design.correlation.matrix
    names = _stat_labels(cfg)
    if args.format == "json":
        return _json({
            **_meta(cfg, "corr"),
            "order": names,
            "matrix": c.tolist(),
            "information_fractions": cfg.design.schedule.fractions.tolist(),
        })
    if args.format == "csv":
        return _csv([""] + names, [[n] + [repr(float(x)) for x in row] for n, row in zip(names, c)])
    return _table([""] + names, [[n] + [f"{x:.2f}" for x in row] for n, row in zip(names, c)])


def cmd_bounds(cfg: RunConfig, args) -> str:
    d = cfg.design
    through = args.analysis or d.K
    subsets = enumerate_closure(d.hypotheses, d.hypotheses.closure_cap)
    records = []
    for s in subsets:
        w = d.weights(s)
        if cfg.method == "bonferroni":
            bs = bonferroni_bounds(s, cfg.alpha, w, d.schedule, d.spending, d.mvn, through)
        else:
            bs = wpgsd_bounds(s, cfg.alpha, w, d.schedule, d.spending, d.correlation, d.mvn, through)
        for k in range(through):
            for col, j in enumerate(s):
                records.append((s, k + 1, j, float(w[col]), float(bs.bounds[k, col])))
    labels = d.hypotheses.labels
    if args.format == "json":
        rows = [
            {"subset": [labels[i] for i in s], "analysis": k, "hypothesis": labels[j], "weight": w,
             "bound": b if math.isfinite(b) else None, "nominal_p": _sf(b)}
            for s, k, j, w, b in records
        ]
        return _json({**_meta(cfg, "bounds"), "method": cfg.method, "alpha": cfg.alpha, "bounds": rows})
    header = ["subset", "analysis", "hypothesis", "weight", "bound", "nominal_p"]
    if args.format == "csv":
        rows = [[_subset_name(cfg, s), k, labels[j], repr(w), repr(b), repr(_sf(b))] for s, k, j, w, b in records]
        return _csv(header, rows)
    rows = [[_subset_name(cfg, s), k, labels[j], _fmt(w), _fmt(b), f"{_sf(b):.6f}"] for s, k, j, w, b in records]
    return _table(header, rows)


def _sf(x: float) -> float:
    return float(normal_sf(x))


def _last_complete(cfg: RunConfig) -> int:
    avail = cfg.observed.available
    k = 0
    while k < avail.shape[1] and avail[:, k].all():
        k += 1
    return k


def analysis_reports(cfg: RunConfig, k: int, threads: int = 1) -> list:
    """Reports for analyses ``1..k`` sharing one memo."""
    eng = SequentialEngine(cfg.design, cfg.observed, cfg.method)
    return [
        closed_test_report(a, cfg.alpha, cfg.observed, cfg.design, cfg.method, threads=threads, repeated=True, engine=eng)
        for a in range(1, k + 1)
    ]


def report_to_dict(rep, cfg: RunConfig) -> dict:
    labels = rep.labels
    return {
        "analysis": rep.analysis,
        "method": rep.method,
        "alpha": rep.alpha,
        "subsets": [
            {"subset": [labels[i] for i in s], "weights": [float(x) for x in rep.weights[s]], "sequential_p": p}
            for s, p in rep.subset_p.items()
        ],
        "hypotheses": [
            {
                "hypothesis": labels[j],
                "adjusted_p": rep.adjusted[j],
                "argmax_subset": [labels[i] for i in rep.argmax[j]],
                "repeated_p": None if rep.repeated is None else rep.repeated[j],
                "rejected": j in rep.rejected,
                "rejected_at": rep.rejected_at.get(j),
            }
            for j in range(len(labels))
        ],
        "rejected": [labels[j] for j in sorted(rep.rejected)],
        "diagnostics": rep.diagnostics.as_dict(),
    }


def cmd_analyze(cfg: RunConfig, args) -> str:
    if cfg.observed is None:
        raise ConfigError("observed", "analyze needs observed statistics")
    k = args.analysis or _last_complete(cfg)
    if k < 1:
        raise ConfigError("observed", "no analysis has statistics for every hypothesis")
    start = time.perf_counter()
    reps = analysis_reports(cfg, k, args.threads)
    log.info("analyze: %d analyses in %.2f s, max MVN error %.2e",
             k, time.perf_counter() - start, reps[-1].diagnostics.max_mvn_error)
    if args.format == "json":
        return _json({**_meta(cfg, "analyze"), "reports": [report_to_dict(r, cfg) for r in reps]})
    labels = cfg.design.hypotheses.labels
    subsets = list(reps[-1].subset_p)
    header = ["hypothesis"]
    for r in reps:
        header += [f"seq_p@{r.analysis}", f"adj_p@{r.analysis}"]
    rows = []
    for s in subsets:
        row = [_subset_name(cfg, s)]
        for r in reps:
            adj = r.adjusted[s[0]] if len(s) == 1 else None
            if args.format == "csv":
                row += [repr(r.subset_p[s]), "" if adj is None else repr(adj)]
            else:
                row += [_fmt(r.subset_p[s]), "-" if adj is None else _fmt(adj)]
        rows.append(row)
    if args.format == "csv":
        return _csv(header, rows)
    last = reps[-1]
    rejected = ", ".join(labels[j] for j in sorted(last.rejected)) or "none"
    return (
        f"method {cfg.method}, alpha {cfg.alpha}, analysis {k}\n"
        + _table(header, rows)
        + f"rejected: {rejected}\n"
    )


def cmd_simulate(cfg: RunConfig, args) -> str:
    sim = cfg.simulation
    reps = args.reps if args.reps is not None else sim.get("reps", 10_000)
    seed = args.seed if args.seed is not None else sim.get("seed", 0)
    if not isinstance(reps, int) or reps < 1:
        raise ConfigError("simulation.reps", f"must be a positive integer, got {reps!r}")
    plan = SimulationPlan(cfg.design, reps, seed, cfg.method, cfg.alpha, sim.get("effects"))
    start = time.perf_counter()
    res = simulate(plan, threads=args.threads)
    log.info("simulate: %d replications in %.2f s", reps, time.perf_counter() - start)
    out = res.as_dict()
    labels = cfg.design.hypotheses.labels
    if args.format == "json":
        return _json({**_meta(cfg, "simulate"), "hypotheses": list(labels), **out})
    header = ["method", "reps", "seed", "fwer", "fwer_se"] + [f"power_{x}" for x in labels]
    if args.format == "csv":
        return _csv(header, [[res.method, reps, seed, repr(res.fwer), repr(res.fwer_se)] + [repr(float(p)) for p in res.power]])
    return _table(header, [[res.method, reps, seed, _fmt(res.fwer), _fmt(res.fwer_se)] + [_fmt(p) for p in res.power]])


COMMANDS = {
    "weights": cmd_weights,
    "corr": cmd_corr,
    "bounds": cmd_bounds,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adjseq",
        description="Sequential and adjusted-sequential p-values for group sequential multiple testing.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--format", choices=FORMATS)
        p.add_argument("--method", choices=("bonferroni", "wpgsd"))
        p.add_argument("--alpha", type=float)
        p.add_argument("--mvn-tol", type=float, dest="mvn_tol")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--analysis", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.alpha is not None:
        if not 0 < args.alpha < 1:
            raise ConfigError("--alpha", f"must lie in (0, 1), got {args.alpha}")
        cfg = replace(cfg, alpha=args.alpha)
    if args.method is not None:
        cfg = replace(cfg, method=args.method)
    if args.mvn_tol is not None:
        try:
            mvn = replace(cfg.design.mvn, tol=args.mvn_tol)
        except ValueError as exc:
            raise ConfigError("--mvn-tol", str(exc)) from None
        cfg = replace(cfg, design=replace(cfg.design, mvn=mvn))
    if args.analysis is not None and not 1 <= args.analysis <= cfg.design.K:
        raise ConfigError("--analysis", f"must lie in 1..{cfg.design.K}")
    if args.threads < 1:
        raise ConfigError("--threads", "must be at least 1")
    if args.format is None:
        args.format = cfg.output_format
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        cfg = apply_overrides(load_config(args.config), args)
        text = COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
