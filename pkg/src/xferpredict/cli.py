"""Command-line front end: validate, generate, predict, evaluate, correlate.

Exit status is 0 on success, 2 for usage or configuration errors, 3 for data
or validation errors (including degenerate fits) and 4 when there is not
enough data. Every failure prints a single diagnostic line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from .config import RunConfig, load_run_config, load_synth_config, synth_config_from_dict
from .errors import (
    AlignmentError,
    ConfigurationError,
    DegenerateFitError,
    InputError,
    InsufficientDataError,
    ParseError,
    ValidationError,
    XferPredictError,
)
from .evaluation import DEFAULT_LEVEL, correlate, evaluate_suite, format_report
from .fusion import match_streams
from .synth import generate_traces, write_traces
from .traces import TraceSet, check_log, classify_size

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INSUFFICIENT = 4

log = logging.getLogger("xferpredict")


class DataFileError(XferPredictError):
    """Wraps a parse/validation error with the file it came from."""

    def __init__(self, path, exc: Exception):
        self.path = path
        self.cause = exc
        super().__init__(f"{path}: {exc}")


# --------------------------------------------------------------------------- commands


def _load_traces(cfg: RunConfig) -> TraceSet:
    cfg.check_files()
    from .traces import read_disk_log, read_probe_log, read_transfer_log

    loaded = []
    for path, reader in (
        (cfg.transfers, lambda p: read_transfer_log(p, strict=cfg.strict)),
        (cfg.probes, read_probe_log),
        (cfg.disks, read_disk_log),
    ):
        try:
            loaded.append(reader(path))
        except (ParseError, InputError) as exc:
            raise DataFileError(path, exc) from exc
    return TraceSet(*loaded, name=cfg.name or Path(cfg.transfers).stem)


def cmd_validate(paths: Sequence, kind: str = "auto", strict: bool = False) -> tuple:
    """Check each log; returns (report text, all_ok)."""
    lines = []
    ok = True
    for path in paths:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataFileError(path, InputError(exc.strerror or str(exc))) from None
        res = check_log(text, kind, strict)
        ok &= res.ok
        lines.append(
            f"{path}: {'ok' if res.ok else 'FAILED'} kind={res.kind} records={res.records} "
            f"violations={len(res.violations)} inconsistencies={len(res.inconsistencies)}"
        )
        lines += [f"{path}: violation: {v}" for v in res.violations]
        lines += [f"{path}: warning: {w}" for w in res.inconsistencies]
    return "\n".join(lines) + "\n", ok


def cmd_generate(synth_cfg, output_dir, prefix: str = "synth") -> dict:
    traces = generate_traces(synth_cfg)
    return write_traces(traces, output_dir, prefix)


def cmd_evaluate(cfg: RunConfig, query_size: Optional[int] = None) -> str:
    traces = _load_traces(cfg)
    if len(traces.transfers) <= cfg.training_count:
        raise InsufficientDataError(
            f"{len(traces.transfers)} transfer(s) cannot cover a training prefix of {cfg.training_count}"
        )
    report = evaluate_suite(
        traces, cfg.predictors, cfg.fusion, cfg.training_count, cfg.by_class, cfg.level, query_size
    )
    return format_report(report)


def cmd_predict(cfg: RunConfig, query_size: int) -> str:
    if query_size <= 0:
        raise InputError("query size must be a positive number of bytes")
    traces = _load_traces(cfg)
    if len(traces.transfers) <= cfg.training_count:
        raise InsufficientDataError(
            f"{len(traces.transfers)} transfer(s) cannot cover a training prefix of {cfg.training_count}"
        )
    report = evaluate_suite(
        traces, cfg.predictors, cfg.fusion, cfg.training_count, cfg.by_class, cfg.level, query_size
    )
    if all(r.triplet is None for r in report.rows):
        raise InsufficientDataError("no predictor could forecast the next transfer")
    out = [
        f"# next transfer: file_size={query_size} class={classify_size(query_size).label} level={cfg.level:g}",
        "predictor\tpredicted_kbps\terror_pct\tconfidence_limit_pct",
    ]
    for r in report.rows:
        t = r.triplet
        if t is None:
            out.append(f"{r.name}\tNA\tNA\tNA")
            continue
        ci = "NA" if t.confidence_limit_pct is None else f"{t.confidence_limit_pct:.4f}"
        out.append(f"{r.name}\t{t.predicted_throughput:.4f}\t{t.error_pct:.4f}\t{ci}")
    return "\n".join(out) + "\n"


def cmd_correlate(cfg: RunConfig) -> str:
    """Rank correlation of transfer throughput with probe bandwidth and disk rate.

    Pairs come from the stream alignment: each matched transfer against the
    probe at its tick (G~N) and the disk record at that tick (G~D).
    """
    traces = _load_traces(cfg)
    aligned = match_streams(traces.transfers, traces.probes, traces.disks, cfg.max_gap)
    gn = [(t.g, t.n.bandwidth) for t in aligned if t.g is not None]
    gd = [(t.g, t.d.transfer_rate) for t in aligned if t.g is not None and t.d is not None]
    out = [
        f"# rank-order correlation with {cfg.level:g} confidence limits",
        "pair\tupper\tlower\tcoefficient\tpairs",
    ]
    for label, pairs in (("G~N", gn), ("G~D", gd)):
        if len(pairs) < 4:
            raise InsufficientDataError(f"{label}: {len(pairs)} matched pair(s), need at least 4")
        x, y = zip(*pairs)
        res = correlate(x, y, cfg.level)
        out.append(f"{label}\t{res.ci_upper:.4f}\t{res.ci_lower:.4f}\t{res.coefficient:.4f}\t{res.n}")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--output", metavar="PATH", help="write results here instead of stdout")
    common.add_argument("--level", type=float, default=None, help=f"confidence level (default {DEFAULT_LEVEL})")
    common.add_argument("--seed", type=int, default=None, help="seed for generate")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="xferpredict", description="Predict large-transfer throughput from logs and probes.", parents=[common]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="parse logs and report invariant violations")
    p.add_argument("paths", nargs="*", help="log files (default: the three files of --config)")
    p.add_argument("--kind", choices=("auto", "transfer", "probe", "disk"), default="auto")
    p.add_argument("--strict", action="store_true", help="treat inconsistent records as violations")

    p = sub.add_parser("generate", parents=[common], help="write seeded synthetic traces")
    p.add_argument("--prefix", default=None)

    p = sub.add_parser("predict", parents=[common], help="forecast the next transfer of a given size")
    p.add_argument("--size", type=int, required=True, help="file size in bytes")

    p = sub.add_parser("evaluate", parents=[common], help="walk-forward evaluation report")
    p.add_argument("--size", type=int, default=None, help="query size for the report's forecasts")

    sub.add_parser("correlate", parents=[common], help="rank correlation of G with N and D")
    return parser


def _run_config(args) -> RunConfig:
    if not args.config:
        raise ConfigurationError(f"{args.command} needs --config")
    cfg = load_run_config(args.config)
    if args.level is not None:
        if not 0 < args.level < 1:
            raise ConfigurationError("--level must be in (0, 1)")
        cfg.level = args.level
    return cfg


def _emit(text: str, path):
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dispatch(args) -> int:
    if args.command == "validate":
        paths = list(args.paths)
        if not paths:
            if not args.config:
                raise ConfigurationError("validate needs log paths or --config")
            cfg = load_run_config(args.config)
            paths = [cfg.transfers, cfg.probes, cfg.disks]
            kinds = ["transfer", "probe", "disk"]
            text, ok = "", True
            for path, kind in zip(paths, kinds):
                t, o = cmd_validate([path], kind, args.strict or cfg.strict)
                text += t
                ok &= o
        else:
            text, ok = cmd_validate(paths, args.kind, args.strict)
        _emit(text, args.output)
        if not ok:
            print("xferpredict: validation error: log contains invalid records", file=sys.stderr)
            return EXIT_DATA
        return EXIT_OK

    if args.command == "generate":
        if args.config:
            synth, out = load_synth_config(args.config)
        else:
            synth, out = synth_config_from_dict({})
        if args.seed is not None:
            synth = replace(synth, seed=args.seed)
        prefix = args.prefix or out["prefix"]
        paths = cmd_generate(synth, args.output or out["output_dir"], prefix)
        for key, path in paths.items():
            print(f"{key}\t{path}")
        return EXIT_OK

    cfg = _run_config(args)
    if args.command == "predict":
        text = cmd_predict(cfg, args.size)
        _emit(text, args.output)
    elif args.command == "evaluate":
        text = cmd_evaluate(cfg, args.size)
        _emit(text, args.output or cfg.output)
    else:
        text = cmd_correlate(cfg)
        _emit(text, args.output)
    return EXIT_OK


def _diagnose(exc: Exception):
    """Map an exception to (exit status, failure class)."""
    if isinstance(exc, DataFileError):
        status, kind = _diagnose(exc.cause)
        return status, kind
    if isinstance(exc, ConfigurationError):
        return EXIT_USAGE, "config error"
    if isinstance(exc, ValidationError):
        return EXIT_DATA, "validation error"
    if isinstance(exc, ParseError):
        return EXIT_DATA, "parse error"
    if isinstance(exc, InsufficientDataError):
        return EXIT_INSUFFICIENT, "insufficient data"
    if isinstance(exc, DegenerateFitError):
        return EXIT_DATA, "degenerate fit"
    if isinstance(exc, (InputError, AlignmentError)):
        return EXIT_DATA, "data error"
    return EXIT_DATA, "error"


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return _dispatch(args)
    except XferPredictError as exc:
        status, kind = _diagnose(exc)
        print(f"xferpredict: {kind}: {exc}", file=sys.stderr)
        return status
    except OSError as exc:
        print(f"xferpredict: io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
