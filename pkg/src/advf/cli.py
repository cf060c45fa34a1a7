"""``advf`` command line: trace, analyze, inject, finalize, rfi, report.

Exit status is 0 on success, 2 on any validation error and 3 when
``analyze`` leaves injection points pending. Errors print a single line
``ERR <code> <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from . import kernels
from .config import AnalysisConfig, ConfigError, parse_config
from .engine import (ADVFReport, MissingResultsError, PendingInjections, UnknownObjectError,
                     compute_advf, merge_reports)
from .injector import (AcceptanceError, AcceptanceSpec, read_results, run_campaign,
                       verify_deduction, write_results)
from .interp import InjectionError, InputError, run
from .ir import IRError, Program, parse_program
from .masking import FaultPattern
from .propagation import read_points, write_points
from .rfi import rfi_campaign, sample_size
from .trace import (DataObjectMap, TraceFormatError, read_trace, resolve_object_refs,
                    write_trace)

EXIT_OK, EXIT_INVALID, EXIT_PENDING = 0, 2, 3


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


# ---------------------------------------------------------------------------
# loading helpers


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CliError("io", f"{path}: {e.strerror}") from None


def _load_program(ref: str) -> tuple[Program, str, str]:
    """Returns (program, display name, default config text). ``ref`` is an IR
    file or the name of a shipped kernel."""
    path = Path(ref)
    if not path.exists() and ref in kernels.CATALOG:
        k = kernels.load(ref)
        return k.program, ref, k.config_text
    try:
        return parse_program(_read(ref)), path.stem, ""
    except IRError as e:
        raise CliError("parse", f"{ref}: {e}") from None


def _load_inputs(path: Optional[str]) -> Optional[dict]:
    """``name v1 v2 ...`` per line; a single value binds a scalar."""
    if path is None:
        return None
    out = {}
    for lineno, raw in enumerate(_read(path).splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        name, vals = line[0], line[1:]
        if not vals:
            raise CliError("input", f"{path}:{lineno}: no values for {name}")
        try:
            nums = [float(v) if any(c in v.lower() for c in ".einf") else int(v, 0) for v in vals]
        except ValueError as e:
            raise CliError("input", f"{path}:{lineno}: {e}") from None
        out[name] = nums if len(nums) > 1 else nums[0]
    return out


def _config(args, default_text: str = "") -> AnalysisConfig:
    try:
        cfg = parse_config(default_text)
        if getattr(args, "config", None):
            cfg = parse_config(_read(args.config), cfg)
        kw = {}
        if getattr(args, "k", None) is not None:
            kw["k"] = args.k
        if getattr(args, "budget", None):
            kw["budget"] = args.budget
        if getattr(args, "pattern", None):
            kw["pattern"] = FaultPattern.parse(args.pattern)
        if getattr(args, "accept", None):
            kw["accept"] = AcceptanceSpec.parse(args.accept)
        if getattr(args, "jobs", None) is not None:
            kw["jobs"] = args.jobs
        if getattr(args, "seed", None) is not None:
            kw["seed"] = args.seed
        if getattr(args, "no_deduce", False):
            kw["deduce"] = False
        if getattr(args, "verify_deduction", False):
            kw["verify_deduction"] = True
        if getattr(args, "object", None):
            kw["object"] = args.object
        return cfg.with_(**kw) if kw else cfg
    except (ConfigError, AcceptanceError, ValueError) as e:
        raise CliError("config", str(e)) from None


def _load_trace(path: str, p: Program):
    try:
        with open(path) as f:
            trace, phash = read_trace(f)
    except OSError as e:
        raise CliError("io", f"{path}: {e.strerror}") from None
    except TraceFormatError as e:
        raise CliError("trace", f"{path}: {e}") from None
    if phash != p.fingerprint():
        raise CliError("version", f"{path} was recorded for program {phash}, not {p.fingerprint()}")
    return trace


def _emit(text: str, out: Optional[str]):
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text)
        except OSError as e:
            raise CliError("io", f"{out}: {e.strerror}") from None


def _object(cfg: AnalysisConfig, p: Program) -> str:
    if not cfg.object:
        raise CliError("object", "no target object (use --object or 'object' in the config)")
    if cfg.object not in DataObjectMap.for_program(p):
        raise CliError("object", f"unknown data object {cfg.object}")
    return cfg.object


# ---------------------------------------------------------------------------
# commands


def cmd_trace(args) -> int:
    p, _, _ = _load_program(args.program)
    out, trace = run(p, _load_inputs(args.inputs), args.step_limit)
    if not out.completed:
        raise CliError("run", f"golden run did not complete: {out.summary()}")
    omap = DataObjectMap.for_program(p)
    trace = resolve_object_refs(trace, omap)
    if args.map:
        _emit(omap.dumps(), args.map)
    if args.output is None:
        write_trace(trace, sys.stdout, p.fingerprint())
    else:
        with open(args.output, "w") as f:
            write_trace(trace, f, p.fingerprint())
    return EXIT_OK


def cmd_analyze(args) -> int:
    p, name, cfg_text = _load_program(args.program)
    cfg = _config(args, cfg_text)
    obj = _object(cfg, p)
    trace = _load_trace(args.trace, p)
    res = compute_advf(p, _load_inputs(args.inputs), trace, obj, cfg, program_name=name)
    if isinstance(res, PendingInjections):
        _emit(write_points(res.points), args.output)
        return EXIT_PENDING
    _emit(res.to_json(), args.output)
    return EXIT_OK


def cmd_inject(args) -> int:
    p, _, cfg_text = _load_program(args.program)
    cfg = _config(args, cfg_text)
    try:
        points = read_points(_read(args.points))
    except ValueError as e:
        raise CliError("points", f"{args.points}: {e}") from None
    inputs = _load_inputs(args.inputs)
    trace = _load_trace(args.trace, p) if args.trace else None
    results = run_campaign(p, inputs, points, cfg.accept, cfg.jobs, cfg.deduce, trace)
    if cfg.verify_deduction:
        results, bad = verify_deduction(p, inputs, results, cfg.accept)
        for pt in bad:
            print(f"deduction contradicted at {pt.line()}", file=sys.stderr)
    _emit(write_results(results), args.output)
    return EXIT_OK


def cmd_finalize(args) -> int:
    p, name, cfg_text = _load_program(args.program)
    cfg = _config(args, cfg_text)
    obj = _object(cfg, p)
    trace = _load_trace(args.trace, p)
    try:
        results = read_results(_read(args.results))
    except ValueError as e:
        raise CliError("results", f"{args.results}: {e}") from None
    res = compute_advf(p, _load_inputs(args.inputs), trace, obj, cfg, results, program_name=name)
    if isinstance(res, PendingInjections):  # pragma: no cover - results were supplied
        raise CliError("results", "injection results are missing")
    _emit(res.to_json(), args.output)
    return EXIT_OK


def cmd_rfi(args) -> int:
    p, _, cfg_text = _load_program(args.program)
    cfg = _config(args, cfg_text)
    obj = _object(cfg, p)
    if args.n < 1:
        raise CliError("usage", "-n must be >= 1")
    r = rfi_campaign(p, _load_inputs(args.inputs), obj, args.n, cfg.seed, cfg.accept,
                     args.without_replacement, cfg.jobs)
    _emit(r.line() + "\n", args.output)
    return EXIT_OK


def cmd_sample_size(args) -> int:
    try:
        print(sample_size(args.margin, args.p))
    except ValueError as e:
        raise CliError("usage", str(e)) from None
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(ADVFReport.from_json(_read(path)))
        except (ValueError, KeyError, AssertionError) as e:
            raise CliError("report", f"{path}: malformed report ({e})") from None
    try:
        table = merge_reports(reports)
    except ValueError as e:
        raise CliError("report", str(e)) from None
    if args.format == "csv":
        text = table.to_csv()
    else:
        text = table.render()
    _emit(text, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _common(sp, config=True):
    sp.add_argument("program", help="IR file or shipped kernel name")
    sp.add_argument("--inputs", help="input bindings file (name v1 v2 ...)")
    sp.add_argument("-o", "--output", help="output path (default stdout)")
    if config:
        sp.add_argument("--config", help="flat 'key value' config file")
        sp.add_argument("--object", help="target data object")
        sp.add_argument("-k", type=int, help="propagation budget")
        sp.add_argument("--budget", choices=("tainted", "all"), help="what k counts")
        sp.add_argument("--pattern", help="single | multi:<w> | bit:<b>")
        sp.add_argument("--accept", help="exact | rel:<eps> | conv:<name>:<tau>")
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--no-deduce", action="store_true")
        sp.add_argument("--verify-deduction", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="advf", description="application-level data vulnerability analysis")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("trace", help="record the golden trace")
    _common(sp, config=False)
    sp.add_argument("--map", help="also write the data object map here")
    sp.add_argument("--step-limit", type=int, default=10_000_000)
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("analyze", help="compute aDVF or list pending injection points")
    _common(sp)
    sp.add_argument("trace")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("inject", help="run deterministic injections for a points file")
    _common(sp)
    sp.add_argument("points")
    sp.add_argument("--trace", help="golden trace (enables bit deduction)")
    sp.set_defaults(func=cmd_inject)

    sp = sub.add_parser("finalize", help="combine analysis with injection results")
    _common(sp)
    sp.add_argument("trace")
    sp.add_argument("results")
    sp.set_defaults(func=cmd_finalize)

    sp = sub.add_parser("rfi", help="random fault injection baseline")
    _common(sp)
    sp.add_argument("-n", type=int, required=True)
    sp.add_argument("--without-replacement", action="store_true")
    sp.set_defaults(func=cmd_rfi)

    sp = sub.add_parser("sample-size", help="RFI tests needed for a margin of error")
    sp.add_argument("margin", type=float)
    sp.add_argument("--p", type=float, default=0.5, help="a priori success rate")
    sp.set_defaults(func=cmd_sample_size)

    sp = sub.add_parser("report", help="render one or more reports")
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--format", choices=("text", "csv"), default="text")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as e:
        code, msg = e.code, str(e)
    except UnknownObjectError as e:
        code, msg = "object", f"unknown data object {e.args[0]}"
    except MissingResultsError as e:
        code, msg = "results", str(e)
    except (InputError, InjectionError) as e:
        code, msg = "input", str(e)
    except (AcceptanceError, ConfigError) as e:
        code, msg = "config", str(e)
    except ValueError as e:
        code, msg = "invalid", str(e)
    print(f"ERR {code} {' '.join(msg.split())}", file=sys.stderr)
    return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
