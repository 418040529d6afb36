"""Command-line entry point.

Every report is a JSON object with a header (tool name and version, the run
configuration, SHA-256 of every input file) and a ``result``.  Reports carry no
timestamps, so an identical invocation gives byte-identical output.  Curves
written with ``--out x.json`` also get a CSV twin ``x.csv``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from ._parallel import default_threads
from .align import rows_to_csv, under_correction_rows
from .bias import (IncentiveParams, SimulationConfig, bias_curve, incentive_condition,
                   simulation_curve)
from .corpus import NormalizationPolicy, load_corpus, load_kbest, load_outputs, read_jsonl, read_lines
from .measures import MEASURE_NAMES, score_corpus
from .rerank import (load_typed_edits, rerank_sweep, sweep_to_csv, type_frequency_correlation,
                     type_under_correction)
from .unseenest import MeshSpec, dump_histograms, estimate_histogram, load_histograms, summarize

log = logging.getLogger("refbias")

DEFAULT_SEED = 42
# run settings that do not affect results and so stay out of the report header
_EXECUTION_ONLY = {"threads", "func", "verbose"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def parse_m_range(text: str) -> list[int]:
    """``"1..20"``, ``"3"`` or ``"1,2,5"`` to a list of positive integers."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            out = list(range(lo, hi + 1))
        else:
            out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad M range {text!r}; use e.g. 1..20, 2 or 1,2,5") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"M values must be >= 1, got {text!r}")
    return out


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _policy(args) -> NormalizationPolicy:
    return NormalizationPolicy(lowercase=getattr(args, "lowercase", False),
                               strip_non_alphanumeric=getattr(args, "strip", False))


def _header(args, inputs: Sequence[str]) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in _EXECUTION_ONLY}
    return {"tool": "refbias", "version": __version__, "config": config,
            "inputs": {str(p): _sha256(p) for p in inputs}}


def _emit(args, inputs, result, csv_text: Optional[str] = None) -> None:
    report = {**_header(args, inputs), "result": result}
    text = json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    fmt = getattr(args, "format", "json")
    if fmt == "csv" and csv_text is not None:
        text = csv_text
    if args.out:
        out = Path(args.out)
        out.write_text(text, encoding="utf-8")
        if fmt == "json" and csv_text is not None:
            out.with_suffix(".csv").write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --- subcommands --------------------------------------------------------

def cmd_score(args) -> None:
    policy = _policy(args)
    corpus = load_corpus(args.source, args.refs or (), args.multiref, policy)
    outputs = load_outputs(args.hyp, corpus.N)
    report = score_corpus(args.measure, corpus, outputs, policy)
    inputs = [p for p in [args.source, *(args.refs or []), args.multiref, args.hyp] if p]
    _emit(args, inputs, report.to_dict())


def cmd_estimate_dist(args) -> None:
    mesh = MeshSpec(args.heavy_cutoff, args.min_scale, args.mesh_ratio)
    hists = []
    for i, rec in enumerate(read_jsonl(args.multiref), 1):
        samples = rec.get("samples", rec.get("references"))
        if "source" not in rec or not samples:
            raise ValueError(f"{args.multiref}:{i}: record needs 'source' and non-empty 'references'")
        hists.append(estimate_histogram(list(samples), mesh, source=rec["source"]))
    text = dump_histograms(hists)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        meta = Path(args.out).with_suffix(".meta.json")
        meta.write_text(json.dumps({**_header(args, [args.multiref]), "result": {
            "histograms": len(hists), "fallbacks": sum(h.fallback for h in hists)}},
            indent=2, sort_keys=True) + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_summarize(args) -> None:
    hists = load_histograms(args.hists)
    rows = summarize(hists, args.gamma)
    result = [{"gamma": r.gamma, "count": r.count, "mass": r.mass} for r in rows]
    csv_text = "gamma,count,mass\n" + "".join(f"{r.gamma!r},{r.count!r},{r.mass!r}\n" for r in rows)
    _emit(args, [args.hists], result, csv_text)


def cmd_bias_curve(args) -> None:
    hists = load_histograms(args.hists)
    curve = bias_curve(hists, args.m, args.mode, args.mc_samples, args.seed, args.estimator,
                       args.p_true, args.p_fraction, args.level, args.threads)
    _emit(args, [args.hists], curve.to_records(), curve.to_csv())


def cmd_simulate_perfect(args) -> None:
    hists = load_histograms(args.hists)
    cfg = SimulationConfig(args.N, args.N_cor, args.m[0], args.iterations, args.seed, args.measure,
                           args.p_true, args.p_fraction, args.level)
    if args.lucky and args.measure not in ("sari", "max-sari"):
        raise ValueError("--lucky is defined for sari and max-sari")
    curve = simulation_curve(hists, cfg, args.m, args.threads, args.lucky)
    result = {"points": curve.to_records(), "measure": curve.measure,
              "unlabeled_mass_dropped": curve.extra.get("unlabeled_mass_dropped", 0.0)}
    _emit(args, [args.hists], result, curve.to_csv())


def cmd_rerank_sweep(args) -> None:
    kbests = load_kbest(args.kbest)
    pool = load_corpus(multiref_path=args.ref_pool).entries
    if len(pool) != len(kbests):
        raise ValueError(f"{args.ref_pool} has {len(pool)} records but {args.kbest} has {len(kbests)}")
    results = rerank_sweep(kbests, pool, args.m, args.resamples, args.seed, args.measure,
                           threads=args.threads)
    _emit(args, [args.kbest, args.ref_pool], [r.to_dict() for r in results], sweep_to_csv(results))


def cmd_under_correction(args) -> None:
    sources = read_lines(args.source)
    targets = read_lines(args.hyp)
    if len(sources) != len(targets):
        raise ValueError(f"{args.hyp} has {len(targets)} lines but {args.source} has {len(sources)}")
    rows = under_correction_rows(sources, targets)
    rhos = [r.rho for r in rows if r.rho is not None]
    result = {"sentences": len(rows),
              "mean_word_change": sum(r.word_change for r in rows) / len(rows) if rows else 0.0,
              "mean_rho": sum(rhos) / len(rhos) if rhos else None,
              "splits": sum(r.split for r in rows), "concats": sum(r.concat for r in rows),
              "rows": [asdict(r) for r in rows]}
    _emit(args, [args.source, args.hyp], result, rows_to_csv(rows))


def cmd_type_ratio(args) -> None:
    systems = {}
    for spec in args.system:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        systems[name] = path
    ref = load_typed_edits(args.reference)
    table = type_under_correction({n: load_typed_edits(p) for n, p in systems.items()}, ref)
    result: dict = {"ratios": table}
    inputs = [args.reference, *systems.values()]
    if args.frequencies:
        with open(args.frequencies, encoding="utf-8") as fh:
            freqs = json.load(fh)
        rho, p = type_frequency_correlation(table, freqs)
        result["spearman"] = {"rho": rho, "p_value": p}
        inputs.append(args.frequencies)
    csv_text = "type,ratio\n" + "".join(f"{t},{v!r}\n" for t, v in sorted(table.items()))
    _emit(args, inputs, result, csv_text)


def cmd_incentive(args) -> None:
    ok, margin = incentive_condition(IncentiveParams(args.p_detect, args.p_correct, args.p_coverage,
                                                     args.alpha))
    result = {"should_correct": ok, "margin": round(margin, 12)}
    if args.bare:
        text = json.dumps(result) + "\n"
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return
    _emit(args, [], result)


# --- parser ---------------------------------------------------------------

def _common(p, randomized: bool = False, curve: bool = False):
    p.add_argument("--out", help="write the report here instead of stdout")
    if curve:
        p.add_argument("--format", choices=("json", "csv"), default="json")
    if randomized:
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"default {DEFAULT_SEED}")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default $REFBIAS_THREADS or 1); never changes results")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="refbias", description="Low-coverage bias analysis for reference-based measures.")
    ap.add_argument("--version", action="version", version=f"refbias {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("score", help="score system outputs against references")
    p.add_argument("--measure", choices=MEASURE_NAMES, required=True)
    p.add_argument("--source")
    p.add_argument("--refs", nargs="+", help="one file per reference, line-aligned with --source")
    p.add_argument("--multiref", help="JSONL with {source, references} per line")
    p.add_argument("--hyp", required=True)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--strip", action="store_true", help="drop non-alphanumeric tokens before comparing")
    _common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("estimate-dist", help="estimate one correction histogram per source sentence")
    p.add_argument("--multiref", required=True)
    p.add_argument("--heavy-cutoff", type=float, default=0.05)
    p.add_argument("--min-scale", type=float, default=50.0)
    p.add_argument("--mesh-ratio", type=float, default=1.05)
    _common(p)
    p.set_defaults(func=cmd_estimate_dist)

    p = sub.add_parser("summarize", help="variant counts and mass above probability thresholds")
    p.add_argument("--hists", required=True)
    p.add_argument("--gamma", type=float, nargs="+", default=[0.0, 0.001, 0.01, 0.1])
    _common(p, curve=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("bias-curve", help="expected perfect-system accuracy and bias per M")
    p.add_argument("--hists", required=True)
    p.add_argument("--m", type=parse_m_range, default=parse_m_range("1..20"))
    p.add_argument("--mode", choices=("analytic", "mc", "without"), default="analytic")
    p.add_argument("--mc-samples", type=int, default=1000)
    p.add_argument("--estimator", choices=("mass", "membership"), default="mass")
    p.add_argument("--p-true", type=float, default=1.0)
    p.add_argument("--p-fraction", type=float, default=1.0)
    p.add_argument("--level", type=float, default=0.95)
    _common(p, randomized=True, curve=True)
    p.set_defaults(func=cmd_bias_curve)

    p = sub.add_parser("simulate-perfect", help="bootstrap a perfect system's score under a measure")
    p.add_argument("--hists", required=True)
    p.add_argument("--measure", choices=MEASURE_NAMES, default="f05")
    p.add_argument("--m", type=parse_m_range, default=[2])
    p.add_argument("--N", type=int, default=1312)
    p.add_argument("--N-cor", type=int, default=136)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--p-true", type=float, default=1.0)
    p.add_argument("--p-fraction", type=float, default=1.0)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--lucky", action="store_true", help="output is always one of the references")
    _common(p, randomized=True, curve=True)
    p.set_defaults(func=cmd_simulate_perfect)

    p = sub.add_parser("rerank-sweep", help="oracle re-ranking of k-best lists across M")
    p.add_argument("--kbest", required=True, help="JSONL with {source, candidates}")
    p.add_argument("--ref-pool", required=True, help="JSONL with {source, references}")
    p.add_argument("--m", type=parse_m_range, required=True)
    p.add_argument("--measure", choices=MEASURE_NAMES, default="f05")
    p.add_argument("--resamples", type=int, default=1312)
    _common(p, randomized=True, curve=True)
    p.set_defaults(func=cmd_rerank_sweep)

    p = sub.add_parser("under-correction", help="word change, order and segmentation statistics")
    p.add_argument("--source", required=True)
    p.add_argument("--hyp", required=True)
    _common(p, curve=True)
    p.set_defaults(func=cmd_under_correction)

    p = sub.add_parser("type-ratio", help="per error type, system edits over reference edits")
    p.add_argument("--reference", required=True, help="typed-edit JSONL of the references")
    p.add_argument("--system", nargs="+", required=True, help="NAME=PATH typed-edit JSONL per system")
    p.add_argument("--frequencies", help="JSON {type: frequency} for the Spearman test")
    _common(p, curve=True)
    p.set_defaults(func=cmd_type_ratio)

    p = sub.add_parser("incentive", help="whether attempting a correction pays off")
    p.add_argument("--p-detect", type=float, required=True)
    p.add_argument("--p-correct", type=float, required=True)
    p.add_argument("--p-coverage", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--bare", action="store_true", help="print only the decision object")
    _common(p)
    p.set_defaults(func=cmd_incentive)
    return ap


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; 0 on success, 1 on usage or input errors, 2 on internal errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:      # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "threads"):
        args.threads = args.threads if args.threads is not None else default_threads()
        if args.threads < 1:
            print("refbias: error: --threads must be >= 1", file=sys.stderr)
            return 1
    try:
        args.func(args)
    except (OSError, ValueError) as exc:
        print(f"refbias: error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        log.exception("internal error")
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
