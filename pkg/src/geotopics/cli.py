"""Command-line pipeline: ingest -> factorize -> extract, plus synth and bench.

Stages communicate through files only, each stage writes a manifest with
input digests next to its outputs, and every subcommand is deterministic
for fixed inputs and flags. Exit codes are a stable contract: 0 success,
2 usage or input problems, 3 empty results, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from datetime import date, timedelta
from pathlib import Path

from . import __version__
from .errors import EmptyCorpusError, ShapeError, SolverError, SpecError
from .ingest import (
    DEFAULT_KEYWORDS,
    IngestConfig,
    LocationIndex,
    build_corpus_tensor,
    load_wordlist,
    read_locations_csv,
    read_terms,
    read_timeaxis,
    write_corpus_artifacts,
)
from .nmf import flatten_location, flatten_time, nmf_factorize, write_nmf_model
from .patterns import (
    association_loss_report,
    build_reports,
    factor_match_score,
    write_report_json,
    write_topics_csv,
)
from .solver import SolverConfig, factorize, read_model, write_model, write_trace
from .synth import PlantedSpec, plant_corpus, plant_instance
from .tensor import frobenius_sq, read_tensor, write_tensor

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EMPTY = 3
EXIT_NUMERIC = 4


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json_atomic(obj: dict, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _write_manifest(
    outdir: Path,
    subcommand: str,
    config: dict,
    inputs: list[Path],
    outputs: list[str],
    seed: int | None,
    wall_seconds: float | None,
) -> None:
    manifest = {
        "subcommand": subcommand,
        "tool_version": __version__,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in sorted(inputs)},
        "outputs": sorted(outputs),
        "seed": seed,
        "wall_time_seconds": wall_seconds,
    }
    _write_json_atomic(manifest, outdir / "manifest.json")


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _require_files(*paths: Path) -> Path | None:
    for p in paths:
        if not p.exists():
            return p
    return None


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_ingest(args: argparse.Namespace) -> int:
    started = time.monotonic()
    inputs = [Path(args.input), Path(args.gazetteer)]
    if args.stopwords:
        inputs.append(Path(args.stopwords))
    if args.keywords:
        inputs.append(Path(args.keywords))
    missing = _require_files(*inputs)
    if missing is not None:
        return _fail(f"input file not found: {missing}", EXIT_USAGE)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        gazetteer = LocationIndex.from_csv(args.gazetteer)
    except ValueError as err:
        return _fail(str(err), EXIT_USAGE)
    stopwords = frozenset(load_wordlist(args.stopwords)) if args.stopwords else frozenset()
    keywords = load_wordlist(args.keywords) if args.keywords else DEFAULT_KEYWORDS
    if not keywords:
        return _fail("keyword list is empty", EXIT_USAGE)
    config = IngestConfig(
        keywords=tuple(keywords),
        stopwords=stopwords,
        bin_width=timedelta(days=7 if args.bin == "week" else 1),
        count_mode=args.count_mode,
        origin=date.fromisoformat(args.origin) if args.origin else None,
        bin_count=args.days,
    )
    try:
        with open(args.input, encoding="utf-8") as fh:
            result = build_corpus_tensor(fh, gazetteer, config)
    except EmptyCorpusError as err:
        return _fail(str(err), EXIT_EMPTY)

    write_tensor(result.tensor, outdir / "tensor.txt")
    artifact_names = write_corpus_artifacts(result, outdir) + ["tensor.txt"]
    _write_manifest(
        outdir,
        "ingest",
        {
            "bin": args.bin,
            "count_mode": args.count_mode,
            "origin": args.origin,
            "days": args.days,
            "keywords": sorted(keywords),
            "n_stopwords": len(stopwords),
        },
        inputs,
        artifact_names,
        seed=None,
        wall_seconds=time.monotonic() - started if args.timings else None,
    )
    print(
        f"ingest: kept {result.stats.kept}/{result.stats.read} tweets, "
        f"tensor {result.stats.dims[0]}x{result.stats.dims[1]}x{result.stats.dims[2]} "
        f"with {result.tensor.nnz} nonzeros"
    )
    return EXIT_OK


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(
        rank=args.rank,
        max_iters=args.max_iters,
        rel_tol=args.tol,
        seed=args.seed,
        algorithm=args.algo,
        sacd_threshold=args.sacd_threshold,
        refresh_every=args.refresh_every,
    )


def _cmd_factorize(args: argparse.Namespace) -> int:
    started = time.monotonic()
    tensor_path = Path(args.tensor)
    missing = _require_files(tensor_path)
    if missing is not None:
        return _fail(f"input file not found: {missing}", EXIT_USAGE)
    if args.rank < 1:
        return _fail(f"rank must be >= 1, got {args.rank}", EXIT_USAGE)
    if args.threads < 1:
        return _fail(f"threads must be >= 1, got {args.threads}", EXIT_USAGE)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        x = read_tensor(tensor_path)
        config = _solver_config(args)
    except ValueError as err:
        return _fail(str(err), EXIT_USAGE)
    try:
        model, trace = factorize(x, config)
    except ValueError as err:
        return _fail(str(err), EXIT_EMPTY if "empty" in str(err) else EXIT_USAGE)
    except SolverError as err:
        if err.trace is not None:
            write_trace(err.trace, outdir / "trace.csv", include_seconds=args.timings)
        return _fail(f"solver failed: {err}", EXIT_NUMERIC)

    write_model(
        model,
        outdir,
        meta={
            "algorithm": config.algorithm,
            "seed": config.seed,
            "iterations": trace.iterations,
            "final_objective": trace.final_objective,
            "converged": trace.converged,
            "events": trace.events,
            "source_tensor": str(tensor_path),
        },
    )
    write_trace(trace, outdir / "trace.csv", include_seconds=args.timings)
    _write_manifest(
        outdir,
        "factorize",
        {
            "rank": config.rank,
            "algo": config.algorithm,
            "max_iters": config.max_iters,
            "tol": config.rel_tol,
            "sacd_threshold": config.sacd_threshold,
            "refresh_every": config.refresh_every,
            "threads": args.threads,
        },
        [tensor_path],
        ["lambda.csv", "U.csv", "L.csv", "T.csv", "meta.json", "trace.csv"],
        seed=config.seed,
        wall_seconds=time.monotonic() - started if args.timings else None,
    )
    print(
        f"factorize[{config.algorithm}]: {trace.iterations} iterations, "
        f"final objective {trace.final_objective:.6g}"
    )
    return EXIT_OK


def _cmd_extract(args: argparse.Namespace) -> int:
    started = time.monotonic()
    model_dir = Path(args.model)
    indices_dir = Path(args.indices)
    if args.top_k < 1:
        return _fail(f"top-k must be >= 1, got {args.top_k}", EXIT_USAGE)
    needed = [
        model_dir / "lambda.csv",
        model_dir / "U.csv",
        model_dir / "L.csv",
        model_dir / "T.csv",
        model_dir / "meta.json",
        indices_dir / "terms.txt",
        indices_dir / "locations.csv",
        indices_dir / "timeaxis.json",
    ]
    missing = _require_files(*needed)
    if missing is not None:
        return _fail(f"input file not found: {missing}", EXIT_USAGE)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    model, _meta = read_model(model_dir)
    terms = read_terms(indices_dir / "terms.txt")
    locations = read_locations_csv(indices_dir / "locations.csv")
    timeaxis = read_timeaxis(indices_dir / "timeaxis.json")
    try:
        reports = build_reports(model, terms, locations, timeaxis, k=args.top_k)
    except ShapeError as err:
        return _fail(str(err), EXIT_USAGE)
    write_report_json(reports, outdir / "report.json")
    write_topics_csv(reports, outdir / "topics.csv")
    _write_manifest(
        outdir,
        "extract",
        {"top_k": args.top_k},
        needed,
        ["report.json", "topics.csv"],
        seed=None,
        wall_seconds=time.monotonic() - started if args.timings else None,
    )
    degenerate = sum(1 for r in reports if r.degenerate)
    print(f"extract: wrote {len(reports)} component reports ({degenerate} degenerate)")
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    started = time.monotonic()
    spec_path = Path(args.spec)
    missing = _require_files(spec_path)
    if missing is not None:
        return _fail(f"input file not found: {missing}", EXIT_USAGE)
    outdir = Path(args.out)
    try:
        spec = PlantedSpec.from_json(spec_path)
        if spec.emit_corpus:
            planted = plant_corpus(spec, outdir)
            summary = (
                f"synth: corpus with {planted.n_tweets} tweets, "
                f"{planted.total_tokens} token occurrences"
            )
            outputs = ["tweets.jsonl", "gazetteer.csv", "stopwords.txt", "keywords.txt", "spec.json"]
            if planted.expected_tensor is not None:
                outputs += ["tensor.txt", "expected", "truth_model"]
        else:
            _model, observation = plant_instance(spec, outdir)
            summary = (
                f"synth: tensor {observation.dims[0]}x{observation.dims[1]}x"
                f"{observation.dims[2]} with {observation.nnz} nonzeros"
            )
            outputs = ["tensor.txt", "truth_model", "spec.json"]
    except SpecError as err:
        return _fail(str(err), EXIT_USAGE)
    _write_manifest(
        outdir,
        "synth",
        spec.to_dict(),
        [spec_path],
        outputs,
        seed=spec.seed,
        wall_seconds=time.monotonic() - started if args.timings else None,
    )
    print(summary)
    return EXIT_OK


def _relative_error(objective: float, frob: float) -> float:
    return (objective / frob) ** 0.5 if frob > 0 else 0.0


def _cmd_bench(args: argparse.Namespace) -> int:
    from .tensor import format_float

    started = time.monotonic()
    planted_dir = Path(args.planted)
    tensor_path = planted_dir / "tensor.txt"
    truth_dir = planted_dir / "truth_model"
    missing = _require_files(tensor_path, truth_dir / "meta.json")
    if missing is not None:
        return _fail(f"planted directory incomplete: {missing} missing", EXIT_USAGE)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    x = read_tensor(tensor_path)
    truth, truth_meta = read_model(truth_dir)
    rank = args.rank if args.rank else truth.rank
    seed = args.seed if args.seed is not None else int(truth_meta.get("seed", 0))
    frob = frobenius_sq(x)

    rows = []
    cp_models = {}
    for algo in ("ccd", "sacd"):
        config = SolverConfig(
            rank=rank,
            max_iters=args.max_iters,
            rel_tol=args.tol,
            seed=seed,
            algorithm=algo,
            sacd_threshold=args.sacd_threshold,
            refresh_every=args.refresh_every,
        )
        t0 = time.monotonic()
        try:
            model, trace = factorize(x, config)
        except SolverError as err:
            return _fail(f"{algo} failed: {err}", EXIT_NUMERIC)
        seconds = time.monotonic() - t0
        cp_models[algo] = model
        fms = factor_match_score(truth, model) if truth.rank == rank else float("nan")
        rows.append(
            {
                "algorithm": algo,
                "final_rel_error": _relative_error(trace.final_objective, frob),
                "fms": fms,
                "iterations": trace.iterations,
                "seconds": seconds if args.timings else 0.0,
                "mean_active_fraction": trace.mean_active_fraction(after_iteration=5),
            }
        )
        write_model(
            model,
            outdir / f"model_{algo}",
            meta={"algorithm": algo, "seed": seed, "iterations": trace.iterations,
                  "final_objective": trace.final_objective, "converged": trace.converged,
                  "events": trace.events},
        )
        write_trace(trace, outdir / f"trace_{algo}.csv", include_seconds=args.timings)

    nmf_models = {}
    for name, flat in (("nmf_time", flatten_time(x)), ("nmf_loc", flatten_location(x))):
        config = SolverConfig(
            rank=rank, max_iters=args.max_iters, rel_tol=args.tol, seed=seed, algorithm="ccd"
        )
        t0 = time.monotonic()
        try:
            nm, trace = nmf_factorize(flat, config)
        except SolverError as err:
            return _fail(f"{name} failed: {err}", EXIT_NUMERIC)
        seconds = time.monotonic() - t0
        nmf_models[name] = nm
        flat_frob = float(sum(v * v for v in flat.values))
        rows.append(
            {
                "algorithm": name,
                "final_rel_error": _relative_error(trace.final_objective, flat_frob),
                "fms": "",
                "iterations": trace.iterations,
                "seconds": seconds if args.timings else 0.0,
                "mean_active_fraction": trace.mean_active_fraction(after_iteration=5),
            }
        )
        write_nmf_model(nm, outdir / f"model_{name}", meta={"seed": seed})

    lines = ["algorithm,final_rel_error,fms,iterations,seconds,mean_active_fraction"]
    for row in rows:
        fms = row["fms"]
        lines.append(
            ",".join(
                [
                    row["algorithm"],
                    format_float(row["final_rel_error"]),
                    format_float(fms) if fms != "" else "",
                    str(row["iterations"]),
                    format_float(row["seconds"]),
                    format_float(row["mean_active_fraction"]),
                ]
            )
        )
    (outdir / "bench.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    association = None
    if truth.rank == rank:
        association = association_loss_report(
            cp_models["ccd"], nmf_models["nmf_time"], nmf_models["nmf_loc"], truth
        )
        _write_json_atomic(association.to_dict(), outdir / "association.json")

    _write_manifest(
        outdir,
        "bench",
        {
            "rank": rank,
            "max_iters": args.max_iters,
            "tol": args.tol,
            "sacd_threshold": args.sacd_threshold,
            "refresh_every": args.refresh_every,
        },
        [tensor_path, truth_dir / "meta.json"],
        ["bench.csv"] + (["association.json"] if association else []),
        seed=seed,
        wall_seconds=time.monotonic() - started if args.timings else None,
    )
    for row in rows:
        print(
            f"bench[{row['algorithm']}]: rel_error={row['final_rel_error']:.4g} "
            f"fms={row['fms'] if row['fms'] != '' else 'n/a'} iters={row['iterations']}"
        )
    if association is not None:
        print(
            f"bench[association]: ntf_all_match={association.ntf_all_match} "
            f"nmf_mismatches={association.nmf_mismatch_count}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geotopics",
        description="Spatio-temporal topic patterns from short-text corpora via "
        "sparse nonnegative tensor factorization.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common_timing = argparse.ArgumentParser(add_help=False)
    common_timing.add_argument(
        "--timings",
        action="store_true",
        help="record real wall-clock seconds in outputs (breaks byte-for-byte "
        "reproducibility of reruns)",
    )

    p_ingest = sub.add_parser(
        "ingest", parents=[common_timing], help="build the count tensor from a tweet corpus"
    )
    p_ingest.add_argument("--input", required=True, help="JSON-lines tweet file")
    p_ingest.add_argument("--gazetteer", required=True, help="CSV of name,canonical_id,lat,lon")
    p_ingest.add_argument("--out", required=True, help="output directory")
    p_ingest.add_argument("--stopwords", help="stopword list, one word per line")
    p_ingest.add_argument("--keywords", help="tracking keywords, one per line (default: built-in list)")
    p_ingest.add_argument("--bin", choices=("day", "week"), default="day", help="time bin width")
    p_ingest.add_argument(
        "--count-mode",
        choices=("occurrence", "binary"),
        default="occurrence",
        help="count every token occurrence, or once per distinct term per tweet",
    )
    p_ingest.add_argument("--origin", help="fix the time axis origin (YYYY-MM-DD; default: derived)")
    p_ingest.add_argument("--days", type=int, help="fix the number of time bins (default: derived)")
    p_ingest.set_defaults(func=_cmd_ingest)

    p_fact = sub.add_parser(
        "factorize", parents=[common_timing], help="fit a nonnegative CP model to a tensor file"
    )
    p_fact.add_argument("--tensor", required=True, help="COO tensor file")
    p_fact.add_argument("--rank", type=int, required=True, help="number of components")
    p_fact.add_argument("--algo", choices=("ccd", "sacd"), default="ccd")
    p_fact.add_argument("--seed", type=int, required=True, help="initialization seed")
    p_fact.add_argument("--out", required=True)
    p_fact.add_argument("--max-iters", type=int, default=200)
    p_fact.add_argument("--tol", type=float, default=1e-4, help="relative objective-change stop")
    p_fact.add_argument("--sacd-threshold", type=float, default=0.01)
    p_fact.add_argument("--refresh-every", type=int, default=10)
    p_fact.add_argument(
        "--threads",
        type=int,
        default=1,
        help="cap on kernel worker threads; kernels are deterministic streaming "
        "loops, so outputs are identical for any value",
    )
    p_fact.set_defaults(func=_cmd_factorize)

    p_extract = sub.add_parser(
        "extract", parents=[common_timing], help="export per-component pattern reports"
    )
    p_extract.add_argument("--model", required=True, help="model directory from factorize")
    p_extract.add_argument("--indices", required=True, help="index directory from ingest")
    p_extract.add_argument("--top-k", type=int, default=10, help="topic terms per component")
    p_extract.add_argument("--out", required=True)
    p_extract.set_defaults(func=_cmd_extract)

    p_synth = sub.add_parser(
        "synth", parents=[common_timing], help="generate a planted instance (and corpus)"
    )
    p_synth.add_argument("--spec", required=True, help="planted-spec JSON file")
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=_cmd_synth)

    p_bench = sub.add_parser(
        "bench",
        parents=[common_timing],
        help="run ccd, sacd and the NMF arms on a planted directory",
    )
    p_bench.add_argument("--planted", required=True, help="directory from synth")
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--rank", type=int, help="override rank (default: truth rank)")
    p_bench.add_argument("--seed", type=int, help="solver seed (default: planted seed)")
    p_bench.add_argument("--max-iters", type=int, default=200)
    p_bench.add_argument("--tol", type=float, default=1e-4)
    p_bench.add_argument("--sacd-threshold", type=float, default=0.01)
    p_bench.add_argument("--refresh-every", type=int, default=10)
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        return _fail(str(err), EXIT_USAGE)


def console_main() -> None:
    raise SystemExit(main())
