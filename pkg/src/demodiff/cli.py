"""Command-line interface.

Exit codes: 0 success, 1 usage or validation error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .audit import (AuditConfig, identification_searches, run_identification_audit,
                    run_quality_audit, run_sensitivity, run_summary_audit, run_verification_audit)
from .core import calibrate_threshold_fmr, parse_group, parse_pairs
from .diagnostics import MODES as FLIP_MODES
from .errors import ConfigError, DataError, NumericError
from .io import (ingest, read_summaries, write_embeddings, write_quality, write_scores,
                 write_subjects)
from .openset import calibrate_threshold_fnir
from .report import FORMATS, AuditReport, schema_json
from .resample import BootstrapConfig, CoarseBootstrapWarning
from .synth import GroupScoreModel, default_models, generate, generate_embeddings

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _group(text):
    try:
        return parse_group(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _pairs(text):
    try:
        return tuple(parse_pairs(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _formats(text):
    out = [f.strip() for f in text.split(",") if f.strip()]
    if "all" in out:
        return list(FORMATS)
    bad = [f for f in out if f not in FORMATS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"formats must be drawn from {','.join(FORMATS)} or 'all'")
    return out


def _add_threshold(p, fmr=True, fnir=False):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=float, help="fixed decision threshold")
    if fmr:
        g.add_argument("--target-fmr", type=float, help="calibrate the threshold to this FMR")
    if fnir:
        g.add_argument("--target-fnir", type=float, help="calibrate the threshold to this FNIR")
        p.add_argument("--ref-group", type=_group, help="group whose FNIR is calibrated (e.g. WM)")


def _add_common(p):
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--bootstrap-m", type=int, default=10, help="bootstrap replicates (default 10)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--unit", choices=("subject", "comparison"), default="subject",
                   help="bootstrap resampling unit (default subject)")
    p.add_argument("--pairs", type=_pairs, help="comma-separated pairs, e.g. WF:WM,B:W")
    p.add_argument("--workers", type=int, default=None,
                   help="threads for bootstrap replicates; does not change results")


def _add_output(p):
    p.add_argument("--out", type=Path, help="output directory; JSON goes to stdout if omitted")
    p.add_argument("--format", type=_formats, default=["json"],
                   help=f"comma-separated subset of {','.join(FORMATS)}, or 'all' (default json)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="demodiff", description="Statistical audits of demographic differentials "
                     "in biometric recognition.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify", help="verification audit: bootstrap TMR, Welch tests, ANOVA")
    p.add_argument("--scores", type=Path, help="scores.csv")
    p.add_argument("--subjects", type=Path, help="subjects.csv")
    p.add_argument("--quality", type=Path, help="quality.csv (optional)")
    p.add_argument("--summaries", type=Path,
                   help="pre-aggregated group,mean,std,m rows instead of raw scores")
    _add_threshold(p)
    _add_common(p)
    p.add_argument("--flip-mode", choices=FLIP_MODES + ("none",), default="point_z",
                   help="minimal-flip diagnostic mode (default point_z)")
    p.add_argument("--no-two-prop", action="store_true", help="skip z tests on point estimates")
    p.add_argument("--permissive", action="store_true",
                   help="skip malformed rows (counted in the report) instead of aborting")
    _add_output(p)

    p = sub.add_parser("ident", help="open-set identification audit: FPIR per group")
    p.add_argument("--embeddings", type=Path, required=True, help="embeddings.jsonl")
    p.add_argument("--subjects", type=Path, required=True, help="subjects.csv")
    _add_threshold(p, fmr=False, fnir=True)
    _add_common(p)
    p.add_argument("--rank", type=int, default=5, help="candidate list length R (default 5)")
    p.add_argument("--n-mates", type=int, help="mated probes per audited group (default half)")
    p.add_argument("--per-group", type=int, help="subjects sampled per group (default smallest group)")
    p.add_argument("--sweep-points", type=int, default=50, help="thresholds in the FPIR/FNIR sweep")
    _add_output(p)

    p = sub.add_parser("calibrate", help="print the threshold for a target FMR or FNIR")
    p.add_argument("--scores", type=Path)
    p.add_argument("--subjects", type=Path, required=True)
    p.add_argument("--embeddings", type=Path)
    _add_threshold(p, fnir=True)
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--n-mates", type=int)
    p.add_argument("--per-group", type=int)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-subjects", type=int, default=100, help="subjects per group")
    p.add_argument("--samples", type=int, default=3, help="samples per subject")
    p.add_argument("--outlier-fraction", type=float, default=0.0)
    p.add_argument("--models", type=Path, help="JSON list of per-group model objects")
    p.add_argument("--embeddings", action="store_true", help="also write embeddings.jsonl")
    p.add_argument("--dim", type=int, default=192, help="embedding dimension")
    p.add_argument("--n-distractors", type=int, default=0)

    p = sub.add_parser("sensitivity", help="minimal score flips that erase each differential")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--subjects", type=Path, required=True)
    _add_threshold(p)
    _add_common(p)
    p.add_argument("--mode", choices=FLIP_MODES + ("both",), default="point_z")
    _add_output(p)

    p = sub.add_parser("quality", help="per-group quality distributions and tests")
    p.add_argument("--quality", type=Path, required=True)
    p.add_argument("--subjects", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scores", type=Path, help="scores.csv giving the sample to subject map")
    src.add_argument("--embeddings", type=Path, help="embeddings.jsonl giving the sample to subject map")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=_pairs)
    p.add_argument("--equal-n", type=int, help="subsample every group to this many samples")
    p.add_argument("--bins", type=int, default=20)
    _add_output(p)

    p = sub.add_parser("report", help="re-emit a JSON report in other formats, or print the schema")
    p.add_argument("input", type=Path, nargs="?", help="report.json")
    p.add_argument("--schema", action="store_true", help="print the report JSON schema")
    _add_output(p)
    return parser


def _bootstrap(args) -> BootstrapConfig:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseBootstrapWarning)
        return BootstrapConfig(m=args.bootstrap_m, seed=args.seed, unit=args.unit)


def _emit(report: AuditReport, args):
    if args.out is None:
        if args.format != ["json"]:
            raise ConfigError("--format other than json needs --out")
        sys.stdout.write(report.to_json())
        return
    for path in report.emit(args.out, args.format):
        print(path)


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise ConfigError(f"--{n.replace('_', '-')} is required")


def _cmd_verify(args):
    if args.summaries is not None:
        if args.scores is not None:
            raise ConfigError("give either --summaries or --scores, not both")
        summaries, info = read_summaries(args.summaries)
        config = AuditConfig(mode="summaries", pairs=args.pairs, alpha=args.alpha,
                             bootstrap=_bootstrap(args))
        _emit(run_summary_audit(config, summaries, (info,)), args)
        return
    _require(args, "scores", "subjects")
    data = ingest(args.subjects, args.scores, args.quality, permissive=args.permissive)
    config = AuditConfig(
        mode="verify", threshold=args.threshold, target_fmr=args.target_fmr, pairs=args.pairs,
        alpha=args.alpha, bootstrap=_bootstrap(args), two_prop=not args.no_two_prop,
        flip_mode=None if args.flip_mode == "none" else args.flip_mode,
    )
    _emit(run_verification_audit(config, data, workers=args.workers), args)


def _ident_config(args, **extra):
    return AuditConfig(
        mode="ident", threshold=args.threshold, target_fnir=args.target_fnir, ref_group=args.ref_group,
        rank=args.rank, n_mates=args.n_mates, per_group=args.per_group, **extra)


def _cmd_ident(args):
    data = ingest(args.subjects, embeddings=args.embeddings)
    config = _ident_config(args, pairs=args.pairs, alpha=args.alpha, bootstrap=_bootstrap(args),
                           sweep_points=args.sweep_points)
    _emit(run_identification_audit(config, data, workers=args.workers), args)


def _cmd_calibrate(args):
    if args.target_fmr is not None:
        _require(args, "scores")
        data = ingest(args.subjects, args.scores)
        cal = calibrate_threshold_fmr(data.scores.impostor_scores(), args.target_fmr)
        out = {"threshold": cal.threshold, "target_fmr": cal.target_fmr,
               "achieved_fmr": cal.achieved_fmr, "n_impostor": cal.n_impostor}
    elif args.target_fnir is not None:
        _require(args, "embeddings", "ref_group")
        data = ingest(args.subjects, embeddings=args.embeddings)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CoarseBootstrapWarning)
            config = _ident_config(args, bootstrap=BootstrapConfig(seed=args.seed))
        searches = identification_searches(config, data.subjects, data.embeddings,
                                           data.embeddings.sample_subjects())
        if args.ref_group not in searches:
            raise ConfigError(f"reference group {args.ref_group.code} has no identification cohort")
        cal = calibrate_threshold_fnir(searches[args.ref_group].mated, args.target_fnir, args.rank)
        out = {"threshold": cal.threshold, "target_fnir": cal.target_fnir,
               "achieved_fnir": cal.achieved_fnir, "floor": cal.rank_floor, "rank": cal.rank,
               "n_mated": cal.n_searches}
    else:
        raise ConfigError("calibrate needs --target-fmr or --target-fnir")
    print(json.dumps(out, sort_keys=True, allow_nan=True))


def _cmd_synth(args):
    if args.models is not None:
        try:
            raw = json.loads(args.models.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read model file: {exc}", file=args.models) from None
        if not isinstance(raw, list):
            raise DataError("model file must hold a JSON list", file=args.models)
        models = [GroupScoreModel.from_dict(d) for d in raw]
    else:
        models = default_models(args.n_subjects, samples_per_subject=args.samples,
                                outlier_fraction=args.outlier_fraction)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    data = generate(models, args.seed)
    written = [
        write_subjects(out / "subjects.csv", data.score_set.subjects),
        write_scores(out / "scores.csv", data.score_set),
        write_quality(out / "quality.csv", data.quality),
    ]
    provenance = {"scores": data.provenance}
    if args.embeddings:
        emb = generate_embeddings(models, args.seed, dim=args.dim, n_distractors=args.n_distractors)
        written.append(write_embeddings(out / "embeddings.jsonl", emb.store))
        provenance["embeddings"] = emb.provenance
    prov = out / "provenance.json"
    prov.write_text(json.dumps(provenance, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    written.append(prov)
    for path in written:
        print(path)


def _cmd_sensitivity(args):
    data = ingest(args.subjects, args.scores)
    modes = list(FLIP_MODES) if args.mode == "both" else [args.mode]
    config = AuditConfig(mode="verify", threshold=args.threshold, target_fmr=args.target_fmr,
                         pairs=args.pairs, alpha=args.alpha, bootstrap=_bootstrap(args),
                         flip_mode=modes[0])
    _emit(run_sensitivity(config, data, modes=modes), args)


def _cmd_quality(args):
    data = ingest(args.subjects, args.scores, args.quality, args.embeddings)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseBootstrapWarning)
        config = AuditConfig(mode="summaries", pairs=args.pairs, alpha=args.alpha,
                             bootstrap=BootstrapConfig(seed=args.seed),
                             quality_equal_n=args.equal_n, quality_bins=args.bins)
    _emit(run_quality_audit(config, data), args)


def _cmd_report(args):
    if args.schema:
        sys.stdout.write(schema_json())
        return
    if args.input is None:
        raise ConfigError("report needs an input JSON file or --schema")
    try:
        text = args.input.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read: {exc.strerror}", file=args.input) from None
    _emit(AuditReport.from_json(text), args)


COMMANDS = {
    "verify": _cmd_verify,
    "ident": _cmd_ident,
    "calibrate": _cmd_calibrate,
    "synth": _cmd_synth,
    "sensitivity": _cmd_sensitivity,
    "quality": _cmd_quality,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"demodiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"demodiff: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"demodiff: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"demodiff: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
