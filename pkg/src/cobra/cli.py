"""Command-line interface.

Subcommands:

* ``score``      predictions -> per-subject (or per-group) scores
* ``correlate``  scores + assessments -> correlation report (+ strata)
* ``fid``        feature files -> per-subject distances + correlation
* ``simulate``   synthetic cohort files from a config
* ``train``      labeled vectors -> model checkpoint
* ``predict``    checkpoint + vectors -> predictions (+ features)
* ``report``     predictions + assessments -> consolidated report + figures

Exit codes: 0 success, 2 malformed input, 3 scoring policy error,
4 statistical degeneracy. The ``COBRA_SEED`` environment variable supplies
the default seed wherever ``--seed`` is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    ClassSet,
    _fmt,
    _write_csv,
    partition_by_subject,
    read_assessments,
    read_features,
    read_labeled_vectors,
    read_predictions,
    read_scores,
    read_strata,
    write_assessments,
    write_labeled_vectors,
    write_predictions,
    write_scores,
    write_strata,
)
from .errors import CobraError, InputError
from .fid import REFERENCE_ID, FeatureSet, fid_distances, fid_report
from .manifest import build_manifest, write_json
from .refmodel import TrainConfig, load_model, predict_dataset, save_model, train
from .report import build_report, bundle_to_json
from .scoring import MissingPolicy, ScoreConfig, cobra_by_group, cohort_scores
from .stats import CiMethod, correlate_scores, stratified_correlation
from .synth import ConfounderConfig, SynthConfig, cohort_test_vectors, generate_cohort

SEED_ENV = "COBRA_SEED"


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _resolve_seed(cli_value: int | None, fallback: int) -> int:
    if cli_value is not None:
        return cli_value
    env = _env_seed()
    return env if env is not None else fallback


def _parse_class_list(raw: str, class_set_names: tuple[str, ...] | None, k: int) -> frozenset[int]:
    tokens = [t for t in (piece.strip() for piece in raw.split(",")) if t]
    if not tokens:
        raise InputError("empty class list")
    helper = ClassSet(k, frozenset(range(k)), class_set_names)
    return helper.resolve(tokens)


def _parse_names(raw: str | None) -> tuple[str, ...] | None:
    if raw is None:
        return None
    names = tuple(t.strip() for t in raw.split(","))
    if any(not n for n in names):
        raise InputError("empty class name")
    return names


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ci_method(raw: str) -> CiMethod:
    return CiMethod.FISHER_Z if raw == "fisher" else CiMethod.BOOTSTRAP


def _report_json(report) -> dict | None:
    if report is None:
        return None
    return {
        "rho": report.rho,
        "n": report.n,
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "ci_method": report.ci_method.value,
        "level": report.level,
    }


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_score(args) -> int:
    records = read_predictions(args.predictions)
    if not records:
        raise InputError(f"{args.predictions}: no data rows")
    k = records[0].k
    names = _parse_names(args.class_names)
    relevant = _parse_class_list(args.relevant, names, k)
    class_set = ClassSet(k, relevant, names)
    policy = MissingPolicy(args.missing_policy)
    cfg = ScoreConfig(class_set, policy)
    datasets = partition_by_subject(records)
    out = _out_dir(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scores = cohort_scores(datasets, cfg)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    write_scores(out / "scores.csv", scores)
    by_group_counts: dict[str, int] = {}
    if args.by_group:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            grouped = cobra_by_group(datasets, cfg)
        rows = [
            (group, score)
            for group in sorted(grouped)
            for score in grouped[group]
        ]
        write_scores(out / "scores_by_group.csv", [], grouped=rows)
        by_group_counts = {group: len(grouped[group]) for group in sorted(grouped)}
    manifest = build_manifest(
        "score",
        {
            "predictions": str(args.predictions),
            "relevant": sorted(relevant),
            "class_names": list(names) if names else None,
            "missing_policy": policy.value,
            "by_group": bool(args.by_group),
        },
        [args.predictions],
        seed=None,
    )
    present = [s.score for s in scores if s.score is not None]
    write_json(
        out / "score_report.json",
        {
            "manifest": manifest,
            "n_subjects": len(scores),
            "n_missing": sum(1 for s in scores if s.score is None),
            "score_min": min(present) if present else None,
            "score_mean": float(np.mean(present)) if present else None,
            "score_max": max(present) if present else None,
            "by_group": by_group_counts or None,
        },
    )
    return 0


def cmd_correlate(args) -> int:
    scores = read_scores(args.scores)
    assess = read_assessments(args.assessments)
    method = _ci_method(args.ci)
    seed = _resolve_seed(args.seed, 0)
    result = correlate_scores(scores, assess, method, args.level, args.iters, seed)
    out = _out_dir(args)
    _write_csv(
        out / "scatter_pairs.csv",
        [["subject_id", "score", "clinical_score"]]
        + [[sid, _fmt(x), _fmt(y)] for sid, x, y in result.pairs],
    )
    payload: dict = {
        "correlation": _report_json(result.report),
        "n_pairs": len(result.pairs),
        "dropped_missing": result.dropped_missing,
        "dropped_unmatched": result.dropped_unmatched,
    }
    inputs = [args.scores, args.assessments]
    if args.strata:
        strata = read_strata(args.strata)
        inputs.append(args.strata)
        stratified = stratified_correlation(
            result.pairs, strata, method, args.level, args.iters, seed
        )
        payload["stratified"] = {
            "pooled": _report_json(stratified.pooled),
            "per_stratum": {
                stratum: _report_json(rep)
                for stratum, rep in sorted(stratified.per_stratum.items())
            },
            "skipped": dict(sorted(stratified.skipped.items())),
        }
    payload["manifest"] = build_manifest(
        "correlate",
        {
            "scores": str(args.scores),
            "assessments": str(args.assessments),
            "strata": str(args.strata) if args.strata else None,
            "ci": method.value,
            "level": args.level,
            "iters": args.iters,
        },
        inputs,
        seed=seed,
    )
    write_json(out / "correlation.json", payload)
    return 0


def cmd_fid(args) -> int:
    ref_rows = read_features(args.reference)
    if not ref_rows:
        raise InputError(f"{args.reference}: no data rows")
    reference = FeatureSet(REFERENCE_ID, np.vstack(list(ref_rows.values())))
    subj_rows = read_features(args.subjects)
    if not subj_rows:
        raise InputError(f"{args.subjects}: no data rows")
    subjects = [FeatureSet(sid, rows) for sid, rows in subj_rows.items()]
    assess = read_assessments(args.assessments)
    method = _ci_method(args.ci)
    seed = _resolve_seed(args.seed, 0)
    out = _out_dir(args)
    # distances land on disk before the correlation, which can legitimately
    # fail on degenerate cohorts (every subject identical to the reference)
    distances = fid_distances(reference, subjects)
    _write_csv(
        out / "fid_distances.csv",
        [["subject_id", "distance"]] + [[sid, _fmt(d)] for sid, d in distances],
    )
    result = fid_report(
        reference, subjects, assess, method, args.level, args.iters, seed,
        distances=distances,
    )
    write_json(
        out / "fid.json",
        {
            "manifest": build_manifest(
                "fid",
                {
                    "reference": str(args.reference),
                    "subjects": str(args.subjects),
                    "assessments": str(args.assessments),
                    "ci": method.value,
                    "level": args.level,
                    "iters": args.iters,
                },
                [args.reference, args.subjects, args.assessments],
                seed=seed,
            ),
            "reference_rows": reference.n,
            "correlation": _report_json(result.report),
            "n_pairs": len(result.pairs),
            "dropped_unmatched": result.dropped_unmatched,
        },
    )
    return 0


def _synth_config_from_file(path: str | None, seed_flag: int | None) -> SynthConfig:
    kwargs: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise InputError(f"{path}: config must be a JSON object")
        known = {
            "k", "d_in", "relevant", "class_mean_scale", "class_means",
            "sigma", "points_per_subject", "train_subjects",
            "subjects_per_level", "severity_grid", "confounder",
            "degrade_all_classes", "seed",
        }
        unknown = sorted(set(raw) - known)
        if unknown:
            raise InputError(f"{path}: unknown config keys {unknown}")
        kwargs.update(raw)
    if "relevant" in kwargs:
        kwargs["relevant"] = frozenset(int(v) for v in kwargs["relevant"])
    if "severity_grid" in kwargs:
        kwargs["severity_grid"] = tuple(float(v) for v in kwargs["severity_grid"])
    if "class_means" in kwargs and kwargs["class_means"] is not None:
        kwargs["class_means"] = tuple(tuple(row) for row in kwargs["class_means"])
    if kwargs.get("confounder") is not None:
        conf = kwargs["confounder"]
        if not isinstance(conf, dict) or set(conf) != {"magnitude", "fraction"}:
            raise InputError(
                "confounder config needs exactly the keys magnitude and fraction"
            )
        kwargs["confounder"] = ConfounderConfig(
            float(conf["magnitude"]), float(conf["fraction"])
        )
    if seed_flag is not None:
        kwargs["seed"] = seed_flag
    elif "seed" not in kwargs:
        env = _env_seed()
        if env is not None:
            kwargs["seed"] = env
    try:
        return SynthConfig(**kwargs)
    except TypeError as exc:
        raise InputError(f"bad config: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = _synth_config_from_file(args.config, args.seed)
    cohort = generate_cohort(cfg)
    out = _out_dir(args)
    write_labeled_vectors(
        out / "healthy_train.csv",
        cohort.healthy_train.subjects,
        cohort.healthy_train.x,
        cohort.healthy_train.labels,
    )
    test = cohort_test_vectors(cohort)
    write_labeled_vectors(out / "test_vectors.csv", test.subjects, test.x, test.labels)
    write_assessments(out / "assessments.csv", cohort.assessments)
    write_strata(out / "strata.csv", cohort.strata)
    _write_csv(
        out / "severities.csv",
        [["subject_id", "severity"]]
        + [[sid, _fmt(sev)] for sid, sev in cohort.severities.items()],
    )
    write_json(
        out / "simulate_manifest.json",
        {
            "manifest": build_manifest(
                "simulate",
                {"config": str(args.config) if args.config else None,
                 "resolved": cfg},
                [args.config] if args.config else [],
                seed=cfg.seed,
            ),
            "n_train_subjects": cfg.train_subjects,
            "n_test_subjects": len(cohort.subjects),
            "points_per_subject": cfg.points_per_subject,
            "severity_grid": list(cfg.severity_grid),
        },
    )
    return 0


def cmd_train(args) -> int:
    data = read_labeled_vectors(args.vectors)
    y = data.require_labels()
    seed = _resolve_seed(args.seed, 0)
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=seed,
        init_scale=args.init_scale,
        hidden=args.hidden,
    )
    history: list[float] = []
    model = train(data.x, y, cfg, k=args.k, loss_history=history)
    out = _out_dir(args)
    save_model(out / "model.json", model)
    write_json(
        out / "train_report.json",
        {
            "manifest": build_manifest(
                "train",
                {"vectors": str(args.vectors), "config": cfg,
                 "k": args.k},
                [args.vectors],
                seed=seed,
            ),
            "sizes": list(model.sizes),
            "n_rows": int(data.x.shape[0]),
            "steps": len(history),
            "initial_loss": history[0],
            "final_loss": history[-1],
        },
    )
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = read_labeled_vectors(args.vectors)
    records, feature_sets = predict_dataset(model, data)
    out = _out_dir(args)
    write_predictions(out / "predictions.csv", records)
    feature_rows = [["subject_id"] + [f"f_{i}" for i in range(model.hidden)]]
    for fs in feature_sets:
        for vec in fs.rows:
            feature_rows.append([fs.subject_id] + [_fmt(v) for v in vec])
    _write_csv(out / "features.csv", feature_rows)
    write_json(
        out / "predict_manifest.json",
        {
            "manifest": build_manifest(
                "predict",
                {"model": str(args.model), "vectors": str(args.vectors)},
                [args.model, args.vectors],
                seed=None,
            ),
            "n_records": len(records),
            "sizes": list(model.sizes),
        },
    )
    return 0


def cmd_report(args) -> int:
    records = read_predictions(args.predictions)
    if not records:
        raise InputError(f"{args.predictions}: no data rows")
    k = records[0].k
    names = _parse_names(args.class_names)
    relevant = _parse_class_list(args.relevant, names, k)
    class_set = ClassSet(k, relevant, names)
    assess = read_assessments(args.assessments)
    strata = read_strata(args.strata) if args.strata else None
    method = _ci_method(args.ci)
    seed = _resolve_seed(args.seed, 0)
    bundle = build_report(
        records, assess, class_set, strata, method, args.level, args.iters, seed
    )
    out = _out_dir(args)
    inputs = [args.predictions, args.assessments]
    if args.strata:
        inputs.append(args.strata)
    manifest = build_manifest(
        "report",
        {
            "predictions": str(args.predictions),
            "assessments": str(args.assessments),
            "strata": str(args.strata) if args.strata else None,
            "relevant": sorted(relevant),
            "class_names": list(names) if names else None,
            "ci": method.value,
            "level": args.level,
            "iters": args.iters,
            "figures": not args.no_figures,
        },
        inputs,
        seed=seed,
    )
    write_json(out / "report.json", bundle_to_json(bundle, manifest))
    _write_csv(
        out / "scatter.csv",
        [["subject_id", "score", "clinical_score"]]
        + [[sid, _fmt(x), _fmt(y)] for sid, x, y in bundle.cobra.pairs],
    )
    if bundle.density is not None:
        _write_csv(
            out / "density.csv",
            [["x", "density"]]
            + [
                [_fmt(x), _fmt(d)]
                for x, d in zip(bundle.density.grid, bundle.density.density)
            ],
        )
    per_group_rows = [["group", "n_subjects", "n_pairs", "rho", "ci_low", "ci_high", "note"]]
    for row in bundle.per_group:
        if row.report is None:
            per_group_rows.append(
                [row.group, str(row.n_subjects), str(row.n_pairs), "", "", "", row.note or ""]
            )
        else:
            per_group_rows.append(
                [row.group, str(row.n_subjects), str(row.n_pairs),
                 _fmt(row.report.rho), _fmt(row.report.ci_low),
                 _fmt(row.report.ci_high), ""]
            )
    _write_csv(out / "per_group.csv", per_group_rows)
    if not args.no_figures:
        from .figures import render_all

        render_all(bundle, out)
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_ci_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ci", choices=("fisher", "bootstrap"), default="fisher",
                   help="confidence interval method (default: fisher)")
    p.add_argument("--level", type=float, default=0.95,
                   help="confidence level (default: 0.95)")
    p.add_argument("--iters", type=int, default=2000,
                   help="bootstrap iterations (default: 2000)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (default: ${SEED_ENV} or 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cobra",
        description="Confidence-based anomaly scoring and evaluation pipeline",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="per-subject scores from a predictions file")
    p.add_argument("predictions")
    p.add_argument("--relevant", required=True,
                   help="comma-separated relevant class indices or names")
    p.add_argument("--class-names", default=None,
                   help="comma-separated class names (enables names in --relevant)")
    p.add_argument("--by-group", action="store_true",
                   help="also write per-group scores")
    p.add_argument("--missing-policy",
                   choices=tuple(m.value for m in MissingPolicy),
                   default=MissingPolicy.EXCLUDE_SUBJECT.value)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("correlate", help="correlate scores with assessments")
    p.add_argument("scores")
    p.add_argument("assessments")
    p.add_argument("--strata", default=None, help="strata CSV for stratified reports")
    _add_ci_flags(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("fid", help="Fréchet distances to a healthy reference")
    p.add_argument("--reference", required=True, help="reference features CSV")
    p.add_argument("subjects", help="subject features CSV")
    p.add_argument("assessments")
    _add_ci_flags(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_fid)

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the reference classifier")
    p.add_argument("vectors", help="labeled vectors CSV")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--init-scale", type=float, default=1.0)
    p.add_argument("--k", type=int, default=None,
                   help="class count (default: max label + 1)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predictions + features from a checkpoint")
    p.add_argument("model", help="model checkpoint JSON")
    p.add_argument("vectors", help="labeled vectors CSV")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="consolidated report with figures")
    p.add_argument("predictions")
    p.add_argument("assessments")
    p.add_argument("--relevant", required=True)
    p.add_argument("--class-names", default=None)
    p.add_argument("--strata", default=None)
    _add_ci_flags(p)
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CobraError as exc:
        print(f"cobra {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
