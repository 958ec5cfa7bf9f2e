"""Staged command-line pipeline.

    rehabscore synth     --out data/        (bundled synthetic demo dataset)
    rehabscore segment   --manifest data/manifest.json --out run/
    rehabscore featurize --repetitions run/repetitions --out run/
    rehabscore train     --matrix run/features_position_vr.csv --out run/
    rehabscore evaluate  --repetitions run/repetitions --out run/
    rehabscore predict   --model run/models/ex1_gbdt.json --input run/features_position_vr.csv

Stages hand off through files so external models can consume the same
repetition archives and feature matrices. Exit codes: 0 ok, 2 input or
config error, 3 empty result, 4 external-prediction join failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .archive import ArchiveError, load_archive, write_archive
from .core import (
    DEFAULT_JOINT_MAP,
    JointMap,
    JointSelection,
    RehabScoreError,
    StreamKind,
)
from .evaluate import (
    ModelKind,
    SplitSpec,
    SplitUnit,
    emit_report,
    load_external_predictions,
    run_matrix,
)
from .features import (
    FeatureConfig,
    FeatureConfigError,
    config_from_dict,
    extract_matrix,
    named_config,
    read_feature_matrix,
    write_feature_matrix,
)
from .ingest import IngestLog, load_all, load_manifest
from .models import (
    BaselineModel,
    GbdtModel,
    GbdtParams,
    fit_baseline,
    fit_gbdt,
    load_model,
    predict_gbdt,
    save_model,
)
from .preprocess import (
    FilterSpec,
    NoRepetitionsError,
    SegmentationConfig,
    resample_repetition,
    split_repetitions,
    write_peak_diagnostics,
)
from .synthetic import SyntheticSpec, generate_dataset

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EMPTY = 3
EXIT_JOIN = 4

_EXIT_FOR_CODE = {
    "NO_REPETITIONS": EXIT_EMPTY,
    "EMPTY_INPUT": EXIT_EMPTY,
    "MISSING_EXTERNAL_PREDICTION": EXIT_JOIN,
}

_NAMED_FEATURE_CONFIGS = ("paper44", "full56")


class ConfigError(RehabScoreError):
    code = "CONFIG_INVALID"


@dataclass(frozen=True)
class RunConfig:
    """Fully validated settings for one command invocation.

    Built by merging --config file values (if any) under the command-line
    flags, before any output is touched.
    """

    segmentation: SegmentationConfig
    filter_spec: FilterSpec
    gbdt: GbdtParams
    split: SplitSpec
    features: str
    out: Path
    exercise: "int | None"
    stream: "StreamKind | None"
    selection: "JointSelection | None"
    verbose: bool


_CONFIG_FILE_KEYS = {"segmentation", "filter", "gbdt", "split"}
_SPLIT_KEYS = {"test_fraction", "seed", "unit"}


def _load_config_file(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path} ({exc})")
    except ValueError as exc:
        raise ConfigError(f"config file {path} is not valid JSON ({exc})")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(data) - _CONFIG_FILE_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def build_run_config(args) -> RunConfig:
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)

    try:
        segmentation = SegmentationConfig.from_dict(file_cfg.get("segmentation", {}))
    except (TypeError, ValueError, RehabScoreError) as exc:
        raise ConfigError(f"bad segmentation config: {exc}")
    try:
        filter_spec = FilterSpec(**file_cfg.get("filter", {}))
    except TypeError as exc:
        raise ConfigError(f"bad filter config: {exc}")
    try:
        gbdt = GbdtParams.from_dict(file_cfg.get("gbdt", {}))
    except ValueError as exc:
        raise ConfigError(f"bad gbdt config: {exc}")

    split_cfg = file_cfg.get("split", {})
    unknown = set(split_cfg) - _SPLIT_KEYS
    if unknown:
        raise ConfigError(f"unknown split config keys: {sorted(unknown)}")
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = int(split_cfg.get("seed", 42))
    fraction = getattr(args, "test_fraction", None)
    if fraction is None:
        fraction = float(split_cfg.get("test_fraction", 0.2))
    try:
        split = SplitSpec(
            test_fraction=fraction,
            seed=seed,
            unit=SplitUnit(split_cfg.get("unit", "subject")),
        )
    except ValueError as exc:
        raise ConfigError(f"bad split config: {exc}")

    features = getattr(args, "features", None) or "paper44"
    if features not in _NAMED_FEATURE_CONFIGS and not Path(features).is_file():
        raise ConfigError(
            f"--features must be one of {_NAMED_FEATURE_CONFIGS} "
            f"or an existing config file, got {features!r}"
        )

    exercise = getattr(args, "exercise", None)
    if exercise is not None and not 1 <= exercise <= 5:
        raise ConfigError(f"--exercise must be in [1, 5], got {exercise}")

    stream = getattr(args, "stream", None)
    selection = getattr(args, "joints", None)
    return RunConfig(
        segmentation=segmentation,
        filter_spec=filter_spec,
        gbdt=gbdt,
        split=split,
        features=features,
        out=Path(getattr(args, "out", None) or "."),
        exercise=exercise,
        stream=StreamKind(stream) if stream else None,
        selection=JointSelection(selection) if selection else None,
        verbose=bool(getattr(args, "verbose", False)),
    )


def _feature_config(
    token: str,
    stream: StreamKind,
    selection: JointSelection,
    joint_map: JointMap,
) -> FeatureConfig:
    if token in _NAMED_FEATURE_CONFIGS:
        return named_config(token, stream, selection, joint_map)
    path = Path(token)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read feature config {path} ({exc})")
    except ValueError as exc:
        raise ConfigError(f"feature config {path} is not valid JSON ({exc})")
    return config_from_dict(data, stream, selection, joint_map)


def _archive_joint_map(index: dict) -> JointMap:
    names = index.get("joint_name_map")
    return JointMap(names) if names else DEFAULT_JOINT_MAP


def _print_table(rows, headers) -> None:
    widths = [len(h) for h in headers]
    str_rows = [[str(c) for c in row] for row in rows]
    for row in str_rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    print(line)
    print("  ".join("-" * w for w in widths))
    for row in str_rows:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_subjects=args.subjects,
        cycles=args.cycles,
        sample_rate_hz=args.sample_rate,
        seed=args.seed,
    )
    manifest_path = generate_dataset(args.out, spec)
    print(f"wrote synthetic dataset: {manifest_path}")
    return EXIT_OK


class NoRecordingsError(RehabScoreError):
    code = "NO_RECORDINGS"


def cmd_segment(args) -> int:
    rc = build_run_config(args)
    manifest = load_manifest(args.manifest)
    log = IngestLog()
    streams = (rc.stream,) if rc.stream else None
    recordings, _scan = load_all(manifest, streams=streams, log=log)
    if rc.exercise is not None:
        recordings = [r for r in recordings if r.exercise_id == rc.exercise]
    if not recordings:
        raise NoRecordingsError("no recordings matched the manifest and filters")

    groups: dict = {}
    for rec in recordings:
        groups.setdefault((rec.subject_id, rec.exercise_id), {})[rec.stream] = rec

    rc.out.mkdir(parents=True, exist_ok=True)
    diag_dir = rc.out / "diagnostics"
    diag_dir.mkdir(exist_ok=True)

    repetitions = []
    bounds_list = []
    recording_meta = []
    skipped = []

    def meta_path(rec) -> str:
        return f"{rec.subject_id}/ex{rec.exercise_id}/{rec.stream.value}"

    for (subject_id, exercise_id) in sorted(groups):
        pair = groups[(subject_id, exercise_id)]
        spec = rc.segmentation.for_exercise(exercise_id)
        ordered = [s for s in (StreamKind.POSITION, StreamKind.ORIENTATION) if s in pair]
        primary = pair[ordered[0]]
        try:
            seg = split_repetitions(primary, spec, rc.filter_spec, manifest.joint_map)
        except NoRepetitionsError as exc:
            for stream in ordered:
                skipped.append(
                    {
                        "subject_id": subject_id,
                        "exercise_id": exercise_id,
                        "stream": stream.value,
                        "reason": exc.code,
                        "detail": exc.message,
                    }
                )
            if rc.verbose:
                print(f"skip {subject_id} ex{exercise_id}: {exc.message}")
            continue
        safe = subject_id.replace("/", "_")
        write_peak_diagnostics(
            diag_dir / f"{safe}_ex{exercise_id}_{primary.stream.value}.csv", seg
        )
        for stream in ordered:
            rec = pair[stream]
            if rec is primary or rec.n_frames == primary.n_frames:
                rec_seg = seg
            else:
                # Frame counts differ (dropped rows): the primary stream's
                # boundaries no longer line up, so segment independently.
                try:
                    rec_seg = split_repetitions(
                        rec, spec, rc.filter_spec, manifest.joint_map
                    )
                except NoRepetitionsError as exc:
                    skipped.append(
                        {
                            "subject_id": subject_id,
                            "exercise_id": exercise_id,
                            "stream": stream.value,
                            "reason": exc.code,
                            "detail": exc.message,
                        }
                    )
                    continue
                write_peak_diagnostics(
                    diag_dir / f"{safe}_ex{exercise_id}_{stream.value}.csv", rec_seg
                )
            segments = rec_seg.segments(rec.frames)
            for i, segment in enumerate(segments):
                repetitions.append(resample_repetition(rec, segment, i))
                bounds_list.append(rec_seg.bounds[i])
            recording_meta.append(
                {
                    "subject_id": subject_id,
                    "exercise_id": exercise_id,
                    "stream": stream.value,
                    "n_frames": rec.n_frames,
                    "n_repetitions": len(segments),
                    "boundaries_from": primary.stream.value
                    if rec_seg is seg
                    else stream.value,
                }
            )
            if rc.verbose:
                print(f"{meta_path(rec)}: {len(segments)} repetitions")

    if not repetitions:
        raise NoRepetitionsError(
            f"none of the {len(recordings)} recordings produced repetitions"
        )

    write_archive(
        rc.out / "repetitions",
        repetitions,
        bounds=bounds_list,
        sample_rate_hz=manifest.sample_rate_hz,
        joint_names=manifest.joint_map.names,
        recordings=recording_meta,
        skipped=skipped,
    )
    log.write(rc.out / "ingest_log.json")

    _print_table(
        [
            ("recordings loaded", len(recordings)),
            ("repetitions written", len(repetitions)),
            ("rows dropped", log.total_dropped),
            ("recordings skipped", len(skipped)),
            ("files unmatched", len(log.unmatched)),
        ],
        headers=("stage", "count"),
    )
    print(f"archive: {rc.out / 'repetitions'}")
    return EXIT_OK


def _archive_dir(args, rc: RunConfig) -> Path:
    if getattr(args, "repetitions", None):
        return Path(args.repetitions)
    return rc.out / "repetitions"


def cmd_featurize(args) -> int:
    rc = build_run_config(args)
    reps_dir = _archive_dir(args, rc)
    repetitions, index = load_archive(reps_dir)
    stream = rc.stream or StreamKind.POSITION
    selection = rc.selection or JointSelection.VR
    chosen = [r for r in repetitions if r.stream is stream]
    if rc.exercise is not None:
        chosen = [r for r in chosen if r.exercise_id == rc.exercise]
    if not chosen:
        raise ArchiveError(
            f"archive {reps_dir} holds no {stream.value} repetitions"
            + (f" for exercise {rc.exercise}" if rc.exercise else "")
        )
    chosen.sort(key=lambda r: r.key)
    joint_map = _archive_joint_map(index)
    cfg = _feature_config(rc.features, stream, selection, joint_map)
    matrix = extract_matrix(chosen, cfg)
    rc.out.mkdir(parents=True, exist_ok=True)
    out_path = rc.out / f"features_{stream.value}_{selection.value}.csv"
    write_feature_matrix(out_path, matrix)
    print(
        f"wrote {out_path}: {matrix.n_rows} rows x "
        f"{len(matrix.feature_names)} features (+4 key columns)"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    rc = build_run_config(args)
    try:
        matrix = read_feature_matrix(args.matrix)
    except OSError as exc:
        raise ConfigError(f"cannot read feature matrix {args.matrix} ({exc})")
    except ValueError as exc:
        raise FeatureConfigError(f"malformed feature matrix {args.matrix}: {exc}")
    params = rc.gbdt
    seed = getattr(args, "seed", None)
    if seed is not None:
        params = dataclasses.replace(params, seed=seed)

    models_dir = rc.out / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    log_lines = ["exercise_id,round,mse"]
    summary = []
    for exercise_id in sorted(set(matrix.exercise_ids)):
        rows = [i for i, e in enumerate(matrix.exercise_ids) if e == exercise_id]
        labels = matrix.labels[rows]
        baseline = fit_baseline(labels)
        save_model(models_dir / f"ex{exercise_id}_baseline.json", baseline)
        model = fit_gbdt(
            matrix.values[rows],
            labels,
            params,
            feature_names=matrix.feature_names,
        )
        save_model(models_dir / f"ex{exercise_id}_gbdt.json", model)
        for round_no, mse in enumerate(model.train_loss, start=1):
            log_lines.append(f"{exercise_id},{round_no},{mse!r}")
        summary.append(
            (
                exercise_id,
                len(rows),
                f"{model.train_loss[-1]:.3e}" if model.train_loss else "-",
            )
        )
    (models_dir / "train_log.csv").write_text(
        "\n".join(log_lines) + "\n", encoding="utf-8"
    )
    _print_table(summary, headers=("exercise", "rows", "final_train_mse"))
    print(f"models: {models_dir}")
    return EXIT_OK


def _parse_externals(args) -> dict:
    externals = {}
    for item in getattr(args, "external", None) or []:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"--external expects NAME=PATH, got {item!r}")
        if name in externals:
            raise ConfigError(f"--external name {name!r} given twice")
        if name in ("baseline", "gbdt"):
            raise ConfigError(f"--external name {name!r} clashes with a built-in model")
        externals[name] = load_external_predictions(path)
    return externals


def cmd_evaluate(args) -> int:
    rc = build_run_config(args)
    externals = _parse_externals(args)
    reps_dir = _archive_dir(args, rc)
    repetitions, index = load_archive(reps_dir)
    if rc.exercise is not None:
        repetitions = [r for r in repetitions if r.exercise_id == rc.exercise]
    joint_map = _archive_joint_map(index)

    if rc.stream:
        streams = (rc.stream,)
    else:
        present = {r.stream for r in repetitions}
        streams = tuple(
            s for s in (StreamKind.POSITION, StreamKind.ORIENTATION) if s in present
        )
    selections = (
        (rc.selection,) if rc.selection else (JointSelection.FULL, JointSelection.VR)
    )

    feature_configs = {}
    if rc.features != "paper44":
        stream0 = rc.stream or StreamKind.POSITION
        sel0 = rc.selection or JointSelection.VR
        feature_configs[(stream0, sel0)] = _feature_config(
            rc.features, stream0, sel0, joint_map
        )

    models = [ModelKind.BASELINE, ModelKind.GBDT]
    if externals:
        models.append(ModelKind.EXTERNAL)

    report = run_matrix(
        repetitions,
        split=rc.split,
        models=tuple(models),
        streams=streams,
        selections=selections,
        gbdt=rc.gbdt,
        joint_map=joint_map,
        externals=externals,
        feature_configs=feature_configs,
    )
    report_dir = rc.out / "report"
    written = emit_report(report, report_dir)
    if rc.verbose:
        _print_table(
            [
                (
                    r.exercise_id,
                    r.model_name,
                    r.stream.value,
                    r.selection.value,
                    f"{r.metrics.rmse:.4f}",
                    f"{r.metrics.mae:.4f}",
                    r.metrics.n,
                )
                for r in report.rows
            ],
            headers=("exercise", "model", "stream", "joints", "rmse", "mae", "n"),
        )
    print(f"report rows: {len(report.rows)}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    try:
        matrix = read_feature_matrix(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read feature rows {args.input} ({exc})")
    except ValueError as exc:
        raise FeatureConfigError(f"malformed feature rows {args.input}: {exc}")

    if isinstance(model, GbdtModel):
        if tuple(matrix.feature_names) != tuple(model.feature_names):
            raise ConfigError(
                "feature columns do not match the model "
                f"({len(matrix.feature_names)} vs {len(model.feature_names)} names)"
            )
        predictions = [predict_gbdt(model, matrix.values[i]) for i in range(matrix.n_rows)]
    elif isinstance(model, BaselineModel):
        predictions = [model.mean_score] * matrix.n_rows
    else:  # pragma: no cover - load_model only returns the two kinds
        raise ConfigError(f"unsupported model type {type(model).__name__}")

    for value in predictions:
        print(repr(float(value)))
    if getattr(args, "out", None):
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["subject_id,exercise_id,repetition_index,prediction"]
        for (subject_id, exercise_id, rep_index), value in zip(
            matrix.keys(), predictions
        ):
            lines.append(f"{subject_id},{exercise_id},{rep_index},{float(value)!r}")
        out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {out_path}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rehabscore",
        description="Exercise scoring from skeleton recordings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate the synthetic demo dataset")
    sp.add_argument("--out", required=True, help="dataset directory to create")
    sp.add_argument("--subjects", type=int, default=SyntheticSpec.n_subjects)
    sp.add_argument("--cycles", type=int, default=SyntheticSpec.cycles)
    sp.add_argument("--sample-rate", type=float, default=SyntheticSpec.sample_rate_hz)
    sp.add_argument("--seed", type=int, default=SyntheticSpec.seed)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("segment", help="split recordings into repetitions")
    sp.add_argument("--manifest", required=True, help="dataset manifest JSON")
    sp.add_argument("--config", help="JSON config (segmentation/filter overrides)")
    sp.add_argument("--exercise", type=int, help="only this exercise id (1..5)")
    sp.add_argument("--stream", choices=[s.value for s in StreamKind])
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("featurize", help="extract a feature matrix CSV")
    sp.add_argument("--repetitions", help="repetition archive directory")
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--exercise", type=int)
    sp.add_argument("--stream", choices=[s.value for s in StreamKind],
                    default=StreamKind.POSITION.value)
    sp.add_argument("--joints", choices=[s.value for s in JointSelection],
                    default=JointSelection.VR.value)
    sp.add_argument("--features", default="paper44",
                    help="paper44, full56, or a feature config JSON path")
    sp.add_argument("--out", required=True)
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_featurize)

    sp = sub.add_parser("train", help="fit baseline + boosted models per exercise")
    sp.add_argument("--matrix", required=True, help="feature matrix CSV")
    sp.add_argument("--config", help="JSON config (gbdt overrides)")
    sp.add_argument("--seed", type=int, help="override gbdt seed")
    sp.add_argument("--out", required=True)
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="run the model comparison matrix")
    sp.add_argument("--repetitions", help="repetition archive directory")
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--exercise", type=int)
    sp.add_argument("--stream", choices=[s.value for s in StreamKind],
                    help="restrict to one stream (default: all present)")
    sp.add_argument("--joints", choices=[s.value for s in JointSelection],
                    help="restrict to one joint selection (default: both)")
    sp.add_argument("--features", default="paper44",
                    help="paper44, full56, or a feature config JSON path; "
                         "non-default configs apply to the --stream/--joints combo")
    sp.add_argument("--seed", type=int, help="split seed (default 42)")
    sp.add_argument("--test-fraction", type=float, dest="test_fraction")
    sp.add_argument("--external", action="append", metavar="NAME=PATH",
                    help="external predictions CSV, repeatable")
    sp.add_argument("--out", required=True)
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("predict", help="score feature rows with a saved model")
    sp.add_argument("--model", required=True, help="model JSON file")
    sp.add_argument("--input", required=True, help="feature matrix CSV")
    sp.add_argument("--out", help="also write predictions CSV here")
    sp.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RehabScoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_FOR_CODE.get(exc.code, EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
