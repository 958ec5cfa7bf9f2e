"""Experiment harness: deterministic splits, metrics, and report emission.

One seeded split is shared by every model/stream/selection combination of an
exercise, so metric differences come from the models rather than from data
shuffling. External predictors (e.g. neural models maintained elsewhere)
join by explicit (subject_id, exercise_id, repetition_index) keys instead of
row order.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    DEFAULT_JOINT_MAP,
    JointMap,
    JointSelection,
    RehabScoreError,
    StreamKind,
)
from .features import FeatureConfig, default_config, extract_matrix
from .models import (
    GbdtParams,
    fit_baseline,
    fit_gbdt,
    predict_gbdt_batch,
)

REPORT_SCHEMA_VERSION = 1
MAPE_EPSILON = 1e-8  # floor on |label| in the MAPE denominator


class TooFewUnitsError(RehabScoreError):
    code = "TOO_FEW_UNITS"


class LengthMismatchError(RehabScoreError):
    code = "LENGTH_MISMATCH"


class EmptyInputError(RehabScoreError):
    code = "EMPTY_INPUT"


class MissingExternalPredictionError(RehabScoreError):
    code = "MISSING_EXTERNAL_PREDICTION"

    def __init__(self, message: str, missing_keys=()):
        super().__init__(message)
        self.missing_keys = tuple(missing_keys)


class ExternalFileError(RehabScoreError):
    code = "EXTERNAL_FILE_INVALID"


class ReportIoError(RehabScoreError):
    code = "IO_FAILURE"


class SplitUnit(Enum):
    SUBJECT = "subject"
    REPETITION = "repetition"


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 42
    unit: SplitUnit = SplitUnit.SUBJECT

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")


def make_split(repetitions, spec: SplitSpec):
    """Partition repetition positions into (train, test) index tuples.

    SUBJECT mode keeps all of a person's repetitions on one side. The test
    unit count is round(test_fraction x n_units), clamped to [1, n_units-1].
    """
    n = len(repetitions)
    if spec.unit is SplitUnit.SUBJECT:
        unit_of = [rep.subject_id for rep in repetitions]
    else:
        unit_of = list(range(n))
    units = sorted(set(unit_of))
    if len(units) < 2:
        raise TooFewUnitsError(
            f"need at least 2 distinct {spec.unit.value} units, got {len(units)}"
        )
    n_test = int(round(spec.test_fraction * len(units)))
    n_test = max(1, min(n_test, len(units) - 1))
    test_units = set(random.Random(spec.seed).sample(units, n_test))
    test_idx = tuple(i for i in range(n) if unit_of[i] in test_units)
    train_idx = tuple(i for i in range(n) if unit_of[i] not in test_units)
    return train_idx, test_idx


@dataclass(frozen=True)
class MetricSet:
    rmse: float
    mae: float
    mape_percent: float
    n: int


def compute_metrics(predictions, labels) -> MetricSet:
    pred = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if pred.shape != y.shape:
        raise LengthMismatchError(
            f"{pred.size} predictions vs {y.size} labels"
        )
    if pred.size == 0:
        raise EmptyInputError("no prediction/label pairs")
    err = pred - y
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    mape = float(100.0 * np.mean(np.abs(err) / np.maximum(np.abs(y), MAPE_EPSILON)))
    return MetricSet(rmse=rmse, mae=mae, mape_percent=mape, n=int(y.size))


class ModelKind(Enum):
    BASELINE = "baseline"
    GBDT = "gbdt"
    EXTERNAL = "external"


@dataclass(frozen=True)
class ExperimentSpec:
    exercise_id: int
    stream: StreamKind
    selection: JointSelection
    model: ModelKind
    split: SplitSpec = SplitSpec()
    gbdt: GbdtParams = GbdtParams()
    feature_config: "FeatureConfig | None" = None
    external_name: str = ""  # model label when model is EXTERNAL


@dataclass(frozen=True)
class ReportRow:
    exercise_id: int
    model_name: str
    stream: StreamKind
    selection: JointSelection
    metrics: MetricSet


@dataclass(frozen=True)
class EvalReport:
    rows: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        keys = [
            (r.exercise_id, r.model_name, r.stream, r.selection) for r in self.rows
        ]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (exercise, model, stream, selection) rows")


def load_external_predictions(path) -> dict:
    """(subject_id, exercise_id, repetition_index) -> prediction, from CSV."""
    path = Path(path)
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ExternalFileError(f"cannot read predictions file {path} ({exc})")
    out: dict = {}
    with handle:
        reader = csv.DictReader(handle)
        required = {"subject_id", "exercise_id", "repetition_index", "prediction"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise ExternalFileError(
                f"predictions file {path} lacks columns {sorted(missing)}"
            )
        for line_no, row in enumerate(reader, start=2):
            try:
                key = (
                    str(row["subject_id"]),
                    int(row["exercise_id"]),
                    int(row["repetition_index"]),
                )
                value = float(row["prediction"])
            except (TypeError, ValueError) as exc:
                raise ExternalFileError(f"{path} line {line_no}: {exc}")
            if key in out:
                raise ExternalFileError(
                    f"{path} repeats key {key} (line {line_no})"
                )
            out[key] = value
    return out


def _select(repetitions, exercise_id: int, stream: StreamKind):
    reps = [
        r
        for r in repetitions
        if r.exercise_id == exercise_id and r.stream is stream
    ]
    reps.sort(key=lambda r: r.key)
    return reps


def run_experiment(
    spec: ExperimentSpec,
    repetitions,
    external: dict = None,
    joint_map: JointMap = DEFAULT_JOINT_MAP,
) -> ReportRow:
    reps = _select(repetitions, spec.exercise_id, spec.stream)
    if not reps:
        raise EmptyInputError(
            f"no repetitions for exercise {spec.exercise_id} "
            f"({spec.stream.value} stream)"
        )
    train_idx, test_idx = make_split(reps, spec.split)
    labels = np.array([r.label.normalized for r in reps])
    y_train, y_test = labels[list(train_idx)], labels[list(test_idx)]

    if spec.model is ModelKind.BASELINE:
        model = fit_baseline(y_train)
        preds = np.full(len(test_idx), model.mean_score)
        name = "baseline"
    elif spec.model is ModelKind.GBDT:
        cfg = spec.feature_config or default_config(
            spec.stream, spec.selection, joint_map
        )
        matrix = extract_matrix(reps, cfg)
        model = fit_gbdt(
            matrix.values[list(train_idx)],
            y_train,
            spec.gbdt,
            feature_names=cfg.feature_names,
        )
        preds = predict_gbdt_batch(model, matrix.values[list(test_idx)])
        name = "gbdt"
    elif spec.model is ModelKind.EXTERNAL:
        if external is None:
            raise MissingExternalPredictionError(
                "no external predictions supplied", missing_keys=()
            )
        missing = [reps[i].key for i in test_idx if reps[i].key not in external]
        if missing:
            shown = ", ".join(map(str, missing[:10]))
            more = f" and {len(missing) - 10} more" if len(missing) > 10 else ""
            raise MissingExternalPredictionError(
                f"external predictions missing {len(missing)} test keys: "
                f"{shown}{more}",
                missing_keys=missing,
            )
        preds = np.array([external[reps[i].key] for i in test_idx])
        name = spec.external_name or "external"
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown model kind {spec.model!r}")

    return ReportRow(
        exercise_id=spec.exercise_id,
        model_name=name,
        stream=spec.stream,
        selection=spec.selection,
        metrics=compute_metrics(preds, y_test),
    )


def run_matrix(
    repetitions,
    split: SplitSpec = SplitSpec(),
    models=(ModelKind.BASELINE, ModelKind.GBDT),
    streams=(StreamKind.POSITION, StreamKind.ORIENTATION),
    selections=(JointSelection.FULL, JointSelection.VR),
    exercises=None,
    gbdt: GbdtParams = GbdtParams(),
    joint_map: JointMap = DEFAULT_JOINT_MAP,
    externals: dict = None,
    feature_configs: dict = None,
) -> EvalReport:
    """Cartesian product of the requested factors with one shared split.

    `externals` maps model-name -> predictions dict; `feature_configs` maps
    (stream, selection) -> FeatureConfig overriding the defaults.
    """
    if exercises is None:
        exercises = sorted({r.exercise_id for r in repetitions})
    externals = externals or {}
    rows = []
    for exercise_id in exercises:
        for stream in streams:
            for selection in selections:
                cfg = (feature_configs or {}).get((stream, selection))
                for model in models:
                    spec = ExperimentSpec(
                        exercise_id=exercise_id,
                        stream=stream,
                        selection=selection,
                        model=model,
                        split=split,
                        gbdt=gbdt,
                        feature_config=cfg,
                    )
                    if model is ModelKind.EXTERNAL:
                        for name, preds in sorted(externals.items()):
                            named = dataclasses.replace(spec, external_name=name)
                            rows.append(
                                run_experiment(
                                    named, repetitions, external=preds,
                                    joint_map=joint_map,
                                )
                            )
                    else:
                        rows.append(
                            run_experiment(spec, repetitions, joint_map=joint_map)
                        )
    metadata = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "code_version": __version__,
        "seed": split.seed,
        "test_fraction": split.test_fraction,
        "split_unit": split.unit.value,
        "gbdt_params": gbdt.to_dict(),
        "mape_epsilon": MAPE_EPSILON,
        "models": sorted(
            [m.value for m in models if m is not ModelKind.EXTERNAL]
            + list(externals)
        ),
        "streams": [s.value for s in streams],
        "selections": [s.value for s in selections],
        "exercises": list(exercises),
    }
    return EvalReport(rows=tuple(rows), metadata=metadata)


def _row_dict(row: ReportRow) -> dict:
    return {
        "exercise_id": row.exercise_id,
        "model": row.model_name,
        "stream": row.stream.value,
        "selection": row.selection.value,
        "rmse": row.metrics.rmse,
        "mae": row.metrics.mae,
        "mape_percent": row.metrics.mape_percent,
        "n": row.metrics.n,
    }


_CSV_COLUMNS = (
    "exercise_id",
    "model",
    "stream",
    "selection",
    "rmse",
    "mae",
    "mape_percent",
    "n",
)


def emit_report(report: EvalReport, out_dir) -> list:
    """Write report.json, report.csv, and per-(stream, selection) plot CSVs.

    Plot files hold (exercise_id, model, metric, value) rows, one file per
    stream/selection panel. Returns the written paths.
    """
    if not report.rows:
        raise EmptyInputError("report has no rows")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []

        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "metadata": dict(report.metadata),
            "rows": [_row_dict(r) for r in report.rows],
        }
        json_path = out_dir / "report.json"
        json_path.write_text(
            json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        written.append(json_path)

        csv_path = out_dir / "report.csv"
        lines = [",".join(_CSV_COLUMNS)]
        for row in report.rows:
            d = _row_dict(row)
            lines.append(
                ",".join(
                    repr(d[c]) if isinstance(d[c], float) else str(d[c])
                    for c in _CSV_COLUMNS
                )
            )
        csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(csv_path)

        panels = sorted({(r.stream, r.selection) for r in report.rows},
                        key=lambda p: (p[0].value, p[1].value))
        for stream, selection in panels:
            plot_path = out_dir / f"plot_{stream.value}_{selection.value}.csv"
            plines = ["exercise_id,model,metric,value"]
            for row in report.rows:
                if row.stream is not stream or row.selection is not selection:
                    continue
                for metric in ("rmse", "mae", "mape_percent"):
                    value = getattr(row.metrics, metric)
                    plines.append(
                        f"{row.exercise_id},{row.model_name},{metric},{value!r}"
                    )
            plot_path.write_text("\n".join(plines) + "\n", encoding="utf-8")
            written.append(plot_path)
        return written
    except OSError as exc:
        raise ReportIoError(f"cannot write report under {out_dir} ({exc})")
