"""
File persistence: atomic writes, trajectory and model CSVs, study logs and run manifests.
Every data artifact is deterministic; only manifest.json carries a timestamp.
"""
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Mapping, Optional, Sequence
import csv
import io
import json
import logging
import math
import os
import tempfile

from config import settings
from exceptions import SchemaError
from models.estimation_schemas import ObservedEstimate, TrajectoryLog
from models.schemas import CELLS, TransitionModel, arm_sort_key, cell_name
from models.study_schemas import StudyLog

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["arm_id", "week", "state", "action", "next_state"]
MODEL_HEADER = ["arm_id"] + [cell_name(s, a) for s, a in CELLS]
OBSERVED_HEADER = MODEL_HEADER + [f"imputed_{cell_name(s, a)}" for s, a in CELLS] + ["cluster"]


def ensure_output_dir(path: str) -> str:
    """Create the output directory if needed; raises OSError when it cannot be used"""
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory is not writable: {path}")
    return path


def atomic_write_text(path: str, text: str) -> str:
    """Write UTF-8 text through a temporary file in the same directory, then rename"""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.info(f"Wrote {path}")
    return path


def write_json(path: str, payload) -> str:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path: str):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return atomic_write_text(path, buffer.getvalue())


def _format_float(value: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(value))


def _rows(path: str, expected: Sequence[str], exact: bool = True):
    """Yield (line_number, row dict) after checking the header"""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path} is empty; a header is required", row=1)
        header = [h.strip() for h in header]
        if header[: len(expected)] != list(expected) or (exact and len(header) != len(expected)):
            for position, name in enumerate(expected):
                if position >= len(header) or header[position] != name:
                    raise SchemaError(f"expected header {','.join(expected)}", column=name, row=1)
            raise SchemaError(f"unexpected extra column in {path}", column=header[len(expected)], row=1)
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < len(expected):
                raise SchemaError("row has too few fields", column=expected[len(row)], row=line_number)
            yield line_number, dict(zip(header, (v.strip() for v in row)))


def _binary(value: str, column: str, row: int) -> int:
    if value not in ("0", "1"):
        raise SchemaError(f"expected 0 or 1, got '{value}'", column=column, row=row)
    return int(value)


def read_trajectory_csv(path: str) -> List[TrajectoryLog]:
    """
    Parse a trajectory CSV into one TrajectoryLog per arm, rows ordered by week

    Raises:
        SchemaError: naming the column and row of the first malformed value
    """
    by_arm: Dict[str, Dict[int, tuple]] = {}
    for line, row in _rows(path, TRAJECTORY_HEADER):
        arm_id = row["arm_id"]
        if not arm_id:
            raise SchemaError("empty arm id", column="arm_id", row=line)
        try:
            week = int(row["week"])
        except ValueError:
            raise SchemaError(f"week must be an integer, got '{row['week']}'", column="week", row=line)
        if week < 0:
            raise SchemaError(f"week must be non-negative, got {week}", column="week", row=line)
        triple = tuple(_binary(row[c], c, line) for c in ("state", "action", "next_state"))
        weeks = by_arm.setdefault(arm_id, {})
        if week in weeks:
            raise SchemaError(f"duplicate row for arm {arm_id} week {week}", column="week", row=line)
        weeks[week] = triple

    logs = []
    for arm_id in sorted(by_arm, key=arm_sort_key):
        weeks = by_arm[arm_id]
        ordered = sorted(weeks)
        logs.append(TrajectoryLog(arm_id=arm_id, transitions=[weeks[w] for w in ordered], weeks=ordered))
    logger.info(f"Read {sum(len(l.transitions) for l in logs)} transitions for {len(logs)} arms from {path}")
    return logs


def read_models_csv(path: str) -> Dict[str, TransitionModel]:
    """Parse arm_id,p00,p10,p01,p11 rows; extra trailing columns (imputation flags) are ignored"""
    models: Dict[str, TransitionModel] = {}
    for line, row in _rows(path, MODEL_HEADER, exact=False):
        arm_id = row["arm_id"]
        if not arm_id:
            raise SchemaError("empty arm id", column="arm_id", row=line)
        if arm_id in models:
            raise SchemaError(f"duplicate arm id {arm_id}", column="arm_id", row=line)
        values = {}
        for name in MODEL_HEADER[1:]:
            try:
                value = float(row[name])
            except ValueError:
                raise SchemaError(f"not a number: '{row[name]}'", column=name, row=line)
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise SchemaError(f"probability outside [0, 1]: {value}", column=name, row=line)
            values[name] = value
        models[arm_id] = TransitionModel(**values)
    return models


def write_models_csv(path: str, models: Mapping[str, TransitionModel]) -> str:
    rows = [[arm_id] + [_format_float(v) for v in models[arm_id].as_row()] for arm_id in models]
    return write_csv(path, MODEL_HEADER, rows)


def write_observed_models_csv(path: str, estimate: ObservedEstimate) -> str:
    """Observed models with one 0/1 imputation flag per cell and the cluster label"""
    rows = []
    for arm_id in sorted(estimate.models, key=arm_sort_key):
        model = estimate.models[arm_id]
        flags = estimate.imputed[arm_id]
        rows.append(
            [arm_id]
            + [_format_float(v) for v in model.as_row()]
            + [int(flags[cell_name(s, a)]) for s, a in CELLS]
            + [estimate.assignment.labels.get(arm_id, "")]
        )
    return write_csv(path, OBSERVED_HEADER, rows)


def study_log_rows(log: StudyLog) -> List[list]:
    return [
        [arm_id, record.week, s, a, s_next]
        for record in log.weeks
        for arm_id, s, a, s_next in record.transitions(log.arm_ids)
    ]


def write_study_log(output_dir: str, log: StudyLog, stem: Optional[str] = None) -> List[str]:
    """
    Trajectory CSV plus a JSON sidecar holding config, seed, RNG id and cumulative statistics

    Returns:
        Paths written
    """
    stem = stem or f"study_{log.config.policy}"
    csv_path = write_csv(os.path.join(output_dir, f"{stem}.csv"), TRAJECTORY_HEADER, study_log_rows(log))
    sidecar = {
        "tool": settings.APP_NAME,
        "version": settings.APP_VERSION,
        "config": log.config.model_dump(mode="json"),
        "seed": log.config.seed,
        "rng_algorithm": log.rng_algorithm,
        "summary": log.summary(),
        "cumulative_engaging": log.cumulative_engaging(),
        "selected": {str(r.week): r.selected for r in log.weeks},
    }
    json_path = write_json(os.path.join(output_dir, f"{stem}.json"), sidecar)
    return [csv_path, json_path]


def write_manifest(output_dir: str, command: str, config: dict, files: Sequence[str]) -> str:
    """Run manifest; the creation time lives here and nowhere else"""
    manifest = {
        "tool": settings.APP_NAME,
        "version": settings.APP_VERSION,
        "command": command,
        "config": config,
        "rng_algorithm": settings.RNG_ALGORITHM,
        "reward_on": settings.REWARD_ON,
        "files": sorted(os.path.basename(f) for f in files),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    return write_json(os.path.join(output_dir, "manifest.json"), manifest)
