# tfqkd/utils/tally_io.py
# Reading and writing tally files, run configurations and reports.

import csv
import io
import json
import os
import tempfile
from typing import List, Optional, Tuple

from pydantic import BaseModel, ValidationError

from ..core import channel_violations, security_violations, source_violations
from ..exceptions import DomainError, MissingKeyError, TallyParseError, TallyValidationError
from ..schemas import KeyRateReport, RunConfig, TallyFile, TallyMetadata, TallyRecord

# Row labels of the published count tables, in snake case.
SENT_KEYS = [[f"sent_{a}{b}" for b in range(3)] for a in range(3)]
DETECTED_KEYS = [[f"detected_{a}{b}" for b in range(3)] for a in range(3)]
SCALAR_KEYS = {
    "valid_det1": "detected_valid_det1",
    "valid_det2": "detected_valid_det2",
    "ds_total": "detected_11_ds",
    "ds_correct": "correct_11_ds",
}
REQUIRED_KEYS = [k for row in SENT_KEYS + DETECTED_KEYS for k in row] + list(SCALAR_KEYS.values())


def _load_json(text: str, what: str):
    if not text.strip():
        raise TallyParseError(f"{what} is empty")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise TallyParseError(f"malformed {what}: {e.msg}", e.lineno, e.colno)


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise TallyParseError(f"cannot read {path}: {e.strerror}")


def parse_tally_text(text: str) -> Tuple[TallyRecord, TallyMetadata]:
    data = _load_json(text, "tally file")
    if not isinstance(data, dict):
        raise TallyParseError("tally file must hold a JSON object")
    if "counts" not in data:
        raise MissingKeyError("counts")
    counts = data["counts"]
    if not isinstance(counts, dict):
        raise TallyParseError("'counts' must be an object")
    for key in REQUIRED_KEYS:
        if key not in counts:
            raise MissingKeyError(key)
    try:
        parsed = TallyFile.model_validate({"metadata": data.get("metadata") or {}, "counts": counts})
    except ValidationError as e:
        raise TallyParseError(f"bad tally structure: {e.errors()[0]['msg']}")

    counts = parsed.counts
    negative = [k for k in REQUIRED_KEYS if counts[k] < 0]
    if negative:
        raise TallyValidationError([f"{k} is negative" for k in negative])

    sent = tuple(tuple(counts[k] for k in row) for row in SENT_KEYS)
    record = TallyRecord(
        sent=sent,
        detected=tuple(tuple(counts[k] for k in row) for row in DETECTED_KEYS),
        n_total=counts.get("n_total", sum(sum(row) for row in sent)),
        **{field: counts[key] for field, key in SCALAR_KEYS.items()},
    )
    problems = record.violations()
    if problems:
        raise TallyValidationError(problems)
    return record, parsed.metadata


def parse_tally(path: str) -> TallyRecord:
    """Load a tally file and check every count invariant."""
    return parse_tally_text(_read_text(path))[0]


def read_tally_file(path: str) -> Tuple[TallyRecord, TallyMetadata]:
    return parse_tally_text(_read_text(path))


def dump_tally(record: TallyRecord, metadata: Optional[TallyMetadata] = None) -> str:
    counts = {}
    for a in range(3):
        for b in range(3):
            counts[SENT_KEYS[a][b]] = record.sent[a][b]
    for a in range(3):
        for b in range(3):
            counts[DETECTED_KEYS[a][b]] = record.detected[a][b]
    for field, key in SCALAR_KEYS.items():
        counts[key] = getattr(record, field)
    doc = {
        "metadata": (metadata or TallyMetadata()).model_dump(exclude_none=True),
        "counts": counts,
    }
    return json.dumps(doc, indent=2) + "\n"


def load_run_config(path: Optional[str]) -> RunConfig:
    """Validated run configuration; cross-field violations raise TallyValidationError."""
    if path is None:
        return RunConfig()
    data = _load_json(_read_text(path), "config file")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(p) for p in first["loc"])
        raise DomainError(f"invalid config at {location}: {first['msg']}")

    problems = security_violations(cfg.security) + channel_violations(cfg.channel)
    if cfg.source is not None:
        problems = source_violations(cfg.source) + problems
    if problems:
        raise TallyValidationError(problems)
    return cfg


# --- Reports ---

def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "|".join(value)
    return str(value)


def emit_report(report: BaseModel, fmt: str = "json") -> str:
    """Serialize a report; floats keep full precision in both formats."""
    values = report.model_dump(by_alias=True, mode="json")
    if fmt == "json":
        return json.dumps(values, indent=2) + "\n"
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        columns = list(values)
        writer.writerow(columns)
        writer.writerow([_csv_cell(values[c]) for c in columns])
        return buffer.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str, fmt: str = "json") -> KeyRateReport:
    if fmt == "json":
        return KeyRateReport.model_validate(_load_json(text, "report"))
    rows: List[dict] = list(csv.DictReader(io.StringIO(text)))
    if len(rows) != 1:
        raise TallyParseError("report CSV must hold exactly one row")
    row = {k: v for k, v in rows[0].items() if v != ""}
    if "reasons" in row:
        row["reasons"] = row["reasons"].split("|")
    if "vacuous" in row:
        row["vacuous"] = row["vacuous"] == "true"
    return KeyRateReport.model_validate(row)


def write_atomic(path: str, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
