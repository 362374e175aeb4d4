"""Session persistence (JSONL) and CSV import/export.

A session file is UTF-8 JSONL: one metadata line carrying the schema
version, identifiers, plan, and optional path features, then one line per
sample in seq order. Unknown fields on any line survive a load/save round
trip untouched, so newer writers stay readable.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .errors import CorruptLine, EmptyFile, MissingColumn, SchemaMismatch
from .intercept import PathFeatures
from .probe import METHOD_IMPORTED, ProbePlan, ProbeSample
from .simulator import Hop, SimPath

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# Canonical CSV export columns, importable with this mapping.
CSV_COLUMNS = ("seq", "payload_bytes", "wire_bits", "sent_at_us", "rtt_s", "lost")
CANONICAL_CSV_MAPPING = {
    "size": "wire_bits",
    "size_unit": "bits",
    "delay": "rtt_s",
    "timestamp": "sent_at_us",
    "lost": "lost",
}

_SAMPLE_FIELDS = (
    "path_id", "seq", "payload_bytes", "wire_bits", "sent_at_us",
    "rtt_s", "lost", "method",
)
_TRUTHY = {"1", "true", "yes", "y", "lost"}


@dataclass
class SessionRecord:
    """One measurement session: metadata plus its samples in seq order."""

    session_id: str
    created_at: str  # ISO 8601, UTC
    plan: Union[ProbePlan, SimPath, None]
    samples: list[ProbeSample]
    features: Optional[PathFeatures] = None
    extra: dict = field(default_factory=dict)
    sample_extras: dict[int, dict] = field(default_factory=dict)

    def __post_init__(self):
        seqs = [s.seq for s in self.samples]
        if seqs != sorted(seqs):
            raise ValueError("samples must be ordered by seq")


def _plan_to_json(plan: Union[ProbePlan, SimPath, None]) -> Optional[dict]:
    if plan is None:
        return None
    if isinstance(plan, ProbePlan):
        return {
            "type": "probe",
            "target": plan.target,
            "sizes_payload_bytes": list(plan.sizes_payload_bytes),
            "count_per_size": plan.count_per_size,
            "inter_probe_gap_s": plan.inter_probe_gap_s,
            "timeout_s": plan.timeout_s,
            "method": plan.method,
            "udp_port": plan.udp_port,
        }
    if isinstance(plan, SimPath):
        return {
            "type": "sim",
            "seed": plan.seed,
            "hops": [
                {
                    "capacity_bps": h.capacity_bps,
                    "propagation_s": h.propagation_s,
                    "processing_s": h.processing_s,
                    "queue_noise_mean_s": h.queue_noise_mean_s,
                    "loss_prob": h.loss_prob,
                }
                for h in plan.hops
            ],
        }
    raise TypeError(f"unsupported plan type {type(plan).__name__}")


def _plan_from_json(obj: Optional[dict]) -> Union[ProbePlan, SimPath, None]:
    if obj is None:
        return None
    kind = obj.get("type")
    if kind == "probe":
        return ProbePlan(
            target=obj["target"],
            sizes_payload_bytes=tuple(obj["sizes_payload_bytes"]),
            count_per_size=obj["count_per_size"],
            inter_probe_gap_s=obj["inter_probe_gap_s"],
            timeout_s=obj["timeout_s"],
            method=obj["method"],
            udp_port=obj.get("udp_port", ProbePlan.__dataclass_fields__["udp_port"].default),
        )
    if kind == "sim":
        hops = tuple(Hop(**h) for h in obj["hops"])
        return SimPath(hops=hops, seed=obj.get("seed", 0))
    raise ValueError(f"unknown plan type {kind!r}")


def _features_to_json(features: Optional[PathFeatures]) -> Optional[dict]:
    if features is None:
        return None
    return {
        "path_id": features.path_id,
        "hop_count_n": features.hop_count_n,
        "route_length_l_km": features.route_length_l_km,
    }


def _dump(obj: dict) -> str:
    # stable key order and no whitespace: identical records give identical bytes
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_session(record: SessionRecord, path) -> None:
    """Write the session as JSONL and fsync before returning."""
    meta = {
        "schema": SCHEMA_VERSION,
        "session_id": record.session_id,
        "created_at": record.created_at,
        "plan": _plan_to_json(record.plan),
        "features": _features_to_json(record.features),
    }
    meta.update(record.extra)
    lines = [_dump(meta)]
    for sample in record.samples:
        obj = {name: getattr(sample, name) for name in _SAMPLE_FIELDS}
        obj.update(record.sample_extras.get(sample.seq, {}))
        lines.append(_dump(obj))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def load_session(path) -> SessionRecord:
    """Reload a session file written by save_session.

    Raises SchemaMismatch for unrecognized schema versions and CorruptLine
    (with the 1-based line number) for unparseable lines.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    if not raw_lines:
        raise CorruptLine(1, "file is empty")

    def parse(line_no: int, text: str) -> dict:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorruptLine(line_no, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise CorruptLine(line_no, "expected a JSON object")
        return obj

    meta = parse(1, raw_lines[0])
    schema = meta.pop("schema", None)
    if schema != SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported schema version {schema!r}")
    try:
        session_id = meta.pop("session_id")
        created_at = meta.pop("created_at")
        plan = _plan_from_json(meta.pop("plan", None))
        features_obj = meta.pop("features", None)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptLine(1, f"bad metadata: {exc}") from exc
    features = PathFeatures(**features_obj) if features_obj else None

    samples = []
    sample_extras: dict[int, dict] = {}
    for line_no, text in enumerate(raw_lines[1:], start=2):
        if not text.strip():
            continue
        obj = parse(line_no, text)
        try:
            kwargs = {name: obj.pop(name) for name in _SAMPLE_FIELDS}
            sample = ProbeSample(**kwargs)
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptLine(line_no, f"bad sample: {exc}") from exc
        samples.append(sample)
        if obj:
            sample_extras[sample.seq] = obj

    return SessionRecord(
        session_id=session_id,
        created_at=created_at,
        plan=plan,
        samples=samples,
        features=features,
        extra=meta,
        sample_extras=sample_extras,
    )


def export_csv(samples: Sequence[ProbeSample], path) -> None:
    """Write samples to CSV with the canonical column set."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for s in samples:
            writer.writerow([
                s.seq, s.payload_bytes, s.wire_bits, s.sent_at_us,
                "" if s.rtt_s is None else repr(s.rtt_s),
                int(s.lost),
            ])


def import_csv(path, mapping: dict, *, path_id: str = "import") -> list[ProbeSample]:
    """Read externally collected size/delay rows into probe samples.

    `mapping` names the columns: required keys "size" and "delay", optional
    "timestamp" (microseconds) and "lost"; "size_unit" declares whether the
    size column is in "bytes" (default) or "bits". Rows whose delay does not
    parse become lost samples; rows whose size does not parse are skipped.
    Both are tallied in a single warning.
    """
    for key in ("size", "delay"):
        if key not in mapping:
            raise ValueError(f'mapping must name a "{key}" column')
    size_unit = mapping.get("size_unit", "bytes")
    if size_unit not in ("bytes", "bits"):
        raise ValueError(f'size_unit must be "bytes" or "bits", got {size_unit!r}')

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path}: no header row")
        columns = set(reader.fieldnames)
        for key in ("size", "delay", "timestamp", "lost"):
            column = mapping.get(key)
            if column is not None and column not in columns:
                raise MissingColumn(f"{path}: column {column!r} not in header")
        rows = list(reader)
    if not rows:
        raise EmptyFile(f"{path}: no data rows")

    samples = []
    bad_delays = 0
    bad_sizes = 0
    for idx, row in enumerate(rows):
        try:
            size = int(float(row[mapping["size"]]))
            wire_bits = size * 8 if size_unit == "bytes" else size
            if wire_bits < 8:
                raise ValueError
        except (TypeError, ValueError):
            bad_sizes += 1
            continue

        lost = False
        if mapping.get("lost") is not None:
            lost = str(row[mapping["lost"]]).strip().lower() in _TRUTHY
        rtt_s = None
        if not lost:
            try:
                rtt_s = float(row[mapping["delay"]])
                if not rtt_s > 0:
                    raise ValueError
            except (TypeError, ValueError):
                bad_delays += 1
                rtt_s = None
        lost = rtt_s is None

        sent_at_us = idx
        if mapping.get("timestamp") is not None:
            try:
                sent_at_us = int(float(row[mapping["timestamp"]]))
            except (TypeError, ValueError):
                pass

        samples.append(ProbeSample(
            path_id=path_id,
            seq=idx,
            payload_bytes=wire_bits // 8,
            wire_bits=wire_bits,
            sent_at_us=sent_at_us,
            rtt_s=rtt_s,
            lost=lost,
            method=METHOD_IMPORTED,
        ))

    if bad_delays or bad_sizes:
        logger.warning(
            "%s: %d rows with unparseable delay treated as lost, %d rows skipped",
            path, bad_delays, bad_sizes,
        )
    return samples


def read_observations_csv(path) -> list[tuple[PathFeatures, float]]:
    """Read intercept-model observations: columns path_id, n, l_km, a_s."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path}: no header row")
        for column in ("path_id", "n", "l_km", "a_s"):
            if column not in reader.fieldnames:
                raise MissingColumn(f"{path}: column {column!r} not in header")
        observations = []
        for row in reader:
            features = PathFeatures(
                path_id=row["path_id"],
                hop_count_n=int(row["n"]),
                route_length_l_km=float(row["l_km"]),
            )
            observations.append((features, float(row["a_s"])))
    if not observations:
        raise EmptyFile(f"{path}: no data rows")
    return observations
