"""Parse XES and CSV event logs into the EventLog model.

Ingestion is deliberately permissive: events without timestamps are
accepted, and data-quality issues that do not prevent parsing are left
to ``validate_log``. Attribute scope (case-level vs event-level) is
taken from where a value was recorded and can be refined afterwards
with ``infer_attribute_scope`` / ``apply_attribute_scopes``.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from .errors import ConfigError, DataError, ParseError
from .model import (
    MISSING,
    AttributeInfo,
    Case,
    Event,
    EventLog,
    Missing,
    as_utc,
    kind_of,
)

_XES_KINDS = {
    "string": "text",
    "date": "timestamp",
    "int": "integer",
    "float": "real",
    "boolean": "boolean",
}
_KIND_TAGS = {v: k for k, v in _XES_KINDS.items()}

# Log-level XES metadata elements that carry no trace content.
_XES_META = {"extension", "global", "classifier", "properties"}


def parse_timestamp(text: str, fmt: Optional[str] = None) -> datetime:
    """Parse a timestamp string and normalize it to UTC.

    Without a format pattern, ISO-8601 is assumed ('Z' suffix accepted);
    zone-less values are taken as UTC.
    """
    try:
        if fmt:
            value = datetime.strptime(text, fmt)
        else:
            cleaned = text.strip()
            if cleaned.endswith(("Z", "z")):
                cleaned = cleaned[:-1] + "+00:00"
            value = datetime.fromisoformat(cleaned)
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {text!r}") from exc
    return as_utc(value)


def _parse_value(kind: str, raw: str):
    if kind == "text":
        return raw
    if kind == "integer":
        return int(raw)
    if kind == "real":
        return float(raw)
    if kind == "boolean":
        if raw.lower() in ("true", "1"):
            return True
        if raw.lower() in ("false", "0"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "timestamp":
        return parse_timestamp(raw)
    raise ValueError(f"unknown kind {kind!r}")


def _open_stream(source):
    """Accept a path, bytes, or file-like; un-gzip binary input transparently.

    Returns (stream, to_close): to_close holds every stream created here,
    innermost last, so callers can release them without touching streams
    they do not own (closing a gzip wrapper leaves its fileobj open).
    """
    to_close = []
    if isinstance(source, str):
        stream = open(source, "rb")
        to_close.append(stream)
    elif isinstance(source, bytes):
        stream = io.BytesIO(source)
    else:
        stream = source
    head = stream.read(2)
    stream.seek(0)
    if isinstance(head, str):  # text-mode file-like, cannot be gzip
        return stream, tuple(to_close)
    if head == b"\x1f\x8b":
        stream = gzip.open(stream)
        to_close.append(stream)
    return stream, tuple(reversed(to_close))


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


class _SchemaBuilder:
    def __init__(self):
        self.schema: dict[str, AttributeInfo] = {}

    def see(self, name: str, kind: str, scope: str):
        info = self.schema.get(name)
        if info is None:
            self.schema[name] = AttributeInfo(kind=kind, scope=scope)
        elif info.scope == "event" and scope == "case":
            # trace-recorded attributes are case-level; that wins
            self.schema[name] = AttributeInfo(kind=info.kind, scope="case")


def parse_xes(source) -> EventLog:
    """Parse an XES document (optionally gzipped) into an EventLog.

    Trace-level attributes become case attributes; ``concept:name`` maps
    to the case id (trace level) and the activity (event level), and
    ``time:timestamp`` to the event timestamp. Everything else becomes a
    named attribute of the level it was recorded at.
    """
    stream, to_close = _open_stream(source)
    schema = _SchemaBuilder()
    cases = []

    trace_attrs = None
    trace_events = None
    event_attrs = None
    depth_meta = 0

    try:
        for action, elem in ET.iterparse(stream, events=("start", "end")):
            tag = _local(elem.tag)
            if action == "start":
                if tag in _XES_META or depth_meta:
                    depth_meta += 1
                elif tag == "trace":
                    trace_attrs, trace_events = {}, []
                elif tag == "event":
                    event_attrs = {}
                continue

            # end events
            if depth_meta:
                depth_meta -= 1
                elem.clear()
                continue
            if tag == "event":
                activity = event_attrs.pop("concept:name", None)
                if activity is None or not isinstance(activity, str):
                    trace_id = trace_attrs.get("concept:name", "<unnamed>")
                    raise DataError(
                        f"event without concept:name in trace {trace_id!r}"
                    )
                timestamp = event_attrs.pop("time:timestamp", None)
                if timestamp is not None and not isinstance(timestamp, datetime):
                    raise DataError(
                        f"time:timestamp is not a date in trace "
                        f"{trace_attrs.get('concept:name', '<unnamed>')!r}"
                    )
                for name, value in event_attrs.items():
                    schema.see(name, kind_of(value), "event")
                trace_events.append(
                    Event(activity=activity, timestamp=timestamp,
                          event_attributes=event_attrs)
                )
                event_attrs = None
                elem.clear()
            elif tag == "trace":
                case_id = trace_attrs.pop("concept:name", None)
                if case_id is None:
                    case_id = f"trace-{len(cases)}"
                for name, value in trace_attrs.items():
                    schema.see(name, kind_of(value), "case")
                cases.append(
                    Case(case_id=str(case_id), case_attributes=trace_attrs,
                         events=tuple(trace_events))
                )
                trace_attrs = trace_events = None
                elem.clear()
            elif tag in _XES_KINDS:
                target = event_attrs if event_attrs is not None else trace_attrs
                if target is not None:
                    key = elem.get("key")
                    raw = elem.get("value", "")
                    if key is None:
                        raise DataError(f"attribute element <{tag}> without key")
                    try:
                        target[key] = _parse_value(_XES_KINDS[tag], raw)
                    except ValueError as exc:
                        raise DataError(f"bad {tag} value for {key!r}: {raw!r}") from exc
                elem.clear()
            elif tag == "log":
                pass
            else:
                if trace_attrs is not None or event_attrs is not None:
                    raise DataError(f"unknown attribute kind <{tag}>")
                elem.clear()
    except ET.ParseError as exc:
        line, column = exc.position if exc.position else (None, None)
        raise ParseError(f"malformed XML: {exc.msg}", line, column) from exc
    finally:
        for created in to_close:
            created.close()

    name = getattr(source, "name", source if isinstance(source, str) else "")
    return EventLog(
        cases=tuple(cases),
        attribute_schema=schema.schema,
        source_meta={"source": str(name), "format": "xes"},
    )


@dataclass(frozen=True)
class CsvColumn:
    column: str
    kind: str = "text"
    scope: str = "infer"  # "case", "event", or "infer"


@dataclass(frozen=True)
class CsvMapping:
    """How CSV columns map onto the event-log model.

    Mirrors the JSON config format field-for-field (snake_case keys).
    """

    case_id_column: str
    activity_column: str
    timestamp_column: Optional[str] = None
    timestamp_format: Optional[str] = None  # strptime pattern; None = ISO-8601
    attribute_columns: tuple = ()

    def __post_init__(self):
        if self.case_id_column == self.activity_column:
            raise ConfigError("case_id_column and activity_column must differ")

    @classmethod
    def from_json(cls, source) -> "CsvMapping":
        if hasattr(source, "read"):
            doc = json.load(source)
        elif isinstance(source, str) and source.lstrip().startswith("{"):
            doc = json.loads(source)
        else:
            with open(source, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        cols = tuple(
            CsvColumn(
                column=c["column"],
                kind=c.get("kind", "text"),
                scope=c.get("scope", "infer"),
            )
            for c in doc.get("attribute_columns", ())
        )
        try:
            return cls(
                case_id_column=doc["case_id_column"],
                activity_column=doc["activity_column"],
                timestamp_column=doc.get("timestamp_column"),
                timestamp_format=doc.get("timestamp_format"),
                attribute_columns=cols,
            )
        except KeyError as exc:
            raise ConfigError(f"csv mapping is missing {exc.args[0]!r}") from exc


def parse_csv(source, mapping: CsvMapping, on_conflict: str = "reject") -> EventLog:
    """Parse a CSV log (one row per event) into an EventLog.

    Rows are grouped by case id, keeping file order within a case; when a
    timestamp column is mapped and every event of a case has a parseable
    timestamp, events are stably sorted by it (file order breaks ties).
    Empty cells and the literal "none" map to the missing marker.
    """
    stream, to_close = _open_stream(source)
    wrapper = None
    if isinstance(stream.read(0), bytes):
        wrapper = io.TextIOWrapper(stream, encoding="utf-8", newline="")
        stream = wrapper

    schema = _SchemaBuilder()
    groups: dict[str, list] = {}
    try:
        reader = csv.DictReader(stream)
        if reader.fieldnames is None:
            raise DataError("empty CSV file")

        header = set(reader.fieldnames)
        needed = [mapping.case_id_column, mapping.activity_column]
        if mapping.timestamp_column:
            needed.append(mapping.timestamp_column)
        needed.extend(c.column for c in mapping.attribute_columns)
        for column in needed:
            if column not in header:
                raise ConfigError(f"column {column!r} not in CSV header")

        row_count = 0
        for number, row in enumerate(reader, start=2):
            row_count += 1
            case_id = row[mapping.case_id_column]
            activity = row[mapping.activity_column]
            timestamp = None
            if mapping.timestamp_column:
                raw = row[mapping.timestamp_column]
                if raw not in ("", "none"):
                    try:
                        timestamp = parse_timestamp(raw, mapping.timestamp_format)
                    except DataError as exc:
                        raise DataError(
                            f"unparseable timestamp {raw!r} at row {number}"
                        ) from exc
            attrs = {}
            for col in mapping.attribute_columns:
                raw = row[col.column]
                if raw in ("", "none"):
                    attrs[col.column] = MISSING
                else:
                    try:
                        attrs[col.column] = _parse_value(col.kind, raw)
                    except ValueError as exc:
                        raise DataError(
                            f"bad {col.kind} value {raw!r} in column "
                            f"{col.column!r} at row {number}"
                        ) from exc
            groups.setdefault(case_id, []).append((timestamp, activity, attrs))
    finally:
        if wrapper is not None:
            wrapper.detach()  # do not let the wrapper close a caller's stream
        for created in to_close:
            created.close()

    if row_count == 0:
        raise DataError("CSV file has a header but no rows")

    case_cols = [c for c in mapping.attribute_columns if c.scope == "case"]
    other_cols = [c for c in mapping.attribute_columns if c.scope != "case"]

    cases = []
    for case_id, rows in groups.items():
        if all(ts is not None for ts, _, _ in rows):
            rows = sorted(rows, key=lambda r: r[0])
        case_attrs = {}
        for col in case_cols:
            values = [a[col.column] for _, _, a in rows
                      if not isinstance(a[col.column], Missing)]
            if values and any(v != values[0] for v in values):
                if on_conflict == "reject":
                    raise DataError(
                        f"case attribute {col.column!r} varies within case "
                        f"{case_id!r}"
                    )
            case_attrs[col.column] = values[0] if values else MISSING
            schema.see(col.column, col.kind, "case")
        events = []
        for ts, activity, attrs in rows:
            event_attrs = {c.column: attrs[c.column] for c in other_cols}
            for col in other_cols:
                schema.see(col.column, col.kind, "event")
            events.append(
                Event(activity=activity, timestamp=ts, event_attributes=event_attrs)
            )
        cases.append(
            Case(case_id=case_id, case_attributes=case_attrs, events=tuple(events))
        )

    name = getattr(source, "name", source if isinstance(source, str) else "")
    log = EventLog(
        cases=tuple(cases),
        attribute_schema=schema.schema,
        source_meta={"source": str(name), "format": "csv"},
    )
    inferred = [c.column for c in mapping.attribute_columns if c.scope == "infer"]
    if inferred:
        scopes, _ = infer_attribute_scope(log)
        log = apply_attribute_scopes(
            log, {n: s for n, s in scopes.items() if n in inferred}, on_conflict
        )
    return log


def infer_attribute_scope(log: EventLog):
    """Classify event-recorded attributes as case-level or event-level.

    An attribute is case-level iff, within every case, all of its
    non-missing occurrences carry one identical value. Trace-recorded
    attributes stay case-level. Returns (scopes, warnings); attributes
    seen at most once per case are classified case-level but flagged
    with a low-support warning, since invariance holds vacuously.
    """
    scopes = {}
    warnings = []
    max_support: dict[str, int] = {}
    invariant: dict[str, bool] = {}
    for case in log.cases:
        per_case: dict[str, list] = {}
        for event in case.events:
            for name, value in event.event_attributes.items():
                if not isinstance(value, Missing):
                    per_case.setdefault(name, []).append(value)
        for name, values in per_case.items():
            max_support[name] = max(max_support.get(name, 0), len(values))
            if any(v != values[0] for v in values[1:]):
                invariant[name] = False
            else:
                invariant.setdefault(name, True)

    for name, info in log.attribute_schema.items():
        if info.scope == "case":
            scopes[name] = "case"
        elif invariant.get(name, True):
            scopes[name] = "case"
            if max_support.get(name, 0) <= 1:
                warnings.append(
                    f"{name}: classified case-level on at most one "
                    f"occurrence per case (low support)"
                )
        else:
            scopes[name] = "event"
    return scopes, warnings


def apply_attribute_scopes(log: EventLog, scopes: dict,
                           on_conflict: str = "reject") -> EventLog:
    """Return a log with the given attributes lifted to case level.

    Event-recorded attributes reclassified as case-level move into
    ``case_attributes`` (their per-case invariant value); conflicting
    values follow the repair policy ("reject" raises, "first-wins"
    keeps the first observed value).
    """
    promote = {n for n, s in scopes.items() if s == "case"
               and log.attribute_schema.get(n, AttributeInfo("text", "event")).scope
               == "event"}
    if not promote:
        return log

    new_cases = []
    for case in log.cases:
        case_attrs = dict(case.case_attributes)
        for name in promote:
            values = [
                e.event_attributes[name]
                for e in case.events
                if name in e.event_attributes
                and not isinstance(e.event_attributes[name], Missing)
            ]
            if values and any(v != values[0] for v in values):
                if on_conflict == "reject":
                    raise DataError(
                        f"case attribute {name!r} varies within case "
                        f"{case.case_id!r}"
                    )
            case_attrs[name] = values[0] if values else MISSING
        events = tuple(
            Event(
                activity=e.activity,
                timestamp=e.timestamp,
                event_attributes={
                    n: v for n, v in e.event_attributes.items() if n not in promote
                },
            )
            for e in case.events
        )
        new_cases.append(
            Case(case_id=case.case_id, case_attributes=case_attrs, events=events)
        )

    new_schema = {
        name: AttributeInfo(info.kind, "case" if name in promote else info.scope)
        for name, info in log.attribute_schema.items()
    }
    return EventLog(
        cases=tuple(new_cases),
        attribute_schema=new_schema,
        source_meta=log.source_meta,
    )


@dataclass(frozen=True, slots=True)
class CaseRow:
    case_id: str
    case_values: tuple
    activities: tuple
    timestamps: tuple  # datetime or MISSING, aligned with activities
    event_values: tuple  # one tuple per event attribute, aligned with activities


@dataclass(frozen=True, slots=True)
class CaseTable:
    """One row per case: scalar case attributes plus per-event field lists."""

    case_attribute_names: tuple
    event_attribute_names: tuple
    rows: dict  # case_id -> CaseRow, in log order

    def __len__(self):
        return len(self.rows)

    def case_value(self, row: CaseRow, name: str):
        return row.case_values[self.case_attribute_names.index(name)]


def prepare(log: EventLog) -> CaseTable:
    """Summarize all event data per case into one row per case.

    Case attributes become scalar columns; activities, timestamps and
    each event attribute become lists aligned by event index, with the
    explicit missing marker where an event lacks a value.
    """
    case_names = tuple(log.case_attribute_names())
    event_names = tuple(log.event_attribute_names())
    rows = {}
    for case in log.cases:
        case_values = tuple(
            case.case_attributes.get(name, MISSING) for name in case_names
        )
        activities = tuple(e.activity for e in case.events)
        timestamps = tuple(
            e.timestamp if e.timestamp is not None else MISSING
            for e in case.events
        )
        event_values = tuple(
            tuple(e.event_attributes.get(name, MISSING) for e in case.events)
            for name in event_names
        )
        rows[case.case_id] = CaseRow(
            case_id=case.case_id,
            case_values=case_values,
            activities=activities,
            timestamps=timestamps,
            event_values=event_values,
        )
    return CaseTable(
        case_attribute_names=case_names,
        event_attribute_names=event_names,
        rows=rows,
    )
