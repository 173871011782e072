"""Projections and generalization transforms.

A projection picks which event-log fields an adversary is assumed to
see: activities, timestamps at some resolution, and subsets of the
event and case attributes. Presets A through F cover the standard
combinations; F (case attributes only) routes to case-attribute
uniqueness rather than trace analysis.
"""

from __future__ import annotations

import bisect
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import datetime
from typing import NamedTuple, Optional

from .errors import ConfigError, DataError, OutputError
from .ingest import CaseTable
from .model import (
    MISSING,
    AttributeInfo,
    Case,
    Event,
    EventLog,
    Missing,
    as_utc,
)

RESOLUTIONS = ("second", "minute", "hour", "day", "month", "year")

# ISO-8601 prefix lengths: "2019-03-04T00:47:44"
_TOKEN_LENGTH = {
    "year": 4, "month": 7, "day": 10, "hour": 13, "minute": 16, "second": 19,
}

# attribute name used for generalized time tokens in transformed logs
TIME_BUCKET = "time:bucket"

# activity label used when a transform suppresses activities
SUPPRESSED_ACTIVITY = "event"


class BinningWarning(UserWarning):
    pass


def generalize_timestamp(t: datetime, resolution: str) -> str:
    """Truncate a timestamp to the given resolution, as a UTC ISO prefix.

    Truncation, never rounding: day resolution of 23:59 on March 4th is
    still "2019-03-04".
    """
    length = _TOKEN_LENGTH.get(resolution)
    if length is None:
        raise ConfigError(f"unknown timestamp resolution {resolution!r}")
    return as_utc(t).strftime("%Y-%m-%dT%H:%M:%S")[:length]


def truncate_timestamp(t: datetime, resolution: str) -> datetime:
    """The earliest instant sharing t's generalized token."""
    t = as_utc(t).replace(microsecond=0)
    if resolution == "second":
        return t
    if resolution == "minute":
        return t.replace(second=0)
    if resolution == "hour":
        return t.replace(minute=0, second=0)
    if resolution == "day":
        return t.replace(hour=0, minute=0, second=0)
    if resolution == "month":
        return t.replace(day=1, hour=0, minute=0, second=0)
    if resolution == "year":
        return t.replace(month=1, day=1, hour=0, minute=0, second=0)
    raise ConfigError(f"unknown timestamp resolution {resolution!r}")


@dataclass(frozen=True, slots=True)
class ProjectionSpec:
    """Which fields of a prepared log the analysis may see.

    ``event_attributes`` / ``case_attributes``: None means all observed
    attributes of that scope, an empty tuple means none, and a non-empty
    tuple names a subset (point order follows the tuple).
    """

    include_activities: bool = False
    include_timestamps: bool = False
    timestamp_resolution: str = "second"
    event_attributes: Optional[tuple] = ()
    case_attributes: Optional[tuple] = ()

    def __post_init__(self):
        if (
            not self.include_activities
            and not self.include_timestamps
            and self.event_attributes == ()
            and self.case_attributes == ()
        ):
            raise ConfigError("projection includes no fields at all")
        if self.include_timestamps and self.timestamp_resolution not in RESOLUTIONS:
            raise ConfigError(
                f"unknown timestamp resolution {self.timestamp_resolution!r}"
            )

    def replace_resolution(self, resolution: str) -> "ProjectionSpec":
        return ProjectionSpec(
            include_activities=self.include_activities,
            include_timestamps=self.include_timestamps,
            timestamp_resolution=resolution,
            event_attributes=self.event_attributes,
            case_attributes=self.case_attributes,
        )

    def to_json(self) -> dict:
        def enc(names):
            if names is None:
                return "all"
            if names == ():
                return "none"
            return list(names)

        return {
            "include_activities": self.include_activities,
            "include_timestamps": self.include_timestamps,
            "timestamp_resolution": self.timestamp_resolution,
            "include_event_attributes": enc(self.event_attributes),
            "include_case_attributes": enc(self.case_attributes),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ProjectionSpec":
        if "preset" in doc:
            spec = preset(doc["preset"])
            if "timestamp_resolution" in doc:
                spec = spec.replace_resolution(doc["timestamp_resolution"])
            return spec

        def dec(value):
            if value == "all":
                return None
            if value == "none":
                return ()
            if isinstance(value, list):
                return tuple(value)
            raise ConfigError(
                f"attribute subset must be 'all', 'none' or a list, got {value!r}"
            )

        try:
            return cls(
                include_activities=bool(doc["include_activities"]),
                include_timestamps=bool(doc.get("include_timestamps", False)),
                timestamp_resolution=doc.get("timestamp_resolution", "second"),
                event_attributes=dec(doc.get("include_event_attributes", "none")),
                case_attributes=dec(doc.get("include_case_attributes", "none")),
            )
        except KeyError as exc:
            raise ConfigError(f"projection spec missing {exc.args[0]!r}") from exc


_PRESETS = {
    "A": dict(include_activities=True, include_timestamps=True),
    "B": dict(include_activities=True, event_attributes=None, case_attributes=None),
    "C": dict(include_activities=True, event_attributes=None),
    "D": dict(include_activities=True, case_attributes=None),
    "E": dict(include_activities=True),
    "F": dict(case_attributes=None),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str) -> ProjectionSpec:
    """Standard projections A..F.

    A: activities+timestamps; B: activities+event+case attributes;
    C: activities+event attributes; D: activities+case attributes;
    E: activities only; F: case attributes only (case-uniqueness route).
    """
    fields = _PRESETS.get(str(name).strip().upper())
    if fields is None:
        raise ConfigError(f"unknown projection preset {name!r}")
    return ProjectionSpec(**fields)


def identity_spec() -> ProjectionSpec:
    """Everything included at full resolution; transform with it is a no-op."""
    return ProjectionSpec(
        include_activities=True,
        include_timestamps=True,
        timestamp_resolution="second",
        event_attributes=None,
        case_attributes=None,
    )


class Point(NamedTuple):
    activity: Optional[str]
    timestamp_bucket: Optional[str]
    event_values: tuple


@dataclass(frozen=True, slots=True)
class ProjectedCase:
    case_id: str
    ordinal: int  # stable position in the prepared table, used for seeding
    case_key: tuple
    points: tuple  # one Point per event, in trace order
    spec: ProjectionSpec


@dataclass(frozen=True)
class BinningSpec:
    """Numeric generalization: equal-frequency bins or explicit edges.

    Equal-frequency bins are labeled by the minimum observed value of
    the bin; explicit edges label by the bin's left edge.
    """

    attribute: str
    bin_count: int = 100
    edges: Optional[tuple] = None

    def __post_init__(self):
        if self.edges is not None:
            edges = tuple(self.edges)
            if len(edges) < 2:
                raise ConfigError("explicit binning needs at least two edges")
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise ConfigError("bin edges must be strictly increasing")
            object.__setattr__(self, "edges", edges)
        elif self.bin_count < 1:
            raise ConfigError("bin_count must be at least 1")

    def to_json(self) -> dict:
        doc = {"attribute": self.attribute}
        if self.edges is not None:
            doc["edges"] = list(self.edges)
        else:
            doc["bin_count"] = self.bin_count
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "BinningSpec":
        try:
            attribute = doc["attribute"]
        except KeyError as exc:
            raise ConfigError("binning spec missing 'attribute'") from exc
        if "edges" in doc:
            return cls(attribute=attribute, edges=tuple(doc["edges"]))
        return cls(attribute=attribute, bin_count=int(doc.get("bin_count", 100)))


def bin_numeric(values, spec: BinningSpec) -> list:
    """Map numeric values to bin labels.

    Equal-frequency strategy puts edges at empirical quantiles
    i/bin_count with ties assigned to the lower bin, so the mapping is a
    pure function of the value multiset. Labels are the minimum value of
    the bin (explicit edges: the left edge).
    """
    values = list(values)
    if not values:
        raise DataError("no values to bin")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise DataError(f"cannot bin non-numeric value {v!r}")
        if v != v or v in (float("inf"), float("-inf")):
            raise DataError(f"cannot bin non-finite value {v!r}")

    if spec.edges is not None:
        edges = spec.edges
        labels = []
        clamped = False
        for v in values:
            i = bisect.bisect_right(edges, v) - 1
            if i < 0:
                i, clamped = 0, True
            elif i >= len(edges) - 1:
                if v > edges[-1]:
                    clamped = True
                i = len(edges) - 2
            labels.append(edges[i])
        if clamped:
            warnings.warn(
                f"{spec.attribute}: values outside the edge range were "
                f"clamped to the nearest bin",
                BinningWarning,
                stacklevel=2,
            )
        return labels

    ordered = sorted(values)
    n = len(ordered)
    first_rank = {}
    for i, v in enumerate(ordered):
        if v not in first_rank:
            first_rank[v] = i
    bins = spec.bin_count
    bin_of = {v: (rank * bins) // n for v, rank in first_rank.items()}
    label_of = {}
    for v in sorted(first_rank):
        label_of.setdefault(bin_of[v], v)
    if bins > len(first_rank):
        warnings.warn(
            f"{spec.attribute}: {bins} bins requested but only "
            f"{len(first_rank)} distinct values; using one bin per value",
            BinningWarning,
            stacklevel=2,
        )
    return [label_of[bin_of[v]] for v in values]


def _resolve(requested, available, what) -> tuple:
    if requested is None:
        return tuple(available)
    missing = [name for name in requested if name not in available]
    if missing:
        raise ConfigError(f"unknown {what} attribute(s): {', '.join(missing)}")
    return tuple(requested)


def project(table: CaseTable, spec: ProjectionSpec) -> list:
    """Turn prepared cases into adversary-visible point multisets.

    Each event yields one Point holding exactly the included fields;
    missing event-attribute values stay in the tuple as the explicit
    marker, since the adversary sees the gap too.
    """
    case_names = _resolve(spec.case_attributes, table.case_attribute_names, "case")
    event_names = _resolve(spec.event_attributes, table.event_attribute_names, "event")
    case_idx = [table.case_attribute_names.index(n) for n in case_names]
    event_idx = [table.event_attribute_names.index(n) for n in event_names]
    resolution = spec.timestamp_resolution

    projected = []
    for ordinal, row in enumerate(table.rows.values()):
        case_key = tuple(row.case_values[i] for i in case_idx)
        tokens = None
        if spec.include_timestamps:
            if any(isinstance(ts, Missing) for ts in row.timestamps):
                raise DataError(
                    f"case {row.case_id!r} has events without timestamps"
                )
            tokens = [generalize_timestamp(ts, resolution) for ts in row.timestamps]
        points = []
        for j in range(len(row.activities)):
            points.append(
                Point(
                    activity=row.activities[j] if spec.include_activities else None,
                    timestamp_bucket=tokens[j] if tokens is not None else None,
                    event_values=tuple(row.event_values[i][j] for i in event_idx),
                )
            )
        projected.append(
            ProjectedCase(
                case_id=row.case_id,
                ordinal=ordinal,
                case_key=case_key,
                points=tuple(points),
                spec=spec,
            )
        )
    return projected


def _binned_maps(log: EventLog, bins) -> dict:
    """attribute name -> {value: label} for every binning spec."""
    maps = {}
    for bspec in bins:
        info = log.attribute_schema.get(bspec.attribute)
        if info is None:
            raise ConfigError(f"unknown attribute to bin: {bspec.attribute!r}")
        if info.kind not in ("integer", "real"):
            raise ConfigError(
                f"attribute {bspec.attribute!r} has kind {info.kind}; "
                f"only numeric attributes can be binned"
            )
        values = []
        if info.scope == "case":
            for case in log.cases:
                v = case.case_attributes.get(bspec.attribute, MISSING)
                if not isinstance(v, Missing):
                    values.append(v)
        else:
            for case in log.cases:
                for event in case.events:
                    v = event.event_attributes.get(bspec.attribute, MISSING)
                    if not isinstance(v, Missing):
                        values.append(v)
        if not values:
            raise DataError(f"attribute {bspec.attribute!r} has no values to bin")
        labels = bin_numeric(values, bspec)
        maps[bspec.attribute] = dict(zip(values, labels))
    return maps


def transform_log(log: EventLog, spec: ProjectionSpec, bins=()) -> EventLog:
    """Materialize a minimized copy of the log.

    Excluded fields are dropped; timestamps coarser than a second are
    rewritten into a text attribute with the generalized token (at
    second resolution they stay real timestamps, so the identity spec
    is a no-op); binned attributes are replaced by their bin labels.
    Suppressed activities are replaced by a constant label, because
    events must still carry one.
    """
    schema = log.attribute_schema
    case_names = _resolve(
        spec.case_attributes,
        [n for n, i in schema.items() if i.scope == "case"],
        "case",
    )
    event_names = _resolve(
        spec.event_attributes,
        [n for n, i in schema.items() if i.scope == "event"],
        "event",
    )
    keep_case, keep_event = set(case_names), set(event_names)
    bucket_times = spec.include_timestamps and spec.timestamp_resolution != "second"
    if bucket_times and TIME_BUCKET in schema:
        raise DataError(f"log already has an attribute named {TIME_BUCKET!r}")
    value_maps = _binned_maps(log, bins)
    for bspec in bins:
        name = bspec.attribute
        if name not in keep_case and name not in keep_event:
            raise ConfigError(
                f"attribute {name!r} is binned but not included by the projection"
            )

    def mapped(name, value):
        vm = value_maps.get(name)
        if vm is None or isinstance(value, Missing):
            return value
        return vm[value]

    cases = []
    for case in log.cases:
        case_attrs = {
            n: mapped(n, v) for n, v in case.case_attributes.items() if n in keep_case
        }
        events = []
        for event in case.events:
            attrs = {
                n: mapped(n, v)
                for n, v in event.event_attributes.items()
                if n in keep_event
            }
            timestamp = None
            if spec.include_timestamps:
                if event.timestamp is None:
                    raise DataError(
                        f"case {case.case_id!r} has events without timestamps"
                    )
                if bucket_times:
                    attrs[TIME_BUCKET] = generalize_timestamp(
                        event.timestamp, spec.timestamp_resolution
                    )
                else:
                    timestamp = truncate_timestamp(event.timestamp, "second")
            events.append(
                Event(
                    activity=event.activity if spec.include_activities
                    else SUPPRESSED_ACTIVITY,
                    timestamp=timestamp,
                    event_attributes=attrs,
                )
            )
        cases.append(
            Case(case_id=case.case_id, case_attributes=case_attrs,
                 events=tuple(events))
        )

    new_schema = {}
    for name, info in schema.items():
        if (info.scope == "case" and name in keep_case) or (
            info.scope == "event" and name in keep_event
        ):
            kind = info.kind
            if name in value_maps:
                labels = set(value_maps[name].values())
                kind = "integer" if all(
                    isinstance(l, int) and not isinstance(l, bool) for l in labels
                ) else "real"
            new_schema[name] = AttributeInfo(kind, info.scope)
    if bucket_times:
        new_schema[TIME_BUCKET] = AttributeInfo("text", "event")

    return EventLog(
        cases=tuple(cases),
        attribute_schema=new_schema,
        source_meta=dict(log.source_meta),
    )


_XES_TAGS = {
    "text": "string",
    "integer": "int",
    "real": "float",
    "boolean": "boolean",
    "timestamp": "date",
}


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, datetime):
        return as_utc(value).isoformat().replace("+00:00", "Z")
    return str(value)


def _xes_value_tag(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, datetime):
        return "date"
    return "string"


def write_xes(log: EventLog, target) -> None:
    """Serialize an EventLog as XES (the same grammar ingest reads).

    Missing values are not written; they come back as gaps, which
    prepare() turns into explicit markers again.
    """
    root = ET.Element("log", {"xes.version": "1.0"})
    ET.SubElement(root, "extension", {
        "name": "Concept", "prefix": "concept",
        "uri": "http://www.xes-standard.org/concept.xesext",
    })
    ET.SubElement(root, "extension", {
        "name": "Time", "prefix": "time",
        "uri": "http://www.xes-standard.org/time.xesext",
    })

    def put(parent, key, value):
        if isinstance(value, Missing):
            return
        ET.SubElement(parent, _xes_value_tag(value),
                      {"key": key, "value": _render(value)})

    for case in log.cases:
        trace = ET.SubElement(root, "trace")
        put(trace, "concept:name", case.case_id)
        for name in sorted(case.case_attributes):
            put(trace, name, case.case_attributes[name])
        for event in case.events:
            el = ET.SubElement(trace, "event")
            put(el, "concept:name", event.activity)
            if event.timestamp is not None:
                put(el, "time:timestamp", event.timestamp)
            for name in sorted(event.event_attributes):
                put(el, name, event.event_attributes[name])

    tree = ET.ElementTree(root)
    ET.indent(tree)
    try:
        if hasattr(target, "write"):
            tree.write(target, encoding="unicode", xml_declaration=True)
        else:
            with open(target, "wb") as fh:
                tree.write(fh, encoding="utf-8", xml_declaration=True)
    except OSError as exc:
        raise OutputError(f"cannot write XES file: {exc}") from exc
