"""Immutable event-log data model with validation and summary statistics.

An event log is a sequence of cases; each case carries invariant case
attributes plus an ordered sequence of events (activity, optional
timestamp, event attributes). Attribute values are plain Python values
(str, int, float, bool, datetime) plus the explicit ``MISSING`` marker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Optional, Sequence, Union


class Missing:
    """Singleton marker for an explicitly absent attribute value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "none"

    def __str__(self):
        return "none"

    def __reduce__(self):
        return (Missing, ())


MISSING = Missing()

AttrValue = Union[str, int, float, bool, datetime, Missing]

#: Attribute kinds, matching the XES element vocabulary.
KINDS = ("text", "integer", "real", "boolean", "timestamp")

TIMESTAMP_MIN_YEAR = 1900
TIMESTAMP_MAX_YEAR = 2200


def kind_of(value: AttrValue) -> str:
    """Classify a value into its attribute kind ("missing" for the marker)."""
    if isinstance(value, Missing):
        return "missing"
    if isinstance(value, bool):  # bool before int: bool is an int subclass
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "real"
    if isinstance(value, datetime):
        return "timestamp"
    if isinstance(value, str):
        return "text"
    raise TypeError(f"unsupported attribute value type: {type(value)!r}")


def check_value(value: AttrValue) -> Optional[str]:
    """Return a violation message if the value breaks a type invariant."""
    if isinstance(value, Missing):
        return None
    if isinstance(value, float) and not math.isfinite(value):
        return "real value is not finite"
    if isinstance(value, datetime):
        if not (TIMESTAMP_MIN_YEAR <= value.year <= TIMESTAMP_MAX_YEAR):
            return f"timestamp year {value.year} outside {TIMESTAMP_MIN_YEAR}-{TIMESTAMP_MAX_YEAR}"
    return None


def as_utc(value: datetime) -> datetime:
    """Normalize a timestamp to UTC; zone-less values are taken as UTC."""
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


@dataclass(frozen=True, slots=True)
class Event:
    activity: str
    timestamp: Optional[datetime] = None
    event_attributes: Mapping[str, AttrValue] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class Case:
    case_id: str
    case_attributes: Mapping[str, AttrValue] = field(default_factory=dict)
    events: Sequence[Event] = ()


@dataclass(frozen=True, slots=True)
class AttributeInfo:
    kind: str
    scope: str  # "case" or "event"


@dataclass(frozen=True, slots=True)
class EventLog:
    """Parsed log. Immutable after construction; safe for concurrent reads."""

    cases: Sequence[Case] = ()
    attribute_schema: Mapping[str, AttributeInfo] = field(default_factory=dict)
    source_meta: Mapping[str, str] = field(default_factory=dict)

    def case_attribute_names(self):
        return sorted(
            n for n, info in self.attribute_schema.items() if info.scope == "case"
        )

    def event_attribute_names(self):
        return sorted(
            n for n, info in self.attribute_schema.items() if info.scope == "event"
        )


@dataclass(frozen=True, slots=True)
class LogSummary:
    case_count: int
    distinct_activity_count: int
    trace_length_min: int
    trace_length_max: int
    trace_length_mean: float
    case_attribute_names: tuple
    event_attribute_names: tuple


@dataclass(frozen=True, slots=True)
class Violation:
    case_id: Optional[str]
    rule: str
    detail: str = ""


@dataclass(frozen=True, slots=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_log(log: EventLog) -> ValidationReport:
    """Check every model invariant; violations are data, not failures."""
    out = []
    seen_ids = set()
    for case in log.cases:
        if case.case_id in seen_ids:
            out.append(Violation(case.case_id, "duplicate case id"))
        seen_ids.add(case.case_id)

        if not case.events:
            out.append(Violation(case.case_id, "empty trace", "case has no events"))

        for name, value in case.case_attributes.items():
            msg = check_value(value)
            if msg:
                out.append(Violation(case.case_id, "invalid value", f"{name}: {msg}"))
            _check_schema(log, case.case_id, name, value, "case", out)

        stamps = [e.timestamp for e in case.events]
        if case.events and all(t is not None for t in stamps):
            if any(a > b for a, b in zip(stamps, stamps[1:])):
                out.append(
                    Violation(case.case_id, "events out of order",
                              "timestamps are not non-decreasing")
                )

        # Attributes declared case-scope must not vary across a case's events.
        observed: dict = {}
        for event in case.events:
            if not event.activity:
                out.append(Violation(case.case_id, "empty activity label"))
            if event.timestamp is not None:
                msg = check_value(event.timestamp)
                if msg:
                    out.append(Violation(case.case_id, "invalid value",
                                         f"timestamp: {msg}"))
            for name, value in event.event_attributes.items():
                msg = check_value(value)
                if msg:
                    out.append(
                        Violation(case.case_id, "invalid value", f"{name}: {msg}")
                    )
                _check_schema(log, case.case_id, name, value, None, out)
                info = log.attribute_schema.get(name)
                if info is not None and info.scope == "case" and not isinstance(
                    value, Missing
                ):
                    if name in case.case_attributes and not isinstance(
                        case.case_attributes[name], Missing
                    ):
                        anchor = case.case_attributes[name]
                    else:
                        anchor = observed.setdefault(name, value)
                    if value != anchor:
                        out.append(
                            Violation(case.case_id, "case-attribute not invariant",
                                      f"{name} changes within the case")
                        )
    return ValidationReport(tuple(out))


def _check_schema(log, case_id, name, value, expect_scope, out):
    info = log.attribute_schema.get(name)
    if info is None:
        out.append(Violation(case_id, "attribute missing from schema", name))
        return
    if expect_scope is not None and info.scope != expect_scope:
        out.append(
            Violation(case_id, "attribute scope mismatch",
                      f"{name} recorded at {expect_scope} level but declared {info.scope}")
        )
    vkind = kind_of(value)
    if vkind != "missing" and vkind != info.kind:
        out.append(
            Violation(case_id, "attribute kind mismatch",
                      f"{name} is {vkind}, schema says {info.kind}")
        )


def summarize(log: EventLog) -> LogSummary:
    """Summary statistics; deterministic and insensitive to case order."""
    lengths = [len(c.events) for c in log.cases]
    activities = set()
    for case in log.cases:
        for event in case.events:
            activities.add(event.activity)
    n = len(log.cases)
    return LogSummary(
        case_count=n,
        distinct_activity_count=len(activities),
        trace_length_min=min(lengths) if lengths else 0,
        trace_length_max=max(lengths) if lengths else 0,
        trace_length_mean=(sum(lengths) / n) if n else 0.0,
        case_attribute_names=tuple(log.case_attribute_names()),
        event_attribute_names=tuple(log.event_attribute_names()),
    )


def to_jsonable(value):
    """Attribute value as a JSON-friendly scalar.

    The missing marker becomes null and timestamps become UTC ISO-8601
    strings; everything else is already representable.
    """
    if isinstance(value, Missing):
        return None
    if isinstance(value, datetime):
        return as_utc(value).isoformat().replace("+00:00", "Z")
    return value
