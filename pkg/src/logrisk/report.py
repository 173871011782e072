"""Run configuration, orchestration and report assembly.

A run config names input logs and the analyses to perform; the
orchestrator ingests each log, runs the selected analyses, and emits a
canonical JSON report plus a heatmap CSV. Report bodies carry no
timestamps and all randomness flows from the single master seed, so the
same config on the same input yields byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
import os
import warnings
from dataclasses import dataclass
from typing import Optional

import jsonschema

from ._version import VERSION
from .case_uniqueness import build_contingency, combination_sweep, sample_uniqueness
from .errors import ConfigError, DataError, EXIT_CODES, LogriskError, OutputError
from .ingest import CsvMapping, parse_csv, parse_xes, prepare
from .model import EventLog, summarize, to_jsonable, validate_log
from .population import (
    estimate_population_uniqueness,
    fit_copula,
    fit_independence,
    population_size_for,
)
from .projection import BinningSpec, ProjectionSpec, preset, transform_log, write_xes
from .trace_uniqueness import Knowledge, SamplingPlan, uniqueness_sweep

SCHEMA_VERSION = "1"


def _fmt(value: float) -> str:
    return f"{value:.3f}"


@dataclass(frozen=True)
class InputSpec:
    path: str
    format: str  # "xes" or "csv"
    mapping_path: Optional[str] = None

    @property
    def display_name(self) -> str:
        return os.path.basename(self.path)


def input_spec(path: str, format: Optional[str] = None,
               mapping: Optional[str] = None) -> InputSpec:
    """Build an input spec, inferring the format from the suffix."""
    fmt = format
    if fmt is None:
        lower = path.lower()
        if lower.endswith((".xes", ".xes.gz", ".xml", ".xml.gz")):
            fmt = "xes"
        elif lower.endswith((".csv", ".csv.gz")):
            fmt = "csv"
        else:
            raise ConfigError(
                f"cannot infer the log format of {path!r}; pass it explicitly"
            )
    if fmt not in ("xes", "csv"):
        raise ConfigError(f"unknown log format {fmt!r}")
    if fmt == "csv" and not mapping:
        raise ConfigError(f"CSV input {path!r} needs a column mapping")
    return InputSpec(path=path, format=fmt, mapping_path=mapping)


def load_log(spec: InputSpec) -> EventLog:
    try:
        if spec.format == "xes":
            return parse_xes(spec.path)
        mapping = CsvMapping.from_json(spec.mapping_path)
        return parse_csv(spec.path, mapping)
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {exc.filename}") from exc
    except OSError as exc:
        raise DataError(f"cannot read {spec.path!r}: {exc}") from exc


@dataclass(frozen=True)
class EstimateSettings:
    model: str = "independence"  # or "copula"
    population_size: Optional[int] = None
    sampling_fraction: Optional[float] = None
    smoothing: float = 0.5
    runs: int = 5

    def __post_init__(self):
        if self.model not in ("independence", "copula"):
            raise ConfigError(f"unknown estimator model {self.model!r}")
        if (self.population_size is None) == (self.sampling_fraction is None):
            raise ConfigError(
                "estimation needs exactly one of population_size and "
                "sampling_fraction"
            )
        if self.population_size is not None and self.population_size < 1:
            raise ConfigError("population_size must be positive")

    def size_for(self, n: int) -> int:
        if self.population_size is not None:
            return self.population_size
        return population_size_for(n, self.sampling_fraction)


@dataclass(frozen=True)
class CaseAnalysis:
    combos: tuple  # attribute-name tuples
    denylist: tuple = ()
    estimate: Optional[EstimateSettings] = None

    def __post_init__(self):
        if not self.combos:
            raise ConfigError("case-uniqueness needs at least one combination")
        denied = set(self.denylist)
        for combo in self.combos:
            bad = denied.intersection(combo)
            if bad:
                raise ConfigError(
                    f"combination {list(combo)} uses denylisted "
                    f"attribute(s): {', '.join(sorted(bad))}"
                )


@dataclass(frozen=True)
class TraceAnalysis:
    projections: tuple  # (label, ProjectionSpec) pairs
    knowledge: tuple  # Knowledge values
    runs: int = 5
    nested: bool = True
    containment: str = "multiset"
    timestamp_resolution: str = "second"

    def __post_init__(self):
        if not self.projections:
            raise ConfigError("trace-uniqueness needs at least one projection")
        if not self.knowledge:
            raise ConfigError("trace-uniqueness needs at least one knowledge level")

    def plan(self, seed: int) -> SamplingPlan:
        return SamplingPlan(
            knowledge=self.knowledge[0],
            runs=self.runs,
            master_seed=seed,
            nested=self.nested,
        )


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple  # InputSpec
    case: Optional[CaseAnalysis] = None
    trace: Optional[TraceAnalysis] = None
    seed: int = 42
    pseudonymize: bool = False
    list_unique_cases: bool = False
    output_dir: str = "."

    def __post_init__(self):
        if not self.inputs:
            raise ConfigError("no input logs configured")
        if self.case is None and self.trace is None:
            raise ConfigError("no analyses selected")


def _parse_projections(items, resolution: str) -> tuple:
    out = []
    for item in items:
        if isinstance(item, str):
            spec = preset(item)
            label = item.strip().upper()
        elif isinstance(item, dict):
            label = item.get("name")
            if not label:
                raise ConfigError("custom projection entries need a 'name'")
            spec = ProjectionSpec.from_json(item.get("spec", item))
        else:
            raise ConfigError(f"bad projection entry: {item!r}")
        if spec.include_timestamps:
            spec = spec.replace_resolution(resolution)
        out.append((label, spec))
    return tuple(out)


def parse_case_analysis(doc: dict) -> CaseAnalysis:
    combos = doc.get("combos")
    if isinstance(combos, dict):
        combos = combos.get("combos")
    if not isinstance(combos, list):
        raise ConfigError("case_uniqueness.combos must be a list of name lists")
    estimate = None
    if "estimate" in doc and doc["estimate"] is not None:
        e = doc["estimate"]
        if not isinstance(e, dict):
            raise ConfigError("case_uniqueness.estimate must be an object")
        estimate = EstimateSettings(
            model=e.get("model", "independence"),
            population_size=e.get("population_size"),
            sampling_fraction=e.get("sampling_fraction"),
            smoothing=float(e.get("smoothing", 0.5)),
            runs=int(e.get("runs", 5)),
        )
    return CaseAnalysis(
        combos=tuple(tuple(c) for c in combos),
        denylist=tuple(doc.get("denylist", ())),
        estimate=estimate,
    )


def parse_trace_analysis(doc: dict) -> TraceAnalysis:
    resolution = doc.get("timestamp_resolution", "second")
    projections = _parse_projections(
        doc.get("projections", ["A", "B", "C", "D", "E"]), resolution
    )
    knowledge = doc.get("knowledge")
    if not isinstance(knowledge, list) or not knowledge:
        raise ConfigError("trace_uniqueness.knowledge must be a non-empty list")
    parsed = tuple(
        k if isinstance(k, Knowledge) else Knowledge.parse(str(k))
        for k in knowledge
    )
    return TraceAnalysis(
        projections=projections,
        knowledge=parsed,
        runs=int(doc.get("runs", 5)),
        nested=bool(doc.get("nested", True)),
        containment=doc.get("containment", "multiset"),
        timestamp_resolution=resolution,
    )


def config_from_json(doc: dict, base_dir: str = ".") -> RunConfig:
    """Parse a run-config document; relative paths resolve against base_dir."""
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")

    def resolve(path):
        if path is None:
            return None
        return os.path.normpath(os.path.join(base_dir, path))

    inputs = []
    for entry in doc.get("inputs", ()):
        if isinstance(entry, str):
            entry = {"path": entry}
        if "path" not in entry:
            raise ConfigError("every input needs a 'path'")
        inputs.append(
            input_spec(
                resolve(entry["path"]),
                entry.get("format"),
                resolve(entry.get("mapping")),
            )
        )

    analyses = doc.get("analyses", {})
    if not isinstance(analyses, dict):
        raise ConfigError("'analyses' must be an object")
    case = trace = None
    if "case_uniqueness" in analyses:
        case = parse_case_analysis(analyses["case_uniqueness"])
    if "trace_uniqueness" in analyses:
        trace = parse_trace_analysis(analyses["trace_uniqueness"])

    return RunConfig(
        inputs=tuple(inputs),
        case=case,
        trace=trace,
        seed=int(doc.get("seed", 42)),
        pseudonymize=bool(doc.get("pseudonymize", False)),
        list_unique_cases=bool(doc.get("list_unique_cases", False)),
        output_dir=resolve(doc.get("output_dir", ".")),
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {exc.filename}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"run config is not valid JSON: {exc}") from exc
    return config_from_json(doc, os.path.dirname(os.path.abspath(path)))


def _config_echo(config: RunConfig, names: dict) -> dict:
    inputs = []
    for spec in config.inputs:
        entry = {"format": spec.format}
        if config.pseudonymize:
            entry["name"] = names[spec.path]
        else:
            entry["name"] = spec.display_name
            entry["path"] = spec.path
            if spec.mapping_path:
                entry["mapping"] = spec.mapping_path
        inputs.append(entry)
    doc = {"inputs": inputs, "seed": config.seed,
           "pseudonymize": config.pseudonymize}
    if config.case:
        case = {
            "combos": [list(c) for c in config.case.combos],
            "denylist": list(config.case.denylist),
        }
        if config.case.estimate:
            e = config.case.estimate
            case["estimate"] = {
                "model": e.model,
                "population_size": e.population_size,
                "sampling_fraction": e.sampling_fraction,
                "smoothing": e.smoothing,
                "runs": e.runs,
            }
        doc["case_uniqueness"] = case
    if config.trace:
        t = config.trace
        doc["trace_uniqueness"] = {
            "projections": [
                {"name": label, "spec": spec.to_json()}
                for label, spec in t.projections
            ],
            "knowledge": [k.label() for k in t.knowledge],
            "runs": t.runs,
            "nested": t.nested,
            "containment": t.containment,
            "timestamp_resolution": t.timestamp_resolution,
            "fraction_rounding": "ceil",
        }
    return doc


def case_section(log: EventLog, analysis: CaseAnalysis, seed: int,
                 list_unique_cases: bool = False) -> dict:
    """Case-uniqueness rows (and optional population estimates) for one log."""
    table = prepare(log)
    if not table.case_attribute_names:
        raise ConfigError("not evaluable: log has no case attributes")
    sweep = combination_sweep(table, analysis.combos)

    rows = []
    for combo, result in sweep.results:
        row = {
            "attributes": list(combo),
            "sample_uniqueness": result.sample_uniqueness,
            "formatted": _fmt(result.sample_uniqueness),
            "unique_case_count": len(result.unique_case_ids),
            "cell_count": result.cell_count,
            "n": result.n,
        }
        if result.note:
            row["note"] = result.note
        if list_unique_cases:
            row["unique_case_ids"] = [str(c) for c in result.unique_case_ids]
        rows.append(row)

    section = {
        "rows": rows,
        "monotonicity_violations": list(sweep.monotonicity_violations),
    }

    if analysis.estimate:
        e = analysis.estimate
        estimates = []
        for i, (combo, result) in enumerate(sweep.results):
            ct = build_contingency(table, combo)
            model_kind = e.model
            note = ""
            if model_kind == "copula" and len(combo) < 2:
                model_kind = "independence"
                note = "single attribute: copula degenerates to independence"
            if model_kind == "copula":
                model = fit_copula(table, combo, e.smoothing)
            else:
                model = fit_independence(ct, e.smoothing)
            est = estimate_population_uniqueness(
                ct, model, e.size_for(ct.n), runs=e.runs, seed=seed + i,
            )
            entry = {
                "attributes": list(combo),
                "model": model_kind,
                "pop_uniqueness": est.pop_uniqueness,
                "formatted": _fmt(est.pop_uniqueness),
                "conditional_likelihood": est.conditional_likelihood,
                "population_size": est.population_size,
                "runs": est.runs,
                "per_run": [[u, k] for u, k in est.per_run],
                "smoothing": e.smoothing,
            }
            if note:
                entry["note"] = note
            estimates.append(entry)
        section["population"] = estimates
    return section


def trace_section(log: EventLog, analysis: TraceAnalysis, seed: int):
    """Trace-uniqueness matrix for one log; returns (section, heatmap rows)."""
    table = prepare(log)
    matrix = uniqueness_sweep(
        table,
        analysis.projections,
        analysis.knowledge,
        analysis.plan(seed),
        containment=analysis.containment,
    )
    cells = {}
    heatmap = []
    for row_label in matrix.projection_labels:
        row_cells = {}
        heat_row = []
        for col_label in matrix.knowledge_labels:
            cell = matrix.cells[(row_label, col_label)]
            if cell.result is None:
                row_cells[col_label] = {"na_reason": cell.reason}
                heat_row.append("NA")
            else:
                r = cell.result
                formatted = _fmt(r.mean_uniqueness)
                row_cells[col_label] = {
                    "mean": r.mean_uniqueness,
                    "std": r.std_dev,
                    "per_run": list(r.per_run),
                    "formatted": formatted,
                }
                heat_row.append(formatted)
        cells[row_label] = row_cells
        heatmap.append((row_label, heat_row))

    section = {
        "projections": list(matrix.projection_labels),
        "knowledge": list(matrix.knowledge_labels),
        "runs": analysis.runs,
        "nested": analysis.nested,
        "containment": analysis.containment,
        "timestamp_resolution": analysis.timestamp_resolution,
        "fraction_rounding": "ceil",
        "cells": cells,
    }
    return section, heatmap


def _summary_doc(log: EventLog) -> dict:
    s = summarize(log)
    return {
        "cases": s.case_count,
        "distinct_activities": s.distinct_activity_count,
        "trace_length_min": s.trace_length_min,
        "trace_length_max": s.trace_length_max,
        "trace_length_mean": s.trace_length_mean,
        "case_attributes": list(s.case_attribute_names),
        "event_attributes": list(s.event_attribute_names),
    }


def _validation_doc(log: EventLog) -> dict:
    report = validate_log(log)
    return {
        "ok": report.ok,
        "violations": [
            {"case_id": v.case_id, "rule": v.rule, "detail": v.detail}
            for v in report.violations
        ],
    }


def build_report(config: RunConfig) -> dict:
    """Run every configured analysis and assemble the report document."""
    names = {}
    if config.pseudonymize:
        for i, path in enumerate(sorted(spec.path for spec in config.inputs)):
            names[path] = f"log-{i + 1}"

    logs = []
    worst = 0
    heatmap_rows = []
    knowledge_labels = [k.label() for k in config.trace.knowledge] \
        if config.trace else []
    for spec in config.inputs:
        name = names.get(spec.path, spec.display_name)
        entry = {"name": name}
        captured = []
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                log = load_log(spec)
                entry["summary"] = _summary_doc(log)
                entry["validation"] = _validation_doc(log)
                if config.case:
                    entry["case_uniqueness"] = case_section(
                        log, config.case, config.seed, config.list_unique_cases
                    )
                if config.trace:
                    section, heat = trace_section(log, config.trace, config.seed)
                    entry["trace_uniqueness"] = section
                    for row_label, cells in heat:
                        heatmap_rows.append([name, row_label] + cells)
            captured = [str(w.message) for w in caught
                        if issubclass(w.category, UserWarning)]
        except LogriskError as exc:
            entry["error"] = {"kind": exc.kind, "message": str(exc)}
            worst = max(worst, EXIT_CODES[exc.kind])
        seen = set()
        entry["warnings"] = [
            w for w in captured if not (w in seen or seen.add(w))
        ]
        logs.append(entry)

    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "logrisk", "version": VERSION},
        "config": _config_echo(config, names),
        "logs": logs,
        "exit_code": worst,
    }
    if config.trace:
        doc["heatmap"] = {
            "columns": ["log", "projection"] + knowledge_labels,
            "rows": heatmap_rows,
        }
    validate_report(doc)
    return doc


_SCHEMA_CACHE = None


def report_schema() -> dict:
    global _SCHEMA_CACHE
    if _SCHEMA_CACHE is None:
        path = os.path.join(os.path.dirname(__file__), "report_schema.json")
        with open(path, "r", encoding="utf-8") as fh:
            _SCHEMA_CACHE = json.load(fh)
    return _SCHEMA_CACHE


def validate_report(doc: dict) -> None:
    try:
        jsonschema.validate(doc, report_schema())
    except jsonschema.ValidationError as exc:
        raise OutputError(f"report does not match its schema: {exc.message}")


def render_report(doc: dict) -> str:
    """Canonical report body: sorted keys, stable floats, trailing newline."""
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_heatmap(doc: dict) -> str:
    """Heatmap CSV with exactly the strings embedded in the report JSON."""
    heatmap = doc.get("heatmap")
    if heatmap is None:
        return ""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(heatmap["columns"])
    for row in heatmap["rows"]:
        writer.writerow(row)
    return buf.getvalue()


def render_single_heatmap(section: dict) -> str:
    """One-log heatmap CSV: rows = projections, columns = knowledge levels."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["projection"] + list(section["knowledge"]))
    for label in section["projections"]:
        row = [label]
        for k in section["knowledge"]:
            row.append(section["cells"][label][k].get("formatted", "NA"))
        writer.writerow(row)
    return buf.getvalue()


def write_report_files(doc: dict, output_dir: str):
    """Write report.json (and heatmap.csv when present); returns the paths."""
    try:
        os.makedirs(output_dir, exist_ok=True)
        report_path = os.path.join(output_dir, "report.json")
        with open(report_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(render_report(doc))
        paths = [report_path]
        heatmap = render_heatmap(doc)
        if heatmap:
            heatmap_path = os.path.join(output_dir, "heatmap.csv")
            with open(heatmap_path, "w", encoding="utf-8", newline="") as fh:
                fh.write(heatmap)
            paths.append(heatmap_path)
        return paths
    except OSError as exc:
        raise OutputError(f"cannot write report files: {exc}") from exc


def run_report(config: RunConfig):
    """Full report run: analyze, validate, write. Returns (doc, paths)."""
    doc = build_report(config)
    paths = write_report_files(doc, config.output_dir)
    return doc, paths


def transform_run(input: InputSpec, spec: ProjectionSpec, bins,
                  output_dir: str) -> dict:
    """Materialize a minimized log plus a summary of what was changed."""
    log = load_log(input)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        minimized = transform_log(log, spec, bins)

    schema = log.attribute_schema
    kept_case = set(minimized.case_attribute_names())
    kept_event = set(minimized.event_attribute_names())
    dropped_case = [n for n, i in sorted(schema.items())
                    if i.scope == "case" and n not in kept_case]
    dropped_event = [n for n, i in sorted(schema.items())
                     if i.scope == "event" and n not in kept_event]

    try:
        os.makedirs(output_dir, exist_ok=True)
        out_path = os.path.join(output_dir, "transformed.xes")
        write_xes(minimized, out_path)
    except OSError as exc:
        raise OutputError(f"cannot write transformed log: {exc}") from exc

    delta = {
        "input": input.display_name,
        "output": out_path,
        "cases": len(minimized.cases),
        "activities_suppressed": not spec.include_activities,
        "timestamps": (
            "dropped" if not spec.include_timestamps
            else spec.timestamp_resolution
        ),
        "dropped_case_attributes": dropped_case,
        "dropped_event_attributes": dropped_event,
        "binned": [b.to_json() | {
            "strategy": "edges" if b.edges is not None else "equal-frequency"
        } for b in bins],
        "warnings": sorted({str(w.message) for w in caught
                            if issubclass(w.category, UserWarning)}),
    }
    delta_path = os.path.join(output_dir, "transform.json")
    try:
        with open(delta_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(json.dumps(delta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write transform summary: {exc}") from exc
    delta["summary_path"] = delta_path
    return delta


def inspect_doc(spec: InputSpec) -> dict:
    """Summary + validation for one log, as shown by the inspect command."""
    log = load_log(spec)
    return {
        "name": spec.display_name,
        "summary": _summary_doc(log),
        "validation": _validation_doc(log),
    }
