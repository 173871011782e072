"""HTTP service exposing the analyses.

The CLI is a thin client of this app (in-process by default, remote
with --server). Endpoints take server-side file paths, run the analysis
and return JSON; the report endpoint also returns the canonical report
body and heatmap CSV verbatim, so clients can persist byte-identical
copies.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import report as orchestration
from ._version import VERSION
from .errors import EXIT_CODES, LogriskError
from .projection import BinningSpec, ProjectionSpec

app = FastAPI(title="logrisk", version=VERSION)


@app.exception_handler(LogriskError)
async def _logrisk_error(request, exc: LogriskError):
    return JSONResponse(
        status_code=400,
        content={
            "kind": exc.kind,
            "message": str(exc),
            "exit_code": EXIT_CODES[exc.kind],
        },
    )


class InputModel(BaseModel):
    path: str
    format: Optional[str] = None
    mapping: Optional[str] = None

    def to_spec(self):
        return orchestration.input_spec(self.path, self.format, self.mapping)


class EstimateModel(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model: str = "independence"
    population_size: Optional[int] = None
    sampling_fraction: Optional[float] = None
    smoothing: float = 0.5
    runs: int = 5


class CaseUniquenessRequest(BaseModel):
    input: InputModel
    combos: list
    denylist: list = []
    estimate: Optional[EstimateModel] = None
    seed: int = 42
    list_unique_cases: bool = False


class TraceUniquenessRequest(BaseModel):
    input: InputModel
    projections: list = ["A", "B", "C", "D", "E"]
    knowledge: list = ["m=4"]
    runs: int = 5
    seed: int = 42
    timestamp_resolution: str = "second"
    nested: bool = True
    containment: str = "multiset"


class TransformRequest(BaseModel):
    input: InputModel
    spec: dict
    bins: list = []
    out: str


class ReportRequest(BaseModel):
    config: Optional[dict] = None
    config_path: Optional[str] = None
    base_dir: str = "."


@app.get("/health")
def health():
    return {"status": "ok", "version": VERSION}


@app.post("/inspect")
def inspect(request: InputModel):
    return orchestration.inspect_doc(request.to_spec())


@app.post("/case-uniqueness")
def case_uniqueness(request: CaseUniquenessRequest):
    analysis = orchestration.parse_case_analysis(
        {
            "combos": request.combos,
            "denylist": request.denylist,
            "estimate": request.estimate.model_dump() if request.estimate else None,
        }
    )
    log = orchestration.load_log(request.input.to_spec())
    return orchestration.case_section(
        log, analysis, request.seed, request.list_unique_cases
    )


@app.post("/trace-uniqueness")
def trace_uniqueness(request: TraceUniquenessRequest):
    analysis = orchestration.parse_trace_analysis(
        {
            "projections": request.projections,
            "knowledge": request.knowledge,
            "runs": request.runs,
            "timestamp_resolution": request.timestamp_resolution,
            "nested": request.nested,
            "containment": request.containment,
        }
    )
    log = orchestration.load_log(request.input.to_spec())
    section, _ = orchestration.trace_section(log, analysis, request.seed)
    return {
        "section": section,
        "heatmap_csv": orchestration.render_single_heatmap(section),
    }


@app.post("/transform")
def transform(request: TransformRequest):
    spec = ProjectionSpec.from_json(request.spec)
    bins = [BinningSpec.from_json(b) for b in request.bins]
    return orchestration.transform_run(
        request.input.to_spec(), spec, bins, request.out
    )


@app.post("/report")
def report(request: ReportRequest):
    if (request.config is None) == (request.config_path is None):
        return JSONResponse(
            status_code=400,
            content={
                "kind": "config",
                "message": "pass exactly one of config and config_path",
                "exit_code": EXIT_CODES["config"],
            },
        )
    if request.config_path is not None:
        config = orchestration.load_config(request.config_path)
    else:
        config = orchestration.config_from_json(request.config, request.base_dir)
    doc, paths = orchestration.run_report(config)
    return {
        "exit_code": doc["exit_code"],
        "paths": paths,
        "body": orchestration.render_report(doc),
        "heatmap_csv": orchestration.render_heatmap(doc),
    }
