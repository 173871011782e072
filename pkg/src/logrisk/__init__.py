"""Re-identification risk assessment for process event logs."""

from ._version import VERSION as __version__
from .case_uniqueness import (
    CaseUniquenessResult,
    ContingencyTable,
    build_contingency,
    combination_sweep,
    sample_uniqueness,
)
from .errors import (
    ConfigError,
    DataError,
    LogriskError,
    OutputError,
    ParseError,
    exit_code_for,
)
from .ingest import (
    CaseTable,
    CsvColumn,
    CsvMapping,
    parse_csv,
    parse_xes,
    prepare,
)
from .model import MISSING, EventLog, summarize, validate_log
from .population import (
    CopulaModel,
    MarginalModel,
    PopulationSpec,
    estimate_population_uniqueness,
    fit_copula,
    fit_independence,
    population_size_for,
    synthesize_population,
)
from .projection import (
    BinningSpec,
    ProjectionSpec,
    bin_numeric,
    generalize_timestamp,
    identity_spec,
    preset,
    project,
    transform_log,
    write_xes,
)
from .trace_uniqueness import (
    Knowledge,
    PointIndex,
    SamplingPlan,
    TraceUniquenessResult,
    build_index,
    is_unique,
    trace_uniqueness,
    uniqueness_sweep,
)

__all__ = [
    "__version__",
    "BinningSpec",
    "CaseTable",
    "CaseUniquenessResult",
    "ConfigError",
    "ContingencyTable",
    "CopulaModel",
    "CsvColumn",
    "CsvMapping",
    "DataError",
    "EventLog",
    "Knowledge",
    "LogriskError",
    "MarginalModel",
    "MISSING",
    "OutputError",
    "ParseError",
    "PointIndex",
    "PopulationSpec",
    "ProjectionSpec",
    "SamplingPlan",
    "TraceUniquenessResult",
    "build_contingency",
    "build_index",
    "bin_numeric",
    "combination_sweep",
    "estimate_population_uniqueness",
    "exit_code_for",
    "fit_copula",
    "fit_independence",
    "generalize_timestamp",
    "identity_spec",
    "is_unique",
    "parse_csv",
    "parse_xes",
    "population_size_for",
    "prepare",
    "preset",
    "project",
    "sample_uniqueness",
    "summarize",
    "synthesize_population",
    "trace_uniqueness",
    "transform_log",
    "uniqueness_sweep",
    "validate_log",
    "write_xes",
]
