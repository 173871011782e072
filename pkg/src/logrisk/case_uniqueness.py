"""Sample uniqueness over case-attribute combinations.

A case is unique when its combination of case-attribute values occurs
exactly once in the log. Sample uniqueness is the fraction of such
cases; sweeping attribute combinations shows how risk grows as the
adversary learns more attributes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import ConfigError, DataError
from .ingest import CaseTable


class Cell(NamedTuple):
    frequency: int
    case_ids: tuple


@dataclass(frozen=True, slots=True)
class ContingencyTable:
    attribute_names: tuple
    cells: dict  # value tuple -> Cell
    n: int


@dataclass(frozen=True, slots=True)
class CaseUniquenessResult:
    sample_uniqueness: float
    unique_case_ids: tuple
    cell_count: int
    n: int
    attribute_names: tuple
    note: str = ""


def build_contingency(table: CaseTable, attrs) -> ContingencyTable:
    """Count how often each combination of case-attribute values occurs.

    Missing markers are ordinary values: two cases that both lack an
    attribute fall into the same cell.
    """
    attrs = tuple(attrs)
    if not attrs:
        raise ConfigError("attribute combination must not be empty")
    bad = [a for a in attrs if a not in table.case_attribute_names]
    if bad:
        raise ConfigError(
            f"not case-level attribute(s): {', '.join(sorted(bad))}"
        )
    idx = [table.case_attribute_names.index(a) for a in attrs]
    grouped: dict = {}
    for row in table.rows.values():
        combo = tuple(row.case_values[i] for i in idx)
        grouped.setdefault(combo, []).append(row.case_id)
    cells = {
        combo: Cell(frequency=len(ids), case_ids=tuple(ids))
        for combo, ids in grouped.items()
    }
    return ContingencyTable(attribute_names=attrs, cells=cells, n=len(table.rows))


def sample_uniqueness(ct: ContingencyTable) -> CaseUniquenessResult:
    """Fraction of cases sitting alone in their contingency cell."""
    if ct.n == 0:
        raise DataError("cannot compute uniqueness of an empty log")
    unique_ids = []
    for cell in ct.cells.values():
        if cell.frequency == 1:
            unique_ids.append(cell.case_ids[0])
    note = "degenerate: N=1" if ct.n == 1 else ""
    return CaseUniquenessResult(
        sample_uniqueness=len(unique_ids) / ct.n,
        unique_case_ids=tuple(unique_ids),
        cell_count=len(ct.cells),
        n=ct.n,
        attribute_names=ct.attribute_names,
        note=note,
    )


@dataclass(frozen=True, slots=True)
class SweepResult:
    results: tuple  # (attribute tuple, CaseUniquenessResult) pairs, config order
    monotonicity_violations: tuple


def combination_sweep(table: CaseTable, combos) -> SweepResult:
    """Evaluate several attribute combinations independently.

    Also checks superset monotonicity across the requested combos: a
    nested pair s <= t must satisfy U(s) <= U(t), since adding
    attributes never merges contingency cells. Violations would signal
    an implementation bug and are reported rather than raised.
    """
    combos = [tuple(c) for c in combos]
    results = []
    counts = []
    for combo in combos:
        result = sample_uniqueness(build_contingency(table, combo))
        results.append((combo, result))
        counts.append(len(result.unique_case_ids))

    violations = []
    for i, small in enumerate(combos):
        for j, big in enumerate(combos):
            if i == j or not set(small) <= set(big):
                continue
            if counts[i] > counts[j]:
                violations.append(
                    f"U({','.join(small)}) > U({','.join(big)}) "
                    f"({counts[i]}/{results[i][1].n} vs {counts[j]}/{results[j][1].n})"
                )
    return SweepResult(results=tuple(results), monotonicity_violations=tuple(violations))
