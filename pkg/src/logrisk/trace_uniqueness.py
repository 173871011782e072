"""Trace uniqueness under partial adversary knowledge.

The adversary knows some of a trace's points (activity, generalized
timestamp, event-attribute values) but not their order. A case is
unique when its sampled point multiset is contained in exactly one
trace with a matching case key. Uniqueness is the fraction of unique
cases, averaged over several independent sampling runs.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._parallel import map_chunks
from .errors import ConfigError, DataError
from .ingest import CaseTable
from .projection import ProjectedCase, ProjectionSpec, project

_SEED_MASK = (1 << 64) - 1


class Knowledge(NamedTuple):
    """How many points the adversary knows: absolute count or fraction."""

    kind: str  # "m" or "q"
    amount: float

    def count_for(self, length: int) -> int:
        if self.kind == "m":
            return min(int(self.amount), length)
        # rounding up with a floor of 1, so every case contributes;
        # the round() guards against float fuzz in q*length
        return max(1, math.ceil(round(self.amount * length, 9)))

    def label(self) -> str:
        if self.kind == "m":
            return f"m={int(self.amount)}"
        return f"q={self.amount:g}"

    @classmethod
    def absolute(cls, m: int) -> "Knowledge":
        if int(m) < 1:
            raise ConfigError("point count m must be at least 1")
        return cls("m", int(m))

    @classmethod
    def fraction(cls, q: float) -> "Knowledge":
        if not 0.0 < q <= 1.0:
            raise ConfigError("fraction q must be in (0, 1]")
        return cls("q", float(q))

    @classmethod
    def parse(cls, text: str) -> "Knowledge":
        """Parse "m=4" or "q=0.5"."""
        head, sep, value = text.partition("=")
        if not sep:
            raise ConfigError(f"knowledge must look like m=4 or q=0.5, got {text!r}")
        head = head.strip()
        try:
            if head == "m":
                return cls.absolute(int(value))
            if head == "q":
                return cls.fraction(float(value))
        except ValueError as exc:
            raise ConfigError(f"bad knowledge amount in {text!r}") from exc
        raise ConfigError(f"unknown knowledge kind {head!r} in {text!r}")


@dataclass(frozen=True, slots=True)
class SamplingPlan:
    knowledge: Knowledge
    runs: int = 5
    master_seed: int = 0
    nested: bool = True

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.knowledge.kind not in ("m", "q"):
            raise ConfigError(f"unknown knowledge kind {self.knowledge.kind!r}")

    def with_knowledge(self, knowledge: Knowledge) -> "SamplingPlan":
        return SamplingPlan(
            knowledge=knowledge,
            runs=self.runs,
            master_seed=self.master_seed,
            nested=self.nested,
        )


def _case_rng(plan: SamplingPlan, run: int, ordinal: int) -> np.random.Generator:
    entropy = [plan.master_seed & _SEED_MASK, run, ordinal]
    if not plan.nested:
        k = plan.knowledge
        entropy += [1, int(k.amount)] if k.kind == "m" else [
            2, int(round(k.amount * 10**9))
        ]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def sample_points(pc: ProjectedCase, plan: SamplingPlan, run: int) -> Counter:
    """The adversary's point multiset for one case and run.

    One permutation of the event indices is drawn per (case, run); a
    knowledge level selects a prefix of it, so under nested sampling a
    smaller m or q always selects a subset of a larger one. The stream
    is derived from (master_seed, run, case ordinal) alone, making
    results independent of evaluation order and worker count.
    """
    length = len(pc.points)
    if length == 0:
        return Counter()
    k = plan.knowledge.count_for(length)
    perm = _case_rng(plan, run, pc.ordinal).permutation(length)
    return Counter(pc.points[i] for i in perm[:k])


@dataclass(frozen=True, slots=True)
class PointIndex:
    """Inverted index over point-equivalent case classes.

    Cases with the same case key and point multiset are grouped into a
    class; postings map each point to the classes containing it with
    its multiplicity. Classes of size two or more can never be unique,
    which is what makes large repetitive logs cheap.
    """

    spec: ProjectionSpec
    case_ids: tuple
    class_of_case: tuple
    class_members: tuple  # class -> tuple of case positions
    class_sizes: tuple
    postings: dict  # Point -> {class index: multiplicity}
    key_classes: Optional[dict]  # case_key -> tuple of class indices
    total_cases: int

    def lookup(self, point) -> dict:
        """All cases containing the point, with its multiplicity there."""
        out = {}
        for cls, mult in self.postings.get(point, {}).items():
            for pos in self.class_members[cls]:
                out[self.case_ids[pos]] = mult
        return out


def build_index(pcs) -> PointIndex:
    if not pcs:
        raise DataError("no projected cases to index")
    spec = pcs[0].spec
    if any(pc.spec != spec for pc in pcs):
        raise ConfigError("projected cases come from different projections")

    class_ids: dict = {}
    class_of_case = []
    members: list = []
    counters: list = []
    for pos, pc in enumerate(pcs):
        counter = Counter(pc.points)
        key = (pc.case_key, frozenset(counter.items()))
        cls = class_ids.get(key)
        if cls is None:
            cls = len(members)
            class_ids[key] = cls
            members.append([])
            counters.append(counter)
        members[cls].append(pos)
        class_of_case.append(cls)

    postings: dict = {}
    for cls, counter in enumerate(counters):
        for point, mult in counter.items():
            postings.setdefault(point, {})[cls] = mult

    key_classes = None
    if spec.case_attributes != ():
        key_classes = {}
        for cls in range(len(members)):
            pc = pcs[members[cls][0]]
            key_classes.setdefault(pc.case_key, []).append(cls)
        key_classes = {k: tuple(v) for k, v in key_classes.items()}

    return PointIndex(
        spec=spec,
        case_ids=tuple(pc.case_id for pc in pcs),
        class_of_case=tuple(class_of_case),
        class_members=tuple(tuple(m) for m in members),
        class_sizes=tuple(len(m) for m in members),
        postings=postings,
        key_classes=key_classes,
        total_cases=len(pcs),
    )


def is_unique(m_p: Counter, case_key, index: PointIndex,
              containment: str = "multiset") -> bool:
    """True iff exactly one case matches the observed point multiset.

    A case matches when its key equals case_key (if the projection
    includes case attributes) and it contains every observed point with
    at least the observed multiplicity ("set" containment ignores
    multiplicities). The case the sample came from always matches
    itself, so the candidate count is at least one.
    """
    if containment not in ("multiset", "set"):
        raise ConfigError(f"unknown containment mode {containment!r}")
    universe = None
    if index.key_classes is not None:
        universe = index.key_classes.get(case_key, ())
    if not m_p:
        if universe is None:
            return index.total_cases == 1
        return sum(index.class_sizes[c] for c in universe) == 1

    items = sorted(
        m_p.items(), key=lambda kv: len(index.postings.get(kv[0], ()))
    )
    candidates = None
    for point, mult in items:
        need = 1 if containment == "set" else mult
        posting = index.postings.get(point)
        if posting is None:
            return False  # no trace contains the observation at all
        if candidates is None:
            if universe is None:
                candidates = {c for c, m in posting.items() if m >= need}
            else:
                candidates = {c for c in universe if posting.get(c, 0) >= need}
        else:
            candidates = {c for c in candidates if posting.get(c, 0) >= need}
        if not candidates:
            return False
        if len(candidates) == 1:
            # the owning class survives every later filter, and it is
            # the only one left, so the outcome is already decided
            return index.class_sizes[next(iter(candidates))] == 1
    return sum(index.class_sizes[c] for c in candidates) == 1


@dataclass(frozen=True, slots=True)
class TraceUniquenessResult:
    mean_uniqueness: float
    per_run: tuple
    std_dev: float
    case_count: int
    plan: SamplingPlan
    spec: ProjectionSpec


def trace_uniqueness(pcs, plan: SamplingPlan, containment: str = "multiset",
                     threads=None) -> TraceUniquenessResult:
    """Fraction of cases unique under sampled adversary knowledge.

    Cases sharing their case key and full point multiset with another
    case can never be unique (their twin matches any sample), so only
    singleton classes are sampled and checked against the index.
    """
    pcs = list(pcs)
    index = build_index(pcs)
    n = len(pcs)
    singles = [pos for pos in range(n)
               if index.class_sizes[index.class_of_case[pos]] == 1]

    def count_unique(chunk):
        counts = [0] * plan.runs
        for pos in chunk:
            pc = pcs[pos]
            for run in range(plan.runs):
                sample = sample_points(pc, plan, run)
                if is_unique(sample, pc.case_key, index, containment):
                    counts[run] += 1
        return [counts]

    totals = [0] * plan.runs
    for counts in map_chunks(count_unique, singles, threads):
        for run, c in enumerate(counts):
            totals[run] += c

    per_run = tuple(c / n for c in totals)
    return TraceUniquenessResult(
        mean_uniqueness=statistics.fmean(per_run),
        per_run=per_run,
        std_dev=statistics.pstdev(per_run) if len(per_run) > 1 else 0.0,
        case_count=n,
        plan=plan,
        spec=pcs[0].spec,
    )


@dataclass(frozen=True, slots=True)
class SweepCell:
    result: Optional[TraceUniquenessResult]
    reason: str = ""  # non-empty iff the cell is not evaluable

    @property
    def evaluable(self) -> bool:
        return self.result is not None


@dataclass(frozen=True, slots=True)
class SweepMatrix:
    projection_labels: tuple
    knowledge_labels: tuple
    cells: dict  # (projection label, knowledge label) -> SweepCell


def _not_evaluable(table: CaseTable, spec: ProjectionSpec) -> str:
    if spec.case_attributes is None and not table.case_attribute_names:
        return "not evaluable: missing attributes (no case attributes)"
    if spec.event_attributes is None and not table.event_attribute_names:
        return "not evaluable: missing attributes (no event attributes)"
    return ""


def uniqueness_sweep(table: CaseTable, projections, knowledge_values,
                     plan: SamplingPlan, containment: str = "multiset",
                     threads=None) -> SweepMatrix:
    """Trace uniqueness for every projection x knowledge-level pair.

    All cells share the master seed; with nested sampling, per-run
    knowledge monotonicity holds along each row. Cells whose projection
    the log cannot support (no timestamps, no attributes of the needed
    scope) are marked not evaluable instead of failing the sweep.
    """
    projections = list(projections)
    knowledge_values = list(knowledge_values)
    for _, spec in projections:
        if not spec.include_activities and not spec.include_timestamps \
                and spec.event_attributes == ():
            raise ConfigError(
                "case-attributes-only projection routes to case uniqueness, "
                "not trace analysis"
            )

    cells = {}
    k_labels = tuple(k.label() for k in knowledge_values)
    for label, spec in projections:
        reason = _not_evaluable(table, spec)
        pcs = None
        if not reason:
            try:
                pcs = project(table, spec)
                if not pcs:
                    reason = "not evaluable: empty log"
            except (ConfigError, DataError) as exc:
                reason = f"not evaluable: {exc}"
        for knowledge, k_label in zip(knowledge_values, k_labels):
            if reason:
                cells[(label, k_label)] = SweepCell(None, reason)
            else:
                result = trace_uniqueness(
                    pcs, plan.with_knowledge(knowledge), containment, threads
                )
                cells[(label, k_label)] = SweepCell(result)

    return SweepMatrix(
        projection_labels=tuple(label for label, _ in projections),
        knowledge_labels=k_labels,
        cells=cells,
    )
