from collections import Counter

import pytest

from logrisk.errors import ConfigError, DataError
from logrisk.ingest import CaseRow, CaseTable
from logrisk.model import MISSING
from logrisk.projection import ProjectionSpec, preset, project
from logrisk.trace_uniqueness import (
    Knowledge,
    SamplingPlan,
    build_index,
    is_unique,
    sample_points,
    trace_uniqueness,
    uniqueness_sweep,
)

from conftest import make_rng, random_table


def contains(big: Counter, small: Counter, containment="multiset") -> bool:
    if containment == "set":
        return all(point in big for point in small)
    return all(big[point] >= count for point, count in small.items())


def naive_unique(sample, pc, pcs, containment="multiset"):
    """Direct definition: no other case with the same key contains the sample."""
    for other in pcs:
        if other.case_id == pc.case_id or other.case_key != pc.case_key:
            continue
        if contains(Counter(other.points), sample, containment):
            return False
    return True


def activity_table(traces, case_values=None, names=()):
    rows = {}
    for i, acts in enumerate(traces):
        cid = f"c{i}"
        values = tuple(case_values[i]) if case_values else ()
        acts = tuple(acts)
        rows[cid] = CaseRow(cid, values, acts, (MISSING,) * len(acts),
                            tuple(() for _ in ()))
    return CaseTable(tuple(names), (), rows)


def test_knowledge_parsing_and_counts():
    m = Knowledge.parse("m=4")
    assert m.kind == "m" and m.amount == 4
    q = Knowledge.parse("q=0.5")
    assert q.kind == "q" and q.amount == 0.5
    assert m.count_for(2) == 2  # clamps to trace length
    assert m.count_for(10) == 4
    assert q.count_for(10) == 5
    assert Knowledge.parse("q=0.01").count_for(3) == 1  # at least one point
    assert q.label() == "q=0.5"
    for bad in ("m=0", "q=0", "q=1.5", "x=2", "m=2.5"):
        with pytest.raises(ConfigError):
            Knowledge.parse(bad)


def test_fraction_count_avoids_float_fuzz():
    # 0.3 * 10 is 2.9999...; the count must still be exactly 3
    assert Knowledge.fraction(0.3).count_for(10) == 3
    assert Knowledge.fraction(0.1).count_for(30) == 3
    assert Knowledge.fraction(1.0).count_for(7) == 7


def test_sampling_is_deterministic_and_seed_sensitive():
    table = activity_table([["a", "b", "c", "d", "e"]])
    (pc,) = project(table, preset("E"))
    plan = SamplingPlan(Knowledge.absolute(3), runs=4, master_seed=1)
    again = SamplingPlan(Knowledge.absolute(3), runs=4, master_seed=1)
    assert [sample_points(pc, plan, r) for r in range(4)] == [
        sample_points(pc, again, r) for r in range(4)
    ]
    other_seed = SamplingPlan(Knowledge.absolute(3), runs=4, master_seed=2)
    assert any(
        sample_points(pc, plan, r) != sample_points(pc, other_seed, r)
        for r in range(4)
    )


def test_nested_sampling_grows_by_prefix():
    table = activity_table([["a", "b", "c", "d", "e", "f"]])
    (pc,) = project(table, preset("E"))
    for run in range(3):
        seen = Counter()
        for m in (1, 2, 3, 6):
            plan = SamplingPlan(Knowledge.absolute(m), runs=3, master_seed=9)
            now = sample_points(pc, plan, run)
            assert contains(now, seen)  # earlier sample is a sub-multiset
            seen = now
    # q levels walk the same permutation prefix
    for run in range(3):
        small = sample_points(
            pc, SamplingPlan(Knowledge.fraction(0.34), runs=3, master_seed=9), run
        )
        large = sample_points(
            pc, SamplingPlan(Knowledge.fraction(0.67), runs=3, master_seed=9), run
        )
        assert contains(large, small)


def test_non_nested_sampling_differs_across_knowledge():
    table = activity_table([["a", "b", "c", "d", "e", "f", "g", "h"]])
    (pc,) = project(table, preset("E"))
    nested = SamplingPlan(Knowledge.absolute(4), runs=1, master_seed=5)
    free = SamplingPlan(Knowledge.absolute(4), runs=1, master_seed=5, nested=False)
    assert sample_points(pc, nested, 0) != sample_points(pc, free, 0)


def test_index_rejects_empty_and_mixed_specs():
    with pytest.raises(DataError):
        build_index([])
    table = activity_table([["a"], ["b"]])
    mixed = project(table, preset("E")) + project(
        table, ProjectionSpec(include_activities=True, include_timestamps=False,
                              event_attributes=None)
    )
    with pytest.raises(ConfigError):
        build_index(mixed)


def test_duplicate_traces_are_never_unique():
    table = activity_table([["a", "b"], ["a", "b"], ["c"]])
    pcs = project(table, preset("E"))
    index = build_index(pcs)
    plan = SamplingPlan(Knowledge.absolute(2), runs=3, master_seed=0)
    for pc in pcs[:2]:
        for run in range(3):
            assert not is_unique(sample_points(pc, plan, run), pc.case_key, index)
    assert is_unique(sample_points(pcs[2], plan, 0), pcs[2].case_key, index)


def test_case_key_partitions_candidates():
    # same trace, different case attrs: key mismatch keeps them apart
    table = activity_table([["a", "b"], ["a", "b"]],
                           case_values=[("x",), ("y",)], names=("grp",))
    pcs = project(table, preset("D"))
    index = build_index(pcs)
    plan = SamplingPlan(Knowledge.absolute(2), runs=1, master_seed=0)
    for pc in pcs:
        assert is_unique(sample_points(pc, plan, 0), pc.case_key, index)


def test_set_containment_ignores_multiplicity():
    table = activity_table([["a", "a", "b"], ["a", "b"]])
    pcs = project(table, preset("E"))
    index = build_index(pcs)
    double_a = Counter({pcs[0].points[0]: 2})
    assert is_unique(double_a, (), index)  # c1 has only one 'a'
    assert not is_unique(double_a, (), index, containment="set")


def test_empty_sample_is_contained_everywhere():
    table = activity_table([["a"], ["b"]])
    pcs = project(table, preset("E"))
    index = build_index(pcs)
    assert not is_unique(Counter(), (), index)


def test_is_unique_matches_naive_oracle():
    rng = make_rng(41)
    for trial in range(12):
        table = random_table(rng, max_cases=30, max_len=10, n_case_attrs=1,
                             n_event_attrs=1, n_activities=3, cats=2)
        label = ("E", "C", "D")[trial % 3]
        pcs = project(table, preset(label))
        index = build_index(pcs)
        for knowledge in (Knowledge.absolute(1), Knowledge.absolute(3),
                          Knowledge.fraction(0.5)):
            plan = SamplingPlan(knowledge, runs=2, master_seed=trial)
            for pc in pcs:
                for run in range(plan.runs):
                    sample = sample_points(pc, plan, run)
                    for containment in ("multiset", "set"):
                        assert is_unique(sample, pc.case_key, index, containment) \
                            == naive_unique(sample, pc, pcs, containment)


def test_trace_uniqueness_aggregates_runs():
    table = activity_table([["a", "b", "c"], ["a", "b", "c"], ["x", "y", "z"]])
    pcs = project(table, preset("E"))
    plan = SamplingPlan(Knowledge.absolute(3), runs=5, master_seed=3)
    result = trace_uniqueness(pcs, plan)
    assert result.per_run == (pytest.approx(1 / 3),) * 5
    assert result.mean_uniqueness == pytest.approx(1 / 3)
    assert result.std_dev == 0.0
    assert result.case_count == 3


def test_trace_uniqueness_monotone_in_m_per_run():
    rng = make_rng(77)
    for _ in range(15):
        table = random_table(rng, max_cases=25, max_len=12, n_case_attrs=0,
                             n_event_attrs=0, n_activities=4)
        pcs = project(table, preset("E"))
        prev = None
        for m in (1, 2, 4, 8):
            plan = SamplingPlan(Knowledge.absolute(m), runs=3, master_seed=13)
            per_run = trace_uniqueness(pcs, plan).per_run
            if prev is not None:
                assert all(a <= b + 1e-12 for a, b in zip(prev, per_run))
            prev = per_run


def test_sweep_marks_unsupported_cells_na():
    table = activity_table([["a", "b"], ["b"]])  # no attrs at all
    plan = SamplingPlan(Knowledge.absolute(2), runs=2, master_seed=0)
    matrix = uniqueness_sweep(
        table,
        [("E", preset("E")), ("B", preset("B"))],
        [Knowledge.absolute(2)],
        plan,
    )
    assert matrix.cells[("E", "m=2")].result is not None
    cell = matrix.cells[("B", "m=2")]
    assert cell.result is None
    assert "not evaluable" in cell.reason


def test_sweep_rejects_pure_case_attribute_projection():
    table = random_table(make_rng(2), max_cases=10)
    plan = SamplingPlan(Knowledge.absolute(2), runs=1, master_seed=0)
    with pytest.raises(ConfigError):
        uniqueness_sweep(table, [("F", preset("F"))], [Knowledge.absolute(1)], plan)
