import dataclasses
import warnings

import numpy as np
import pytest
from scipy.special import ndtri
from scipy.stats import multivariate_normal

from logrisk.case_uniqueness import build_contingency, sample_uniqueness
from logrisk.errors import ConfigError, DataError
from logrisk.ingest import CaseRow, CaseTable
from logrisk.model import MISSING
from logrisk.population import (
    CopulaModel,
    ModelWarning,
    PopulationSpec,
    cell_probability,
    estimate_population_uniqueness,
    fit_copula,
    fit_independence,
    model_to_json,
    population_size_for,
    synthesize_population,
)

from conftest import make_rng, random_table


def flat_table(rows, names):
    table_rows = {}
    for i, values in enumerate(rows):
        cid = f"c{i}"
        table_rows[cid] = CaseRow(cid, tuple(values), ("x",), (MISSING,), ())
    return CaseTable(tuple(names), (), table_rows)


def test_fit_independence_smoothing_math():
    table = flat_table([("m",), ("f",), ("f",)], ("sex",))
    ct = build_contingency(table, ("sex",))
    model = fit_independence(ct, smoothing=0.5)
    probs = dict(zip(model.categories["sex"], model.probabilities["sex"]))
    # (count + lambda) / (n + lambda K) with n=3, K=2
    assert probs["m"] == pytest.approx(1.5 / 4)
    assert probs["f"] == pytest.approx(2.5 / 4)
    assert cell_probability(model, ("m",)) == pytest.approx(1.5 / 4)


def test_fit_independence_rejects_bad_inputs():
    table = flat_table([("m",)], ("sex",))
    ct = build_contingency(table, ("sex",))
    with pytest.raises(ConfigError):
        fit_independence(ct, smoothing=-1.0)
    with pytest.raises(DataError):
        cell_probability(fit_independence(ct), ("w",))


def test_independence_probabilities_multiply():
    table = flat_table([("m", 1), ("f", 2), ("f", 1)], ("sex", "age"))
    ct = build_contingency(table, ("sex", "age"))
    model = fit_independence(ct, smoothing=0.5)
    p_m = 1.5 / 4
    p_age1 = 2.5 / 4
    assert cell_probability(model, ("m", 1)) == pytest.approx(p_m * p_age1)


def test_fit_copula_needs_two_attributes():
    table = flat_table([("m",), ("f",)], ("sex",))
    with pytest.raises(ConfigError):
        fit_copula(table, ("sex",))


def test_copula_latent_correlation_from_spearman():
    # construct a strong but not perfect monotone association
    rng = make_rng(3)
    rows = []
    for _ in range(400):
        x = int(rng.integers(0, 6))
        y = x if rng.random() < 0.8 else int(rng.integers(0, 6))
        rows.append((x, y))
    table = flat_table(rows, ("u", "v"))
    model = fit_copula(table, ("u", "v"))
    from scipy.stats import spearmanr

    rho = spearmanr([r[0] for r in rows], [r[1] for r in rows]).statistic
    expected = 2 * np.sin(np.pi * rho / 6)
    assert model.correlation[0, 1] == pytest.approx(expected, abs=1e-9)


def test_copula_comonotone_pair_survives_repair():
    rows = [(i, i) for i in range(50)]
    table = flat_table(rows, ("u", "v"))
    model = fit_copula(table, ("u", "v"))
    r = model.correlation[0, 1]
    assert 0.99 <= r < 1.0  # repair keeps it PD by nudging below 1
    np.linalg.cholesky(model.correlation)  # must not raise


def test_copula_single_category_attribute_excluded():
    rows = [("m", "const", 1), ("f", "const", 2), ("f", "const", 1)]
    table = flat_table(rows, ("sex", "site", "age"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_copula(table, ("sex", "site", "age"))
    assert any(issubclass(w.category, ModelWarning) for w in caught)
    assert "site" not in model.latent_names
    assert set(model.latent_names) == {"sex", "age"}
    # the excluded attribute still appears in full-cell probabilities
    p = cell_probability(model, ("m", "const", 1))
    assert 0.0 < p < 1.0


def test_copula_cutpoints_match_marginal_cumulative():
    table = flat_table([("m", 1), ("f", 2), ("f", 1)], ("sex", "age"))
    model = fit_copula(table, ("sex", "age"), smoothing=0.5)
    edges = model.edges["sex"]
    # categories sorted: f, m with smoothed P(f) = 2.5/4
    assert edges[0] == -np.inf and edges[-1] == np.inf
    assert edges[1] == pytest.approx(float(ndtri(2.5 / 4)))


def test_copula_bivariate_cell_against_scipy():
    table = flat_table([("m", 1), ("f", 2), ("f", 1), ("m", 2)], ("sex", "age"))
    model = fit_copula(table, ("sex", "age"), smoothing=0.5)
    rho = float(model.correlation[0, 1])
    mvn = multivariate_normal(mean=[0.0, 0.0],
                              cov=[[1.0, rho], [rho, 1.0]])

    names = list(model.latent_names)
    for combo in [("f", 1), ("f", 2), ("m", 1), ("m", 2)]:
        want = cell_probability(model, combo, seed=6)
        bounds = []
        for name, value in zip(("sex", "age"), combo):
            cats = model.marginals.categories[name]
            idx = cats.index(value)
            edges = model.edges[name]
            bounds.append((edges[idx], edges[idx + 1]))
        (a1, b1), (a2, b2) = [bounds[names.index(n)] for n in ("sex", "age")]

        def cdf(x, y):
            if np.isinf(x) and x < 0 or np.isinf(y) and y < 0:
                return 0.0
            return float(mvn.cdf([min(x, 37.0), min(y, 37.0)]))

        truth = cdf(b1, b2) - cdf(a1, b2) - cdf(b1, a2) + cdf(a1, a2)
        assert want == pytest.approx(truth, abs=2e-4)


def test_identity_correlation_copula_matches_independence():
    rng = make_rng(11)
    rows = [tuple(int(rng.integers(0, k)) for k in (3, 4, 4)) for _ in range(500)]
    table = flat_table(rows, ("a", "b", "c"))
    ct = build_contingency(table, ("a", "b", "c"))
    ind = fit_independence(ct, smoothing=0.5)
    cop = fit_copula(table, ("a", "b", "c"), smoothing=0.5)
    cop = dataclasses.replace(cop, correlation=np.eye(len(cop.latent_names)))
    for combo in ct.cells:
        assert cell_probability(cop, combo, seed=1) == pytest.approx(
            cell_probability(ind, combo), abs=1e-4
        )


def test_population_size_for():
    assert population_size_for(100, 0.1) == 1000
    assert population_size_for(3, 1.0) == 3
    assert population_size_for(10, 0.3) == 33
    with pytest.raises(ConfigError):
        population_size_for(10, 0.0)
    with pytest.raises(ConfigError):
        population_size_for(10, 1.0001)


def test_estimate_known_tau_values():
    # two singleton cells, one duplicated cell; hand-evaluated tau
    table = flat_table([("m", 1), ("f", 2), ("f", 1), ("f", 1)], ("sex", "age"))
    ct = build_contingency(table, ("sex", "age"))
    model = fit_independence(ct, smoothing=0.0)  # raw frequencies
    est = estimate_population_uniqueness(ct, model, population_size=10, seed=0)
    p_m1 = (1 / 4) * (3 / 4)
    p_f2 = (3 / 4) * (1 / 4)
    tau = (1 - p_m1) ** 9
    expected = (tau + tau) / 4  # two unique cases out of four
    assert est.pop_uniqueness == pytest.approx(expected, abs=1e-12)
    assert est.sample_uniqueness == pytest.approx(0.5)
    assert est.conditional_likelihood == pytest.approx(tau, abs=1e-12)
    assert est.tau[("m", 1)] == pytest.approx((1 - p_m1) ** 9, abs=1e-12)
    assert est.tau[("f", 2)] == pytest.approx((1 - p_f2) ** 9, abs=1e-12)


def test_estimate_invariants_hold_broadly():
    rng = make_rng(29)
    for _ in range(10):
        table = random_table(rng, max_cases=80, n_case_attrs=2, cats=5)
        attrs = table.case_attribute_names
        ct = build_contingency(table, attrs)
        u = sample_uniqueness(ct).sample_uniqueness
        model = fit_independence(ct)
        est = estimate_population_uniqueness(
            ct, model, population_size=len(table) * 10, seed=1
        )
        assert est.pop_uniqueness <= u + 1e-12
        n_unique = round(est.sample_uniqueness * est.n)
        if n_unique:
            assert est.pop_uniqueness == pytest.approx(
                est.sample_uniqueness * est.conditional_likelihood, abs=1e-12
            )


def test_estimate_rejects_small_population():
    table = flat_table([("m",), ("f",)], ("sex",))
    ct = build_contingency(table, ("sex",))
    model = fit_independence(ct)
    with pytest.raises(ConfigError):
        estimate_population_uniqueness(ct, model, population_size=1)


def test_estimate_attribute_mismatch_rejected():
    table = flat_table([("m", 1), ("f", 2)], ("sex", "age"))
    ct = build_contingency(table, ("sex", "age"))
    model = fit_independence(build_contingency(table, ("sex",)))
    with pytest.raises(ConfigError):
        estimate_population_uniqueness(ct, model, population_size=100)


def test_copula_estimate_averages_runs():
    rng = make_rng(31)
    rows = [tuple(int(rng.integers(0, k)) for k in (5, 4)) for _ in range(120)]
    table = flat_table(rows, ("a", "b"))
    ct = build_contingency(table, ("a", "b"))
    model = fit_copula(table, ("a", "b"))
    est = estimate_population_uniqueness(ct, model, population_size=1200,
                                         runs=3, seed=9)
    assert est.runs == 3
    assert len(est.per_run) == 3
    values = [u for u, _ in est.per_run]
    assert est.pop_uniqueness == pytest.approx(sum(values) / 3)
    # integration noise across runs is tiny but real
    assert max(values) - min(values) < 1e-3


def test_synthesize_population_matches_marginals():
    spec = PopulationSpec(attributes=(
        ("color", (("red", 0.7), ("blue", 0.3))),
        ("size", (("s", 0.5), ("m", 0.3), ("l", 0.2))),
    ))
    pop = synthesize_population(spec, 20000, seed=4)
    assert len(pop) == 20000
    colors = [row.case_values[0] for row in pop.rows.values()]
    assert colors.count("red") / 20000 == pytest.approx(0.7, abs=0.02)
    again = synthesize_population(spec, 20000, seed=4)
    assert [r.case_values for r in again.rows.values()] == [
        r.case_values for r in pop.rows.values()
    ]


def test_synthesize_population_with_correlation():
    # positive latent correlation raises the co-occurrence of matching ranks
    probs = tuple((f"v{i}", 0.25) for i in range(4))
    corr = ((1.0, 0.85), (0.85, 1.0))
    spec = PopulationSpec(attributes=(("x", probs), ("y", probs)),
                          correlation=corr)
    pop = synthesize_population(spec, 20000, seed=5)
    same = sum(1 for row in pop.rows.values()
               if row.case_values[0] == row.case_values[1])
    assert same / 20000 > 0.5  # independent would sit near 0.25


def test_model_to_json_shapes():
    table = flat_table([("m", 1), ("f", 2), ("f", 1)], ("sex", "age"))
    ct = build_contingency(table, ("sex", "age"))
    ind = model_to_json(fit_independence(ct))
    assert ind["kind"] == "independence"
    assert {a["name"] for a in ind["attributes"]} == {"sex", "age"}
    for attr in ind["attributes"]:
        assert sum(attr["probabilities"]) == pytest.approx(1.0)
    cop = model_to_json(fit_copula(table, ("sex", "age")))
    assert cop["kind"] == "copula"
    assert "correlation" in cop and "cutpoints" in cop
