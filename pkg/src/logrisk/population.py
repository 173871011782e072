"""Population-uniqueness estimation from a sample of cases.

A sample-unique combination may still be common in the full population.
For each sample unique with model probability p(x), the chance that no
other population member shares it is tau = (1 - p(x))^(N_pop - 1).
Averaging tau over the whole sample gives the estimated population
uniqueness; averaging over the sample uniques alone gives the
conditional likelihood that a sample unique is a population unique.

Two cell-probability models are provided: independent smoothed
marginals, and a latent-Gaussian (copula) model that preserves pairwise
rank correlations between attributes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import spearmanr

from .case_uniqueness import ContingencyTable, build_contingency, sample_uniqueness
from .errors import ConfigError, DataError
from .ingest import CaseRow, CaseTable
from .model import Missing, to_jsonable
from .mvn import rectangle_probabilities

_SEED_MASK = (1 << 64) - 1


class ModelWarning(UserWarning):
    pass


def _category_order(values):
    """Fixed category order: missing first, then natural or lexicographic."""
    missing = [v for v in values if isinstance(v, Missing)]
    rest = [v for v in values if not isinstance(v, Missing)]
    try:
        rest = sorted(rest)
    except TypeError:
        rest = sorted(rest, key=lambda v: (type(v).__name__, str(v)))
    return tuple(missing[:1]) + tuple(rest)


@dataclass(frozen=True)
class MarginalModel:
    """Per-attribute category probabilities, smoothed and independent."""

    attribute_names: tuple
    categories: dict  # name -> ordered tuple of category values
    probabilities: dict  # name -> tuple of floats, strictly positive, sum 1
    smoothing: float
    n: int

    kind = "independence"

    def category_index(self, name: str, value) -> int:
        try:
            return self.categories[name].index(value)
        except ValueError:
            raise DataError(
                f"value {value!r} of attribute {name!r} was not seen when "
                f"the model was fitted"
            ) from None


def fit_independence(ct: ContingencyTable, smoothing: float = 0.5) -> MarginalModel:
    """Smoothed marginal frequencies, dependence deliberately dropped.

    P(v) = (count(v) + smoothing) / (n + smoothing * categories).
    """
    if ct.n == 0:
        raise DataError("cannot fit a model on an empty table")
    if smoothing < 0:
        raise ConfigError("smoothing must not be negative")
    counts: dict = {name: {} for name in ct.attribute_names}
    for combo, cell in ct.cells.items():
        for name, value in zip(ct.attribute_names, combo):
            bucket = counts[name]
            bucket[value] = bucket.get(value, 0) + cell.frequency

    categories = {}
    probabilities = {}
    for name in ct.attribute_names:
        cats = _category_order(counts[name])
        smoothed = np.array(
            [counts[name][c] + smoothing for c in cats], dtype=float
        )
        probs = smoothed / smoothed.sum()
        categories[name] = cats
        probabilities[name] = tuple(float(p) for p in probs)
    return MarginalModel(
        attribute_names=ct.attribute_names,
        categories=categories,
        probabilities=probabilities,
        smoothing=smoothing,
        n=ct.n,
    )


def _repair_positive_definite(matrix: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Clip eigenvalues from below, then rescale back to a unit diagonal."""
    values, vectors = np.linalg.eigh(matrix)
    if values.min() >= eps:
        return matrix
    values = np.clip(values, eps, None)
    fixed = (vectors * values) @ vectors.T
    scale = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(scale, scale)
    fixed = (fixed + fixed.T) / 2.0
    np.fill_diagonal(fixed, 1.0)
    return fixed


@dataclass(frozen=True)
class CopulaModel:
    """Marginals plus a latent standard-normal dependence structure.

    Each attribute with at least two categories gets a latent dimension;
    category boundaries are inverse-normal images of the smoothed
    cumulative marginals, and the latent correlation is estimated from
    pairwise rank correlations.
    """

    marginals: MarginalModel
    latent_names: tuple
    edges: dict  # name -> array of len(categories)+1 bounds, -inf..+inf
    correlation: np.ndarray

    kind = "copula"

    @property
    def attribute_names(self):
        return self.marginals.attribute_names


def fit_copula(table: CaseTable, attrs, smoothing: float = 0.5) -> CopulaModel:
    attrs = tuple(attrs)
    if len(attrs) < 2:
        raise ConfigError("a copula model needs at least two attributes")
    ct = build_contingency(table, attrs)
    marginals = fit_independence(ct, smoothing)

    latent = []
    for name in attrs:
        if len(marginals.categories[name]) >= 2:
            latent.append(name)
        else:
            warnings.warn(
                f"{name}: single category in the sample; excluded from the "
                f"latent dimensions (its probability contribution is 1)",
                ModelWarning,
                stacklevel=2,
            )
    edges = {}
    for name in latent:
        cum = np.cumsum(marginals.probabilities[name])[:-1]
        cum = np.clip(cum, 1e-300, 1.0 - 1e-16)
        edges[name] = np.concatenate(([-np.inf], ndtri(cum), [np.inf]))

    d = len(latent)
    correlation = np.eye(max(d, 1))
    if d >= 2:
        idx = [table.case_attribute_names.index(n) for n in latent]
        lookup = [
            {c: i for i, c in enumerate(marginals.categories[n])} for n in latent
        ]
        data = np.empty((len(table.rows), d))
        for r, row in enumerate(table.rows.values()):
            for j in range(d):
                data[r, j] = lookup[j][row.case_values[idx[j]]]
        correlation = np.eye(d)
        for a in range(d):
            for b in range(a + 1, d):
                res = spearmanr(data[:, a], data[:, b])
                rho = res.statistic if hasattr(res, "statistic") else res.correlation
                r = 2.0 * np.sin(np.pi * float(rho) / 6.0)
                correlation[a, b] = correlation[b, a] = r
        correlation = _repair_positive_definite(correlation)

    return CopulaModel(
        marginals=marginals,
        latent_names=tuple(latent),
        edges=edges,
        correlation=correlation,
    )


def _combo_probabilities(model, combos, seed=0, abs_tol=1e-4, threads=None):
    """(values, bounds) arrays of model probabilities for value tuples."""
    combos = list(combos)
    if not combos:
        return np.array([]), np.array([])
    if isinstance(model, MarginalModel):
        values = np.ones(len(combos))
        for k, combo in enumerate(combos):
            for name, value in zip(model.attribute_names, combo):
                values[k] *= model.probabilities[name][
                    model.category_index(name, value)
                ]
        return values, np.zeros(len(combos))

    marginals = model.marginals
    names = marginals.attribute_names
    latent_pos = {name: j for j, name in enumerate(model.latent_names)}
    base = np.ones(len(combos))
    lows = np.zeros((len(combos), len(model.latent_names)))
    highs = np.zeros_like(lows)
    for k, combo in enumerate(combos):
        for name, value in zip(names, combo):
            i = marginals.category_index(name, value)
            j = latent_pos.get(name)
            if j is None:
                base[k] *= marginals.probabilities[name][i]
            else:
                lows[k, j] = model.edges[name][i]
                highs[k, j] = model.edges[name][i + 1]
    if not model.latent_names:
        return base, np.zeros(len(combos))
    values, bounds = rectangle_probabilities(
        model.correlation, lows, highs, seed=seed, abs_tol=abs_tol,
        threads=threads,
    )
    return base * values, base * bounds


def cell_probability(model, combo, seed: int = 0, abs_tol: float = 1e-4) -> float:
    """Model probability of one value combination."""
    values, _ = _combo_probabilities(model, [tuple(combo)], seed, abs_tol)
    return float(values[0])


def cell_probability_with_bound(model, combo, seed: int = 0,
                                abs_tol: float = 1e-4):
    """(probability, error bound) of one value combination."""
    values, bounds = _combo_probabilities(model, [tuple(combo)], seed, abs_tol)
    return float(values[0]), float(bounds[0])


def population_size_for(n: int, sampling_fraction: float) -> int:
    """Population size implied by treating the sample as a fraction of it."""
    if not 0.0 < sampling_fraction <= 1.0:
        raise ConfigError("sampling fraction must be in (0, 1]")
    return max(n, round(n / sampling_fraction))


@dataclass(frozen=True)
class PopulationEstimate:
    pop_uniqueness: float  # estimated fraction of all cases, <= sample uniqueness
    conditional_likelihood: float  # mean tau over the sample uniques
    per_run: tuple  # (pop_uniqueness, conditional_likelihood) per run
    tau: dict  # unique combo -> mean tau across runs
    sample_uniqueness: float
    n: int
    population_size: int
    model_kind: str
    runs: int
    seed: int


def estimate_population_uniqueness(ct: ContingencyTable, model,
                                   population_size: int, runs: int = 5,
                                   seed: int = 0, abs_tol: float = 1e-4,
                                   threads=None) -> PopulationEstimate:
    """Estimate how many cases are unique in the whole population.

    Deterministic models need a single evaluation; models with
    stochastic integration are averaged over `runs` integration seeds.
    """
    if tuple(model.attribute_names) != tuple(ct.attribute_names):
        raise ConfigError(
            "model and contingency table were built on different attributes"
        )
    if population_size < ct.n:
        raise ConfigError(
            f"population size {population_size} is smaller than the sample ({ct.n})"
        )
    if runs < 1:
        raise ConfigError("runs must be at least 1")
    base = sample_uniqueness(ct)
    uniques = [combo for combo, cell in ct.cells.items() if cell.frequency == 1]

    effective_runs = runs if model.kind == "copula" else 1
    per_run = []
    tau_sum = np.zeros(len(uniques))
    for run in range(effective_runs):
        run_seed = int(
            np.random.SeedSequence((seed & _SEED_MASK, run)).generate_state(
                1, dtype=np.uint64
            )[0]
        )
        probs, _ = _combo_probabilities(
            model, uniques, seed=run_seed, abs_tol=abs_tol, threads=threads
        )
        tau = (1.0 - np.clip(probs, 0.0, 1.0)) ** (population_size - 1)
        tau_sum += tau
        total = float(tau.sum())
        u_run = total / ct.n
        kappa_run = total / len(uniques) if uniques else 0.0
        assert u_run <= base.sample_uniqueness + 1e-12
        assert abs(u_run - base.sample_uniqueness * kappa_run) <= 1e-12
        per_run.append((u_run, kappa_run))

    mean_tau = tau_sum / effective_runs
    return PopulationEstimate(
        pop_uniqueness=float(np.mean([u for u, _ in per_run])),
        conditional_likelihood=float(np.mean([k for _, k in per_run])),
        per_run=tuple(per_run),
        tau=dict(zip(uniques, mean_tau.tolist())),
        sample_uniqueness=base.sample_uniqueness,
        n=ct.n,
        population_size=population_size,
        model_kind=model.kind,
        runs=effective_runs,
        seed=seed,
    )


@dataclass(frozen=True)
class PopulationSpec:
    """Ground-truth generator spec: categories with probabilities per
    attribute, plus an optional latent correlation for dependence."""

    attributes: tuple  # (name, ((category, probability), ...)) pairs
    correlation: Optional[tuple] = None  # row-major, one row per attribute


def synthesize_population(spec: PopulationSpec, size: int, seed: int = 0) -> CaseTable:
    """Draw a synthetic population whose true uniqueness is countable.

    With a correlation matrix, individuals are drawn through a latent
    multivariate normal and mapped through each attribute's cumulative
    cut-points; otherwise attributes are drawn independently.
    """
    if size < 1:
        raise ConfigError("population size must be at least 1")
    names = tuple(name for name, _ in spec.attributes)
    cats = []
    probs = []
    for name, pairs in spec.attributes:
        values = tuple(v for v, _ in pairs)
        weights = np.array([float(p) for _, p in pairs])
        if len(values) == 0 or np.any(weights <= 0):
            raise ConfigError(f"{name}: categories need positive probabilities")
        cats.append(values)
        probs.append(weights / weights.sum())

    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((int(seed) & _SEED_MASK,)))
    )
    columns = []
    if spec.correlation is None:
        for values, weights in zip(cats, probs):
            columns.append(rng.choice(len(values), size=size, p=weights))
    else:
        corr = np.asarray(spec.correlation, dtype=float)
        if corr.shape != (len(names), len(names)):
            raise ConfigError("correlation shape must match the attribute count")
        try:
            chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError as exc:
            raise ConfigError("correlation is not positive definite") from exc
        z = rng.standard_normal((size, len(names))) @ chol.T
        u = ndtr(z)
        for j, weights in enumerate(probs):
            cum = np.cumsum(weights)
            idx = np.searchsorted(cum, u[:, j], side="left")
            columns.append(np.minimum(idx, len(weights) - 1))

    rows = {}
    for i in range(size):
        case_id = f"p{i}"
        rows[case_id] = CaseRow(
            case_id=case_id,
            case_values=tuple(cats[j][columns[j][i]] for j in range(len(names))),
            activities=(),
            timestamps=(),
            event_values=(),
        )
    return CaseTable(
        case_attribute_names=names,
        event_attribute_names=(),
        rows=rows,
    )


def model_to_json(model) -> dict:
    """JSON document for a fitted model (marginals, cut-points, correlation)."""
    marginals = model if isinstance(model, MarginalModel) else model.marginals
    doc = {
        "kind": model.kind,
        "smoothing": marginals.smoothing,
        "n": marginals.n,
        "attributes": [
            {
                "name": name,
                "categories": [to_jsonable(c) for c in marginals.categories[name]],
                "probabilities": list(marginals.probabilities[name]),
            }
            for name in marginals.attribute_names
        ],
    }
    if isinstance(model, CopulaModel):
        doc["latent_attributes"] = list(model.latent_names)
        doc["cutpoints"] = {
            name: [float(e) for e in model.edges[name][1:-1]]
            for name in model.latent_names
        }
        doc["correlation"] = [
            [float(v) for v in row] for row in model.correlation
        ]
    return doc
