'''
Synthetic population and two-stage survey generator.

The population holds one row per (area, level of every factor) with a count
drawn from a configured range. True parameters are drawn once per seed; the
survey is then sampled from the population, without replacement inside each
(stratum, area) unit, and outcomes come from the true category probabilities.
'''
import itertools
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ordinal.cutpoints import delta_to_kappa
from ordinal.errors import InputError
from ordinal.model import ModelSpec, SurveyDataset, complete_alpha, compile_cells
from ordinal.poststrat import PopulationTable, CellKeys, cell_probabilities
from ordinal.sampler import ConstraintSet
from ordinal.spatial_graph import LcarHyper, grid_graph, lcar_sample, SIGMA_MAX

DEFAULT_FACTORS = {
    'sex': ('male', 'female'),
    'age': ('15-24', '25-34', '35-49', '50-64', '65+'),
    'dwelling': ('d1', 'd2', 'd3', 'd4'),
}


@dataclass
class TruthConfig:
    n_rows: int = 10
    n_cols: int = 5
    n_categories: int = 5
    factors: dict = field(default_factory=lambda: dict(DEFAULT_FACTORS))
    cut_factors: tuple = ('sex', 'age')
    additive_factors: tuple = ('dwelling',)
    alpha_constraint: str = 'zero-sum'
    include_spatial: bool = True
    sigma: float = 0.5
    lam: float = 0.7
    alpha_sd: float = 0.5
    kappa_concentration: float = 20.0
    cell_count_range: tuple = (20, 200)

    def spec(self):
        return ModelSpec(
            schemas=tuple((n, tuple(lv)) for n, lv in self.factors.items()),
            n_categories=self.n_categories,
            cut_factors=tuple(self.cut_factors),
            additive_factors=tuple(self.additive_factors),
            alpha_constraint=self.alpha_constraint,
            include_spatial=self.include_spatial)

    def validate(self):
        if self.n_categories < 2:
            raise InputError(' [x] Synthetic truth needs J >= 2, got {}'.format(self.n_categories))
        if self.n_rows < 1 or self.n_cols < 1:
            raise InputError(' [x] Synthetic grid needs K >= 1 areas')
        if not 0 < self.sigma <= SIGMA_MAX:
            raise InputError(' [x] True sigma outside (0, {}]: {}'.format(SIGMA_MAX, self.sigma))
        if not 0 < self.lam < 1:
            raise InputError(' [x] True lambda outside (0, 1): {}'.format(self.lam))
        lo, hi = self.cell_count_range
        if lo < 0 or hi < lo:
            raise InputError(' [x] Bad cell_count_range: {}'.format(self.cell_count_range))
        return self


@dataclass
class SyntheticTruth:
    spec: ModelSpec
    graph: object
    kappa: np.ndarray
    alpha: list
    theta: np.ndarray
    sigma: float
    lam: float
    population: PopulationTable

    def parameters(self):
        '''name -> true value, named like the draw columns'''
        out = {}
        for g, label in enumerate(self.spec.group_labels()):
            for j in range(self.spec.n_categories - 1):
                out['kappa[{}][{}]'.format(label, j + 1)] = float(self.kappa[g, j])
        for f, name in enumerate(self.spec.additive_factors):
            for lv, v in zip(self.spec.levels(name), self.alpha[f]):
                out['alpha[{}][{}]'.format(name, lv)] = float(v)
        for a, v in zip(self.graph.area_ids, self.theta):
            out['theta[{}]'.format(a)] = float(v)
        out['sigma'] = float(self.sigma)
        out['lambda'] = float(self.lam)
        return out

    def population_keys(self):
        return self.population.cell_keys(self.spec, self.graph.area_ids)


def population_weights(spec, keys, counts, n_areas):
    '''N_hk rows per additive level, or a single N_k row without additive factors'''
    rows = []
    for f, size in enumerate(spec.additive_sizes):
        w = np.zeros((size, n_areas))
        np.add.at(w, (keys.additive[:, f], keys.area), counts)
        rows.append(w)
    if not rows:
        rows.append(np.bincount(keys.area, weights=counts, minlength=n_areas)[None, :])
    return np.vstack(rows)


def generate_population(config, seed, graph=None):
    config.validate()
    spec = config.spec()
    graph = graph if graph is not None else grid_graph(config.n_rows, config.n_cols)
    rng = np.random.default_rng(seed)
    J, G = spec.n_categories, spec.n_groups

    if config.kappa_concentration:
        delta = rng.dirichlet(np.full(J, float(config.kappa_concentration)), size=G)
    else:
        delta = np.full((G, J), 1.0 / J)
    kappa = delta_to_kappa(delta)

    alpha = [complete_alpha(config.alpha_sd * rng.standard_normal(h - 1), spec.alpha_constraint)
             for h in spec.additive_sizes]

    names = [n for n, _ in spec.schemas]
    combos = list(itertools.product(range(graph.K), *[range(len(spec.levels(n))) for n in names]))
    combos = np.array(combos, dtype=np.int64).reshape(len(combos), len(names) + 1)
    lo, hi = config.cell_count_range
    counts = rng.integers(lo, hi + 1, size=len(combos)).astype(np.float64)
    population = PopulationTable(
        area_ids=np.asarray(graph.area_ids, dtype=object)[combos[:, 0]],
        factors={n: combos[:, i + 1] for i, n in enumerate(names)},
        counts=counts,
        schemas={n: spec.levels(n) for n in names})

    if spec.include_spatial:
        theta = lcar_sample(graph, LcarHyper(config.sigma, config.lam), rng)
        keys = population.cell_keys(spec, graph.area_ids)
        cons = ConstraintSet(population_weights(spec, keys, counts, graph.K))
        theta = cons.project(theta)
    else:
        theta = np.zeros(graph.K)

    truth = SyntheticTruth(spec=spec, graph=graph, kappa=kappa, alpha=alpha, theta=theta,
                           sigma=float(config.sigma), lam=float(config.lam), population=population)
    return truth, population


@dataclass
class SamplingDesign:
    '''
    exactly one of fraction (per stratum-area unit), per_area (quota per area)
    or total (overall n) sizes the first stage
    '''
    strata: tuple = None
    fraction: float = None
    per_area: int = None
    total: int = None
    second_stage: dict = field(default_factory=dict)

    def validate(self, spec):
        given = [v is not None for v in (self.fraction, self.per_area, self.total)]
        if sum(given) != 1:
            raise InputError(' [x] Sampling design needs exactly one of fraction, per_area, total')
        if self.fraction is not None and not 0 <= self.fraction <= 1:
            raise InputError(' [x] Sampling fraction outside [0, 1]: {}'.format(self.fraction))
        names = [n for n, _ in spec.schemas]
        for name in self.strata or ():
            if name not in names:
                raise InputError(' [x] Stratum factor is not declared: ' + name)
        for name, rates in self.second_stage.items():
            if name not in names:
                raise InputError(' [x] Second-stage factor is not declared: ' + name)
            for level, rate in rates.items():
                if str(level) not in spec.levels(name):
                    raise InputError(' [x] Unknown level "{}" of factor "{}" in second stage'.format(level, name))
                if not 0 <= rate <= 1:
                    raise InputError(' [x] Second-stage rate outside [0, 1]: {}'.format(rate))
        return self


def largest_remainder(total, weights):
    '''integer allocation of total proportional to weights, summing exactly to total'''
    weights = np.asarray(weights, dtype=np.float64)
    if total == 0 or weights.sum() == 0:
        return np.zeros(len(weights), dtype=np.int64)
    exact = total * weights / weights.sum()
    quota = np.floor(exact).astype(np.int64)
    left = int(total - quota.sum())
    order = np.argsort(-(exact - quota), kind='stable')
    quota[order[:left]] += 1
    return quota


def draw_survey(truth, design, seed):
    spec, pop, graph = truth.spec, truth.population, truth.graph
    design.validate(spec)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(1,)))
    names = [n for n, _ in spec.schemas]
    strata = list(design.strata) if design.strata is not None else names

    frame = pd.DataFrame({'area': pop.area_ids, **{n: pop.factors[n] for n in names}, 'N': pop.counts})
    frame['unit'] = frame.groupby(['area'] + strata, sort=True).ngroup()
    unit_N = frame.groupby('unit')['N'].sum().to_numpy()
    unit_area = frame.groupby('unit')['area'].first().to_numpy()

    if design.fraction is not None:
        quota = np.floor(unit_N * design.fraction + 0.5).astype(np.int64)
    elif design.per_area is not None:
        quota = np.zeros(len(unit_N), dtype=np.int64)
        for a in graph.area_ids:
            units = np.flatnonzero(unit_area == a)
            quota[units] = largest_remainder(design.per_area, unit_N[units])
    else:
        quota = largest_remainder(design.total, unit_N)
    over = np.flatnonzero(quota > unit_N)
    if len(over):
        raise InputError(' [x] Requested sample exceeds the population of {} unit(s), first in area {}'.format(
            len(over), unit_area[over[0]]))

    # first stage: SRS without replacement inside each unit, spread over its cells
    taken = np.zeros(len(frame), dtype=np.int64)
    for u, rows in frame.groupby('unit').indices.items():
        if quota[u]:
            taken[rows] = rng.multivariate_hypergeometric(pop.counts[rows].astype(np.int64), int(quota[u]))

    # second stage: per-level retention
    for name, rates in design.second_stage.items():
        levels = spec.levels(name)
        for level, rate in rates.items():
            rows = np.flatnonzero(pop.factors[name] == levels.index(str(level)))
            taken[rows] = rng.binomial(taken[rows], rate)

    keys = pop.cell_keys(spec, graph.area_ids)
    pi = cell_probabilities(truth, spec, keys)
    cells = np.flatnonzero(taken)
    outcome_counts = np.zeros((len(frame), spec.n_categories), dtype=np.int64)
    if len(cells):
        outcome_counts[cells] = rng.multinomial(taken[cells], pi[cells])

    row_of = np.repeat(np.repeat(np.arange(len(frame)), spec.n_categories), outcome_counts.ravel())
    outcome = np.repeat(np.tile(np.arange(1, spec.n_categories + 1), len(frame)), outcome_counts.ravel())
    n = len(outcome)
    width = max(len(str(n)), 6)
    data = SurveyDataset(
        respondent_ids=np.array(['r{:0{}d}'.format(i + 1, width) for i in range(n)], dtype=object),
        area_ids=pop.area_ids[row_of],
        factors={name: pop.factors[name][row_of] for name in names},
        outcome=outcome,
        n_categories=spec.n_categories,
        schemas={name: spec.levels(name) for name in names})
    return data.validate(known_areas=graph.area_ids)


def identifiability_residual(truth, data):
    '''largest |sum_k n_hk theta_k| of the true theta under the sample weights, divided by n'''
    if data.n == 0:
        return 0.0
    cells = compile_cells(data, truth.spec, truth.graph.area_ids)
    keys = CellKeys(group=cells.group, additive=cells.additive, area=cells.area)
    weights = population_weights(truth.spec, keys, cells.n_cell, truth.graph.K)
    return float(np.max(np.abs(weights @ truth.theta)) / data.n)


def write_truth(truth, path, residual=None):
    frame = pd.DataFrame({'parameter': list(truth.parameters()), 'value': list(truth.parameters().values())})
    with open(path, 'w', encoding='utf-8') as f:
        if residual is not None:
            f.write('# identifiability: max sample-weighted constraint residual of true theta / n = {:.6g}\n'.format(
                residual))
        frame.to_csv(f, index=False, float_format='%.17g')


def read_truth(path):
    frame = pd.read_csv(path, comment='#', float_precision='round_trip')
    return dict(zip(frame['parameter'], frame['value'].astype(np.float64)))
