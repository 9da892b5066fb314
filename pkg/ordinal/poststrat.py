'''
Post-stratification of model cell probabilities to area-level estimates

    P_jk = (1 / N_k) sum_{cells c in k} N_c pi_jc

applied draw by draw, then summarized. Also relevance probabilities
P(theta_k < 0 | y) and the posterior predictive check of area percentages.
'''
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .errors import InputError
from .model import category_probs, compile_cells

QUANTILES = (0.025, 0.5, 0.975)
RELEVANCE_UPPER = 0.8
RELEVANCE_LOWER = 0.2


@dataclass
class CellKeys:
    '''group, additive codes (-1 where the factor is averaged out) and area index per row'''
    group: np.ndarray
    additive: np.ndarray
    area: np.ndarray

    def __len__(self):
        return len(self.group)


@dataclass
class PopulationTable:
    area_ids: np.ndarray
    factors: dict
    counts: np.ndarray
    schemas: dict

    def __post_init__(self):
        self.area_ids = np.asarray(self.area_ids, dtype=object).astype(str).astype(object)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        self.factors = {name: np.asarray(codes, dtype=np.int64) for name, codes in self.factors.items()}
        self.schemas = {name: tuple(str(v) for v in lv) for name, lv in self.schemas.items()}
        if not np.all(np.isfinite(self.counts)) or np.any(self.counts < 0):
            raise InputError(' [x] Population counts must be finite and nonnegative')
        for name, codes in self.factors.items():
            if name not in self.schemas:
                raise InputError(' [x] Population factor "{}" is not declared'.format(name))
            if len(codes) != self.n_rows:
                raise InputError(' [x] Population factor "{}" has {} values for {} rows'.format(
                    name, len(codes), self.n_rows))
            if self.n_rows and (codes.min() < 0 or codes.max() >= len(self.schemas[name])):
                raise InputError(' [x] Undeclared level code in population factor "{}"'.format(name))

    @property
    def n_rows(self):
        return len(self.counts)

    def area_totals(self, area_ids):
        '''N_k in the given area order; areas without rows get 0'''
        totals = pd.Series(self.counts).groupby(pd.Series(self.area_ids)).sum()
        return np.array([float(totals.get(a, 0.0)) for a in area_ids])

    def cell_keys(self, spec, area_ids):
        missing = [n for n in spec.cut_factors if n not in self.factors]
        if missing:
            raise InputError(' [x] Population table lacks cut factor(s): ' + ', '.join(missing))
        index = {a: k for k, a in enumerate(area_ids)}
        unknown = sorted(set(self.area_ids.tolist()) - set(index))
        if unknown:
            raise InputError(' [x] Population references unknown area(s): ' + ', '.join(unknown))
        group = spec.group_index([self.factors[n] for n in spec.cut_factors]) if spec.cut_factors \
            else np.zeros(self.n_rows, dtype=np.int64)
        additive = np.full((self.n_rows, len(spec.additive_factors)), -1, dtype=np.int64)
        for f, name in enumerate(spec.additive_factors):
            if name in self.factors:
                additive[:, f] = self.factors[name]
        area = np.array([index[a] for a in self.area_ids], dtype=np.int64)
        return CellKeys(group=group, additive=additive, area=area)

    def absent_factors(self, spec):
        return [n for n in spec.additive_factors if n not in self.factors]


def cell_probabilities(state, spec, keys):
    '''
    pi for every requested cell, sampled or not. An additive code of -1
    contributes 0 to the predictor. state needs kappa, alpha and theta.
    '''
    group = np.asarray(keys.group, dtype=np.int64)
    additive = np.asarray(keys.additive, dtype=np.int64).reshape(len(group), -1)
    area = np.asarray(keys.area, dtype=np.int64)
    kappa = np.asarray(state.kappa, dtype=np.float64)
    theta = np.asarray(state.theta, dtype=np.float64)
    if len(group) and (group.min() < 0 or group.max() >= spec.n_groups):
        raise InputError(' [x] Cell references an unknown cut-factor combination')
    if len(area) and (area.min() < 0 or area.max() >= len(theta)):
        raise InputError(' [x] Cell references an unknown area index')

    shift = theta[area].copy()
    for f, (alpha, size) in enumerate(zip(state.alpha, spec.additive_sizes)):
        codes = additive[:, f]
        if np.any(codes >= size):
            raise InputError(' [x] Cell references an unknown level of factor "{}"'.format(spec.additive_factors[f]))
        present = codes >= 0
        shift[present] += np.asarray(alpha)[codes[present]]
    _, pi = category_probs(kappa[group], shift)
    return pi


@dataclass
class DrawView:
    kappa: np.ndarray
    alpha: list
    theta: np.ndarray


def iter_draws(draws):
    '''pooled draws in chain-major order as (kappa, alpha, theta) views'''
    for ch in draws.chains:
        for s in range(ch.n_stored):
            yield DrawView(kappa=ch.kappa[s], alpha=[a[s] for a in ch.alpha], theta=ch.theta[s])


def _summaries(values, axis=0):
    q = np.quantile(values, QUANTILES, axis=axis, method='linear')
    sd = values.std(axis=axis, ddof=1) if values.shape[axis] > 1 else np.zeros(q.shape[1:])
    return values.mean(axis=axis), sd, q


@dataclass
class AreaEstimates:
    area_ids: tuple
    category_labels: tuple
    population: np.ndarray
    draws: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    quantiles: np.ndarray
    relevance: np.ndarray = None
    warnings: list = field(default_factory=list)

    def to_frame(self):
        K, J = self.mean.shape
        return pd.DataFrame({
            'area': np.repeat(self.area_ids, J),
            'category': np.tile(self.category_labels, K),
            'mean': self.mean.ravel(),
            'sd': self.sd.ravel(),
            'q2.5': self.quantiles[0].ravel(),
            'q50': self.quantiles[1].ravel(),
            'q97.5': self.quantiles[2].ravel(),
        })

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.10g', na_rep='')


def aggregation_matrix(keys, counts, n_areas):
    '''sparse (areas, cells) matrix holding N of every population cell'''
    return sp.csr_matrix((np.asarray(counts, dtype=np.float64), (keys.area, np.arange(len(keys)))),
                         shape=(n_areas, len(keys)))


def poststratify(draws, pop, spec, log=print):
    area_ids = tuple(draws.area_ids)
    keys = pop.cell_keys(spec, area_ids)
    warnings = []
    absent = pop.absent_factors(spec)
    if absent:
        reference = 'reference level' if spec.alpha_constraint == 'corner' else 'average level'
        msg = 'Population lacks additive factor(s) {}; their effect is set to 0 (the {})'.format(
            ', '.join(absent), reference)
        warnings.append(msg)
        log(' [WARNING] ' + msg)

    K, J = len(area_ids), spec.n_categories
    agg = aggregation_matrix(keys, pop.counts, K)
    n_k = np.asarray(agg.sum(axis=1)).ravel()
    empty = n_k == 0
    if empty.any():
        msg = 'Area(s) with zero population, estimates not applicable: ' + ', '.join(
            a for a, e in zip(area_ids, empty) if e)
        warnings.append(msg)
        log(' [WARNING] ' + msg)

    values = np.empty((draws.n_total, K, J))
    with np.errstate(invalid='ignore', divide='ignore'):
        for s, d in enumerate(iter_draws(draws)):
            pi = cell_probabilities(d, spec, keys)
            values[s] = (agg @ pi) / n_k[:, None]
    values[:, empty, :] = np.nan

    mean, sd, q = _summaries(values)
    return AreaEstimates(
        area_ids=area_ids,
        category_labels=tuple(draws.category_labels),
        population=n_k,
        draws=values,
        mean=mean, sd=sd, quantiles=q,
        relevance=relevance_all(draws) if spec.include_spatial else None,
        warnings=warnings)


def relevance_from_samples(values):
    values = np.asarray(values, dtype=np.float64)
    return float(np.mean(values < 0.0))


def relevance_all(draws):
    theta = draws.stacked('theta')
    return np.mean(theta < 0.0, axis=0)


def relevance(draws, area):
    if area not in draws.area_ids:
        raise InputError(' [x] Unknown area id: {}'.format(area))
    k = list(draws.area_ids).index(area)
    return relevance_from_samples(draws.stacked('theta')[:, k])


def relevance_flag(prob, upper=RELEVANCE_UPPER, lower=RELEVANCE_LOWER):
    if prob > upper:
        return 'worse'
    if prob < lower:
        return 'better'
    return ''


def relevance_table(draws, upper=RELEVANCE_UPPER, lower=RELEVANCE_LOWER):
    prob = relevance_all(draws)
    return pd.DataFrame({
        'area': list(draws.area_ids),
        'prob': prob,
        'flag': [relevance_flag(p, upper, lower) for p in prob],
    })


def theta_summary(draws, upper=RELEVANCE_UPPER, lower=RELEVANCE_LOWER):
    theta = draws.stacked('theta')
    mean, sd, q = _summaries(theta)
    prob = np.mean(theta < 0.0, axis=0)
    return pd.DataFrame({
        'area': list(draws.area_ids),
        'mean': mean, 'sd': sd, 'q2.5': q[0], 'q50': q[1], 'q97.5': q[2],
        'relevance': prob,
        'flag': [relevance_flag(p, upper, lower) for p in prob],
    })


def kappa_summary(draws):
    kappa = draws.stacked('kappa')
    mean, sd, q = _summaries(kappa)
    labels = draws.spec.group_labels()
    G, n_cut = mean.shape
    return pd.DataFrame({
        'group': np.repeat(labels, n_cut),
        'j': np.tile(np.arange(1, n_cut + 1), G),
        'mean': mean.ravel(), 'sd': sd.ravel(),
        'q2.5': q[0].ravel(), 'q50': q[1].ravel(), 'q97.5': q[2].ravel(),
    })


def default_ppc_areas(dataset, pop=None, top=4):
    '''most populated surveyed areas, or the most surveyed ones without a population table'''
    counts = dataset.area_counts()
    surveyed = sorted(counts)
    if pop is not None:
        sizes = pop.area_totals(surveyed)
    else:
        sizes = np.array([counts[a] for a in surveyed], dtype=np.float64)
    order = sorted(range(len(surveyed)), key=lambda i: -sizes[i])
    return [surveyed[i] for i in order[:top]]


@dataclass
class PredictiveCheck:
    area_ids: tuple
    category_labels: tuple
    simulated: np.ndarray
    observed: np.ndarray
    pred_mean: np.ndarray
    pred_lo: np.ndarray
    pred_hi: np.ndarray
    warnings: list = field(default_factory=list)

    def to_frame(self):
        A, J = self.observed.shape
        return pd.DataFrame({
            'area': np.repeat(self.area_ids, J),
            'category': np.tile(self.category_labels, A),
            'pred_mean': self.pred_mean.ravel(),
            'pred_lo': self.pred_lo.ravel(),
            'pred_hi': self.pred_hi.ravel(),
            'observed': self.observed.ravel(),
        })

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.10g')

    def coverage(self):
        inside = (self.observed >= self.pred_lo) & (self.observed <= self.pred_hi)
        return float(np.mean(inside)) if inside.size else float('nan')


def posterior_predictive_check(draws, dataset, spec, areas, seed=0, log=print):
    '''
    Per stored draw and area: simulate every sampled cell's outcomes from the
    draw's pi, aggregate to area percentages. Each (draw, area) pair owns an RNG
    substream derived from (seed, draw, area).
    '''
    area_ids = tuple(draws.area_ids)
    cells = compile_cells(dataset, spec, area_ids)
    totals = cells.area_totals(len(area_ids))
    index = {a: k for k, a in enumerate(area_ids)}
    unknown = [a for a in areas if a not in index]
    if unknown:
        raise InputError(' [x] Unknown area id(s) requested: ' + ', '.join(map(str, unknown)))

    warnings = []
    kept = [a for a in areas if totals[index[a]] > 0]
    dropped = [a for a in areas if totals[index[a]] == 0]
    if dropped:
        msg = 'Area(s) without respondents excluded from the predictive check: ' + ', '.join(dropped)
        warnings.append(msg)
        log(' [WARNING] ' + msg)

    J = spec.n_categories
    area_cells = [np.flatnonzero(cells.area == index[a]) for a in kept]
    observed = np.array([cells.counts[idx].sum(axis=0) / totals[index[a]] * 100.0
                         for a, idx in zip(kept, area_cells)]).reshape(len(kept), J)

    simulated = np.empty((draws.n_total, len(kept), J))
    for s, d in enumerate(iter_draws(draws)):
        for i, (a, idx) in enumerate(zip(kept, area_cells)):
            k = index[a]
            rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(s, k)))
            keys = CellKeys(group=cells.group[idx], additive=cells.additive[idx], area=cells.area[idx])
            pi = cell_probabilities(d, spec, keys)
            n_c = cells.counts[idx].sum(axis=1)
            counts = rng.multinomial(n_c, pi)
            simulated[s, i] = counts.sum(axis=0) / totals[k] * 100.0

    lo, hi = np.quantile(simulated, [0.025, 0.975], axis=0, method='linear')
    return PredictiveCheck(
        area_ids=tuple(kept),
        category_labels=tuple(draws.category_labels),
        simulated=simulated,
        observed=observed,
        pred_mean=simulated.mean(axis=0),
        pred_lo=lo, pred_hi=hi,
        warnings=warnings)
