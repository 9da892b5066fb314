'''
Cumulative-logit model for ordinal survey outcomes.

    logit P(Y <= j | g, h, k) = kappa[g, j] + sum_f alpha_f[h_f] + theta[k],  j = 1..J-1

g indexes the full interaction of the cut factors (each combination owns its own
ordered cut points), h the levels of the additive factors, k the area. The
likelihood is evaluated over cells of identical (g, h, k), which is exact since
respondents in a cell share their category probabilities.
'''
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import expit

from .cutpoints import omega_to_kappa, prior_mean_omega, kappa_to_omega
from .errors import InputError, DomainError, EvaluationError

PI_FLOOR = 1e-12
ALPHA_CONSTRAINTS = ('corner', 'zero-sum')


@dataclass
class SurveyDataset:
    respondent_ids: np.ndarray
    area_ids: np.ndarray
    factors: dict
    outcome: np.ndarray
    n_categories: int
    schemas: dict

    def __post_init__(self):
        self.respondent_ids = np.asarray(self.respondent_ids, dtype=object)
        self.area_ids = np.asarray(self.area_ids, dtype=object).astype(str).astype(object)
        self.outcome = np.asarray(self.outcome, dtype=np.int64)
        self.factors = {name: np.asarray(codes, dtype=np.int64) for name, codes in self.factors.items()}
        self.schemas = {name: tuple(str(v) for v in levels) for name, levels in self.schemas.items()}

    @property
    def n(self):
        return len(self.outcome)

    @classmethod
    def from_records(cls, records, schemas, n_categories):
        '''records: iterable of (respondent id, area id, {factor: level label}, outcome)'''
        schemas = {name: tuple(str(v) for v in levels) for name, levels in schemas.items()}
        lookup = {name: {lv: i for i, lv in enumerate(levels)} for name, levels in schemas.items()}
        ids, areas, outcome = [], [], []
        codes = {name: [] for name in schemas}
        for rid, area, values, y in records:
            ids.append(rid)
            areas.append(str(area))
            outcome.append(int(y))
            for name in schemas:
                if name not in values:
                    raise InputError(' [x] Respondent {} has no value for factor "{}"'.format(rid, name))
                level = str(values[name])
                if level not in lookup[name]:
                    raise InputError(' [x] Unknown level "{}" of factor "{}" (respondent {})'.format(level, name, rid))
                codes[name].append(lookup[name][level])
        data = cls(ids, areas, codes, outcome, n_categories, schemas)
        data.validate()
        return data

    def validate(self, known_areas=None):
        if self.n_categories < 2:
            raise InputError(' [x] An ordinal outcome needs J >= 2 categories, got {}'.format(self.n_categories))
        bad = (self.outcome < 1) | (self.outcome > self.n_categories)
        if bad.any():
            rid = self.respondent_ids[np.argmax(bad)]
            raise InputError(' [x] Outcome outside 1..{} for respondent {}: {}'.format(
                self.n_categories, rid, self.outcome[np.argmax(bad)]))
        for name, levels in self.schemas.items():
            codes = self.factors.get(name)
            if codes is None:
                raise InputError(' [x] Missing factor column: ' + name)
            if len(codes) != self.n:
                raise InputError(' [x] Factor "{}" has {} values for {} respondents'.format(name, len(codes), self.n))
            if self.n and (codes.min() < 0 or codes.max() >= len(levels)):
                raise InputError(' [x] Undeclared level code in factor "{}"'.format(name))
        if known_areas is not None:
            known = set(known_areas)
            unknown = sorted(set(self.area_ids.tolist()) - known)
            if unknown:
                raise InputError(' [x] Survey references area(s) absent from the adjacency: ' + ', '.join(unknown))
        return self

    def area_counts(self):
        areas, counts = np.unique(self.area_ids.astype(str), return_counts=True)
        return dict(zip(areas.tolist(), counts.tolist()))


@dataclass(frozen=True)
class ModelSpec:
    schemas: tuple
    n_categories: int
    cut_factors: tuple = ()
    additive_factors: tuple = ()
    alpha_constraint: str = 'zero-sum'
    include_spatial: bool = True

    def __post_init__(self):
        schemas = self.schemas.items() if isinstance(self.schemas, dict) else self.schemas
        object.__setattr__(self, 'schemas', tuple((str(n), tuple(str(v) for v in lv)) for n, lv in schemas))
        object.__setattr__(self, 'cut_factors', tuple(self.cut_factors))
        object.__setattr__(self, 'additive_factors', tuple(self.additive_factors))
        names = [n for n, _ in self.schemas]
        if self.n_categories < 2:
            raise InputError(' [x] n_categories must be >= 2, got {}'.format(self.n_categories))
        for name in self.cut_factors + self.additive_factors:
            if name not in names:
                raise InputError(' [x] Model references undeclared factor: ' + name)
        overlap = set(self.cut_factors) & set(self.additive_factors)
        if overlap:
            raise InputError(' [x] Factors cannot be both cut and additive: ' + ', '.join(sorted(overlap)))
        if len(set(self.cut_factors)) != len(self.cut_factors) or \
                len(set(self.additive_factors)) != len(self.additive_factors):
            raise InputError(' [x] Repeated factor in model spec')
        if self.alpha_constraint not in ALPHA_CONSTRAINTS:
            raise InputError(' [x] Unknown alpha_constraint: {} (corner or zero-sum)'.format(self.alpha_constraint))
        for name in self.additive_factors:
            if len(self.levels(name)) < 2:
                raise InputError(' [x] Additive factor "{}" needs at least two levels'.format(name))

    def levels(self, name):
        return dict(self.schemas)[name]

    @property
    def cut_dims(self):
        return tuple(len(self.levels(n)) for n in self.cut_factors)

    @property
    def n_groups(self):
        return int(np.prod(self.cut_dims)) if self.cut_factors else 1

    @property
    def additive_sizes(self):
        return tuple(len(self.levels(n)) for n in self.additive_factors)

    def group_index(self, cut_codes):
        '''cut_codes: one code array per cut factor -> flat combination index'''
        if not self.cut_factors:
            n = len(cut_codes[0]) if len(cut_codes) else 0
            return np.zeros(n, dtype=np.int64)
        return np.ravel_multi_index(tuple(np.asarray(c, dtype=np.int64) for c in cut_codes),
                                    self.cut_dims).astype(np.int64)

    def group_labels(self):
        if not self.cut_factors:
            return ['all']
        labels = []
        for flat in range(self.n_groups):
            codes = np.unravel_index(flat, self.cut_dims)
            labels.append(':'.join(self.levels(n)[c] for n, c in zip(self.cut_factors, codes)))
        return labels

    def to_dict(self):
        return {
            'factors': {n: list(lv) for n, lv in self.schemas},
            'n_categories': int(self.n_categories),
            'cut_factors': list(self.cut_factors),
            'additive_factors': list(self.additive_factors),
            'alpha_constraint': self.alpha_constraint,
            'include_spatial': bool(self.include_spatial),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            schemas=tuple((n, tuple(lv)) for n, lv in d['factors'].items()),
            n_categories=int(d['n_categories']),
            cut_factors=tuple(d.get('cut_factors') or ()),
            additive_factors=tuple(d.get('additive_factors') or ()),
            alpha_constraint=d.get('alpha_constraint', 'zero-sum'),
            include_spatial=bool(d.get('include_spatial', True)))

    def content_hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(text.encode('utf-8')).hexdigest()


@dataclass
class CellTable:
    group: np.ndarray
    additive: np.ndarray
    area: np.ndarray
    counts: np.ndarray
    area_ids: tuple
    _group_cells: dict = field(default_factory=dict, repr=False)

    @property
    def n_cells(self):
        return len(self.group)

    @property
    def n_cell(self):
        return self.counts.sum(axis=1)

    @property
    def n(self):
        return int(self.counts.sum())

    def group_cells(self, g):
        '''cell indices of one cut-factor combination, cached'''
        if g not in self._group_cells:
            self._group_cells[g] = np.flatnonzero(self.group == g)
        return self._group_cells[g]

    def weights(self, n_areas, factor_pos, n_levels):
        '''n_hk: respondents per (level of one additive factor, area)'''
        out = np.zeros((n_levels, n_areas))
        np.add.at(out, (self.additive[:, factor_pos], self.area), self.n_cell)
        return out

    def area_totals(self, n_areas):
        return np.bincount(self.area, weights=self.n_cell, minlength=n_areas)


def compile_cells(data, spec, area_ids=None):
    if data.n_categories != spec.n_categories:
        raise InputError(' [x] Dataset has J={} but the model expects J={}'.format(data.n_categories, spec.n_categories))
    if area_ids is None:
        area_ids = tuple(sorted(set(data.area_ids.tolist())))
    area_ids = tuple(area_ids)
    index = {a: k for k, a in enumerate(area_ids)}
    unknown = sorted(set(data.area_ids.tolist()) - set(index))
    if unknown:
        raise InputError(' [x] Survey references unknown area(s): ' + ', '.join(unknown))

    n_add = len(spec.additive_factors)
    J = spec.n_categories
    if data.n == 0:
        return CellTable(np.zeros(0, np.int64), np.zeros((0, n_add), np.int64), np.zeros(0, np.int64),
                         np.zeros((0, J), np.int64), area_ids)

    group = spec.group_index([data.factors[n] for n in spec.cut_factors]) if spec.cut_factors \
        else np.zeros(data.n, dtype=np.int64)
    area = np.array([index[a] for a in data.area_ids], dtype=np.int64)
    columns = [group] + [data.factors[n] for n in spec.additive_factors] + [area]
    keys = np.stack(columns, axis=1)
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)

    counts = np.zeros((len(unique), J), dtype=np.int64)
    np.add.at(counts, (inverse, data.outcome - 1), 1)
    return CellTable(
        group=unique[:, 0].copy(),
        additive=unique[:, 1:1 + n_add].copy(),
        area=unique[:, -1].copy(),
        counts=counts,
        area_ids=area_ids)


def complete_alpha(free, constraint):
    '''H-1 free effects -> H effects satisfying the constraint exactly'''
    free = np.asarray(free, dtype=np.float64)
    if constraint == 'corner':
        first = 0.0
    elif constraint == 'zero-sum':
        first = -free.sum()
    else:
        raise InputError(' [x] Unknown alpha_constraint: ' + str(constraint))
    return np.concatenate([[first], free])


@dataclass
class ParameterState:
    omega: np.ndarray
    alpha: list
    theta: np.ndarray
    sigma: float
    lam: float

    @property
    def kappa(self):
        return omega_to_kappa(self.omega)

    def copy(self):
        return ParameterState(
            omega=self.omega.copy(),
            alpha=[a.copy() for a in self.alpha],
            theta=self.theta.copy(),
            sigma=float(self.sigma),
            lam=float(self.lam))

    def is_finite(self):
        return bool(np.all(np.isfinite(self.omega)) and np.all(np.isfinite(self.theta))
                    and all(np.all(np.isfinite(a)) for a in self.alpha)
                    and np.isfinite(self.sigma) and np.isfinite(self.lam))

    @classmethod
    def initial(cls, spec, n_areas, sigma=0.1, lam=0.5):
        '''omega at its prior mean (uniform delta), all effects at zero'''
        omega = np.tile(prior_mean_omega(spec.n_categories), (spec.n_groups, 1))
        alpha = [np.zeros(h) for h in spec.additive_sizes]
        return cls(omega=omega, alpha=alpha, theta=np.zeros(n_areas), sigma=sigma, lam=lam)

    @classmethod
    def from_kappa(cls, kappa, alpha, theta, sigma, lam):
        return cls(omega=kappa_to_omega(np.asarray(kappa, dtype=np.float64)),
                   alpha=[np.asarray(a, dtype=np.float64) for a in alpha],
                   theta=np.asarray(theta, dtype=np.float64), sigma=float(sigma), lam=float(lam))


def category_probs(kappa_g, shift=0.0):
    '''
    gamma_j = logistic(kappa_j + shift); pi_1 = gamma_1, pi_j = gamma_j - gamma_{j-1},
    pi_J = 1 - gamma_{J-1}. Broadcasts over leading axes of kappa_g and shift.
    '''
    kappa_g = np.asarray(kappa_g, dtype=np.float64)
    if not np.all(np.isfinite(kappa_g)) or np.any(np.diff(kappa_g, axis=-1) <= 0.0):
        raise DomainError(' [x] Cut points must be finite and strictly increasing: {}'.format(kappa_g))
    x = kappa_g + np.asarray(shift, dtype=np.float64)[..., None]
    return _probs_from_predictor(x)


def _probs_from_predictor(x):
    gamma = expit(x)
    pi = np.empty(x.shape[:-1] + (x.shape[-1] + 1,))
    pi[..., 0] = gamma[..., 0]
    pi[..., 1:-1] = np.diff(gamma, axis=-1)
    pi[..., -1] = expit(-x[..., -1])
    return gamma, pi


@njit(cache=True)
def _logistic(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def cell_loglik_kernel(kappa, group, shift, counts):
    n_cells, n_cat = counts.shape
    out = np.zeros(n_cells)
    for c in range(n_cells):
        g = group[c]
        s = shift[c]
        prev = 0.0
        total = 0.0
        for j in range(n_cat):
            if j < n_cat - 1:
                cur = _logistic(kappa[g, j] + s)
                p = cur - prev
                prev = cur
            else:
                p = _logistic(-(kappa[g, n_cat - 2] + s))
            if counts[c, j] > 0:
                if p < PI_FLOOR:
                    p = PI_FLOOR
                total += counts[c, j] * np.log(p)
        out[c] = total
    return out


def cell_shift(state, cells, idx=None):
    '''sum of additive effects plus theta of the area, per cell'''
    area = cells.area if idx is None else cells.area[idx]
    shift = state.theta[area].astype(np.float64, copy=True)
    additive = cells.additive if idx is None else cells.additive[idx]
    for f, alpha in enumerate(state.alpha):
        shift += alpha[additive[:, f]]
    return shift


def cell_loglik(state, cells, idx=None, kappa=None):
    '''per-cell log-likelihood terms sum_j c_j log pi_j'''
    if kappa is None:
        kappa = state.kappa
    group = cells.group if idx is None else cells.group[idx]
    counts = cells.counts if idx is None else cells.counts[idx]
    return cell_loglik_kernel(np.ascontiguousarray(kappa), group, cell_shift(state, cells, idx), counts)


def loglik(state, cells, spec=None):
    if not state.is_finite():
        raise EvaluationError(' [x] Non-finite parameter state')
    if cells.n_cells == 0:
        return 0.0
    value = float(np.sum(cell_loglik(state, cells)))
    if not np.isfinite(value):
        raise EvaluationError(' [x] Log-likelihood is not finite')
    return value


def respondent_loglik(state, data, spec, area_ids):
    '''per-respondent sum, the uncollapsed form of loglik'''
    if data.n == 0:
        return 0.0
    index = {a: k for k, a in enumerate(area_ids)}
    area = np.array([index[a] for a in data.area_ids], dtype=np.int64)
    group = spec.group_index([data.factors[n] for n in spec.cut_factors]) if spec.cut_factors \
        else np.zeros(data.n, dtype=np.int64)
    shift = state.theta[area].copy()
    for f, name in enumerate(spec.additive_factors):
        shift += state.alpha[f][data.factors[name]]
    _, pi = category_probs(state.kappa[group], shift)
    picked = pi[np.arange(data.n), data.outcome - 1]
    return float(np.sum(np.log(np.maximum(picked, PI_FLOOR))))


def partial_odds_form(kappa):
    '''
    Rewrite interacting cut points kappa[g, j] as a shared baseline plus
    category-specific effects: kappa[0, j] + a[g, j] with a[0, :] = 0.
    '''
    kappa = np.asarray(kappa, dtype=np.float64)
    base = kappa[0].copy()
    return base, kappa - base