import numpy as np
import pytest

from ordinal.model import ModelSpec, SurveyDataset
from ordinal.sampler import McmcConfig, ChainDraws, PosteriorDraws
from ordinal.spatial_graph import build_graph
from tools.synth import TruthConfig, SamplingDesign, generate_population, draw_survey


@pytest.fixture
def path3():
    return build_graph(['a', 'b', 'c'], [('a', 'b'), ('b', 'c')])


@pytest.fixture
def toy_spec():
    return ModelSpec(
        schemas=(('sex', ('m', 'f')), ('dw', ('d1', 'd2', 'd3'))),
        n_categories=3,
        cut_factors=('sex',),
        additive_factors=('dw',))


def random_dataset(spec, area_ids, n, seed):
    rng = np.random.default_rng(seed)
    schemas = dict(spec.schemas)
    return SurveyDataset(
        respondent_ids=['r{}'.format(i) for i in range(n)],
        area_ids=rng.choice(list(area_ids), size=n),
        factors={name: rng.integers(0, len(levels), size=n) for name, levels in schemas.items()},
        outcome=rng.integers(1, spec.n_categories + 1, size=n),
        n_categories=spec.n_categories,
        schemas=schemas)


@pytest.fixture
def make_dataset():
    return random_dataset


@pytest.fixture
def quick_config():
    def factory(**kwargs):
        options = dict(chains=2, iterations=400, burnin=200, thin=2, seed=11, workers=1, progress=False)
        options.update(kwargs)
        return McmcConfig(**options)
    return factory


@pytest.fixture(scope='module')
def small_truth():
    config = TruthConfig(
        n_rows=3, n_cols=3, n_categories=3,
        factors={'sex': ('m', 'f'), 'dw': ('d1', 'd2')},
        cut_factors=('sex',), additive_factors=('dw',),
        cell_count_range=(50, 100))
    truth, _ = generate_population(config, seed=7)
    return truth


@pytest.fixture(scope='module')
def small_survey(small_truth):
    return draw_survey(small_truth, SamplingDesign(per_area=40), seed=7)


def fixed_draws(spec, area_ids, kappa, alpha, theta, chains=1):
    '''PosteriorDraws holding the given (draws, ...) arrays in every chain'''
    kappa = np.asarray(kappa, dtype=np.float64)
    S = kappa.shape[0]
    config = McmcConfig(chains=chains, iterations=S + 1, burnin=1, thin=1, workers=1, progress=False)
    chain_list = [ChainDraws(
        iters=np.arange(2, S + 2),
        kappa=kappa.copy(),
        alpha=[np.asarray(a, dtype=np.float64).copy() for a in alpha],
        theta=np.asarray(theta, dtype=np.float64).copy(),
        sigma=np.full(S, 0.5),
        lam=np.full(S, 0.5),
        loglik=np.zeros(S)) for _ in range(chains)]
    return PosteriorDraws(chains=chain_list, spec=spec, config=config, area_ids=tuple(area_ids))


@pytest.fixture
def make_draws():
    return fixed_draws
