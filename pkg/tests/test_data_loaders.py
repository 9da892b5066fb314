import numpy as np
import pytest

from ordinal.data_loaders import (load_draws, read_adjacency, read_population, read_survey, save_draws,
                                  write_adjacency, write_population, write_survey)
from ordinal.errors import InputError
from ordinal.model import ModelSpec
from ordinal.spatial_graph import build_graph

SCHEMAS = {'sex': ('m', 'f'), 'dw': ('d1', 'd2')}


def test_survey_file(small_survey, tmp_path):
    path = str(tmp_path / 'survey.csv')
    write_survey(small_survey, path)
    data = read_survey(path, SCHEMAS, 3)
    assert data.n == small_survey.n
    assert list(data.respondent_ids) == list(small_survey.respondent_ids)
    assert list(data.area_ids) == list(small_survey.area_ids)
    np.testing.assert_array_equal(data.outcome, small_survey.outcome)
    for name in SCHEMAS:
        np.testing.assert_array_equal(data.factors[name], small_survey.factors[name])


def test_survey_errors(tmp_path):
    path = tmp_path / 'survey.csv'
    path.write_text('respondent_id,area,sex,dw,outcome\nr1,a,x,d1,1\n')
    with pytest.raises(InputError, match='x'):
        read_survey(str(path), SCHEMAS, 3)
    path.write_text('respondent_id,area,sex,dw,outcome\nr1,a,m,d1,high\n')
    with pytest.raises(InputError, match='r1'):
        read_survey(str(path), SCHEMAS, 3)
    path.write_text('respondent_id,area,sex,outcome\nr1,a,m,1\n')
    with pytest.raises(InputError, match='dw'):
        read_survey(str(path), SCHEMAS, 3)
    path.write_text('respondent_id,area,sex,dw,outcome\nr1,a,m,d1,4\n')
    with pytest.raises(InputError):
        read_survey(str(path), SCHEMAS, 3)
    with pytest.raises(InputError):
        read_survey(str(tmp_path / 'missing.csv'), SCHEMAS, 3)


def test_population_file(small_truth, tmp_path):
    path = str(tmp_path / 'population.csv')
    write_population(small_truth.population, path)
    pop = read_population(path, SCHEMAS)
    np.testing.assert_array_equal(pop.counts, small_truth.population.counts)
    assert list(pop.area_ids) == list(small_truth.population.area_ids)
    np.testing.assert_array_equal(pop.factors['dw'], small_truth.population.factors['dw'])


def test_population_without_a_factor(tmp_path):
    path = tmp_path / 'population.csv'
    path.write_text('area,sex,count\na,m,10\na,f,12\n')
    pop = read_population(str(path), SCHEMAS)
    assert set(pop.factors) == {'sex'}
    path.write_text('area,sex,count\na,m,many\n')
    with pytest.raises(InputError):
        read_population(str(path), SCHEMAS)


def test_adjacency_file(tmp_path):
    graph = build_graph(['a', 'b', 'c', 'd'], [('a', 'b'), ('b', 'c')])
    path = str(tmp_path / 'adjacency.txt')
    write_adjacency(graph, path)
    again = read_adjacency(path)
    assert again.area_ids == graph.area_ids
    assert again.n_edges == 2
    np.testing.assert_array_equal(again.degrees, [1, 2, 1, 0])


def test_adjacency_parsing(tmp_path):
    path = tmp_path / 'adjacency.txt'
    path.write_text('# comment\nb, a\nc\tb  # trailing\n\n')
    graph = read_adjacency(str(path), extra_areas=['e'])
    assert graph.area_ids == ('a', 'b', 'c', 'e')
    assert graph.n_edges == 2
    path.write_text('a b c\n')
    with pytest.raises(InputError, match='1'):
        read_adjacency(str(path))
    path.write_text('a a\n')
    with pytest.raises(InputError):
        read_adjacency(str(path))


def test_draws_directory(make_draws, tmp_path):
    spec = ModelSpec(schemas=tuple(SCHEMAS.items()), n_categories=3, cut_factors=('sex',), additive_factors=('dw',))
    rng = np.random.default_rng(0)
    kappa = np.sort(rng.normal(size=(6, 2, 2)), axis=-1)
    draws = make_draws(spec, ('a', 'b'), kappa, [rng.normal(size=(6, 2))], rng.normal(size=(6, 2)), chains=2)
    save_draws(draws, str(tmp_path), run_config={'note': 'x'})
    assert sorted(p.name for p in tmp_path.iterdir()) == ['chain_0.csv', 'chain_1.csv', 'manifest.yaml']
    loaded = load_draws(str(tmp_path))
    assert loaded.n_chains == 2
    assert loaded.area_ids == ('a', 'b')
    assert loaded.spec == spec
    for a, b in zip(draws.chains, loaded.chains):
        np.testing.assert_array_equal(a.kappa, b.kappa)
        np.testing.assert_array_equal(a.alpha[0], b.alpha[0])
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.iters, b.iters)


def test_draws_without_spatial_effects(make_draws, tmp_path):
    spec = ModelSpec(schemas=(), n_categories=3, include_spatial=False)
    draws = make_draws(spec, ('a',), np.tile([-1.0, 1.0], (4, 1, 1)), [], np.zeros((4, 1)))
    save_draws(draws, str(tmp_path))
    loaded = load_draws(str(tmp_path))
    np.testing.assert_array_equal(loaded.chains[0].theta, 0.0)
    assert np.all(np.isnan(loaded.chains[0].sigma))
    assert loaded.column_names() == ['kappa[all][1]', 'kappa[all][2]']


def test_missing_manifest(tmp_path):
    with pytest.raises(InputError):
        load_draws(str(tmp_path))
