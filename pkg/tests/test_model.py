import numpy as np
import pytest
from scipy.special import expit, logit
from scipy.stats import logistic

from ordinal.errors import InputError, DomainError, EvaluationError
from ordinal.model import (ModelSpec, ParameterState, SurveyDataset, category_probs, compile_cells,
                           cell_shift, complete_alpha, loglik, partial_odds_form, respondent_loglik)


def _state(spec, K, seed):
    rng = np.random.default_rng(seed)
    kappa = np.sort(rng.normal(0, 1.5, size=(spec.n_groups, spec.n_categories - 1)), axis=1)
    alpha = [complete_alpha(rng.normal(0, 0.5, size=h - 1), spec.alpha_constraint) for h in spec.additive_sizes]
    return ParameterState.from_kappa(kappa, alpha, rng.normal(0, 0.7, size=K), 0.5, 0.5)


def test_category_probs_examples():
    gamma, pi = category_probs([-1.0, 1.0], 0.0)
    np.testing.assert_allclose(gamma, [0.268941, 0.731059], atol=1e-6)
    np.testing.assert_allclose(pi, [0.268941, 0.462117, 0.268941], atol=1e-6)
    _, pi = category_probs([-1.0, 1.0], 1.0)
    np.testing.assert_allclose(pi, [0.5, 0.380797, 0.119203], atol=1e-6)
    _, pi = category_probs(logit([0.2, 0.4, 0.6, 0.8]), 0.0)
    np.testing.assert_allclose(pi, np.full(5, 0.2), atol=1e-12)


def test_category_probs_against_logistic_cdf():
    kappa = np.array([-2.0, -0.3, 0.4, 2.5])
    for shift in (-1.7, 0.0, 0.9):
        cdf = logistic.cdf(kappa + shift)
        expected = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
        _, pi = category_probs(kappa, shift)
        np.testing.assert_allclose(pi, expected, atol=1e-12)
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(pi > 0)


def test_category_probs_broadcast():
    kappa = np.tile([-1.0, 1.0], (4, 1))
    _, pi = category_probs(kappa, np.array([0.0, 1.0, -1.0, 2.0]))
    assert pi.shape == (4, 3)
    np.testing.assert_allclose(pi.sum(axis=1), 1.0, atol=1e-12)


def test_category_probs_rejects_unordered():
    with pytest.raises(DomainError):
        category_probs([1.0, -1.0], 0.0)


def test_binary_reduction():
    for kappa, shift in ((0.3, 0.0), (-1.2, 0.8)):
        _, pi = category_probs([kappa], shift)
        assert pi[0] == pytest.approx(logistic.cdf(kappa + shift), abs=1e-15)


def test_compile_cells_tally():
    spec = ModelSpec(schemas=(), n_categories=3)
    data = SurveyDataset(['r1', 'r2', 'r3'], ['a', 'a', 'a'], {}, [1, 1, 2], 3, {})
    cells = compile_cells(data, spec)
    assert cells.n_cells == 1
    np.testing.assert_array_equal(cells.counts, [[2, 1, 0]])


def test_compile_cells_preserves_counts(toy_spec, make_dataset):
    areas = ['a{:03d}'.format(k) for k in range(542)]
    data = make_dataset(toy_spec, areas, 5485, seed=1)
    cells = compile_cells(data, toy_spec, areas)
    assert cells.n == 5485
    assert cells.n_cells <= 542 * 2 * 3


def test_empty_cells():
    spec = ModelSpec(schemas=(), n_categories=4)
    data = SurveyDataset([], [], {}, [], 4, {})
    cells = compile_cells(data, spec, ('a',))
    assert cells.n_cells == 0
    assert loglik(ParameterState.initial(spec, 1), cells, spec) == 0.0


def test_single_respondent_loglik():
    spec = ModelSpec(schemas=(), n_categories=3)
    data = SurveyDataset(['r1'], ['a'], {}, [2], 3, {})
    cells = compile_cells(data, spec)
    state = ParameterState.from_kappa([[-1.0, 1.0]], [], [0.0], 0.1, 0.5)
    assert loglik(state, cells, spec) == pytest.approx(np.log(logistic.cdf(1) - logistic.cdf(-1)), abs=1e-12)


def test_collapsed_equals_respondent_sum(toy_spec, make_dataset):
    areas = ('a', 'b', 'c', 'd')
    data = make_dataset(toy_spec, areas, 200, seed=5)
    cells = compile_cells(data, toy_spec, areas)
    for seed in range(3):
        state = _state(toy_spec, len(areas), seed)
        assert loglik(state, cells, toy_spec) == pytest.approx(
            respondent_loglik(state, data, toy_spec, areas), abs=1e-10)


def test_shift_equivariance(toy_spec, make_dataset):
    areas = ('a', 'b', 'c')
    data = make_dataset(toy_spec, areas, 150, seed=9)
    cells = compile_cells(data, toy_spec, areas)
    state = _state(toy_spec, len(areas), 4)
    moved = ParameterState.from_kappa(state.kappa + 0.8, state.alpha, state.theta - 0.8, 0.5, 0.5)
    assert loglik(moved, cells) == pytest.approx(loglik(state, cells), abs=1e-9)


def test_non_finite_state():
    spec = ModelSpec(schemas=(), n_categories=3)
    data = SurveyDataset(['r1'], ['a'], {}, [2], 3, {})
    cells = compile_cells(data, spec)
    state = ParameterState.initial(spec, 1)
    state.theta[0] = np.nan
    with pytest.raises(EvaluationError):
        loglik(state, cells, spec)


def test_initial_state_is_uniform():
    spec = ModelSpec(schemas=(('g', ('x', 'y')),), n_categories=5, cut_factors=('g',))
    state = ParameterState.initial(spec, 3)
    np.testing.assert_allclose(state.kappa, np.tile(logit([0.2, 0.4, 0.6, 0.8]), (2, 1)), atol=1e-12)


def test_dataset_validation():
    with pytest.raises(InputError):
        SurveyDataset(['r1'], ['a'], {}, [4], 3, {}).validate()
    with pytest.raises(InputError, match='zz'):
        SurveyDataset(['r1'], ['zz'], {}, [1], 3, {}).validate(known_areas=['a', 'b'])
    with pytest.raises(InputError):
        SurveyDataset.from_records([('r1', 'a', {'sex': 'x'}, 1)], {'sex': ('m', 'f')}, 3)


def test_spec_validation():
    schemas = (('sex', ('m', 'f')), ('age', ('y', 'o')))
    with pytest.raises(InputError):
        ModelSpec(schemas=schemas, n_categories=3, cut_factors=('sex',), additive_factors=('sex',))
    with pytest.raises(InputError):
        ModelSpec(schemas=schemas, n_categories=3, additive_factors=('income',))
    with pytest.raises(InputError):
        ModelSpec(schemas=schemas, n_categories=3, alpha_constraint='sum-to-one')
    spec = ModelSpec(schemas=schemas, n_categories=3, cut_factors=('sex', 'age'))
    assert spec.n_groups == 4
    assert spec.group_labels() == ['m:y', 'm:o', 'f:y', 'f:o']
    assert ModelSpec.from_dict(spec.to_dict()) == spec
    assert spec.content_hash() == ModelSpec.from_dict(spec.to_dict()).content_hash()


@pytest.mark.parametrize('constraint, first', [('corner', 0.0), ('zero-sum', -0.5)])
def test_complete_alpha(constraint, first):
    alpha = complete_alpha([0.2, 0.3], constraint)
    assert alpha[0] == pytest.approx(first)
    if constraint == 'zero-sum':
        assert alpha.sum() == pytest.approx(0.0, abs=1e-15)


def test_partial_odds_form_gives_the_same_gamma(toy_spec, make_dataset):
    areas = ('a', 'b', 'c')
    data = make_dataset(toy_spec, areas, 150, seed=8)
    cells = compile_cells(data, toy_spec, areas)
    state = _state(toy_spec, len(areas), seed=4)
    shift = cell_shift(state, cells)
    assert np.all(shift != 0.0)
    base, effects = partial_odds_form(state.kappa)
    np.testing.assert_array_equal(effects[0], 0.0)
    assert np.any(effects[1] != effects[1, 0])
    for c in range(cells.n_cells):
        g = cells.group[c]
        gamma, _ = category_probs(state.kappa[g], shift[c])
        np.testing.assert_allclose(expit(base + effects[g] + shift[c]), gamma, atol=1e-14)


def test_unconstrained_category_effects_can_break_order():
    base = np.array([-1.0, 0.0, 1.0])
    effects = np.array([0.0, 1.5, -1.5])
    with pytest.raises(DomainError):
        category_probs(base + effects, 0.3)
