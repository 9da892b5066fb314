import numpy as np
import pytest
import scipy.sparse as sp
from scipy.stats import multivariate_normal, norm

from ordinal.errors import InputError, DomainError
from ordinal.spatial_graph import (LcarHyper, SpatialGraph, build_graph, grid_graph, lcar_precision, lcar_logdet,
                                   lcar_logdensity, lcar_sample, morans_i, subspace_eigenvalues)


def test_path_graph_structure(path3):
    assert path3.K == 3
    np.testing.assert_array_equal(path3.degrees, [1, 2, 1])
    np.testing.assert_allclose(np.sort(path3.r_eigenvalues), [0.0, 1.0, 3.0], atol=1e-12)
    assert path3.n_components == 1


def test_isolated_area():
    graph = build_graph(['a'], [])
    assert graph.K == 1
    np.testing.assert_array_equal(graph.degrees, [0])
    np.testing.assert_allclose(graph.r_eigenvalues, [0.0])


def test_unknown_area_in_edge():
    with pytest.raises(InputError, match='d'):
        build_graph(['a', 'b', 'c'], [('a', 'd')])


def test_self_loop_and_duplicates():
    with pytest.raises(InputError):
        build_graph(['a', 'b'], [('a', 'a')])
    graph = build_graph(['a', 'b'], [('a', 'b'), ('b', 'a'), ('a', 'b')])
    assert graph.n_edges == 1


def test_asymmetric_adjacency_rejected():
    adjacency = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=float))
    with pytest.raises(InputError):
        SpatialGraph(['a', 'b'], adjacency)


def test_grid_graph_counts():
    graph = grid_graph(10, 5)
    assert graph.K == 50
    assert graph.n_edges == 10 * 4 + 9 * 5
    assert graph.area_ids[0] == 'a00'
    assert graph.n_components == 1


def test_precision_path3(path3):
    q = lcar_precision(path3, LcarHyper(sigma=1.0, lam=0.5)).toarray()
    expected = np.array([[1.0, -0.5, 0.0], [-0.5, 1.5, -0.5], [0.0, -0.5, 1.0]])
    np.testing.assert_allclose(q, expected, atol=1e-12)
    assert np.linalg.det(q) == pytest.approx(1.0, abs=1e-12)
    assert lcar_logdet(path3, LcarHyper(1.0, 0.5)) == pytest.approx(0.0, abs=1e-12)


def test_precision_independence_limit(path3):
    q = lcar_precision(path3, LcarHyper(sigma=1.0, lam=0.0)).toarray()
    np.testing.assert_allclose(q, np.eye(3), atol=1e-5)


def test_logdensity_zero_vector(path3):
    hyper = LcarHyper(sigma=0.7, lam=0.3)
    expected = 0.5 * lcar_logdet(path3, hyper) - 1.5 * np.log(2 * np.pi)
    assert lcar_logdensity(np.zeros(3), path3, hyper) == pytest.approx(expected, abs=1e-12)


def test_logdensity_matches_dense_oracle(path3):
    hyper = LcarHyper(sigma=1.0, lam=0.5)
    theta = np.array([1.0, 0.0, -1.0])
    q = lcar_precision(path3, hyper).toarray()
    oracle = multivariate_normal(mean=np.zeros(3), cov=np.linalg.inv(q)).logpdf(theta)
    assert lcar_logdensity(theta, path3, hyper) == pytest.approx(oracle, abs=1e-10)


def test_logdensity_random_graph_oracle():
    rng = np.random.default_rng(3)
    graph = grid_graph(3, 4)
    hyper = LcarHyper(sigma=1.3, lam=0.8)
    theta = rng.standard_normal(graph.K)
    q = lcar_precision(graph, hyper).toarray()
    oracle = multivariate_normal(mean=np.zeros(graph.K), cov=np.linalg.inv(q)).logpdf(theta)
    assert lcar_logdensity(theta, graph, hyper) == pytest.approx(oracle, abs=1e-9)


def test_logdensity_independence_limit(path3):
    theta = np.array([0.3, -1.2, 2.0])
    value = lcar_logdensity(theta, path3, LcarHyper(sigma=1.0, lam=1e-9))
    assert value == pytest.approx(norm.logpdf(theta).sum(), abs=1e-5)


def test_logdensity_domain_errors(path3):
    with pytest.raises(DomainError):
        lcar_logdensity(np.zeros(3), path3, LcarHyper(sigma=0.0, lam=0.5))
    with pytest.raises(DomainError):
        lcar_logdensity(np.zeros(3), path3, LcarHyper(sigma=1.0, lam=1.0))


def test_hyper_check():
    with pytest.raises(DomainError):
        LcarHyper(sigma=10.5, lam=0.5).check()
    for lam in (0.0, 1.0):
        with pytest.raises(DomainError):
            LcarHyper(sigma=1.0, lam=lam).check()
    with pytest.raises(DomainError):
        lcar_sample(build_graph(['a'], []), LcarHyper(sigma=1.0, lam=0.0), np.random.default_rng(0))
    assert LcarHyper(sigma=10.0, lam=0.5).check().sigma == 10.0


def test_sample_covariance():
    graph = grid_graph(2, 2)
    hyper = LcarHyper(sigma=1.0, lam=0.6)
    rng = np.random.default_rng(0)
    draws = np.array([lcar_sample(graph, hyper, rng) for _ in range(20000)])
    cov = np.linalg.inv(lcar_precision(graph, hyper).toarray())
    np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.06)


def test_morans_i_sign():
    graph = grid_graph(6, 6)
    rows = np.repeat(np.arange(6), 6).astype(float)
    checker = np.array([(r + c) % 2 for r in range(6) for c in range(6)], dtype=float)
    assert morans_i(rows, graph) > 0.5
    assert morans_i(checker, graph) == pytest.approx(-1.0)
    assert morans_i(np.ones(graph.K), graph) == 0.0


def _random_graph(rng, K, p=0.2):
    ids = ['u{}'.format(k) for k in range(K)]
    edges = [(ids[i], ids[j]) for i in range(K) for j in range(i + 1, K) if rng.random() < p]
    return build_graph(ids, edges)


def test_random_graphs_logdet_and_cholesky():
    rng = np.random.default_rng(11)
    for _ in range(20):
        graph = _random_graph(rng, int(rng.integers(2, 31)))
        hyper = LcarHyper(sigma=float(rng.uniform(0.1, 10.0)), lam=float(rng.uniform(0.01, 0.99)))
        q = lcar_precision(graph, hyper).toarray()
        np.testing.assert_allclose(q, q.T, atol=0)
        np.linalg.cholesky(q)
        sign, dense = np.linalg.slogdet(q)
        assert sign == 1.0
        assert lcar_logdet(graph, hyper) == pytest.approx(dense, abs=1e-8)
        assert np.linalg.eigvalsh(q).min() >= (1 - hyper.lam) / hyper.sigma ** 2 - 1e-10


def test_logdensity_relabelling():
    rng = np.random.default_rng(5)
    graph = _random_graph(rng, 12, p=0.3)
    order = rng.permutation(graph.K)
    relabelled = build_graph([graph.area_ids[k] for k in order], graph.edges())
    theta = rng.standard_normal(graph.K)
    moved = np.array([theta[graph.index[a]] for a in relabelled.area_ids])
    hyper = LcarHyper(sigma=0.8, lam=0.6)
    assert lcar_logdensity(moved, relabelled, hyper) == pytest.approx(lcar_logdensity(theta, graph, hyper), abs=1e-10)


def test_subspace_eigenvalues_full_space(path3):
    np.testing.assert_allclose(np.sort(subspace_eigenvalues(path3, np.eye(3))), [0.0, 1.0, 3.0], atol=1e-12)
    assert subspace_eigenvalues(path3, np.zeros((3, 0))).shape == (0,)
    with pytest.raises(InputError):
        subspace_eigenvalues(path3, np.eye(2))


def test_logdensity_on_constraint_subspace():
    rng = np.random.default_rng(9)
    graph = grid_graph(3, 4)
    weights = rng.integers(1, 20, size=(2, graph.K)).astype(float)
    q_full, _ = np.linalg.qr(weights.T, mode='complete')
    basis = q_full[:, 2:]
    eig = subspace_eigenvalues(graph, basis)
    assert len(eig) == graph.K - 2
    theta = basis @ rng.standard_normal(graph.K - 2)
    for sigma, lam in ((0.5, 0.7), (2.0, 0.1), (0.05, 0.95)):
        hyper = LcarHyper(sigma=sigma, lam=lam)
        inner = basis.T @ lcar_precision(graph, hyper).toarray() @ basis
        oracle = multivariate_normal(mean=np.zeros(graph.K - 2), cov=np.linalg.inv(inner)).logpdf(basis.T @ theta)
        assert lcar_logdensity(theta, graph, hyper, eig) == pytest.approx(oracle, abs=1e-8)


def test_subspace_density_scales_with_free_dimension():
    graph = grid_graph(2, 3)
    basis = np.linalg.qr(np.ones((graph.K, 1)), mode='complete')[0][:, 1:]
    eig = subspace_eigenvalues(graph, basis)
    theta = np.zeros(graph.K)
    low, high = LcarHyper(sigma=0.5, lam=0.5), LcarHyper(sigma=1.0, lam=0.5)
    # at theta = 0 only the normaliser depends on sigma
    diff = lcar_logdensity(theta, graph, low, eig) - lcar_logdensity(theta, graph, high, eig)
    assert diff == pytest.approx((graph.K - 1) * np.log(2.0), abs=1e-12)
