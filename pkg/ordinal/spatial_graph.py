import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InputError, DomainError

LAMBDA_EPS = 1e-6
SIGMA_MAX = 10.0
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class LcarHyper:
    sigma: float
    lam: float

    def check(self, sigma_max=SIGMA_MAX):
        if not (np.isfinite(self.sigma) and np.isfinite(self.lam)):
            raise DomainError(' [x] Non-finite LCAR hyperparameters: sigma={}, lambda={}'.format(self.sigma, self.lam))
        if self.sigma <= 0 or self.sigma > sigma_max:
            raise DomainError(' [x] sigma must lie in (0, {}]: {}'.format(sigma_max, self.sigma))
        if self.lam <= 0 or self.lam >= 1:
            raise DomainError(' [x] lambda must lie in (0, 1): {}'.format(self.lam))
        return self

    @property
    def clamped_lam(self):
        return min(max(self.lam, LAMBDA_EPS), 1.0 - LAMBDA_EPS)


class SpatialGraph:
    '''
    Areas with a symmetric 0/1 contiguity relation W.
    Eigenvalues of R = D - W are computed once so that log det of the
    Leroux precision costs O(K) for any (sigma, lambda).
    '''

    def __init__(self, area_ids, adjacency):
        self.area_ids = tuple(str(a) for a in area_ids)
        self.index = {a: k for k, a in enumerate(self.area_ids)}
        if len(self.index) != len(self.area_ids):
            raise InputError(' [x] Duplicate area ids in graph')

        adjacency = sp.csr_matrix(adjacency, dtype=np.float64)
        adjacency.eliminate_zeros()
        if adjacency.shape != (self.K, self.K):
            raise InputError(' [x] Adjacency shape {} does not match {} areas'.format(adjacency.shape, self.K))
        if (abs(adjacency - adjacency.T) > 0).nnz:
            raise InputError(' [x] Adjacency matrix is not symmetric')
        if adjacency.diagonal().any():
            raise InputError(' [x] Adjacency matrix has self-loops')
        self.adjacency = adjacency

        self.degrees = np.asarray(adjacency.sum(axis=1)).ravel().astype(np.int64)
        self.structure = (sp.diags(self.degrees.astype(np.float64)) - adjacency).tocsr()
        self.n_components, self.component_labels = connected_components(adjacency, directed=False)

        # R is psd; clip roundoff below zero
        if self.K:
            eig = np.linalg.eigvalsh(self.structure.toarray())
            self.r_eigenvalues = np.clip(eig, 0.0, None)
        else:
            self.r_eigenvalues = np.zeros(0)

        upper = sp.triu(adjacency, k=1).tocoo()
        self.edge_i = upper.row.astype(np.int64)
        self.edge_j = upper.col.astype(np.int64)

    @property
    def K(self):
        return len(self.area_ids)

    @property
    def n_edges(self):
        return len(self.edge_i)

    def edges(self):
        return [(self.area_ids[i], self.area_ids[j]) for i, j in zip(self.edge_i, self.edge_j)]

    def content_hash(self):
        sha = hashlib.sha256()
        sha.update('\n'.join(self.area_ids).encode('utf-8'))
        sha.update(np.ascontiguousarray(self.edge_i).tobytes())
        sha.update(np.ascontiguousarray(self.edge_j).tobytes())
        return sha.hexdigest()

    def quadratic_structure(self, theta):
        '''theta' R theta as the sum of squared differences over edges'''
        diff = theta[self.edge_i] - theta[self.edge_j]
        return float(diff @ diff)


def build_graph(areas, edges):
    areas = [str(a) for a in areas]
    index = {}
    for a in areas:
        if a in index:
            raise InputError(' [x] Duplicate area id: ' + a)
        index[a] = len(index)

    pairs = set()
    for a, b in edges:
        a, b = str(a), str(b)
        for node in (a, b):
            if node not in index:
                raise InputError(' [x] Edge references unknown area id: ' + node)
        if a == b:
            raise InputError(' [x] Self-loop edge on area: ' + a)
        i, j = index[a], index[b]
        pairs.add((min(i, j), max(i, j)))

    K = len(areas)
    if pairs:
        rows, cols = zip(*sorted(pairs))
        rows, cols = np.array(rows), np.array(cols)
        data = np.ones(2 * len(rows))
        adjacency = sp.csr_matrix(
            (data, (np.concatenate([rows, cols]), np.concatenate([cols, rows]))), shape=(K, K))
    else:
        adjacency = sp.csr_matrix((K, K))
    return SpatialGraph(areas, adjacency)


def grid_graph(n_rows, n_cols, prefix='a'):
    '''rook contiguity on a regular lattice, row-major ids'''
    if n_rows < 1 or n_cols < 1:
        raise InputError(' [x] Grid needs at least one row and one column')
    width = len(str(n_rows * n_cols - 1))
    ids = ['{}{:0{}d}'.format(prefix, k, width) for k in range(n_rows * n_cols)]
    edges = []
    for r in range(n_rows):
        for c in range(n_cols):
            k = r * n_cols + c
            if c + 1 < n_cols:
                edges.append((ids[k], ids[k + 1]))
            if r + 1 < n_rows:
                edges.append((ids[k], ids[k + n_cols]))
    return build_graph(ids, edges)


def lcar_precision(graph, hyper):
    '''Q = sigma^-2 (lambda R + (1 - lambda) I)'''
    lam = hyper.clamped_lam
    q = lam * graph.structure + (1.0 - lam) * sp.identity(graph.K, format='csr')
    return (q / hyper.sigma ** 2).tocsr()


def lcar_logdet(graph, hyper, eigenvalues=None):
    '''
    log det of the Leroux precision from cached eigenvalues of R.
    eigenvalues of B'RB, for an orthonormal basis B of a subspace,
    give the log det of the precision restricted to that subspace.
    '''
    lam = hyper.clamped_lam
    eig = graph.r_eigenvalues if eigenvalues is None else np.asarray(eigenvalues, dtype=np.float64)
    return float(-2.0 * len(eig) * np.log(hyper.sigma) + np.sum(np.log(lam * eig + 1.0 - lam)))


def subspace_eigenvalues(graph, basis):
    '''eigenvalues of B'RB for an orthonormal K x m basis B'''
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] != graph.K:
        raise InputError(' [x] Subspace basis has shape {}, expected ({}, m)'.format(basis.shape, graph.K))
    if basis.shape[1] == 0:
        return np.zeros(0)
    inner = basis.T @ (graph.structure @ basis)
    return np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.T)), 0.0, None)


def lcar_logdensity(theta, graph, hyper, eigenvalues=None):
    '''
    log N(theta; 0, Q^-1). With eigenvalues from subspace_eigenvalues, theta
    must lie in that subspace and the Gaussian restricted to it is evaluated.
    '''
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (graph.K,):
        raise InputError(' [x] theta has shape {}, expected ({},)'.format(theta.shape, graph.K))
    if hyper.sigma <= 0 or hyper.lam >= 1:
        raise DomainError(' [x] LCAR density needs sigma > 0 and lambda < 1: sigma={}, lambda={}'.format(
            hyper.sigma, hyper.lam))
    dim = graph.K if eigenvalues is None else len(eigenvalues)
    lam = hyper.clamped_lam
    quad = (lam * graph.quadratic_structure(theta) + (1.0 - lam) * float(theta @ theta)) / hyper.sigma ** 2
    return 0.5 * lcar_logdet(graph, hyper, eigenvalues) - 0.5 * dim * LOG_2PI - 0.5 * quad


def lcar_sample(graph, hyper, rng):
    '''exact draw theta ~ N(0, Q^-1) through the dense eigen-decomposition of R'''
    hyper.check()
    lam = hyper.clamped_lam
    eigval, eigvec = np.linalg.eigh(graph.structure.toarray())
    eigval = np.clip(eigval, 0.0, None)
    z = rng.standard_normal(graph.K)
    return hyper.sigma * eigvec @ (z / np.sqrt(lam * eigval + 1.0 - lam))


def morans_i(values, graph):
    values = np.asarray(values, dtype=np.float64)
    z = values - values.mean()
    s0 = 2.0 * graph.n_edges
    denom = float(z @ z)
    if s0 == 0 or denom == 0:
        return 0.0
    cross = 2.0 * float(np.sum(z[graph.edge_i] * z[graph.edge_j]))
    return graph.K / s0 * cross / denom
