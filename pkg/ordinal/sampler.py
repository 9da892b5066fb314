'''
Adaptive Metropolis-within-Gibbs over (omega blocks, alpha blocks, theta, sigma, lambda).

Each sweep updates every block once in a fixed order with a Gaussian random walk.
theta proposals are projected onto {theta : A theta = 0} before evaluation, so
the chain never leaves the constraint subspace. Proposal scales follow a
Robbins-Monro recursion during burn-in and are frozen afterwards.
'''
import os
import concurrent.futures
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.linalg
from tqdm import tqdm

from .cutpoints import log_prior_omega, in_support, omega_to_kappa
from .diagnostics import summarize, check_convergence
from .errors import InputError, EvaluationError
from .model import ParameterState, compile_cells, complete_alpha, cell_shift, cell_loglik_kernel
from .spatial_graph import LcarHyper, lcar_logdensity, subspace_eigenvalues, LAMBDA_EPS

RANK_TOL = 1e-10
ADAPT_GAIN = 2.0
INITIAL_SCALES = {'omega': 0.05, 'alpha': 0.05, 'theta': 0.05, 'sigma': 0.1, 'lambda': 0.1}


@dataclass
class McmcConfig:
    chains: int = 5
    iterations: int = 6000
    burnin: int = 1000
    thin: int = 25
    seed: int = 0
    adapt_window: int = 50
    target_accept_scalar: float = 0.44
    target_accept_vector: float = 0.234
    sigma_max: float = 10.0
    workers: int = None
    progress: bool = True

    def __post_init__(self):
        if self.chains < 1:
            raise InputError(' [x] chains must be >= 1, got {}'.format(self.chains))
        if self.burnin < 0 or self.burnin >= self.iterations:
            raise InputError(' [x] burnin must satisfy 0 <= burnin < iterations ({} vs {})'.format(
                self.burnin, self.iterations))
        if self.thin < 1:
            raise InputError(' [x] thin must be >= 1, got {}'.format(self.thin))
        if self.n_stored < 1:
            raise InputError(' [x] (iterations - burnin) / thin must be >= 1')
        if self.adapt_window < 1:
            raise InputError(' [x] adapt_window must be >= 1')
        if not 0 < self.sigma_max:
            raise InputError(' [x] sigma_max must be positive')

    @property
    def n_stored(self):
        return (self.iterations - self.burnin) // self.thin

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InputError(' [x] Unknown mcmc option(s): ' + ', '.join(unknown))
        return cls(**dict(d))

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


class ConstraintSet:
    '''
    Weighted zero-sum constraints A theta = 0, A[h, k] = n_hk.
    Redundant rows are dropped. basis spans the row space of the remaining
    rows and null_basis its orthogonal complement, where theta lives.
    '''

    def __init__(self, weights, row_names=None):
        self.weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        n_rows, n_areas = self.weights.shape
        self.row_names = list(row_names) if row_names is not None else ['row{}'.format(i) for i in range(n_rows)]
        self.warnings = []

        nonzero = np.flatnonzero(np.any(self.weights != 0.0, axis=1))
        kept = nonzero
        if len(nonzero):
            _, r, piv = scipy.linalg.qr(self.weights[nonzero].T, mode='economic', pivoting=True)
            diag = np.abs(np.diag(r))
            rank = int(np.sum(diag > RANK_TOL * diag[0])) if len(diag) and diag[0] > 0 else 0
            kept = np.sort(nonzero[piv[:rank]])
            dropped = sorted(set(nonzero.tolist()) - set(kept.tolist()))
            if dropped:
                msg = 'Dropping {} redundant constraint row(s): {}'.format(
                    len(dropped), ', '.join(self.row_names[i] for i in dropped))
                self.warnings.append(msg)
                print(' [WARNING] ' + msg)
        self.active_rows = kept
        if len(kept):
            q, _ = np.linalg.qr(self.weights[kept].T, mode='complete')
            self.basis, self.null_basis = q[:, :len(kept)], q[:, len(kept):]
        else:
            self.basis, self.null_basis = np.zeros((n_areas, 0)), np.eye(n_areas)

    @property
    def n_active(self):
        return self.basis.shape[1]

    @property
    def n_free(self):
        return self.null_basis.shape[1]

    def project(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if self.n_active == 0:
            return theta.copy()
        out = theta - self.basis @ (self.basis.T @ theta)
        # second pass removes the roundoff left by the first
        return out - self.basis @ (self.basis.T @ out)

    def residual(self, theta):
        if not len(self.weights):
            return 0.0
        return float(np.max(np.abs(self.weights @ theta)))


def project_constraints(theta, cons):
    return cons.project(theta)


def build_constraints(cells, spec, n_areas):
    '''one row per level of every additive factor; a single n_k row without additive factors'''
    rows, names = [], []
    for f, (name, size) in enumerate(zip(spec.additive_factors, spec.additive_sizes)):
        rows.append(cells.weights(n_areas, f, size))
        names += ['{}={}'.format(name, lv) for lv in spec.levels(name)]
    if not rows:
        rows.append(cells.area_totals(n_areas)[None, :])
        names.append('total')
    return ConstraintSet(np.vstack(rows), names)


def init_state(spec, graph, seed=None):
    '''deterministic start: prior-mean sticks, zero effects, sigma 0.1, lambda 0.5'''
    return ParameterState.initial(spec, graph.K, sigma=0.1, lam=0.5)


@dataclass
class ChainState:
    '''parameters plus the cached pieces of the log-posterior they imply'''
    params: ParameterState
    kappa: np.ndarray
    shift: np.ndarray
    cell_ll: np.ndarray
    omega_lp: np.ndarray
    lcar_lp: float

    @property
    def loglik(self):
        return float(np.sum(self.cell_ll))

    @property
    def logpost(self):
        return self.loglik + float(np.sum(self.omega_lp)) + self.lcar_lp


class LogPosterior:
    def __init__(self, cells, spec, graph, cons, sigma_max=10.0):
        self.cells = cells
        self.spec = spec
        self.graph = graph
        self.cons = cons
        self.sigma_max = sigma_max
        self.group_idx = [cells.group_cells(g) for g in range(spec.n_groups)]
        self.group_zeros = [np.zeros(len(idx), dtype=np.int64) for idx in self.group_idx]
        # theta lives on the null space of the constraints
        self.lcar_eigenvalues = subspace_eigenvalues(graph, cons.null_basis) if spec.include_spatial else None

        blocks = [('omega', g) for g in range(spec.n_groups)]
        blocks += [('alpha', f) for f in range(len(spec.additive_factors))]
        if spec.include_spatial:
            blocks += [('theta', None), ('sigma', None), ('lambda', None)]
        self.blocks = blocks

    def block_name(self, block):
        kind, i = block
        return kind if i is None else '{}[{}]'.format(kind, i)

    def block_dim(self, block):
        kind, i = block
        if kind == 'omega':
            return self.spec.n_categories - 1
        if kind == 'alpha':
            return self.spec.additive_sizes[i] - 1
        if kind == 'theta':
            return max(self.cons.n_free, 1)
        return 1

    def lcar(self, params):
        if not self.spec.include_spatial:
            return 0.0
        return lcar_logdensity(params.theta, self.graph, LcarHyper(params.sigma, params.lam), self.lcar_eigenvalues)

    def cell_ll(self, kappa, shift):
        return cell_loglik_kernel(kappa, self.cells.group, shift, self.cells.counts)

    def evaluate(self, params):
        kappa = np.ascontiguousarray(params.kappa)
        shift = cell_shift(params, self.cells)
        omega_lp = np.array([log_prior_omega(row) for row in params.omega])
        return ChainState(
            params=params,
            kappa=kappa,
            shift=shift,
            cell_ll=self.cell_ll(kappa, shift),
            omega_lp=omega_lp,
            lcar_lp=self.lcar(params))


def _accept(rng, diff):
    if not np.isfinite(diff):
        return bool(diff > 0)
    return bool(np.log(rng.random()) < diff)


def step_block(state, block, target, rng, scale):
    '''one random-walk Metropolis update of a block; returns (state', accepted)'''
    if scale == 0:
        return state, True
    kind, i = block
    params = state.params
    cells = target.cells

    if kind == 'omega':
        proposal = params.omega[i] + scale * rng.standard_normal(params.omega.shape[1])
        if not in_support(proposal):
            return state, False
        new_lp = log_prior_omega(proposal)
        idx = target.group_idx[i]
        kappa_row = np.ascontiguousarray(omega_to_kappa(proposal))
        new_ll = cell_loglik_kernel(kappa_row[None, :], target.group_zeros[i], state.shift[idx], cells.counts[idx])
        diff = (np.sum(new_ll) - np.sum(state.cell_ll[idx])) + (new_lp - state.omega_lp[i])
        if not _accept(rng, diff):
            return state, False
        new_params = params.copy()
        new_params.omega[i] = proposal
        kappa = state.kappa.copy()
        kappa[i] = kappa_row
        cell_ll = state.cell_ll.copy()
        cell_ll[idx] = new_ll
        omega_lp = state.omega_lp.copy()
        omega_lp[i] = new_lp
        return ChainState(new_params, kappa, state.shift, cell_ll, omega_lp, state.lcar_lp), True

    if kind == 'alpha':
        free = params.alpha[i][1:] + scale * rng.standard_normal(len(params.alpha[i]) - 1)
        new_params = params.copy()
        new_params.alpha[i] = complete_alpha(free, target.spec.alpha_constraint)
        shift = cell_shift(new_params, cells)
        new_ll = target.cell_ll(state.kappa, shift)
        diff = np.sum(new_ll) - np.sum(state.cell_ll)
        if not _accept(rng, diff):
            return state, False
        return ChainState(new_params, state.kappa, shift, new_ll, state.omega_lp, state.lcar_lp), True

    if kind == 'theta':
        new_params = params.copy()
        new_params.theta = target.cons.project(params.theta + scale * rng.standard_normal(len(params.theta)))
        shift = cell_shift(new_params, cells)
        new_ll = target.cell_ll(state.kappa, shift)
        new_lcar = target.lcar(new_params)
        diff = (np.sum(new_ll) - np.sum(state.cell_ll)) + (new_lcar - state.lcar_lp)
        if not _accept(rng, diff):
            return state, False
        return ChainState(new_params, state.kappa, shift, new_ll, state.omega_lp, new_lcar), True

    if kind in ('sigma', 'lambda'):
        new_params = params.copy()
        if kind == 'sigma':
            new_params.sigma = params.sigma + scale * rng.standard_normal()
            if not 0.0 < new_params.sigma <= target.sigma_max:
                return state, False
        else:
            new_params.lam = params.lam + scale * rng.standard_normal()
            if not LAMBDA_EPS < new_params.lam < 1.0 - LAMBDA_EPS:
                return state, False
        new_lcar = target.lcar(new_params)
        if not _accept(rng, new_lcar - state.lcar_lp):
            return state, False
        return ChainState(new_params, state.kappa, state.shift, state.cell_ll, state.omega_lp, new_lcar), True

    raise InputError(' [x] Unknown block: {}'.format(block))


def chain_rng(seed, chain_index):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(chain_index),)))


@dataclass
class ChainDraws:
    iters: np.ndarray
    kappa: np.ndarray
    alpha: list
    theta: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray
    loglik: np.ndarray
    acceptance: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)

    @property
    def n_stored(self):
        return len(self.iters)


def run_chain(target, config, chain_index):
    spec, graph = target.spec, target.graph
    rng = chain_rng(config.seed, chain_index)
    state = target.evaluate(init_state(spec, graph, config.seed))
    if not np.isfinite(state.logpost):
        raise EvaluationError(' [x] Log-posterior is not finite at the initial state (chain {})'.format(chain_index))

    blocks = target.blocks
    names = [target.block_name(b) for b in blocks]
    log_scales = np.log([INITIAL_SCALES[b[0]] for b in blocks])
    targets = np.array([config.target_accept_scalar if target.block_dim(b) == 1 else config.target_accept_vector
                        for b in blocks])
    window_acc = np.zeros(len(blocks))
    post_acc = np.zeros(len(blocks))
    n_windows = 0

    S = config.n_stored
    G, J = spec.n_groups, spec.n_categories
    out = ChainDraws(
        iters=np.zeros(S, dtype=np.int64),
        kappa=np.zeros((S, G, J - 1)),
        alpha=[np.zeros((S, h)) for h in spec.additive_sizes],
        theta=np.zeros((S, graph.K)),
        sigma=np.zeros(S),
        lam=np.zeros(S),
        loglik=np.zeros(S))

    s = 0
    bar = tqdm(range(1, config.iterations + 1), desc='chain {}'.format(chain_index), position=chain_index,
               disable=not config.progress, leave=False)
    for it in bar:
        scales = np.exp(log_scales)
        for b, block in enumerate(blocks):
            state, accepted = step_block(state, block, target, rng, scales[b])
            if it <= config.burnin:
                window_acc[b] += accepted
            else:
                post_acc[b] += accepted

        # adapt during burn-in only
        if it <= config.burnin and it % config.adapt_window == 0:
            n_windows += 1
            rates = window_acc / config.adapt_window
            log_scales += ADAPT_GAIN / np.sqrt(n_windows) * (rates - targets)
            window_acc[:] = 0.0

        if it > config.burnin and (it - config.burnin) % config.thin == 0:
            p = state.params
            out.iters[s] = it
            out.kappa[s] = state.kappa
            for f, a in enumerate(p.alpha):
                out.alpha[f][s] = a
            out.theta[s] = p.theta
            out.sigma[s] = p.sigma
            out.lam[s] = p.lam
            out.loglik[s] = state.loglik
            s += 1
    bar.close()

    n_post = config.iterations - config.burnin
    out.acceptance = {name: float(a / n_post) for name, a in zip(names, post_acc)}
    out.scales = {name: float(v) for name, v in zip(names, np.exp(log_scales))}
    return out


@dataclass
class PosteriorDraws:
    chains: list
    spec: object
    config: McmcConfig
    area_ids: tuple
    category_labels: tuple = None
    graph_hash: str = ''
    input_hashes: dict = field(default_factory=dict)
    report: object = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.category_labels is None:
            self.category_labels = tuple(str(j) for j in range(1, self.spec.n_categories + 1))

    @property
    def n_chains(self):
        return len(self.chains)

    @property
    def n_total(self):
        return sum(c.n_stored for c in self.chains)

    def column_names(self):
        names = []
        for g in self.spec.group_labels():
            names += ['kappa[{}][{}]'.format(g, j) for j in range(1, self.spec.n_categories)]
        for f in self.spec.additive_factors:
            names += ['alpha[{}][{}]'.format(f, lv) for lv in self.spec.levels(f)]
        if self.spec.include_spatial:
            names += ['theta[{}]'.format(a) for a in self.area_ids]
            names += ['sigma', 'lambda']
        return names

    def chain_matrix(self, c):
        '''(stored draws, columns) in column_names order'''
        ch = self.chains[c]
        parts = [ch.kappa.reshape(ch.n_stored, -1)] + list(ch.alpha)
        if self.spec.include_spatial:
            parts += [ch.theta, ch.sigma[:, None], ch.lam[:, None]]
        return np.hstack(parts)

    def scalars(self):
        '''name -> (chains, draws) array of every monitored scalar'''
        stack = np.stack([self.chain_matrix(c) for c in range(self.n_chains)])
        return {name: stack[:, :, i] for i, name in enumerate(self.column_names())}

    def stacked(self, attr):
        values = [getattr(c, attr) for c in self.chains]
        if attr == 'alpha':
            return [np.concatenate([v[f] for v in values]) for f in range(len(self.spec.additive_factors))]
        return np.concatenate(values)


def _run_chain_job(args):
    target, config, chain_index = args
    return run_chain(target, config, chain_index)


def run(dataset, spec, graph, config, monitors=('*',), split_rhat=False, rhat_max=1.10, ess_min=100.0,
        saver=None, category_labels=None, input_hashes=None):
    dataset.validate(known_areas=graph.area_ids)
    cells = compile_cells(dataset, spec, graph.area_ids)
    cons = build_constraints(cells, spec, graph.K)
    target = LogPosterior(cells, spec, graph, cons, sigma_max=config.sigma_max)
    log = saver.log_info if saver is not None else print

    log(' [*] cells: {:,} | respondents: {:,} | areas: {} | components: {} | blocks: {}'.format(
        cells.n_cells, cells.n, graph.K, graph.n_components, len(target.blocks)))

    workers = config.workers if config.workers is not None else min(config.chains, os.cpu_count() or 1)
    jobs = [(target, config, c) for c in range(config.chains)]
    if workers > 1 and config.chains > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, config.chains)) as executor:
            chains = list(executor.map(_run_chain_job, jobs))
    else:
        chains = [_run_chain_job(job) for job in jobs]

    draws = PosteriorDraws(
        chains=chains, spec=spec, config=config, area_ids=graph.area_ids,
        category_labels=tuple(category_labels) if category_labels is not None else None,
        graph_hash=graph.content_hash(), input_hashes=dict(input_hashes or {}))
    draws.warnings += cons.warnings

    for c, ch in enumerate(chains):
        log(' [*] chain {} | acceptance: {}'.format(
            c, ', '.join('{}={:.2f}'.format(k, v) for k, v in ch.acceptance.items())))
        if saver is not None:
            saver.log_trace('chain{}/loglik'.format(c), ch.loglik, ch.iters)
            if spec.include_spatial:
                saver.log_trace('chain{}/sigma'.format(c), ch.sigma, ch.iters)
                saver.log_trace('chain{}/lambda'.format(c), ch.lam, ch.iters)
            saver.log_value({'acceptance/chain{}/{}'.format(c, k): v for k, v in ch.acceptance.items()},
                            step=config.iterations)

    draws.report = summarize(draws, monitors, split_rhat=split_rhat)
    draws.warnings += draws.report.warnings
    for msg in check_convergence(draws.report, rhat_max=rhat_max, ess_min=ess_min):
        draws.warnings.append(msg)
        if saver is not None:
            saver.log_warning(msg)
        else:
            print(' [WARNING] ' + msg)
    return draws
