'''
Ordered cut points through a stick-breaking construction.

omega_j ~ Beta(1, J - j) taken as successive proportions of a unit stick give
delta ~ Dirichlet(1_J); kappa_j = logit(delta_1 + ... + delta_j) is then strictly
increasing. All functions act on the last axis, so a (G, J-1) array of
stick proportions maps to (G, J) pieces and (G, J-1) cut points row by row.
'''
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError

OMEGA_EPS = 1e-9


def _check_open_unit(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] == (0,):
        raise DomainError(' [x] {} must have at least one component'.format(name))
    if not np.all((x > 0.0) & (x < 1.0)):
        raise DomainError(' [x] {} outside (0, 1): {}'.format(name, x))
    return x


def _check_increasing(kappa):
    kappa = np.asarray(kappa, dtype=np.float64)
    if not np.all(np.isfinite(kappa)):
        raise DomainError(' [x] Non-finite cut points: {}'.format(kappa))
    if np.any(np.diff(kappa, axis=-1) <= 0.0):
        raise DomainError(' [x] Cut points are not strictly increasing: {}'.format(kappa))
    return kappa


def sticks_to_delta(omega):
    omega = _check_open_unit(omega, 'omega')
    remain = np.cumprod(1.0 - omega, axis=-1)
    before = np.concatenate([np.ones(omega.shape[:-1] + (1,)), remain[..., :-1]], axis=-1)
    pieces = before * omega
    # last piece as the remainder keeps the sum at exactly 1
    last = 1.0 - pieces.sum(axis=-1, keepdims=True)
    return np.concatenate([pieces, last], axis=-1)


def delta_to_sticks(delta):
    delta = _check_open_unit(delta, 'delta')
    if not np.allclose(delta.sum(axis=-1), 1.0, rtol=0.0, atol=1e-10):
        raise DomainError(' [x] delta does not sum to 1: {}'.format(delta.sum(axis=-1)))
    head = delta[..., :-1]
    before = 1.0 - np.concatenate([np.zeros(head.shape[:-1] + (1,)), np.cumsum(head, axis=-1)[..., :-1]], axis=-1)
    return head / before


def delta_to_kappa(delta):
    delta = _check_open_unit(delta, 'delta')
    cum = np.cumsum(delta, axis=-1)[..., :-1]
    # tail mass from the right end is more accurate than 1 - cum near 1
    tail = np.cumsum(delta[..., ::-1], axis=-1)[..., ::-1][..., 1:]
    if np.any(cum >= 1.0) or np.any(tail <= 0.0):
        raise DomainError(' [x] Cumulative stick mass reaches 1 before the last category: {}'.format(cum))
    kappa = np.log(cum) - np.log(tail)
    return kappa


def kappa_to_delta(kappa):
    kappa = _check_increasing(kappa)
    gamma = expit(kappa)
    lower = np.concatenate([np.zeros(kappa.shape[:-1] + (1,)), gamma], axis=-1)
    upper = np.concatenate([gamma, np.ones(kappa.shape[:-1] + (1,))], axis=-1)
    delta = upper - lower
    # last category from the upper tail of the logistic
    delta[..., -1] = expit(-kappa[..., -1])
    return delta


def omega_to_kappa(omega):
    '''direct route used by the sampler: log(cum) - log(remaining stick)'''
    omega = np.asarray(omega, dtype=np.float64)
    log_remain = np.cumsum(np.log1p(-omega), axis=-1)
    return np.log(-np.expm1(log_remain)) - log_remain


def kappa_to_omega(kappa):
    return delta_to_sticks(kappa_to_delta(kappa))


def log_prior_omega(omega):
    '''sum_j log Beta(omega_j; 1, J - j); -inf on or outside the boundary'''
    omega = np.asarray(omega, dtype=np.float64)
    n_cut = omega.shape[-1]
    b = n_cut + 1 - np.arange(1, n_cut + 1, dtype=np.float64)
    if not np.all((omega > 0.0) & (omega < 1.0)):
        return -np.inf
    return float(np.sum(np.log(b) + (b - 1.0) * np.log1p(-omega)))


def prior_mean_omega(n_categories):
    '''E[omega_j] = 1 / (J - j + 1), the sticks of a uniform delta'''
    j = np.arange(1, n_categories, dtype=np.float64)
    return 1.0 / (n_categories - j + 1.0)


def sample_prior_omega(rng, n_categories, size=None):
    j = np.arange(1, n_categories, dtype=np.float64)
    shape = (n_categories - 1,) if size is None else tuple(np.atleast_1d(size)) + (n_categories - 1,)
    return rng.beta(np.ones_like(j), n_categories - j, size=shape)


def in_support(omega):
    return bool(np.all((omega > OMEGA_EPS) & (omega < 1.0 - OMEGA_EPS)))


@dataclass(frozen=True)
class StickState:
    omega: np.ndarray
    delta: np.ndarray
    kappa: np.ndarray

    @classmethod
    def from_omega(cls, omega):
        omega = _check_open_unit(omega, 'omega')
        return cls(omega=omega, delta=sticks_to_delta(omega), kappa=omega_to_kappa(omega))

    @classmethod
    def from_kappa(cls, kappa):
        delta = kappa_to_delta(kappa)
        return cls(omega=delta_to_sticks(delta), delta=delta, kappa=np.asarray(kappa, dtype=np.float64))
