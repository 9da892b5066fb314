'''
Convergence assessment of stored draws: Gelman-Rubin R-hat, effective sample
size by Geyer's initial positive sequence, and per-scalar posterior summaries.
'''
import re
from dataclasses import dataclass, field, asdict

import numpy as np
import pandas as pd

from .errors import InputError

QUANTILES = (0.025, 0.5, 0.975)


def _as_chains(chains):
    x = np.asarray(chains, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise InputError(' [x] Expected (chains, draws), got shape {}'.format(x.shape))
    return x


def split_chains(chains):
    '''halves of every chain as separate chains; the middle draw of an odd length is dropped'''
    x = _as_chains(chains)
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def gelman_rubin(chains, split=False):
    '''classic potential scale reduction; None when undefined (one chain, or W = 0)'''
    x = split_chains(chains) if split else _as_chains(chains)
    M, T = x.shape
    if M < 2 or T < 2:
        return None
    if np.all(np.ptp(x, axis=1) == 0):
        return None
    W = float(np.mean(np.var(x, axis=1, ddof=1)))
    if W <= 0:
        return None
    B_over_T = float(np.var(x.mean(axis=1), ddof=1))
    return float(np.sqrt(((T - 1) / T * W + B_over_T) / W))


def autocorrelation(x):
    '''normalized autocorrelation of one sequence through a zero-padded FFT'''
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    xc = x - x.mean()
    n_fft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, n=n_fft)
    acov = np.fft.irfft(f * np.conjugate(f), n=n_fft)[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def _chain_ess(x):
    n = len(x)
    if np.ptp(x) == 0:
        return float(n), True
    rho = autocorrelation(x)
    tau = -1.0
    for m in range(n // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    if tau <= 0:
        return float(n), False
    return float(min(n / tau, n)), False


def effective_sample_size(draws, return_flag=False):
    '''
    Sum over chains of per-chain ESS, each capped at its length.
    A constant input yields the total draw count with the degeneracy flag set.
    '''
    x = _as_chains(draws)
    if x.size < 10:
        raise InputError(' [x] ESS needs at least 10 draws, got {}'.format(x.size))
    results = [_chain_ess(row) for row in x]
    ess = float(sum(r[0] for r in results))
    degenerate = bool(np.ptp(x) == 0)
    if degenerate:
        ess = float(x.size)
    return (ess, degenerate) if return_flag else ess


def pattern_regex(pattern):
    '''monitor glob: * and ? are wildcards, brackets match literally'''
    body = re.escape(pattern).replace(r'\*', '.*').replace(r'\?', '.')
    return re.compile('^' + body + '$')


def match_monitors(names, patterns):
    regexes = [(p, pattern_regex(p)) for p in patterns]
    selected = [n for n in names if any(r.match(n) for _, r in regexes)]
    unmatched = [p for p, r in regexes if not any(r.match(n) for n in names)]
    return selected, unmatched


@dataclass
class SummaryRow:
    name: str
    mean: float
    sd: float
    q2_5: float
    q50: float
    q97_5: float
    rhat: float = None
    ess: float = None
    ess_degenerate: bool = False


@dataclass
class ConvergenceReport:
    rows: list
    n_chains: int
    n_draws: int
    split_rhat: bool = False
    unmatched: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def row(self, name):
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_frame(self):
        columns = ['name', 'mean', 'sd', 'q2_5', 'q50', 'q97_5', 'rhat', 'ess', 'ess_degenerate']
        frame = pd.DataFrame([asdict(r) for r in self.rows], columns=columns)
        frame['rhat'] = frame['rhat'].astype(np.float64)
        return frame.rename(columns={'q2_5': 'q2.5', 'q97_5': 'q97.5'})

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.10g', na_rep='')


def summarize_scalar(name, chains, split=False):
    x = _as_chains(chains)
    pooled = x.ravel()
    q = np.quantile(pooled, QUANTILES, method='linear')
    ess, degenerate = effective_sample_size(x, return_flag=True) if pooled.size >= 10 else (None, False)
    return SummaryRow(
        name=name,
        mean=float(pooled.mean()),
        sd=float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0,
        q2_5=float(q[0]), q50=float(q[1]), q97_5=float(q[2]),
        rhat=gelman_rubin(x, split=split),
        ess=ess,
        ess_degenerate=degenerate)


def summarize(draws, monitors=('*',), split_rhat=False):
    '''draws: anything with scalars() -> {name: (chains, draws) array}'''
    scalars = draws.scalars()
    if not scalars or next(iter(scalars.values())).size == 0:
        raise InputError(' [x] No stored draws to summarize')
    names, unmatched = match_monitors(list(scalars), list(monitors))
    warnings = []
    if unmatched:
        msg = 'Monitor pattern(s) matched nothing: ' + ', '.join(unmatched)
        warnings.append(msg)
        print(' [WARNING] ' + msg)
    rows = [summarize_scalar(n, scalars[n], split=split_rhat) for n in names]
    first = next(iter(scalars.values()))
    return ConvergenceReport(rows=rows, n_chains=first.shape[0], n_draws=first.shape[1], split_rhat=split_rhat,
                             unmatched=unmatched, warnings=warnings)


def check_convergence(report, rhat_max=1.10, ess_min=100.0):
    messages = []
    bad_rhat = [r for r in report.rows if r.rhat is not None and r.rhat > rhat_max]
    bad_ess = [r for r in report.rows if r.ess is not None and r.ess < ess_min]
    if bad_rhat:
        messages.append('R-hat above {:.2f} for {} parameter(s): {}'.format(
            rhat_max, len(bad_rhat), ', '.join('{}={:.3f}'.format(r.name, r.rhat) for r in bad_rhat[:10])))
    if bad_ess:
        messages.append('ESS below {:g} for {} parameter(s): {}'.format(
            ess_min, len(bad_ess), ', '.join('{}={:.1f}'.format(r.name, r.ess) for r in bad_ess[:10])))
    return messages
