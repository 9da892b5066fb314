import os
import re

import numpy as np
import pandas as pd
import yaml

from logger.utils import to_plain
from .errors import InputError
from .model import SurveyDataset, ModelSpec
from .poststrat import PopulationTable
from .sampler import ChainDraws, PosteriorDraws, McmcConfig
from .spatial_graph import build_graph

__version__ = '1.0.0'

FLOAT_FORMAT = '%.17g'
RESPONDENT_COLUMN = 'respondent_id'
AREA_COLUMN = 'area'
COUNT_COLUMN = 'count'


def traverse_dir(
        root_dir,
        extensions,
        str_include=None,
        is_pure=False,
        is_sort=False):
    file_list = []
    for root, _, files in os.walk(root_dir):
        for file in files:
            if any([file.endswith(f".{ext}") for ext in extensions]):
                mix_path = os.path.join(root, file)
                pure_path = mix_path[len(root_dir) + 1:] if is_pure else mix_path
                if (str_include is not None) and (str_include not in pure_path):
                    continue
                file_list.append(pure_path)
    if is_sort:
        file_list.sort()
    return file_list


def _read_table(path, what):
    if not os.path.isfile(path):
        raise InputError(' [x] {} file not found: {}'.format(what, path))
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, comment='#')
    except pd.errors.ParserError as e:
        raise InputError(' [x] Cannot parse {} file {}: {}'.format(what, path, e))
    except pd.errors.EmptyDataError:
        raise InputError(' [x] {} file is empty: {}'.format(what, path))


def _require_columns(frame, columns, what, path):
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputError(' [x] {} file {} lacks column(s): {}'.format(what, path, ', '.join(missing)))


def _encode_levels(values, name, levels, what):
    codes = pd.Categorical(values, categories=list(levels)).codes.astype(np.int64)
    if np.any(codes < 0):
        bad = sorted(set(np.asarray(values)[codes < 0].tolist()))
        raise InputError(' [x] Unknown level(s) of factor "{}" in {}: {}'.format(name, what, ', '.join(bad)))
    return codes


def read_survey(path, schemas, n_categories, outcome='outcome'):
    '''respondent_id, area, one column per declared factor, outcome in 1..J'''
    frame = _read_table(path, 'Survey')
    _require_columns(frame, [RESPONDENT_COLUMN, AREA_COLUMN, outcome] + list(schemas), 'Survey', path)
    text = frame[outcome].str.strip()
    bad = ~text.str.fullmatch(r'[0-9]+')
    if bad.any():
        row = int(np.argmax(bad.to_numpy()))
        raise InputError(' [x] Outcome of respondent {} is not an integer category: "{}"'.format(
            frame[RESPONDENT_COLUMN].iloc[row], frame[outcome].iloc[row]))
    factors = {name: _encode_levels(frame[name].str.strip().to_numpy(), name, levels, 'survey')
               for name, levels in schemas.items()}
    data = SurveyDataset(
        respondent_ids=frame[RESPONDENT_COLUMN].to_numpy(),
        area_ids=frame[AREA_COLUMN].str.strip().to_numpy(),
        factors=factors,
        outcome=text.astype(np.int64).to_numpy(),
        n_categories=n_categories,
        schemas=schemas)
    return data.validate()


def write_survey(data, path, outcome='outcome'):
    frame = pd.DataFrame({RESPONDENT_COLUMN: data.respondent_ids, AREA_COLUMN: data.area_ids})
    for name, levels in data.schemas.items():
        frame[name] = np.asarray(levels, dtype=object)[data.factors[name]]
    frame[outcome] = data.outcome
    frame.to_csv(path, index=False)


def read_population(path, schemas):
    '''area, any subset of the declared factors, count'''
    frame = _read_table(path, 'Population')
    _require_columns(frame, [AREA_COLUMN, COUNT_COLUMN], 'Population', path)
    try:
        counts = frame[COUNT_COLUMN].astype(np.float64).to_numpy()
    except ValueError as e:
        raise InputError(' [x] Non-numeric population count in {}: {}'.format(path, e))
    factors = {name: _encode_levels(frame[name].str.strip().to_numpy(), name, levels, 'population')
               for name, levels in schemas.items() if name in frame.columns}
    return PopulationTable(
        area_ids=frame[AREA_COLUMN].str.strip().to_numpy(),
        factors=factors,
        counts=counts,
        schemas={name: schemas[name] for name in factors})


def write_population(pop, path):
    frame = pd.DataFrame({AREA_COLUMN: pop.area_ids})
    for name, codes in pop.factors.items():
        frame[name] = np.asarray(pop.schemas[name], dtype=object)[codes]
    frame[COUNT_COLUMN] = pop.counts.astype(np.int64) if np.all(pop.counts == np.round(pop.counts)) else pop.counts
    frame.to_csv(path, index=False)


def read_adjacency(path, extra_areas=()):
    '''
    One edge per line as two area ids separated by whitespace or a comma.
    A line holding a single id declares an isolated area. '#' starts a comment.
    '''
    if not os.path.isfile(path):
        raise InputError(' [x] Adjacency file not found: ' + path)
    areas, seen, edges = [], set(), []

    def declare(a):
        if a not in seen:
            seen.add(a)
            areas.append(a)

    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, 1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            tokens = [t for t in re.split(r'[\s,]+', line) if t]
            if len(tokens) == 1:
                declare(tokens[0])
            elif len(tokens) == 2:
                declare(tokens[0])
                declare(tokens[1])
                edges.append((tokens[0], tokens[1]))
            else:
                raise InputError(' [x] {}:{}: expected one or two area ids, got {}'.format(path, lineno, len(tokens)))
    for a in extra_areas:
        declare(str(a))
    return build_graph(sorted(areas), edges)


def write_adjacency(graph, path):
    linked = set()
    lines = ['# area adjacency: one edge per line']
    for a, b in graph.edges():
        lines.append('{} {}'.format(a, b))
        linked.update((a, b))
    lines += [a for a in graph.area_ids if a not in linked]
    with open(path, 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + '\n')


def chain_frame(draws, c):
    ch = draws.chains[c]
    frame = pd.DataFrame(draws.chain_matrix(c), columns=draws.column_names())
    frame.insert(0, 'iter', ch.iters)
    frame['loglik'] = ch.loglik
    return frame


def build_manifest(draws, run_config=None):
    return to_plain({
        'version': __version__,
        'config': run_config or {},
        'mcmc': draws.config.to_dict(),
        'spec': draws.spec.to_dict(),
        'spec_hash': draws.spec.content_hash(),
        'graph_hash': draws.graph_hash,
        'input_hashes': draws.input_hashes,
        'area_ids': list(draws.area_ids),
        'category_labels': list(draws.category_labels),
        'chains': [{'file': 'chain_{}.csv'.format(c), 'stored': int(ch.n_stored),
                    'acceptance': ch.acceptance, 'scales': ch.scales}
                   for c, ch in enumerate(draws.chains)],
        'warnings': list(draws.warnings),
    })


def save_draws(draws, out_dir, run_config=None):
    os.makedirs(out_dir, exist_ok=True)
    for c in range(draws.n_chains):
        chain_frame(draws, c).to_csv(os.path.join(out_dir, 'chain_{}.csv'.format(c)), index=False,
                                     float_format=FLOAT_FORMAT)
    with open(os.path.join(out_dir, 'manifest.yaml'), 'w') as f:
        yaml.safe_dump(build_manifest(draws, run_config), f, sort_keys=False)


def load_manifest(draws_dir):
    path = os.path.join(draws_dir, 'manifest.yaml')
    if not os.path.isfile(path):
        raise InputError(' [x] No manifest.yaml in draws directory: ' + draws_dir)
    with open(path, 'r') as f:
        manifest = yaml.safe_load(f)
    if not isinstance(manifest, dict) or 'spec' not in manifest:
        raise InputError(' [x] Malformed manifest: ' + path)
    return manifest


def load_draws(draws_dir):
    manifest = load_manifest(draws_dir)
    spec = ModelSpec.from_dict(manifest['spec'])
    config = McmcConfig.from_dict(manifest['mcmc'])
    area_ids = tuple(manifest['area_ids'])
    shell = PosteriorDraws(chains=[], spec=spec, config=config, area_ids=area_ids,
                           category_labels=tuple(manifest.get('category_labels') or ()) or None,
                           graph_hash=manifest.get('graph_hash', ''),
                           input_hashes=manifest.get('input_hashes') or {},
                           warnings=list(manifest.get('warnings') or []))
    columns = shell.column_names()

    files = traverse_dir(draws_dir, ['csv'], str_include='chain_', is_pure=True, is_sort=True)
    if not files:
        raise InputError(' [x] No chain_*.csv files in ' + draws_dir)
    info = {c['file']: c for c in manifest.get('chains', [])}
    G, J, K = spec.n_groups, spec.n_categories, len(area_ids)

    chains = []
    for name in sorted(files, key=lambda p: int(re.findall(r'\d+', p)[-1])):
        path = os.path.join(draws_dir, name)
        frame = pd.read_csv(path, float_precision='round_trip')
        _require_columns(frame, ['iter', 'loglik'] + columns, 'Draw', path)
        S = len(frame)
        kappa = frame[[c for c in columns if c.startswith('kappa[')]].to_numpy().reshape(S, G, J - 1)
        alpha = [frame[['alpha[{}][{}]'.format(f, lv) for lv in spec.levels(f)]].to_numpy()
                 for f in spec.additive_factors]
        if spec.include_spatial:
            theta = frame[['theta[{}]'.format(a) for a in area_ids]].to_numpy()
            sigma, lam = frame['sigma'].to_numpy(), frame['lambda'].to_numpy()
        else:
            theta, sigma, lam = np.zeros((S, K)), np.full(S, np.nan), np.full(S, np.nan)
        meta = info.get(os.path.basename(name), {})
        chains.append(ChainDraws(
            iters=frame['iter'].to_numpy().astype(np.int64), kappa=kappa, alpha=alpha, theta=theta,
            sigma=sigma, lam=lam, loglik=frame['loglik'].to_numpy(),
            acceptance=meta.get('acceptance', {}), scales=meta.get('scales', {})))
    shell.chains = chains
    return shell
