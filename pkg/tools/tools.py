import os
from dataclasses import dataclass, field

from logger.utils import DotDict, to_plain
from ordinal.errors import InputError
from ordinal.model import ModelSpec
from ordinal.sampler import McmcConfig
from tools.synth import TruthConfig, SamplingDesign

DEFAULT_MONITORS = ('kappa[*]', 'alpha[*]', 'theta[*]', 'sigma', 'lambda')


def _section(args, name):
    value = args.get(name) if isinstance(args, dict) else None
    return DotDict(value or {})


def build_spec(args):
    data, model = _section(args, 'data'), _section(args, 'model')
    factors = data.get('factors') or {}
    if not factors and (model.get('cut_factors') or model.get('additive_factors')):
        raise InputError(' [x] data.factors must declare the levels of every model factor')
    return ModelSpec(
        schemas=tuple((str(n), tuple(str(v) for v in lv)) for n, lv in factors.items()),
        n_categories=int(data.get('n_categories', 5)),
        cut_factors=tuple(model.get('cut_factors') or ()),
        additive_factors=tuple(model.get('additive_factors') or ()),
        alpha_constraint=model.get('alpha_constraint', 'zero-sum'),
        include_spatial=bool(model.get('include_spatial', True)))


def category_labels(args, n_categories):
    labels = _section(args, 'data').get('category_labels')
    if not labels:
        return tuple(str(j) for j in range(1, n_categories + 1))
    if len(labels) != n_categories:
        raise InputError(' [x] data.category_labels has {} entries for {} categories'.format(
            len(labels), n_categories))
    return tuple(str(v) for v in labels)


def build_mcmc(args):
    return McmcConfig.from_dict(dict(_section(args, 'mcmc')))


def build_truth_config(args):
    spec = build_spec(args)
    synth = _section(args, 'synth')
    options = {k: v for k, v in synth.items() if k not in ('design', 'seed')}
    if 'cell_count_range' in options:
        options['cell_count_range'] = tuple(options['cell_count_range'])
    try:
        return TruthConfig(
            n_categories=spec.n_categories,
            factors={n: tuple(lv) for n, lv in spec.schemas},
            cut_factors=spec.cut_factors,
            additive_factors=spec.additive_factors,
            alpha_constraint=spec.alpha_constraint,
            include_spatial=spec.include_spatial,
            **options)
    except TypeError as e:
        raise InputError(' [x] Bad synth option: {}'.format(e))


def build_design(args):
    design = DotDict(_section(args, 'synth').get('design') or {'total': 5000})
    strata = design.get('strata')
    return SamplingDesign(
        strata=tuple(strata) if strata else None,
        fraction=design.get('fraction'),
        per_area=design.get('per_area'),
        total=design.get('total'),
        second_stage={str(k): {str(lv): float(r) for lv, r in v.items()}
                      for k, v in (design.get('second_stage') or {}).items()})


@dataclass
class RunConfig:
    survey: str
    adjacency: str
    population: str
    out: str
    outcome: str
    spec: ModelSpec
    mcmc: McmcConfig
    category_labels: tuple
    monitors: tuple = DEFAULT_MONITORS
    rhat_max: float = 1.10
    ess_min: float = 100.0
    split_rhat: bool = False
    relevance_upper: float = 0.8
    relevance_lower: float = 0.2
    ppc_areas: tuple = ()
    ppc_top_areas: int = 4
    ppc_seed: int = 0
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args):
        data, env = _section(args, 'data'), _section(args, 'env')
        diag, post = _section(args, 'diagnostics'), _section(args, 'poststrat')
        spec = build_spec(args)
        return cls(
            survey=data.get('survey'),
            adjacency=data.get('adjacency'),
            population=data.get('population'),
            out=env.get('expdir', 'exp/run'),
            outcome=data.get('outcome', 'outcome'),
            spec=spec,
            mcmc=build_mcmc(args),
            category_labels=category_labels(args, spec.n_categories),
            monitors=tuple(diag.get('monitors') or DEFAULT_MONITORS),
            rhat_max=float(diag.get('rhat_max', 1.10)),
            ess_min=float(diag.get('ess_min', 100.0)),
            split_rhat=bool(diag.get('split_rhat', False)),
            relevance_upper=float(post.get('relevance_upper', 0.8)),
            relevance_lower=float(post.get('relevance_lower', 0.2)),
            ppc_areas=tuple(str(a) for a in post.get('ppc_areas') or ()),
            ppc_top_areas=int(post.get('ppc_top_areas', 4)),
            ppc_seed=int(post.get('ppc_seed', 0)),
            raw=to_plain(args))

    def check_paths(self, *names):
        for name in names:
            path = getattr(self, name)
            if not path:
                raise InputError(' [x] data.{} is not configured'.format(name))
            if not os.path.isfile(path):
                raise InputError(' [x] {} file not found: {}'.format(name.capitalize(), path))
        return self


def apply_overrides(args, cmd):
    '''command-line flags take precedence over the loaded config'''
    mcmc = dict(args.get('mcmc') or {})
    for key in ('seed', 'chains', 'iterations', 'burnin', 'thin', 'workers'):
        value = getattr(cmd, key, None)
        if value is not None:
            mcmc[key] = value
    args['mcmc'] = mcmc
    if getattr(cmd, 'out', None):
        env = dict(args.get('env') or {})
        env['expdir'] = cmd.out
        args['env'] = env
    if getattr(cmd, 'no_progress', False):
        args['mcmc']['progress'] = False
    return args
