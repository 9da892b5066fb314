import os
import sys
import argparse

import yaml

from logger import utils
from logger.saver import Saver
from ordinal.data_loaders import (read_survey, read_population, read_adjacency, write_survey, write_population,
                                  write_adjacency, save_draws, load_draws, load_manifest)
from ordinal.diagnostics import summarize, check_convergence
from ordinal.errors import InputError, DomainError, EvaluationError
from ordinal.poststrat import (poststratify, relevance_table, theta_summary, kappa_summary, default_ppc_areas,
                               posterior_predictive_check)
from ordinal.sampler import run
from tools.synth import generate_population, draw_survey, identifiability_residual, write_truth
from tools.tools import RunConfig, apply_overrides, build_truth_config, build_design

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3


def parse_args(args=None, namespace=None):
    """Parse command-line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c",
        "--config",
        type=str,
        default='configs/config.yaml',
        help="path to the config file | default: configs/config.yaml")
    common.add_argument(
        "-s",
        "--seed",
        type=int,
        default=None,
        help="master seed, overrides mcmc.seed (and synth.seed for simulate)")
    common.add_argument(
        "-o",
        "--out",
        type=str,
        default=None,
        help="output directory, overrides env.expdir")
    common.add_argument("--chains", type=int, default=None, help="number of chains")
    common.add_argument("--iterations", type=int, default=None, help="iterations per chain")
    common.add_argument("--burnin", type=int, default=None, help="discarded prefix per chain")
    common.add_argument("--thin", type=int, default=None, help="keep one draw out of every THIN")
    common.add_argument("--workers", type=int, default=None, help="parallel chain processes | default: chains")
    common.add_argument(
        "-f",
        "--force",
        action='store_true',
        help="overwrite a non-empty output directory")
    common.add_argument("--no-progress", action='store_true', help="disable progress bars")

    parser = argparse.ArgumentParser(description='spatial ordinal small-area estimation')
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('simulate', parents=[common], help="write a synthetic survey, population, adjacency and truth")
    fit = sub.add_parser('fit', parents=[common], help="run the sampler and write draws, manifest and report")
    fit.add_argument(
        "--strict-areas",
        action='store_true',
        help="require the survey to cover exactly the adjacency areas")
    for name, text in (('poststratify', "post-stratified area estimates and relevance"),
                       ('ppc', "posterior predictive check of area percentages"),
                       ('diagnose', "recompute the convergence report from draw files")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument(
            "-d",
            "--draws",
            type=str,
            default=None,
            help="directory holding chain_*.csv and manifest.yaml | default: the output directory")
        if name == 'ppc':
            p.add_argument(
                "-a",
                "--areas",
                type=str,
                default=None,
                help="comma separated area ids | default: poststrat.ppc_areas or the most populated areas")
    return parser.parse_args(args=args, namespace=namespace)


def cmd_simulate(args, cmd):
    seed = cmd.seed if cmd.seed is not None else int((args.get('synth') or {}).get('seed', 0))
    out = utils.ensure_out_dir(args.env.expdir, force=cmd.force)
    truth_config = build_truth_config(args)
    design = build_design(args)

    truth, population = generate_population(truth_config, seed)
    data = draw_survey(truth, design, seed)
    residual = identifiability_residual(truth, data)

    outcome = (args.get('data') or {}).get('outcome', 'outcome')
    write_survey(data, os.path.join(out, 'survey.csv'), outcome=outcome)
    write_population(population, os.path.join(out, 'population.csv'))
    write_adjacency(truth.graph, os.path.join(out, 'adjacency.txt'))
    write_truth(truth, os.path.join(out, 'truth.csv'), residual=residual)
    print(' [*] simulated {:,} respondents in {} areas ({:,} population rows) -> {}'.format(
        data.n, truth.graph.K, population.n_rows, out))
    print(' [INFO] identifiability residual of true theta: {:.3g}'.format(residual))
    return EXIT_OK


def _input_hashes(run_config, names):
    return {name: utils.file_hash(getattr(run_config, name)) for name in names
            if getattr(run_config, name) and os.path.isfile(getattr(run_config, name))}


def cmd_fit(args, cmd):
    rc = RunConfig.from_args(args).check_paths('survey', 'adjacency')
    schemas = dict(rc.spec.schemas)
    data = read_survey(rc.survey, schemas, rc.spec.n_categories, outcome=rc.outcome)
    graph = read_adjacency(rc.adjacency)
    data.validate(known_areas=graph.area_ids)
    if rc.population and os.path.isfile(rc.population):
        # population-only areas join the graph as isolated nodes
        extra = sorted(set(read_population(rc.population, schemas).area_ids.tolist()) - set(graph.area_ids))
        if extra:
            graph = read_adjacency(rc.adjacency, extra_areas=extra)
    if cmd.strict_areas:
        surveyed, declared = set(data.area_ids.tolist()), set(graph.area_ids)
        if surveyed != declared:
            diff = sorted(surveyed ^ declared)
            raise InputError(' [x] Survey and adjacency areas differ: ' + ', '.join(diff))

    out = utils.ensure_out_dir(rc.out, force=cmd.force)
    saver = Saver(out, args=args)
    saver.log_info(' [*] fit | chains: {} | iterations: {} | burnin: {} | thin: {} | seed: {}'.format(
        rc.mcmc.chains, rc.mcmc.iterations, rc.mcmc.burnin, rc.mcmc.thin, rc.mcmc.seed))
    try:
        draws = run(data, rc.spec, graph, rc.mcmc, monitors=rc.monitors, split_rhat=rc.split_rhat,
                    rhat_max=rc.rhat_max, ess_min=rc.ess_min, saver=saver, category_labels=rc.category_labels,
                    input_hashes=_input_hashes(rc, ('survey', 'adjacency', 'population')))
        save_draws(draws, out, run_config=rc.raw)
        draws.report.to_csv(os.path.join(out, 'report.csv'))
        kappa_summary(draws).to_csv(os.path.join(out, 'kappa.csv'), index=False, float_format='%.10g')
        if rc.spec.include_spatial:
            theta_summary(draws, rc.relevance_upper, rc.relevance_lower).to_csv(
                os.path.join(out, 'theta.csv'), index=False, float_format='%.10g')
        saver.log_info(' [*] stored {:,} draws in {} chain file(s), time: {}'.format(
            draws.n_total, draws.n_chains, saver.get_total_time()))
        for msg in draws.warnings:
            saver.log_info(' [WARNING] ' + msg)
    finally:
        saver.close()
    return EXIT_OK


def _load_checked_draws(rc, draws_dir):
    manifest = load_manifest(draws_dir)
    if manifest.get('spec_hash') != rc.spec.content_hash():
        raise InputError(' [x] Draws in {} were fitted with a different model spec'.format(draws_dir))
    return load_draws(draws_dir)


def cmd_poststratify(args, cmd):
    rc = RunConfig.from_args(args).check_paths('population')
    draws_dir = cmd.draws or rc.out
    draws = _load_checked_draws(rc, draws_dir)
    pop = read_population(rc.population, dict(rc.spec.schemas))
    out = cmd.out or draws_dir
    os.makedirs(out, exist_ok=True)

    estimates = poststratify(draws, pop, rc.spec)
    estimates.to_csv(os.path.join(out, 'area_estimates.csv'))
    if rc.spec.include_spatial:
        relevance_table(draws, rc.relevance_upper, rc.relevance_lower).to_csv(
            os.path.join(out, 'relevance.csv'), index=False, float_format='%.10g')
    else:
        print(' [WARNING] Model has no spatial effects; relevance.csv not written')
    print(' [*] post-stratified {} areas x {} categories -> {}'.format(
        len(estimates.area_ids), rc.spec.n_categories, out))
    return EXIT_OK


def cmd_ppc(args, cmd):
    rc = RunConfig.from_args(args).check_paths('survey')
    draws_dir = cmd.draws or rc.out
    draws = _load_checked_draws(rc, draws_dir)
    schemas = dict(rc.spec.schemas)
    data = read_survey(rc.survey, schemas, rc.spec.n_categories, outcome=rc.outcome)
    if cmd.areas:
        areas = [a.strip() for a in cmd.areas.split(',') if a.strip()]
    elif rc.ppc_areas:
        areas = list(rc.ppc_areas)
    else:
        pop = read_population(rc.population, schemas) if rc.population and os.path.isfile(rc.population) else None
        areas = default_ppc_areas(data, pop, top=rc.ppc_top_areas)
    out = cmd.out or draws_dir
    os.makedirs(out, exist_ok=True)

    check = posterior_predictive_check(draws, data, rc.spec, areas, seed=rc.ppc_seed)
    check.to_csv(os.path.join(out, 'ppc.csv'))
    print(' [*] predictive check on {} area(s), coverage of observed percentages: {:.3f}'.format(
        len(check.area_ids), check.coverage()))
    return EXIT_OK


def cmd_diagnose(args, cmd):
    rc = RunConfig.from_args(args)
    draws_dir = cmd.draws or rc.out
    draws = load_draws(draws_dir)
    report = summarize(draws, rc.monitors, split_rhat=rc.split_rhat)
    out = cmd.out or draws_dir
    os.makedirs(out, exist_ok=True)
    report.to_csv(os.path.join(out, 'report.csv'))
    for msg in check_convergence(report, rhat_max=rc.rhat_max, ess_min=rc.ess_min):
        print(' [WARNING] ' + msg)
    print(' [*] report on {} scalar(s) from {} chain(s) -> {}'.format(len(report), report.n_chains, out))
    return EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'fit': cmd_fit,
    'poststratify': cmd_poststratify,
    'ppc': cmd_ppc,
    'diagnose': cmd_diagnose,
}


def main(argv=None):
    cmd = parse_args(argv)
    try:
        args = utils.load_config(cmd.config)
        print(' > config:', cmd.config)
        args = utils.DotDict(apply_overrides(args, cmd))
        if not (args.get('env') or {}).get('expdir'):
            args['env'] = {'expdir': 'exp/run'}
        print(' >    exp:', args.env.expdir)
        return COMMANDS[cmd.command](args, cmd)
    except (InputError, DomainError) as e:
        print(e, file=sys.stderr)
        return EXIT_INPUT
    except EvaluationError as e:
        print(e, file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, yaml.YAMLError) as e:
        print(' [x] {}'.format(e), file=sys.stderr)
        return EXIT_INPUT
    except (FloatingPointError, ArithmeticError, RuntimeError) as e:
        print(' [x] {}: {}'.format(type(e).__name__, e), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
