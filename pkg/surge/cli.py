"""
Command line entry point. Run from inside the surge directory:

    python cli.py predict ../configs/model_d2.json --out curves.csv
    python cli.py grid ../configs/quadratic_d32.json ../configs/grid_d32.json --out runs.csv
    python cli.py fit runs.csv --out fit.json
    python cli.py plot --runs runs.csv --curves curves.csv --fit fit.json --out surge.svg
    python cli.py verify --out report.txt

Exit codes: 0 success, 1 usage or parse error, 2 law violation, fit failure
or failed verification, 3 internal error.

Defaults come from default_options, overridden by surge_options.json in the
working directory (if present), then by the SURGE_SEED / SURGE_JOBS
environment variables, then by command line flags.
"""
import json
import logging
import os
import sys
from argparse import ArgumentParser

from fit import FitFailureError, scaling_fit
from harness import NoConvergedRunsError, grid_search
from lawcore import LawViolationError, curve, eps_max_forms, law_params, \
    optimal_lr_sign_exact
from parsers import ConfigError, CurveReader, FitFileParser, \
    GridFileParser, ModelFileParser, RunRecordReader, VariantParser, \
    WorkloadFileParser, parse_axis
from plotting import render_svg, write_svg
from verify import all_passed, run_verify
from workloads import batch_size_bound, bound_summary
from writers import CurveWriter, FitWriter, ReportWriter, RunRecordWriter


log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_LAW = 2
EXIT_INTERNAL = 3

OPTIONS_FILENAME = 'surge_options.json'

default_options = {
    'seed': 0,
    'jobs': 1,
    'predict.range': 'log(1, 4096, 97)',
    'predict.variants': 'exact, surge, sgd(0.5), sgd(1), large_batch',
    'verify.trials': 100_000,
}

ENV_OVERRIDES = {'seed': 'SURGE_SEED', 'jobs': 'SURGE_JOBS'}


class UsageError(Exception):
    pass


class SurgeArgumentParser(ArgumentParser):
    def error(self, message:str) -> None:
        raise UsageError(message)


def load_options(filename:str=OPTIONS_FILENAME) -> dict:
    """
    default_options updated with the options file and the environment.
    Unlike a settings store, the file is only read, never created.
    """
    options = dict(default_options)
    if os.path.isfile(filename):
        with open(filename) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f'{filename}: invalid JSON (line '
                                  f'{e.lineno}): {e.msg}') from None
        if not isinstance(data, dict):
            raise ConfigError(f'{filename}: expected a JSON object')
        unknown = set(data) - set(default_options)
        if unknown:
            raise ConfigError(f'{filename}: unknown options '
                              f'{", ".join(sorted(unknown))}')
        options.update(data)
    for key, env_name in ENV_OVERRIDES.items():
        value = os.environ.get(env_name)
        if value is not None:
            try:
                options[key] = int(value)
            except ValueError:
                raise ConfigError(f'{env_name}: expected an integer, '
                                  f'got "{value}"') from None
    return options


def cmd_predict(model_file:str, B_range:str, variants:str, out_csv:str,
                approx:bool=False) -> int:
    inputs = ModelFileParser().parse_file(model_file)
    B = parse_axis(B_range, 'range')
    parsed = VariantParser().parse(variants)

    curves = [curve(inputs, variant, B, alpha, approx)
              for variant, alpha in parsed]
    params = law_params(inputs)
    forms = eps_max_forms(inputs)
    bounds = bound_summary(batch_size_bound(inputs.stats))
    CurveWriter().write_to_file(curves, out_csv)

    print(f'b_noise          {params.b_noise:.6g}')
    print(f'eps_max          {params.eps_max:.6g}')
    print(f'eps_max_lower    {forms["lower"]:.6g}')
    print(f'large_batch_lr   {params.large_batch:.6g}')
    print(f'dl_max           {params.dl_max:.6g}')
    print(f'bound_median     {bounds["p50"]:.6g}')
    print(f'bound_p10_p90    {bounds["p10"]:.6g} {bounds["p90"]:.6g}')
    log.info('wrote %d curves to %s', len(curves), out_csv)
    return EXIT_OK


def cmd_grid(workload_file:str|None, grid_file:str, out_csv:str,
             jobs:int=1, seed:int|None=None, progress:bool=False) -> int:
    grid = GridFileParser().parse_file(grid_file)
    if workload_file is None:
        if grid.workload is None:
            raise ConfigError('grid.workload: no workload file given')
        workload_file = os.path.join(os.path.dirname(grid_file),
                                     grid.workload)
    workload = WorkloadFileParser().parse_file(workload_file)
    if seed is not None:
        grid.seed = seed

    records = grid_search(workload, grid, jobs=jobs, progress=progress)
    RunRecordWriter().write_to_file(records, out_csv)

    n_converged = sum(r.converged for r in records)
    n_diverged = sum(r.diverged for r in records)
    print(f'runs             {len(records)}')
    print(f'converged        {n_converged}')
    print(f'diverged         {n_diverged}')
    return EXIT_OK


def cmd_fit(runs_csv:str, out_json:str,
            target_loss:float|None=None) -> int:
    records = RunRecordReader().read_file(runs_csv)
    fit = scaling_fit(records, target_loss)
    FitWriter().write_to_file(fit, out_json)

    print(f'b_noise          {fit.b_noise:.6g}')
    print(f's_min            {fit.s_min:.6g}')
    print(f'e_min            {fit.e_min:.6g}')
    print(f'eps_max_adam     {fit.eps_max_adam:.6g}')
    for alpha in sorted(fit.eps_max_sgd):
        print(f'eps_max_sgd({alpha:g}) {fit.eps_max_sgd[alpha]:.6g}')
    print(f'residual_rms     {fit.residual_rms:.6g}')
    return EXIT_OK


def cmd_plot(out_svg:str, curves_csv:str|None=None,
             runs_csv:str|None=None, fit_json:str|None=None) -> int:
    if curves_csv is None and runs_csv is None and fit_json is None:
        raise UsageError('plot needs --curves, --runs or --fit')
    curves = CurveReader().read_file(curves_csv) if curves_csv else None
    records = RunRecordReader().read_file(runs_csv) if runs_csv else None
    fit = FitFileParser().parse_file(fit_json) if fit_json else None
    write_svg(render_svg(curves, records, fit), out_svg)
    return EXIT_OK


def cmd_verify(seed:int, out_report:str|None=None, trials:int=100_000,
               law=optimal_lr_sign_exact) -> int:
    results = run_verify(seed, trials, law=law)
    report = ReportWriter().to_string(results)
    sys.stdout.write(report)
    if out_report is not None:
        ReportWriter().write_to_file(results, out_report)
    return EXIT_OK if all_passed(results) else EXIT_LAW


def build_parser(options:dict) -> SurgeArgumentParser:
    ap = SurgeArgumentParser(
        prog='surge',
        description='Batch size / learning rate scaling laws for '
                    'sign-based optimizers.')
    ap.add_argument('-v', '--verbose', action='count', default=0,
        help='-v for progress info, -vv for debug output')
    ap.add_argument('--seed', type=int, default=None,
        help=f'Master seed (default: SURGE_SEED or {options["seed"]})')
    sub = ap.add_subparsers(dest='command', required=True)

    p = sub.add_parser('predict', help='Evaluate the laws for a model file')
    p.add_argument('model', help='Law model JSON (mu, sigma, hessian)')
    p.add_argument('--range', default=options['predict.range'],
        help='Batch size axis, e.g. "log(1, 4096, 97)" or "1, 2, 4"')
    p.add_argument('--variants', default=options['predict.variants'],
        help='Comma separated law variants')
    p.add_argument('--approx', action='store_true',
        help='Use the closed-form approximation of erf in the exact law')
    p.add_argument('--out', required=True, help='Curve CSV to write')

    p = sub.add_parser('grid', help='Run a batch size x lr grid search')
    p.add_argument('workload', nargs='?', default=None,
        help='Workload JSON (default: the grid file\'s "workload" entry)')
    p.add_argument('grid', help='Grid JSON')
    p.add_argument('--jobs', type=int, default=options['jobs'],
        help='Worker processes (default: SURGE_JOBS or 1)')
    p.add_argument('--progress', action='store_true',
        help='Show a progress bar')
    p.add_argument('--out', required=True, help='Run CSV to write')

    p = sub.add_parser('fit', help='Fit b_noise, s_min and eps_max to runs')
    p.add_argument('runs', help='Run CSV written by the grid command')
    p.add_argument('--target-loss', type=float, default=None,
        help='Target loss the runs were made with, stored with the fit')
    p.add_argument('--out', required=True, help='Fit JSON to write')

    p = sub.add_parser('plot', help='Render curves, runs and fits as SVG')
    p.add_argument('--curves', default=None, help='Curve CSV')
    p.add_argument('--runs', default=None, help='Run CSV')
    p.add_argument('--fit', default=None, help='Fit JSON')
    p.add_argument('--out', required=True, help='SVG to write')

    p = sub.add_parser('verify', help='Run the oracle agreement suite')
    p.add_argument('--trials', type=int, default=options['verify.trials'],
        help='Monte Carlo trials per estimate')
    p.add_argument('--out', default=None, help='Report file to write')
    return ap


def _configure_logging(verbosity:int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(levelname)s %(name)s: %(message)s')


def _run(args, options:dict) -> int:
    seed_flag = args.seed
    if args.command == 'predict':
        return cmd_predict(args.model, args.range, args.variants, args.out,
                           args.approx)
    if args.command == 'grid':
        # the grid file's own seed applies unless flag or env override it
        seed = seed_flag
        if seed is None and ENV_OVERRIDES['seed'] in os.environ:
            seed = options['seed']
        return cmd_grid(args.workload, args.grid, args.out, jobs=args.jobs,
                        seed=seed, progress=args.progress)
    if args.command == 'fit':
        return cmd_fit(args.runs, args.out, args.target_loss)
    if args.command == 'plot':
        return cmd_plot(args.out, args.curves, args.runs, args.fit)
    seed = options['seed'] if seed_flag is None else seed_flag
    return cmd_verify(seed, args.out, args.trials)


def main(argv:list|None=None) -> int:
    try:
        options = load_options()
        args = build_parser(options).parse_args(argv)
    except (UsageError, ConfigError) as e:
        print(f'surge: error: {e}', file=sys.stderr)
        return EXIT_USAGE
    _configure_logging(args.verbose)

    try:
        return _run(args, options)
    except (LawViolationError, FitFailureError, NoConvergedRunsError) as e:
        print(f'surge: {type(e).__name__}: {e}', file=sys.stderr)
        return EXIT_LAW
    except (UsageError, ValueError) as e:
        print(f'surge: error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        log.debug('internal error', exc_info=True)
        print(f'surge: internal error: {type(e).__name__}: {e}',
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == '__main__':
    sys.exit(main())
