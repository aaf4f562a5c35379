# presentation/console_ui.py
# Command-line interface for the geodesic mapping toolkit

import argparse
import sys
from typing import List, Optional

import numpy as np

from business_logic.verification_pipeline import RunOptions, SolveSeed, VerificationPipeline
from config.settings import AppConfig, GeodesicConfig, SolverConfig
from data_access.models import Backend, SinyukovState
from data_access.report_store import ReportDocument
from presentation.report_formatter import ReportFormatter
from utilities.helpers import parse_float_list, symmetric_from_upper
from utilities.logger import get_logger


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--grid', type=positive_int, default=None,
                        help='points per axis (default 5 for n <= 3, 3 above)')
    common.add_argument('--backend', choices=[b.value for b in Backend], default=Backend.ANALYTIC.value)
    common.add_argument('--tol', type=positive_float, default=None, help='residual tolerance override')
    common.add_argument('--out', default=None, help="report JSON path ('-' for stdout; a directory for corpus)")
    common.add_argument('--seed', type=int, default=GeodesicConfig.SEED, help='random seed')
    common.add_argument('--log-file', default=None, help='also log to this rotating file')
    common.add_argument('--quiet', action='store_true', help='only warnings and errors on the console')

    parser = argparse.ArgumentParser(prog=AppConfig.TOOL_NAME, description=AppConfig.APP_NAME)
    parser.add_argument('--version', action='version', version=f"{AppConfig.TOOL_NAME} {AppConfig.VERSION}")
    commands = parser.add_subparsers(dest='command', required=True)

    verify = commands.add_parser('verify', parents=[common], help='check whether a metric pair is geodesic')
    verify.add_argument('source')
    verify.add_argument('target')

    solve = commands.add_parser('solve', parents=[common], help='integrate the closed system from a seed')
    solve.add_argument('source')
    seed = solve.add_mutually_exclusive_group()
    seed.add_argument('--from-pair', metavar='TARGET', default=None, help='seed from (a, lambda, mu) of a pair')
    seed.add_argument('--trivial-seed', action='store_true', help='a = g(base), lambda = 0, mu = 0')
    seed.add_argument('--a', dest='a_values', default=None,
                      help='upper triangle (row-major) or full matrix of a at the base point')
    solve.add_argument('--lambda', dest='lambda_values', default=None, help='lambda_i at the base point')
    solve.add_argument('--mu', type=float, default=0.0, help='mu at the base point')
    solve.add_argument('--base', default=None, help='base grid node (default: central node)')
    solve.add_argument('--step', type=positive_float, default=SolverConfig.STEP, help='RK4 arc-length step')

    einstein = commands.add_parser('einstein', parents=[common], help='Einstein transfer suite')
    einstein.add_argument('source')
    einstein.add_argument('target')

    curvature = commands.add_parser('curvature', parents=[common], help='curvature of one metric')
    curvature.add_argument('source')

    compare = commands.add_parser('geodesic-compare', parents=[common],
                                  help='integrate random geodesics of the source and test them against the target')
    compare.add_argument('source')
    compare.add_argument('target')
    compare.add_argument('--count', type=positive_int, default=GeodesicConfig.SAMPLE_COUNT)
    compare.add_argument('--t-end', type=positive_float, default=GeodesicConfig.T_END)
    compare.add_argument('--h', type=positive_float, default=GeodesicConfig.STEP)

    corpus = commands.add_parser('corpus', parents=[common], help='run every entry of the corpus manifest')
    corpus.add_argument('--only', nargs='*', default=None, help='restrict to entries using these metrics')

    return parser


class ConsoleUI:
    """
    Command-line front end
    Parses arguments, runs the pipeline and prints a summary; returns the process exit code
    """

    def __init__(self, pipeline: Optional[VerificationPipeline] = None, formatter: Optional[ReportFormatter] = None):
        self.pipeline = pipeline or VerificationPipeline()
        self.formatter = formatter or ReportFormatter()
        self.logger = get_logger(__name__)

    @staticmethod
    def options_from(args: argparse.Namespace) -> RunOptions:
        options = RunOptions(grid=args.grid, backend=Backend(args.backend), tol=args.tol, seed=args.seed)
        if getattr(args, 'step', None):
            options.step = args.step
        return options

    @staticmethod
    def seed_from(args: argparse.Namespace) -> SolveSeed:
        base = np.array(parse_float_list(args.base)) if args.base else None
        if args.from_pair:
            return SolveSeed(from_pair=args.from_pair, base=base)
        if args.trivial_seed:
            return SolveSeed(trivial=True, base=base)
        if args.a_values is None:
            raise ValueError("solve needs --a (with --lambda/--mu), --from-pair or --trivial-seed")
        lam = np.array(parse_float_list(args.lambda_values)) if args.lambda_values else None
        entries = parse_float_list(args.a_values)
        n = len(lam) if lam is not None else _dimension_from_upper(len(entries))
        state = SinyukovState(a=symmetric_from_upper(entries, n),
                              lam=lam if lam is not None else np.zeros(n), mu=args.mu)
        return SolveSeed(state=state, base=base)

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = build_parser().parse_args(argv)
        return self.execute(args)

    def execute(self, args: argparse.Namespace) -> int:
        options = self.options_from(args)
        if args.command == 'corpus':
            summary, code = self.pipeline.run_corpus(options, out_dir=args.out, only=args.only)
            print(self.formatter.format_corpus(summary))
            return code

        if args.command == 'verify':
            document, code = self.pipeline.run_verify(args.source, args.target, options)
        elif args.command == 'solve':
            try:
                seed = self.seed_from(args)
            except ValueError as e:
                self.logger.error(str(e))
                print(f"error: {e}", file=sys.stderr)
                return AppConfig.EXIT_ERROR
            document, code = self.pipeline.run_solve(args.source, seed, options)
        elif args.command == 'einstein':
            document, code = self.pipeline.run_einstein(args.source, args.target, options)
        elif args.command == 'curvature':
            document, code = self.pipeline.run_curvature(args.source, options)
        else:
            document, code = self.pipeline.run_geodesic_compare(args.source, args.target, options,
                                                                args.count, args.t_end, args.h)
        self.emit(document, args.out)
        return code

    def emit(self, document: ReportDocument, out: Optional[str]):
        if out == '-':
            sys.stdout.write(self.pipeline.store.to_json(document))
            return
        if out:
            self.pipeline.store.write(document, out)
        print(self.formatter.format_document(document))


def _dimension_from_upper(count: int) -> int:
    """n with n(n+1)/2 == count (or n*n == count)"""
    for n in range(2, 7):
        if count in (n * (n + 1) // 2, n * n):
            return n
    raise ValueError(f"{count} entries do not form the upper triangle of a 2..6 dimensional matrix")
