"""
:module: spherecl.cli
:purpose:
    ``sphere-cl`` command line entry point. Reads one JSON experiment
    configuration, runs the named command and writes a result document.

    Exit codes

    == ======================================================
    0  success
    1  verify-theorems ran but the verdict failed
    2  configuration or input validation error, including a kernel that
       fails the screen a theorem check depends on (ConditionViolation)
    3  runtime error (a degenerate step, points drifting off the sphere,
       failed batches, non-finite losses, unwritable output)
    == ======================================================

    Trajectories (optimize) and convergence tables (convergence) can also be
    written as CSV through ``trajectory_path`` / ``table_path``.
"""
import sys
import time
import logging
import argparse

import numpy as np

import spherecl
from spherecl.core.geometry import is_regular_simplex, is_cross_polytope, alignment_gap, EmbeddingBatch
from spherecl.core.kernels import check_conditions
from spherecl.core.losses import (
    NAMED_VARIANTS, loss_value, loss_terms, loss_grad, finite_diff_grad,
    gradient_relative_error, normalizing_constant)
from spherecl.io.config import load_config
from spherecl.io.results import result_document, write_document
from spherecl.process.metrics import compute_metrics
from spherecl.process.optimize import (
    optimize_restarts, verify_simplex_theorem, verify_cross_polytope)
from spherecl.process.sampling import (
    sample_positive_batch, sample_uniform_sphere, estimate_expected_loss,
    estimate_asymptotic_loss, convergence_study)
from spherecl.util.errors import ConfigError, DegenerateStep, NotOnSphere, ZeroRow
from spherecl.util.logging import rich_error_message, setup_terminal_logger
from spherecl.util.pandas import frame_records, write_csv

Logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED_VERDICT = 1
EXIT_INVALID = 2
EXIT_RUNTIME = 3
GRAD_CHECK_TOL = 1e-5
# ValueError subclasses that only arise from numerics during a run; the
# remaining ValueErrors (ConditionViolation, InvalidArity, ...) reject the
# configured input
RUNTIME_VALUE_ERRORS = (DegenerateStep, NotOnSphere, ZeroRow)


def _embeddings(config, rng):
    """Inline embeddings, else a sampled pair: from the distribution when one
    is given, otherwise two independent uniform batches"""
    if config.embeddings is not None:
        return config.batches
    if config.distribution is not None:
        return sample_positive_batch(config.distribution, config.M, rng)
    return (sample_uniform_sphere(config.d, config.M, rng),
            sample_uniform_sphere(config.d, config.M, rng))


def _normalizing_constant_or_none(variant, M):
    if variant in NAMED_VARIANTS or variant == 'kcl':
        return normalizing_constant(variant, M)
    return None


def cmd_loss_eval(config, rng):
    U, V = _embeddings(config, rng)
    spec = config.loss
    terms = None
    if spec.variant in NAMED_VARIANTS or spec.variant == 'kcl':
        terms = loss_terms(spec, U, V)
    return {'loss': loss_value(spec, U, V),
            'terms': terms,
            'normalizing_constant': _normalizing_constant_or_none(spec.variant, U.M),
            'M': U.M, 'd': U.d}, EXIT_OK


def cmd_grad_check(config, rng):
    U, V = _embeddings(config, rng)
    err = gradient_relative_error(loss_grad(config.loss, U, V),
                                  finite_diff_grad(config.loss, U, V, config.h))
    return {'max_relative_error': err, 'passed': err < GRAD_CHECK_TOL,
            'h': config.h, 'M': U.M, 'd': U.d}, EXIT_OK


def cmd_optimize(config, rng):
    M, d = config.M, config.d
    outcomes, best = optimize_restarts(config.loss, M, d, config.optimizer)
    out = outcomes[best]
    U, V = EmbeddingBatch(out.U), EmbeddingBatch(out.V)
    if config.trajectory_path:
        write_csv(out.trajectory, config.trajectory_path)
    return {'best_loss': out.loss,
            'best_restart': best,
            'converged': out.converged,
            'grad_norm': out.grad_norm,
            'steps': out.steps,
            'alignment_gap': alignment_gap(U, V),
            'simplex_check': is_regular_simplex(U, config.tol) if M <= d + 1 else None,
            'cross_polytope_check': is_cross_polytope(U, config.tol) if M == 2 * d else None,
            'restart_losses': [_o.loss if _o.ok else None for _o in outcomes],
            'restart_errors': [_o.error for _o in outcomes]}, EXIT_OK


def cmd_verify_theorems(config, rng):
    if config.cross_polytope:
        verdict = verify_cross_polytope(config.loss, config.d, config.optimizer, tol=config.tol)
    else:
        verdict = verify_simplex_theorem(config.loss, config.M, config.d, config.optimizer,
                                         tol=config.tol)
    code = EXIT_OK if verdict.passed else EXIT_FAILED_VERDICT
    return {'verdict': verdict, 'passed': verdict.passed}, code


def cmd_expectation(config, rng):
    spec = config.loss
    est = estimate_expected_loss(spec, config.distribution, config.M,
                                 n_batches=config.n_batches, rng=rng)
    out = {'estimate': est, 'asymptotic': None, 'normalizing_constant': None,
           'normalized_mean': None, 'n_samples': config.n_samples}
    if spec.variant in NAMED_VARIANTS or spec.variant == 'kcl':
        const = normalizing_constant(spec.variant, config.M)
        out['normalizing_constant'] = const
        out['normalized_mean'] = est.mean - const
        out['asymptotic'] = estimate_asymptotic_loss(spec, config.distribution,
                                                     n_samples=config.n_samples, rng=rng)
    return out, EXIT_OK


def cmd_convergence(config, rng):
    df = convergence_study(config.loss, config.distribution, config.M_list,
                           n_batches=config.n_batches, n_samples=config.n_samples, rng=rng)
    if config.table_path:
        write_csv(df, config.table_path)
    return {'rows': frame_records(df), 'n_samples': config.n_samples}, EXIT_OK


def cmd_metrics(config, rng):
    U, V = _embeddings(config, rng)
    return compute_metrics(U, V, t=config.t, n_ref=config.n_ref, seed=config.seed), EXIT_OK


def cmd_kernel_check(config, rng):
    return check_conditions(config.kernel, config.grid_size), EXIT_OK


COMMAND_HANDLERS = {'loss-eval': cmd_loss_eval,
                    'grad-check': cmd_grad_check,
                    'optimize': cmd_optimize,
                    'verify-theorems': cmd_verify_theorems,
                    'expectation': cmd_expectation,
                    'convergence': cmd_convergence,
                    'metrics': cmd_metrics,
                    'kernel-check': cmd_kernel_check}


def run(config):
    """Execute one configured command and write its result document

    :param config: validated configuration
    :type config: spherecl.io.config.ExperimentConfig
    :return: process exit code
    :rtype: int
    """
    Logger.info(f'running "{config.command}" with seed {config.seed}')
    tick = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    try:
        results, code = COMMAND_HANDLERS[config.command](config, rng)
    except RUNTIME_VALUE_ERRORS as e:
        print(rich_error_message(e), file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, TypeError) as e:
        print(rich_error_message(e), file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:
        print(rich_error_message(e), file=sys.stderr)
        return EXIT_RUNTIME
    doc = result_document(config.command, config.to_dict(), results, time.perf_counter() - tick)
    try:
        write_document(doc, config.output_path)
    except OSError as e:
        print(rich_error_message(e), file=sys.stderr)
        return EXIT_RUNTIME
    return code


def build_parser():
    parser = argparse.ArgumentParser(
        prog='sphere-cl',
        description='Evaluate, optimize and certify contrastive losses on the unit sphere')
    parser.add_argument('--config', required=True, help='JSON experiment configuration')
    parser.add_argument('--seed', type=int, default=None, help='override the configuration seed')
    parser.add_argument('--output', default=None,
                        help='override the result path ("-" writes to stdout)')
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'])
    parser.add_argument('--version', action='version', version=f'%(prog)s {spherecl.__version__}')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_terminal_logger('spherecl', level=args.log_level)
    try:
        config = load_config(args.config, seed=args.seed, output_path=args.output)
    except ConfigError as e:
        print(rich_error_message(e), file=sys.stderr)
        return EXIT_INVALID
    return run(config)


if __name__ == '__main__':
    sys.exit(main())
