"""
:module: spherecl.process.optimize
:purpose:
    Riemannian gradient descent with momentum over free embedding points on
    the unit sphere, and optimize-then-certify checks that the minimizers of
    the contrastive losses are aligned regular simplices (M <= d + 1) or
    cross-polytopes (M = 2d, kernel losses with a completely monotone
    uniformity kernel).

    Each step takes the ambient gradient, projects it row-wise onto the
    tangent space, folds it into a momentum buffer that is re-projected at
    the current point, and retracts by normalization.
"""
import logging
import numbers
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from spherecl.core.geometry import (
    EmbeddingBatch, ConfigurationCheck, tangent_project, retract, alignment_gap,
    is_regular_simplex, is_cross_polytope, cross_polytope)
from spherecl.core.kernels import KernelSpec, check_conditions
from spherecl.core.losses import LossSpec, _value_and_grad, _energy_arrays
from spherecl.process.sampling import sample_uniform_sphere
from spherecl.util.concurrency import ordered_map, resolve_cores
from spherecl.util.errors import (
    ArityError, ConditionViolation, DegenerateStep, InvalidArity, NonFiniteLoss)
from spherecl.util.logging import rich_error_message
from spherecl.util.pandas import trajectory_frame

Logger = logging.getLogger(__name__)

SPHERE_CHECK_EVERY = 100
TIE_TOL = 1e-12
DISAGREEMENT_TOL = 1e-6


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings of :meth:`~.optimize_free_embeddings`

    :param learning_rate: step size, > 0
    :param steps: maximum steps per restart, >= 1
    :param momentum: heavy-ball coefficient in [0, 1)
    :param grad_tol: stop once the tangent-gradient Frobenius norm is <= this
    :param restarts: independent random initializations, >= 1
    :param seed: root seed of the restart generators
    :param budget: optional cap on steps * restarts
    """
    learning_rate: float = 0.05
    steps: int = 20000
    momentum: float = 0.9
    grad_tol: float = 1e-8
    restarts: int = 5
    seed: int = 0
    budget: int = None

    def __post_init__(self):
        for _k in ('learning_rate', 'momentum', 'grad_tol'):
            _v = getattr(self, _k)
            if not isinstance(_v, numbers.Real) or isinstance(_v, bool):
                raise TypeError(f'{_k} must be a real number')
            object.__setattr__(self, _k, float(_v))
        for _k in ('steps', 'restarts', 'seed'):
            _v = getattr(self, _k)
            if not isinstance(_v, numbers.Integral) or isinstance(_v, bool):
                raise TypeError(f'{_k} must be type int')
            object.__setattr__(self, _k, int(_v))
        if self.learning_rate <= 0:
            raise ValueError(f'learning_rate must be positive, got {self.learning_rate}')
        if self.steps < 1:
            raise ValueError(f'steps must be >= 1, got {self.steps}')
        if not 0. <= self.momentum < 1.:
            raise ValueError(f'momentum must lie in [0, 1), got {self.momentum}')
        if self.grad_tol <= 0:
            raise ValueError(f'grad_tol must be positive, got {self.grad_tol}')
        if self.restarts < 1:
            raise ValueError(f'restarts must be >= 1, got {self.restarts}')
        if self.budget is not None and self.steps * self.restarts > self.budget:
            raise ValueError(f'steps * restarts = {self.steps * self.restarts} exceeds budget {self.budget}')

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise TypeError('optimizer config must be a JSON object')
        allowed = {'learning_rate', 'steps', 'momentum', 'grad_tol', 'restarts', 'seed', 'budget'}
        extra = set(data) - allowed
        if extra:
            raise ValueError(f'unexpected optimizer keys {sorted(extra)}')
        return cls(**data)

    def to_dict(self):
        return {'learning_rate': self.learning_rate, 'steps': self.steps,
                'momentum': self.momentum, 'grad_tol': self.grad_tol,
                'restarts': self.restarts, 'seed': self.seed, 'budget': self.budget}


@dataclass
class RestartOutcome:
    """Final state of one optimizer restart; **error** is set when it failed"""
    index: int
    U: np.ndarray = None
    V: np.ndarray = None
    loss: float = np.nan
    grad_norm: float = np.nan
    converged: bool = False
    steps: int = 0
    trajectory: pd.DataFrame = None
    error: str = None

    @property
    def ok(self):
        return self.error is None


@dataclass
class TheoremVerdict:
    """Outcome of an optimize-then-certify run"""
    loss_spec: LossSpec
    M: int
    d: int
    best_loss: float
    alignment_gap: float
    simplex_check: ConfigurationCheck
    converged: bool
    restarts_used: int
    passed: bool
    tol: float
    restart_losses: list = field(default_factory=list)
    cross_polytope_check: ConfigurationCheck = None
    energy: float = None
    expected_energy: float = None

    def to_dict(self):
        return {'loss_spec': self.loss_spec.to_dict(),
                'M': int(self.M), 'd': int(self.d),
                'best_loss': float(self.best_loss),
                'alignment_gap': float(self.alignment_gap),
                'simplex_check': None if self.simplex_check is None else self.simplex_check.to_dict(),
                'cross_polytope_check': (None if self.cross_polytope_check is None
                                         else self.cross_polytope_check.to_dict()),
                'converged': bool(self.converged),
                'restarts_used': int(self.restarts_used),
                'restart_losses': [float(_l) for _l in self.restart_losses],
                'energy': None if self.energy is None else float(self.energy),
                'expected_energy': None if self.expected_energy is None else float(self.expected_energy),
                'tol': float(self.tol),
                'passed': bool(self.passed)}


def _tangent_norm(tU, tV):
    return float(np.sqrt(np.sum(tU * tU) + np.sum(tV * tV)))


def _descend(spec, U, V, cfg):
    """Run one restart from (U, V) and return (U, V, loss, grad_norm,
    converged, steps, records)"""
    mU = np.zeros_like(U)
    mV = np.zeros_like(V)
    records = []
    for step in range(cfg.steps + 1):
        value, gU, gV = _value_and_grad(spec, U, V)
        if not np.isfinite(value):
            raise NonFiniteLoss(f'loss became {value} at step {step}')
        tU = tangent_project(U, gU)
        tV = tangent_project(V, gV)
        gnorm = _tangent_norm(tU, tV)
        records.append((step, value, gnorm))
        if gnorm <= cfg.grad_tol:
            return U, V, value, gnorm, True, step, records
        if step == cfg.steps:
            break
        mU = tangent_project(U, cfg.momentum * mU) + tU
        mV = tangent_project(V, cfg.momentum * mV) + tV
        U = retract(U, -cfg.learning_rate * mU)
        V = retract(V, -cfg.learning_rate * mV)
        if (step + 1) % SPHERE_CHECK_EVERY == 0:
            EmbeddingBatch(U)
            EmbeddingBatch(V)
    return U, V, value, gnorm, False, cfg.steps, records


def _restart_seeds(cfg, rng):
    if rng is None:
        root = np.random.SeedSequence(cfg.seed)
    else:
        root = np.random.SeedSequence(int(rng.integers(0, 2 ** 63 - 1)))
    return root.spawn(cfg.restarts)


def optimize_restarts(spec, M, d, cfg, rng=None, init=None, cores=None):
    """Run every restart of the optimizer and return their outcomes

    :param spec: loss to minimise
    :type spec: spherecl.core.losses.LossSpec
    :param M: points per view, >= 2
    :type M: int
    :param d: ambient dimension, >= 1
    :type d: int
    :param cfg: optimizer settings
    :type cfg: spherecl.process.optimize.OptimizerConfig
    :param rng: generator from which restart seeds are drawn. If None, the
        seeds derive from ``cfg.seed``
    :type rng: numpy.random.Generator or NoneType, optional
    :param init: optional starting (U, V) used by every restart
    :type init: tuple or NoneType, optional
    :param cores: worker threads for concurrent restarts
    :type cores: int, str, or NoneType, optional
    :return: outcomes in restart order and the index of the best one
    :rtype: tuple of (list, int)
    """
    if M < 2:
        raise ArityError(f'optimization needs M >= 2, got M={M}')
    if d < 1:
        raise ValueError(f'd must be >= 1, got {d}')
    if init is not None:
        U0, V0 = (_e.points if isinstance(_e, EmbeddingBatch) else EmbeddingBatch(_e).points
                  for _e in init)
        if U0.shape != (M, d) or V0.shape != (M, d):
            raise ValueError(f'init must hold two ({M}, {d}) batches')
    seeds = _restart_seeds(cfg, rng)

    def one_restart(idx):
        gen = np.random.default_rng(seeds[idx])
        if init is None:
            U = sample_uniform_sphere(d, M, gen).points
            V = sample_uniform_sphere(d, M, gen).points
        else:
            U, V = U0.copy(), V0.copy()
        try:
            U, V, loss, gnorm, conv, steps, records = _descend(spec, U, V, cfg)
        except (ArithmeticError, DegenerateStep) as e:
            Logger.warning(f'restart {idx} aborted: {rich_error_message(e)}')
            return RestartOutcome(index=idx, error=rich_error_message(e))
        Logger.info(f'restart {idx}: loss={loss:.10f} grad_norm={gnorm:.3e} '
                    f'steps={steps} converged={conv}')
        return RestartOutcome(index=idx, U=U, V=V, loss=loss, grad_norm=gnorm, converged=conv,
                              steps=steps, trajectory=trajectory_frame(records))

    outcomes = ordered_map(one_restart, range(cfg.restarts), cores=resolve_cores(cores))
    good = [_o for _o in outcomes if _o.ok]
    if not good:
        raise NonFiniteLoss(f'all {cfg.restarts} restarts failed')
    lowest = min(_o.loss for _o in good)
    best = next(_o.index for _o in good if _o.loss <= lowest + TIE_TOL)
    losses = [_o.loss for _o in good]
    if max(losses) - lowest > DISAGREEMENT_TOL:
        Logger.warning(f'restart final losses disagree by {max(losses) - lowest:.3e}: {losses}')
    return outcomes, best


def optimize_free_embeddings(spec, M, d, cfg, rng=None, init=None, cores=None):
    """Minimise a loss over free points U, V on S^{d-1} with restarts

    :return: best (U, V) and its trajectory with columns step, loss, grad_norm
    :rtype: tuple of (EmbeddingBatch, EmbeddingBatch, pandas.DataFrame)
    """
    outcomes, best = optimize_restarts(spec, M, d, cfg, rng=rng, init=init, cores=cores)
    out = outcomes[best]
    return EmbeddingBatch(out.U), EmbeddingBatch(out.V), out.trajectory


def hyperspherical_energy(kernel, U):
    """Mean ordered-pair kernel energy (1/(M(M-1))) sum_{i != j} K(u_i, u_j)

    :param kernel: uniformity kernel
    :type kernel: spherecl.core.kernels.KernelSpec
    :param U: configuration
    :type U: spherecl.core.geometry.EmbeddingBatch
    :raises ArityError: if M < 2
    :rtype: float
    """
    if not isinstance(kernel, KernelSpec):
        raise TypeError('kernel must be type KernelSpec')
    P = U.points if isinstance(U, EmbeddingBatch) else EmbeddingBatch(U).points
    if P.shape[0] < 2:
        raise ArityError(f'energy needs M >= 2, got M={P.shape[0]}')
    return _energy_arrays(kernel, P, want_grad=False)[0]


def _summarize(outcomes, best):
    good = [_o for _o in outcomes if _o.ok]
    return outcomes[best], [_o.loss for _o in good], len(good)


def verify_simplex_theorem(spec, M, d, cfg, tol=1e-3, cores=None):
    """Optimize and certify that the minimizer is an aligned regular simplex

    :param tol: tolerance on the alignment gap and simplex residuals,
        defaults to 1e-3
    :type tol: float, optional
    :raises InvalidArity: unless 2 <= M <= d + 1
    :rtype: spherecl.process.optimize.TheoremVerdict
    """
    if M < 2 or M > d + 1:
        raise InvalidArity(f'simplex verification needs 2 <= M <= d+1, got M={M}, d={d}')
    if not spec.symmetric:
        Logger.warning(f'{spec.variant} is not symmetric; the simplex result is stated for symmetric losses')
    outcomes, best = optimize_restarts(spec, M, d, cfg, cores=cores)
    out, losses, used = _summarize(outcomes, best)
    U, V = EmbeddingBatch(out.U), EmbeddingBatch(out.V)
    gap = alignment_gap(U, V)
    check = is_regular_simplex(U, tol)
    passed = bool(gap <= tol and check.passed)
    Logger.info(f'simplex check {spec.variant} M={M} d={d}: passed={passed} gap={gap:.3e} '
                f'residual={check.max_deviation:.3e}')
    return TheoremVerdict(loss_spec=spec, M=M, d=d, best_loss=out.loss, alignment_gap=gap,
                          simplex_check=check, converged=out.converged, restarts_used=used,
                          passed=passed, tol=tol, restart_losses=losses)


def verify_cross_polytope(spec, d, cfg, tol=1e-3, energy_rtol=1e-4, cores=None):
    """Optimize a kernel loss with M = 2d points and certify the minimizer
    against the cross-polytope, either geometrically or by matching its
    uniformity energy

    :param spec: kcl loss whose uniformity kernel is completely monotone
    :type spec: spherecl.core.losses.LossSpec
    :param d: ambient dimension
    :type d: int
    :param tol: tolerance of the geometric certification, defaults to 1e-3
    :type tol: float, optional
    :param energy_rtol: relative tolerance of the energy match, defaults to 1e-4
    :type energy_rtol: float, optional
    :raises ConditionViolation: if the uniformity kernel fails the complete
        monotonicity screen
    :rtype: spherecl.process.optimize.TheoremVerdict
    """
    if spec.variant != 'kcl':
        raise ValueError(f'cross-polytope verification needs a kcl loss, got "{spec.variant}"')
    report = check_conditions(spec.kernel_u)
    if not report.predicates['completely_monotone']:
        raise ConditionViolation(f'{spec.kernel_u} is not completely monotone: {report.worst_violation}')
    M = 2 * d
    outcomes, best = optimize_restarts(spec, M, d, cfg, cores=cores)
    out, losses, used = _summarize(outcomes, best)
    U, V = EmbeddingBatch(out.U), EmbeddingBatch(out.V)
    energy = hyperspherical_energy(spec.kernel_u, U)
    expected = hyperspherical_energy(spec.kernel_u, cross_polytope(d))
    cp_check = is_cross_polytope(U, tol)
    energy_match = abs(energy - expected) <= energy_rtol * max(abs(expected), np.finfo(float).tiny)
    simplex = is_regular_simplex(U, tol) if M <= d + 1 else None
    passed = bool(cp_check.passed or energy_match)
    Logger.info(f'cross-polytope check d={d}: geometric={cp_check.passed} '
                f'energy={energy:.8f} expected={expected:.8f}')
    return TheoremVerdict(loss_spec=spec, M=M, d=d, best_loss=out.loss,
                          alignment_gap=alignment_gap(U, V), simplex_check=simplex,
                          converged=out.converged, restarts_used=used, passed=passed, tol=tol,
                          restart_losses=losses, cross_polytope_check=cp_check,
                          energy=energy, expected_energy=expected)
