"""
:module: spherecl.core.kernels
:purpose:
    Radial kernels K(x, y) = kappa(||x - y||^2) on the unit sphere, their
    closed-form derivatives and a grid screen for the monotonicity,
    convexity and complete-monotonicity conditions that the kernel
    contrastive loss results depend on.

    Supported families and parameters

    ============  ===========  =====================================
    family        params       kappa(x)
    ============  ===========  =====================================
    linear        t > 0        -t x
    gaussian      t > 0        exp(-t x)
    riesz         s > -2, !=0  sign(s) x^(-s/2)
    logarithmic   s, beta > 0  -1/2 log(s x + beta)
    ============  ===========  =====================================

    Squared distances between unit vectors lie in [0, 4].
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import poch

from spherecl.util.errors import SingularEvaluation

Logger = logging.getLogger(__name__)

FAMILY_PARAMS = {'linear': ('t',),
                 'gaussian': ('t',),
                 'riesz': ('s',),
                 'logarithmic': ('s', 'beta')}

MAX_ORDER = 6
GRID_LOW = 1e-6
GRID_HIGH = 4.
MIN_GRID_SIZE = 8
# derivative orders screened by the complete-monotonicity predicates
CM_ORDERS = (1, 2, 3, 4)
NEG_DERIVATIVE_CM_ORDERS = (1, 2, 3, 4, 5)

PREDICATES = ('decreasing', 'convex', 'strictly_convex',
              'completely_monotone', 'strictly_completely_monotone',
              'neg_derivative_completely_monotone',
              'neg_derivative_strictly_completely_monotone')


def _is_real(value):
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


@dataclass(frozen=True)
class KernelSpec:
    """A radial kernel family and its parameters

    :param family: one of 'linear', 'gaussian', 'riesz', 'logarithmic'
    :type family: str
    :param params: parameter values keyed by name, see :data:`~.FAMILY_PARAMS`
    :type params: dict
    """
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.family, str):
            raise TypeError('family must be type str')
        if self.family not in FAMILY_PARAMS:
            raise ValueError(f'family "{self.family}" not supported. '
                             f'Supported: {list(FAMILY_PARAMS.keys())}')
        if not isinstance(self.params, dict):
            raise TypeError('params must be type dict')
        names = FAMILY_PARAMS[self.family]
        extra = set(self.params) - set(names)
        if extra:
            raise ValueError(f'unexpected params {sorted(extra)} for family "{self.family}"')
        clean = {}
        for _n in names:
            if _n not in self.params:
                raise ValueError(f'family "{self.family}" requires param "{_n}"')
            _v = self.params[_n]
            if not _is_real(_v) or not np.isfinite(_v):
                raise TypeError(f'param "{_n}" must be a finite real number')
            clean[_n] = float(_v)
        if self.family in ('linear', 'gaussian') and clean['t'] <= 0:
            raise ValueError(f'{self.family} requires t > 0, got {clean["t"]}')
        if self.family == 'riesz' and (clean['s'] <= -2 or clean['s'] == 0):
            raise ValueError(f'riesz requires s > -2 and s != 0, got {clean["s"]}')
        if self.family == 'logarithmic' and (clean['s'] <= 0 or clean['beta'] <= 0):
            raise ValueError(f'logarithmic requires s > 0 and beta > 0, got {clean}')
        object.__setattr__(self, 'params', clean)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise TypeError('kernel spec must be a JSON object')
        extra = set(data) - {'family', 'params'}
        if extra:
            raise ValueError(f'unexpected kernel keys {sorted(extra)}')
        if 'family' not in data:
            raise ValueError('kernel spec requires "family"')
        return cls(family=data['family'], params=dict(data.get('params', {})))

    def to_dict(self):
        return {'family': self.family, 'params': dict(self.params)}

    def __str__(self):
        pars = ', '.join(f'{_k}={_v:g}' for _k, _v in self.params.items())
        return f'{self.family}({pars})'


@dataclass
class ConditionReport:
    """Outcome of :meth:`~.check_conditions`

    :var kernel: the screened kernel
    :var grid_size: number of grid points on [1e-6, 4]
    :var predicates: named boolean outcome per predicate
    :var worst_x: grid point with the smallest signed margin per predicate
    :var worst_violation: the most severe failure over all predicates as
        {'predicate', 'x', 'margin'}, or None when every predicate holds
    """
    kernel: KernelSpec
    grid_size: int
    predicates: dict
    worst_x: dict
    worst_violation: dict = None

    @property
    def all_passed(self):
        return all(self.predicates.values())

    def to_dict(self):
        return {'kernel': self.kernel.to_dict(),
                'grid_size': int(self.grid_size),
                'predicates': {_k: bool(_v) for _k, _v in self.predicates.items()},
                'worst_x': {_k: float(_v) for _k, _v in self.worst_x.items()},
                'worst_violation': self.worst_violation}


def _kappa(spec, x):
    """Vectorized kappa without the [0, 4] range check. Raises
    :class:`~.SingularEvaluation` where the kernel is unbounded."""
    x = np.asarray(x, dtype=float)
    p = spec.params
    if spec.family == 'linear':
        return -p['t'] * x
    if spec.family == 'gaussian':
        return np.exp(-p['t'] * x)
    if spec.family == 'riesz':
        a = -p['s'] / 2.
        if a < 0 and np.any(x <= 0):
            raise SingularEvaluation(f'{spec} is unbounded at x=0')
        if np.any(x < 0):
            raise SingularEvaluation(f'{spec} is undefined for x < 0')
        return np.sign(p['s']) * np.power(x, a)
    # logarithmic
    arg = p['s'] * x + p['beta']
    if np.any(arg <= 0):
        raise SingularEvaluation(f'{spec} is undefined where s*x + beta <= 0')
    return -0.5 * np.log(arg)


def _kappa_derivative(spec, x, order):
    """Vectorized closed-form derivative of kappa without the range check"""
    x = np.asarray(x, dtype=float)
    p = spec.params
    n = int(order)
    if spec.family == 'linear':
        if n == 1:
            return np.full_like(x, -p['t'])
        return np.zeros_like(x)
    if spec.family == 'gaussian':
        return (-p['t']) ** n * np.exp(-p['t'] * x)
    if spec.family == 'riesz':
        if np.any(x <= 0):
            raise SingularEvaluation(f'derivatives of {spec} are unbounded at x <= 0')
        a = -p['s'] / 2.
        # falling factorial a (a-1) ... (a-n+1)
        return np.sign(p['s']) * poch(a - n + 1, n) * np.power(x, a - n)
    arg = p['s'] * x + p['beta']
    if np.any(arg <= 0):
        raise SingularEvaluation(f'{spec} is undefined where s*x + beta <= 0')
    return -0.5 * (-1.) ** (n - 1) * math.factorial(n - 1) * p['s'] ** n / arg ** n


def _kappa_prime(spec, x):
    return _kappa_derivative(spec, x, 1)


def _check_x(x):
    if not _is_real(x):
        raise TypeError('x must be a real number')
    if not 0. <= float(x) <= 4.:
        raise ValueError(f'x must lie in [0, 4], got {x}')
    return float(x)


def kernel_eval(spec, x):
    """Evaluate kappa(x) for a squared distance x in [0, 4]

    :param spec: kernel
    :type spec: spherecl.core.kernels.KernelSpec
    :param x: squared distance
    :type x: float
    :raises SingularEvaluation: riesz with s > 0 at x = 0
    :return: kernel value (the x -> 0+ limit at x = 0)
    :rtype: float
    """
    return float(_kappa(spec, _check_x(x)))


def kernel_eval_pair(spec, u, v):
    """Evaluate K(u, v) = kappa(||u - v||^2) for two unit vectors"""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f'u and v shapes differ: {u.shape} != {v.shape}')
    diff = u - v
    x = float(np.clip(np.dot(diff, diff), 0., 4.))
    return kernel_eval(spec, x)


def kernel_derivative(spec, x, order):
    """Closed-form **order**-th derivative of kappa at **x**

    :param spec: kernel
    :type spec: spherecl.core.kernels.KernelSpec
    :param x: squared distance in [0, 4]
    :type x: float
    :param order: derivative order, 1 <= order <= 6
    :type order: int
    :raises SingularEvaluation: riesz at x = 0
    :rtype: float
    """
    if not isinstance(order, (int, np.integer)) or isinstance(order, bool):
        raise TypeError('order must be type int')
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f'order must lie in [1, {MAX_ORDER}], got {order}')
    return float(_kappa_derivative(spec, _check_x(x), order))


def condition_table(spec, grid_size=256):
    """Tabulate kappa and its first five derivatives on the screening grid

    :param spec: kernel
    :type spec: spherecl.core.kernels.KernelSpec
    :param grid_size: number of grid points on [1e-6, 4], defaults to 256
    :type grid_size: int, optional
    :return: DataFrame with columns x, kappa, d1, ..., d5
    :rtype: pandas.DataFrame
    """
    if not isinstance(grid_size, (int, np.integer)) or isinstance(grid_size, bool):
        raise TypeError('grid_size must be type int')
    if grid_size < MIN_GRID_SIZE:
        raise ValueError(f'grid_size must be >= {MIN_GRID_SIZE}, got {grid_size}')
    grid = np.linspace(GRID_LOW, GRID_HIGH, int(grid_size))
    data = {'x': grid, 'kappa': _kappa(spec, grid)}
    for _n in NEG_DERIVATIVE_CM_ORDERS:
        data[f'd{_n}'] = _kappa_derivative(spec, grid, _n)
    return pd.DataFrame(data)


def check_conditions(spec, grid_size=256):
    """Screen a kernel for the conditions used by the kernel contrastive
    loss results on a uniform grid over [1e-6, 4].

    Predicates

    * decreasing: kappa' < 0
    * convex / strictly_convex: kappa'' >= 0 / > 0
    * completely_monotone / strictly_completely_monotone:
      (-1)^n kappa^(n) >= 0 / > 0 for n = 1..4
    * neg_derivative_completely_monotone / ..._strictly_...:
      the same for -kappa' up to order 4, i.e. n = 1..5 on kappa

    Order 0 is not screened since kernels only matter up to an additive
    constant. A riesz kernel is reported completely monotone only for s > 0.
    This is a necessary-condition screen, not a proof.

    :param spec: kernel
    :type spec: spherecl.core.kernels.KernelSpec
    :param grid_size: number of grid points, at least 8, defaults to 256
    :type grid_size: int, optional
    :rtype: spherecl.core.kernels.ConditionReport
    """
    table = condition_table(spec, grid_size)
    grid = table['x'].values

    def signed(n):
        return (-1.) ** n * table[f'd{n}'].values

    margins = {
        'decreasing': (signed(1), True),
        'convex': (table['d2'].values, False),
        'strictly_convex': (table['d2'].values, True),
        'completely_monotone': (np.min([signed(_n) for _n in CM_ORDERS], axis=0), False),
        'strictly_completely_monotone': (np.min([signed(_n) for _n in CM_ORDERS], axis=0), True),
        'neg_derivative_completely_monotone': (
            np.min([signed(_n) for _n in NEG_DERIVATIVE_CM_ORDERS], axis=0), False),
        'neg_derivative_strictly_completely_monotone': (
            np.min([signed(_n) for _n in NEG_DERIVATIVE_CM_ORDERS], axis=0), True),
    }
    predicates = {}
    worst_x = {}
    worst = None
    for name in PREDICATES:
        margin, strict = margins[name]
        idx = int(np.argmin(margin))
        ok = bool(np.all(margin > 0)) if strict else bool(np.all(margin >= 0))
        predicates[name] = ok
        worst_x[name] = float(grid[idx])
        if not ok and (worst is None or margin[idx] < worst['margin']):
            worst = {'predicate': name, 'x': float(grid[idx]), 'margin': float(margin[idx])}
    if spec.family == 'riesz' and spec.params['s'] < 0:
        for name in ('completely_monotone', 'strictly_completely_monotone'):
            if predicates[name]:
                predicates[name] = False
                if worst is None:
                    worst = {'predicate': name, 'x': float(grid[0]), 'margin': 0.}
    Logger.debug(f'{spec}: {predicates}')
    return ConditionReport(kernel=spec, grid_size=int(grid_size), predicates=predicates,
                           worst_x=worst_x, worst_violation=worst)
