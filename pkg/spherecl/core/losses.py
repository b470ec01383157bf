"""
:module: spherecl.core.losses
:purpose:
    Mini-batch contrastive losses on the unit sphere and their ambient
    Euclidean gradients.

    Generic families, for a row reduction r_i = psi(sum_j phi(a_ij)) and
    loss (1/M) sum_i r_i, with arguments a_ij taken over j != i

    * ``generic_a``: a_ij = (v_j - v_i)^T u_i
    * ``generic_b``: both (v_j - v_i)^T u_i and (u_j - v_i)^T u_i
    * ``generic_c``: a_ij = (u_j - v_i)^T u_i  (negatives from the same view)

    Named instantiations with phi(x) = exp(x / tau)

    ========  =========  =============
    variant   family     psi
    ========  =========  =============
    infonce   generic_a  log(1 + x)
    simclr    generic_b  log(1 + x)
    dcl       generic_b  log(x)
    dhel      generic_c  log(x)
    ========  =========  =============

    and the kernel contrastive loss ``kcl``

        -(1/M) sum_i K_A(u_i, v_i) + gamma / (M (M-1)) sum_{i != j} K_U(u_i, u_j)

    A symmetric spec evaluates 1/2 (L(U, V) + L(V, U)).

    The leading-underscore functions work on raw arrays without sphere
    validation so that finite differences can step off the sphere.
"""
import logging
import numbers
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.spatial.distance import cdist

from spherecl.core.geometry import EmbeddingBatch
from spherecl.core.kernels import KernelSpec, _kappa, _kappa_prime
from spherecl.util.errors import ArityError, DimensionMismatch

Logger = logging.getLogger(__name__)

# variant -> (argument block, psi is log(1 + x))
NAMED_VARIANTS = {'infonce': ('a', True),
                  'simclr': ('b', True),
                  'dcl': ('b', False),
                  'dhel': ('c', False)}
GENERIC_VARIANTS = {'generic_a': 'a', 'generic_b': 'b', 'generic_c': 'c'}
VARIANTS = tuple(NAMED_VARIANTS) + ('kcl',) + tuple(GENERIC_VARIANTS)


class PhiPsi(object):
    """A pair of scalar maps (phi, psi) and their derivatives defining the
    row reduction of a generic contrastive loss

    :param phi: elementwise map applied to each argument a_ij
    :type phi: callable
    :param dphi: derivative of **phi**
    :type dphi: callable
    :param psi: map applied to each row sum
    :type psi: callable
    :param dpsi: derivative of **psi**
    :type dpsi: callable
    :param name: label used in serialization, defaults to 'custom'
    :type name: str, optional
    """
    def __init__(self, phi, dphi, psi, dpsi, name='custom'):
        for _k, _v in {'phi': phi, 'dphi': dphi, 'psi': psi, 'dpsi': dpsi}.items():
            if not callable(_v):
                raise TypeError(f'{_k} must be callable')
        if not isinstance(name, str):
            raise TypeError('name must be type str')
        self.phi = phi
        self.dphi = dphi
        self.psi = psi
        self.dpsi = dpsi
        self.name = name

    def reduce(self, A):
        """Row values r_i = psi(sum_j phi(A_ij)) and weights dr_i/dA_ij

        :param A: (M, n) argument matrix
        :type A: numpy.ndarray
        :return: r with shape (M,) and W with shape (M, n)
        :rtype: tuple
        """
        s = np.sum(self.phi(A), axis=1)
        r = self.psi(s)
        W = self.dpsi(s)[:, None] * self.dphi(A)
        return r, W

    def to_dict(self):
        return {'name': self.name}

    def __repr__(self):
        return f'PhiPsi(name={self.name!r})'


class ExpLogPhiPsi(PhiPsi):
    """phi(x) = exp(x / tau) with psi(x) = log(1 + x) or log(x). The
    reduction runs through :func:`scipy.special.logsumexp` so that small
    temperatures do not overflow.

    :param tau: temperature, > 0
    :type tau: float
    :param plus_one: use psi(x) = log(1 + x) if True, else log(x)
    :type plus_one: bool
    """
    def __init__(self, tau, plus_one):
        if not isinstance(tau, numbers.Real) or isinstance(tau, bool):
            raise TypeError('tau must be a real number')
        if not tau > 0:
            raise ValueError(f'tau must be positive, got {tau}')
        self.tau = float(tau)
        self.plus_one = bool(plus_one)
        if self.plus_one:
            psi, dpsi, name = np.log1p, lambda s: 1. / (1. + s), 'exp_log1p'
        else:
            psi, dpsi, name = np.log, lambda s: 1. / s, 'exp_log'
        super().__init__(phi=lambda x: np.exp(x / self.tau),
                         dphi=lambda x: np.exp(x / self.tau) / self.tau,
                         psi=psi, dpsi=dpsi, name=name)

    def reduce(self, A):
        Z = A / self.tau
        lse = logsumexp(Z, axis=1)
        if self.plus_one:
            r = np.logaddexp(0., lse)
        else:
            r = lse
        W = np.exp(Z - r[:, None]) / self.tau
        return r, W

    def to_dict(self):
        return {'name': self.name, 'tau': self.tau}

    def __repr__(self):
        return f'ExpLogPhiPsi(tau={self.tau}, plus_one={self.plus_one})'


def _identity(x):
    return np.asarray(x, dtype=float)


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


PHI_PSI_NAMES = ('exp_log1p', 'exp_log', 'identity')


def make_phi_psi(name, tau=1.):
    """Build a registered :class:`~.PhiPsi` by name

    :param name: one of 'exp_log1p', 'exp_log', 'identity'
    :type name: str
    :param tau: temperature for the exponential maps, defaults to 1.
    :type tau: float, optional
    :rtype: spherecl.core.losses.PhiPsi
    """
    if name == 'exp_log1p':
        return ExpLogPhiPsi(tau, plus_one=True)
    elif name == 'exp_log':
        return ExpLogPhiPsi(tau, plus_one=False)
    elif name == 'identity':
        return PhiPsi(_identity, _ones, _identity, _ones, name='identity')
    else:
        raise ValueError(f'phi_psi "{name}" not supported. Supported: {list(PHI_PSI_NAMES)}')


@dataclass(frozen=True)
class LossSpec:
    """A loss variant and its hyperparameters

    :param variant: one of :data:`~.VARIANTS`
    :type variant: str
    :param tau: temperature for infonce, simclr, dcl and dhel
    :type tau: float or NoneType
    :param kernel_a: alignment kernel (kcl only)
    :type kernel_a: spherecl.core.kernels.KernelSpec or NoneType
    :param kernel_u: uniformity kernel (kcl only)
    :type kernel_u: spherecl.core.kernels.KernelSpec or NoneType
    :param gamma: uniformity weight, > 0 (kcl only)
    :type gamma: float or NoneType
    :param phi_psi: row reduction (generic variants only)
    :type phi_psi: spherecl.core.losses.PhiPsi or NoneType
    :param symmetric: average the loss over both view orders
    :type symmetric: bool
    """
    variant: str
    tau: float = None
    kernel_a: KernelSpec = None
    kernel_u: KernelSpec = None
    gamma: float = None
    phi_psi: PhiPsi = None
    symmetric: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f'variant "{self.variant}" not supported. Supported: {list(VARIANTS)}')
        if not isinstance(self.symmetric, bool):
            raise TypeError('symmetric must be type bool')
        present = {_k for _k in ('tau', 'kernel_a', 'kernel_u', 'gamma', 'phi_psi')
                   if getattr(self, _k) is not None}
        if self.variant in NAMED_VARIANTS:
            required = {'tau'}
        elif self.variant == 'kcl':
            required = {'kernel_a', 'kernel_u', 'gamma'}
        else:
            required = {'phi_psi'}
        missing = required - present
        if missing:
            raise ValueError(f'variant "{self.variant}" requires {sorted(missing)}')
        extra = present - required
        if extra:
            raise ValueError(f'variant "{self.variant}" does not take {sorted(extra)}')
        if self.tau is not None:
            if not isinstance(self.tau, numbers.Real) or isinstance(self.tau, bool):
                raise TypeError('tau must be a real number')
            if not self.tau > 0:
                raise ValueError(f'tau must be positive, got {self.tau}')
            object.__setattr__(self, 'tau', float(self.tau))
        if self.gamma is not None:
            if not isinstance(self.gamma, numbers.Real) or isinstance(self.gamma, bool):
                raise TypeError('gamma must be a real number')
            if not self.gamma > 0:
                raise ValueError(f'gamma must be positive, got {self.gamma}')
            object.__setattr__(self, 'gamma', float(self.gamma))
        for _k in ('kernel_a', 'kernel_u'):
            _v = getattr(self, _k)
            if _v is not None and not isinstance(_v, KernelSpec):
                raise TypeError(f'{_k} must be type KernelSpec')
        if self.phi_psi is not None and not isinstance(self.phi_psi, PhiPsi):
            raise TypeError('phi_psi must be type PhiPsi')

    @property
    def reduction(self):
        """The :class:`~.PhiPsi` used by this spec (None for kcl)"""
        if self.variant in NAMED_VARIANTS:
            return ExpLogPhiPsi(self.tau, plus_one=NAMED_VARIANTS[self.variant][1])
        return self.phi_psi

    @property
    def block(self):
        if self.variant in NAMED_VARIANTS:
            return NAMED_VARIANTS[self.variant][0]
        return GENERIC_VARIANTS.get(self.variant)

    def replace(self, **kwargs):
        fields = {'variant': self.variant, 'tau': self.tau, 'kernel_a': self.kernel_a,
                  'kernel_u': self.kernel_u, 'gamma': self.gamma,
                  'phi_psi': self.phi_psi, 'symmetric': self.symmetric}
        fields.update(kwargs)
        return LossSpec(**fields)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise TypeError('loss spec must be a JSON object')
        allowed = {'variant', 'tau', 'gamma', 'kernel_a', 'kernel_u', 'phi_psi', 'symmetric'}
        extra = set(data) - allowed
        if extra:
            raise ValueError(f'unexpected loss keys {sorted(extra)}')
        if 'variant' not in data:
            raise ValueError('loss spec requires "variant"')
        kwargs = {'variant': data['variant'],
                  'tau': data.get('tau'),
                  'gamma': data.get('gamma'),
                  'symmetric': data.get('symmetric', False)}
        for _k in ('kernel_a', 'kernel_u'):
            if data.get(_k) is not None:
                kwargs[_k] = KernelSpec.from_dict(data[_k])
        pp = data.get('phi_psi')
        if pp is not None:
            if isinstance(pp, str):
                pp = {'name': pp}
            if not isinstance(pp, dict) or set(pp) - {'name', 'tau'} or 'name' not in pp:
                raise ValueError('phi_psi must be a name or {"name": str, "tau": number}')
            kwargs['phi_psi'] = make_phi_psi(pp['name'], tau=pp.get('tau', 1.))
        return cls(**kwargs)

    def to_dict(self):
        out = {'variant': self.variant, 'symmetric': self.symmetric}
        if self.tau is not None:
            out['tau'] = self.tau
        if self.gamma is not None:
            out['gamma'] = self.gamma
        if self.kernel_a is not None:
            out['kernel_a'] = self.kernel_a.to_dict()
        if self.kernel_u is not None:
            out['kernel_u'] = self.kernel_u.to_dict()
        if self.phi_psi is not None:
            out['phi_psi'] = self.phi_psi.to_dict()
        return out


def _offdiag_mask(M):
    return ~np.eye(M, dtype=bool)


def _scatter(W, M):
    """Place an (M, M-1) block of off-diagonal weights into an (M, M) matrix"""
    out = np.zeros((M, M))
    out[_offdiag_mask(M)] = W.ravel()
    return out


def _generic_arrays(block, pp, U, V, want_grad=True):
    """Value and ambient gradients of a one-sided generic loss on raw arrays"""
    M = U.shape[0]
    mask = _offdiag_mask(M)
    pos = np.einsum('ij,ij->i', U, V)
    blocks = ('a', 'c') if block == 'b' else (block,)
    mats = []
    for _b in blocks:
        G = U @ V.T if _b == 'a' else U @ U.T
        mats.append((G - pos[:, None])[mask].reshape(M, M - 1))
    A = np.hstack(mats)
    r, W = pp.reduce(A)
    value = float(np.mean(r))
    if not want_grad:
        return value, None, None
    W = W / M
    gU = np.zeros_like(U)
    gV = np.zeros_like(V)
    for _e, _b in enumerate(blocks):
        Wf = _scatter(W[:, _e * (M - 1):(_e + 1) * (M - 1)], M)
        s = Wf.sum(axis=1)
        if _b == 'a':
            P = Wf - np.diag(s)
            gU += P @ V
            gV += P.T @ U
        else:
            gU += Wf @ U + Wf.T @ U - s[:, None] * V
            gV -= s[:, None] * U
    return value, gU, gV


def _energy_arrays(kernel, U, want_grad=True):
    """Mean ordered-pair kernel energy of the rows of U and its gradient"""
    M = U.shape[0]
    mask = _offdiag_mask(M)
    D = cdist(U, U, 'sqeuclidean')[mask]
    c = 1. / (M * (M - 1))
    value = float(c * np.sum(_kappa(kernel, D)))
    if not want_grad:
        return value, None
    Kp = np.zeros((M, M))
    Kp[mask] = _kappa_prime(kernel, D)
    grad = 4. * c * (Kp.sum(axis=1)[:, None] * U - Kp @ U)
    return value, grad


def _kcl_arrays(spec, U, V, want_grad=True):
    M = U.shape[0]
    diff = U - V
    da = np.einsum('ij,ij->i', diff, diff)
    align = -float(np.mean(_kappa(spec.kernel_a, da)))
    energy, gE = _energy_arrays(spec.kernel_u, U, want_grad=want_grad)
    value = align + spec.gamma * energy
    if not want_grad:
        return value, None, None
    gU = -(2. / M) * _kappa_prime(spec.kernel_a, da)[:, None] * diff
    gV = -gU
    gU = gU + spec.gamma * gE
    return value, gU, gV


def _one_sided(spec, U, V, want_grad=True):
    if spec.variant == 'kcl':
        return _kcl_arrays(spec, U, V, want_grad=want_grad)
    return _generic_arrays(spec.block, spec.reduction, U, V, want_grad=want_grad)


def _value_and_grad(spec, U, V, want_grad=True):
    """Loss value and ambient gradients (dL/dU, dL/dV) on raw arrays,
    honouring ``spec.symmetric``"""
    if not spec.symmetric:
        return _one_sided(spec, U, V, want_grad=want_grad)
    v1, gU1, gV1 = _one_sided(spec, U, V, want_grad=want_grad)
    v2, gV2, gU2 = _one_sided(spec, V, U, want_grad=want_grad)
    value = 0.5 * (v1 + v2)
    if not want_grad:
        return value, None, None
    return value, 0.5 * (gU1 + gU2), 0.5 * (gV1 + gV2)


def _pair(U, V):
    """Validate a pair of batches and return their point arrays"""
    if not isinstance(U, EmbeddingBatch):
        U = EmbeddingBatch(U)
    if not isinstance(V, EmbeddingBatch):
        V = EmbeddingBatch(V)
    if U.points.shape != V.points.shape:
        raise DimensionMismatch(f'batch shapes differ: {U.points.shape} != {V.points.shape}')
    if U.M < 2:
        raise ArityError(f'contrastive losses need M >= 2, got M={U.M}')
    return U.points, V.points


def loss_generic_a(U, V, pp):
    """L_a = (1/M) sum_i psi(sum_{j != i} phi((v_j - v_i)^T u_i))

    :param U: first view
    :type U: spherecl.core.geometry.EmbeddingBatch
    :param V: second view
    :type V: spherecl.core.geometry.EmbeddingBatch
    :param pp: row reduction
    :type pp: spherecl.core.losses.PhiPsi
    :raises ArityError: if M < 2
    :rtype: float
    """
    P, Q = _pair(U, V)
    return _generic_arrays('a', pp, P, Q, want_grad=False)[0]


def loss_generic_b(U, V, pp):
    """L_b, whose inner sum over j != i holds both phi((v_j - v_i)^T u_i)
    and phi((u_j - v_i)^T u_i)"""
    P, Q = _pair(U, V)
    return _generic_arrays('b', pp, P, Q, want_grad=False)[0]


def loss_generic_c(U, V, pp):
    """L_c = (1/M) sum_i psi(sum_{j != i} phi((u_j - v_i)^T u_i))"""
    P, Q = _pair(U, V)
    return _generic_arrays('c', pp, P, Q, want_grad=False)[0]


def loss_named(spec, U, V):
    """Evaluate infonce, simclr, dcl or dhel

    :param spec: loss specification with a named variant
    :type spec: spherecl.core.losses.LossSpec
    :rtype: float
    """
    if spec.variant not in NAMED_VARIANTS:
        raise ValueError(f'loss_named does not handle variant "{spec.variant}"')
    P, Q = _pair(U, V)
    return _value_and_grad(spec, P, Q, want_grad=False)[0]


def loss_kcl(spec, U, V):
    """Evaluate the kernel contrastive loss. The uniformity sum runs over
    ordered pairs i != j with denominator M (M - 1).

    :raises SingularEvaluation: riesz K_A with s > 0 on a coincident pair
    :rtype: float
    """
    if spec.variant != 'kcl':
        raise ValueError(f'loss_kcl does not handle variant "{spec.variant}"')
    P, Q = _pair(U, V)
    return _value_and_grad(spec, P, Q, want_grad=False)[0]


def loss_value(spec, U, V):
    """Evaluate any variant of :class:`~.LossSpec`"""
    P, Q = _pair(U, V)
    return _value_and_grad(spec, P, Q, want_grad=False)[0]


def loss_grad(spec, U, V):
    """Ambient Euclidean gradients of the loss

    :param spec: loss specification
    :type spec: spherecl.core.losses.LossSpec
    :return: (dL/dU, dL/dV), each (M, d)
    :rtype: tuple of numpy.ndarray
    """
    P, Q = _pair(U, V)
    _, gU, gV = _value_and_grad(spec, P, Q)
    return gU, gV


def loss_terms(spec, U, V):
    """Split a named or kcl loss into its alignment part and the remaining
    uniformity part.

    For the exponential variants the alignment part is
    -(1/M) sum_i u_i^T v_i / tau. For kcl it is -(1/M) sum_i K_A(u_i, v_i)
    and the uniformity part is gamma times the energy of U (averaged with V
    when symmetric).

    :return: {'alignment', 'uniformity', 'total'}
    :rtype: dict
    """
    P, Q = _pair(U, V)
    total = _value_and_grad(spec, P, Q, want_grad=False)[0]
    if spec.variant in NAMED_VARIANTS:
        align = -float(np.mean(np.einsum('ij,ij->i', P, Q))) / spec.tau
    elif spec.variant == 'kcl':
        diff = P - Q
        align = -float(np.mean(_kappa(spec.kernel_a, np.einsum('ij,ij->i', diff, diff))))
    else:
        raise ValueError(f'loss_terms does not decompose generic variant "{spec.variant}"')
    return {'alignment': align, 'uniformity': total - align, 'total': total}


def finite_diff_grad(spec, U, V, h=1e-6):
    """Central finite-difference gradients of the loss, one coordinate at a
    time. Perturbed points leave the sphere, so evaluation skips the unit
    norm check.

    :param h: step, in [1e-8, 1e-3], defaults to 1e-6
    :type h: float, optional
    :return: (dL/dU, dL/dV)
    :rtype: tuple of numpy.ndarray
    """
    if not isinstance(h, numbers.Real) or isinstance(h, bool):
        raise TypeError('h must be a real number')
    if not 1e-8 <= h <= 1e-3:
        raise ValueError(f'h must lie in [1e-8, 1e-3], got {h}')
    P, Q = _pair(U, V)
    X = [P.copy(), Q.copy()]
    grads = [np.zeros_like(P), np.zeros_like(Q)]
    for _k in range(2):
        for idx in np.ndindex(*X[_k].shape):
            orig = X[_k][idx]
            X[_k][idx] = orig + h
            fp = _value_and_grad(spec, X[0], X[1], want_grad=False)[0]
            X[_k][idx] = orig - h
            fm = _value_and_grad(spec, X[0], X[1], want_grad=False)[0]
            X[_k][idx] = orig
            grads[_k][idx] = (fp - fm) / (2. * h)
    return grads[0], grads[1]


def gradient_relative_error(analytic, numeric):
    """max |analytic - numeric| / max(max |numeric|, 1) over both gradient
    blocks

    :param analytic: (dL/dU, dL/dV) from :meth:`~.loss_grad`
    :type analytic: tuple
    :param numeric: (dL/dU, dL/dV) from :meth:`~.finite_diff_grad`
    :type numeric: tuple
    :rtype: float
    """
    a = np.concatenate([np.ravel(_g) for _g in analytic])
    n = np.concatenate([np.ravel(_g) for _g in numeric])
    if a.shape != n.shape:
        raise DimensionMismatch(f'gradient sizes differ: {a.shape} != {n.shape}')
    return float(np.max(np.abs(a - n)) / max(float(np.max(np.abs(n))), 1.))


def normalizing_constant(variant, M):
    """Constant subtracted from a batch-size-M expected loss before
    comparing it with the asymptotic form

    infonce, dhel: log(M - 1); simclr, dcl: log(2M - 2); kcl: 0

    :raises ArityError: if M < 2
    :rtype: float
    """
    if not isinstance(M, numbers.Integral) or isinstance(M, bool):
        raise TypeError('M must be type int')
    if M < 2:
        raise ArityError(f'normalizing constant needs M >= 2, got M={M}')
    if variant in ('infonce', 'dhel'):
        return float(np.log(M - 1))
    elif variant in ('simclr', 'dcl'):
        return float(np.log(2 * M - 2))
    elif variant == 'kcl':
        return 0.
    else:
        raise ValueError(f'no normalizing constant for variant "{variant}"')
