"""
:module: spherecl.process.sampling
:purpose:
    Synthetic distributions of positive pairs on the unit sphere and Monte
    Carlo estimators of expected losses, their large-batch limits and
    batch-size convergence studies.

    A positive pair is produced in two steps: draw an anchor, then derive
    the two views from it. Anchor laws are

    * perfect / jitter: uniform on S^{d-1}
    * clustered: von Mises-Fisher around one of k fixed, seeded centers
    * point_mass: the first basis vector

    For ``perfect`` both views equal the anchor. For ``jitter`` the first
    view is the anchor and the second is normalize(anchor + sigma * noise).
    For ``clustered`` and ``point_mass`` each view is independently
    normalize(anchor + sigma * noise), and equals the anchor when sigma = 0.

    Batch estimators give every batch its own child
    :class:`numpy.random.SeedSequence`, so results do not depend on the
    number of worker threads.
"""
import logging
import numbers
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp
from scipy.stats import vonmises_fisher

from spherecl.core.geometry import EmbeddingBatch, normalize_rows
from spherecl.core.kernels import _kappa
from spherecl.core.losses import NAMED_VARIANTS, loss_value, normalizing_constant
from spherecl.util.concurrency import ordered_map, resolve_cores
from spherecl.util.errors import BatchEvaluationError
from spherecl.util.logging import rich_error_message
from spherecl.util.pandas import convergence_frame

Logger = logging.getLogger(__name__)

PAIR_MODELS = ('perfect', 'jitter', 'clustered', 'point_mass')
MIN_BATCHES = 30
MIN_SAMPLES = 1000
# rows of the n x n cross-similarity matrix handled at once
CHUNK_ROWS = 1024


@dataclass(frozen=True)
class PairModel:
    """How the two views of a positive pair relate to their anchor

    :param kind: one of 'perfect', 'jitter', 'clustered', 'point_mass'
    :type kind: str
    :param sigma: view noise scale, >= 0 (jitter, clustered, point_mass)
    :type sigma: float
    :param k: number of cluster centers (clustered)
    :type k: int
    :param concentration: von Mises-Fisher concentration, > 0 (clustered)
    :type concentration: float
    """
    kind: str
    sigma: float = 0.
    k: int = None
    concentration: float = None

    def __post_init__(self):
        if self.kind not in PAIR_MODELS:
            raise ValueError(f'pair model "{self.kind}" not supported. Supported: {list(PAIR_MODELS)}')
        if not isinstance(self.sigma, numbers.Real) or isinstance(self.sigma, bool):
            raise TypeError('sigma must be a real number')
        if self.sigma < 0:
            raise ValueError(f'sigma must be >= 0, got {self.sigma}')
        if self.kind == 'perfect' and self.sigma != 0:
            raise ValueError('the perfect pair model takes no sigma')
        object.__setattr__(self, 'sigma', float(self.sigma))
        if self.kind == 'clustered':
            if not isinstance(self.k, numbers.Integral) or isinstance(self.k, bool) or self.k < 1:
                raise ValueError(f'clustered model requires integer k >= 1, got {self.k}')
            object.__setattr__(self, 'k', int(self.k))
            conc = self.concentration
            if not isinstance(conc, numbers.Real) or isinstance(conc, bool) or not conc > 0:
                raise ValueError(f'clustered model requires concentration > 0, got {self.concentration}')
            object.__setattr__(self, 'concentration', float(self.concentration))
        elif self.k is not None or self.concentration is not None:
            raise ValueError(f'k and concentration only apply to the clustered model, not "{self.kind}"')

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise TypeError('pair_model must be a JSON object')
        extra = set(data) - {'kind', 'sigma', 'k', 'concentration'}
        if extra:
            raise ValueError(f'unexpected pair_model keys {sorted(extra)}')
        if 'kind' not in data:
            raise ValueError('pair_model requires "kind"')
        return cls(kind=data['kind'], sigma=data.get('sigma', 0.), k=data.get('k'),
                   concentration=data.get('concentration'))

    def to_dict(self):
        out = {'kind': self.kind}
        if self.kind != 'perfect':
            out['sigma'] = self.sigma
        if self.kind == 'clustered':
            out['k'] = self.k
            out['concentration'] = self.concentration
        return out


@dataclass(frozen=True)
class SphereDistribution:
    """Generative model of positive pairs on S^{d-1}

    :param d: ambient dimension, >= 2
    :type d: int
    :param pair_model: pair law
    :type pair_model: spherecl.process.sampling.PairModel
    :param seed: seed fixing the cluster centers, defaults to 0
    :type seed: int, optional
    """
    d: int
    pair_model: PairModel
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.d, numbers.Integral) or isinstance(self.d, bool):
            raise TypeError('d must be type int')
        if self.d < 2:
            raise ValueError(f'd must be >= 2, got {self.d}')
        if not isinstance(self.pair_model, PairModel):
            raise TypeError('pair_model must be type PairModel')
        if not isinstance(self.seed, numbers.Integral) or isinstance(self.seed, bool):
            raise TypeError('seed must be type int')
        object.__setattr__(self, 'd', int(self.d))
        object.__setattr__(self, 'seed', int(self.seed))

    @property
    def centers(self):
        """Cluster centers of the clustered model, (k, d)"""
        if self.pair_model.kind != 'clustered':
            return None
        return sample_uniform_sphere(self.d, self.pair_model.k,
                                     np.random.default_rng(self.seed)).points

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise TypeError('distribution must be a JSON object')
        extra = set(data) - {'d', 'pair_model', 'seed'}
        if extra:
            raise ValueError(f'unexpected distribution keys {sorted(extra)}')
        for _k in ('d', 'pair_model'):
            if _k not in data:
                raise ValueError(f'distribution requires "{_k}"')
        return cls(d=data['d'], pair_model=PairModel.from_dict(data['pair_model']),
                   seed=data.get('seed', 0))

    def to_dict(self):
        return {'d': self.d, 'pair_model': self.pair_model.to_dict(), 'seed': self.seed}


@dataclass
class ExpectationEstimate:
    """Monte Carlo mean of a loss over independent batches of size M"""
    mean: float
    stderr: float
    n_batches: int
    M: int
    values: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {'mean': float(self.mean), 'stderr': float(self.stderr),
                'n_batches': int(self.n_batches), 'M': int(self.M)}


def sample_uniform_sphere(d, n, rng):
    """Draw **n** i.i.d. uniform points on S^{d-1} by normalizing isotropic
    normal draws

    :param d: ambient dimension
    :type d: int
    :param n: number of points, >= 1
    :type n: int
    :param rng: generator
    :type rng: numpy.random.Generator
    :rtype: spherecl.core.geometry.EmbeddingBatch
    """
    if n < 1:
        raise ValueError(f'n must be >= 1, got {n}')
    if d < 1:
        raise ValueError(f'd must be >= 1, got {d}')
    return normalize_rows(rng.standard_normal((int(n), int(d))))


def _anchors(dist, M, rng):
    pm = dist.pair_model
    if pm.kind in ('perfect', 'jitter'):
        return sample_uniform_sphere(dist.d, M, rng).points
    if pm.kind == 'point_mass':
        X = np.zeros((M, dist.d))
        X[:, 0] = 1.
        return X
    centers = dist.centers
    labels = rng.integers(0, pm.k, size=M)
    X = np.empty((M, dist.d))
    for _c in range(pm.k):
        idx = np.flatnonzero(labels == _c)
        if len(idx) == 0:
            continue
        draw = vonmises_fisher(centers[_c], pm.concentration).rvs(len(idx), random_state=rng)
        X[idx] = np.reshape(draw, (len(idx), dist.d))
    return normalize_rows(X).points


def _perturb(X, sigma, rng):
    if sigma == 0:
        return X
    return normalize_rows(X + sigma * rng.standard_normal(X.shape)).points


def sample_positive_batch(dist, M, rng):
    """Draw M positive pairs (u_i, v_i)

    :param dist: pair distribution
    :type dist: spherecl.process.sampling.SphereDistribution
    :param M: number of pairs, >= 2
    :type M: int
    :param rng: generator
    :type rng: numpy.random.Generator
    :return: (U, V)
    :rtype: tuple of spherecl.core.geometry.EmbeddingBatch
    """
    if M < 2:
        raise ValueError(f'M must be >= 2, got {M}')
    pm = dist.pair_model
    X = _anchors(dist, M, rng)
    if pm.kind == 'perfect':
        U = V = X
    elif pm.kind == 'jitter':
        U, V = X, _perturb(X, pm.sigma, rng)
    else:
        U = _perturb(X, pm.sigma, rng)
        V = _perturb(X, pm.sigma, rng)
    return EmbeddingBatch(U), EmbeddingBatch(V)


def _child_seeds(rng, n):
    entropy = int(rng.integers(0, 2 ** 63 - 1))
    return np.random.SeedSequence(entropy).spawn(n)


def estimate_expected_loss(spec, dist, M, n_batches=400, rng=None, cores=None):
    """Monte Carlo estimate of the expected loss over batches of M pairs

    :param spec: loss
    :type spec: spherecl.core.losses.LossSpec
    :param dist: pair distribution
    :type dist: spherecl.process.sampling.SphereDistribution
    :param M: batch size
    :type M: int
    :param n_batches: number of independent batches, >= 30, defaults to 400
    :type n_batches: int, optional
    :param rng: generator from which the per-batch seeds are derived
    :type rng: numpy.random.Generator
    :param cores: worker threads, see :meth:`~spherecl.util.concurrency.resolve_cores`
    :type cores: int, str, or NoneType, optional
    :raises BatchEvaluationError: if a batch fails, carrying its index
    :rtype: spherecl.process.sampling.ExpectationEstimate
    """
    if n_batches < MIN_BATCHES:
        raise ValueError(f'n_batches must be >= {MIN_BATCHES}, got {n_batches}')
    if not isinstance(rng, np.random.Generator):
        raise TypeError('rng must be type numpy.random.Generator')
    seeds = _child_seeds(rng, n_batches)

    def one_batch(idx):
        gen = np.random.default_rng(seeds[idx])
        try:
            U, V = sample_positive_batch(dist, M, gen)
            return loss_value(spec, U, V)
        except Exception as e:
            raise BatchEvaluationError(idx, rich_error_message(e)) from e

    values = np.array(ordered_map(one_batch, range(n_batches), cores=resolve_cores(cores)))
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / np.sqrt(n_batches))
    Logger.info(f'{spec.variant} M={M}: {mean:.6f} +/- {stderr:.6f} over {n_batches} batches')
    return ExpectationEstimate(mean=mean, stderr=stderr, n_batches=int(n_batches), M=int(M),
                               values=values)


def _mean_log_mean_exp(A, B, tau):
    """mean_i log mean_j exp(<a_i, b_j> / tau), chunked over rows of A"""
    n = B.shape[0]
    total = 0.
    for start in range(0, A.shape[0], CHUNK_ROWS):
        S = A[start:start + CHUNK_ROWS] @ B.T / tau
        total += float(np.sum(logsumexp(S, axis=1) - np.log(n)))
    return total / A.shape[0]


def _mean_cross_kernel(kernel, A, B):
    """mean over all (i, j) of kappa(||a_i - b_j||^2), chunked over rows of A"""
    total = 0.
    for start in range(0, A.shape[0], CHUNK_ROWS):
        D = np.clip(cdist(A[start:start + CHUNK_ROWS], B, 'sqeuclidean'), 0., 4.)
        total += float(np.sum(_kappa(kernel, D)))
    return total / (A.shape[0] * B.shape[0])


def estimate_asymptotic_loss(spec, dist, n_samples=10000, rng=None):
    """Monte Carlo estimate of the large-batch form of a loss

    For infonce, simclr, dcl and dhel

        E[-u^T v / tau] + E_u[log E_u'[exp(u^T u' / tau)]]

    with the inner expectation over an independent pool of n_samples
    negatives. For kcl the batch-free form

        -E[K_A(u, v)] + gamma E[K_U(u, u')]

    The symmetric form has the same limit since both views share a marginal.

    :param n_samples: number of anchors and of pool negatives, >= 1000
    :type n_samples: int
    :rtype: float
    """
    if n_samples < MIN_SAMPLES:
        raise ValueError(f'n_samples must be >= {MIN_SAMPLES}, got {n_samples}')
    if not isinstance(rng, np.random.Generator):
        raise TypeError('rng must be type numpy.random.Generator')
    if spec.variant not in NAMED_VARIANTS and spec.variant != 'kcl':
        raise ValueError(f'no asymptotic form for variant "{spec.variant}"')
    U, V = sample_positive_batch(dist, n_samples, rng)
    pool, _ = sample_positive_batch(dist, n_samples, rng)
    P, Q, N = U.points, V.points, pool.points
    if spec.variant == 'kcl':
        diff = P - Q
        align = -float(np.mean(_kappa(spec.kernel_a, np.einsum('ij,ij->i', diff, diff))))
        value = align + spec.gamma * _mean_cross_kernel(spec.kernel_u, P, N)
    else:
        align = -float(np.mean(np.einsum('ij,ij->i', P, Q))) / spec.tau
        value = align + _mean_log_mean_exp(P, N, spec.tau)
    Logger.info(f'{spec.variant} asymptotic: {value:.6f} from {n_samples} samples')
    return value


def convergence_study(spec, dist, M_list, n_batches=400, n_samples=10000, rng=None, cores=None):
    """Expected loss minus its normalizing constant for a sequence of batch
    sizes, reported against the asymptotic estimate

    :param M_list: strictly increasing batch sizes, each >= 2
    :type M_list: list of int
    :return: DataFrame with columns M, mean, normalized_mean, stderr,
        asymptotic, gap (gap = normalized_mean - asymptotic)
    :rtype: pandas.DataFrame
    """
    if not isinstance(M_list, (list, tuple)) or len(M_list) == 0:
        raise TypeError('M_list must be a non-empty list of int')
    if any(_m < 2 for _m in M_list):
        raise ValueError('every M in M_list must be >= 2')
    if any(_b <= _a for _a, _b in zip(M_list[:-1], M_list[1:])):
        raise ValueError('M_list must be strictly increasing')
    asym = estimate_asymptotic_loss(spec, dist, n_samples=n_samples, rng=rng)
    rows = []
    for M in M_list:
        est = estimate_expected_loss(spec, dist, M, n_batches=n_batches, rng=rng, cores=cores)
        norm = est.mean - normalizing_constant(spec.variant, M)
        rows.append({'M': int(M), 'mean': est.mean, 'normalized_mean': norm,
                     'stderr': est.stderr, 'asymptotic': asym, 'gap': norm - asym})
    return convergence_frame(rows)
