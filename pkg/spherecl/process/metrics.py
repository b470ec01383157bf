"""
:module: spherecl.process.metrics
:purpose:
    Representation-quality metrics for batches of embeddings on the unit
    sphere: alignment, uniformity, the 1-Wasserstein distance between the
    pairwise similarity distribution and that of the uniform measure, rank
    and effective rank. Also the closed-form inner-product density of the
    uniform measure and the Gaussian-energy bound linking uniformity to the
    Wasserstein distance.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln, logsumexp
from scipy.stats import wasserstein_distance

from spherecl.core.geometry import EmbeddingBatch, gram, pairwise_sq_dist
from spherecl.util.errors import ArityError, DimensionMismatch

Logger = logging.getLogger(__name__)

RANK_EPS = 1e-5
EFFECTIVE_RANK_EPS = 1e-7
MIN_N_REF = 1000


@dataclass
class MetricsReport:
    """Bundle of the metric values for one pair of batches

    :var params: the settings used, {'t', 'n_ref', 'seed'}
    """
    alignment: float
    uniformity: float
    wasserstein: float
    rank: int
    effective_rank: float
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {'alignment': float(self.alignment),
                'uniformity': float(self.uniformity),
                'wasserstein': float(self.wasserstein),
                'rank': int(self.rank),
                'effective_rank': float(self.effective_rank),
                'params': dict(self.params)}


def _points(U):
    if isinstance(U, EmbeddingBatch):
        return U.points
    return EmbeddingBatch(U).points


def _check_rng(rng):
    if not isinstance(rng, np.random.Generator):
        raise TypeError('rng must be type numpy.random.Generator')


def metric_alignment(U, V):
    """Mean squared distance (1/M) sum_i ||u_i - v_i||^2 between positive pairs

    :raises DimensionMismatch: if U and V differ in shape
    :rtype: float
    """
    P, Q = _points(U), _points(V)
    if P.shape != Q.shape:
        raise DimensionMismatch(f'batch shapes differ: {P.shape} != {Q.shape}')
    diff = P - Q
    return float(np.mean(np.sum(diff * diff, axis=1)))


def metric_uniformity(U, t=2.):
    """Log of the mean Gaussian potential over ordered pairs i != j,
    log (1/(M(M-1))) sum_{i != j} exp(-t ||u_i - u_j||^2)

    :param U: batch
    :type U: spherecl.core.geometry.EmbeddingBatch
    :param t: potential scale, defaults to 2.
    :type t: float, optional
    :raises ArityError: if M < 2
    :rtype: float
    """
    P = _points(U)
    M = P.shape[0]
    if M < 2:
        raise ArityError(f'uniformity needs M >= 2, got M={M}')
    if not t > 0:
        raise ValueError(f't must be positive, got {t}')
    D = pairwise_sq_dist(P, P)[~np.eye(M, dtype=bool)]
    return float(logsumexp(-t * D) - np.log(M * (M - 1)))


def similarity_density(s, d):
    """Density of the inner product <u, u'> of two independent uniform
    points on S^{d-1}, proportional to (1 - s^2)^((d-3)/2) on (-1, 1)

    :param s: inner product value(s)
    :type s: float or numpy.ndarray
    :param d: ambient dimension, >= 2
    :type d: int
    :rtype: float or numpy.ndarray
    """
    if d < 2:
        raise ValueError(f'd must be >= 2, got {d}')
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.
    logc = gammaln(d / 2.) - 0.5 * np.log(np.pi) - gammaln((d - 1) / 2.)
    out = np.zeros_like(s)
    out[inside] = np.exp(logc + 0.5 * (d - 3) * np.log1p(-s[inside] ** 2))
    if out.ndim == 0:
        return float(out)
    return out


def sample_similarity_reference(d, n, rng):
    """Draw **n** samples from :meth:`~.similarity_density` as 2B - 1 with
    B ~ Beta((d-1)/2, (d-1)/2)

    :rtype: numpy.ndarray
    """
    if d < 2:
        raise ValueError(f'd must be >= 2, got {d}')
    _check_rng(rng)
    a = (d - 1) / 2.
    return 2. * rng.beta(a, a, size=int(n)) - 1.


def metric_wasserstein_similarity(U, n_ref=100000, rng=None):
    """1-Wasserstein distance between the off-diagonal inner products of
    **U** (pairs i < j) and **n_ref** samples of the uniform-sphere
    inner-product distribution

    :param U: batch with d >= 2
    :type U: spherecl.core.geometry.EmbeddingBatch
    :param n_ref: reference sample count, >= 1000, defaults to 100000
    :type n_ref: int, optional
    :param rng: generator for the reference draw
    :type rng: numpy.random.Generator
    :raises ArityError: if M < 2
    :rtype: float
    """
    P = _points(U)
    M, d = P.shape
    if M < 2:
        raise ArityError(f'wasserstein similarity needs M >= 2, got M={M}')
    if n_ref < MIN_N_REF:
        raise ValueError(f'n_ref must be >= {MIN_N_REF}, got {n_ref}')
    _check_rng(rng)
    sims = gram(P, P)[np.triu_indices(M, k=1)]
    ref = sample_similarity_reference(d, n_ref, rng)
    return float(wasserstein_distance(sims, ref))


def metric_rank(U):
    """Number of singular values of the stacked batch above 1e-5"""
    sv = np.linalg.svd(_points(U), compute_uv=False)
    return int(np.sum(sv > RANK_EPS))


def metric_effective_rank(U):
    """Entropy -sum p_i log p_i of the normalized singular values
    p_i = sigma_i / sum_j sigma_j + 1e-7

    :rtype: float
    """
    sv = np.linalg.svd(_points(U), compute_uv=False)
    p = sv / np.sum(np.abs(sv)) + EFFECTIVE_RANK_EPS
    return float(-np.sum(p * np.log(p)))


def uniform_sphere_energy(d, t=2.):
    """Expected Gaussian potential E exp(-t ||u - u'||^2) for independent
    uniform u, u' on S^{d-1}, by quadrature over the inner-product density

    :rtype: float
    """
    if d < 2:
        raise ValueError(f'd must be >= 2, got {d}')
    logc = gammaln(d / 2.) - 0.5 * np.log(np.pi) - gammaln((d - 1) / 2.)
    alpha = 0.5 * (d - 3)
    val, err = quad(lambda s: np.exp(logc - t * (2. - 2. * s)), -1., 1.,
                    weight='alg', wvar=(alpha, alpha))
    Logger.debug(f'uniform energy d={d} t={t}: {val} (+/- {err})')
    return float(val)


def uniformity_upper_bound(U, t=2., n_ref=100000, rng=None):
    """Upper bound log(2t W_1 + E_unif) on :meth:`~.metric_uniformity`. The
    potential exp(-t(2 - 2s)) is 2t-Lipschitz in the inner product s on
    [-1, 1], so the batch energy exceeds the uniform energy by at most 2t W_1.

    :rtype: float
    """
    P = _points(U)
    w1 = metric_wasserstein_similarity(P, n_ref=n_ref, rng=rng)
    return float(np.log(2. * t * w1 + uniform_sphere_energy(P.shape[1], t)))


def compute_metrics(U, V, t=2., n_ref=100000, seed=0):
    """Evaluate every metric on a pair of batches

    Alignment uses both views, the remaining metrics use **U** only.

    :param seed: seed of the reference draw for the Wasserstein distance
    :type seed: int
    :rtype: spherecl.process.metrics.MetricsReport
    """
    rng = np.random.default_rng(seed)
    return MetricsReport(alignment=metric_alignment(U, V),
                         uniformity=metric_uniformity(U, t),
                         wasserstein=metric_wasserstein_similarity(U, n_ref=n_ref, rng=rng),
                         rank=metric_rank(U),
                         effective_rank=metric_effective_rank(U),
                         params={'t': float(t), 'n_ref': int(n_ref), 'seed': int(seed)})
