"""
:module: spherecl.core.geometry
:purpose:
    Unit-sphere linear algebra used throughout the package: the
    :class:`~.EmbeddingBatch` container, Gram and squared-distance matrices,
    tangent-space projection and retraction for sphere-constrained descent,
    and rotation-invariant certification of the regular simplex and
    cross-polytope configurations that minimise the contrastive losses.

    Every function here is pure.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from spherecl.util.errors import (
    ZeroRow, NotOnSphere, DimensionMismatch, DegenerateStep, InvalidArity)

Logger = logging.getLogger(__name__)

NORM_TOL = 1e-12
ZERO_ROW_TOL = 1e-300
DEGENERATE_STEP_TOL = 1e-12


@dataclass(frozen=True)
class EmbeddingBatch:
    """M unit-norm points in R^d, one per row of **points**

    :param points: (M, d) array of unit-norm rows
    :type points: numpy.ndarray
    :raises NotOnSphere: if any row norm differs from 1 by more than 1e-12.
        Rows are never silently renormalized, use :meth:`~.normalize_rows`
    """
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f'points must be a 2-D (M, d) array, got ndim={pts.ndim}')
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f'points must have M >= 1 and d >= 1, got shape {pts.shape}')
        if not np.all(np.isfinite(pts)):
            raise ValueError('points contain non-finite values')
        dev = np.abs(np.linalg.norm(pts, axis=1) - 1.)
        if dev.max() > NORM_TOL:
            raise NotOnSphere(f'row {int(dev.argmax())} norm deviates from 1 by {dev.max():.3e}')
        pts.setflags(write=False)
        object.__setattr__(self, 'points', pts)

    @property
    def M(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def __len__(self):
        return self.M

    def tolist(self):
        return self.points.tolist()


@dataclass
class ConfigurationCheck:
    """Outcome of a configuration certification

    :var passed: True iff **max_deviation** <= the tolerance given to the check
        and every structural criterion holds. The cross-polytope check
        also requires a consistent antipodal pairing, reported as
        details['paired'] and not folded into **max_deviation**
    :var max_deviation: largest numeric residual over all criteria
    :var details: named residuals and flags
    """
    passed: bool
    max_deviation: float
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {'passed': bool(self.passed),
                'max_deviation': float(self.max_deviation),
                'details': {_k: float(_v) for _k, _v in self.details.items()}}


def _as_points(X):
    """Accept an :class:`~.EmbeddingBatch` or an array-like and return the array"""
    if isinstance(X, EmbeddingBatch):
        return X.points
    return np.asarray(X, dtype=float)


def normalize_rows(raw):
    """Scale each row of **raw** onto the unit sphere

    :param raw: (M, d) array-like of row vectors
    :type raw: array-like
    :raises ZeroRow: if any row has norm < 1e-300
    :return: batch of the normalized rows
    :rtype: spherecl.core.geometry.EmbeddingBatch
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms < ZERO_ROW_TOL):
        raise ZeroRow(f'row {int(np.argmin(norms))} has zero norm')
    return EmbeddingBatch(raw / norms[:, None])


def _check_dims(A, B):
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f'ambient dimensions differ: {A.shape[1]} != {B.shape[1]}')


def gram(A, B):
    """Matrix of inner products <a_i, b_j>, clamped to [-1, 1]

    :param A: first batch
    :type A: spherecl.core.geometry.EmbeddingBatch
    :param B: second batch
    :type B: spherecl.core.geometry.EmbeddingBatch
    :raises DimensionMismatch: if A.d != B.d
    :return: (M_A, M_B) Gram matrix
    :rtype: numpy.ndarray
    """
    A, B = _as_points(A), _as_points(B)
    _check_dims(A, B)
    return np.clip(A @ B.T, -1., 1.)


def pairwise_sq_dist(A, B):
    """Matrix of squared distances ||a_i - b_j||^2 = 2 - 2<a_i, b_j>,
    with entries in [0, 4]

    :raises DimensionMismatch: if A.d != B.d
    :rtype: numpy.ndarray
    """
    return np.clip(2. - 2. * gram(A, B), 0., 4.)


def tangent_project(u, g):
    """Project **g** onto the tangent space of the sphere at **u**,
    i.e. g - <g, u> u. Works row-wise on (M, d) stacks.

    :param u: unit vector(s)
    :type u: numpy.ndarray
    :param g: ambient vector(s), same shape as **u**
    :type g: numpy.ndarray
    :return: tangent component of **g**
    :rtype: numpy.ndarray
    """
    u = np.asarray(u, dtype=float)
    g = np.asarray(g, dtype=float)
    return g - np.sum(g * u, axis=-1, keepdims=True) * u


def retract(u, step):
    """Retract u + step back onto the sphere by normalization.
    Works row-wise on (M, d) stacks.

    :raises DegenerateStep: if ||u + step|| < 1e-12 for any row
    :return: unit vector(s)
    :rtype: numpy.ndarray
    """
    x = np.asarray(u, dtype=float) + np.asarray(step, dtype=float)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms < DEGENERATE_STEP_TOL):
        raise DegenerateStep('u + step collapsed to the origin')
    return x / norms


def is_regular_simplex(U, tol):
    """Certify that the rows of **U** form a regular (M-1)-simplex centred
    at the origin: zero mean and every off-diagonal Gram entry equal to
    -1/(M-1). Both residuals are rotation-invariant.

    :param U: batch to certify
    :type U: spherecl.core.geometry.EmbeddingBatch
    :param tol: tolerance on both residuals
    :type tol: float
    :raises InvalidArity: if M < 2 or M > d + 1
    :rtype: spherecl.core.geometry.ConfigurationCheck
    """
    P = _as_points(U)
    M, d = P.shape
    if M < 2 or M > d + 1:
        raise InvalidArity(f'a regular simplex needs 2 <= M <= d+1, got M={M}, d={d}')
    mean_res = float(np.linalg.norm(P.mean(axis=0)))
    G = gram(P, P)
    off = ~np.eye(M, dtype=bool)
    gram_res = float(np.max(np.abs(G[off] + 1. / (M - 1))))
    dev = max(mean_res, gram_res)
    return ConfigurationCheck(passed=dev <= tol, max_deviation=dev,
                              details={'mean_norm': mean_res, 'gram_residual': gram_res})


def is_cross_polytope(U, tol):
    """Certify that the rows of **U** form a cross-polytope through the Gram
    signature: each row has exactly one partner at inner product -1 and is
    orthogonal to every other row.

    :param U: batch to certify
    :type U: spherecl.core.geometry.EmbeddingBatch
    :param tol: tolerance on the antipodal and orthogonal residuals
    :type tol: float
    :raises InvalidArity: if M is odd
    :rtype: spherecl.core.geometry.ConfigurationCheck
    """
    P = _as_points(U)
    M = P.shape[0]
    if M % 2 != 0 or M < 2:
        raise InvalidArity(f'a cross-polytope needs an even number of points, got M={M}')
    G = gram(P, P)
    np.fill_diagonal(G, np.inf)
    partner = G.argmin(axis=1)
    rows = np.arange(M)
    anti_res = float(np.max(np.abs(G[rows, partner] + 1.)))
    G[rows, partner] = 0.
    np.fill_diagonal(G, 0.)
    orth_res = float(np.max(np.abs(G)))
    # partner map must be an involution
    paired = bool(np.all(partner[partner] == rows))
    dev = max(anti_res, orth_res)
    return ConfigurationCheck(passed=paired and dev <= tol, max_deviation=dev,
                              details={'antipodal_residual': anti_res,
                                       'orthogonal_residual': orth_res,
                                       'paired': float(paired)})


def alignment_gap(U, V):
    """Largest positive-pair distance max_i ||u_i - v_i||

    :raises DimensionMismatch: if U and V differ in shape
    :rtype: float
    """
    U, V = _as_points(U), _as_points(V)
    if U.shape != V.shape:
        raise DimensionMismatch(f'batch shapes differ: {U.shape} != {V.shape}')
    return float(np.max(np.linalg.norm(U - V, axis=1)))


def regular_simplex(M, d):
    """Analytic regular (M-1)-simplex with M vertices on S^{d-1}

    The centred identity configuration I_M - 1/M is expressed in an
    orthonormal basis of its (M-1)-dimensional span, projected onto the
    sphere and zero-padded to d columns.

    :param M: number of vertices, 2 <= M <= d + 1
    :type M: int
    :param d: ambient dimension
    :type d: int
    :rtype: spherecl.core.geometry.EmbeddingBatch
    """
    if M < 2 or M > d + 1:
        raise InvalidArity(f'a regular simplex needs 2 <= M <= d+1, got M={M}, d={d}')
    C = np.eye(M) - 1. / M
    Us, S, _ = np.linalg.svd(C)
    coords = Us[:, :M - 1] * S[:M - 1]
    pts = np.zeros((M, d))
    pts[:, :M - 1] = coords
    return normalize_rows(pts)


def cross_polytope(d):
    """The 2d points {+e_i, -e_i} in R^d, ordered e_1, -e_1, e_2, -e_2, ...

    :rtype: spherecl.core.geometry.EmbeddingBatch
    """
    pts = np.zeros((2 * d, d))
    for _i in range(d):
        pts[2 * _i, _i] = 1.
        pts[2 * _i + 1, _i] = -1.
    return EmbeddingBatch(pts)
