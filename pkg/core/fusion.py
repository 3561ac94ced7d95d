"""
The fusion transformation maps a content vector and an attribute vector to a
single fused vector with the same dimension as the content vector.
The content vector is split in blocks of the attribute dimension and every
block is shifted by the scaled attribute vector:

.. math::

    \\Psi(v, f, \\alpha, \\beta) = \\left[ \\frac{v^{(1)} - \\alpha f}{\\beta},
    \\dots, \\frac{v^{(\\lceil d/m \\rceil)} - \\alpha f}{\\beta} \\right]

Records sharing the attribute vector keep their mutual distances up to the
factor :math:`1/\\beta`, whereas records with different attributes are pushed
apart by a quantity that grows with :math:`\\alpha`.
"""
import math
import logging
import numpy as np
from dataclasses import dataclass
from scipy.spatial.distance import cdist


from .exceptions import (
    InvalidDimensionError,
    InvalidArgumentError,
    EmptyDatasetError,
    DegenerateSeparationError,
)


logger = logging.getLogger(__name__)

# Smallest margin above 1 for alpha and beta.
ETA_MIN = 1e-6
# Returned by estimate_extremes when the dataset holds one attribute class.
NO_SEPARATION_NEEDED = math.inf


def as_matrix(vectors, name="vectors"):
    """Stack a list of vectors in a 2-D float64 array and check it is finite."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2:
        raise InvalidDimensionError(
            "{} must be a list of vectors, got shape {}".format(name, x.shape)
        )
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("{} contain non-finite values".format(name))
    return x


def as_vector(vector, name="vector"):
    x = np.asarray(vector, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("{} contains non-finite values".format(name))
    return x


def class_keys(attrs):
    """
    Return one hashable key per attribute vector. Two records belong to the
    same attribute class iff their attribute vectors are bitwise equal.

    :param attrs: an array of shape (N, m).
    :return: a list of ``bytes`` keys.
    :rtype: list

    """
    attrs = np.ascontiguousarray(attrs, dtype=np.float64)
    if attrs.ndim == 1:
        attrs = attrs.reshape(1, -1)
    return [row.tobytes() for row in attrs]


def key_to_vector(key):
    return np.frombuffer(key, dtype=np.float64).copy()


@dataclass(frozen=True)
class FusionParams:
    """
    Parameters governing one application of the fusion transformation.

    :param float alpha: the attribute weight, strictly greater than 1.
    :param float beta: the scale factor, strictly greater than 1.
    :param float epsilon_f: the maximum fused distance between records that
    share the attribute.
    :param float delta_max: the maximum content distance in the dataset.
    :param float sigma_min: the minimum distance between different attribute
    vectors; ``inf`` when the dataset holds a single attribute class.
    :param int d: the content dimension.
    :param int m: the attribute dimension.
    :param bool overridden: True when alpha and beta were given explicitly
    rather than selected from the dataset extremes.

    """

    alpha: float
    beta: float
    epsilon_f: float
    delta_max: float
    sigma_min: float
    d: int
    m: int
    overridden: bool = False

    def __post_init__(self):
        if not (1 <= self.m <= self.d):
            raise InvalidDimensionError(
                "attribute dimension m={} must be in [1, d={}]".format(
                    self.m, self.d)
            )
        if not self.alpha > 1:
            raise InvalidArgumentError(
                "alpha must be > 1, got {}".format(self.alpha))
        if not self.beta > 1:
            raise InvalidArgumentError(
                "beta must be > 1, got {}".format(self.beta))
        if not self.epsilon_f > 0:
            raise InvalidArgumentError("epsilon_f must be > 0")
        if not self.delta_max >= 0:
            raise InvalidArgumentError("delta_max must be >= 0")
        if not self.sigma_min > 0:
            raise InvalidArgumentError("sigma_min must be > 0")

    @classmethod
    def override(cls, alpha, beta, d, m, epsilon_f=1.0, delta_max=0.0,
                 sigma_min=NO_SEPARATION_NEEDED):
        """Explicit parameters, exempt from the bound check."""
        return cls(
            alpha=float(alpha),
            beta=float(beta),
            epsilon_f=float(epsilon_f),
            delta_max=float(delta_max),
            sigma_min=float(sigma_min),
            d=int(d),
            m=int(m),
            overridden=True,
        )

    @property
    def n_blocks(self):
        return -(-self.d // self.m)

    def check_bounds(self):
        """
        Check that alpha and beta satisfy the separation bounds at the stored
        extremes. Overridden parameters always pass.

        :rtype: bool
        """
        if self.overridden:
            return True
        tol = 1e-12
        beta_ok = self.beta * (1 + tol) >= self.delta_max / self.epsilon_f
        lb = alpha_lower_bound(self.beta, self.delta_max, self.sigma_min,
                               self.d, self.m, self.epsilon_f)
        return beta_ok and self.alpha * (1 + tol) >= lb


def block_partition(v, m):
    """
    Split the content vector in blocks of length ``m``; when ``m`` does not
    divide the dimension, the last block is shorter.

    :param v: the content vector.
    :param int m: the attribute dimension.
    :return: the list of blocks.
    :rtype: list

    """
    v = as_vector(v)
    d = v.shape[0]
    if m < 1 or m > d:
        raise InvalidDimensionError(
            "attribute dimension m={} must be in [1, d={}]".format(m, d))
    return np.split(v, range(m, d, m))


def tile_attributes(f, d):
    """Repeat the attribute vector block-wise up to length d. The trailing
    short block receives the leading prefix of f."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 1:
        return np.resize(f, d)
    reps = -(-d // f.shape[1])
    return np.tile(f, (1, reps))[:, :d]


def psi_transform(v, f, p):
    """
    Apply the fusion transformation to a single record.

    :param v: the content vector of length ``p.d``.
    :param f: the attribute vector of length ``p.m``.
    :param p: a :class:`core.fusion.FusionParams` object.
    :return: the fused vector.
    :rtype: numpy array

    """
    v = as_vector(v, "content vector")
    f = as_vector(f, "attribute vector")
    if v.shape[0] != p.d or f.shape[0] != p.m:
        raise InvalidDimensionError(
            "expected d={} and m={}, got {} and {}".format(
                p.d, p.m, v.shape[0], f.shape[0])
        )
    return (v - p.alpha * tile_attributes(f, p.d)) / p.beta


def psi_transform_batch(contents, attrs, p):
    """Row-wise :func:`psi_transform` of N records at once."""
    contents = as_matrix(contents, "content vectors")
    attrs = as_matrix(attrs, "attribute vectors")
    if contents.shape[0] != attrs.shape[0]:
        raise InvalidDimensionError(
            "{} content vectors but {} attribute vectors".format(
                contents.shape[0], attrs.shape[0])
        )
    if contents.shape[1] != p.d or attrs.shape[1] != p.m:
        raise InvalidDimensionError(
            "expected d={} and m={}, got {} and {}".format(
                p.d, p.m, contents.shape[1], attrs.shape[1])
        )
    return (contents - p.alpha * tile_attributes(attrs, p.d)) / p.beta


def alpha_lower_bound(beta, delta_max, sigma_min, d, m, epsilon_f):
    """
    The smallest alpha separating the attribute clusters, in the expanded
    form :math:`(\\beta\\delta_{max} + \\beta^2\\epsilon_f) /
    (\\sigma_{min}\\sqrt{d/m})`. It is zero when all content vectors coincide
    or when a single attribute class exists.
    """
    if delta_max == 0 or math.isinf(sigma_min):
        return 0.0
    scale = sigma_min * math.sqrt(d / m)
    return (beta * delta_max + beta ** 2 * epsilon_f) / scale


def optimal_corollary_alpha(delta_max, sigma_min, d, m, epsilon_f):
    """
    The closed form printed by the optimality corollary, which omits beta.
    It is kept for comparison only: :func:`select_parameters` uses the
    theorem bound.
    """
    if math.isinf(sigma_min):
        return 0.0
    return delta_max / (sigma_min * math.sqrt(d / m)) * (1 + epsilon_f)


def select_parameters(delta_max, sigma_min, d, m, epsilon_f):
    """
    Select the minimal alpha and beta that give epsilon_f-bounded, separated
    attribute clusters. Both are floored at ``1 + ETA_MIN``.

    :param float delta_max: the maximum content distance.
    :param float sigma_min: the minimum distance between different attribute
    vectors, or :data:`NO_SEPARATION_NEEDED`.
    :param int d: the content dimension.
    :param int m: the attribute dimension.
    :param float epsilon_f: the bound on intra-cluster fused distances.
    :return: a :class:`core.fusion.FusionParams` object.

    """
    if not (1 <= m <= d):
        raise InvalidDimensionError(
            "attribute dimension m={} must be in [1, d={}]".format(m, d))
    if delta_max < 0:
        raise InvalidArgumentError("delta_max must be >= 0")
    if epsilon_f <= 0:
        raise InvalidArgumentError("epsilon_f must be > 0")
    if sigma_min <= 0:
        raise DegenerateSeparationError(
            "sigma_min is {}: distinct attribute classes share the same "
            "vector".format(sigma_min)
        )
    beta = max(delta_max / epsilon_f, 1 + ETA_MIN)
    alpha = max(
        alpha_lower_bound(beta, delta_max, sigma_min, d, m, epsilon_f),
        1 + ETA_MIN
    )
    logger.debug("selected alpha=%.6g beta=%.6g (delta_max=%.6g, "
                 "sigma_min=%.6g)", alpha, beta, delta_max, sigma_min)
    return FusionParams(
        alpha=alpha,
        beta=beta,
        epsilon_f=float(epsilon_f),
        delta_max=float(delta_max),
        sigma_min=float(sigma_min),
        d=int(d),
        m=int(m),
    )


def max_pairwise_distance(x, chunk_size=1024):
    """Diameter of a point set, scanning ``chunk_size`` rows at a time."""
    n = x.shape[0]
    best = 0.0
    for start in range(0, n, chunk_size):
        block = x[start:start + chunk_size]
        # Only pairs (i, j) with j >= start are needed
        best = max(best, float(cdist(block, x[start:]).max()))
    return best


def min_pairwise_distance(x, chunk_size=1024):
    """Smallest distance between two different rows of x (inf if n < 2)."""
    n = x.shape[0]
    best = math.inf
    for start in range(0, n - 1, chunk_size):
        block = x[start:start + chunk_size]
        dist = cdist(block, x[start:])
        # Mask the pairs (i, i) and the lower triangle of the block
        rows = np.arange(block.shape[0])
        mask = np.arange(dist.shape[1])[None, :] <= rows[:, None]
        dist[mask] = math.inf
        best = min(best, float(dist.min()))
    return best


def estimate_extremes(contents, attrs, chunk_size=1024):
    """
    Compute the maximum content distance and the minimum distance between
    attribute vectors of different classes.

    :param contents: the N content vectors.
    :param attrs: the N attribute vectors.
    :param int chunk_size: rows per distance block.
    :return: the tuple ``(delta_max, sigma_min)``; ``sigma_min`` is
    :data:`NO_SEPARATION_NEEDED` when a single attribute class exists.
    :rtype: tuple

    """
    if len(contents) == 0:
        raise EmptyDatasetError("cannot estimate extremes of an empty dataset")
    contents = as_matrix(contents, "content vectors")
    attrs = as_matrix(attrs, "attribute vectors")
    if contents.shape[0] != attrs.shape[0]:
        raise InvalidDimensionError(
            "{} content vectors but {} attribute vectors".format(
                contents.shape[0], attrs.shape[0])
        )
    delta_max = max_pairwise_distance(contents, chunk_size)
    # One representative per attribute class
    representatives = {}
    for key, row in zip(class_keys(attrs), attrs):
        representatives.setdefault(key, row)
    if len(representatives) == 1:
        sigma_min = NO_SEPARATION_NEEDED
    else:
        sigma_min = min_pairwise_distance(
            np.array(list(representatives.values())), chunk_size)
    logger.debug("extremes over %d records and %d classes: delta_max=%.6g, "
                 "sigma_min=%.6g", contents.shape[0], len(representatives),
                 delta_max, sigma_min)
    return delta_max, sigma_min
