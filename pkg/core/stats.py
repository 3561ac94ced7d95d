import math
import logging
import numpy as np
from pandas import DataFrame
from scipy.spatial.distance import cdist


from .fusion import as_matrix, as_vector, key_to_vector
from .exceptions import (
    InvalidArgumentError,
    InvalidDimensionError,
    EmptyDatasetError,
    UnknownAttributeError,
)


logger = logging.getLogger(__name__)


class ClusterStats(object):
    """
    Geometry of the attribute classes in the fused space.

    :param list classes: the class keys, in order of first appearance.
    :param counts: the number of records :math:`N_a` of each class.
    :param radii: the radius :math:`R_a` of each class, i.e. the maximum
    distance of a member from the class centroid.
    :param centroids: the centroid of each class.
    :param d_min: a matrix with the minimum distance between members of two
    different classes; the diagonal is ``inf``.

    The separation metric of a class is
    :math:`\\gamma_a = \\min_{b \\ne a} d_{min}(a, b) / R_a - 1`, and it is
    ``inf`` for singleton classes and classes of radius zero.

    """

    def __init__(self, classes, counts, radii, centroids, d_min):
        self.classes = list(classes)
        self.index = {a: i for i, a in enumerate(self.classes)}
        self.counts = np.asarray(counts, dtype=np.int64)
        self.radii = np.asarray(radii, dtype=np.float64)
        self.centroids = np.asarray(centroids, dtype=np.float64)
        self.d_min = np.asarray(d_min, dtype=np.float64)
        self.N = int(self.counts.sum())
        self.gammas = self.separation()

    def __str__(self):
        return "{} with {} classes over {} records".format(
            self.__class__.__name__, len(self.classes), self.N)

    def __len__(self):
        return len(self.classes)

    def __contains__(self, a):
        return a in self.index

    def separation(self):
        gammas = np.full(len(self.classes), np.inf)
        if len(self.classes) < 2:
            return gammas
        nearest = self.d_min.min(axis=1)
        spread = (self.counts > 1) & (self.radii > 0)
        gammas[spread] = nearest[spread] / self.radii[spread] - 1
        return gammas

    def position(self, a):
        try:
            return self.index[a]
        except (KeyError, TypeError):
            raise UnknownAttributeError(
                "attribute class {!r} not present in the index".format(a))

    def count(self, a):
        return int(self.counts[self.position(a)])

    def radius(self, a):
        return float(self.radii[self.position(a)])

    def gamma(self, a):
        return float(self.gammas[self.position(a)])

    def d_min_between(self, a, b):
        return float(self.d_min[self.position(a), self.position(b)])

    def attribute_vectors(self):
        """The attribute vector of each class, recovered from its key."""
        return np.array([key_to_vector(a) for a in self.classes])

    def nearest_class(self, f):
        """
        Return the key of the class whose attribute vector is closest to
        ``f``; ties go to the class seen first.
        """
        f = as_vector(f, "attribute vector")
        vectors = self.attribute_vectors()
        if vectors.shape[1] != f.shape[0]:
            raise InvalidDimensionError(
                "attribute vector of length {}, classes have length {}".format(
                    f.shape[0], vectors.shape[1])
            )
        return self.classes[int(np.argmin(np.linalg.norm(vectors - f,
                                                         axis=1)))]

    def to_dataframe(self):
        """
        Return a :class:`pandas.DataFrame` with one row per class and the
        columns ``class``, ``N_a``, ``R_a``, ``gamma_a`` and ``d_min``.
        """
        rows = []
        for i, a in enumerate(self.classes):
            rows.append({
                "class": tuple(np.round(key_to_vector(a), 6)),
                "N_a": int(self.counts[i]),
                "R_a": float(self.radii[i]),
                "gamma_a": float(self.gammas[i]),
                "d_min": float(self.d_min[i].min()) if len(self) > 1
                else math.inf,
            })
        return DataFrame(rows)


class MultiClusterStats(ClusterStats):
    """
    The same statistics keyed by attribute combinations; only the
    combinations present in the data are stored.

    :param int F: the number of attributes in a combination.

    """

    def __init__(self, classes, counts, radii, centroids, d_min, F):
        if F < 1:
            raise InvalidArgumentError("F must be >= 1")
        self.F = int(F)
        super().__init__(classes, counts, radii, centroids, d_min)


def group_by_class(classes):
    """
    Return the class keys in order of first appearance and the integer label
    of each record.
    """
    keys = list(dict.fromkeys(classes))
    index = {a: i for i, a in enumerate(keys)}
    labels = np.fromiter((index[a] for a in classes), dtype=np.int64,
                         count=len(classes))
    return keys, labels


def compute_cluster_stats(fused, classes, F=None, chunk_size=None):
    """
    Compute per-class counts, centroids, radii and the exact minimum
    cross-class distances.

    :param fused: the N fused vectors.
    :param list classes: the class key of each record.
    :param int F: when given, return a :class:`MultiClusterStats` over
    combinations of F attributes.
    :param int chunk_size: the number of rows per distance block; by default
    blocks hold about four million distances.
    :return: a :class:`core.stats.ClusterStats` object.

    """
    if len(fused) == 0 or len(classes) == 0:
        raise EmptyDatasetError("cannot compute statistics of an empty set")
    x = as_matrix(fused, "fused vectors")
    if x.shape[0] != len(classes):
        raise InvalidDimensionError(
            "{} fused vectors but {} class labels".format(x.shape[0],
                                                          len(classes)))
    keys, labels = group_by_class(classes)
    n, n_classes = x.shape[0], len(keys)
    # Sort points by class so that every class is a contiguous slice
    order = np.argsort(labels, kind="stable")
    xs, ls = x[order], labels[order]
    counts = np.bincount(ls, minlength=n_classes)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    centroids = np.add.reduceat(xs, starts, axis=0) / counts[:, None]
    dist = np.linalg.norm(xs - centroids[ls], axis=1)
    radii = np.maximum.reduceat(dist, starts)
    # The mean of coincident points may differ from them by a rounding error:
    # detect coincident classes exactly.
    same_as_first = np.all(xs == xs[starts[ls]], axis=1)
    coincident = np.logical_and.reduceat(same_as_first, starts)
    radii[coincident] = 0.0

    d_min = np.full((n_classes, n_classes), np.inf)
    if n_classes > 1:
        if chunk_size is None:
            chunk_size = max(1, (1 << 22) // n)
        for start in range(0, n, chunk_size):
            block = cdist(xs[start:start + chunk_size], xs)
            # Minimum distance of each row to each class
            per_class = np.minimum.reduceat(block, starts, axis=1)
            np.minimum.at(d_min, ls[start:start + chunk_size], per_class)
        np.fill_diagonal(d_min, np.inf)

    logger.debug("cluster statistics over %d records and %d classes", n,
                 n_classes)
    if F is None:
        return ClusterStats(keys, counts, radii, centroids, d_min)
    return MultiClusterStats(keys, counts, radii, centroids, d_min, F)


def _check_k_eps(k, eps):
    if int(k) != k or k < 1:
        raise InvalidArgumentError("k must be a positive integer, got "
                                   "{}".format(k))
    if not (0 < eps <= 1):
        raise InvalidArgumentError("eps must be in (0, 1], got "
                                   "{}".format(eps))


def ceil_count(x):
    # Absorb the rounding noise of the logarithm before taking the ceiling
    return int(math.ceil(round(x, 9)))


def _candidate_size(k, eps, stats, i, F=1):
    n_a = int(stats.counts[i])
    if n_a == 1 or stats.radii[i] == 0:
        return min(k, n_a)
    gamma = float(stats.gammas[i])
    if gamma <= 0:
        # Overlapping classes: no guarantee short of an exhaustive scan
        logger.warning("class separation %.3g <= 0, candidate set set to "
                       "the whole dataset", gamma)
        return stats.N
    log_term = -math.log(eps)
    value = k * (1 + log_term / (gamma ** 2 * F) * (stats.N - n_a) / n_a)
    return max(ceil_count(value), min(k, n_a))


def candidate_size_single(k, eps, stats, a):
    """
    Number of fused-space neighbours to retrieve so that the true filtered
    top-k of a query with attribute class ``a`` is among them with
    probability at least ``1 - eps``:

    .. math::

        k' = \\left\\lceil k \\left(1 + \\frac{\\ln(1/\\epsilon)}{\\gamma_a^2}
        \\frac{N - N_a}{N_a}\\right) \\right\\rceil

    Singleton classes and classes of radius zero get :math:`\\min(k, N_a)`.

    :param int k: the number of results.
    :param float eps: the failure probability.
    :param stats: a :class:`core.stats.ClusterStats` object.
    :param a: the class key.
    :rtype: int

    """
    _check_k_eps(k, eps)
    return _candidate_size(int(k), eps, stats, stats.position(a))


def candidate_size_multi(k, eps, stats, combo, F):
    """
    Same as :func:`candidate_size_single` for a combination of F attributes;
    the separation term is multiplied by F.
    """
    _check_k_eps(k, eps)
    if F != getattr(stats, "F", 1):
        raise InvalidArgumentError(
            "F={} does not match the statistics (F={})".format(
                F, getattr(stats, "F", 1)))
    return _candidate_size(int(k), eps, stats, stats.position(combo), F)


def _check_probs(stats, class_probs):
    total = sum(class_probs.values())
    if abs(total - 1) > 1e-9:
        raise InvalidArgumentError(
            "class probabilities sum to {}, not 1".format(total))
    for a, p in class_probs.items():
        if p > 0 and a not in stats:
            raise UnknownAttributeError(
                "probability mass on unknown class {!r}".format(a))


def expected_candidate_size(k, eps, stats, class_probs):
    """
    The expected candidate set size of a random query,
    :math:`E[k'] = \\sum_a P(a) k'_a`.

    :param dict class_probs: the probability of each class.
    :rtype: float

    """
    _check_probs(stats, class_probs)
    return float(sum(
        p * candidate_size_single(k, eps, stats, a)
        for a, p in class_probs.items() if p > 0
    ))


def expected_candidate_size_approx(k, eps, stats, class_probs):
    """
    The approximation of :func:`expected_candidate_size` for well separated
    classes, :math:`k (1 + \\sum_a P(a) \\min(\\epsilon/N_a, (N-N_a)/N_a))`.
    """
    _check_probs(stats, class_probs)
    extra = 0.0
    for a, p in class_probs.items():
        if p > 0:
            n_a = stats.count(a)
            extra += p * min(eps / n_a, (stats.N - n_a) / n_a)
    return k * (1 + extra)


def class_probabilities(stats):
    """Empirical class frequencies :math:`N_a / N`."""
    return {a: int(c) / stats.N for a, c in zip(stats.classes, stats.counts)}
