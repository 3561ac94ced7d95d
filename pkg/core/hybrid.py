"""
Single-attribute hybrid index. Offline, every record is fused with its
attribute vector and inserted in a nearest neighbour backend; online, the
query is fused with the requested attribute, ``k'`` candidates are retrieved
and re-ranked by the combined score :math:`\\alpha s_f + \\beta s_v`.
"""
import math
import logging
import numpy as np
from itertools import repeat
from pandas import DataFrame
from dataclasses import dataclass, field
from multiprocessing import Pool, cpu_count


from .backend import backend_build
from .stats import (
    compute_cluster_stats,
    candidate_size_single,
    ceil_count,
)
from .exceptions import (
    InvalidArgumentError,
    InvalidDimensionError,
    EmptyDatasetError,
)
from .fusion import (
    FusionParams,
    as_matrix,
    as_vector,
    class_keys,
    estimate_extremes,
    psi_transform,
    psi_transform_batch,
    select_parameters,
)


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResultRow:
    id: int
    content_distance: float
    attribute_distance: float
    score: float


@dataclass
class QueryResult:
    """
    The ranked answer to a query.

    :param list rows: :class:`core.hybrid.ResultRow` objects in ascending
    order of score.
    :param int k_prime: the number of candidates retrieved from the backend.
    :param bool truncated: True when fewer than k rows survived.

    """

    rows: list = field(default_factory=list)
    k_prime: int = 0
    truncated: bool = False

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    @property
    def ids(self):
        return [r.id for r in self.rows]

    def to_dataframe(self):
        return DataFrame(
            [
                {
                    "id": r.id,
                    "s_v": r.content_distance,
                    "s_f": r.attribute_distance,
                    "score": r.score,
                } for r in self.rows
            ],
            columns=["id", "s_v", "s_f", "score"],
        )


def check_k(k):
    if int(k) != k or k < 1:
        raise InvalidArgumentError("k must be a positive integer, got "
                                   "{}".format(k))
    return int(k)


def check_records(contents, attrs):
    """Return contents and attributes as float arrays, checking they align."""
    if len(contents) == 0:
        raise EmptyDatasetError("cannot index an empty dataset")
    contents = as_matrix(contents, "content vectors")
    attrs = as_matrix(attrs, "attribute vectors")
    if contents.shape[0] != attrs.shape[0]:
        raise InvalidDimensionError(
            "{} content vectors but {} attribute vectors".format(
                contents.shape[0], attrs.shape[0]))
    if attrs.shape[1] > contents.shape[1]:
        raise InvalidDimensionError(
            "attribute dimension {} exceeds content dimension {}".format(
                attrs.shape[1], contents.shape[1]))
    return contents, attrs


def fit_params(contents, attrs, epsilon_f=1.0, alpha=None, beta=None):
    """
    Parameters of one fusion: the explicit ``alpha`` and ``beta`` when both
    are given, otherwise the minimal values for the dataset extremes.
    """
    d, m = contents.shape[1], attrs.shape[1]
    if alpha is not None or beta is not None:
        if alpha is None or beta is None:
            raise InvalidArgumentError("alpha and beta overrides go together")
        return FusionParams.override(alpha, beta, d, m, epsilon_f)
    delta_max, sigma_min = estimate_extremes(contents, attrs)
    return select_parameters(delta_max, sigma_min, d, m, epsilon_f)


def rerank(ids, contents, attrs, q, query_attrs, weights, content_weight, k,
           exact):
    """
    Score the candidates ``ids`` and return the k best rows.

    :param list weights: one weight per attribute block of ``attrs``.
    :param list query_attrs: the query attribute vectors, aligned with the
    blocks.
    :param float content_weight: the weight of the content distance.
    :param bool exact: drop candidates whose attribute distance is not zero.

    """
    ids = np.asarray(ids, dtype=np.int64)
    s_v = np.linalg.norm(contents[ids] - q, axis=1)
    score = content_weight * s_v
    s_f = np.zeros_like(s_v)
    keep = np.ones(ids.shape[0], dtype=bool)
    for block, f, w in zip(attrs, query_attrs, weights):
        dist = np.linalg.norm(block[ids] - f, axis=1)
        if exact:
            keep &= dist == 0
        s_f = s_f + dist
        score = score + w * dist
    ids, s_v, s_f, score = ids[keep], s_v[keep], s_f[keep], score[keep]
    order = np.lexsort((ids, score))[:k]
    return [
        ResultRow(int(ids[i]), float(s_v[i]), float(s_f[i]), float(score[i]))
        for i in order
    ]


class HybridIndex(object):
    """
    A fused index over records with one attribute vector each.

    :param params: the :class:`core.fusion.FusionParams` used to fuse.
    :param stats: the :class:`core.stats.ClusterStats` of the fused points.
    :param backend: the :class:`core.backend.Backend` holding the fused
    points.
    :param contents: the N content vectors.
    :param attrs: the N attribute vectors.

    """

    def __init__(self, params, stats, backend, contents, attrs):
        assert backend.points.shape[0] == contents.shape[0]
        self.params = params
        self.stats = stats
        self.backend = backend
        self.contents = contents
        self.attrs = attrs
        self.N = contents.shape[0]

    def __str__(self):
        return "HybridIndex over {} records (alpha={:.4g}, beta={:.4g}, " \
            "{} classes, {} backend)".format(self.N, self.params.alpha,
                                             self.params.beta, len(self.stats),
                                             self.backend.kind)

    def candidate_size(self, k, eps, f, attr_approx):
        """
        The candidate set size for a query attribute ``f``, or ``None`` when
        the class is unknown and exact filtering is requested.
        """
        key = class_keys(f)[0]
        if key in self.stats:
            k_prime = candidate_size_single(k, eps, self.stats, key)
        elif not attr_approx:
            return None
        else:
            # Unknown class: relax to the nearest known one
            nearest = self.stats.nearest_class(f)
            k_prime = max(
                ceil_count(k * (1 - math.log(eps))),
                candidate_size_single(k, eps, self.stats, nearest),
            )
            logger.warning("attribute class %s unknown, relaxing to the "
                           "nearest class with k'=%d", np.round(f, 6), k_prime)
        if attr_approx:
            k_prime = max(k_prime, k)
        if k_prime > self.N:
            logger.debug("k'=%d capped at N=%d", k_prime, self.N)
        return min(k_prime, self.N)

    def query(self, q, f, k, eps=0.05, attr_approx=False, ef=None):
        """
        Top-k records by combined score for content ``q`` and attribute
        ``f``.

        :param q: the query content vector.
        :param f: the query attribute vector.
        :param int k: the number of results.
        :param float eps: the failure probability used to size ``k'``.
        :param bool attr_approx: when False only records with attribute
        exactly ``f`` are returned, otherwise records with other attributes
        may fill the result.
        :param int ef: the beam width of the graph backend.
        :return: a :class:`core.hybrid.QueryResult` object.

        """
        k = check_k(k)
        q = as_vector(q, "query content")
        f = as_vector(f, "query attribute")
        if q.shape[0] != self.params.d or f.shape[0] != self.params.m:
            raise InvalidDimensionError(
                "query has d={} and m={}, index has d={} and m={}".format(
                    q.shape[0], f.shape[0], self.params.d, self.params.m))
        k_prime = self.candidate_size(k, eps, f, attr_approx)
        if k_prime is None:
            logger.warning("attribute class %s unknown, empty result",
                           np.round(f, 6))
            return QueryResult([], 0, True)
        hits = self.backend.search(psi_transform(q, f, self.params), k_prime,
                                   ef=ef)
        rows = rerank(
            [h.id for h in hits], self.contents, [self.attrs], q, [f],
            [self.params.alpha], self.params.beta, k, not attr_approx)
        logger.debug("query k=%d k'=%d returned %d rows", k, k_prime,
                     len(rows))
        return QueryResult(rows, k_prime, len(rows) < k)

    def query_batch(self, queries, attrs, k, eps=0.05, attr_approx=False,
                    parallel=False):
        """Run :meth:`query` on every (query, attribute) pair."""
        n = len(queries)
        if parallel:
            with Pool(processes=cpu_count()) as pool:
                return pool.starmap(
                    self.query,
                    zip(queries, attrs, repeat(k, n), repeat(eps, n),
                        repeat(attr_approx, n))
                )
        return [self.query(q, f, k, eps, attr_approx)
                for q, f in zip(queries, attrs)]

    def stats_table(self):
        return self.stats.to_dataframe()


def build_index(contents, attrs, epsilon_f=1.0, backend="flat",
                backend_params=None, alpha=None, beta=None, progress=False):
    """
    Fuse and index the records.

    :param contents: the N content vectors.
    :param attrs: the N attribute vectors.
    :param float epsilon_f: the bound on intra-class fused distances.
    :param str backend: ``flat`` or ``graph``.
    :param dict backend_params: keyword arguments of the backend.
    :param float alpha: explicit alpha (requires ``beta``).
    :param float beta: explicit beta (requires ``alpha``).
    :param bool progress: show progress bars.
    :return: a :class:`core.hybrid.HybridIndex` object.

    """
    contents, attrs = check_records(contents, attrs)
    params = fit_params(contents, attrs, epsilon_f, alpha, beta)
    fused = psi_transform_batch(contents, attrs, params)
    stats = compute_cluster_stats(fused, class_keys(attrs))
    handle = backend_build(fused, backend, progress=progress,
                           **(backend_params or {}))
    logger.info("hybrid index over %d records: alpha=%.6g beta=%.6g, %d "
                "classes", contents.shape[0], params.alpha, params.beta,
                len(stats))
    return HybridIndex(params, stats, handle, contents, attrs)


def query(idx, q, f, k, eps=0.05, attr_approx=False, ef=None):
    return idx.query(q, f, k, eps=eps, attr_approx=attr_approx, ef=ef)
