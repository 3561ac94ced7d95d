"""
Records with several attributes are fused by applying the transformation
once per attribute, each level on top of the previous fused space and with
its own parameters. Attributes are applied in reverse priority order, so the
attribute with the highest priority is applied last and weighs the most in
the final space.

The priority order lists attribute indices from the highest priority to the
lowest. Every level keeps a snapshot of the fused vectors it produced, so a
priority change or a new attribute only recomputes the levels that follow the
part of the application order shared with the previous chain.
"""
import copy
import math
import logging
import numpy as np
from dataclasses import dataclass, replace


from .backend import backend_build
from .fusion import as_matrix, as_vector, class_keys, psi_transform, \
    psi_transform_batch
from .hybrid import QueryResult, check_k, fit_params, rerank
from .stats import (
    compute_cluster_stats,
    candidate_size_multi,
    ceil_count,
)
from .exceptions import (
    InvalidArgumentError,
    InvalidDimensionError,
    InvalidPriorityError,
    EmptyDatasetError,
)


logger = logging.getLogger(__name__)

VARIANCE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Level:
    """One fusion step: the attribute index it applies and its parameters."""

    attribute: int
    params: object


def check_priority(priority, F):
    """Return the priority order as a tuple, checking it is a permutation of
    the attribute indices ``0..F-1``."""
    try:
        priority = tuple(int(a) for a in priority)
    except (TypeError, ValueError):
        raise InvalidPriorityError("priority must list attribute indices")
    if sorted(priority) != list(range(F)):
        raise InvalidPriorityError(
            "priority {} is not a permutation of 0..{}".format(priority,
                                                              F - 1))
    return priority


def divergence_index(old, new):
    """
    The 1-based index :math:`j = \\min\\{k : \\pi(i) = \\pi'(i)\\ \\forall
    i \\ge k\\}`. The levels applying the attributes ranked ``j..F`` are
    shared, the other ``j - 1`` are recomputed.
    """
    F = len(old)
    j = F + 1
    while j > 1 and old[j - 2] == new[j - 2]:
        j -= 1
    return j


def combination_keys(attrs_list):
    """One key per record, joining its attribute keys in attribute order."""
    if not attrs_list:
        return None
    per_attribute = [class_keys(a) for a in attrs_list]
    return [b"".join(keys) for keys in zip(*per_attribute)]


class TransformChain(object):
    """
    A multi-attribute fused index.

    :param contents: the N content vectors.
    :param list attrs_list: one (N, m_j) array per attribute.
    :param tuple priority: the attribute indices from the highest priority to
    the lowest.
    :param list levels: the :class:`core.multi.Level` objects in application
    order.
    :param list snapshots: the fused vectors before the first level and after
    each level.
    :param dict settings: the build settings, reused by the updates.

    """

    def __init__(self, contents, attrs_list, priority, levels, snapshots,
                 settings):
        assert len(snapshots) == len(levels) + 1
        self.contents = contents
        self.attrs_list = attrs_list
        self.priority = priority
        self.levels = levels
        self.snapshots = snapshots
        self.settings = settings
        self.F = len(attrs_list)
        self.N = contents.shape[0]
        self.recomputed_levels = len(levels)
        keys = combination_keys(attrs_list)
        if keys is None:
            keys = [b""] * self.N
        self.stats = compute_cluster_stats(self.fused, keys,
                                           F=self.F if self.F else None)
        self.backend = backend_build(
            self.fused, settings["backend"],
            progress=settings.get("progress", False),
            **(settings.get("backend_params") or {}))

    def __str__(self):
        return "TransformChain of {} levels over {} records, priority " \
            "{}".format(self.F, self.N, self.priority)

    @property
    def fused(self):
        return self.snapshots[-1]

    @property
    def application_order(self):
        return tuple(reversed(self.priority))

    def weights(self):
        """
        The re-ranking weights: one per attribute index, :math:`\\alpha_j`
        times the product of the betas applied before level j, and the
        content weight, the product of all betas.
        """
        weights = [0.0] * self.F
        scale = 1.0
        for level in self.levels:
            weights[level.attribute] = level.params.alpha * scale
            scale *= level.params.beta
        return weights, scale

    def transform_query(self, q, query_attrs):
        x = as_vector(q, "query content")
        for level in self.levels:
            x = psi_transform(x, query_attrs[level.attribute], level.params)
        return x

    def _check_query_attrs(self, query_attrs):
        if query_attrs is None or len(query_attrs) != self.F:
            raise InvalidArgumentError(
                "expected {} query attributes, got {}".format(
                    self.F, 0 if query_attrs is None else len(query_attrs)))
        return [as_vector(f, "query attribute") for f in query_attrs]

    def candidate_size(self, k, eps, query_attrs, attr_approx):
        if self.F == 0:
            return min(k, self.N)
        key = b"".join(class_keys(f)[0] for f in query_attrs)
        if key in self.stats:
            k_prime = candidate_size_multi(k, eps, self.stats, key, self.F)
        elif not attr_approx:
            return None
        else:
            nearest = self.stats.nearest_class(np.concatenate(query_attrs))
            k_prime = max(
                ceil_count(k * (1 - math.log(eps))),
                candidate_size_multi(k, eps, self.stats, nearest, self.F),
            )
            logger.warning("attribute combination unknown, relaxing to the "
                           "nearest one with k'=%d", k_prime)
        if attr_approx:
            k_prime = max(k_prime, k)
        return min(k_prime, self.N)

    def query(self, q, query_attrs, k, eps=0.05, attr_approx=False, ef=None):
        """
        Top-k records for content ``q`` and one attribute vector per
        attribute, listed in attribute order.

        :return: a :class:`core.hybrid.QueryResult` object.
        """
        k = check_k(k)
        query_attrs = self._check_query_attrs(query_attrs)
        q = as_vector(q, "query content")
        if q.shape[0] != self.contents.shape[1]:
            raise InvalidDimensionError(
                "query of dimension {}, index has dimension {}".format(
                    q.shape[0], self.contents.shape[1]))
        k_prime = self.candidate_size(k, eps, query_attrs, attr_approx)
        if k_prime is None:
            logger.warning("attribute combination unknown, empty result")
            return QueryResult([], 0, True)
        hits = self.backend.search(self.transform_query(q, query_attrs),
                                   k_prime, ef=ef)
        weights, content_weight = self.weights()
        rows = rerank([h.id for h in hits], self.contents, self.attrs_list, q,
                      query_attrs, weights, content_weight, k,
                      not attr_approx)
        return QueryResult(rows, k_prime, len(rows) < k)

    def attribute_distances(self, ids, query_attrs):
        """An array (len(ids), F) of attribute distances to the query."""
        ids = np.asarray(ids, dtype=np.int64)
        return np.column_stack([
            np.linalg.norm(a[ids] - np.asarray(f, dtype=np.float64), axis=1)
            for a, f in zip(self.attrs_list, query_attrs)
        ]) if self.F else np.zeros((ids.shape[0], 0))

    def match_counts(self, ids, query_attrs):
        """The number of attributes of each record equal to the query's."""
        return (self.attribute_distances(ids, query_attrs) == 0).sum(axis=1)


def fit_level(x, attrs, attribute, settings):
    """Parameters of the level applying ``attribute`` over the space x."""
    overrides = settings.get("overrides")
    if overrides is not None:
        alpha, beta = overrides
        return fit_params(x, attrs, settings["epsilon_f"], alpha, beta)
    params = fit_params(x, attrs, settings["epsilon_f"])
    multiplier = settings.get("alpha_multiplier", 1.0)
    if multiplier != 1.0:
        params = replace(params, alpha=params.alpha * multiplier)
    return params


def apply_levels(snapshots, attrs_list, order, settings):
    """
    Extend ``snapshots`` by applying the attributes in ``order``.

    :return: the new levels and the extended snapshots.
    :rtype: tuple

    """
    levels, snapshots = [], list(snapshots)
    for attribute in order:
        x = snapshots[-1]
        attrs = attrs_list[attribute]
        params = fit_level(x, attrs, attribute, settings)
        snapshots.append(psi_transform_batch(x, attrs, params))
        levels.append(Level(attribute, params))
        logger.info("level %d applies attribute %d: alpha=%.6g beta=%.6g",
                    len(snapshots) - 1, attribute, params.alpha, params.beta)
    return levels, snapshots


def _check_attrs_list(contents, attrs_list):
    checked = []
    for j, attrs in enumerate(attrs_list):
        attrs = as_matrix(attrs, "attribute vectors")
        if attrs.shape[0] != contents.shape[0]:
            raise InvalidDimensionError(
                "attribute {} has {} rows for {} records".format(
                    j, attrs.shape[0], contents.shape[0]))
        if attrs.shape[1] > contents.shape[1]:
            raise InvalidDimensionError(
                "attribute {} has dimension {} > {}".format(
                    j, attrs.shape[1], contents.shape[1]))
        checked.append(attrs)
    return checked


def build_chain(contents, attrs_list, priority=None, epsilon_f=1.0,
                backend="flat", backend_params=None, alpha_multiplier=1.0,
                overrides=None, progress=False):
    """
    Fuse the records attribute by attribute and index the final vectors.

    :param contents: the N content vectors.
    :param list attrs_list: one (N, m_j) array per attribute.
    :param priority: the attribute indices from the highest priority to the
    lowest; defaults to ``0, 1, ..., F-1``.
    :param float epsilon_f: the bound on intra-class fused distances.
    :param str backend: ``flat`` or ``graph``.
    :param dict backend_params: keyword arguments of the backend.
    :param float alpha_multiplier: scales every computed alpha; larger values
    strengthen the separation between attribute layers.
    :param tuple overrides: explicit ``(alpha, beta)`` used at every level.
    :param bool progress: show progress bars.
    :return: a :class:`core.multi.TransformChain` object.

    """
    if len(contents) == 0:
        raise EmptyDatasetError("cannot index an empty dataset")
    if alpha_multiplier < 1:
        raise InvalidArgumentError("alpha_multiplier must be >= 1")
    contents = as_matrix(contents, "content vectors")
    attrs_list = _check_attrs_list(contents, attrs_list)
    F = len(attrs_list)
    priority = check_priority(range(F) if priority is None else priority, F)
    settings = {
        "epsilon_f": float(epsilon_f),
        "backend": backend,
        "backend_params": dict(backend_params or {}),
        "alpha_multiplier": float(alpha_multiplier),
        "overrides": None if overrides is None else tuple(overrides),
        "progress": progress,
    }
    levels, snapshots = apply_levels([contents], attrs_list,
                                     tuple(reversed(priority)), settings)
    return TransformChain(contents, attrs_list, priority, levels, snapshots,
                          settings)


def query_multi(chain, q, query_attrs, k, eps=0.05, attr_approx=False,
                ef=None):
    return chain.query(q, query_attrs, k, eps=eps, attr_approx=attr_approx,
                       ef=ef)


def _rebuild(chain, attrs_list, priority, shared):
    """New chain reusing the first ``shared`` levels of ``chain``."""
    order = tuple(reversed(priority))
    levels, snapshots = apply_levels(chain.snapshots[:shared + 1], attrs_list,
                                     order[shared:], chain.settings)
    new = TransformChain(chain.contents, attrs_list, priority,
                         list(chain.levels[:shared]) + levels, snapshots,
                         chain.settings)
    new.recomputed_levels = len(levels)
    logger.info("chain updated: %d levels reused, %d recomputed", shared,
                len(levels))
    return new


def update_priority(chain, new_priority):
    """
    Change the priority order, recomputing only the levels after the shared
    part of the application order. The result is identical to a full
    rebuild with the new order.

    :return: a new :class:`core.multi.TransformChain` object.
    """
    new_priority = check_priority(new_priority, chain.F)
    j = divergence_index(chain.priority, new_priority)
    if j == 1:
        unchanged = copy.copy(chain)
        unchanged.recomputed_levels = 0
        return unchanged
    return _rebuild(chain, chain.attrs_list, new_priority, chain.F - j + 1)


def update_add_attribute(chain, attrs, position=1):
    """
    Add an attribute to every record.

    :param attrs: the (N, m) attribute vectors of the new attribute.
    :param position: the rank of the new attribute in the priority order,
    from 1 (highest) to F + 1 (lowest), or ``"highest"``.
    :return: a new :class:`core.multi.TransformChain` object; the new
    attribute gets the index F.

    """
    if position == "highest":
        position = 1
    if isinstance(position, bool) or not isinstance(position, (int,
                                                              np.integer)):
        raise InvalidPriorityError("position must be an integer or "
                                   "'highest'")
    if not (1 <= position <= chain.F + 1):
        raise InvalidPriorityError(
            "position {} out of range 1..{}".format(position, chain.F + 1))
    attrs_list = chain.attrs_list + _check_attrs_list(chain.contents, [attrs])
    priority = list(chain.priority)
    priority.insert(position - 1, chain.F)
    # The attributes ranked below the new one keep their levels
    shared = chain.F - position + 1
    return _rebuild(chain, attrs_list, tuple(priority), shared)


def verify_monotone_priority(result, query_attrs, chain):
    """
    Check that the variance of the attribute distances in a result set does
    not decrease along the priority order.

    :param result: a :class:`core.hybrid.QueryResult` or a list of ids.
    :param list query_attrs: the query attribute vectors in attribute order.
    :param chain: the :class:`core.multi.TransformChain` that answered.
    :return: the flag and the variances listed in priority order.
    :rtype: tuple

    """
    ids = result.ids if isinstance(result, QueryResult) else list(result)
    if not ids:
        return True, [0.0] * chain.F
    dist = chain.attribute_distances(ids, query_attrs)
    variances = [float(np.var(dist[:, a])) for a in chain.priority]
    monotone = all(
        variances[i] <= variances[i + 1] + VARIANCE_TOLERANCE
        for i in range(len(variances) - 1)
    )
    return monotone, variances
