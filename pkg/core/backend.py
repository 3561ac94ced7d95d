"""
Nearest neighbour backends over fused vectors. Points are addressed by dense
integer ids ``0..N-1`` in insertion order, and every search returns hits in
ascending order of distance with ties broken by ascending id.
"""
import heapq
import logging
import numpy as np
from tqdm import tqdm
from dataclasses import dataclass


from .fusion import as_matrix, as_vector
from .exceptions import (
    InvalidArgumentError,
    InvalidDimensionError,
    EmptyDatasetError,
)


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchHit:
    id: int
    distance: float


def exact_top_k(points, q, k):
    """
    Exact Euclidean top-k by linear scan.

    :return: the ids and the distances of the ``min(k, N)`` nearest points.
    :rtype: tuple

    """
    dist = np.linalg.norm(points - q, axis=1)
    n = dist.shape[0]
    if k >= n:
        candidates = np.arange(n)
    else:
        kth = np.partition(dist, k - 1)[k - 1]
        # Keep every point tied with the k-th one, the id decides below
        candidates = np.flatnonzero(dist <= kth)
    order = candidates[np.lexsort((candidates, dist[candidates]))][:k]
    return order, dist[order]


def _to_points(points):
    if len(points) == 0:
        raise EmptyDatasetError("cannot build a backend over zero points")
    try:
        return as_matrix(points, "points")
    except ValueError as e:
        if isinstance(e, InvalidArgumentError):
            raise
        raise InvalidDimensionError("points have different dimensions")


class Backend(object):
    """Common interface: build once, then answer top-k queries."""

    kind = None

    def __init__(self):
        self.points = None

    def __len__(self):
        return 0 if self.points is None else self.points.shape[0]

    @property
    def dimension(self):
        return None if self.points is None else self.points.shape[1]

    def __str__(self):
        return "{} backend with {} points of dimension {}".format(
            self.kind, len(self), self.dimension)

    def build(self, points, progress=False):
        self.points = _to_points(points)
        return self

    def search(self, q, k, ef=None):
        """
        Return the ``min(k, N)`` nearest points to ``q`` as a list of
        :class:`core.backend.SearchHit` objects.

        :param q: the query vector.
        :param int k: the number of neighbours.
        :param int ef: the search beam (graph backend only).

        """
        if int(k) != k or k < 1:
            raise InvalidArgumentError("k must be a positive integer, got "
                                       "{}".format(k))
        q = as_vector(q, "query")
        if q.shape[0] != self.dimension:
            raise InvalidDimensionError(
                "query of dimension {}, backend has dimension {}".format(
                    q.shape[0], self.dimension))
        ids, dist = self._search(q, int(k), ef)
        return [SearchHit(int(i), float(d)) for i, d in zip(ids, dist)]

    def _search(self, q, k, ef):
        raise NotImplementedError


class FlatBackend(Backend):
    """Exact search by linear scan."""

    kind = "flat"

    def _search(self, q, k, ef):
        return exact_top_k(self.points, q, k)


class GraphBackend(Backend):
    """
    Hierarchical navigable small world graph. Each point is assigned a random
    top level; the upper layers are searched greedily and the base layer with
    a beam of width ``ef``.

    :param int M: the number of neighbours kept per node (``2M`` on the base
    layer).
    :param int ef_construction: the beam width used while inserting.
    :param int ef_search: the default beam width at query time.
    :param int seed: the seed of the level generator.

    """

    kind = "graph"

    def __init__(self, M=16, ef_construction=200, ef_search=64, seed=0):
        super().__init__()
        if M < 2:
            raise InvalidArgumentError("M must be >= 2")
        self.M = int(M)
        self.m0 = 2 * self.M
        self.ef_construction = int(ef_construction)
        self.ef_search = int(ef_search)
        self.seed = seed
        self._level_mult = 1 / np.log(self.M)
        self._graphs = []
        self._entry_point = None
        self._random = np.random.RandomState(seed)

    def build(self, points, progress=False):
        self.points = _to_points(points)
        for key in tqdm(range(self.points.shape[0]), desc="Graph construction",
                        ncols=100, disable=not progress):
            self.insert(key)
        logger.info("graph built over %d points with %d layers", len(self),
                    len(self._graphs))
        return self

    def _distances(self, q, keys):
        return np.linalg.norm(self.points[keys] - q, axis=1)

    def insert(self, key):
        """Link the point ``key`` (already in ``self.points``) to the graph."""
        new_point = self.points[key]
        level = int(-np.log(self._random.random_sample()) * self._level_mult)
        if self._entry_point is not None:
            dist = float(self._distances(new_point, [self._entry_point])[0])
            point = self._entry_point
            # Greedy descent through the layers above the insertion level
            for layer in reversed(self._graphs[level + 1:]):
                point, dist = self._search_ef1(new_point, point, dist, layer)
            entry_points = [(-dist, point)]
            for layer in reversed(self._graphs[:level + 1]):
                level_m = self.M if layer is not self._graphs[0] else self.m0
                entry_points = self._search_base_layer(
                    new_point, entry_points, layer, self.ef_construction)
                layer[key] = {
                    p: d for d, p in self._heuristic_prune(
                        [(-mdist, p) for mdist, p in entry_points], level_m)
                }
                # Add the reverse edges, pruning the neighbour lists again
                for neighbor_key, dist in layer[key].items():
                    layer[neighbor_key] = {
                        p: d for d, p in self._heuristic_prune(
                            [(d, p) for p, d in layer[neighbor_key].items()]
                            + [(dist, key)],
                            level_m,
                        )
                    }
        for _ in range(len(self._graphs), level + 1):
            self._graphs.append({key: {}})
            self._entry_point = key

    def _search_ef1(self, q, entry_point, entry_point_dist, layer):
        """Greedy search of the closest node in one layer."""
        candidates = [(entry_point_dist, entry_point)]
        visited = {entry_point}
        best, best_dist = entry_point, entry_point_dist
        while candidates:
            dist, curr = heapq.heappop(candidates)
            if dist > best_dist:
                break
            neighbors = [p for p in layer[curr] if p not in visited]
            if not neighbors:
                continue
            visited.update(neighbors)
            for p, d in zip(neighbors, self._distances(q, neighbors)):
                d = float(d)
                if d < best_dist:
                    best, best_dist = p, d
                    heapq.heappush(candidates, (d, p))
        return best, best_dist

    def _search_base_layer(self, q, entry_points, layer, ef):
        """
        Beam search in one layer.

        :param list entry_points: a heap of ``(-distance, key)`` pairs.
        :return: a heap of at most ``ef`` ``(-distance, key)`` pairs.

        """
        candidates = [(-mdist, p) for mdist, p in entry_points]
        heapq.heapify(candidates)
        entry_points = list(entry_points)
        heapq.heapify(entry_points)
        visited = set(p for _, p in entry_points)
        while candidates:
            dist, curr = heapq.heappop(candidates)
            farthest = -entry_points[0][0]
            if dist > farthest:
                break
            neighbors = [p for p in layer[curr] if p not in visited]
            if not neighbors:
                continue
            visited.update(neighbors)
            for p, d in zip(neighbors, self._distances(q, neighbors)):
                d = float(d)
                if len(entry_points) < ef:
                    heapq.heappush(candidates, (d, p))
                    heapq.heappush(entry_points, (-d, p))
                    farthest = -entry_points[0][0]
                elif d <= farthest:
                    heapq.heappush(candidates, (d, p))
                    heapq.heapreplace(entry_points, (-d, p))
                    farthest = -entry_points[0][0]
        return entry_points

    def _heuristic_prune(self, candidates, max_size):
        """
        Keep at most ``max_size`` neighbours, skipping a candidate when it is
        closer to an already kept neighbour than to the node itself.
        """
        if len(candidates) < max_size:
            return candidates
        heapq.heapify(candidates)
        pruned = []
        while candidates and len(pruned) < max_size:
            candidate_dist, candidate_key = heapq.heappop(candidates)
            if pruned:
                kept = [key for _, key in pruned]
                to_kept = self._distances(self.points[candidate_key], kept)
                if np.any(to_kept < candidate_dist):
                    continue
            pruned.append((candidate_dist, candidate_key))
        return pruned

    def _search(self, q, k, ef):
        n = len(self)
        if k >= n:
            return exact_top_k(self.points, q, k)
        ef = max(k, self.ef_search if ef is None else int(ef))
        entry_point = self._entry_point
        entry_dist = float(self._distances(q, [entry_point])[0])
        for layer in reversed(self._graphs[1:]):
            entry_point, entry_dist = self._search_ef1(q, entry_point,
                                                       entry_dist, layer)
        found = self._search_base_layer(q, [(-entry_dist, entry_point)],
                                        self._graphs[0], ef)
        found = sorted((-mdist, p) for mdist, p in found)[:k]
        ids = np.array([p for _, p in found], dtype=np.int64)
        dist = np.array([d for d, _ in found], dtype=np.float64)
        return ids, dist


BACKENDS = {
    "flat": FlatBackend,
    "graph": GraphBackend,
}


def make_backend(kind="flat", **params):
    try:
        cls = BACKENDS[kind]
    except KeyError:
        raise InvalidArgumentError("unknown backend kind {!r}, expected one "
                                   "of {}".format(kind, sorted(BACKENDS)))
    return cls(**params) if kind != "flat" else cls()


def backend_build(points, kind="flat", progress=False, **params):
    """
    Build a backend over the fused points.

    :param points: the N fused vectors.
    :param str kind: ``flat`` (exact) or ``graph``.
    :param params: the graph parameters ``M``, ``ef_construction``,
    ``ef_search`` and ``seed``.
    :return: a built :class:`core.backend.Backend`.

    """
    return make_backend(kind, **params).build(points, progress=progress)


def backend_search(h, q, k, ef=None):
    return h.search(q, k, ef=ef)
