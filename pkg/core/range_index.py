"""
Range-filtered queries. Offline, range lines are sampled from the estimated
query and attribute distributions, each line gets a base radius and is
indexed by direction, and every line keeps a cylindrical index of the fused
points around it. Online, the query tube is searched through the cylinders
of the indexed lines that can hold it, the one with the most room and the
most similar one first.
"""
import math
import logging
import numpy as np
from tqdm import tqdm
from itertools import repeat
from scipy.stats import norm
from dataclasses import dataclass
from scipy.spatial import cKDTree
from scipy.cluster.vq import kmeans2
from multiprocessing import Pool, cpu_count


from .hybrid import QueryResult, ResultRow, check_k, check_records, fit_params
from .fusion import psi_transform, psi_transform_batch
from .exceptions import (
    InvalidArgumentError,
    InvalidDimensionError,
    EmptyDatasetError,
    RadiusTooLargeError,
)
from .geometry import (
    LineSegment,
    RadiusParams,
    RangeQuery,
    adjusted_k,
    cylindrical_coords_batch,
    directed_distances,
    directed_hausdorff,
    hausdorff_distance,
    line_similarity,
    local_density,
    optimal_radius,
    points_segment_distance,
    range_to_line,
)


logger = logging.getLogger(__name__)

MIN_RADIUS = 1e-9
# Tolerance of the radius comparisons
RADIUS_SLACK = 1e-12
# Section keys stay exact as float64 and int64
MAX_SECTIONS = 2 ** 40
# Cylinders searched by one query before giving up on certification
MAX_TRIALS = 3


@dataclass(frozen=True, eq=False)
class IndexedLine:
    """
    A sampled range line.

    :param segment: the :class:`core.geometry.LineSegment` in fused space.
    :param float base_radius: the radius of the tube around the line.
    :param float eta: the local density of the fused points around it.
    :param tuple source: the sampled ``(q, l, u)``.

    """

    segment: LineSegment
    base_radius: float
    eta: float
    source: tuple

    def __post_init__(self):
        assert self.base_radius > 0 and self.eta >= 0


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.points.shape[0]


def exhaustive_range_scan(contents, attrs, q, l, u, k):
    """
    Ids and content distances of the k records nearest to q among those with
    attributes in ``[l, u]``, ties broken by id.
    """
    inside = np.flatnonzero(np.all((attrs >= l) & (attrs <= u), axis=1))
    dist = np.linalg.norm(contents[inside] - q, axis=1)
    order = np.lexsort((inside, dist))[:k]
    return inside[order], dist[order]


def _cells(points, side):
    return np.floor(points / side).astype(np.int64)


def _first_per_cell(points, side):
    """Positions of the first point of every occupied grid cell, in order."""
    if side <= 0 or not math.isfinite(side):
        return np.arange(points.shape[0])
    _, first = np.unique(_cells(points, side), axis=0, return_index=True)
    return np.sort(first)


def estimate_distributions(contents, attrs, c=1.0, n_grid=5, seed=0):
    """
    Estimate the distribution of the queries and of the range ends.

    The query contents are summarised by the ``ceil(sqrt(n))`` k-means
    centroids of the dataset weighted by their cluster sizes. Range ends are
    drawn from a Gaussian grid around the attribute mean:
    :math:`l = \\mu - c\\sigma + \\sigma z_p / \\sqrt{2}` and
    :math:`u = \\mu + c\\sigma + \\sigma z_p / \\sqrt{2}` for ``n_grid``
    quantile levels p in [0.05, 0.95], followed by every range between two of
    ``max(n_grid, 2)`` evenly spaced attribute quantiles, minimum and maximum
    included, so that narrow and full ranges have a line spanning them.

    :param float c: the half width of the typical range in standard
    deviations, in [0.5, 2].
    :return: the query :class:`SampleSet` and an array (P, 2, m) of ``(l, u)``
    pairs.
    :rtype: tuple

    """
    contents, attrs = check_records(contents, attrs)
    if not (0.5 <= c <= 2):
        raise InvalidArgumentError("c must be in [0.5, 2], got {}".format(c))
    if n_grid < 1:
        raise InvalidArgumentError("n_grid must be >= 1")
    n = contents.shape[0]
    n_distinct = np.unique(contents, axis=0).shape[0]
    k = min(int(math.ceil(math.sqrt(n))), n_distinct)
    if k == 1:
        centroids, labels = contents.mean(axis=0)[None, :], np.zeros(n, int)
    else:
        centroids, labels = kmeans2(contents, k, minit="++", seed=seed)
    weights = np.bincount(labels, minlength=centroids.shape[0])
    kept = weights > 0
    queries = SampleSet(centroids[kept], weights[kept] / n)

    mu, sigma = attrs.mean(axis=0), attrs.std(axis=0)
    z = norm.ppf(np.linspace(0.05, 0.95, n_grid))
    lows = mu - c * sigma + sigma / math.sqrt(2) * z[:, None]
    highs = mu + c * sigma + sigma / math.sqrt(2) * z[:, None]
    pairs = [(lo, hi) for lo in lows for hi in highs if np.all(lo <= hi)]
    levels = np.quantile(attrs, np.linspace(0, 1, max(n_grid, 2)), axis=0)
    pairs.extend((levels[i], levels[j]) for i in range(len(levels))
                 for j in range(i + 1, len(levels)))
    pairs = np.array(pairs)
    # Zero variance collapses the grids, keep the distinct pairs in order
    _, first = np.unique(pairs.reshape(len(pairs), -1), axis=0,
                         return_index=True)
    pairs = pairs[np.sort(first)]
    logger.debug("%d query samples, %d range samples", len(queries),
                 len(pairs))
    return queries, pairs


def make_indexed_line(q, l, u, contents, attrs, fused, p, k, delta):
    """
    The indexed line of the range query ``(q, l, u)`` with its base radius,
    computed from the k nearest records inside the range, and its density.
    """
    segment = range_to_line(RangeQuery(q, l, u), p)
    inside = np.flatnonzero(np.all((attrs >= l) & (attrs <= u), axis=1))
    if inside.shape[0] == 0:
        inside = np.arange(contents.shape[0])
    dist = np.sort(np.linalg.norm(contents[inside] - q, axis=1))
    top = dist[:min(k, dist.shape[0])]
    rp = RadiusParams(float(top[-1]), int(inside.shape[0]), float(top.std()),
                      delta)
    radius = max(optimal_radius(rp, p.beta), MIN_RADIUS)
    eta = 0.0 if segment.is_degenerate \
        else local_density(segment, fused, radius)
    return IndexedLine(segment, radius, eta, (q, l, u))


def sample_range_lines(contents, attrs, eps_cover, delta, p, k, c=1.0,
                       n_grid=5, max_lines=10000, seed=0, parallel=False,
                       progress=False):
    """
    Sample the range lines covering the estimated queries.

    Query samples are thinned on a grid of resolution :math:`\\beta\\epsilon`
    and range ends on a grid of resolution :math:`\\beta\\epsilon / \\alpha`
    (scaled by the tiling factor). Lines whose endpoints share the same cells
    of side :math:`\\epsilon / \\sqrt{d}` lie within Hausdorff distance
    :math:`\\epsilon` of each other, and only the first of them is kept.

    :param float eps_cover: the coverage resolution in fused space.
    :param float delta: the failure probability of the base radii.
    :param p: the :class:`core.fusion.FusionParams` of the index.
    :param int k: the number of neighbours the radii are sized for.
    :param int max_lines: the cap on the number of lines.
    :return: a list of :class:`IndexedLine` objects.
    :rtype: list

    """
    if len(contents) == 0:
        raise EmptyDatasetError("cannot sample lines over an empty dataset")
    if not eps_cover > 0:
        raise InvalidArgumentError("eps_cover must be > 0")
    contents, attrs = check_records(contents, attrs)
    k = check_k(k)
    queries, pairs = estimate_distributions(contents, attrs, c, n_grid, seed)
    d, m = p.d, p.m
    # Heaviest clusters first, so the cap keeps the most likely queries
    by_weight = np.argsort(-queries.weights, kind="stable")
    q_points = queries.points[by_weight]
    q_points = q_points[_first_per_cell(q_points, p.beta * eps_cover /
                                        math.sqrt(d))]
    flat_pairs = pairs.reshape(len(pairs), -1)
    pair_side = p.beta * eps_cover / (p.alpha * math.sqrt(d / m)) / \
        math.sqrt(2 * m)
    pairs = pairs[_first_per_cell(flat_pairs, pair_side)]

    a = np.array([psi_transform(q, lu[0], p) for q in q_points for lu in pairs])
    b = np.array([psi_transform(q, lu[1], p) for q in q_points for lu in pairs])
    side = eps_cover / math.sqrt(d)
    keys = np.hstack([_cells(a, side), _cells(b, side)])
    _, first = np.unique(keys, axis=0, return_index=True)
    kept = np.sort(first)[:max_lines]
    if len(first) > max_lines:
        logger.warning("%d lines needed for coverage %.3g, capped at %d",
                       len(first), eps_cover, max_lines)
    sources = [(q_points[i // len(pairs)], pairs[i % len(pairs)][0],
                pairs[i % len(pairs)][1]) for i in kept]

    fused = psi_transform_batch(contents, attrs, p)
    n = len(sources)
    if parallel:
        with Pool(processes=cpu_count()) as pool:
            lines = pool.starmap(
                make_indexed_line,
                zip([s[0] for s in sources], [s[1] for s in sources],
                    [s[2] for s in sources], repeat(contents, n),
                    repeat(attrs, n), repeat(fused, n), repeat(p, n),
                    repeat(k, n), repeat(delta, n))
            )
    else:
        lines = [
            make_indexed_line(q, l, u, contents, attrs, fused, p, k, delta)
            for q, l, u in tqdm(sources, desc="Line sampling", ncols=100,
                                disable=not progress)
        ]
    logger.info("%d range lines sampled from %d query and %d range samples",
                len(lines), len(q_points), len(pairs))
    return lines


def _canonical_direction(segment):
    u = segment.direction / segment.length
    nonzero = np.flatnonzero(u)
    return -u if u[nonzero[0]] < 0 else u


class HierarchicalLineIndex(object):
    """
    Lines hashed by the cell of their unit direction on a grid of angular
    resolution ``nu``, with a k-d tree over the midpoints of every cell.
    Directions are taken up to sign; degenerate lines share a point-cell.

    :param list lines: the :class:`IndexedLine` objects.
    :param float nu: the angular resolution in radians.
    :param float D_max: the scale of the position term of the similarity.

    """

    POINT_CELL = ()

    def __init__(self, lines, nu, D_max):
        self.lines = list(lines)
        self.nu = nu
        self.D_max = D_max
        members = {}
        for i, line in enumerate(self.lines):
            members.setdefault(self.cell_of(line.segment), []).append(i)
        self.cells = {
            key: (np.array(ids, dtype=np.int64),
                  cKDTree(np.array([self.lines[i].segment.midpoint
                                    for i in ids])))
            for key, ids in members.items()
        }
        self._keys = [key for key in self.cells if key != self.POINT_CELL]
        self._key_matrix = np.array(self._keys, dtype=np.int64)

    def __len__(self):
        return len(self.lines)

    def __str__(self):
        return "HierarchicalLineIndex of {} lines in {} cells".format(
            len(self.lines), len(self.cells))

    def _key(self, u):
        return tuple(int(x) for x in np.round(u / self.nu))

    def cell_of(self, segment):
        if segment.is_degenerate:
            return self.POINT_CELL
        return self._key(_canonical_direction(segment))

    def neighboring_cells(self, segment):
        """The occupied cells within one grid step of either orientation."""
        if segment.is_degenerate:
            return [self.POINT_CELL] if self.POINT_CELL in self.cells else []
        if not self._keys:
            return []
        u = _canonical_direction(segment)
        near = np.zeros(len(self._keys), dtype=bool)
        for key in (self._key(u), self._key(-u)):
            near |= np.max(np.abs(self._key_matrix - key), axis=1) <= 1
        return [self._keys[i] for i in np.flatnonzero(near)]

    def score(self, L_Q, i):
        candidate = self.lines[i].segment
        if L_Q.is_degenerate or candidate.is_degenerate:
            return max(0.0, 1 - hausdorff_distance(L_Q, candidate) /
                       self.D_max)
        return line_similarity(L_Q, candidate, D_max=self.D_max)

    def nearest(self, L_Q, tau=0.95, kappa=2.0):
        """
        Position and similarity of the indexed line most similar to L_Q.
        Scanning stops at the first line with similarity above ``tau``.
        """
        candidates = []
        for key in self.neighboring_cells(L_Q):
            ids, tree = self.cells[key]
            if L_Q.is_degenerate:
                # Point-cell: the nearest point is the most similar line
                found = [tree.query(L_Q.midpoint)[1]]
            else:
                found = tree.query_ball_point(L_Q.midpoint,
                                              kappa * L_Q.length)
            candidates.extend(ids[sorted(found)])
        if not candidates:
            logger.debug("no line in the neighbouring cells, scanning all")
            candidates = range(len(self.lines))
        best, best_sim = None, -1.0
        for i in candidates:
            sim = self.score(L_Q, i)
            if sim > best_sim:
                best, best_sim = int(i), sim
            if sim > tau:
                break
        return best, best_sim


def build_line_index(lines, nu=math.pi / 180, D_max=None):
    """
    Index the lines by direction.

    :param list lines: the :class:`IndexedLine` objects.
    :param float nu: the angular resolution in (0, pi].
    :param float D_max: the diameter used by the similarity; by default the
    diagonal of the bounding box of the line endpoints.
    :return: a :class:`HierarchicalLineIndex` object.

    """
    if len(lines) == 0:
        raise EmptyDatasetError("cannot index zero lines")
    if not (0 < nu <= math.pi):
        raise InvalidArgumentError("nu must be in (0, pi], got {}".format(nu))
    if D_max is None:
        ends = np.array([e for line in lines
                         for e in (line.segment.a, line.segment.b)])
        D_max = float(np.linalg.norm(ends.max(axis=0) - ends.min(axis=0)))
    return HierarchicalLineIndex(lines, nu, D_max if D_max > 0 else 1.0)


def find_nearest_line(idx, L_Q, tau=0.95, kappa=2.0):
    """
    The indexed line most similar to the query line.

    :param idx: a :class:`HierarchicalLineIndex` object.
    :param L_Q: the query :class:`core.geometry.LineSegment`.
    :param float tau: the similarity above which the search stops.
    :param float kappa: the midpoint search radius in units of the query line
    length.
    :return: an :class:`IndexedLine` object.

    """
    i, _ = idx.nearest(L_Q, tau, kappa)
    return idx.lines[i]


class CylindricalIndex(object):
    """
    The fused points within ``max_radius`` of a line, split in
    ``max(1, ceil(length / max_radius))`` sections along the line. Only the
    occupied sections take room: the stored ids are sorted by section, then
    by distance from the line.

    :param line: the :class:`IndexedLine`.
    :param points: the fused vectors, addressed by id.
    :param float max_radius: the radius of the cylinder.

    """

    def __init__(self, line, points, max_radius):
        self.line = line
        self.points = points
        self.max_radius = max_radius
        segment = line.segment
        if segment.is_degenerate:
            self.n_sections = 1
            t = np.zeros(points.shape[0])
            r = np.linalg.norm(points - segment.a, axis=1)
        else:
            self.n_sections = min(
                max(1, int(math.ceil(segment.length / max_radius))),
                MAX_SECTIONS)
            t, r = cylindrical_coords_batch(points, segment)
        stored = np.flatnonzero(r <= max_radius)
        section = np.minimum((t[stored] * self.n_sections).astype(np.int64),
                             self.n_sections - 1)
        order = np.lexsort((stored, r[stored], section))
        self.ids = stored[order]
        self.radii = r[stored][order]
        self.section_of = section[order]

    def __len__(self):
        return self.ids.shape[0]

    def stored_ids(self):
        return np.sort(self.ids)

    def occupied_sections(self):
        return np.unique(self.section_of)

    def section(self, s):
        """Radii and ids of section s, nearest to the line first."""
        lo = np.searchsorted(self.section_of, s, side="left")
        hi = np.searchsorted(self.section_of, s, side="right")
        return self.radii[lo:hi], self.ids[lo:hi]


def build_cylindrical_index(L, points, R_total):
    """
    :param L: an :class:`IndexedLine`.
    :param points: the fused vectors.
    :param float R_total: the cylinder radius, usually the base radius of
    the line plus the supported slack.
    :return: a :class:`CylindricalIndex` object.
    """
    if not R_total > 0:
        raise InvalidArgumentError("R_total must be > 0")
    return CylindricalIndex(L, points, R_total)


def cylinder_search(cyl, L_Q, R_Q):
    """
    Ids of the stored points within ``R_Q`` of the query line, in ascending
    order. A point within ``R_Q`` of L_Q lies within ``R_Q`` plus the
    directed Hausdorff distance from L_Q to the indexed line, and projects
    on the indexed line within ``R_Q`` of the projection of L_Q: only those
    sections and radii are read.

    :raises RadiusTooLargeError: when ``R_Q`` plus the directed Hausdorff
    distance exceeds the cylinder radius.
    """
    if not R_Q > 0:
        raise InvalidArgumentError("R_Q must be > 0")
    segment = cyl.line.segment
    adjusted = R_Q + directed_hausdorff(L_Q, segment)
    if adjusted > cyl.max_radius + RADIUS_SLACK:
        raise RadiusTooLargeError(adjusted, cyl.max_radius)
    first, last = 0, cyl.n_sections - 1
    if not segment.is_degenerate:
        t, _ = cylindrical_coords_batch(np.array([L_Q.a, L_Q.b]), segment)
        reach = R_Q / segment.length
        # One more section on each side for the rounding of t
        first = max(int(math.floor((t.min() - reach) * cyl.n_sections)) - 1,
                    0)
        last = min(int(math.floor((t.max() + reach) * cyl.n_sections)) + 1,
                   last)
    lo = np.searchsorted(cyl.section_of, first, side="left")
    hi = np.searchsorted(cyl.section_of, last, side="right")
    candidates = cyl.ids[lo:hi][cyl.radii[lo:hi] <= adjusted + RADIUS_SLACK]
    if candidates.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    dist = points_segment_distance(cyl.points[candidates], L_Q)
    return np.sort(candidates[dist <= R_Q])


class RangeIndex(object):
    """
    Range-filtered index: the sampled lines, their cylinders and the records.

    :param params: the :class:`core.fusion.FusionParams` of the index.
    :param line_index: the :class:`HierarchicalLineIndex`.
    :param list cylinders: one :class:`CylindricalIndex` per indexed line.
    :param float delta_max: the slack added to every cylinder radius.
    :param dict settings: ``tau``, ``kappa`` and ``c`` used at query time.

    """

    def __init__(self, params, line_index, cylinders, delta_max, contents,
                 attrs, fused, settings):
        assert len(cylinders) == len(line_index)
        self.params = params
        self.line_index = line_index
        self.cylinders = cylinders
        self.delta_max = delta_max
        self.contents = contents
        self.attrs = attrs
        self.fused = fused
        self.settings = settings
        self.N = contents.shape[0]
        self.attr_min, self.attr_max = attrs.min(axis=0), attrs.max(axis=0)
        lines = line_index.lines
        self._starts = np.array([line.segment.a for line in lines])
        self._ends = np.array([line.segment.b for line in lines])
        self._base_radii = np.array([line.base_radius for line in lines])
        self._max_radii = np.array([cyl.max_radius for cyl in cylinders])

    def __str__(self):
        return "RangeIndex over {} records with {} lines (slack " \
            "{:.4g})".format(self.N, len(self.line_index), self.delta_max)

    def _scan(self, Q, k, k_prime):
        ids, dist = exhaustive_range_scan(self.contents, self.attrs, Q.q, Q.l,
                                          Q.u, k)
        rows = [ResultRow(int(i), float(s), 0.0, float(s))
                for i, s in zip(ids, dist)]
        return QueryResult(rows, k_prime, len(rows) < k)

    def _k_prime(self, i, k, eps, h):
        eta = self.line_index.lines[i].eta
        return min(adjusted_k(k, eps, h, eta, self.settings["c"]), self.N)

    def _search(self, i, L_Q, Q, k, eps):
        """
        Widen the query tube inside the cylinder of line i, from the base
        radius plus the distance to the line, until ``k'`` in-range
        candidates lie within :math:`\\beta R_Q` of q or the cylinder is full.
        """
        line, cyl = self.line_index.lines[i], self.cylinders[i]
        h = directed_hausdorff(L_Q, line.segment)
        k_prime = self._k_prime(i, k, eps, h)
        capacity = cyl.max_radius - h
        R_Q = line.base_radius + h
        if R_Q > capacity:
            raise RadiusTooLargeError(R_Q + h, cyl.max_radius)
        while True:
            ids = cylinder_search(cyl, L_Q, R_Q)
            ids = ids[Q.contains(self.attrs[ids])]
            dist = np.linalg.norm(self.contents[ids] - Q.q, axis=1)
            close = int(np.count_nonzero(dist <= self.params.beta * R_Q))
            if close >= k_prime or R_Q >= capacity:
                return ids, dist, k_prime, close
            R_Q = min(2 * R_Q, capacity)

    def query(self, q, l, u, k, eps=0.05, fallback=False):
        """
        Top-k records by content distance among those with attributes in
        ``[l, u]``.

        The range is first clipped to the attribute extent of the records.
        The lines whose cylinders hold the initial tube are tried by
        decreasing room, the most similar line second. Every in-range record
        within :math:`\\beta R_Q` of q lies inside the tube, so a result with
        k such candidates is exact and ends the search.

        :param bool fallback: answer by an exhaustive scan when no cylinder
        holds the query tube or no tube certifies the result; otherwise the
        first case raises and the second returns the best tube's result.
        :return: a :class:`core.hybrid.QueryResult` object.

        """
        k = check_k(k)
        Q = RangeQuery(q, l, u)
        if Q.q.shape[0] != self.params.d or Q.l.shape[0] != self.params.m:
            raise InvalidDimensionError(
                "query has d={} and m={}, index has d={} and m={}".format(
                    Q.q.shape[0], Q.l.shape[0], self.params.d, self.params.m))
        lo, hi = np.maximum(Q.l, self.attr_min), np.minimum(Q.u, self.attr_max)
        if np.any(lo > hi):
            logger.debug("range outside the attribute extent")
            return QueryResult([], k, True)
        Q = RangeQuery(Q.q, lo, hi)
        L_Q = range_to_line(Q, self.params)
        h = directed_distances(L_Q, self._starts, self._ends)
        capacity = self._max_radii - h
        fits = self._base_radii + h <= capacity
        nearest, sim = self.line_index.nearest(L_Q, self.settings["tau"],
                                               self.settings["kappa"])
        by_room = np.flatnonzero(fits)[np.argsort(-capacity[fits],
                                                  kind="stable")]
        trials = list(by_room[:1])
        if fits[nearest] and nearest not in trials:
            trials.append(nearest)
        trials.extend(i for i in by_room[1:] if i != nearest)
        logger.debug("nearest line %d (similarity %.4f), %d lines hold the "
                     "query", nearest, sim, len(by_room))

        best = None
        for i in trials[:MAX_TRIALS]:
            try:
                found = self._search(int(i), L_Q, Q, k, eps)
            except RadiusTooLargeError as e:
                logger.debug("line %d: %s", i, e)
                continue
            if best is None or found[3] > best[3]:
                best = found
            if found[3] >= k:
                break
        if best is None:
            error = RadiusTooLargeError(
                self._base_radii[nearest] + 2 * h[nearest],
                self._max_radii[nearest])
            if not fallback:
                raise error
            logger.warning("%s Falling back to an exhaustive scan.", error)
            return self._scan(Q, k, self._k_prime(nearest, k, eps,
                                                  h[nearest]))
        ids, dist, k_prime, close = best
        if close < k:
            if fallback:
                logger.warning("no tube holds %d close candidates, "
                               "exhaustive scan", k)
                return self._scan(Q, k, k_prime)
            logger.debug("uncertified result with %d close candidates",
                         close)
        order = np.lexsort((ids, dist))[:k]
        rows = [ResultRow(int(ids[j]), float(dist[j]), 0.0, float(dist[j]))
                for j in order]
        return QueryResult(rows, k_prime, len(rows) < k)


def radius_slack(lines, contents, attrs, p, k, n_holdout=100, seed=0):
    """
    The slack added to the base radius of every cylinder, estimated on
    held-out queries. A held-out query pairs a random record with the range
    between two random attribute quantiles; ranges holding fewer than k
    records are skipped.

    Served by a line at directed distance h with base radius r, the query
    tube fits in the cylinder when the slack is at least 2h, and certifies
    its top-k, the k-th at content distance d_k, when the slack is at least
    :math:`d_k / \\beta + h - r`. Each query keeps its smallest need over
    the lines.

    The slack is twice the 95th percentile of these needs. This differs from
    the plain 95th percentile of the nearest-line Hausdorff distances, which
    ignores the widening a query needs to certify.

    :return: the slack, 0 when no held-out range holds k records.
    :rtype: float

    """
    rng = np.random.RandomState(seed)
    starts = np.array([line.segment.a for line in lines])
    ends = np.array([line.segment.b for line in lines])
    base = np.array([line.base_radius for line in lines])
    m = attrs.shape[1]
    needs = []
    for _ in range(n_holdout):
        q = contents[rng.randint(contents.shape[0])]
        levels = np.sort(rng.uniform(size=(2, m)), axis=0)
        lo = np.array([np.quantile(attrs[:, j], levels[0, j])
                       for j in range(m)])
        hi = np.array([np.quantile(attrs[:, j], levels[1, j])
                       for j in range(m)])
        _, dist = exhaustive_range_scan(contents, attrs, q, lo, hi, k)
        if dist.shape[0] < k:
            continue
        L_Q = range_to_line(RangeQuery(q, lo, hi), p)
        h = directed_distances(L_Q, starts, ends)
        need = np.maximum(2 * h, dist[-1] / p.beta + h - base)
        needs.append(float(need.min()))
    if not needs:
        logger.warning("no held-out range holds %d records, slack 0", k)
        return 0.0
    logger.debug("slack from %d held-out queries", len(needs))
    return 2 * float(np.percentile(needs, 95))


def build_range_index(contents, attrs, eps_cover=1e-2, delta=0.05, k=10,
                      epsilon_f=1.0, alpha=None, beta=None, nu=math.pi / 180,
                      c=1.0, n_grid=5, max_lines=10000, tau=0.95, kappa=2.0,
                      adjust_c=2.0, delta_max=None, n_holdout=100, seed=0,
                      parallel=False, progress=False):
    """
    Build the range index of the records.

    :param contents: the N content vectors.
    :param attrs: the N numeric attribute vectors.
    :param float eps_cover: the coverage resolution of the sampled lines.
    :param float delta: the failure probability of the base radii.
    :param int k: the number of results the radii are sized for.
    :param float alpha: explicit alpha (requires ``beta``).
    :param float beta: explicit beta (requires ``alpha``).
    :param float nu: the angular resolution of the line index.
    :param float c: the typical range half width in standard deviations.
    :param int max_lines: the cap on the number of lines.
    :param float adjust_c: the constant of the candidate count adjustment.
    :param float delta_max: the slack added to the cylinder radii; estimated
    by :func:`radius_slack` on ``n_holdout`` held-out queries by default.
    :return: a :class:`RangeIndex` object.

    """
    contents, attrs = check_records(contents, attrs)
    p = fit_params(contents, attrs, epsilon_f, alpha, beta)
    fused = psi_transform_batch(contents, attrs, p)
    lines = sample_range_lines(contents, attrs, eps_cover, delta, p, k, c,
                               n_grid, max_lines, seed, parallel, progress)
    D_max = float(np.linalg.norm(fused.max(axis=0) - fused.min(axis=0)))
    line_index = build_line_index(lines, nu, D_max if D_max > 0 else None)
    if delta_max is None:
        delta_max = radius_slack(lines, contents, attrs, p, k, n_holdout,
                                 seed + 1)
    if delta_max < 0:
        raise InvalidArgumentError("delta_max must be >= 0")
    cylinders = [
        build_cylindrical_index(line, fused, line.base_radius + delta_max)
        for line in tqdm(lines, desc="Cylindrical indexes", ncols=100,
                         disable=not progress)
    ]
    logger.info("range index over %d records: %d lines, %d cells, slack "
                "%.4g", contents.shape[0], len(lines), len(line_index.cells),
                delta_max)
    settings = {"tau": tau, "kappa": kappa, "c": adjust_c}
    return RangeIndex(p, line_index, cylinders, delta_max, contents, attrs,
                      fused, settings)


def range_query(rix, q, l, u, k, eps=0.05, fallback=False):
    return rix.query(q, l, u, k, eps=eps, fallback=fallback)
