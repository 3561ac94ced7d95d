import math
import random
import unittest
import numpy as np
from scipy.cluster.vq import kmeans2


from ..hybrid import build_index
from ..utils import gaussian_contents
from ..bench import recall_at_k
from ..backend import exact_top_k
from ..fusion import FusionParams, psi_transform_batch
from ..geometry import (
    LineSegment,
    RangeQuery,
    cylindrical_coords_batch,
    directed_hausdorff,
    hausdorff_distance,
    line_similarity,
    points_segment_distance,
    range_to_line,
)
from ..exceptions import (
    EmptyDatasetError,
    InvalidArgumentError,
    InvalidRangeError,
    RadiusTooLargeError,
)
from ..range_index import (
    IndexedLine,
    build_cylindrical_index,
    build_line_index,
    build_range_index,
    cylinder_search,
    estimate_distributions,
    exhaustive_range_scan,
    find_nearest_line,
    make_indexed_line,
    radius_slack,
    range_query,
    sample_range_lines,
)


# Set seed values
random.seed(123)
np.random.seed(12)


def plain_line(a, b, radius=1.0):
    return IndexedLine(LineSegment(a, b), radius, 0.0, None)


def random_lines(n, dim, rng):
    return [plain_line(*rng.normal(scale=5, size=(2, dim))) for _ in range(n)]


class EstimateDistributionsTestCase(unittest.TestCase):

    def test_four_records(self):
        contents = [[0, 0], [0, 1], [10, 0], [10, 1]]
        queries, _ = estimate_distributions(contents, [[0], [1], [2], [3]])
        self.assertEqual(len(queries), 2)
        self.assertAlmostEqual(queries.weights.sum(), 1)

    def test_constant_attribute(self):
        contents = np.random.normal(size=(50, 3))
        _, pairs = estimate_distributions(contents, np.full((50, 1), 4.0))
        self.assertEqual(pairs.shape, (1, 2, 1))
        np.testing.assert_array_equal(pairs[0], [[4.0], [4.0]])

    def test_seeded_clustering(self):
        contents = np.random.normal(size=(1000, 2))
        attrs = np.random.uniform(size=(1000, 1))
        first, pairs = estimate_distributions(contents, attrs, seed=3)
        again, _ = estimate_distributions(contents, attrs, seed=3)
        np.testing.assert_array_equal(first.points, again.points)
        centroids, labels = kmeans2(contents, 32, minit="++", seed=3)
        kept = np.bincount(labels, minlength=32) > 0
        np.testing.assert_allclose(first.points, centroids[kept])
        self.assertTrue(np.all(pairs[:, 0] <= pairs[:, 1]))

    def test_quantile_ranges(self):
        contents = np.random.normal(size=(101, 2))
        attrs = np.arange(101, dtype=float)[:, None]
        _, pairs = estimate_distributions(contents, attrs)
        spans = {(float(lo[0]), float(hi[0])) for lo, hi in pairs}
        for span in [(0, 100), (0, 25), (25, 50), (75, 100)]:
            self.assertIn(span, spans)
        self.assertTrue(np.all(pairs[:, 0] <= pairs[:, 1]))

    def test_invalid_width(self):
        with self.assertRaises(InvalidArgumentError):
            estimate_distributions([[0, 0]], [[1]], c=3)


class SampleRangeLinesTestCase(unittest.TestCase):

    def setUp(self):
        self.contents = gaussian_contents(300, 4, rng=np.random.RandomState(1))
        self.attrs = np.random.uniform(0, 10, size=(300, 1))
        self.p = FusionParams.override(10, 2, 4, 1)

    def test_single_attribute_value(self):
        attrs = np.full((300, 1), 2.0)
        lines = sample_range_lines(self.contents, attrs, 0.5, 0.05, self.p, 5,
                                   n_grid=3)
        queries, _ = estimate_distributions(self.contents, attrs, n_grid=3)
        self.assertGreaterEqual(len(lines), 1)
        self.assertLessEqual(len(lines), len(queries))
        for line in lines:
            self.assertTrue(line.segment.is_degenerate)
            self.assertEqual(line.eta, 0)

    def test_monotone_coverage(self):
        counts = [len(sample_range_lines(self.contents, self.attrs, eps, 0.05,
                                         self.p, 5, n_grid=3))
                  for eps in [0.25, 0.5, 1.0, 2.0]]
        self.assertEqual(counts, sorted(counts, reverse=True))

    def test_coverage(self):
        eps = 0.5
        lines = sample_range_lines(self.contents, self.attrs, eps, 0.05,
                                   self.p, 5, n_grid=3)
        queries, pairs = estimate_distributions(self.contents, self.attrs,
                                                n_grid=3)
        rng = np.random.RandomState(2)
        for _ in range(100):
            q = queries.points[rng.randint(len(queries))]
            l, u = pairs[rng.randint(len(pairs))]
            L_Q = range_to_line(RangeQuery(q, l, u), self.p)
            nearest = min(hausdorff_distance(L_Q, line.segment)
                          for line in lines)
            self.assertLessEqual(nearest, 3 * eps + 1e-9)

    def test_max_lines(self):
        with self.assertLogs("core.range_index", level="WARNING"):
            lines = sample_range_lines(self.contents, self.attrs, 0.01, 0.05,
                                       self.p, 5, n_grid=3, max_lines=4)
        self.assertEqual(len(lines), 4)

    def test_toy_line(self):
        contents = np.array([[5.0, 0.0], [2.5, 4.33], [-5.0, 0.0]])
        attrs = np.array([[-3.0], [3.0], [3.0]])
        p = FusionParams.override(3, 1.5, 2, 1)
        fused = psi_transform_batch(contents, attrs, p)
        line = make_indexed_line(contents[0], [-3], [3], contents, attrs,
                                 fused, p, 2, 0.05)
        self.assertEqual(line.segment,
                         range_to_line(RangeQuery([5, 0], [-3], [3]), p))
        self.assertGreater(line.base_radius, 0)
        self.assertGreater(line.eta, 0)

    def test_invalid(self):
        with self.assertRaises(EmptyDatasetError):
            sample_range_lines([], [], 0.5, 0.05, self.p, 5)
        with self.assertRaises(InvalidArgumentError):
            sample_range_lines(self.contents, self.attrs, 0, 0.05, self.p, 5)


class LineIndexTestCase(unittest.TestCase):

    def test_one_line(self):
        idx = build_line_index([plain_line([0, 0], [1, 1])])
        self.assertEqual(len(idx.cells), 1)
        self.assertIs(find_nearest_line(idx, LineSegment([7, 3], [9, -4])),
                      idx.lines[0])

    def test_antipodal(self):
        idx = build_line_index([plain_line([0, 0, 0], [1, 2, 3]),
                                plain_line([5, 5, 5], [4, 3, 2])])
        self.assertEqual(len(idx.cells), 1)

    def test_degenerate_lines(self):
        idx = build_line_index([plain_line([0, 0], [0, 0]),
                                plain_line([0, 0], [1, 0])])
        self.assertIn(idx.POINT_CELL, idx.cells)
        self.assertIs(find_nearest_line(idx, LineSegment([0.1, 0], [0.1, 0])),
                      idx.lines[0])

    def test_self_lookup(self):
        lines = random_lines(100, 5, np.random.RandomState(3))
        idx = build_line_index(lines)
        for i, line in enumerate(lines):
            ids, _ = idx.cells[idx.cell_of(line.segment)]
            self.assertIn(i, ids)
            self.assertIs(find_nearest_line(idx, line.segment, tau=1.0), line)

    def test_identical_query(self):
        lines = random_lines(30, 4, np.random.RandomState(4))
        idx = build_line_index(lines)
        i, sim = idx.nearest(lines[7].segment)
        self.assertEqual(i, 7)
        self.assertEqual(sim, 1)

    def test_perturbed_copy(self):
        rng = np.random.RandomState(5)
        lines = random_lines(50, 4, rng)
        idx = build_line_index(lines)
        original = lines[21].segment
        query = LineSegment(original.a + rng.normal(scale=1e-3, size=4),
                            original.b + rng.normal(scale=1e-3, size=4))
        oracle = max(range(50), key=lambda i: line_similarity(
            query, lines[i].segment, D_max=idx.D_max))
        self.assertEqual(oracle, 21)
        self.assertIs(find_nearest_line(idx, query, tau=0.999), lines[21])

    def test_invalid(self):
        with self.assertRaises(EmptyDatasetError):
            build_line_index([])
        with self.assertRaises(InvalidArgumentError):
            build_line_index([plain_line([0, 0], [1, 1])], nu=4)


class CylindricalIndexTestCase(unittest.TestCase):

    def setUp(self):
        self.line = plain_line([0, 0, 0], [10, 0, 0])
        self.points = np.random.uniform(-4, 14, size=(1000, 3))

    def test_empty(self):
        cyl = build_cylindrical_index(self.line, np.array([[0, 9.0, 9.0]]), 2)
        self.assertEqual(len(cyl), 0)
        self.assertEqual(cylinder_search(cyl, self.line.segment, 1).tolist(),
                         [])

    def test_sections(self):
        cyl = build_cylindrical_index(self.line, self.points, 2)
        self.assertEqual(cyl.n_sections, 5)

    def test_sections_sorted(self):
        cyl = build_cylindrical_index(self.line, self.points, 2)
        t, _ = cylindrical_coords_batch(self.points, self.line.segment)
        for s in cyl.occupied_sections():
            radii, ids = cyl.section(s)
            self.assertTrue(np.all(np.diff(radii) >= 0))
            np.testing.assert_array_equal(
                np.minimum((t[ids] * 5).astype(int), 4), s)

    def test_long_line(self):
        line = plain_line([0, 0, 0], [1e12, 0, 0])
        cyl = build_cylindrical_index(line, self.points, 2)
        self.assertEqual(cyl.n_sections, 5 * 10 ** 11)
        # Far from the line in Hausdorff distance, but inside the cylinder
        query = LineSegment([0, 0.5, 0], [10, 0.5, 0])
        found = cylinder_search(cyl, query, 1.0)
        stored = cyl.stored_ids()
        dist = points_segment_distance(self.points[stored], query)
        np.testing.assert_array_equal(found, stored[dist <= 1.0])
        self.assertGreater(len(found), 0)

    def test_tube_membership(self):
        cyl = build_cylindrical_index(self.line, self.points, 2)
        inside = np.flatnonzero(
            points_segment_distance(self.points, self.line.segment) <= 2)
        np.testing.assert_array_equal(cyl.stored_ids(), inside)

    def test_same_line(self):
        cyl = build_cylindrical_index(self.line, self.points, 2)
        found = cylinder_search(cyl, self.line.segment, 1.5)
        expected = np.flatnonzero(
            points_segment_distance(self.points, self.line.segment) <= 1.5)
        np.testing.assert_array_equal(found, expected)

    def test_radius_too_large(self):
        cyl = build_cylindrical_index(self.line, self.points, 2)
        query = LineSegment([0, 1, 0], [10, 1, 0])
        with self.assertRaises(RadiusTooLargeError) as ctx:
            cylinder_search(cyl, query, 1.5)
        self.assertAlmostEqual(ctx.exception.required, 2.5)
        self.assertEqual(ctx.exception.supported, 2)

    def test_nearby_query_lines(self):
        cyl = build_cylindrical_index(self.line, self.points, 3)
        stored = cyl.stored_ids()
        rng = np.random.RandomState(6)
        for _ in range(20):
            query = LineSegment([0, 0, 0] + rng.uniform(-0.5, 0.5, size=3),
                                [10, 0, 0] + rng.uniform(-0.5, 0.5, size=3))
            R_Q = 3 - hausdorff_distance(self.line.segment, query) - 0.1
            found = cylinder_search(cyl, query, R_Q)
            dist = points_segment_distance(self.points[stored], query)
            np.testing.assert_array_equal(found, stored[dist <= R_Q])

    def test_degenerate_line(self):
        point = plain_line([1, 1, 1], [1, 1, 1])
        cyl = build_cylindrical_index(point, self.points, 2)
        self.assertEqual(cyl.n_sections, 1)
        inside = np.flatnonzero(
            np.linalg.norm(self.points - 1, axis=1) <= 2)
        np.testing.assert_array_equal(cyl.stored_ids(), inside)


class RangeQueryTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        rng = np.random.RandomState(8)
        cls.contents = gaussian_contents(300, 4, rng=rng)
        cls.attrs = rng.uniform(0, 10, size=(300, 1))
        cls.index = build_range_index(cls.contents, cls.attrs, eps_cover=0.5,
                                      k=5, alpha=10, beta=2, n_grid=3,
                                      max_lines=200, n_holdout=50)

    def test_structure(self):
        self.assertGreater(len(self.index.line_index), 0)
        self.assertGreaterEqual(self.index.delta_max, 0)
        for line, cyl in zip(self.index.line_index.lines,
                             self.index.cylinders):
            self.assertAlmostEqual(cyl.max_radius,
                                   line.base_radius + self.index.delta_max)

    def test_full_span(self):
        rng = np.random.RandomState(9)
        for _ in range(20):
            q = self.contents[rng.randint(300)] + rng.normal(size=4)
            result = range_query(self.index, q, [0], [10], 5, fallback=True)
            ids, _ = exact_top_k(self.contents, q, 5)
            self.assertEqual(result.ids, ids.tolist())

    def test_matches_exhaustive_scan(self):
        rng = np.random.RandomState(10)
        for _ in range(30):
            q = self.contents[rng.randint(300)] + rng.normal(size=4)
            lo = rng.uniform(0, 8)
            l, u = [lo], [lo + rng.uniform(0.5, 2)]
            result = self.index.query(q, l, u, 5, fallback=True)
            ids, dist = exhaustive_range_scan(self.contents, self.attrs, q,
                                              l, u, 5)
            self.assertEqual(result.ids, ids.tolist())
            np.testing.assert_allclose(
                [row.content_distance for row in result], dist)

    def test_stored_record(self):
        i = 42
        a = self.attrs[i, 0]
        result = self.index.query(self.contents[i], [a - 0.5], [a + 0.5], 1,
                                  fallback=True)
        self.assertEqual(result.ids, [i])
        self.assertEqual(result[0].content_distance, 0)

    def test_radius_too_large(self):
        index = build_range_index(self.contents, self.attrs, eps_cover=0.5,
                                  k=5, alpha=10, beta=2, n_grid=3,
                                  max_lines=200, delta_max=0)
        q = self.contents[0] + 5
        with self.assertRaises(RadiusTooLargeError):
            index.query(q, [1], [9], 5)
        with self.assertLogs("core.range_index", level="WARNING"):
            result = index.query(q, [1], [9], 5, fallback=True)
        ids, _ = exhaustive_range_scan(self.contents, self.attrs, q, [1], [9],
                                       5)
        self.assertEqual(result.ids, ids.tolist())

    def test_clipped_range(self):
        q = self.contents[5]
        wide = self.index.query(q, [-5], [20], 5, fallback=True)
        ids, _ = exact_top_k(self.contents, q, 5)
        self.assertEqual(wide.ids, ids.tolist())
        empty = self.index.query(q, [11], [12], 5)
        self.assertEqual(len(empty), 0)
        self.assertTrue(empty.truncated)

    def test_slack_without_holdout(self):
        # No range holds more records than the dataset
        with self.assertLogs("core.range_index", level="WARNING"):
            slack = radius_slack(self.index.line_index.lines, self.contents,
                                 self.attrs, self.index.params, 301,
                                 n_holdout=5)
        self.assertEqual(slack, 0)

    def test_slack_from_needs(self):
        lines, p = self.index.line_index.lines, self.index.params
        rng = np.random.RandomState(3)
        needs = []
        for _ in range(40):
            q = self.contents[rng.randint(300)]
            lo, hi = np.quantile(self.attrs[:, 0],
                                 np.sort(rng.uniform(size=(2, 1)), axis=0))
            _, dist = exhaustive_range_scan(self.contents, self.attrs, q, lo,
                                            hi, 5)
            if len(dist) < 5:
                continue
            L_Q = range_to_line(RangeQuery(q, lo, hi), p)
            need = math.inf
            for line in lines:
                h = directed_hausdorff(L_Q, line.segment)
                need = min(need, max(2 * h, dist[-1] / p.beta + h -
                                     line.base_radius))
            needs.append(need)
        # Twice the 95th percentile, not the percentile itself
        self.assertAlmostEqual(
            radius_slack(lines, self.contents, self.attrs, p, 5, 40, seed=3),
            2 * np.percentile(needs, 95))

    def test_invalid(self):
        with self.assertRaises(InvalidRangeError):
            self.index.query(self.contents[0], [5], [4], 3)
        with self.assertRaises(InvalidArgumentError):
            self.index.query(self.contents[0], [4], [5], 0)


class RangeRecallTestCase(unittest.TestCase):
    """Answers of the range index alone, the exhaustive fallback disabled."""

    N = 10000

    @classmethod
    def setUpClass(cls):
        rng = np.random.RandomState(21)
        cls.contents = gaussian_contents(cls.N, 8, rng=rng)
        cls.attrs = rng.uniform(0, 100, size=(cls.N, 1))
        cls.index = build_range_index(cls.contents, cls.attrs, k=10)

    def queries(self, width, seed):
        rng = np.random.RandomState(seed)
        for _ in range(100):
            q = self.contents[rng.randint(self.N)] + \
                rng.normal(scale=0.1, size=8)
            lo = rng.uniform(0, 100 - width)
            yield q, [lo], [lo + width]

    def mean_recall(self, width, seed):
        recalls = []
        for q, l, u in self.queries(width, seed):
            result = self.index.query(q, l, u, 10)
            ids, _ = exhaustive_range_scan(self.contents, self.attrs, q, l, u,
                                           10)
            recalls.append(recall_at_k(result.ids, ids.tolist(), 10))
        return float(np.mean(recalls))

    def test_narrow_ranges(self):
        self.assertGreaterEqual(self.mean_recall(10, 1), 0.9)

    def test_half_ranges(self):
        self.assertGreaterEqual(self.mean_recall(50, 2), 0.9)

    def test_full_ranges(self):
        self.assertGreaterEqual(self.mean_recall(100, 3), 0.9)
        matches = 0
        for q, l, u in self.queries(100, 4):
            ids, _ = exact_top_k(self.contents, q, 10)
            matches += self.index.query(q, l, u, 10).ids == ids.tolist()
        self.assertGreaterEqual(matches, 95)


class ZeroWidthRangeTestCase(unittest.TestCase):

    def test_equals_exact_filter(self):
        rng = np.random.RandomState(13)
        contents = gaussian_contents(200, 4, rng=rng)
        attrs = rng.randint(0, 4, size=(200, 1)).astype(float)
        index = build_range_index(contents, attrs, eps_cover=0.5, k=5,
                                  n_grid=3, max_lines=200, n_holdout=30)
        hybrid = build_index(contents, attrs)
        for _ in range(10):
            q = contents[rng.randint(200)] + rng.normal(size=4)
            a = float(rng.randint(0, 4))
            result = index.query(q, [a], [a], 5, fallback=True)
            self.assertEqual(result.ids, hybrid.query(q, [a], 5).ids)
            self.assertTrue(np.all(attrs[result.ids, 0] == a))


if __name__ == "__main__":
    unittest.main()
