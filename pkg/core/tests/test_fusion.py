import math
import random
import unittest
import numpy as np


from ..utils import TOY_ALPHA, TOY_BETA, toy_dataset
from ..exceptions import (
    DegenerateSeparationError,
    InvalidArgumentError,
    InvalidDimensionError,
)
from ..fusion import (
    ETA_MIN,
    NO_SEPARATION_NEEDED,
    FusionParams,
    block_partition,
    class_keys,
    estimate_extremes,
    key_to_vector,
    optimal_corollary_alpha,
    psi_transform,
    psi_transform_batch,
    select_parameters,
)


# Set seed values
random.seed(123)
np.random.seed(12)


class BlockPartitionTestCase(unittest.TestCase):

    def test_unit_blocks(self):
        blocks = block_partition([5, 0], 1)
        self.assertEqual([b.tolist() for b in blocks], [[5], [0]])

    def test_exact_division(self):
        blocks = block_partition([1, 2, 3, 4], 2)
        self.assertEqual([b.tolist() for b in blocks], [[1, 2], [3, 4]])

    def test_remainder_block(self):
        v = [1, 2, 3, 4, 5]
        blocks = block_partition(v, 2)
        self.assertEqual([b.tolist() for b in blocks], [[1, 2], [3, 4], [5]])
        self.assertEqual(np.concatenate(blocks).tolist(), v)

    def test_invalid_m(self):
        with self.assertRaises(InvalidDimensionError):
            block_partition([1, 2], 3)
        with self.assertRaises(InvalidDimensionError):
            block_partition([1, 2], 0)


class PsiTransformTestCase(unittest.TestCase):

    def setUp(self):
        self.toy = FusionParams.override(TOY_ALPHA, TOY_BETA, 2, 1)

    def test_toy_points(self):
        np.testing.assert_allclose(psi_transform([5, 0], [-3], self.toy),
                                   [9.3333, 6.0], atol=1e-4)
        np.testing.assert_allclose(psi_transform([-5, 0], [3], self.toy),
                                   [-9.3333, -6.0], atol=1e-4)
        np.testing.assert_allclose(psi_transform([2.5, 4.33], [3], self.toy),
                                   [-4.3333, -3.1133], atol=1e-4)

    def test_toy_neighbours(self):
        contents, attrs = toy_dataset()
        fused = psi_transform_batch(contents, attrs, self.toy)
        dist = np.linalg.norm(fused - fused[0], axis=1)
        order = np.argsort(dist)
        self.assertEqual(order[0], 0)
        self.assertEqual(set(order[1:3]), {1, 2})
        self.assertAlmostEqual(dist[1], 5.60, delta=0.01)
        self.assertAlmostEqual(dist[2], 5.77, delta=0.01)

    def test_zero_attribute_unit_scale(self):
        # beta=1 is below the admissible range, so build the params by hand
        p = FusionParams.override(2, 1 + 1e-12, 6, 2)
        v = np.random.normal(size=6)
        np.testing.assert_allclose(psi_transform(v, [0, 0], p), v,
                                   rtol=1e-11)

    def test_dimension_mismatch(self):
        with self.assertRaises(InvalidDimensionError):
            psi_transform([1, 2, 3], [1], self.toy)
        with self.assertRaises(InvalidDimensionError):
            psi_transform([1, 2], [1, 2], self.toy)

    def test_batch_equals_rows(self):
        p = FusionParams.override(5, 2, 7, 3)
        contents = np.random.normal(size=(20, 7))
        attrs = np.random.randint(0, 3, size=(20, 3)).astype(float)
        batch = psi_transform_batch(contents, attrs, p)
        for i in range(20):
            np.testing.assert_array_equal(
                batch[i], psi_transform(contents[i], attrs[i], p))

    def test_short_block_uses_prefix(self):
        p = FusionParams.override(2, 2, 5, 2)
        out = psi_transform(np.zeros(5), [1, 3], p)
        np.testing.assert_allclose(out, [-1, -3, -1, -3, -1])

    def test_same_attribute_scale(self):
        p = FusionParams.override(7, 3, 16, 4)
        for _ in range(1000):
            v1, v2 = np.random.normal(size=(2, 16))
            f = np.random.randint(0, 5, size=4)
            fused = np.linalg.norm(psi_transform(v1, f, p) -
                                   psi_transform(v2, f, p))
            self.assertAlmostEqual(fused / (np.linalg.norm(v1 - v2) / p.beta),
                                   1.0, delta=1e-9)

    def test_identical_content_scaling(self):
        p = FusionParams.override(7, 3, 16, 4)
        v = np.random.normal(size=16)
        f1, f2 = np.random.normal(size=(2, 4))
        fused = np.linalg.norm(psi_transform(v, f1, p) - psi_transform(v, f2,
                                                                       p))
        expected = p.alpha / p.beta * math.sqrt(16 / 4) * \
            np.linalg.norm(f1 - f2)
        self.assertAlmostEqual(fused, expected, places=9)

    def test_injective_on_dataset(self):
        contents = np.random.normal(size=(300, 8))
        attrs = np.random.randint(0, 4, size=(300, 2)).astype(float)
        p = select_parameters(*estimate_extremes(contents, attrs), 8, 2, 1.0)
        fused = psi_transform_batch(contents, attrs, p)
        self.assertEqual(np.unique(fused, axis=0).shape[0], 300)

    def test_separation_lower_bound(self):
        p = FusionParams.override(6, 2, 8, 2)
        for _ in range(200):
            v1, v2 = np.random.normal(size=(2, 8))
            f1, f2 = np.random.normal(size=(2, 2))
            diff_v = v1 - v2
            diff_f = np.tile(f1 - f2, 4)
            cross = float(diff_v @ diff_f)
            bound = (diff_v @ diff_v + p.alpha ** 2 * (diff_f @ diff_f) -
                     2 * p.alpha * cross) / p.beta ** 2
            fused = psi_transform(v1, f1, p) - psi_transform(v2, f2, p)
            self.assertGreaterEqual(fused @ fused, bound - 1e-9)


class SelectParametersTestCase(unittest.TestCase):

    def test_theorem_bound(self):
        p = select_parameters(10, 2, 100, 10, 1)
        self.assertAlmostEqual(p.beta, 10)
        self.assertAlmostEqual(p.alpha, 31.6228, places=4)
        self.assertTrue(p.check_bounds())

    def test_zero_diameter_floor(self):
        p = select_parameters(0, 2, 4, 1, 1)
        self.assertEqual(p.beta, 1 + ETA_MIN)
        self.assertEqual(p.alpha, 1 + ETA_MIN)

    def test_loose_cluster_bound(self):
        p = select_parameters(10, 2, 4, 1, 10)
        self.assertEqual(p.beta, 1 + ETA_MIN)

    def test_degenerate_separation(self):
        with self.assertRaises(DegenerateSeparationError):
            select_parameters(10, 0, 4, 1, 1)

    def test_single_class(self):
        p = select_parameters(10, NO_SEPARATION_NEEDED, 4, 1, 1)
        self.assertEqual(p.alpha, 1 + ETA_MIN)

    def test_invalid_arguments(self):
        with self.assertRaises(InvalidDimensionError):
            select_parameters(1, 1, 4, 5, 1)
        with self.assertRaises(InvalidArgumentError):
            select_parameters(1, 1, 4, 2, 0)
        with self.assertRaises(InvalidArgumentError):
            FusionParams.override(1, 2, 4, 2)

    def test_corollary_form_differs(self):
        # The closed form ignores beta and is looser than the bound used
        corollary = optimal_corollary_alpha(10, 2, 100, 10, 1)
        self.assertAlmostEqual(corollary, 10 / (2 * math.sqrt(10)) * 2)
        self.assertLess(corollary, select_parameters(10, 2, 100, 10, 1).alpha)

    def test_check_bounds_detects_small_alpha(self):
        p = select_parameters(10, 2, 100, 10, 1)
        small = FusionParams(p.alpha / 2, p.beta, 1, 10, 2, 100, 10)
        self.assertFalse(small.check_bounds())


class EstimateExtremesTestCase(unittest.TestCase):

    def test_one_pair(self):
        delta_max, sigma_min = estimate_extremes([[0, 0], [3, 4]], [[0], [1]])
        self.assertEqual(delta_max, 5)
        self.assertEqual(sigma_min, 1)

    def test_degenerate(self):
        delta_max, sigma_min = estimate_extremes([[0, 0], [0, 0]], [[2], [2]])
        self.assertEqual(delta_max, 0)
        self.assertEqual(sigma_min, NO_SEPARATION_NEEDED)

    def test_brute_force(self):
        contents = np.random.normal(size=(100, 5))
        attrs = np.random.randint(0, 6, size=(100, 2)).astype(float)
        delta_max, sigma_min = estimate_extremes(contents, attrs,
                                                 chunk_size=17)
        best_delta, best_sigma = 0.0, math.inf
        for i in range(100):
            for j in range(100):
                best_delta = max(best_delta,
                                 np.linalg.norm(contents[i] - contents[j]))
                if np.any(attrs[i] != attrs[j]):
                    best_sigma = min(best_sigma,
                                     np.linalg.norm(attrs[i] - attrs[j]))
        self.assertAlmostEqual(delta_max, best_delta, places=9)
        self.assertAlmostEqual(sigma_min, best_sigma, places=9)


class ClassKeysTestCase(unittest.TestCase):

    def test_bitwise_identity(self):
        keys = class_keys([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0000001]])
        self.assertEqual(keys[0], keys[1])
        self.assertNotEqual(keys[0], keys[2])
        np.testing.assert_array_equal(key_to_vector(keys[2]), [1.0, 2.0000001])


if __name__ == "__main__":
    unittest.main()
