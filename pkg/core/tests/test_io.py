import os
import random
import tempfile
import unittest
import numpy as np


from ..exceptions import (
    InvalidArgumentError,
    InvalidDimensionError,
    ParseError,
)
from ..io import (
    AttributeEmbedder,
    DatasetBundle,
    embed_attributes,
    load_attributes,
    load_dataset,
    load_vectors,
    parse_schema,
    write_vectors,
)


# Set seed values
random.seed(123)
np.random.seed(12)


def record(values, dtype="<f4"):
    values = np.asarray(values, dtype=dtype)
    return np.array([values.shape[0]], dtype="<i4").tobytes() + \
        values.tobytes()


class VectorFileTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name, data=None):
        path = os.path.join(self.tmp.name, name)
        if data is not None:
            with open(path, "wb") as f:
                f.write(data)
        return path

    def test_single_fvecs_record(self):
        x = load_vectors(self.path("one.fvecs", record([5.0, 0.0])))
        np.testing.assert_array_equal(x, [[5.0, 0.0]])
        self.assertEqual(x.dtype, np.float64)

    def test_bvecs_widening(self):
        x = load_vectors(self.path("b.bvecs", record([255, 0, 7], "u1")))
        np.testing.assert_array_equal(x, [[255.0, 0.0, 7.0]])

    def test_round_trip(self):
        x = np.random.normal(size=(100, 12)).astype(np.float32)
        path = self.path("x.fvecs")
        write_vectors(path, x)
        np.testing.assert_array_equal(load_vectors(path), x)
        path = self.path("x.csv")
        write_vectors(path, x)
        np.testing.assert_array_equal(load_vectors(path), x)

    def test_truncated_record(self):
        data = record([1.0, 2.0]) + np.array([2], "<i4").tobytes() + b"\0" * 4
        with self.assertRaises(ParseError) as ctx:
            load_vectors(self.path("bad.fvecs", data))
        self.assertEqual(ctx.exception.offset, 12)

    def test_dimension_change(self):
        data = record([1.0, 2.0]) + record([1.0, 2.0, 3.0])
        with self.assertRaises(ParseError) as ctx:
            load_vectors(self.path("bad.fvecs", data))
        self.assertEqual(ctx.exception.offset, 12)

    def test_truncated_header(self):
        with self.assertRaises(ParseError) as ctx:
            load_vectors(self.path("bad.fvecs", record([1.0]) + b"\1\0"))
        self.assertEqual(ctx.exception.offset, 8)

    def test_bad_csv_row(self):
        path = self.path("bad.csv", b"1,2\n3,x\n")
        with self.assertRaises(ParseError) as ctx:
            load_vectors(path)
        self.assertEqual(ctx.exception.offset, 1)

    def test_format(self):
        with self.assertRaises(InvalidArgumentError):
            load_vectors(self.path("x.npy", b""))
        x = load_vectors(self.path("x.bin", record([1.0])), format="fvecs")
        np.testing.assert_array_equal(x, [[1.0]])

    def test_bvecs_range(self):
        with self.assertRaises(InvalidArgumentError):
            write_vectors(self.path("x.bvecs"), [[256.0]])
        with self.assertRaises(InvalidArgumentError):
            write_vectors(self.path("x.bvecs"), [[1.5]])


class EmbedAttributesTestCase(unittest.TestCase):

    def test_equal_tokens(self):
        v = embed_attributes(["A", "A", "B"], 3)
        np.testing.assert_array_equal(v[0], v[1])
        self.assertGreaterEqual(np.linalg.norm(v[0] - v[2]), 1)

    def test_numeric_pass_through(self):
        values = np.random.normal(size=(10, 2))
        np.testing.assert_array_equal(embed_attributes(values, 2), values)
        np.testing.assert_array_equal(embed_attributes([1.5, 2.5], 1),
                                      [[1.5], [2.5]])
        with self.assertRaises(InvalidDimensionError):
            embed_attributes(values, 3)

    def test_distinct_tokens(self):
        tokens = ["token-{}".format(i) for i in range(10000)]
        v = embed_attributes(tokens, 10)
        self.assertEqual(np.unique(v, axis=0).shape[0], 10000)
        # Integer points: distinct means at distance at least 1
        self.assertTrue(np.all(v == np.round(v)))

    def test_seeded(self):
        a = AttributeEmbedder(2, seed=1).fit_transform(["x", "y"])
        b = AttributeEmbedder(2, seed=1).fit_transform(["y", "x"])[::-1]
        np.testing.assert_array_equal(a, b)

    def test_collisions(self):
        embedder = AttributeEmbedder(1)
        self.assertEqual(embedder.side, 65536)
        small = AttributeEmbedder(16)
        v = small.fit_transform(["t{}".format(i) for i in range(300)])
        self.assertEqual(np.unique(v, axis=0).shape[0], 300)

    def test_unknown_token(self):
        embedder = AttributeEmbedder(2).fit(["a", "b"])
        known = embedder.transform(["a", "b"])
        unknown = embedder.transform(["c"])[0]
        self.assertEqual(len(embedder), 2)
        self.assertTrue(np.all(np.linalg.norm(known - unknown, axis=1) >= 1))


class AttributeFileTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "attrs.csv")
        with open(self.path, "w") as f:
            f.write("id,color,price\n2,red,1.0\n0,blue,2.0\n1,red,3.5\n")

    def tearDown(self):
        self.tmp.cleanup()

    def test_inferred_schema(self):
        attrs_list, embedders = load_attributes(self.path)
        self.assertEqual(len(attrs_list), 2)
        self.assertEqual(list(embedders), [0])
        colors, prices = attrs_list
        np.testing.assert_array_equal(prices, [[2.0], [3.5], [1.0]])
        np.testing.assert_array_equal(colors[1], colors[2])
        self.assertFalse(np.array_equal(colors[0], colors[1]))

    def test_schema_sidecar(self):
        with open(self.path + ".schema", "w") as f:
            f.write("cat:3,num:1\n")
        attrs_list, _ = load_attributes(self.path)
        self.assertEqual(attrs_list[0].shape, (3, 3))

    def test_query_file_reuses_vocabulary(self):
        _, embedders = load_attributes(self.path)
        queries = os.path.join(self.tmp.name, "queries.csv")
        with open(queries, "w") as f:
            f.write("id,color,price\n0,red,1.0\n1,green,1.0\n")
        attrs_list, _ = load_attributes(queries, embedders=embedders,
                                        fit=False)
        data, _ = load_attributes(self.path, embedders=embedders)
        np.testing.assert_array_equal(attrs_list[0][0], data[0][1])
        self.assertFalse(np.any(np.all(data[0] == attrs_list[0][1], axis=1)))
        self.assertEqual(len(embedders[0]), 2)

    def test_bad_schema(self):
        with self.assertRaises(ParseError):
            parse_schema("num:1,vec:2")
        with self.assertRaises(ParseError):
            load_attributes(self.path, schema="num:1")
        self.assertEqual(parse_schema("num:2, cat:4"), [("num", 2),
                                                        ("cat", 4)])

    def test_missing_id(self):
        path = os.path.join(self.tmp.name, "noid.csv")
        with open(path, "w") as f:
            f.write("color\nred\n")
        with self.assertRaises(ParseError):
            load_attributes(path)

    def test_bad_numeric(self):
        with self.assertRaises(ParseError) as ctx:
            load_attributes(self.path, schema="num:1,num:1")
        self.assertEqual(ctx.exception.offset, 1)


class DatasetTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.vectors = os.path.join(self.tmp.name, "base.fvecs")
        self.attributes = os.path.join(self.tmp.name, "attrs.csv")
        write_vectors(self.vectors, np.arange(12).reshape(4, 3))
        with open(self.attributes, "w") as f:
            f.write("id,a,b\n0,x,1\n1,y,2\n2,x,3\n3,z,4\n")

    def tearDown(self):
        self.tmp.cleanup()

    def test_bundle(self):
        bundle = load_dataset(self.vectors, self.attributes, cat_m=2)
        self.assertIsInstance(bundle, DatasetBundle)
        self.assertEqual(bundle.metadata(), {"N": 4, "d": 3, "F": 2,
                                             "m": [2, 1]})
        records = list(bundle.records())
        self.assertEqual(records[3].id, 3)
        np.testing.assert_array_equal(records[3].content, [9, 10, 11])
        np.testing.assert_array_equal(records[3].attrs[1], [4.0])

    def test_count_mismatch(self):
        write_vectors(self.vectors, np.arange(9).reshape(3, 3))
        with self.assertRaises(InvalidDimensionError):
            load_dataset(self.vectors, self.attributes)


if __name__ == "__main__":
    unittest.main()
