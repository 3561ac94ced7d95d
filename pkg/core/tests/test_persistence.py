import os
import random
import tempfile
import unittest
import numpy as np


from ..io import AttributeEmbedder
from ..hybrid import build_index
from ..multi import build_chain
from ..range_index import build_range_index
from ..utils import gaussian_contents, hybrid_dataset
from ..persistence import (
    HEADER,
    KIND_RANGE,
    VERSION,
    _read_sections,
    load_index,
    save_index,
)
from ..exceptions import (
    ChecksumError,
    IndexLoadError,
    InvalidArgumentError,
    UnsupportedVersionError,
)


# Set seed values
random.seed(123)
np.random.seed(12)


class HybridPersistenceTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        rng = np.random.RandomState(3)
        cls.contents, cls.attrs, _ = hybrid_dataset(600, 8, 2, 5, rng=rng)
        cls.index = build_index(cls.contents, cls.attrs, backend="graph",
                                backend_params={"M": 8, "seed": 1})

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "index.bin")
        save_index(self.index, self.path)

    def tearDown(self):
        self.tmp.cleanup()

    def read(self):
        with open(self.path, "rb") as f:
            return bytearray(f.read())

    def write(self, data):
        with open(self.path, "wb") as f:
            f.write(data)

    def test_same_answers(self):
        loaded, vocabulary = load_index(self.path)
        self.assertIsNone(vocabulary)
        self.assertEqual(loaded.params, self.index.params)
        rng = np.random.RandomState(5)
        for _ in range(50):
            i = rng.randint(600)
            q = self.contents[i] + rng.normal(size=8)
            self.assertEqual(loaded.query(q, self.attrs[i], 10).ids,
                             self.index.query(q, self.attrs[i], 10).ids)

    def test_truncated(self):
        data = self.read()
        self.write(data[:len(data) // 2])
        with self.assertRaises(IndexLoadError):
            load_index(self.path)
        self.write(data[:10])
        with self.assertRaises(IndexLoadError):
            load_index(self.path)

    def test_bad_magic(self):
        data = self.read()
        data[:8] = b"NOTINDEX"
        self.write(data)
        with self.assertRaises(IndexLoadError):
            load_index(self.path)

    def test_version(self):
        data = self.read()
        data[8:10] = (VERSION + 1).to_bytes(2, "little")
        self.write(data)
        with self.assertRaises(UnsupportedVersionError):
            load_index(self.path)

    def test_checksum(self):
        data = self.read()
        data[HEADER.size + 40] ^= 0xFF
        self.write(data)
        with self.assertRaises(ChecksumError):
            load_index(self.path)

    def test_unknown_object(self):
        with self.assertRaises(InvalidArgumentError):
            save_index({"not": "an index"}, self.path)


class OtherKindsTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "index.bin")

    def tearDown(self):
        self.tmp.cleanup()

    def test_chain(self):
        rng = np.random.RandomState(4)
        contents = gaussian_contents(300, 4, rng=rng)
        attrs_list = [np.floor(rng.uniform(0, 3, size=(300, 1)))
                      for _ in range(2)]
        chain = build_chain(contents, attrs_list, (1, 0))
        save_index(chain, self.path)
        loaded, _ = load_index(self.path)
        self.assertEqual(loaded.priority, (1, 0))
        np.testing.assert_array_equal(loaded.fused, chain.fused)
        query_attrs = [a[7] for a in attrs_list]
        self.assertEqual(loaded.query(contents[7], query_attrs, 5).ids,
                         chain.query(contents[7], query_attrs, 5).ids)

    def test_range(self):
        rng = np.random.RandomState(8)
        contents = gaussian_contents(200, 3, rng=rng)
        attrs = rng.uniform(0, 10, size=(200, 1))
        index = build_range_index(contents, attrs, eps_cover=1.0, k=5,
                                  alpha=10, beta=2, n_grid=3, max_lines=50,
                                  n_holdout=20)
        save_index(index, self.path)
        loaded, _ = load_index(self.path)
        self.assertEqual(len(loaded.line_index), len(index.line_index))
        q, l, u = contents[3], [2.0], [6.0]
        self.assertEqual(
            loaded.query(q, l, u, 5, fallback=True).ids,
            index.query(q, l, u, 5, fallback=True).ids)
        with open(self.path, "rb") as f:
            kind, sections = _read_sections(f.read())
        self.assertEqual(kind, KIND_RANGE)
        # The range index carries its own parameters
        self.assertEqual(set(sections), {b"RNGE"})
        self.assertEqual(loaded.params, index.params)

    def test_vocabulary(self):
        embedder = AttributeEmbedder(2)
        attrs = embedder.fit_transform(["a", "b", "a", "c"] * 10)
        index = build_index(np.random.normal(size=(40, 4)), attrs)
        save_index(index, self.path, {0: embedder})
        _, vocabulary = load_index(self.path)
        np.testing.assert_array_equal(vocabulary[0].transform(["b", "c"]),
                                      embedder.transform(["b", "c"]))


if __name__ == "__main__":
    unittest.main()
