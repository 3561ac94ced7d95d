"""
Dataset ingestion. Content vectors come in the ``fvecs``/``bvecs`` formats
(little-endian records of an int32 dimension followed by the float32 or uint8
components) or as CSV, one vector per row. Attributes come as a CSV with
header ``id,attr_1,...`` and an optional sidecar ``<file>.schema`` grouping
the columns in attributes, e.g. ``num:2,cat:4``.
"""
import os
import hashlib
import logging
import numpy as np
import pandas as pd
from dataclasses import dataclass, field


from .fusion import as_matrix
from .exceptions import (
    InvalidArgumentError,
    InvalidDimensionError,
    EmptyDatasetError,
    ParseError,
)


logger = logging.getLogger(__name__)

FORMATS = ("fvecs", "bvecs", "csv")
COMPONENT_TYPES = {"fvecs": np.dtype("<f4"), "bvecs": np.dtype("u1")}


def _format_of(path, format):
    if format is None:
        format = os.path.splitext(path)[1].lstrip(".").lower()
    if format not in FORMATS:
        raise InvalidArgumentError(
            "unknown vector format {!r}, expected one of {}".format(format,
                                                                    FORMATS))
    return format


def _read_records(data, dtype):
    """Parse the records one by one, reporting the offset of a bad one."""
    vectors, offset, dim = [], 0, None
    while offset < len(data):
        if len(data) - offset < 4:
            raise ParseError("truncated dimension header", offset)
        d = int(np.frombuffer(data, dtype="<i4", count=1, offset=offset)[0])
        if d <= 0:
            raise ParseError("non-positive dimension {}".format(d), offset)
        if dim is not None and d != dim:
            raise ParseError("dimension {} differs from {}".format(d, dim),
                             offset)
        size = d * dtype.itemsize
        if len(data) - offset - 4 < size:
            raise ParseError("truncated record of dimension {}".format(d),
                             offset)
        vectors.append(np.frombuffer(data, dtype=dtype, count=d,
                                     offset=offset + 4))
        dim, offset = d, offset + 4 + size
    if not vectors:
        return np.zeros((0, 0))
    return np.array(vectors, dtype=np.float64)


def load_vectors(path, format=None):
    """
    Read content vectors.

    :param str path: the file to read.
    :param str format: ``fvecs``, ``bvecs`` or ``csv``; inferred from the
    extension when omitted.
    :return: an (N, d) float64 array; uint8 components are widened exactly.
    :raises ParseError: on a malformed record, with its byte offset (its row
    for CSV).

    """
    format = _format_of(path, format)
    if format == "csv":
        try:
            frame = pd.read_csv(path, header=None)
        except pd.errors.EmptyDataError:
            raise ParseError("empty vector file", 0)
        values = frame.apply(pd.to_numeric, errors="coerce")
        bad = values.isna().any(axis=1).to_numpy()
        if bad.any():
            raise ParseError("non-numeric vector component",
                             int(np.argmax(bad)))
        return values.to_numpy(dtype=np.float64)
    dtype = COMPONENT_TYPES[format]
    with open(path, "rb") as f:
        data = f.read()
    if len(data) >= 4:
        d = int(np.frombuffer(data, dtype="<i4", count=1)[0])
        width = 4 + d * dtype.itemsize
        if d > 0 and len(data) % width == 0:
            # Every record has the same length: read them in one go
            raw = np.frombuffer(data, dtype="u1").reshape(-1, width)
            if np.all(raw[:, :4].copy().view("<i4")[:, 0] == d):
                vectors = raw[:, 4:].copy().view(dtype).astype(np.float64)
                logger.debug("read %d vectors from %s", len(vectors), path)
                return vectors
    vectors = _read_records(data, dtype)
    logger.debug("read %d vectors from %s", len(vectors), path)
    return vectors


def write_vectors(path, vectors, format=None):
    """Write vectors in one of the formats read by :func:`load_vectors`."""
    format = _format_of(path, format)
    x = as_matrix(vectors, "vectors")
    n, d = x.shape
    if format == "csv":
        pd.DataFrame(x).to_csv(path, header=False, index=False,
                               float_format="%.17g")
        return
    dtype = COMPONENT_TYPES[format]
    if format == "bvecs" and (np.any(x != np.round(x)) or x.min() < 0 or
                              x.max() > 255):
        raise InvalidArgumentError("bvecs components must be integers in "
                                   "0..255")
    out = np.empty((n, 4 + d * dtype.itemsize), dtype="u1")
    out[:, :4] = np.array([d], dtype="<i4").view("u1")
    out[:, 4:] = x.astype(dtype).view("u1").reshape(n, -1)
    out.tofile(path)


class AttributeEmbedder(object):
    """
    Deterministic embedding of categorical tokens. A token is hashed with a
    seeded BLAKE2b digest to a cell of an m-dimensional integer grid of side
    ``max(4, ceil(2 ** (16 / m)))`` centred on the origin; a taken cell
    passes the token on to the next free one, so distinct tokens always lie at
    distance at least 1.

    :param int m: the dimension of the attribute vectors.
    :param int seed: the key of the hash.

    """

    def __init__(self, m, seed=0):
        if m < 1:
            raise InvalidArgumentError("m must be >= 1")
        self.m = int(m)
        self.seed = seed
        self.side = max(4, int(np.ceil(2 ** (16 / self.m))))
        self.n_cells = self.side ** self.m
        self.vocabulary = {}
        self._taken = {}

    def __len__(self):
        return len(self.vocabulary)

    def _hash(self, token):
        digest = hashlib.blake2b(str(token).encode("utf-8"), digest_size=8,
                                 key=str(self.seed).encode("utf-8"))
        return int.from_bytes(digest.digest(), "little") % self.n_cells

    def _free_cell(self, token):
        if len(self._taken) >= self.n_cells:
            raise InvalidArgumentError("the embedding grid is full")
        cell = self._hash(token)
        while cell in self._taken:
            cell = (cell + 1) % self.n_cells
        return cell

    def _vector(self, cell):
        digits = []
        for _ in range(self.m):
            cell, digit = divmod(cell, self.side)
            digits.append(digit - self.side // 2)
        return np.array(digits, dtype=np.float64)

    def fit(self, tokens):
        """Add the new tokens to the vocabulary, in sorted order."""
        new = sorted(set(str(t) for t in tokens) - set(self.vocabulary))
        if len(self.vocabulary) + len(new) > self.n_cells:
            raise InvalidArgumentError(
                "{} tokens do not fit a grid of {} cells".format(
                    len(self.vocabulary) + len(new), self.n_cells))
        for token in new:
            cell = self._free_cell(token)
            self._taken[cell] = token
            self.vocabulary[token] = cell
        return self

    def transform(self, tokens):
        """
        Embed tokens. An unknown token gets a free cell without entering the
        vocabulary, so it never matches a known class.
        """
        return np.array([
            self._vector(self.vocabulary[str(t)] if str(t) in self.vocabulary
                         else self._free_cell(str(t)))
            for t in tokens
        ]).reshape(-1, self.m)

    def fit_transform(self, tokens):
        return self.fit(tokens).transform(tokens)


def _is_numeric(values):
    try:
        np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError):
        return False
    return True


def embed_attributes(values, m, seed=0, embedder=None):
    """
    Attribute vectors of numeric rows or categorical tokens.

    :param values: numeric rows, passed through, or a list of tokens.
    :param int m: the attribute dimension.
    :param int seed: the seed of the token hash.
    :param embedder: an :class:`AttributeEmbedder` whose vocabulary is
    extended and reused.
    :return: an (N, m) array.

    """
    if m < 1:
        raise InvalidArgumentError("m must be >= 1")
    if len(values) and _is_numeric(values) and not isinstance(values[0],
                                                              str):
        attrs = np.asarray(values, dtype=np.float64)
        attrs = attrs.reshape(-1, 1) if attrs.ndim == 1 else attrs
        if attrs.shape[1] != m:
            raise InvalidDimensionError(
                "numeric attributes of dimension {}, expected {}".format(
                    attrs.shape[1], m))
        return attrs
    if embedder is None:
        embedder = AttributeEmbedder(m, seed)
    return embedder.fit_transform(values)


def parse_schema(text):
    """
    Parse a schema line such as ``num:1,cat:4``.

    :return: a list of ``(kind, m)`` pairs.
    """
    schema = []
    for entry in text.strip().split(","):
        try:
            kind, m = entry.strip().split(":")
            m = int(m)
        except ValueError:
            raise ParseError("bad schema entry {!r}".format(entry))
        if kind not in ("num", "cat") or m < 1:
            raise ParseError("bad schema entry {!r}".format(entry))
        schema.append((kind, m))
    return schema


def load_attributes(path, schema=None, seed=0, embedders=None, cat_m=1,
                    fit=True):
    """
    Read the attribute CSV.

    :param str path: a CSV with header ``id,attr_1,...``; rows are ordered by
    id.
    :param schema: a schema line or list of ``(kind, m)`` pairs; read from
    ``<path>.schema`` when present, otherwise every numeric column is a 1-D
    attribute and every other column a categorical one of dimension
    ``cat_m``.
    :param dict embedders: the embedders of the categorical attributes by
    attribute index, reused to embed query files.
    :param bool fit: add new tokens to the vocabularies; query files are
    read with ``fit=False`` so unknown tokens match no class.
    :return: the list of (N, m_j) arrays and the embedders.
    :rtype: tuple

    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ParseError("empty attribute file", 0)
    if frame.columns[0] != "id":
        raise ParseError("attribute file must start with an id column", 0)
    ids = pd.to_numeric(frame["id"], errors="coerce")
    if ids.isna().any():
        raise ParseError("non-numeric id",
                         int(np.argmax(ids.isna().to_numpy())) + 1)
    frame = frame.iloc[np.argsort(ids.to_numpy(), kind="stable")]
    columns = list(frame.columns[1:])
    if schema is None and os.path.exists(path + ".schema"):
        with open(path + ".schema") as f:
            schema = f.read()
    if isinstance(schema, str):
        schema = parse_schema(schema)
    if schema is None:
        schema = [("num" if _is_numeric(frame[c].to_numpy()) else "cat", cat_m)
                  for c in columns]
    width = sum(m if kind == "num" else 1 for kind, m in schema)
    if width != len(columns):
        raise ParseError("schema declares {} columns, file has {}".format(
            width, len(columns)), 0)
    embedders = dict(embedders or {})
    attrs_list, col = [], 0
    for j, (kind, m) in enumerate(schema):
        if kind == "num":
            values = frame[columns[col:col + m]].apply(pd.to_numeric,
                                                       errors="coerce")
            bad = values.isna().any(axis=1).to_numpy()
            if bad.any():
                raise ParseError("non-numeric attribute {}".format(j + 1),
                                 int(np.argmax(bad)) + 1)
            attrs_list.append(values.to_numpy(dtype=np.float64))
            col += m
        else:
            embedder = embedders.setdefault(j, AttributeEmbedder(m, seed))
            tokens = list(frame[columns[col]])
            attrs_list.append(embedder.fit_transform(tokens) if fit
                              else embedder.transform(tokens))
            col += 1
    return attrs_list, embedders


@dataclass(frozen=True)
class Record:
    id: int
    content: np.ndarray
    attrs: tuple


@dataclass
class DatasetBundle:
    """
    The records read from a vector file and an attribute file.

    :param contents: the (N, d) content vectors.
    :param list attrs_list: one (N, m_j) array per attribute.
    :param dict embedders: the embedders of the categorical attributes.

    """

    vectors_path: str
    attributes_path: str
    contents: np.ndarray
    attrs_list: list
    embedders: dict = field(default_factory=dict)

    def __post_init__(self):
        for attrs in self.attrs_list:
            if attrs.shape[0] != self.contents.shape[0]:
                raise InvalidDimensionError(
                    "{} vectors but {} attribute rows".format(
                        self.contents.shape[0], attrs.shape[0]))

    @property
    def N(self):
        return self.contents.shape[0]

    @property
    def d(self):
        return self.contents.shape[1]

    @property
    def F(self):
        return len(self.attrs_list)

    @property
    def m(self):
        return tuple(a.shape[1] for a in self.attrs_list)

    def records(self):
        for i in range(self.N):
            yield Record(i, self.contents[i],
                         tuple(a[i] for a in self.attrs_list))

    def metadata(self):
        return {"N": self.N, "d": self.d, "F": self.F, "m": list(self.m)}


def load_dataset(vectors_path, attributes_path, format=None, schema=None,
                 seed=0, cat_m=1):
    """Read a vector file and its attribute file in a :class:`DatasetBundle`."""
    contents = load_vectors(vectors_path, format)
    if contents.shape[0] == 0:
        raise EmptyDatasetError("no vectors in {}".format(vectors_path))
    attrs_list, embedders = load_attributes(attributes_path, schema, seed,
                                            cat_m=cat_m)
    bundle = DatasetBundle(vectors_path, attributes_path, contents,
                           attrs_list, embedders)
    logger.info("dataset %s", bundle.metadata())
    return bundle
