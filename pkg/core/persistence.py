"""
Index files. A file starts with the magic ``FUSEDIDX``, a uint16 format
version and a uint16 index kind, continues with tagged sections (4-byte tag,
uint64 length, payload) and ends with the SHA-256 digest of everything
before it. All integers are little-endian.

Sections: ``PARM`` fusion parameters of hybrid indexes, ``RECS`` content and
attribute arrays, ``STAT`` class statistics, ``BKND`` backend, ``CHAN``
multi-attribute chain, ``RNGE`` range index and ``VOCB`` categorical
vocabularies.
"""
import pickle
import struct
import hashlib
import logging
import numpy as np
from io import BytesIO


from .multi import TransformChain
from .fusion import FusionParams
from .hybrid import HybridIndex
from .range_index import RangeIndex
from .exceptions import (
    InvalidArgumentError,
    IndexLoadError,
    ChecksumError,
    UnsupportedVersionError,
)


logger = logging.getLogger(__name__)

MAGIC = b"FUSEDIDX"
VERSION = 1
HEADER = struct.Struct("<8sHH")
SECTION = struct.Struct("<4sQ")
PARAMS = struct.Struct("<dddddII?")
DIGEST_SIZE = 32
PICKLE_PROTOCOL = 4

KIND_HYBRID, KIND_CHAIN, KIND_RANGE = 1, 2, 3


def _pack_params(p):
    return PARAMS.pack(p.alpha, p.beta, p.epsilon_f, p.delta_max, p.sigma_min,
                       p.d, p.m, p.overridden)


def _unpack_params(payload):
    alpha, beta, epsilon_f, delta_max, sigma_min, d, m, overridden = \
        PARAMS.unpack(payload)
    return FusionParams(alpha, beta, epsilon_f, delta_max, sigma_min, d, m,
                        overridden)


def _pack_arrays(*arrays):
    buffer = BytesIO()
    for a in arrays:
        np.save(buffer, a, allow_pickle=False)
    return buffer.getvalue()


def _unpack_arrays(payload, n):
    buffer = BytesIO(payload)
    return [np.load(buffer, allow_pickle=False) for _ in range(n)]


def _sections(index, vocabulary):
    if isinstance(index, HybridIndex):
        kind = KIND_HYBRID
        sections = [
            (b"PARM", _pack_params(index.params)),
            (b"RECS", _pack_arrays(index.contents, index.attrs)),
            (b"STAT", pickle.dumps(index.stats, protocol=PICKLE_PROTOCOL)),
            (b"BKND", pickle.dumps(index.backend, protocol=PICKLE_PROTOCOL)),
        ]
    elif isinstance(index, TransformChain):
        kind = KIND_CHAIN
        sections = [
            (b"CHAN", pickle.dumps(index, protocol=PICKLE_PROTOCOL)),
        ]
    elif isinstance(index, RangeIndex):
        kind = KIND_RANGE
        sections = [
            (b"RNGE", pickle.dumps(index, protocol=PICKLE_PROTOCOL)),
        ]
    else:
        raise InvalidArgumentError(
            "cannot save an object of type {}".format(type(index).__name__))
    if vocabulary:
        sections.append((b"VOCB", pickle.dumps(vocabulary,
                                               protocol=PICKLE_PROTOCOL)))
    return kind, sections


def save_index(index, path, vocabulary=None):
    """
    Write an index file.

    :param index: a :class:`core.hybrid.HybridIndex`,
    :class:`core.multi.TransformChain` or :class:`core.range_index.RangeIndex`.
    :param str path: the destination.
    :param dict vocabulary: the categorical embedders to store with it.

    """
    kind, sections = _sections(index, vocabulary)
    body = BytesIO()
    body.write(HEADER.pack(MAGIC, VERSION, kind))
    for tag, payload in sections:
        body.write(SECTION.pack(tag, len(payload)))
        body.write(payload)
    data = body.getvalue()
    with open(path, "wb") as f:
        f.write(data)
        f.write(hashlib.sha256(data).digest())
    logger.info("index saved to %s (%d bytes)", path, len(data) + DIGEST_SIZE)


def _read_sections(data):
    if len(data) < HEADER.size + DIGEST_SIZE:
        raise IndexLoadError("file too short for an index")
    magic, version, kind = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise IndexLoadError("not an index file (bad magic)")
    body, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if version != VERSION:
        raise UnsupportedVersionError(
            "index format version {} not supported (expected {})".format(
                version, VERSION))
    sections, offset = {}, HEADER.size
    while offset < len(body):
        if len(body) - offset < SECTION.size:
            raise IndexLoadError("truncated section header at offset "
                                 "{}".format(offset))
        tag, length = SECTION.unpack_from(body, offset)
        offset += SECTION.size
        if len(body) - offset < length:
            raise IndexLoadError("truncated section {!r}".format(tag))
        sections[tag] = body[offset:offset + length]
        offset += length
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("index file checksum mismatch")
    return kind, sections


def load_index(path):
    """
    Read an index file written by :func:`save_index`.

    :return: the index and the stored vocabulary (``None`` when absent).
    :rtype: tuple
    :raises IndexLoadError: when the file is truncated or not an index.
    :raises ChecksumError: when the content does not match the digest.
    :raises UnsupportedVersionError: on an unknown format version.

    """
    with open(path, "rb") as f:
        data = f.read()
    kind, sections = _read_sections(data)
    try:
        if kind == KIND_HYBRID:
            contents, attrs = _unpack_arrays(sections[b"RECS"], 2)
            index = HybridIndex(_unpack_params(sections[b"PARM"]),
                                pickle.loads(sections[b"STAT"]),
                                pickle.loads(sections[b"BKND"]), contents,
                                attrs)
        elif kind == KIND_CHAIN:
            index = pickle.loads(sections[b"CHAN"])
        elif kind == KIND_RANGE:
            index = pickle.loads(sections[b"RNGE"])
        else:
            raise IndexLoadError("unknown index kind {}".format(kind))
    except KeyError as e:
        raise IndexLoadError("missing section {}".format(e))
    vocabulary = pickle.loads(sections[b"VOCB"]) if b"VOCB" in sections \
        else None
    logger.info("loaded %s from %s", index, path)
    return index, vocabulary
