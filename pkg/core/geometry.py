"""
Geometry of range-filtered queries in the fused space.

A range query :math:`Q = (q, l, u)` becomes the segment joining
:math:`\\Psi(q, l)` and :math:`\\Psi(q, u)`: every attribute
:math:`f = (1 - t) l + t u` of the range is mapped to the point of parameter
:math:`t` on the segment, and a record with attribute in the range lies at
distance at most :math:`\\|v - q\\| / \\beta` from it.
"""
import math
import numpy as np
from dataclasses import dataclass


from .fusion import as_matrix, as_vector, psi_transform
from .stats import ceil_count
from .exceptions import (
    DegenerateLineError,
    InvalidArgumentError,
    InvalidDimensionError,
    InvalidRangeError,
)


@dataclass(frozen=True, eq=False)
class LineSegment:
    """The segment :math:`L(t) = (1 - t) a + t b` for t in [0, 1]."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", as_vector(self.a, "endpoint"))
        object.__setattr__(self, "b", as_vector(self.b, "endpoint"))
        if self.a.shape != self.b.shape:
            raise InvalidDimensionError("segment endpoints differ in "
                                        "dimension")

    def __eq__(self, other):
        return isinstance(other, LineSegment) and \
            np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)

    __hash__ = None

    @property
    def direction(self):
        return self.b - self.a

    @property
    def length(self):
        return float(np.linalg.norm(self.b - self.a))

    @property
    def midpoint(self):
        return (self.a + self.b) / 2

    @property
    def dimension(self):
        return self.a.shape[0]

    @property
    def is_degenerate(self):
        return bool(np.array_equal(self.a, self.b))

    def point(self, t):
        return (1 - t) * self.a + t * self.b


@dataclass(frozen=True, eq=False)
class RangeQuery:
    """
    Content ``q`` and the attribute box ``[l, u]``.

    :raises InvalidRangeError: when ``l > u`` in some component.
    """

    q: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", as_vector(self.q, "query content"))
        object.__setattr__(self, "l", as_vector(self.l, "range lower end"))
        object.__setattr__(self, "u", as_vector(self.u, "range upper end"))
        if self.l.shape != self.u.shape:
            raise InvalidDimensionError("range ends differ in dimension")
        if np.any(self.l > self.u):
            raise InvalidRangeError(
                "lower end {} exceeds upper end {}".format(self.l, self.u))

    def contains(self, attrs):
        """Mask of the attribute vectors inside the box."""
        attrs = np.asarray(attrs, dtype=np.float64)
        return np.all((attrs >= self.l) & (attrs <= self.u), axis=-1)


@dataclass(frozen=True)
class CylCoords:
    t: float
    r: float


@dataclass(frozen=True)
class RadiusParams:
    """
    :param float d_k: the k-th neighbour content distance.
    :param int n: the number of records.
    :param float sigma: the standard deviation of the neighbour distances.
    :param float delta: the failure probability.
    """

    d_k: float
    n: int
    sigma: float
    delta: float

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("n must be >= 1")
        for value in (self.d_k, self.sigma, self.delta):
            if not math.isfinite(value):
                raise InvalidArgumentError("radius parameters must be finite")


def range_to_line(Q, p):
    """
    The fused-space segment of a range query.

    :param Q: a :class:`core.geometry.RangeQuery` object.
    :param p: the :class:`core.fusion.FusionParams` of the index.
    :return: a :class:`core.geometry.LineSegment` from
    :math:`\\Psi(q, l)` to :math:`\\Psi(q, u)`.

    """
    if np.any(Q.l > Q.u):
        raise InvalidRangeError("lower end exceeds upper end")
    return LineSegment(psi_transform(Q.q, Q.l, p), psi_transform(Q.q, Q.u, p))


def _projection(x, L):
    ab = L.b - L.a
    length2 = float(ab @ ab)
    if length2 == 0:
        return np.zeros(x.shape[0]), np.broadcast_to(L.a, x.shape)
    t = np.clip((x - L.a) @ ab / length2, 0.0, 1.0)
    return t, L.a + t[:, None] * ab


def points_segment_distance(x, L):
    """Distance of every row of x to the segment."""
    x = as_matrix(x, "points")
    if x.shape[1] != L.dimension:
        raise InvalidDimensionError(
            "points of dimension {}, segment of dimension {}".format(
                x.shape[1], L.dimension))
    _, proj = _projection(x, L)
    return np.linalg.norm(x - proj, axis=1)


def point_segment_distance(x, L):
    """Minimum of :math:`\\|x - L(t)\\|` over t in [0, 1]."""
    return float(points_segment_distance(as_vector(x)[None, :], L)[0])


def directed_hausdorff(L1, L2):
    """Largest distance from a point of L1 to the segment L2."""
    ends = np.array([L1.a, L1.b])
    return float(points_segment_distance(ends, L2).max())


def directed_distances(L, a, b):
    """
    Directed Hausdorff distance from L to every segment ``[a_i, b_i]``, the
    rows of a and b.
    """
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape != b.shape or a.shape[1] != L.dimension:
        raise InvalidDimensionError(
            "segments of shape {} and {}, query of dimension {}".format(
                a.shape, b.shape, L.dimension))
    ab = b - a
    length2 = np.einsum("ij,ij->i", ab, ab)
    out = np.zeros(a.shape[0])
    for x in (L.a, L.b):
        ax = x - a
        t = np.divide(np.einsum("ij,ij->i", ax, ab), length2,
                      out=np.zeros_like(length2), where=length2 > 0)
        t = np.clip(t, 0.0, 1.0)
        out = np.maximum(out, np.linalg.norm(ax - t[:, None] * ab, axis=1))
    return out


def hausdorff_distance(L1, L2):
    """
    Hausdorff distance between two segments. The distance from a point moving
    along a segment to a convex set is a convex function of its parameter, so
    each directed distance is reached at an endpoint.
    """
    return max(directed_hausdorff(L1, L2), directed_hausdorff(L2, L1))


def segment_distance(L1, L2):
    """Minimum distance between two segments (closest points of both)."""
    d1, d2, r = L1.direction, L2.direction, L1.a - L2.a
    a, e, f = float(d1 @ d1), float(d2 @ d2), float(d2 @ r)
    if a == 0 and e == 0:
        return float(np.linalg.norm(r))
    if a == 0:
        s, t = 0.0, min(max(f / e, 0.0), 1.0)
    else:
        c = float(d1 @ r)
        if e == 0:
            s, t = min(max(-c / a, 0.0), 1.0), 0.0
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom > 0 \
                else 0.0
            t = (b * s + f) / e
            if t < 0:
                s, t = min(max(-c / a, 0.0), 1.0), 0.0
            elif t > 1:
                s, t = min(max((b - c) / a, 0.0), 1.0), 1.0
    closest = float(np.linalg.norm(L1.point(s) - L2.point(t)))
    # The endpoint distances bound the result from above
    ends = min(
        points_segment_distance(np.array([L1.a, L1.b]), L2).min(),
        points_segment_distance(np.array([L2.a, L2.b]), L1).min(),
    )
    return min(closest, float(ends))


def line_similarity(L1, L2, w_d=0.4, w_p=0.4, w_l=0.2, D_max=1.0):
    """
    Similarity in [0, 1] of two non-degenerate segments, mixing the
    alignment of their directions, the distance of their midpoints relative
    to ``D_max`` and the ratio of their lengths.

    :param float w_d: the weight of the direction term.
    :param float w_p: the weight of the position term.
    :param float w_l: the weight of the length term.
    :param float D_max: the largest distance in the space.
    :rtype: float

    """
    weights = (w_d, w_p, w_l)
    if min(weights) < 0 or abs(sum(weights) - 1) > 1e-9:
        raise InvalidArgumentError("similarity weights must be non-negative "
                                   "and sum to 1")
    if not D_max > 0:
        raise InvalidArgumentError("D_max must be > 0")
    len1, len2 = L1.length, L2.length
    if len1 == 0 or len2 == 0:
        raise DegenerateLineError("similarity needs segments of positive "
                                  "length")
    u1, u2 = L1.direction / len1, L2.direction / len2
    if u1 @ u2 < 0:
        u2 = -u2
    # |cos| written as 1 - |u1 - u2|^2 / 2, exact for identical directions
    direction = 1 - min(1.0, float((u1 - u2) @ (u1 - u2)) / 2)
    position = max(0.0, 1 - float(np.linalg.norm(L1.midpoint - L2.midpoint))
                   / D_max)
    ratio = min(len1 / len2, len2 / len1)
    sim = w_d * direction + w_p * position + w_l * ratio
    return min(max(sim, 0.0), 1.0)


def cylindrical_coords_batch(x, L):
    """Arrays of the axial parameter t and the radius r of every row of x."""
    if L.is_degenerate:
        raise DegenerateLineError("cylindrical coordinates need a segment "
                                  "of positive length")
    x = as_matrix(x, "points")
    t, proj = _projection(x, L)
    return t, np.linalg.norm(x - proj, axis=1)


def cylindrical_coords(x, L):
    """
    The clamped axial parameter :math:`t` of the projection of x on the
    segment and its distance :math:`r` from it.

    :return: a :class:`core.geometry.CylCoords` object.
    """
    t, r = cylindrical_coords_batch(as_vector(x)[None, :], L)
    return CylCoords(float(t[0]), float(r[0]))


def optimal_radius(rp, beta):
    """
    Cylinder radius :math:`d_k / \\beta + \\sqrt{-\\ln(\\delta/2) / (2n)}
    \\, \\sigma`.

    :param rp: a :class:`core.geometry.RadiusParams` object.
    :param float beta: the beta of the index.

    """
    if not (0 < rp.delta < 2):
        raise InvalidArgumentError(
            "delta must be in (0, 2), got {}".format(rp.delta))
    return rp.d_k / beta + \
        math.sqrt(-math.log(rp.delta / 2) / (2 * rp.n)) * rp.sigma


def local_density(L, points, r):
    """Points per unit volume of the tube of radius r around L."""
    if not r > 0:
        raise InvalidArgumentError("r must be > 0")
    if L.is_degenerate:
        raise DegenerateLineError("density needs a segment of positive "
                                  "length")
    if len(points) == 0:
        return 0.0
    n_r = int(np.count_nonzero(points_segment_distance(points, L) <= r))
    return n_r / (math.pi * r ** 2 * L.length)


def adjusted_k(k, eps, delta_H, eta, c=2.0):
    """
    Candidate count compensating a query line served by an indexed line at
    Hausdorff distance ``delta_H``:
    :math:`k + \\lceil c \\ln(1/\\epsilon) \\delta_H \\eta \\rceil`.
    """
    if int(k) != k or k < 1:
        raise InvalidArgumentError("k must be a positive integer")
    if not (0 < eps < 1):
        raise InvalidArgumentError("eps must be in (0, 1)")
    if delta_H < 0 or eta < 0:
        raise InvalidArgumentError("delta_H and eta must be >= 0")
    return int(k) + ceil_count(c * -math.log(eps) * delta_H * eta)
