"""
Synthetic workloads: class labels drawn uniformly or from a Zipf law,
Gaussian-mixture contents, attribute vectors of the classes and the small
two-dimensional example with two attribute values.
"""
import numpy as np


from .exceptions import InvalidArgumentError


def uniform_labels(n, n_classes, rng=None):
    rng = np.random.RandomState(0) if rng is None else rng
    return rng.randint(n_classes, size=n)


def zipf_labels(n, n_classes, s=1.0, rng=None):
    """
    Class labels with :math:`P(c) \\propto (c + 1)^{-s}`; ``s`` in
    {0.5, 1.0, 1.5} gives mildly to strongly skewed workloads.
    """
    if s <= 0:
        raise InvalidArgumentError("s must be > 0")
    rng = np.random.RandomState(0) if rng is None else rng
    p = 1 / np.arange(1, n_classes + 1) ** s
    return rng.choice(n_classes, size=n, p=p / p.sum())


def gaussian_contents(n, d, n_centers=10, spread=1.0, scale=10.0, rng=None):
    """Contents drawn around ``n_centers`` random centres."""
    rng = np.random.RandomState(0) if rng is None else rng
    centers = rng.uniform(-scale, scale, size=(n_centers, d))
    return centers[rng.randint(n_centers, size=n)] + \
        rng.normal(scale=spread, size=(n, d))


def class_attributes(labels, m, rng=None):
    """
    Attribute vectors of the labels: distinct random points of the integer
    grid, one per class, so different classes lie at distance at least 1.
    """
    rng = np.random.RandomState(0) if rng is None else rng
    n_classes = int(np.max(labels)) + 1
    side = max(2, int(np.ceil(n_classes ** (1 / m))) + 1)
    cells = rng.choice(side ** m, size=n_classes, replace=False)
    grid = np.array([np.unravel_index(c, (side,) * m) for c in cells],
                    dtype=np.float64)
    return grid[np.asarray(labels)]


def hybrid_dataset(n, d, m, n_classes, s=None, rng=None):
    """
    Contents and attributes of a hybrid workload; the labels follow a Zipf
    law of exponent ``s``, or are uniform when ``s`` is None.

    :return: the contents, the attributes and the labels.
    :rtype: tuple

    """
    rng = np.random.RandomState(0) if rng is None else rng
    if s is None:
        labels = uniform_labels(n, n_classes, rng)
    else:
        labels = zipf_labels(n, n_classes, s, rng)
    contents = gaussian_contents(n, d, rng=rng)
    return contents, class_attributes(labels, m, rng), labels


# Points with f=-3 and points with f=+3 of the two-dimensional example
TOY_P = np.array([[5.0, 0.0], [-2.20, 4.33], [-2.50, -4.33]])
TOY_Q = np.array([[2.5, 4.33], [-5.0, 0.0], [2.5, -4.33], [3.54, 3.54]])
TOY_ALPHA, TOY_BETA = 3.0, 1.5


def toy_dataset():
    """
    Seven points of the plane, three with attribute -3 and four with
    attribute +3, meant to be fused with alpha=3 and beta=1.5.

    :return: the contents and the (7, 1) attributes.
    :rtype: tuple
    """
    contents = np.vstack([TOY_P, TOY_Q])
    attrs = np.array([[-3.0]] * len(TOY_P) + [[3.0]] * len(TOY_Q))
    return contents, attrs
