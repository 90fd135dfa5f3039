"""Bayesian similarity oracles.

A similarity oracle maps a pair of feature vectors to P(same | x, x'), the
probability that the two observations carry the same class label.  Oracles are
built either exactly from a ground-truth model (sum over classes of the product
of posteriors) or estimated from labelled pairs by kernel regression.
"""

import numpy as np

from .errors import NoTrainingPairsError
from .generative import _as_points
from .rng import make_rng

PROVENANCES = ("exact", "pair-estimated", "batched-estimated")

_CHUNK = 2048
_BLOCK = 4_000_000  # kernel weights held in memory at once


class SimilarityOracle:
    """Evaluable P(same | x, x') with provenance metadata.

    Parameters
    ----------
    pairwise : callable
        ``pairwise(X, Y)`` returns the (N, M) matrix of similarities between
        rows of ``X`` and rows of ``Y``.
    provenance : str
        One of ``"exact"``, ``"pair-estimated"``, ``"batched-estimated"``.
    dimension : int
        Feature dimension of the inputs.
    class_count : int, optional
        Number of classes, when known.
    paired : callable, optional
        ``paired(X, Y)`` returning the diagonal similarities s(X_i, Y_i);
        derived from ``pairwise`` when omitted.
    """

    def __init__(self, pairwise, provenance, dimension, class_count=None, paired=None):
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        self._pairwise = pairwise
        self._paired = paired
        self.provenance = provenance
        self.dimension = int(dimension)
        self.class_count = class_count

    def __repr__(self):
        return f"SimilarityOracle(provenance={self.provenance!r}, dimension={self.dimension})"

    @property
    def is_exact(self):
        return self.provenance == "exact"

    def pairwise(self, X, Y):
        X = _as_points(X, self.dimension)
        Y = _as_points(Y, self.dimension)
        out = np.empty((X.shape[0], Y.shape[0]))
        for start in range(0, X.shape[0], _CHUNK):
            out[start:start + _CHUNK] = self._pairwise(X[start:start + _CHUNK], Y)
        return np.clip(out, 0.0, 1.0)

    def paired(self, X, Y):
        X = _as_points(X, self.dimension)
        Y = _as_points(Y, self.dimension)
        if X.shape != Y.shape:
            raise ValueError("paired evaluation needs equally many points on each side")
        if self._paired is not None:
            return np.clip(self._paired(X, Y), 0.0, 1.0)
        return np.array([self.pairwise(x[None], y[None])[0, 0] for x, y in zip(X, Y)])

    def self_similarity(self, X):
        """P(same | x, x) for each row of ``X``."""
        return self.paired(X, X)

    def __call__(self, x, x_other):
        return float(self.paired(np.atleast_1d(x)[None, :], np.atleast_1d(x_other)[None, :])[0])


def exact_similarity(model):
    """Oracle computing sum_k P(k | x) P(k | x') from the model's posteriors."""

    def pairwise(X, Y):
        return model.posteriors(X) @ model.posteriors(Y).T

    def paired(X, Y):
        return np.sum(model.posteriors(X) * model.posteriors(Y), axis=1)

    return SimilarityOracle(pairwise, "exact", model.dimension, model.class_count, paired)


def similarity_distance(oracle, x, x_other):
    """Nearest-neighbour distance induced by the oracle, 1 - P(same | x, x')."""
    return 1.0 - oracle(x, x_other)


def silverman_bandwidth(first, second):
    """Multivariate Silverman rule on the pooled coordinates of all pairs."""
    pooled = np.concatenate([first.ravel(), second.ravel()])
    std = np.std(pooled)
    q75, q25 = np.percentile(pooled, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) if q75 > q25 else std
    if spread <= 0:
        spread = 1.0
    d = first.shape[1] + second.shape[1]
    n = first.shape[0]
    return float((4.0 / (d + 2)) ** (1.0 / (d + 4)) * spread * n ** (-1.0 / (d + 4)))


def estimate_similarity(pairs, bandwidth=None, provenance="pair-estimated"):
    """Nadaraya-Watson estimate of P(same | x, x') from labelled pairs.

    ``pairs`` is either a sequence of ``(x, x_other, same)`` triples or a tuple
    of arrays ``(X, X_other, same)``.  The estimator regresses the same-label
    indicator on the concatenated pair (x, x') with an isotropic Gaussian
    kernel of width ``bandwidth`` and answers every query as the average of
    the (x, x') and (x', x) estimates, so the result is symmetric.  Outputs are
    convex combinations of 0/1 targets and therefore already lie in [0, 1].
    """
    first, second, same = _unpack_pairs(pairs)
    if first.shape[0] == 0:
        raise NoTrainingPairsError("at least one training pair is required")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(first, second)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    inv = 1.0 / (2.0 * bandwidth**2)
    target = same.astype(float)

    def sq_dist(Q, R):
        return np.maximum(
            np.sum(Q**2, 1)[:, None] + np.sum(R**2, 1)[None, :] - 2.0 * Q @ R.T, 0.0
        )

    def regress(log_k):
        # log_k: (..., P) unnormalised log kernel weights
        shift = log_k.max(axis=-1, keepdims=True)
        w = np.exp(log_k - shift)
        return (w @ target) / w.sum(axis=-1)

    def pairwise(X, Y):
        dya, dyb = sq_dist(Y, first), sq_dist(Y, second)
        rows = max(1, _BLOCK // max(1, Y.shape[0] * first.shape[0]))
        out = np.empty((X.shape[0], Y.shape[0]))
        for s in range(0, X.shape[0], rows):
            dxa, dxb = sq_dist(X[s:s + rows], first), sq_dist(X[s:s + rows], second)
            forward = regress(-(dxa[:, None, :] + dyb[None, :, :]) * inv)
            backward = regress(-(dya[None, :, :] + dxb[:, None, :]) * inv)
            out[s:s + rows] = 0.5 * (forward + backward)
        return out

    def paired(X, Y):
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], _CHUNK):
            x, y = X[s:s + _CHUNK], Y[s:s + _CHUNK]
            forward = regress(-(sq_dist(x, first) + sq_dist(y, second)) * inv)
            backward = regress(-(sq_dist(y, first) + sq_dist(x, second)) * inv)
            out[s:s + _CHUNK] = 0.5 * (forward + backward)
        return out

    oracle = SimilarityOracle(pairwise, provenance, first.shape[1], paired=paired)
    oracle.bandwidth = float(bandwidth)
    oracle.pair_count = int(first.shape[0])
    return oracle


def _unpack_pairs(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 3 and isinstance(pairs[2], np.ndarray):
        first, second, same = (np.asarray(a) for a in pairs)
    else:
        pairs = list(pairs)
        if not pairs:
            raise NoTrainingPairsError("at least one training pair is required")
        first = np.array([np.atleast_1d(np.asarray(p[0], dtype=float)) for p in pairs])
        second = np.array([np.atleast_1d(np.asarray(p[1], dtype=float)) for p in pairs])
        same = np.array([bool(p[2]) for p in pairs])
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if first.ndim == 1:
        first, second = first[:, None], second[:, None]
    same = np.asarray(same, dtype=bool).reshape(-1)
    if not (first.shape[0] == second.shape[0] == same.shape[0]):
        raise ValueError("pair arrays differ in length")
    return first, second, same


def draw_pairs(model, seed, count):
    """Independent pairs from P(class, x) labelled by label agreement.

    Returns arrays ``(X, X_other, same)`` suitable for
    :func:`estimate_similarity`.
    """
    rng = make_rng(seed, 1)
    a = model.draw(rng, count)
    b = model.draw(rng, count)
    return a.points, b.points, a.labels == b.labels
