"""Exactly-known synthetic classification problems.

Two model families describe a joint distribution P(class, x):

* :class:`MixtureClassModel` -- each class-conditional density is a mixture of
  axis-aligned Gaussians, so densities and posteriors have closed forms.
* :class:`DiscreteClassModel` -- the feature space is a finite set of points,
  which lets tests enumerate expectations exactly instead of integrating.

Both expose the same vectorised surface (``log_joint``, ``posteriors``,
``density``, ``draw``) so that every downstream module can treat them alike.
Integrals over x are approximated on an :class:`EvalGrid`; for a discrete model
the grid is the support itself with unit weights, which makes the "quadrature"
exact.
"""

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import InsufficientGridError, ModelError, UnsupportedPointError
from .rng import make_rng

_SUM_TOL = 1e-12
GRID_HALF_WIDTH = 6.0  # in units of the largest component standard deviation
MIN_GRID_MASS = 0.999


class LabeledSample(NamedTuple):
    label: int
    point: np.ndarray


class Component(NamedTuple):
    weight: float
    mean: np.ndarray
    variances: np.ndarray


@dataclass(frozen=True)
class Samples:
    """A batch of labelled samples stored column-wise.

    Iterating yields :class:`LabeledSample` tuples; ``labels`` and ``points``
    give the underlying arrays for vectorised work.
    """

    labels: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(len(labels), -1) if len(labels) else points.reshape(0, 1)
        if points.shape[0] != labels.shape[0]:
            raise ValueError("labels and points differ in length")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "points", points)

    @classmethod
    def from_list(cls, samples, dimension=1):
        samples = list(samples)
        if not samples:
            return cls(np.zeros(0, dtype=np.int64), np.zeros((0, dimension)))
        labels = [s[0] for s in samples]
        points = np.array([np.atleast_1d(np.asarray(s[1], dtype=float)) for s in samples])
        return cls(np.array(labels), points)

    def __len__(self):
        return int(self.labels.shape[0])

    def __iter__(self) -> Iterator[LabeledSample]:
        for label, point in zip(self.labels, self.points):
            yield LabeledSample(int(label), point)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return LabeledSample(int(self.labels[idx]), self.points[idx])
        return Samples(self.labels[idx], self.points[idx])

    def flipped(self):
        """Two-class samples with every label swapped."""
        return Samples(1 - self.labels, self.points)


@dataclass(frozen=True)
class EvalGrid:
    """Quadrature nodes ``points`` (N, n) with positive ``weights`` (N,)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if weights.shape[0] != points.shape[0]:
            raise ValueError("points and weights differ in length")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return int(self.points.shape[0])

    @property
    def dimension(self):
        return int(self.points.shape[1])

    @classmethod
    def uniform(cls, lower, upper, resolution):
        """Tensor-product rectangle rule on the box ``[lower, upper]``."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        resolution = int(resolution)
        if resolution < 1:
            raise ValueError("resolution must be at least 1")
        axes, cell = [], 1.0
        for lo, hi in zip(lower, upper):
            if resolution == 1:
                axes.append(np.array([(lo + hi) / 2.0]))
                cell *= hi - lo
            else:
                axes.append(np.linspace(lo, hi, resolution))
                cell *= (hi - lo) / (resolution - 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(points, np.full(len(points), cell))


def _as_points(x, dimension):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.shape[0] == dimension else arr.reshape(-1, 1)
    if arr.shape[1] != dimension:
        raise ValueError(f"expected points of dimension {dimension}, got {arr.shape[1]}")
    return arr


class _ClassModelBase:
    """Shared vectorised surface; subclasses provide ``log_class_conditional``."""

    priors: np.ndarray

    @property
    def class_count(self):
        return int(self.priors.shape[0])

    def log_joint(self, X):
        """log P(class, x), shape (N, c); -inf where a class is impossible."""
        X = _as_points(X, self.dimension)
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors)
        return self.log_class_conditional(X) + log_prior[None, :]

    def log_density(self, X):
        return logsumexp(self.log_joint(X), axis=1)

    def density(self, X):
        return np.exp(self.log_density(X))

    def joint(self, X):
        return np.exp(self.log_joint(X))

    def posteriors(self, X):
        """P(class | x) for each row of ``X``, shape (N, c).

        Raises :class:`UnsupportedPointError` if some row has zero density
        under every class.
        """
        lj = self.log_joint(X)
        norm = logsumexp(lj, axis=1)
        if np.any(~np.isfinite(norm)):
            bad = _as_points(X, self.dimension)[~np.isfinite(norm)][0]
            raise UnsupportedPointError(f"no class has positive density at {bad.tolist()}")
        post = np.exp(lj - norm[:, None])
        return post / post.sum(axis=1, keepdims=True)

    def draw(self, rng, count):
        """Draw ``count`` i.i.d. samples from P(class, x) using ``rng``."""
        count = int(count)
        if count < 0:
            raise ValueError("count must be nonnegative")
        labels = rng.choice(self.class_count, size=count, p=self.priors)
        points = self._draw_points(rng, labels)
        return Samples(labels, points)


class MixtureClassModel(_ClassModelBase):
    """Joint P(class, x) with axis-aligned Gaussian-mixture class conditionals.

    Parameters
    ----------
    priors : sequence of float
        Class priors; all positive, summing to one.
    components : sequence of sequences of (weight, mean, variances)
        One list per class.  ``mean`` and ``variances`` are vectors of the
        feature dimension (scalars are accepted for 1-D models).
    """

    def __init__(self, priors, components):
        priors = np.asarray(priors, dtype=float).reshape(-1)
        if priors.shape[0] < 1:
            raise ModelError("at least one class is required")
        if abs(priors.sum() - 1.0) > _SUM_TOL or np.any(priors <= 0):
            raise ModelError("priors must be positive and sum to 1")
        if len(components) != priors.shape[0]:
            raise ModelError("one component list per class is required")
        parsed, dimension = [], None
        for cls_index, comps in enumerate(components):
            if len(comps) == 0:
                raise ModelError(f"class {cls_index} has no components")
            cls_comps = []
            for weight, mean, variances in comps:
                mean = np.atleast_1d(np.asarray(mean, dtype=float))
                variances = np.atleast_1d(np.asarray(variances, dtype=float))
                if variances.shape[0] == 1 and mean.shape[0] > 1:
                    variances = np.full_like(mean, variances[0])
                if dimension is None:
                    dimension = mean.shape[0]
                if mean.shape[0] != dimension or variances.shape[0] != dimension:
                    raise ModelError("all components must share one dimension")
                if np.any(variances <= 0):
                    raise ModelError("variances must be positive")
                cls_comps.append(Component(float(weight), mean, variances))
            weights = np.array([c.weight for c in cls_comps])
            if abs(weights.sum() - 1.0) > _SUM_TOL or np.any(weights < 0):
                raise ModelError(f"component weights of class {cls_index} must sum to 1")
            parsed.append(tuple(cls_comps))
        self.priors = priors
        self.components = tuple(parsed)
        self.dimension = int(dimension)
        self._stack()

    def _stack(self):
        self._w = [np.array([c.weight for c in comps]) for comps in self.components]
        self._mu = [np.stack([c.mean for c in comps]) for comps in self.components]
        self._var = [np.stack([c.variances for c in comps]) for comps in self.components]

    def __repr__(self):
        return f"MixtureClassModel(priors={self.priors.tolist()}, dimension={self.dimension})"

    def log_class_conditional(self, X):
        X = _as_points(X, self.dimension)
        out = np.empty((X.shape[0], self.class_count))
        for k in range(self.class_count):
            mu, var, w = self._mu[k], self._var[k], self._w[k]
            diff = X[:, None, :] - mu[None, :, :]
            log_n = -0.5 * np.sum(diff**2 / var[None] + np.log(2 * np.pi * var)[None], axis=2)
            with np.errstate(divide="ignore"):
                out[:, k] = logsumexp(log_n + np.log(w)[None, :], axis=1)
        return out

    def _draw_points(self, rng, labels):
        points = np.empty((labels.shape[0], self.dimension))
        for k in range(self.class_count):
            idx = np.flatnonzero(labels == k)
            if idx.size == 0:
                continue
            comp = rng.choice(self._w[k].shape[0], size=idx.size, p=self._w[k])
            noise = rng.standard_normal((idx.size, self.dimension))
            points[idx] = self._mu[k][comp] + noise * np.sqrt(self._var[k][comp])
        return points

    def bounding_box(self, half_width=GRID_HALF_WIDTH):
        means = np.concatenate(self._mu)
        max_std = np.sqrt(np.concatenate(self._var).max())
        return means.min(axis=0) - half_width * max_std, means.max(axis=0) + half_width * max_std

    def relabeled(self, permutation):
        """Model whose class ``k`` is this model's class ``permutation[k]``."""
        permutation = list(permutation)
        comps = [[tuple(c) for c in self.components[p]] for p in permutation]
        return MixtureClassModel(self.priors[permutation], comps)


class DiscreteClassModel(_ClassModelBase):
    """Joint P(class, x) over a finite set of support points.

    Parameters
    ----------
    support : array_like, shape (K,) or (K, n)
        Distinct feature vectors.
    pmfs : array_like, shape (c, K)
        Row ``k`` is P(x | class k) over the support.
    priors : array_like, shape (c,)
        Class priors.  Unlike :class:`MixtureClassModel`, zero priors are
        allowed so that label-deterministic task families can be expressed.
    """

    def __init__(self, support, pmfs, priors):
        support = np.asarray(support, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        pmfs = np.atleast_2d(np.asarray(pmfs, dtype=float))
        priors = np.asarray(priors, dtype=float).reshape(-1)
        if pmfs.shape != (priors.shape[0], support.shape[0]):
            raise ModelError("pmfs must have shape (class_count, support size)")
        if abs(priors.sum() - 1.0) > _SUM_TOL or np.any(priors < 0):
            raise ModelError("priors must be nonnegative and sum to 1")
        if np.any(pmfs < 0) or np.any(np.abs(pmfs.sum(axis=1) - 1.0) > _SUM_TOL):
            raise ModelError("each class-conditional pmf must sum to 1")
        keys = [tuple(p) for p in support]
        if len(set(keys)) != len(keys):
            raise ModelError("support points must be distinct")
        self.support = support
        self.pmfs = pmfs
        self.priors = priors
        self.dimension = int(support.shape[1])
        self._index = {key: i for i, key in enumerate(keys)}

    def __repr__(self):
        return f"DiscreteClassModel(support={len(self.support)}, priors={self.priors.tolist()})"

    def support_index(self, X):
        """Support index of each row of ``X``; -1 for points off the support."""
        X = _as_points(X, self.dimension)
        return np.array([self._index.get(tuple(row), -1) for row in X], dtype=np.int64)

    def log_class_conditional(self, X):
        idx = self.support_index(X)
        with np.errstate(divide="ignore"):
            table = np.log(self.pmfs.T)
        out = np.full((idx.shape[0], self.class_count), -np.inf)
        on = idx >= 0
        out[on] = table[idx[on]]
        return out

    def _draw_points(self, rng, labels):
        idx = np.empty(labels.shape[0], dtype=np.int64)
        for k in range(self.class_count):
            sel = np.flatnonzero(labels == k)
            if sel.size:
                idx[sel] = rng.choice(self.support.shape[0], size=sel.size, p=self.pmfs[k])
        return self.support[idx]

    def relabeled(self, permutation):
        permutation = list(permutation)
        return DiscreteClassModel(self.support, self.pmfs[permutation], self.priors[permutation])


def gaussian_pair_model(separation=1.0, variance=1.0, priors=(0.5, 0.5)):
    """Two 1-D Gaussian classes with means -separation (class 0) and +separation."""
    return MixtureClassModel(
        priors,
        [[(1.0, -separation, variance)], [(1.0, separation, variance)]],
    )


def random_two_class_model(seed, max_components=2):
    """A random 1-D two-class Gaussian-mixture model for round-trip tests.

    Means are drawn in [-3, 3] with class 1 shifted right by a random offset,
    so that the classes overlap but are never indistinguishable.
    """
    rng = make_rng(seed, 0)
    priors = rng.uniform(0.3, 0.7)
    comps = []
    for k in range(2):
        n = int(rng.integers(1, max_components + 1))
        weights = rng.dirichlet(np.full(n, 2.0))
        weights[-1] = 1.0 - weights[:-1].sum()
        shift = -1.0 if k == 0 else 1.0
        means = rng.uniform(-2.0, 2.0, size=n) + shift * rng.uniform(0.5, 1.5)
        variances = rng.uniform(0.3, 1.5, size=n)
        comps.append([(w, m, v) for w, m, v in zip(weights, means, variances)])
    return MixtureClassModel([priors, 1.0 - priors], comps)


def make_grid(model, resolution=41, half_width=GRID_HALF_WIDTH):
    """Evaluation grid for ``model``.

    Mixture models get a uniform rectangle rule over the box extending
    ``half_width`` largest standard deviations beyond the extreme means.
    Discrete models get their support with unit (counting-measure) weights.
    """
    if isinstance(model, DiscreteClassModel):
        return EvalGrid(model.support, np.ones(len(model.support)))
    lower, upper = model.bounding_box(half_width)
    return EvalGrid.uniform(lower, upper, resolution)


def grid_mass(model, grid):
    """Quadrature estimate of the total probability mass on ``grid``."""
    return float(np.sum(grid.weights * model.density(grid.points)))


def check_grid(model, grid):
    if grid.dimension != model.dimension:
        raise ValueError("grid dimension does not match the model")
    mass = grid_mass(model, grid)
    if mass < MIN_GRID_MASS:
        raise InsufficientGridError(f"grid covers only {mass:.6f} of the probability mass")
    return mass


def sample(model, seed, count):
    """Draw ``count`` i.i.d. labelled samples, deterministic in ``seed``."""
    return model.draw(make_rng(seed), count)


def class_posterior(model, x):
    """P(class | x) for a single point ``x`` as a length-c vector."""
    return model.posteriors(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))[0]


def bayes_risk(model, grid):
    """Minimum achievable error rate, E_x[1 - max_k P(k | x)], by quadrature."""
    check_grid(model, grid)
    joint = model.joint(grid.points)
    miss = joint.sum(axis=1) - joint.max(axis=1)
    return float(np.sum(grid.weights * miss))
