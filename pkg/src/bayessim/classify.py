"""Decision rules built on posteriors and similarities, and their risk.

All rules break ties toward the lowest class (or training) index.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BranchUnresolvedError, IncompletePrototypeSetError
from .generative import Samples, _as_points, check_grid, sample
from .reconstruction import reconstruct_two_class

TIE_BREAK = "lowest-index"
_CHUNK = 1024


@dataclass(frozen=True)
class Classifier:
    """A named, deterministic decision rule.

    ``predict`` maps an (N, n) array of points to N class indices.
    """

    name: str
    predict_fn: object
    dimension: int

    def predict(self, X):
        X = _as_points(X, self.dimension)
        return np.asarray(self.predict_fn(X), dtype=np.int64)

    def decide(self, x):
        return int(self.predict(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0])

    __call__ = decide


@dataclass(frozen=True)
class RiskReport:
    classifier_name: str
    error_rate: float
    stderr: float
    method: str
    sample_count: int
    tie_break: str = TIE_BREAK


def bayes_classifier(posterior_fn, dimension=1, name="bayes"):
    """argmax of ``posterior_fn`` (points -> (N, c) posteriors)."""
    if hasattr(posterior_fn, "posteriors"):
        dimension = posterior_fn.dimension
        posterior_fn = posterior_fn.posteriors
    return Classifier(name, lambda X: np.argmax(posterior_fn(X), axis=1), dimension)


def prototype_classifier(oracle, prototypes, class_count=None, name="prototype"):
    """Assign x to the class whose prototype is most similar to it.

    ``prototypes`` maps each class index to one prototype point.
    """
    c = class_count or oracle.class_count or (max(prototypes) + 1 if prototypes else 0)
    missing = [k for k in range(c) if k not in prototypes]
    if missing or c == 0:
        raise IncompletePrototypeSetError(f"no prototype for classes {missing}")
    protos = np.array([np.atleast_1d(np.asarray(prototypes[k], dtype=float)) for k in range(c)])
    return Classifier(name, lambda X: np.argmax(oracle.pairwise(X, protos), axis=1),
                      oracle.dimension)


def nn_classifier(oracle, training, name="similarity-1nn"):
    """1-nearest-neighbour rule under the distance 1 - P(same | x, x')."""
    training = training if isinstance(training, Samples) else Samples.from_list(
        training, oracle.dimension)
    if len(training) == 0:
        raise ValueError("nearest-neighbour classifier needs at least one training sample")
    points, labels = training.points, training.labels

    def predict(X):
        out = np.empty(X.shape[0], dtype=np.int64)
        for s in range(0, X.shape[0], _CHUNK):
            # argmax similarity == argmin distance; argmax keeps the first index on ties
            nearest = np.argmax(oracle.pairwise(X[s:s + _CHUNK], points), axis=1)
            out[s:s + _CHUNK] = labels[nearest]
        return out

    return Classifier(name, predict, oracle.dimension)


def reconstructed_classifier(oracle, grid, samples, name="reconstructed", **kwargs):
    """Bayes rule on the posterior recovered by :func:`reconstruct_two_class`.

    Off-grid queries use the nearest grid point's posterior.  The
    reconstruction itself is exposed as the ``reconstruction`` attribute.
    """
    rec = reconstruct_two_class(oracle, grid, samples, **kwargs)
    if rec.branch == "undecided":
        raise BranchUnresolvedError("no samples to choose between the two branches")

    def predict(X):
        p0 = rec.lookup(X)
        return np.where(p0 >= 0.5, 0, 1)

    clf = Classifier(name, predict, grid.dimension)
    object.__setattr__(clf, "reconstruction", rec)
    return clf


def evaluate_risk(classifier, model, grid=None, seed=None, count=None):
    """Misclassification rate by quadrature (``grid``) or Monte Carlo.

    Quadrature integrates P(x) - P(decide(x), x) over the grid nodes; Monte
    Carlo scores ``count`` fresh samples drawn with ``seed`` and reports the
    binomial standard error sqrt(e (1 - e) / count).
    """
    if grid is not None:
        check_grid(model, grid)
        joint = model.joint(grid.points)
        decided = classifier.predict(grid.points)
        miss = joint.sum(axis=1) - joint[np.arange(len(decided)), decided]
        err = float(np.clip(np.sum(grid.weights * miss), 0.0, 1.0))
        return RiskReport(classifier.name, err, 0.0, "quadrature", len(grid))
    if seed is None or count is None:
        raise ValueError("Monte-Carlo risk needs both seed and count")
    test = sample(model, seed, count)
    if len(test) == 0:
        return RiskReport(classifier.name, 0.0, 0.0, "monte-carlo", 0)
    err = float(np.mean(classifier.predict(test.points) != test.labels))
    return RiskReport(classifier.name, err, float(np.sqrt(err * (1 - err) / len(test))),
                      "monte-carlo", len(test))


def neighbor_disagreement(model, training_points, distance_fn, grid):
    """Exact expected label disagreement between a query and its chosen neighbour.

    For every grid node x the neighbour is argmin_j distance_fn(x, x_j) over
    ``training_points``; the disagreement 1 - P(same | x, x_j) is computed
    from the model's posteriors and integrated against P(x).  The training
    labels play no role, so this isolates the quality of the distance.
    """
    check_grid(model, grid)
    X = grid.points
    D = np.asarray(distance_fn(X, training_points))
    chosen = np.argmin(D, axis=1)
    post_x = model.posteriors(X)
    post_t = model.posteriors(training_points)[chosen]
    disagree = 1.0 - np.sum(post_x * post_t, axis=1)
    return float(np.sum(grid.weights * model.density(X) * disagree))
