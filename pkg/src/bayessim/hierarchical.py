"""Batched hierarchical classification.

A :class:`BatchedModel` is a finite family of classification problems indexed
by a task parameter theta with prior P(theta).  Each batch draws one theta and
then ``batch_size`` labelled samples from that task, so samples in a batch are
dependent once theta is integrated out.  Everything here is an exact finite sum
over the theta support.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ModelError
from .generative import DiscreteClassModel, MixtureClassModel, Samples, _as_points
from .rng import make_rng
from .similarity import SimilarityOracle, exact_similarity


class BatchedModel:
    """Task family {P(class, x | theta)} with a discrete prior over theta.

    Parameters
    ----------
    conditionals : sequence of class models
        One :class:`MixtureClassModel` or :class:`DiscreteClassModel` per
        theta, all with the same class count and dimension.
    theta_prior : sequence of float
        P(theta) for each conditional.
    batch_size : int
        Samples per batch (at least 2).
    """

    def __init__(self, conditionals, theta_prior, batch_size=2):
        conditionals = tuple(conditionals)
        prior = np.asarray(theta_prior, dtype=float).reshape(-1)
        if len(conditionals) == 0 or len(conditionals) != prior.shape[0]:
            raise ModelError("one prior probability per conditional model is required")
        if abs(prior.sum() - 1.0) > 1e-12 or np.any(prior < 0):
            raise ModelError("theta prior must be nonnegative and sum to 1")
        c = {m.class_count for m in conditionals}
        d = {m.dimension for m in conditionals}
        if len(c) != 1 or len(d) != 1:
            raise ModelError("conditional models must share class count and dimension")
        if int(batch_size) < 2:
            raise ModelError("batch size must be at least 2")
        self.conditionals = conditionals
        self.theta_prior = prior
        self.batch_size = int(batch_size)
        self.class_count = c.pop()
        self.dimension = d.pop()

    def __repr__(self):
        return (f"BatchedModel(thetas={len(self.conditionals)}, "
                f"class_count={self.class_count}, batch_size={self.batch_size})")

    def log_theta_prior(self):
        with np.errstate(divide="ignore"):
            return np.log(self.theta_prior)

    def marginal_model(self):
        """The single-task model P(class, x) = sum_theta P(theta) P(class, x | theta)."""
        return marginal_model(self)


@dataclass(frozen=True)
class Batch:
    """Samples sharing one task parameter; ``theta_index`` is for tests only."""

    theta_index: int
    samples: Samples


def sample_batches(model, seed, batch_count):
    """Draw ``batch_count`` batches; batch ``b`` uses the stream ``(seed, b)``."""
    batch_count = int(batch_count)
    if batch_count < 0:
        raise ValueError("batch_count must be nonnegative")
    batches = []
    for b in range(batch_count):
        rng = make_rng(seed, b)
        theta = int(rng.choice(len(model.conditionals), p=model.theta_prior))
        batches.append(Batch(theta, model.conditionals[theta].draw(rng, model.batch_size)))
    return batches


def marginal_model(model):
    """Collapse the task family into one model by mixing over theta."""
    first = model.conditionals[0]
    w = model.theta_prior
    priors = sum(wt * m.priors for wt, m in zip(w, model.conditionals))
    if isinstance(first, DiscreteClassModel):
        for m in model.conditionals[1:]:
            if not np.array_equal(m.support, first.support):
                raise ModelError("discrete conditionals must share one support")
        joint = sum(wt * m.priors[:, None] * m.pmfs for wt, m in zip(w, model.conditionals))
        pmfs = np.divide(joint, priors[:, None], out=np.full_like(joint, 1.0 / joint.shape[1]),
                         where=priors[:, None] > 0)
        return DiscreteClassModel(first.support, pmfs, priors)
    comps = []
    for k in range(model.class_count):
        parts = []
        for wt, m in zip(w, model.conditionals):
            share = wt * m.priors[k] / priors[k]
            if share > 0:
                parts.extend((share * c.weight, c.mean, c.variances) for c in m.components[k])
        total = sum(p[0] for p in parts)
        comps.append([(p[0] / total, p[1], p[2]) for p in parts])
    return MixtureClassModel(priors, comps)


def marginal_class_conditional(model, label, x):
    """P(x | class) = sum_theta P(x | class, theta) P(theta)."""
    X = _as_points(x, model.dimension)
    vals = [np.exp(m.log_class_conditional(X)[:, label]) for m in model.conditionals]
    out = np.tensordot(model.theta_prior, np.array(vals), axes=1)
    return float(out[0]) if out.shape[0] == 1 else out


def batch_class_conditional(model, labels, points):
    """Joint class-conditional density of a whole batch.

    sum_theta P(theta) prod_i P(x_i | w_i, theta) -- theta is shared by all
    samples, so this is generally not the product of per-sample marginals.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    X = _as_points(points, model.dimension)
    if X.shape[0] != labels.shape[0]:
        raise ValueError("labels and points differ in length")
    logs = []
    for m in model.conditionals:
        lcc = m.log_class_conditional(X)
        logs.append(np.sum(lcc[np.arange(len(labels)), labels]))
    return float(np.exp(logsumexp(np.array(logs) + model.log_theta_prior())))


def _theta_terms(model, X):
    """Per-theta log marginal density and class posterior at each row of X."""
    log_dens, posts = [], []
    for m in model.conditionals:
        lj = m.log_joint(X)
        ld = logsumexp(lj, axis=1)
        with np.errstate(invalid="ignore"):
            post = np.exp(lj - ld[:, None])
        posts.append(np.nan_to_num(post))
        log_dens.append(ld)
    return np.array(log_dens), np.array(posts)


def batched_oracle(model):
    """Exact within-batch similarity as a :class:`SimilarityOracle`.

    P(same | x, x') = sum_theta P(theta | x, x') sum_k P(k | x, theta) P(k | x', theta),
    with P(theta | x, x') proportional to P(theta) P(x | theta) P(x' | theta):
    both points come from the same batch, so they inform a shared theta.
    """
    log_prior = model.log_theta_prior()

    def pairwise(X, Y):
        ldx, px = _theta_terms(model, X)
        ldy, py = _theta_terms(model, Y)
        logw = log_prior[:, None, None] + ldx[:, :, None] + ldy[:, None, :]
        logw = logw - logsumexp(logw, axis=0)[None]
        agree = np.einsum("tik,tjk->tij", px, py)
        return np.sum(np.exp(logw) * agree, axis=0)

    def paired(X, Y):
        ldx, px = _theta_terms(model, X)
        ldy, py = _theta_terms(model, Y)
        logw = log_prior[:, None] + ldx + ldy
        logw = logw - logsumexp(logw, axis=0)[None]
        return np.sum(np.exp(logw) * np.sum(px * py, axis=2), axis=0)

    return SimilarityOracle(pairwise, "exact", model.dimension, model.class_count, paired)


def batched_similarity(model, x, x_other):
    return batched_oracle(model)(x, x_other)


def factorization_gap(model, x, x_other):
    """|within-batch similarity - sum_k P(k | x) P(k | x')| with marginal posteriors."""
    marginal = exact_similarity(marginal_model(model))
    return abs(batched_similarity(model, x, x_other) - marginal(x, x_other))


def batched_nn_classify(oracle_or_model, labeled, query):
    """Label of the within-batch neighbour of ``query`` under 1 - P(same | x, x').

    ``oracle_or_model`` is a :class:`BatchedModel` (its exact within-batch
    oracle is used) or any :class:`SimilarityOracle`, e.g. one estimated from
    within-batch pairs.  Ties go to the earliest labelled sample.
    """
    oracle = (batched_oracle(oracle_or_model) if isinstance(oracle_or_model, BatchedModel)
              else oracle_or_model)
    labeled = labeled if isinstance(labeled, Samples) else Samples.from_list(
        labeled, oracle.dimension)
    if len(labeled) == 0:
        raise ValueError("the batch has no labelled samples")
    sims = oracle.pairwise(np.atleast_1d(np.asarray(query, dtype=float))[None, :],
                           labeled.points)[0]
    return int(labeled.labels[int(np.argmax(sims))])


def draw_batched_pairs(model, seed, count):
    """``count`` labelled pairs, each taken from one freshly drawn batch."""
    rng = make_rng(seed, 2)
    thetas = rng.choice(len(model.conditionals), size=count, p=model.theta_prior)
    first = np.empty((count, model.dimension))
    second = np.empty((count, model.dimension))
    same = np.empty(count, dtype=bool)
    for t, m in enumerate(model.conditionals):
        idx = np.flatnonzero(thetas == t)
        a, b = m.draw(rng, idx.size), m.draw(rng, idx.size)
        first[idx], second[idx], same[idx] = a.points, b.points, a.labels == b.labels
    return first, second, same


def batched_nn_error(model, oracle, seed, batch_count):
    """Monte-Carlo error of within-batch 1-NN: the last sample of each batch is the query.

    Returns ``(error_rate, stderr)``.
    """
    batches = sample_batches(model, seed, batch_count)
    if not batches:
        return 0.0, 0.0
    wrong = 0
    for batch in batches:
        s = batch.samples
        pred = batched_nn_classify(oracle, s[:-1], s.points[-1])
        wrong += pred != s.labels[-1]
    err = wrong / len(batches)
    return err, float(np.sqrt(err * (1 - err) / len(batches)))


def expected_neighbor_disagreement(model, distance_fn, labeled_count=None, conditioning="batch"):
    """Exact P(query label != chosen neighbour's label) over all batch outcomes.

    Requires discrete conditionals sharing one support.  A batch is one query
    plus ``labeled_count`` labelled points (default ``batch_size - 1``); the
    neighbour is argmin_j distance_fn(query, x_j) with ties to the lowest j.
    Every assignment of support points to the batch is enumerated.

    With ``conditioning="batch"`` the label disagreement of each outcome is
    conditioned on every feature vector in the batch (the true error of the
    rule).  With ``conditioning="pair"`` it is 1 - P(same | query, neighbour),
    the pairwise risk that within-batch similarity minimises by construction.
    """
    if conditioning not in ("batch", "pair"):
        raise ValueError("conditioning must be 'batch' or 'pair'")
    for m in model.conditionals:
        if not isinstance(m, DiscreteClassModel):
            raise ModelError("exact enumeration needs discrete conditional models")
    support = model.conditionals[0].support
    k = model.batch_size - 1 if labeled_count is None else int(labeled_count)
    # joint[t, class, point] = P(class, x | theta); marg[t, point] = P(x | theta)
    joint = np.array([m.priors[:, None] * m.pmfs for m in model.conditionals])
    marg = joint.sum(axis=1)
    dist = np.asarray(distance_fn(support, support), dtype=float)
    pair_risk = 1.0 - batched_oracle(model).pairwise(support, support)
    total = 0.0
    for config in itertools.product(range(support.shape[0]), repeat=k + 1):
        q, labeled = config[0], list(config[1:])
        pos = int(np.argmin(dist[q, labeled]))
        j = labeled[pos]
        others = np.prod(marg[:, labeled[:pos] + labeled[pos + 1:]], axis=1)
        if conditioning == "pair":
            mass = np.sum(model.theta_prior * others * marg[:, q] * marg[:, j])
            total += float(mass * pair_risk[q, j])
        else:
            agree = np.sum(joint[:, :, q] * joint[:, :, j], axis=1)
            total += float(np.sum(model.theta_prior * others * (marg[:, q] * marg[:, j] - agree)))
    return total


def distance_pool(model):
    """Within-batch distances compared in the optimality check."""
    batched = batched_oracle(model)
    marginal = exact_similarity(marginal_model(model))

    def euclidean(X, Y):
        return np.sqrt(np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=2))

    return {
        "batched-similarity": lambda X, Y: 1.0 - batched.pairwise(X, Y),
        "marginal-similarity": lambda X, Y: 1.0 - marginal.pairwise(X, Y),
        "euclidean": euclidean,
    }


def label_switch_model():
    """Two tasks whose labels are fixed by theta while x carries no information.

    Under theta A every sample is class 0, under theta B every sample is
    class 1; in both tasks x is uniform on {0, 1}.
    """
    support = np.array([0.0, 1.0])
    uniform = np.array([[0.5, 0.5], [0.5, 0.5]])
    a = DiscreteClassModel(support, uniform, [1.0, 0.0])
    b = DiscreteClassModel(support, uniform, [0.0, 1.0])
    return BatchedModel([a, b], [0.5, 0.5])


def mapping_flip_model():
    """Two tasks that swap which support point each class sits on.

    Under theta A class k is observed at x = k, under theta B at x = 1 - k.
    """
    support = np.array([0.0, 1.0])
    a = DiscreteClassModel(support, np.eye(2), [0.5, 0.5])
    b = DiscreteClassModel(support, np.eye(2)[::-1], [0.5, 0.5])
    return BatchedModel([a, b], [0.5, 0.5])


def shifted_gaussian_model(shift=1.0, separation=1.0, variance=0.25, batch_size=5):
    """1-D two-class tasks whose class means move together by theta = +/- ``shift``."""
    tasks = []
    for t in (-shift, shift):
        tasks.append(MixtureClassModel(
            [0.5, 0.5],
            [[(1.0, t - separation, variance)], [(1.0, t + separation, variance)]],
        ))
    return BatchedModel(tasks, [0.5, 0.5], batch_size)


def random_discrete_batched_model(seed, support_size=3, theta_count=2, batch_size=3):
    """Random two-class discrete task family on the support {0, ..., K-1}."""
    rng = make_rng(seed, 3)
    support = np.arange(support_size, dtype=float)
    tasks = []
    for _ in range(theta_count):
        pmfs = rng.dirichlet(np.ones(support_size), size=2)
        pmfs[:, -1] = 1.0 - pmfs[:, :-1].sum(axis=1)
        prior = rng.uniform(0.2, 0.8)
        tasks.append(DiscreteClassModel(support, pmfs, [prior, 1.0 - prior]))
    theta = rng.dirichlet(np.ones(theta_count))
    theta[-1] = 1.0 - theta[:-1].sum()
    return BatchedModel(tasks, theta, batch_size)


def random_relabeling_family(seed, support_size=3, theta_count=2, batch_size=3):
    """Random two-class tasks that share P(x) and differ only in P(class | x, theta).

    Features then carry no information about theta, so whole-batch and
    pair-conditioned label agreement coincide.
    """
    rng = make_rng(seed, 4)
    support = np.arange(support_size, dtype=float)
    p_x = rng.dirichlet(np.ones(support_size))
    tasks = []
    for _ in range(theta_count):
        p0 = rng.uniform(0.02, 0.98, size=support_size)
        prior0 = float(np.sum(p_x * p0))
        pmfs = np.array([p_x * p0 / prior0, p_x * (1 - p0) / (1 - prior0)])
        pmfs[:, -1] = 1.0 - pmfs[:, :-1].sum(axis=1)
        tasks.append(DiscreteClassModel(support, pmfs, [prior0, 1.0 - prior0]))
    theta = rng.dirichlet(np.ones(theta_count))
    theta[-1] = 1.0 - theta[:-1].sum()
    return BatchedModel(tasks, theta, batch_size)
