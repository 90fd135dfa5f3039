"""Same/different discrimination without any class structure.

Two observations either come from one latent parameter theta (S = 1) or from
two independent draws of theta (S = 0).  The pair likelihoods are

    P(x, x' | S=1) = sum_theta P(x | theta) P(x' | theta) P(theta)
    P(x, x' | S=0) = P(x) P(x')

and P(S=1 | x, x') follows from Bayes' rule.  Features are scalars.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ImpossiblePairError, ModelError
from .rng import make_rng

NORMALIZATION_TOL = 1e-9
QUADRATURE_NODES = 201
MC_SHARD = 10_000
_BRUTE_FORCE_LIMIT = 16  # pair outcomes; 2**16 candidate rules


class DiscriminationModel:
    """Prior over theta, appearance density P(x | theta) and P(S=1).

    Parameters
    ----------
    theta_values, theta_weights : array_like
        Finite support of theta and its probabilities.  For a continuous
        prior these are quadrature nodes and weights (prior density times
        rule weight), which must sum to 1 within ``NORMALIZATION_TOL``.
    appearance : callable
        ``appearance(x, theta)`` returns P(x | theta) for an array ``x`` and a
        scalar ``theta``.
    same_prior : float
        P(S=1), in [0, 1].
    support : array_like, optional
        Finite feature support; enables exact enumeration.  Each appearance
        pmf must sum to 1 over it.
    theta_sampler, x_sampler : callable, optional
        ``theta_sampler(rng, n)`` and ``x_sampler(rng, thetas)`` used for
        Monte-Carlo pair generation.  Default to drawing from the finite
        theta support and, with ``support`` set, from the appearance pmfs.
    """

    def __init__(self, theta_values, theta_weights, appearance, same_prior=0.5,
                 support=None, theta_sampler=None, x_sampler=None):
        self.theta_values = np.asarray(theta_values, dtype=float).reshape(-1)
        self.theta_weights = np.asarray(theta_weights, dtype=float).reshape(-1)
        if self.theta_values.shape != self.theta_weights.shape or self.theta_values.size == 0:
            raise ModelError("theta values and weights must be non-empty and of equal length")
        if np.any(self.theta_weights < 0):
            raise ModelError("theta weights must be non-negative")
        if abs(self.theta_weights.sum() - 1.0) > NORMALIZATION_TOL:
            raise ModelError(f"theta weights sum to {self.theta_weights.sum()!r}, not 1")
        if not 0.0 <= same_prior <= 1.0:
            raise ModelError("same_prior must lie in [0, 1]")
        self.same_prior = float(same_prior)
        self.appearance = appearance
        self.support = None if support is None else np.asarray(support, dtype=float).reshape(-1)
        if self.support is not None:
            totals = self.appearance_table(self.support).sum(axis=1)
            if np.any(np.abs(totals - 1.0) > NORMALIZATION_TOL):
                raise ModelError("appearance pmfs do not sum to 1 over the support")
        self._theta_sampler = theta_sampler
        self._x_sampler = x_sampler

    def appearance_table(self, x):
        """(T, N) matrix of P(x_j | theta_t)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.array([np.asarray(self.appearance(x, t), dtype=float).reshape(-1)
                         for t in self.theta_values])

    def marginal(self, x):
        """P(x) = sum_theta P(x | theta) P(theta)."""
        return self.theta_weights @ self.appearance_table(x)

    def draw_thetas(self, rng, n):
        if self._theta_sampler is not None:
            return np.asarray(self._theta_sampler(rng, n), dtype=float)
        idx = rng.choice(self.theta_values.size, size=n, p=self.theta_weights)
        return self.theta_values[idx]

    def draw_features(self, rng, thetas):
        if self._x_sampler is not None:
            return np.asarray(self._x_sampler(rng, thetas), dtype=float)
        if self.support is None:
            raise ModelError("sampling needs a finite support or an x_sampler")
        # one categorical draw per theta via inverse CDF on the pmf rows
        pmf = self.appearance_table(self.support)
        cdf = np.cumsum(pmf, axis=1)
        row = np.searchsorted(self.theta_values, thetas) if _is_sorted(self.theta_values) \
            else np.array([int(np.flatnonzero(self.theta_values == t)[0]) for t in thetas])
        u = rng.random(len(thetas))
        col = np.minimum((u[:, None] > cdf[row]).sum(axis=1), self.support.size - 1)
        return self.support[col]


def _is_sorted(a):
    return bool(np.all(np.diff(a) > 0))


@dataclass(frozen=True)
class PairScore:
    same_likelihood: np.ndarray
    diff_likelihood: np.ndarray
    posterior_same: np.ndarray
    decision: np.ndarray


def appearance_marginal(base_density, phi_support, nu_support):
    """Marginalise viewing parameter phi and noise nu out of an appearance model.

    ``base_density(x, theta, phi, nu)`` is P(x | theta, phi, nu); the supports
    are sequences of ``(value, probability)``.  Returns ``density(x, theta)``.
    """
    phis = _finite_prior(phi_support, "phi")
    nus = _finite_prior(nu_support, "nu")

    def density(x, theta):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape)
        for (phi, p_phi), (nu, p_nu) in itertools.product(phis, nus):
            total = total + p_phi * p_nu * np.asarray(base_density(x, theta, phi, nu), dtype=float)
        return total

    return density


def _finite_prior(support, name):
    support = [(v, float(p)) for v, p in support]
    if not support:
        raise ModelError(f"{name} support is empty")
    if abs(sum(p for _, p in support) - 1.0) > NORMALIZATION_TOL:
        raise ModelError(f"{name} probabilities do not sum to 1")
    return support


def _pair_arrays(x, x_other):
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    if x.shape != x_other.shape:
        raise ValueError("x and x_other must have the same shape")
    return x.reshape(-1), x_other.reshape(-1), x.shape


def same_likelihood(model, x, x_other):
    """P(x, x' | S=1); elementwise over paired arrays."""
    a, b, shape = _pair_arrays(x, x_other)
    out = model.theta_weights @ (model.appearance_table(a) * model.appearance_table(b))
    return out.reshape(shape) if shape else float(out[0])


def diff_likelihood(model, x, x_other):
    """P(x, x' | S=0) = P(x) P(x'); elementwise over paired arrays."""
    a, b, shape = _pair_arrays(x, x_other)
    out = model.marginal(a) * model.marginal(b)
    return out.reshape(shape) if shape else float(out[0])


def bayes_threshold(false_accept_cost=1.0, false_reject_cost=1.0):
    """Posterior threshold minimising expected cost.

    Deciding "same" costs (1 - p) * false_accept_cost in expectation and
    deciding "different" costs p * false_reject_cost, so "same" wins iff
    p >= false_accept_cost / (false_accept_cost + false_reject_cost).  The
    prior P(S=1) is already inside p and does not appear again here.
    """
    if false_accept_cost < 0 or false_reject_cost < 0 or false_accept_cost + false_reject_cost == 0:
        raise ValueError("costs must be non-negative and not both zero")
    return false_accept_cost / (false_accept_cost + false_reject_cost)


def same_posterior(model, x, x_other, threshold=0.5):
    """P(S=1 | x, x') with the thresholded same/different decision."""
    same = np.asarray(same_likelihood(model, x, x_other), dtype=float)
    diff = np.asarray(diff_likelihood(model, x, x_other), dtype=float)
    num = same * model.same_prior
    den = num + diff * (1.0 - model.same_prior)
    if np.any(den <= 0):
        raise ImpossiblePairError("pair has zero probability under both hypotheses")
    post = np.clip(num / den, 0.0, 1.0)
    decision = post >= threshold
    if post.ndim == 0:
        return PairScore(float(same), float(diff), float(post), bool(decision))
    return PairScore(same, diff, post, decision)


# model constructors ----------------------------------------------------------

def discrete_model(support, theta_values, theta_weights, pmfs, same_prior=0.5):
    """Model with finite theta and feature supports; ``pmfs[t, j]`` = P(support_j | theta_t)."""
    support = np.asarray(support, dtype=float).reshape(-1)
    pmfs = np.asarray(pmfs, dtype=float)
    if pmfs.shape != (len(theta_values), support.size):
        raise ModelError("pmfs must have shape (len(theta_values), len(support))")
    thetas = np.asarray(theta_values, dtype=float)
    rows = {float(t): i for i, t in enumerate(thetas)}

    def appearance(x, theta):
        row = pmfs[rows[float(theta)]]
        idx = np.searchsorted(support, x) if _is_sorted(support) else None
        if idx is None:
            return np.array([row[support == v].sum() for v in np.ravel(x)]).reshape(np.shape(x))
        idx = np.clip(idx, 0, support.size - 1)
        return np.where(support[idx] == x, row[idx], 0.0)

    return DiscriminationModel(thetas, theta_weights, appearance, same_prior, support=support)


def flip_noise_model(flip=0.1, same_prior=0.5):
    """theta uniform on {1, 2}; x = theta with probability 1 - flip, else the other value."""
    pmfs = np.array([[1 - flip, flip], [flip, 1 - flip]])
    return discrete_model([1.0, 2.0], [1.0, 2.0], [0.5, 0.5], pmfs, same_prior)


def gaussian_theta_model(prior_std=1.0, noise_variance=0.25, same_prior=0.5,
                         nodes=QUADRATURE_NODES):
    """theta ~ N(0, prior_std^2), x | theta ~ N(theta, noise_variance).

    The theta integral uses a Gauss-Legendre rule on [-6 sd, 6 sd] with the
    prior density folded into the weights, renormalised to sum to 1.
    """
    t, w = np.polynomial.legendre.leggauss(int(nodes))
    half = 6.0 * prior_std
    thetas = half * t
    weights = half * w * stats.norm.pdf(thetas, scale=prior_std)
    weights = weights / weights.sum()
    noise_sd = float(np.sqrt(noise_variance))

    def appearance(x, theta):
        return stats.norm.pdf(x, loc=theta, scale=noise_sd)

    model = DiscriminationModel(
        thetas, weights, appearance, same_prior,
        theta_sampler=lambda rng, n: rng.normal(0.0, prior_std, n),
        x_sampler=lambda rng, th: th + rng.normal(0.0, noise_sd, len(th)),
    )
    model.prior_std = float(prior_std)
    model.noise_variance = float(noise_variance)
    return model


# pair generation and error evaluation ---------------------------------------

def draw_labeled_pairs(model, seed, count):
    """Pairs from the full process: S, then theta (and theta' if S=0), then x, x'.

    Trials are generated in shards of ``MC_SHARD`` with per-shard streams, so
    the output does not depend on how shards are scheduled.
    """
    xs, ys, ss = [], [], []
    for shard, start in enumerate(range(0, int(count), MC_SHARD)):
        n = min(MC_SHARD, int(count) - start)
        rng = make_rng(seed, 5, shard)
        same = rng.random(n) < model.same_prior
        theta = model.draw_thetas(rng, n)
        theta_other = np.where(same, theta, model.draw_thetas(rng, n))
        xs.append(model.draw_features(rng, theta))
        ys.append(model.draw_features(rng, theta_other))
        ss.append(same)
    if not xs:
        return np.empty(0), np.empty(0), np.empty(0, dtype=bool)
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ss)


def pair_masses(model):
    """Exact P(x, x', S=1) and P(x, x', S=0) over all support pairs.

    Returns ``(first, second, same_mass, diff_mass)`` as flat arrays over the
    |X|^2 ordered pairs.
    """
    if model.support is None:
        raise ModelError("exact enumeration needs a finite support")
    a, b = (g.ravel() for g in np.meshgrid(model.support, model.support, indexing="ij"))
    same_mass = model.same_prior * same_likelihood(model, a, b)
    diff_mass = (1.0 - model.same_prior) * diff_likelihood(model, a, b)
    return a, b, same_mass, diff_mass


def exact_sweep(model, thresholds):
    """Exact error of deciding same iff posterior >= t, for each threshold."""
    a, b, same_mass, diff_mass = pair_masses(model)
    keep = same_mass + diff_mass > 0
    post = same_posterior(model, a[keep], b[keep]).posterior_same
    decide = post[None, :] >= np.asarray(thresholds, dtype=float)[:, None]
    return np.where(decide, diff_mass[keep], same_mass[keep]).sum(axis=1)


def bayes_error(model):
    """Minimum achievable error: sum over pairs of min(same mass, diff mass)."""
    _, _, same_mass, diff_mass = pair_masses(model)
    return float(np.minimum(same_mass, diff_mass).sum())


def monte_carlo_sweep(model, thresholds, trial_count, seed):
    """Empirical error and binomial standard error for each threshold."""
    x, y, same = draw_labeled_pairs(model, seed, trial_count)
    thresholds = np.asarray(thresholds, dtype=float)
    if same.size == 0:
        return np.zeros(thresholds.size), np.zeros(thresholds.size)
    post = same_posterior(model, x, y).posterior_same
    wrong = (post[None, :] >= thresholds[:, None]) != same[None, :]
    err = wrong.mean(axis=1)
    return err, np.sqrt(err * (1 - err) / same.size)


def rule_error(model, decide_same):
    """Exact error of an arbitrary rule ``decide_same(x, x') -> bool array``."""
    a, b, same_mass, diff_mass = pair_masses(model)
    d = np.asarray(decide_same(a, b), dtype=bool)
    return float(np.where(d, diff_mass, same_mass).sum())


def best_thresholded_error(model, score):
    """Lowest exact error of deciding same iff score(x, x') >= t over all t.

    Thresholds range over every distinct score value plus +inf, which covers
    every rule of this form; both orientations of the score are tried.
    """
    a, b, same_mass, diff_mass = pair_masses(model)
    values = np.asarray(score(a, b), dtype=float)
    best = np.inf
    for v in (values, -values):
        for t in np.append(np.unique(v), np.inf):
            best = min(best, float(np.where(v >= t, diff_mass, same_mass).sum()))
    return best


def comparison_pool(model):
    """Scores a competing same/different rule could threshold."""
    return {
        "same-likelihood": lambda a, b: same_likelihood(model, a, b),
        "marginal-product": lambda a, b: diff_likelihood(model, a, b),
        "distance": lambda a, b: -np.abs(a - b),
    }


def brute_force_error(model):
    """Minimum exact error over every deterministic rule on the support pairs."""
    _, _, same_mass, diff_mass = pair_masses(model)
    if same_mass.size > _BRUTE_FORCE_LIMIT:
        raise ModelError(f"brute force limited to {_BRUTE_FORCE_LIMIT} pair outcomes")
    best = np.inf
    for bits in itertools.product((False, True), repeat=same_mass.size):
        d = np.array(bits)
        best = min(best, float(np.where(d, diff_mass, same_mass).sum()))
    return best


@dataclass(frozen=True)
class OptimalityReport:
    thresholds: np.ndarray
    exact_errors: object  # ndarray, or None without a finite support
    mc_errors: np.ndarray
    mc_stderr: np.ndarray
    trial_count: int
    exact_optimal: object  # bool, or None
    mc_argmin: float
    mc_optimal: bool


def nearest_minimizer(thresholds, errors, target=0.5):
    """Threshold closest to ``target`` among those attaining the minimum error."""
    thresholds = np.asarray(thresholds, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ties = np.flatnonzero(errors == errors.min())
    return float(thresholds[ties[np.argmin(np.abs(thresholds[ties] - target))]])


def optimality_check(model, threshold_grid=None, trial_count=100_000, seed=0,
                     max_steps=2, target=0.5):
    """Check that thresholding the posterior at ``target`` minimises error.

    Exact errors (finite support only) must be minimal at ``target``; the
    Monte-Carlo minimiser nearest to ``target`` must lie within ``max_steps``
    grid steps of it.  The grid must contain ``target``.
    """
    grid = np.linspace(0.0, 1.0, 21) if threshold_grid is None else np.asarray(threshold_grid, float)
    if not (grid.min() < target < grid.max()) or not np.any(np.isclose(grid, target)):
        raise ValueError("threshold grid must span (0, 1) and contain the target threshold")
    at = int(np.argmin(np.abs(grid - target)))
    exact = exact_ok = None
    if model.support is not None:
        exact = exact_sweep(model, grid)
        exact_ok = bool(exact[at] <= exact.min() + 1e-15)
    err, se = monte_carlo_sweep(model, grid, trial_count, seed)
    step = float(np.min(np.diff(np.sort(grid)))) if grid.size > 1 else 1.0
    argmin = nearest_minimizer(grid, err, target)
    mc_ok = bool(abs(argmin - target) <= max_steps * step + 1e-12)
    return OptimalityReport(grid, exact, err, se, int(trial_count), exact_ok, argmin, mc_ok)
