import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bayessim.discrimination import (
    appearance_marginal,
    bayes_error,
    bayes_threshold,
    best_thresholded_error,
    brute_force_error,
    comparison_pool,
    diff_likelihood,
    discrete_model,
    draw_labeled_pairs,
    exact_sweep,
    flip_noise_model,
    gaussian_theta_model,
    monte_carlo_sweep,
    nearest_minimizer,
    optimality_check,
    rule_error,
    same_likelihood,
    same_posterior,
)
from bayessim.errors import ImpossiblePairError, ModelError

THRESHOLDS = np.linspace(0.0, 1.0, 21)


def random_discrete(seed, support_size=3, theta_count=3, same_prior=None):
    rng = np.random.default_rng(seed)
    pmfs = rng.dirichlet(np.ones(support_size), size=theta_count)
    prior = rng.dirichlet(np.ones(theta_count))
    pi = rng.uniform(0.1, 0.9) if same_prior is None else same_prior
    return discrete_model(np.arange(support_size), np.arange(theta_count), prior, pmfs, pi)


def enumerate_joint(model):
    """P(x, x', S) by walking the generative process one branch at a time."""
    table = {}
    pmf = model.appearance_table(model.support)
    for (i, a), (j, b) in itertools.product(enumerate(model.support), repeat=2):
        same = sum(w * pmf[t, i] * pmf[t, j] for t, w in enumerate(model.theta_weights))
        diff = sum(w * v * pmf[t, i] * pmf[u, j]
                   for (t, w), (u, v) in itertools.product(enumerate(model.theta_weights), repeat=2))
        table[a, b] = (model.same_prior * same, (1 - model.same_prior) * diff)
    return table


class TestAppearanceMarginal:
    def test_singleton_supports(self):
        base = lambda x, theta, phi, nu: stats.norm.pdf(x, theta + phi + nu)
        density = appearance_marginal(base, [(0.0, 1.0)], [(0.0, 1.0)])
        x = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(density(x, 0.5), stats.norm.pdf(x, 0.5))

    def test_noise_splits_a_point_mass(self):
        eps = 0.25
        point = lambda x, theta, phi, nu: (np.asarray(x) == theta + nu).astype(float)
        density = appearance_marginal(point, [(0.0, 1.0)], [(-eps, 0.5), (eps, 0.5)])
        np.testing.assert_allclose(density(np.array([1 - eps, 1.0, 1 + eps]), 1.0), [0.5, 0, 0.5])

    def test_flip_noise_table(self):
        # viewing parameter flips the patch with probability 0.1
        point = lambda x, theta, phi, nu: (np.asarray(x) == (3 - theta if phi else theta)).astype(float)
        density = appearance_marginal(point, [(0, 0.9), (1, 0.1)], [(0.0, 1.0)])
        support = np.array([1.0, 2.0])
        table = np.array([density(support, t) for t in (1.0, 2.0)])
        np.testing.assert_allclose(table, flip_noise_model().appearance_table(support))

    def test_unnormalised_support(self):
        with pytest.raises(ModelError):
            appearance_marginal(lambda *a: 1.0, [(0.0, 0.5)], [(0.0, 1.0)])


class TestPairLikelihoods:
    def test_flip_noise_values(self):
        m = flip_noise_model()
        assert same_likelihood(m, 1.0, 1.0) == pytest.approx(0.5 * (0.81 + 0.01))
        assert same_likelihood(m, 1.0, 2.0) == pytest.approx(0.5 * (0.09 + 0.09))
        assert diff_likelihood(m, 1.0, 1.0) == pytest.approx(0.25)
        assert diff_likelihood(m, 1.0, 2.0) == pytest.approx(0.25)

    def test_singleton_theta(self):
        m = discrete_model([0, 1, 2], [0.0], [1.0], [[0.2, 0.5, 0.3]])
        for a, b in itertools.product([0.0, 1.0, 2.0], repeat=2):
            expected = m.appearance_table([a])[0, 0] * m.appearance_table([b])[0, 0]
            assert same_likelihood(m, a, b) == pytest.approx(expected)
            assert diff_likelihood(m, a, b) == pytest.approx(expected)

    @given(st.integers(0, 10_000))
    def test_mixture_identity(self, seed):
        m = random_discrete(seed)
        joint = enumerate_joint(m)
        for (a, b), (s_mass, d_mass) in joint.items():
            assert m.same_prior * same_likelihood(m, a, b) == pytest.approx(s_mass, abs=1e-15)
            assert (1 - m.same_prior) * diff_likelihood(m, a, b) == pytest.approx(d_mass, abs=1e-15)
        assert sum(s + d for s, d in joint.values()) == pytest.approx(1.0)

    @settings(max_examples=40)
    @given(st.integers(0, 10_000), st.integers(0, 2), st.integers(0, 2))
    def test_swap_symmetry(self, seed, i, j):
        m = random_discrete(seed)
        a, b = float(i), float(j)
        assert same_likelihood(m, a, b) == pytest.approx(same_likelihood(m, b, a), abs=1e-12)
        assert diff_likelihood(m, a, b) == pytest.approx(diff_likelihood(m, b, a), abs=1e-12)
        assert same_posterior(m, a, b).posterior_same == pytest.approx(
            same_posterior(m, b, a).posterior_same, abs=1e-12)

    def test_gaussian_quadrature_against_closed_form(self):
        # x, x' share theta ~ N(0, 1): bivariate normal, variance 1.25, covariance 1.
        # Renormalising the truncated prior costs a relative 2e-9 (mass beyond 6 sd).
        m = gaussian_theta_model()
        joint = stats.multivariate_normal([0, 0], [[1.25, 1.0], [1.0, 1.25]])
        marg = stats.norm(scale=np.sqrt(1.25))
        pts = np.random.default_rng(0).uniform(-3, 3, size=(50, 2))
        np.testing.assert_allclose(same_likelihood(m, pts[:, 0], pts[:, 1]), joint.pdf(pts),
                                   rtol=5e-9, atol=1e-12)
        np.testing.assert_allclose(diff_likelihood(m, pts[:, 0], pts[:, 1]),
                                   marg.pdf(pts[:, 0]) * marg.pdf(pts[:, 1]), rtol=5e-9, atol=1e-12)


class TestSamePosterior:
    def test_flip_noise_posteriors(self):
        m = flip_noise_model()
        hit = same_posterior(m, 1.0, 1.0)
        miss = same_posterior(m, 1.0, 2.0)
        assert round(hit.posterior_same, 4) == 0.6212
        assert round(miss.posterior_same, 4) == 0.2647
        assert hit.posterior_same == pytest.approx(0.41 / 0.66)
        assert miss.posterior_same == pytest.approx(0.09 / 0.34)
        assert hit.decision and not miss.decision

    def test_certain_same_prior(self):
        m = flip_noise_model(same_prior=1.0)
        for a, b in itertools.product([1.0, 2.0], repeat=2):
            assert same_posterior(m, a, b).posterior_same == 1.0

    @given(st.integers(0, 10_000))
    def test_singleton_theta_returns_prior(self, seed):
        rng = np.random.default_rng(seed)
        pi = rng.uniform(0.05, 0.95)
        m = discrete_model([0, 1, 2], [0.0], [1.0], [rng.dirichlet(np.ones(3))], pi)
        a, b = np.meshgrid([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
        np.testing.assert_allclose(same_posterior(m, a, b).posterior_same, pi, atol=1e-12)

    def test_impossible_pair(self):
        m = discrete_model([0, 1], [0.0, 1.0], [0.5, 0.5], [[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(ImpossiblePairError):
            same_posterior(m, 1.0, 0.0)

    def test_threshold_drives_decision(self):
        m = flip_noise_model()
        assert not same_posterior(m, 1.0, 1.0, threshold=0.7).decision
        assert same_posterior(m, 1.0, 2.0, threshold=0.2).decision

    @given(st.integers(0, 10_000))
    def test_posterior_in_unit_interval(self, seed):
        m = random_discrete(seed)
        a, b = np.meshgrid(m.support, m.support)
        p = same_posterior(m, a, b).posterior_same
        assert np.all((p >= 0) & (p <= 1))


class TestBayesThreshold:
    def test_symmetric_loss(self):
        assert bayes_threshold() == 0.5

    def test_asymmetric_loss_minimises_cost(self):
        m = random_discrete(3)
        c_fa, c_fr = 3.0, 1.0
        t = bayes_threshold(c_fa, c_fr)
        _, _, s_mass, d_mass = zip(*[(a, b, *v) for (a, b), v in enumerate_joint(m).items()])
        s_mass, d_mass = np.array(s_mass), np.array(d_mass)
        post = s_mass / (s_mass + d_mass)
        cost = lambda decide: np.sum(np.where(decide, c_fa * d_mass, c_fr * s_mass))
        best = min(cost(np.array(bits)) for bits in itertools.product([0, 1], repeat=len(post)))
        assert cost(post >= t) == pytest.approx(best)

    def test_invalid_costs(self):
        with pytest.raises(ValueError):
            bayes_threshold(0.0, 0.0)


class TestOptimality:
    def test_flip_noise_enumeration(self):
        m = flip_noise_model()
        errors = exact_sweep(m, THRESHOLDS)
        # all four pair outcomes, both values of S, decided by the larger mass
        by_hand = sum(min(s, d) for s, d in enumerate_joint(m).values())
        assert by_hand == pytest.approx(0.34)
        assert errors[10] == pytest.approx(by_hand)
        assert errors[10] == errors.min()
        assert bayes_error(m) == pytest.approx(by_hand)

    def test_singleton_theta_flat_sweep(self):
        m = discrete_model([0, 1], [0.0], [1.0], [[0.4, 0.6]], same_prior=0.3)
        errors = exact_sweep(m, np.linspace(0.025, 0.975, 20))
        assert set(np.round(errors[errors == errors.min()], 12)) == {0.3}
        np.testing.assert_allclose(exact_sweep(m, [0.2, 0.5, 0.9]), [0.7, 0.3, 0.3])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_half_threshold_beats_every_rule(self, seed):
        m = random_discrete(seed, support_size=2, theta_count=3, same_prior=None)
        errors = exact_sweep(m, THRESHOLDS)
        assert errors[10] <= errors.min() + 1e-15
        assert errors[10] == pytest.approx(brute_force_error(m), abs=1e-15)
        for score in comparison_pool(m).values():
            assert errors[10] <= best_thresholded_error(m, score) + 1e-15

    def test_rule_error_of_always_same(self):
        m = flip_noise_model(same_prior=0.3)
        assert rule_error(m, lambda a, b: np.ones_like(a, dtype=bool)) == pytest.approx(0.7)

    def test_brute_force_limit(self):
        with pytest.raises(ModelError):
            brute_force_error(random_discrete(0, support_size=5))

    def test_gaussian_monte_carlo(self):
        report = optimality_check(gaussian_theta_model(), THRESHOLDS, 100_000, seed=0)
        assert report.exact_errors is None
        assert report.mc_optimal
        assert abs(report.mc_argmin - 0.5) <= 2 * 0.05 + 1e-12

    def test_flip_noise_monte_carlo_matches_enumeration(self):
        m = flip_noise_model()
        report = optimality_check(m, THRESHOLDS, 100_000, seed=0)
        assert report.exact_optimal and report.mc_optimal
        bound = 4 * report.mc_stderr + 1e-12
        assert np.all(np.abs(report.mc_errors - report.exact_errors) <= bound)

    def test_threshold_grid_must_contain_half(self):
        with pytest.raises(ValueError):
            optimality_check(flip_noise_model(), np.linspace(0.6, 1.0, 5), 10, 0)


class TestPairGeneration:
    def test_same_fraction_and_agreement(self):
        m = flip_noise_model(same_prior=0.3)
        x, y, same = draw_labeled_pairs(m, 4, 50_000)
        assert abs(same.mean() - 0.3) <= 4 * np.sqrt(0.21 / 50_000)
        # P(x = x' | S=1) = 0.82 and P(x = x' | S=0) = 0.5
        assert abs(np.mean(x[same] == y[same]) - 0.82) < 0.01
        assert abs(np.mean(x[~same] == y[~same]) - 0.5) < 0.01

    def test_sharded_streams_are_deterministic(self):
        m = gaussian_theta_model()
        a = draw_labeled_pairs(m, 9, 25_000)
        b = draw_labeled_pairs(m, 9, 25_000)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)

    def test_empty(self):
        err, se = monte_carlo_sweep(flip_noise_model(), THRESHOLDS, 0, 0)
        assert np.all(err == 0) and np.all(se == 0)

    def test_nearest_minimizer_on_plateau(self):
        errors = np.array([0.5, 0.34, 0.34, 0.34, 0.5])
        assert nearest_minimizer([0.1, 0.3, 0.5, 0.7, 0.9], errors) == 0.5
