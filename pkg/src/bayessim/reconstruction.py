"""Recovering class posteriors from a similarity oracle.

Two-class path
--------------
The self-similarity s(x, x) = p^2 + (1 - p)^2 pins p = P(class 0 | x) down to
the unordered pair {1/2 + r, 1/2 - r} with r = sqrt(2 s(x, x) - 1) / 2.  The
sign of s(x, x') - 1/2 then tells whether x and x' fall on the same side of the
minimum-error boundary, which sorts every point into one of two regions
relative to an anchor.  What remains is a global flip, settled by the
likelihood ratio of the two orientations on labelled samples.

Multi-class path
----------------
For c classes and n points, the similarity matrix is the Gram matrix
S = P^T P of the c x n matrix of posterior columns.  :func:`solve_multiclass`
finds simplex-constrained columns reproducing S by projected gradient descent
with restarts; :func:`disambiguate_permutation` picks the row labelling that
best explains labelled samples.
"""

import itertools
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DisambiguationTieWarning,
    InconsistentSimilarityWarning,
    InvalidSelfSimilarityError,
    PermutationSearchTooLargeError,
    UnidentifiableProblemError,
)
from .generative import EvalGrid, Samples
from .rng import make_rng

CLAMP_TOL = 1e-6
# Estimated oracles scatter around 1/2 near the boundary, so reconstruction
# clamps their self-similarities over a wider band.
ESTIMATED_CLAMP_TOL = 0.1
EXACT_BOUNDARY_TOL = 1e-9
ESTIMATED_BOUNDARY_TOL = 0.02
REFERENCE_COUNT = 5
MAX_PERMUTATION_CLASSES = 6

R0, R1, BOUNDARY = "R0", "R1", "boundary"


def posterior_pair_from_self_similarity(s_xx, clamp_tol=CLAMP_TOL):
    """Both roots of p^2 + (1 - p)^2 = s_xx, as ``(p_plus, p_minus)``.

    Works elementwise on arrays.  Values in ``[1/2 - clamp_tol, 1/2)`` are
    treated as 1/2.

    >>> [round(v, 12) for v in posterior_pair_from_self_similarity(0.68)]
    [0.8, 0.2]
    """
    s = np.asarray(s_xx, dtype=float)
    if np.any(s < 0.5 - clamp_tol) or np.any(s > 1.0) or np.any(np.isnan(s)):
        bad = s[~((s >= 0.5 - clamp_tol) & (s <= 1.0))]
        raise InvalidSelfSimilarityError(
            f"self-similarity must lie in [1/2, 1]; got {bad.ravel()[0]!r}"
        )
    r = 0.5 * np.sqrt(np.clip(2.0 * s - 1.0, 0.0, 1.0))
    p_plus, p_minus = 0.5 + r, 0.5 - r
    if p_plus.ndim == 0:
        return float(p_plus), float(p_minus)
    return p_plus, p_minus


def same_region(s_xxp, boundary_tol=EXACT_BOUNDARY_TOL):
    """Classify a cross-similarity as ``"same"``, ``"different"`` or ``"boundary"``."""
    if s_xxp > 0.5 + boundary_tol:
        return "same"
    if s_xxp < 0.5 - boundary_tol:
        return "different"
    return "boundary"


def _default_tolerances(oracle, boundary_tol, clamp_tol):
    exact = getattr(oracle, "is_exact", False)
    if boundary_tol is None:
        boundary_tol = EXACT_BOUNDARY_TOL if exact else ESTIMATED_BOUNDARY_TOL
    if clamp_tol is None:
        clamp_tol = CLAMP_TOL if exact else ESTIMATED_CLAMP_TOL
    return boundary_tol, clamp_tol


@dataclass(frozen=True)
class _References:
    """Largest-margin grid points with their region signs (+1 for R0)."""

    points: np.ndarray
    signs: np.ndarray
    boundary_tol: float

    def votes(self, oracle, X):
        """Signed vote total of each row of ``X``: positive means R0."""
        cross = oracle.pairwise(X, self.points) - 0.5
        ballots = np.where(np.abs(cross) > self.boundary_tol, np.sign(cross), 0.0)
        return ballots @ self.signs

    def soft_votes(self, oracle, X):
        # tolerance-free version, used for points whose own margin is too small
        return np.sign(oracle.pairwise(X, self.points) - 0.5) @ self.signs


def _build_references(grid_points, self_sim, oracle, boundary_tol, k, allowed=None):
    margin = np.abs(self_sim - 0.5)
    if np.all(margin <= boundary_tol):
        raise UnidentifiableProblemError(
            "P(same|x,x) = 1/2 at every grid point; the posterior is 1/2 everywhere"
        )
    ranked = np.where(allowed, margin, -1.0) if allowed is not None else margin
    if np.all(ranked <= boundary_tol):
        ranked = margin
    order = np.argsort(-ranked, kind="stable")
    candidates = [i for i in order[:k] if ranked[i] > boundary_tol]
    anchor = candidates[0]
    ref_points = grid_points[candidates]
    cross = oracle.pairwise(ref_points, grid_points[anchor][None, :])[:, 0]
    signs = np.where(cross >= 0.5, 1.0, -1.0)
    signs[0] = 1.0
    return _References(ref_points, signs, boundary_tol), int(anchor)


def _within_sample_range(points, samples):
    """Grid points inside the bounding box of the sample points, if any."""
    if samples is None or len(samples) == 0:
        return None
    lo, hi = samples.points.min(axis=0), samples.points.max(axis=0)
    return np.all((points >= lo) & (points <= hi), axis=1)


def _tags_from_votes(votes, soft, on_boundary):
    direction = np.where(votes != 0, np.sign(votes), np.sign(soft))
    tags = np.where(direction >= 0, R0, R1).astype(object)
    tags[direction == 0] = BOUNDARY
    tags[on_boundary] = BOUNDARY
    return tags.astype(str), direction


def assign_regions(grid, oracle, boundary_tol=None, reference_count=REFERENCE_COUNT,
                   samples=None):
    """Region tag (``"R0"``, ``"R1"`` or ``"boundary"``) for each grid point.

    The anchor is the grid point with the largest self-similarity margin
    |s(x, x) - 1/2| and is tagged R0.  Every other point is tagged by majority
    vote of :func:`same_region` against the ``reference_count`` largest-margin
    points (with an exact oracle all votes agree with the anchor's).  Points
    whose self-similarity is within ``boundary_tol`` of 1/2 are tagged
    boundary.

    When ``samples`` are given, the anchor and references are drawn only from
    grid points inside the samples' bounding box: an estimated oracle
    saturates at 1 in data-free tails and its cross-similarities there are
    extrapolation.
    """
    boundary_tol, _ = _default_tolerances(oracle, boundary_tol, None)
    points = grid.points if isinstance(grid, EvalGrid) else np.atleast_2d(grid)
    self_sim = oracle.self_similarity(points)
    refs, _ = _build_references(points, self_sim, oracle, boundary_tol, reference_count,
                                _within_sample_range(points, samples))
    on_boundary = np.abs(self_sim - 0.5) <= boundary_tol
    tags, _ = _tags_from_votes(refs.votes(oracle, points), refs.soft_votes(oracle, points),
                               on_boundary)
    return tags


@dataclass(frozen=True)
class BranchChoice:
    choice: str
    log_ratio: float
    tie: bool = False


def _log_likelihood(posteriors, labels):
    probs = posteriors[np.arange(len(labels)), labels]
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(probs)))


def disambiguate_branch(candidate_a, candidate_b, samples):
    """Pick the candidate posterior that better explains ``samples``.

    ``candidate_a`` and ``candidate_b`` map an (N, n) array of points to an
    (N, c) array of class posteriors.  The log likelihood ratio
    sum_i [log P_A(w_i | x_i) - log P_B(w_i | x_i)] decides: A if positive,
    B if negative.  A candidate that gives probability zero to an observed
    label is eliminated outright.  Ties (including the empty sample set) go
    to A with a :class:`DisambiguationTieWarning`.
    """
    samples = samples if isinstance(samples, Samples) else Samples.from_list(samples)
    if len(samples) == 0:
        warnings.warn("no samples: branch choice defaults to A", DisambiguationTieWarning,
                      stacklevel=2)
        return BranchChoice("A", 0.0, tie=True)
    la = _log_likelihood(np.asarray(candidate_a(samples.points)), samples.labels)
    lb = _log_likelihood(np.asarray(candidate_b(samples.points)), samples.labels)
    if la == -np.inf and lb == -np.inf:
        warnings.warn("both candidates are impossible under the samples; defaulting to A",
                      DisambiguationTieWarning, stacklevel=2)
        return BranchChoice("A", float("nan"), tie=True)
    log_ratio = la - lb
    if log_ratio > 0:
        return BranchChoice("A", log_ratio)
    if log_ratio < 0:
        return BranchChoice("B", log_ratio)
    warnings.warn("likelihood ratio is exactly 1; defaulting to A", DisambiguationTieWarning,
                  stacklevel=2)
    return BranchChoice("A", 0.0, tie=True)


@dataclass(frozen=True)
class TwoClassReconstruction:
    """Posterior field recovered from a two-class similarity oracle.

    ``posterior`` holds P(class 0 | x) per grid point once ``branch`` is
    ``"A"`` (class 0 lives in R0) or ``"B"`` (class 0 lives in R1); it is
    ``None`` while the branch is ``"undecided"``, in which case
    ``candidate("A")`` and ``candidate("B")`` give both possibilities.
    """

    grid: EvalGrid
    p_plus: np.ndarray
    p_minus: np.ndarray
    region: np.ndarray
    branch: str
    posterior: np.ndarray = None
    log_ratio: float = 0.0
    anchor_index: int = 0
    direction: np.ndarray = field(default=None, repr=False)

    def candidate(self, branch):
        """P(class 0 | x) on the grid under orientation ``branch``."""
        in_r0 = np.where(self.direction > 0, self.p_plus,
                         np.where(self.direction < 0, self.p_minus, 0.5))
        return in_r0 if branch == "A" else 1.0 - in_r0

    def lookup(self, X):
        """Nearest-grid-point P(class 0 | x) for arbitrary points."""
        if self.posterior is None:
            raise ValueError("branch undecided; no posterior to look up")
        tree = cKDTree(self.grid.points)
        _, idx = tree.query(np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, self.grid.dimension))
        return self.posterior[idx]


def reconstruct_two_class(oracle, grid, samples, boundary_tol=None, clamp_tol=None,
                          reference_count=REFERENCE_COUNT):
    """Recover P(class 0 | x) on ``grid`` from a two-class similarity oracle.

    Composes the self-similarity inversion, region assignment and
    likelihood-ratio branch choice.  Candidate posteriors at the sample
    points are evaluated directly through the oracle (the same inversion and
    region vote applied off-grid).  With no samples the branch stays
    ``"undecided"``.
    """
    boundary_tol, clamp_tol = _default_tolerances(oracle, boundary_tol, clamp_tol)
    points = grid.points
    self_sim = oracle.self_similarity(points)
    p_plus, p_minus = posterior_pair_from_self_similarity(self_sim, clamp_tol)
    p_plus, p_minus = np.atleast_1d(p_plus), np.atleast_1d(p_minus)
    samples = samples if isinstance(samples, Samples) else Samples.from_list(
        samples, grid.dimension)
    refs, anchor = _build_references(points, self_sim, oracle, boundary_tol, reference_count,
                                     _within_sample_range(points, samples))
    on_boundary = np.abs(self_sim - 0.5) <= boundary_tol
    region, direction = _tags_from_votes(
        refs.votes(oracle, points), refs.soft_votes(oracle, points), on_boundary
    )
    base = TwoClassReconstruction(grid, p_plus, p_minus, region, "undecided",
                                  anchor_index=anchor, direction=direction)
    if len(samples) == 0:
        return base

    def off_grid(X):
        s = oracle.self_similarity(X)
        hi, lo = posterior_pair_from_self_similarity(s, clamp_tol)
        votes = refs.votes(oracle, X)
        d = np.where(votes != 0, np.sign(votes), np.sign(refs.soft_votes(oracle, X)))
        return np.where(d > 0, hi, np.where(d < 0, lo, 0.5))

    def as_matrix(p0):
        return np.column_stack([p0, 1.0 - p0])

    choice = disambiguate_branch(
        lambda X: as_matrix(off_grid(X)), lambda X: as_matrix(1.0 - off_grid(X)), samples
    )
    return replace(base, branch=choice.choice, posterior=base.candidate(choice.choice),
                   log_ratio=choice.log_ratio)


# ---------------------------------------------------------------------------
# multi-class


@dataclass(frozen=True)
class MulticlassReconstruction:
    """Posterior columns ``p_matrix`` (c, n) recovered from a similarity matrix."""

    p_matrix: np.ndarray
    residual: float
    permutation_resolved: bool = False
    consistent: bool = True
    restart: int = 0
    permutation: tuple = None


def gram_residual(s_matrix, p_matrix):
    """Frobenius norm of S - P^T P."""
    return float(np.linalg.norm(np.asarray(s_matrix) - p_matrix.T @ p_matrix))


def project_columns_to_simplex(M):
    """Euclidean projection of every column of ``M`` onto the probability simplex."""
    c, n = M.shape
    u = -np.sort(-M, axis=0)
    css = np.cumsum(u, axis=0) - 1.0
    ind = np.arange(1, c + 1)[:, None]
    cond = u - css / ind > 0
    rho = c - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[rho, np.arange(n)] / (rho + 1)
    return np.maximum(M - theta[None, :], 0.0)


def _householder(u, v):
    """Orthogonal matrix mapping unit vector ``u`` to unit vector ``v``."""
    w = u - v
    norm = np.linalg.norm(w)
    if norm < 1e-14:
        return np.eye(len(u))
    w = w / norm
    return np.eye(len(u)) - 2.0 * np.outer(w, w)


def _random_rotation_fixing(axis, rng):
    """Haar-random orthogonal map that leaves the unit vector ``axis`` fixed."""
    c = len(axis)
    basis = np.linalg.qr(np.column_stack([axis, np.eye(c)[:, :c - 1]]))[0]
    if basis[:, 0] @ axis < 0:
        basis[:, 0] = -basis[:, 0]
    q, r = np.linalg.qr(rng.standard_normal((c - 1, c - 1)))
    q = q * np.sign(np.diag(r))[None, :]
    block = np.eye(c)
    block[1:, 1:] = q
    return basis @ block @ basis.T


def _spectral_start(s_matrix, c, rng, restart):
    """Top-c factor of S, rotated so that columns sum to one, then projected.

    If S = F^T F then any Q F with Q orthogonal reproduces S.  Column sums of
    one require Q^T 1 = u where F^T u = 1, so Q is fixed up to rotations about
    the all-ones axis; restarts sample those rotations at random.
    """
    vals, vecs = np.linalg.eigh(s_matrix)
    top = np.argsort(vals)[::-1][:c]
    F = (vecs[:, top] * np.sqrt(np.clip(vals[top], 0.0, None))).T
    u, *_ = np.linalg.lstsq(F.T, np.ones(F.shape[1]), rcond=None)
    ones = np.ones(c) / np.sqrt(c)
    if np.linalg.norm(u) < 1e-12:
        return project_columns_to_simplex(rng.dirichlet(np.ones(c), size=F.shape[1]).T)
    H = _householder(u / np.linalg.norm(u), ones)
    R = np.eye(c) if restart == 0 else _random_rotation_fixing(ones, rng)
    return project_columns_to_simplex(R @ H @ F)


def _projected_gradient(s_matrix, P, max_iter, grad_tol):
    def objective(P):
        diff = s_matrix - P.T @ P
        return float(np.sum(diff * diff)), diff

    f, diff = objective(P)
    step = 1.0
    for _ in range(max_iter):
        grad = -4.0 * P @ diff
        if np.linalg.norm(grad) <= grad_tol or f == 0.0:
            break
        # Armijo backtracking along the projection arc
        while True:
            cand = project_columns_to_simplex(P - step * grad)
            f_new, diff_new = objective(cand)
            if f_new <= f - 1e-4 * np.sum(grad * (P - cand)) or step < 1e-12:
                break
            step *= 0.5
        if np.array_equal(cand, P):
            break
        P, f, diff = cand, f_new, diff_new
        step = min(step * 2.0, 1e3)
    return P, f


def solve_multiclass(s_matrix, class_count, restarts=20, seed=0, max_iter=10_000,
                     grad_tol=1e-10, residual_tol=None):
    """Find posterior columns P (c x n, each column on the simplex) with P^T P ~ S.

    Minimises ||S - P^T P||_F^2 by projected gradient descent with Armijo
    backtracking, from ``restarts`` spectral initialisations whose streams
    are derived from ``seed`` and the restart index.  The lowest-residual run
    wins (ties to the lowest restart index).  If it still exceeds
    ``residual_tol`` (default ``1e-4 * n``) an
    :class:`InconsistentSimilarityWarning` is issued and ``consistent`` is
    False on the result.
    """
    S = np.asarray(s_matrix, dtype=float)
    c = int(class_count)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("similarity matrix must be square")
    n = S.shape[0]
    if n < 2 * c - 1:
        raise ValueError(f"need at least 2c-1 = {2 * c - 1} points, got {n}")
    if not np.allclose(S, S.T, atol=1e-12):
        raise ValueError("similarity matrix must be symmetric")
    if np.any(S < 0) or np.any(S > 1):
        raise ValueError("similarities must lie in [0, 1]")
    if np.any(np.diag(S) < 1.0 / c - 1e-9):
        raise ValueError("self-similarities must be at least 1/c")
    if residual_tol is None:
        residual_tol = 1e-4 * n

    best = None
    for r in range(max(1, int(restarts))):
        rng = make_rng(seed, r)
        P0 = _spectral_start(S, c, rng, r)
        P, _ = _projected_gradient(S, P0, max_iter, grad_tol)
        res = gram_residual(S, P)
        if best is None or res < best[0]:
            best = (res, r, P)
    res, r, P = best
    consistent = res <= residual_tol
    if not consistent:
        warnings.warn(f"best residual {res:.3g} exceeds tolerance {residual_tol:.3g}",
                      InconsistentSimilarityWarning, stacklevel=2)
    return MulticlassReconstruction(P, res, consistent=consistent, restart=r)


def disambiguate_permutation(solution, samples, point_index):
    """Relabel the rows of ``solution`` to maximise the sample likelihood.

    ``samples`` are labelled observations and ``point_index[i]`` is the
    column of ``solution.p_matrix`` holding the posterior of sample ``i``.
    All c! row permutations are scored (c <= 6); ties go to the
    lexicographically first permutation.
    """
    P = solution.p_matrix
    c = P.shape[0]
    if c > MAX_PERMUTATION_CLASSES:
        raise PermutationSearchTooLargeError(
            f"{c} classes means {c}! permutations; at most {MAX_PERMUTATION_CLASSES} supported"
        )
    labels = np.array([s[0] for s in samples], dtype=np.int64)
    cols = np.asarray(point_index, dtype=np.int64).reshape(-1)
    if labels.shape[0] != cols.shape[0]:
        raise ValueError("one column index per sample is required")
    if labels.shape[0] == 0:
        warnings.warn("no samples: permutation left unresolved", DisambiguationTieWarning,
                      stacklevel=2)
        return solution
    best_perm, best_ll = None, None
    for perm in itertools.permutations(range(c)):
        ll = _log_likelihood(P[list(perm)][:, cols].T, labels)
        if best_ll is None or ll > best_ll:
            best_perm, best_ll = perm, ll
    return replace(solution, p_matrix=P[list(best_perm)], permutation_resolved=True,
                   permutation=best_perm)


def random_multiclass_instance(seed, class_count=3, point_count=7):
    """Forward-generated posterior columns and their similarity matrix.

    One column per class is a pure vertex of the simplex (a point whose class
    is certain); the rest are Dirichlet(1) draws.  Columns are shuffled.
    Returns ``(p_matrix, s_matrix, pure_index)`` where ``pure_index[k]`` is
    the column holding the vertex of class k.
    """
    c, n = int(class_count), int(point_count)
    if n < c:
        raise ValueError("need at least one point per class")
    rng = make_rng(seed, 7)
    P = np.concatenate([np.eye(c), rng.dirichlet(np.ones(c), size=n - c).T], axis=1)
    order = rng.permutation(n)
    P = P[:, order]
    pure_index = np.array([int(np.flatnonzero(order == k)[0]) for k in range(c)])
    return P, P.T @ P, pure_index


def permutation_error(p_est, p_true):
    """Smallest max-entry error between ``p_true`` and any row permutation of ``p_est``."""
    c = p_true.shape[0]
    return min(float(np.max(np.abs(p_est[list(perm)] - p_true)))
               for perm in itertools.permutations(range(c)))
