"""Bayesian similarity: P(same label | x, x') and what can be recovered from it.

Submodules
----------
generative      ground-truth class models, grids and sampling
similarity      exact and kernel-estimated similarity oracles
reconstruction  posteriors from similarities (two-class and multi-class)
classify        decision rules built on posteriors and similarities
hierarchical    batched task families and within-batch similarity
discrimination  same/different decisions without class structure
harness         seeded experiments, CSV reports and the ``bayessim`` CLI
"""

from .generative import (
    DiscreteClassModel, EvalGrid, MixtureClassModel, Samples, bayes_risk, make_grid, sample,
)
from .similarity import SimilarityOracle, estimate_similarity, exact_similarity

__all__ = [
    "DiscreteClassModel", "EvalGrid", "MixtureClassModel", "Samples", "SimilarityOracle",
    "bayes_risk", "estimate_similarity", "exact_similarity", "make_grid", "sample",
]
__version__ = "0.1.0"
