"""Exception and warning types shared across the package."""


class ModelError(ValueError):
    """Raised when a model definition violates its invariants."""


class UnsupportedPointError(ValueError):
    """All class-conditional densities vanish at the query point."""


class InsufficientGridError(ValueError):
    """The evaluation grid does not cover enough of the model's mass."""


class NoTrainingPairsError(ValueError):
    pass


class InvalidSelfSimilarityError(ValueError):
    """A self-similarity value lies outside [1/2, 1] beyond the clamp tolerance."""


class UnidentifiableProblemError(ValueError):
    """Every point is on the decision boundary, so no region can be anchored."""


class IncompletePrototypeSetError(ValueError):
    pass


class BranchUnresolvedError(ValueError):
    """The reconstruction has no samples to choose between the two branches."""


class PermutationSearchTooLargeError(ValueError):
    pass


class ImpossiblePairError(ValueError):
    """Both same- and different-patch likelihoods are zero for a pair."""


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DisambiguationTieWarning(UserWarning):
    """Likelihood-ratio disambiguation could not separate the candidates."""


class InconsistentSimilarityWarning(UserWarning):
    """No posterior matrix reproduces the similarity matrix within tolerance."""


class ExperimentError(RuntimeError):
    """A module error raised while running a named experiment."""

    def __init__(self, experiment, cause):
        super().__init__(f"experiment {experiment!r} failed: {type(cause).__name__}: {cause}")
        self.experiment = experiment
        self.cause = cause
