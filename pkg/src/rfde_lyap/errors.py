"""Exception types shared across the package."""


class ConfigurationError(Exception):
    """A scenario, system or functional is missing required pieces."""


class ModelError(Exception):
    """A model evaluator returned something unusable (wrong shape, non-finite)."""


class ConstructionInvalid(Exception):
    """Trajectory-based construction hit a blow-up; the system cannot be certified."""
