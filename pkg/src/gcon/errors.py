"""Exception types shared across the package."""


class GconError(Exception):
    pass


class ShapeError(GconError, ValueError):
    pass


class GraphError(GconError, ValueError):
    """Malformed graph or invalid generator parameters."""


class ContractError(GconError, RuntimeError):
    pass


class ConfigError(GconError, ValueError):
    pass


class BudgetError(GconError, ValueError):
    """Exact solver asked to handle an instance above its size budget."""


class TrainingError(GconError, RuntimeError):
    pass
