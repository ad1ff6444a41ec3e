"""Exception types shared across the package."""


class RiskgradError(Exception):
    """Base class for all riskgrad errors."""


class HorizonExceeded(RiskgradError):
    """An episode failed to reach the target state within the horizon bound.

    Raised by the simulators; signals that the supplied MDP violates the
    bounded first-hitting-time requirement.
    """


class InvalidDiscount(RiskgradError):
    """Operation requires a discount factor strictly below one."""


class BudgetExceeded(RiskgradError):
    """Exhaustive enumeration grew past the configured leaf budget."""


class EmptyBatch(RiskgradError):
    """A sample batch or trajectory batch was empty."""


class DimensionMismatch(RiskgradError):
    """Feature/parameter dimensions do not line up."""


class TerminalStep(RiskgradError):
    """Attempted to step an augmented MDP from its target state."""


class NotTerminal(RiskgradError):
    """An end-of-episode update was invoked on an unfinished episode."""


class NoConvergence(RiskgradError):
    """Fixed-point iteration hit its sweep cap without meeting tolerance."""


class ConfigInvalid(RiskgradError):
    """An environment or experiment configuration failed validation."""
