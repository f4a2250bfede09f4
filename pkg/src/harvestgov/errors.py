"""Shared exception types."""


class ContractViolationError(RuntimeError):
    """An operation was invoked outside its stated calling contract."""


class CapacityError(RuntimeError):
    """A request exceeds a hard size limit (enumeration cap, grid capacity)."""


class NoPureEquilibriumError(RuntimeError):
    """No pure-strategy follower equilibrium exists for any leader action."""


class ConfigError(ValueError):
    """Invalid or unknown configuration; the message names the offending key."""
