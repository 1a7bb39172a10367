"""
Exception hierarchy shared by the simulator packages.

Contract-level errors carry the gas consumed up to the failure so the chain can
charge it on a reverted receipt.
"""


class SimulationError(Exception):
    """Base class for every simulator error"""


class ConfigInvalid(SimulationError):
    """A preset, scenario file or override is missing, malformed or out of range"""


class IoFailure(SimulationError):
    """A report or trace could not be written"""


class TxTooLarge(SimulationError):
    """A transaction's gas estimate exceeds the block gas limit"""


class ContractError(SimulationError):
    """Raised by a contract operation; the enclosing transaction reverts"""

    def __init__(self, message: str = "", gas_used: int = 0):
        super().__init__(message)
        self.gas_used = gas_used


class UnregisteredProvider(ContractError):
    pass


class RoleViolation(ContractError):
    pass


class ProviderNotFound(ContractError):
    pass


class ServiceNotFound(ContractError):
    pass


class ZeroValue(ContractError):
    pass


class InsufficientBalance(ContractError):
    pass


class InvalidArgument(ContractError):
    pass


class ServiceLimitExceeded(ContractError):
    pass


class OutOfGas(ContractError):
    pass
