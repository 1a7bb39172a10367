"""
Inter-provider agreement contracts: registration, services, selection, breaches,
penalties and payments over the evm world state.
"""
from .agreement_contracts import (
    ADRecord,
    AgreementContracts,
    AgreementState,
    CallResult,
    PenaltyPolicy,
    Role,
    SelectionRecord,
    ServiceRecord,
    MAX_SERVICES_PER_PROVIDER,
)
from .calldata import ContractCall, SELECTORS, encode_args
from .delta_suite import DeltaCheck, format_delta_report, run_delta_suite
from .layout import ContractId, LayoutMode, make_address

__all__ = [
    "ADRecord",
    "AgreementContracts",
    "AgreementState",
    "CallResult",
    "PenaltyPolicy",
    "Role",
    "SelectionRecord",
    "ServiceRecord",
    "MAX_SERVICES_PER_PROVIDER",
    "ContractCall",
    "SELECTORS",
    "encode_args",
    "DeltaCheck",
    "format_delta_report",
    "run_delta_suite",
    "ContractId",
    "LayoutMode",
    "make_address",
]
