"""
Storage layout of the six agreement contracts

Mapping entries follow the Solidity convention keccak256(pad32(key) ‖ pad32(slot));
dynamic arrays keep their length at the declared slot and their elements from
keccak256(pad32(slot)) onward.
"""
from enum import Enum, IntEnum
from functools import lru_cache

from Crypto.Hash import keccak

from evm.world_state import SlotKey

ZERO_ADDRESS = bytes(20)


class ContractId(IntEnum):
    REGISTRATION = 1
    ADD_SERVICE = 2
    SELECT_SERVICE = 3
    REGISTER_BREACH = 4
    CALCULATE_PENALTY = 5
    TRANSFER_FUNDS = 6


class LayoutMode(str, Enum):
    NESTED = "nested"
    FLATTENED = "flattened"


# Fields per record
AD_FIELDS = 3          # address, registration time, role
SERVICE_FIELDS = 4     # provider, id hash, location hash, cost
SELECTION_FIELDS = 3   # consumer, provider, service index

# Declared slots
AD_COUNT_SLOT = 0
AD_MAPPING_SLOT = 1
SERVICES_SLOT = 0
PROVIDER_SERVICES_SLOT = 1
FLAT_SERVICES_SLOT = 2
SELECTIONS_SLOT = 0
BREACH_COUNT_SLOT = 0
PENALTIES_SLOT = 0


def keccak256(data: bytes) -> bytes:
    return keccak.new(digest_bits=256, data=data).digest()


def word(value: int) -> bytes:
    return value.to_bytes(32, "big")


def address_word(address: bytes) -> int:
    return int.from_bytes(address, "big")


def word_address(value: int) -> bytes:
    return value.to_bytes(20, "big")


def string_hash(text: str) -> int:
    return int.from_bytes(keccak256(text.encode("utf-8")), "big")


@lru_cache(maxsize=65536)
def mapping_slot(key: bytes, slot: int) -> int:
    """Slot of mapping[key] for a mapping declared at `slot`"""
    return int.from_bytes(keccak256(key.rjust(32, b"\x00") + word(slot)), "big")


@lru_cache(maxsize=64)
def array_base(slot: int) -> int:
    """First element slot of a dynamic array declared at `slot`"""
    return int.from_bytes(keccak256(word(slot)), "big")


def _wrap(index: int) -> int:
    return index % (2 ** 256)


# ----------------------------------------------------------------------
# RegistrationAD
# ----------------------------------------------------------------------

def ad_count_key() -> SlotKey:
    return SlotKey(ContractId.REGISTRATION, AD_COUNT_SLOT)


def ad_field_key(account: bytes, field_offset: int) -> SlotKey:
    base = mapping_slot(account, AD_MAPPING_SLOT)
    return SlotKey(ContractId.REGISTRATION, _wrap(base + field_offset))


# ----------------------------------------------------------------------
# AddService
# ----------------------------------------------------------------------

def services_length_key() -> SlotKey:
    return SlotKey(ContractId.ADD_SERVICE, SERVICES_SLOT)


def service_field_key(service_position: int, field_offset: int) -> SlotKey:
    """service_position is the 0-based index into the global services array"""
    base = array_base(SERVICES_SLOT)
    return SlotKey(ContractId.ADD_SERVICE, _wrap(base + SERVICE_FIELDS * service_position + field_offset))


def provider_services_length_key(provider: bytes) -> SlotKey:
    return SlotKey(ContractId.ADD_SERVICE, mapping_slot(provider, PROVIDER_SERVICES_SLOT))


def provider_service_element_key(provider: bytes, list_position: int) -> SlotKey:
    """Nested layout: element list_position (0-based) of providerServices[provider]"""
    length_slot = mapping_slot(provider, PROVIDER_SERVICES_SLOT)
    return SlotKey(ContractId.ADD_SERVICE, _wrap(array_base(length_slot) + list_position))


def flat_service_key(provider: bytes, service_index: int) -> SlotKey:
    """Flattened layout: single hashed key for (provider, 1-based service index)"""
    composite = keccak256(provider + word(service_index) + word(FLAT_SERVICES_SLOT))
    return SlotKey(ContractId.ADD_SERVICE, int.from_bytes(composite, "big"))


# ----------------------------------------------------------------------
# SelectService
# ----------------------------------------------------------------------

def selections_length_key() -> SlotKey:
    return SlotKey(ContractId.SELECT_SERVICE, SELECTIONS_SLOT)


def selection_field_key(selection_position: int, field_offset: int) -> SlotKey:
    base = array_base(SELECTIONS_SLOT)
    return SlotKey(ContractId.SELECT_SERVICE, _wrap(base + SELECTION_FIELDS * selection_position + field_offset))


# ----------------------------------------------------------------------
# RegisterBreach / CalculatePenalty
# ----------------------------------------------------------------------

def breach_count_key(provider: bytes) -> SlotKey:
    return SlotKey(ContractId.REGISTER_BREACH, mapping_slot(provider, BREACH_COUNT_SLOT))


def penalty_key(provider: bytes) -> SlotKey:
    return SlotKey(ContractId.CALCULATE_PENALTY, mapping_slot(provider, PENALTIES_SLOT))


def make_address(seed: int, zero_bytes: int = 0) -> bytes:
    """
    Deterministic 20-byte account for simulations and tests

    Args:
        seed: Any integer; different seeds give different accounts
        zero_bytes: How many leading bytes are forced to zero (all others are non-zero)

    Returns:
        bytes: 20-byte address
    """
    if not 0 <= zero_bytes < 20:
        raise ValueError(f"zero_bytes must be in [0, 20) (got {zero_bytes})")
    digest = keccak256(b"account" + word(seed))[:20]
    body = bytes(b or 0x11 for b in digest)
    return bytes(zero_bytes) + body[zero_bytes:]
