"""
Byte-level call encoding

Calls are encoded ABI-style: a 4-byte selector followed by 32-byte head words;
strings are dynamic (offset in the head, length word plus zero-padded data in the
tail). Only the byte composition matters for gas.
"""
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

# Function -> 4-byte selector (no zero bytes)
SELECTORS: Dict[str, bytes] = {
    "register_ad": bytes.fromhex("61d689fa"),
    "add_service": bytes.fromhex("8f1c5a3e"),
    "select_service": bytes.fromhex("b2d4e6a1"),
    "register_breach": bytes.fromhex("5c7e9b13"),
    "calculate_penalty": bytes.fromhex("a3c5e7f9"),
    "transfer_funds": bytes.fromhex("e4b8c2d6"),
    "onboard_provider": bytes.fromhex("7d3f1b59"),
}

# Function -> argument types, in calldata order
SIGNATURES: Dict[str, Tuple[str, ...]] = {
    "register_ad": ("uint256",),
    "add_service": ("string", "string", "uint256"),
    "select_service": ("address", "uint256"),
    "register_breach": ("uint256",),
    "calculate_penalty": ("address",),
    "transfer_funds": ("address",),
    "onboard_provider": ("string", "string", "uint256"),
}

WORD = 32


def _static_word(kind: str, value) -> bytes:
    if kind == "address":
        if len(value) != 20:
            raise ValueError(f"address must be 20 bytes (got {len(value)})")
        return bytes(12) + bytes(value)
    if kind == "uint256":
        value = int(value)
        if value < 0:
            raise ValueError(f"uint256 cannot be negative: {value}")
        return value.to_bytes(WORD, "big")
    raise ValueError(f"Unsupported static type '{kind}'")


def encode_args(types: Sequence[str], values: Sequence) -> bytes:
    """
    Encode arguments as head words followed by the dynamic tail

    Args:
        types: Argument types ('address', 'uint256', 'string')
        values: Argument values in the same order

    Returns:
        bytes: Encoded arguments without selector
    """
    if len(types) != len(values):
        raise ValueError(f"Expected {len(types)} arguments, got {len(values)}")

    head_size = WORD * len(types)
    head = []
    tail = b""
    for kind, value in zip(types, values):
        if kind == "string":
            data = value.encode("utf-8")
            padded_length = -(-len(data) // WORD) * WORD
            head.append((head_size + len(tail)).to_bytes(WORD, "big"))
            tail += len(data).to_bytes(WORD, "big") + data.ljust(padded_length, b"\x00")
        else:
            head.append(_static_word(kind, value))
    return b"".join(head) + tail


@dataclass(frozen=True)
class ContractCall:
    """One contract function invocation; `value` is the attached amount (not in calldata)"""
    function: str
    args: Tuple = ()
    value: int = 0

    def __post_init__(self):
        if self.function not in SELECTORS:
            raise ValueError(f"Unknown contract function '{self.function}'")

    def calldata(self) -> bytes:
        return SELECTORS[self.function] + encode_args(SIGNATURES[self.function], self.args)
