"""Payload codec: text or registry ids <-> fixed-length bit vectors, wrapped
in a Hamming(7,4) code."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .errors import BadLength, BudgetTooSmall, LengthMismatch
from .net import MessageBits

# systematic generator: codeword = [d1 d2 d3 d4 p1 p2 p3]
GENERATOR = np.array([
    [1, 0, 0, 0, 1, 1, 0],
    [0, 1, 0, 0, 1, 0, 1],
    [0, 0, 1, 0, 0, 1, 1],
    [0, 0, 0, 1, 1, 1, 1],
], dtype=np.uint8)

PARITY_CHECK = np.array([
    [1, 1, 0, 1, 1, 0, 0],
    [1, 0, 1, 1, 0, 1, 0],
    [0, 1, 1, 1, 0, 0, 1],
], dtype=np.uint8)

# syndrome (as int, MSB = first row) -> index of the flipped bit
_SYNDROME_TO_POS = {
    int("".join(str(b) for b in PARITY_CHECK[:, j]), 2): j for j in range(7)
}

MIN_BUDGET = 16
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def _as_bits(x) -> np.ndarray:
    if isinstance(x, MessageBits):
        return x.bits
    arr = np.asarray(x, dtype=np.uint8).reshape(-1)
    if arr.size and arr.max() > 1:
        raise ValueError("bit vectors hold only 0/1")
    return arr


def ecc_encode(data) -> np.ndarray:
    """Hamming(7,4): every 4-bit nibble becomes a 7-bit codeword."""
    d = _as_bits(data)
    if d.size % 4:
        raise BadLength(f"data length {d.size} not divisible by 4")
    return (d.reshape(-1, 4) @ GENERATOR % 2).astype(np.uint8).reshape(-1)


def ecc_decode(coded) -> Tuple[np.ndarray, int]:
    """Syndrome decoding; fixes up to one flipped bit per 7-bit block.

    Returns (data bits, number of bits corrected).
    """
    c = _as_bits(coded)
    if c.size % 7:
        raise BadLength(f"coded length {c.size} not divisible by 7")
    blocks = c.reshape(-1, 7).copy()
    syndromes = blocks @ PARITY_CHECK.T % 2
    corrected = 0
    for k, s in enumerate(syndromes):
        key = int(s[0]) << 2 | int(s[1]) << 1 | int(s[2])
        if key:
            blocks[k, _SYNDROME_TO_POS[key]] ^= 1
            corrected += 1
    return blocks[:, :4].reshape(-1).astype(np.uint8), corrected


def block_inconsistency(coded) -> np.ndarray:
    """Per-block Hamming distance between the received block and the
    re-encoding of its decoded nibble."""
    c = _as_bits(coded)
    data, _ = ecc_decode(c)
    return np.sum(ecc_encode(data).reshape(-1, 7) != c.reshape(-1, 7), axis=1)


def bit_accuracy(a, b) -> float:
    x, y = _as_bits(a), _as_bits(b)
    if x.size != y.size:
        raise LengthMismatch(f"{x.size} vs {y.size} bits")
    if x.size == 0:
        return 1.0
    return float(np.mean(x == y))


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def text_id(text: str) -> int:
    return fnv1a_64(text.encode("utf-8"))


# --------------------------------------------------------------------------


class SourceKind(str, Enum):
    TEXT_DIRECT = "text-direct"
    REGISTRY_ID = "registry-id"


def data_capacity(budget_bits: int) -> int:
    """Data bits available under ``budget_bits`` after Hamming(7,4): the
    largest multiple of 4 not above floor(budget * 4 / 7)."""
    return (budget_bits * 4 // 7) // 4 * 4


def id_bits(budget_bits: int) -> int:
    """How many low-order bits of a 64-bit registry id fit in the budget."""
    return min(64, data_capacity(budget_bits))


def int_to_bits(value: int, n: int) -> np.ndarray:
    """Low ``n`` bits of ``value``, most significant first."""
    return np.array([(value >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.uint8)


def bits_to_int(bits) -> int:
    v = 0
    for b in _as_bits(bits):
        v = (v << 1) | int(b)
    return v


@dataclass(frozen=True)
class Payload:
    raw_bits: MessageBits
    source_kind: SourceKind
    registry_id: Optional[int] = None

    @property
    def budget(self) -> int:
        return len(self.raw_bits)


def _check_budget(budget_bits: int) -> None:
    if budget_bits < MIN_BUDGET:
        raise BudgetTooSmall(f"budget {budget_bits} < {MIN_BUDGET} bits")
    if budget_bits > 128:
        raise BadLength(f"budget {budget_bits} exceeds 128 bits")


def _wrap(data: np.ndarray, budget_bits: int) -> MessageBits:
    coded = ecc_encode(data)
    out = np.zeros(budget_bits, dtype=np.uint8)
    out[:coded.size] = coded
    return MessageBits(out)


def text_to_payload(text: str, budget_bits: int, kind: SourceKind = SourceKind.TEXT_DIRECT) -> Payload:
    """Map text onto exactly ``budget_bits`` bits.

    text-direct: UTF-8 bytes cut at the last whole character that fits the
    data capacity, zero-padded, Hamming-coded, zero-padded to the budget.
    registry-id: the FNV-1a 64-bit id of the text (low-order bits when the
    budget holds fewer than 64 data bits), Hamming-coded.
    """
    _check_budget(budget_bits)
    kind = SourceKind(kind)
    cap = data_capacity(budget_bits)
    if kind is SourceKind.REGISTRY_ID:
        ident = text_id(text)
        return Payload(_wrap(_id_data(ident, budget_bits), budget_bits), kind, ident)
    raw = _utf8_prefix(text, cap // 8)
    data = np.zeros(cap, dtype=np.uint8)
    if raw:
        data[: 8 * len(raw)] = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
    return Payload(_wrap(data, budget_bits), kind)


def id_to_payload(ident: int, budget_bits: int) -> Payload:
    _check_budget(budget_bits)
    return Payload(_wrap(_id_data(ident, budget_bits), budget_bits), SourceKind.REGISTRY_ID, ident)


def _id_data(ident: int, budget_bits: int) -> np.ndarray:
    n = id_bits(budget_bits)
    data = np.zeros(data_capacity(budget_bits), dtype=np.uint8)
    data[:n] = int_to_bits(ident & ((1 << n) - 1), n)
    return data


def _utf8_prefix(text: str, max_bytes: int) -> bytes:
    out = b""
    for ch in text:
        enc = ch.encode("utf-8")
        if len(out) + len(enc) > max_bytes:
            break
        out += enc
    return out


def _coded_part(bits, budget_bits: int) -> np.ndarray:
    cap = data_capacity(budget_bits)
    b = _as_bits(bits)
    if b.size != budget_bits:
        raise LengthMismatch(f"{b.size} bits for a {budget_bits}-bit budget")
    return b[: cap // 4 * 7]


def decode_payload_bits(bits) -> Tuple[np.ndarray, int, np.ndarray]:
    """Strip padding and ECC. Returns (data bits, corrected count, per-block
    inconsistency) for a received ``budget``-bit vector."""
    b = _as_bits(bits)
    coded = _coded_part(b, b.size)
    data, corrected = ecc_decode(coded)
    return data, corrected, block_inconsistency(coded)


def payload_to_text(bits) -> str:
    """Inverse of text-direct encoding; trailing NUL padding is dropped and
    undecodable byte runs are replaced."""
    data, _, _ = decode_payload_bits(bits)
    usable = data[: data.size // 8 * 8]
    raw = np.packbits(usable).tobytes().rstrip(b"\x00")
    return raw.decode("utf-8", errors="replace")


def payload_to_id(bits) -> Tuple[int, int]:
    """(id bits as integer, number of id bits) from a registry-id payload."""
    b = _as_bits(bits)
    data, _, _ = decode_payload_bits(b)
    n = id_bits(b.size)
    return bits_to_int(data[:n]), n
