"""Encryption-capability evidence: 32-byte crypto function fingerprints
scanned against code images, and Shannon-entropy classification of write
buffers with a distinct-file counter policy.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from ._kernels import shannon_entropy_bits

# AES forward S-box: the canonical constant used to fingerprint embedded AES.
AES_SBOX = bytes(
    [
        0x63, 0x7C, 0x77, 0x7B, 0xF2, 0x6B, 0x6F, 0xC5, 0x30, 0x01, 0x67, 0x2B, 0xFE, 0xD7, 0xAB, 0x76,
        0xCA, 0x82, 0xC9, 0x7D, 0xFA, 0x59, 0x47, 0xF0, 0xAD, 0xD4, 0xA2, 0xAF, 0x9C, 0xA4, 0x72, 0xC0,
        0xB7, 0xFD, 0x93, 0x26, 0x36, 0x3F, 0xF7, 0xCC, 0x34, 0xA5, 0xE5, 0xF1, 0x71, 0xD8, 0x31, 0x15,
        0x04, 0xC7, 0x23, 0xC3, 0x18, 0x96, 0x05, 0x9A, 0x07, 0x12, 0x80, 0xE2, 0xEB, 0x27, 0xB2, 0x75,
        0x09, 0x83, 0x2C, 0x1A, 0x1B, 0x6E, 0x5A, 0xA0, 0x52, 0x3B, 0xD6, 0xB3, 0x29, 0xE3, 0x2F, 0x84,
        0x53, 0xD1, 0x00, 0xED, 0x20, 0xFC, 0xB1, 0x5B, 0x6A, 0xCB, 0xBE, 0x39, 0x4A, 0x4C, 0x58, 0xCF,
        0xD0, 0xEF, 0xAA, 0xFB, 0x43, 0x4D, 0x33, 0x85, 0x45, 0xF9, 0x02, 0x7F, 0x50, 0x3C, 0x9F, 0xA8,
        0x51, 0xA3, 0x40, 0x8F, 0x92, 0x9D, 0x38, 0xF5, 0xBC, 0xB6, 0xDA, 0x21, 0x10, 0xFF, 0xF3, 0xD2,
        0xCD, 0x0C, 0x13, 0xEC, 0x5F, 0x97, 0x44, 0x17, 0xC4, 0xA7, 0x7E, 0x3D, 0x64, 0x5D, 0x19, 0x73,
        0x60, 0x81, 0x4F, 0xDC, 0x22, 0x2A, 0x90, 0x88, 0x46, 0xEE, 0xB8, 0x14, 0xDE, 0x5E, 0x0B, 0xDB,
        0xE0, 0x32, 0x3A, 0x0A, 0x49, 0x06, 0x24, 0x5C, 0xC2, 0xD3, 0xAC, 0x62, 0x91, 0x95, 0xE4, 0x79,
        0xE7, 0xC8, 0x37, 0x6D, 0x8D, 0xD5, 0x4E, 0xA9, 0x6C, 0x56, 0xF4, 0xEA, 0x65, 0x7A, 0xAE, 0x08,
        0xBA, 0x78, 0x25, 0x2E, 0x1C, 0xA6, 0xB4, 0xC6, 0xE8, 0xDD, 0x74, 0x1F, 0x4B, 0xBD, 0x8B, 0x8A,
        0x70, 0x3E, 0xB5, 0x66, 0x48, 0x03, 0xF6, 0x0E, 0x61, 0x35, 0x57, 0xB9, 0x86, 0xC1, 0x1D, 0x9E,
        0xE1, 0xF8, 0x98, 0x11, 0x69, 0xD9, 0x8E, 0x94, 0x9B, 0x1E, 0x87, 0xE9, 0xCE, 0x55, 0x28, 0xDF,
        0x8C, 0xA1, 0x89, 0x0D, 0xBF, 0xE6, 0x42, 0x68, 0x41, 0x99, 0x2D, 0x0F, 0xB0, 0x54, 0xBB, 0x16,
    ]
)

# AES inverse S-box, used as a second built-in fingerprint constant.
AES_INV_SBOX = bytes(
    [
        0x52, 0x09, 0x6A, 0xD5, 0x30, 0x36, 0xA5, 0x38, 0xBF, 0x40, 0xA3, 0x9E, 0x81, 0xF3, 0xD7, 0xFB,
        0x7C, 0xE3, 0x39, 0x82, 0x9B, 0x2F, 0xFF, 0x87, 0x34, 0x8E, 0x43, 0x44, 0xC4, 0xDE, 0xE9, 0xCB,
        0x54, 0x7B, 0x94, 0x32, 0xA6, 0xC2, 0x23, 0x3D, 0xEE, 0x4C, 0x95, 0x0B, 0x42, 0xFA, 0xC3, 0x4E,
        0x08, 0x2E, 0xA1, 0x66, 0x28, 0xD9, 0x24, 0xB2, 0x76, 0x5B, 0xA2, 0x49, 0x6D, 0x8B, 0xD1, 0x25,
        0x72, 0xF8, 0xF6, 0x64, 0x86, 0x68, 0x98, 0x16, 0xD4, 0xA4, 0x5C, 0xCC, 0x5D, 0x65, 0xB6, 0x92,
        0x6C, 0x70, 0x48, 0x50, 0xFD, 0xED, 0xB9, 0xDA, 0x5E, 0x15, 0x46, 0x57, 0xA7, 0x8D, 0x9D, 0x84,
        0x90, 0xD8, 0xAB, 0x00, 0x8C, 0xBC, 0xD3, 0x0A, 0xF7, 0xE4, 0x58, 0x05, 0xB8, 0xB3, 0x45, 0x06,
        0xD0, 0x2C, 0x1E, 0x8F, 0xCA, 0x3F, 0x0F, 0x02, 0xC1, 0xAF, 0xBD, 0x03, 0x01, 0x13, 0x8A, 0x6B,
        0x3A, 0x91, 0x11, 0x41, 0x4F, 0x67, 0xDC, 0xEA, 0x97, 0xF2, 0xCF, 0xCE, 0xF0, 0xB4, 0xE6, 0x73,
        0x96, 0xAC, 0x74, 0x22, 0xE7, 0xAD, 0x35, 0x85, 0xE2, 0xF9, 0x37, 0xE8, 0x1C, 0x75, 0xDF, 0x6E,
        0x47, 0xF1, 0x1A, 0x71, 0x1D, 0x29, 0xC5, 0x89, 0x6F, 0xB7, 0x62, 0x0E, 0xAA, 0x18, 0xBE, 0x1B,
        0xFC, 0x56, 0x3E, 0x4B, 0xC6, 0xD2, 0x79, 0x20, 0x9A, 0xDB, 0xC0, 0xFE, 0x78, 0xCD, 0x5A, 0xF4,
        0x1F, 0xDD, 0xA8, 0x33, 0x88, 0x07, 0xC7, 0x31, 0xB1, 0x12, 0x10, 0x59, 0x27, 0x80, 0xEC, 0x5F,
        0x60, 0x51, 0x7F, 0xA9, 0x19, 0xB5, 0x4A, 0x0D, 0x2D, 0xE5, 0x7A, 0x9F, 0x93, 0xC9, 0x9C, 0xEF,
        0xA0, 0xE0, 0x3B, 0x4D, 0xAE, 0x2A, 0xF5, 0xB0, 0xC8, 0xEB, 0xBB, 0x3C, 0x83, 0x53, 0x99, 0x61,
        0x17, 0x2B, 0x04, 0x7E, 0xBA, 0x77, 0xD6, 0x26, 0xE1, 0x69, 0x14, 0x63, 0x55, 0x21, 0x0C, 0x7D,
    ]
)


class CryptoDetectError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# ---------------------------------------------------------------------------
# crypto function signatures
# ---------------------------------------------------------------------------

@dataclass
class CfsSignature:
    digest: bytes  # exactly 32 bytes
    meta: dict
    constants: list  # byte patterns, at least one of length >= 16

    def validate(self) -> None:
        if len(self.digest) != 32:
            raise CryptoDetectError("format", f"digest must be 32 bytes, got {len(self.digest)}")
        if not any(len(c) >= 16 for c in self.constants):
            raise CryptoDetectError("format", "need at least one constant pattern of length >= 16")

    def to_dict(self) -> dict:
        return {
            "digest": self.digest.hex(),
            "meta": self.meta,
            "constants": [c.hex() for c in self.constants],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CfsSignature":
        sig = cls(
            digest=bytes.fromhex(doc["digest"]),
            meta=dict(doc["meta"]),
            constants=[bytes.fromhex(c) for c in doc["constants"]],
        )
        sig.validate()
        return sig


def derive_cfs(function_features: dict) -> CfsSignature:
    """Deterministic 32-byte fingerprint of a crypto routine's features:
    constants, opcode n-grams, and control-flow shape. Equal feature sets
    produce equal digests regardless of input ordering."""
    constants = [bytes(c) for c in function_features.get("constants", [])]
    ngrams = [str(g) for g in function_features.get("opcode_ngrams", [])]
    cfg = function_features.get("cfg_shape", {})
    if not constants and not ngrams and not cfg:
        raise CryptoDetectError("no-features", "at least one feature is required")
    canonical = json.dumps(
        {
            "constants": sorted(c.hex() for c in constants),
            "opcode_ngrams": sorted(ngrams),
            "cfg_shape": {k: int(cfg[k]) for k in sorted(cfg)},
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    digest = hashlib.sha256(canonical.encode()).digest()
    meta = {
        "library_name": function_features.get("library_name", "unknown"),
        "algorithm": function_features.get("algorithm", "unknown"),
        "constant_ids": function_features.get("constant_ids", list(range(len(constants)))),
    }
    sig = CfsSignature(digest=digest, meta=meta, constants=constants or [b"\x00" * 16])
    sig.validate()
    return sig


def scan_code_cfs(code_image: bytes, kb_signatures: list) -> list:
    """Return the signatures whose constant patterns all occur in the image.
    Each pattern check is a single linear substring scan."""
    matches = []
    for sig in kb_signatures:
        if sig.constants and all(pat in code_image for pat in sig.constants):
            matches.append(sig)
    return matches


def default_signatures() -> list:
    aes = derive_cfs(
        {
            "constants": [AES_SBOX],
            "opcode_ngrams": ["aesenc aesenc aesenc aesenclast"],
            "cfg_shape": {"blocks": 9, "loops": 1},
            "library_name": "embedded-aes",
            "algorithm": "AES",
            "constant_ids": ["sbox"],
        }
    )
    aes_dec = derive_cfs(
        {
            "constants": [AES_INV_SBOX],
            "opcode_ngrams": ["aesdec aesdec aesdec aesdeclast"],
            "cfg_shape": {"blocks": 9, "loops": 1},
            "library_name": "embedded-aes-dec",
            "algorithm": "AES",
            "constant_ids": ["inv_sbox"],
        }
    )
    return [aes, aes_dec]


# ---------------------------------------------------------------------------
# entropy heuristics
# ---------------------------------------------------------------------------

# Entropy is computed over at most this prefix of a write buffer; encrypted
# output is uniformly high-entropy so a window suffices and keeps the
# per-write monitoring cost bounded.
ENTROPY_WINDOW_CAP = 65536


def shannon_entropy(buffer) -> float:
    """Shannon entropy in bits/byte; errors on an empty buffer."""
    if len(buffer) == 0:
        raise CryptoDetectError("empty", "entropy of an empty buffer is undefined")
    return shannon_entropy_bits(bytes(buffer))


@dataclass
class EntropyPolicy:
    threshold: float = 7.2  # bits/byte
    min_window: int = 4096  # shorter writes are ignored
    consecutive_k: int = 5  # distinct high-entropy files required to set the flag

    def validate(self) -> None:
        if not (0 < self.threshold <= 8):
            raise CryptoDetectError("format", f"threshold {self.threshold} outside (0, 8]")
        if self.consecutive_k < 1:
            raise CryptoDetectError("format", "consecutive_k must be >= 1")


@dataclass
class EntropyState:
    counted_paths: set = field(default_factory=set)
    flag: bool = False


def entropy_step(state: EntropyState, write: dict, policy: EntropyPolicy) -> bool:
    """Feed one write into the per-process counter. Counts a write only when
    it is long enough, high-entropy, and targets a file not counted before;
    returns True when the distinct-file count reaches the policy threshold."""
    buffer = write["buffer"]
    if len(buffer) < 1:
        raise CryptoDetectError("empty", "entropy_step requires a non-empty buffer")
    if state.flag:
        return True
    if len(buffer) < policy.min_window:
        return False
    path = write["path"]
    if path in state.counted_paths:
        return False
    window = bytes(buffer[:ENTROPY_WINDOW_CAP])
    if shannon_entropy(window) < policy.threshold:
        return False
    state.counted_paths.add(path)
    if len(state.counted_paths) >= policy.consecutive_k:
        state.flag = True
    return state.flag
