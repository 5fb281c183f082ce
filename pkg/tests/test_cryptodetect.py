import math
import random
from collections import Counter

import pytest

from rwdecept.cryptodetect import (
    AES_SBOX,
    CfsSignature,
    CryptoDetectError,
    EntropyPolicy,
    EntropyState,
    default_signatures,
    derive_cfs,
    entropy_step,
    scan_code_cfs,
    shannon_entropy,
)

AES_FEATURES = {
    "constants": [AES_SBOX],
    "opcode_ngrams": ["aesenc aesenc aesenc aesenclast"],
    "cfg_shape": {"blocks": 9, "loops": 1},
}

# reference value computed independently (sha256 over the canonical feature
# serialization), frozen here
AES_FEATURES_DIGEST = "cee07babd54024060b52df395a9e51104cae9faef7ffd2de83d55a7735ae2747"


def entropy_oracle(data: bytes) -> float:
    n = len(data)
    h = 0.0
    for count in Counter(data).values():
        p = count / n
        h -= p * math.log2(p)
    return h


# ---------------------------------------------------------------------------
# fingerprints
# ---------------------------------------------------------------------------

def test_derive_cfs_matches_golden_digest():
    sig = derive_cfs(AES_FEATURES)
    assert sig.digest.hex() == AES_FEATURES_DIGEST
    assert len(sig.digest) == 32
    # reproducible across calls
    assert derive_cfs(AES_FEATURES).digest.hex() == AES_FEATURES_DIGEST


def test_derive_cfs_canonicalizes_constant_order():
    features = {
        "constants": [AES_SBOX, b"\x01" * 24],
        "opcode_ngrams": ["b", "a"],
        "cfg_shape": {"loops": 1, "blocks": 9},
    }
    permuted = {
        "constants": [b"\x01" * 24, AES_SBOX],
        "opcode_ngrams": ["a", "b"],
        "cfg_shape": {"blocks": 9, "loops": 1},
    }
    assert derive_cfs(features).digest == derive_cfs(permuted).digest


def test_derive_cfs_distinguishes_single_opcode_change():
    other = dict(AES_FEATURES, opcode_ngrams=["aesenc aesenc aesenc aesenc"])
    assert derive_cfs(AES_FEATURES).digest != derive_cfs(other).digest


def test_derive_cfs_requires_features():
    with pytest.raises(CryptoDetectError) as exc:
        derive_cfs({})
    assert exc.value.code == "no-features"


def test_signature_dict_roundtrip():
    sig = derive_cfs(AES_FEATURES)
    again = CfsSignature.from_dict(sig.to_dict())
    assert again.digest == sig.digest
    assert again.constants == sig.constants


def test_signature_validation():
    with pytest.raises(CryptoDetectError):
        CfsSignature(digest=b"\x00" * 31, meta={}, constants=[b"\x00" * 16]).validate()
    with pytest.raises(CryptoDetectError):
        CfsSignature(digest=b"\x00" * 32, meta={}, constants=[b"\x00" * 8]).validate()


# ---------------------------------------------------------------------------
# scanning
# ---------------------------------------------------------------------------

def test_scan_finds_embedded_sbox():
    image = b"\x90" * 100 + AES_SBOX + b"\xcc" * 50
    matches = scan_code_cfs(image, default_signatures())
    assert [m.meta["algorithm"] for m in matches] == ["AES"]
    assert matches[0].meta["library_name"] == "embedded-aes"


def test_scan_empty_image_no_matches():
    assert scan_code_cfs(b"", default_signatures()) == []


def test_scan_random_megabyte_has_no_sbox_match():
    rng = random.Random(99)
    image = rng.randbytes(1 << 20)
    assert scan_code_cfs(image, default_signatures()) == []


def test_scan_requires_all_constants():
    sig = CfsSignature(
        digest=b"\x00" * 32,
        meta={"library_name": "two-const"},
        constants=[b"A" * 16, b"B" * 16],
    )
    assert scan_code_cfs(b"xx" + b"A" * 16 + b"yy", [sig]) == []
    assert scan_code_cfs(b"A" * 16 + b"B" * 16, [sig]) == [sig]


def test_scan_no_false_positive_on_fuzzed_images():
    rng = random.Random(5)
    sigs = default_signatures()
    for _ in range(50):
        image = rng.randbytes(rng.randint(0, 4096))
        assert scan_code_cfs(image, sigs) == []


# ---------------------------------------------------------------------------
# entropy
# ---------------------------------------------------------------------------

def test_entropy_of_zeros_is_zero():
    assert shannon_entropy(bytes(4096)) == 0.0


def test_entropy_of_full_alphabet_is_eight():
    assert shannon_entropy(bytes(range(256))) == 8.0


def test_entropy_of_random_buffer_is_high():
    rng = random.Random(4)
    assert shannon_entropy(rng.randbytes(65536)) >= 7.99


def test_entropy_rejects_empty():
    with pytest.raises(CryptoDetectError) as exc:
        shannon_entropy(b"")
    assert exc.value.code == "empty"


def test_entropy_matches_oracle_on_random_buffers():
    rng = random.Random(123)
    for _ in range(100):
        data = rng.randbytes(rng.randint(1, 16384))
        assert shannon_entropy(data) == pytest.approx(entropy_oracle(data), abs=1e-9)


# ---------------------------------------------------------------------------
# entropy policy stepping
# ---------------------------------------------------------------------------

def _cipher_like(rng, n=8192):
    return rng.randbytes(n)


def test_flag_sets_on_kth_distinct_file():
    rng = random.Random(7)
    policy = EntropyPolicy(consecutive_k=5)
    state = EntropyState()
    for i in range(4):
        assert not entropy_step(state, {"path": f"/f{i}", "buffer": _cipher_like(rng)}, policy)
    assert entropy_step(state, {"path": "/f4", "buffer": _cipher_like(rng)}, policy)
    assert state.flag


def test_repeated_path_counted_once():
    rng = random.Random(8)
    policy = EntropyPolicy(consecutive_k=2)
    state = EntropyState()
    for _ in range(10):
        entropy_step(state, {"path": "/same", "buffer": _cipher_like(rng)}, policy)
    assert not state.flag
    entropy_step(state, {"path": "/other", "buffer": _cipher_like(rng)}, policy)
    assert state.flag


def test_plaintext_writes_never_set_flag():
    from rwdecept.corpus import plaintext_block

    rng = random.Random(9)
    policy = EntropyPolicy()
    state = EntropyState()
    for i in range(100):
        text = plaintext_block(rng, 8192)
        assert not entropy_step(state, {"path": f"/t{i}", "buffer": text}, policy)
    assert not state.flag


def test_short_writes_ignored():
    rng = random.Random(10)
    policy = EntropyPolicy(min_window=4096, consecutive_k=1)
    state = EntropyState()
    assert not entropy_step(state, {"path": "/short", "buffer": rng.randbytes(1024)}, policy)


def test_k1_single_ciphertext_write_sets_flag():
    rng = random.Random(11)
    policy = EntropyPolicy(consecutive_k=1)
    state = EntropyState()
    assert entropy_step(state, {"path": "/x", "buffer": _cipher_like(rng)}, policy)


def test_empty_write_rejected():
    with pytest.raises(CryptoDetectError):
        entropy_step(EntropyState(), {"path": "/x", "buffer": b""}, EntropyPolicy())


def test_policy_validation():
    with pytest.raises(CryptoDetectError):
        EntropyPolicy(threshold=9.0).validate()
    with pytest.raises(CryptoDetectError):
        EntropyPolicy(consecutive_k=0).validate()


def test_compressed_looking_content_sits_below_threshold():
    from rwdecept.corpus import opaque_block

    rng = random.Random(12)
    policy = EntropyPolicy()
    for _ in range(10):
        h = shannon_entropy(opaque_block(rng, 8192))
        assert 6.5 < h < policy.threshold
