"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ``RWDECEPT_BACKEND``
environment variable: ``numba`` (default when importable) or ``numpy``.
Both implementations of every kernel are importable regardless of the
selected default so that ``benchmarks/kernel_bench.py`` can time them
side by side.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "available_backends",
    "get_backend",
    "shannon_entropy_bits",
    "xor_bytes",
]


# ---------------------------------------------------------------------------
# pure-numpy implementations (always available)
# ---------------------------------------------------------------------------

def _entropy_numpy(arr: np.ndarray) -> float:
    counts = np.bincount(arr, minlength=256)
    n = arr.shape[0]
    p = counts[counts > 0] / n
    return float(-(p * np.log2(p)).sum())


def _xor_numpy(data: np.ndarray, stream: np.ndarray) -> np.ndarray:
    return np.bitwise_xor(data, stream[: data.shape[0]])


_NUMPY_IMPL = {"entropy_u8": _entropy_numpy, "xor_u8": _xor_numpy}


# ---------------------------------------------------------------------------
# numba implementations (compiled lazily on first use, cached on disk)
# ---------------------------------------------------------------------------

def _build_numba_impl():
    from numba import njit

    @njit(cache=True)
    def entropy_u8(arr):
        counts = np.zeros(256, dtype=np.int64)
        for i in range(arr.shape[0]):
            counts[arr[i]] += 1
        n = arr.shape[0]
        h = 0.0
        for c in counts:
            if c > 0:
                p = c / n
                h -= p * np.log2(p)
        return h

    @njit(cache=True)
    def xor_u8(data, stream):
        out = np.empty(data.shape[0], dtype=np.uint8)
        for i in range(data.shape[0]):
            out[i] = data[i] ^ stream[i]
        return out

    return {"entropy_u8": entropy_u8, "xor_u8": xor_u8}


_numba_impl = None


def _numba(force: bool = False):
    global _numba_impl
    if _numba_impl is None:
        try:
            _numba_impl = _build_numba_impl()
        except ImportError:
            if force:
                raise
            _numba_impl = _NUMPY_IMPL
    return _numba_impl


def available_backends() -> list[str]:
    try:
        import numba  # noqa: F401

        return ["numba", "numpy"]
    except ImportError:
        return ["numpy"]


def get_backend(name: str) -> dict:
    """Return the kernel table for an explicit backend name."""
    if name == "numpy":
        return _NUMPY_IMPL
    if name == "numba":
        return _numba(force=True)
    raise ValueError(f"unknown kernel backend {name!r} (use 'numba' or 'numpy')")


def _select_default() -> str:
    requested = os.environ.get("RWDECEPT_BACKEND", "").strip().lower()
    if requested in ("numba", "numpy"):
        return requested
    if requested:
        raise ValueError(f"RWDECEPT_BACKEND={requested!r} not understood (use 'numba' or 'numpy')")
    return "numba" if "numba" in available_backends() else "numpy"


BACKEND = _select_default()
_impl = _NUMPY_IMPL if BACKEND == "numpy" else _numba()


# ---------------------------------------------------------------------------
# public wrappers
# ---------------------------------------------------------------------------

def shannon_entropy_bits(data) -> float:
    """Shannon entropy of a byte buffer in bits/byte, in [0, 8].

    Raises ValueError on an empty buffer.
    """
    if isinstance(data, np.ndarray):
        arr = data.astype(np.uint8, copy=False)
    else:
        arr = np.frombuffer(bytes(data), dtype=np.uint8)
    if arr.shape[0] == 0:
        raise ValueError("entropy of empty buffer is undefined")
    return float(_impl["entropy_u8"](arr))


def xor_bytes(data: bytes, stream: bytes) -> bytes:
    """XOR ``data`` against the first ``len(data)`` bytes of ``stream``."""
    if len(stream) < len(data):
        raise ValueError("keystream shorter than data")
    a = np.frombuffer(data, dtype=np.uint8)
    b = np.frombuffer(stream, dtype=np.uint8)[: a.shape[0]]
    return _impl["xor_u8"](a, b).tobytes()
