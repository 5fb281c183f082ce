"""Simulated C&C backend: accepts victim registrations, persists them with
per-sample byte accounting, and reports cumulative depletion at time-bucket
boundaries.

Entries are stored columnar (numpy arrays grown in chunks) so tens of
millions of registrations stay cheap; the Registration record view is
materialized on access.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

VICTIM_ID_LEN = 16
KEY_LEN = 32

# Per-entry backend record sizes in bytes, per sample family. Derived from
# the observed stored-megabytes-to-entry ratios of the four reference
# C&C backends; configurable because record layout varies per family.
DEFAULT_ENTRY_BYTES = {"r1": 160, "r2": 131, "r3": 135, "r4": 131}
FALLBACK_ENTRY_BYTES = 160

DEFAULT_BUCKETS = (3600, 12 * 3600, 24 * 3600)  # seconds of sim time


class AttackerError(ValueError):
    def __init__(self, code: str, message: str, line: int | None = None):
        loc = f" (line {line})" if line is not None else ""
        super().__init__(f"{code}: {message}{loc}")
        self.code = code
        self.line = line


@dataclass(frozen=True)
class Registration:
    victim_id: bytes
    key: bytes
    sample_id: str
    sim_timestamp: float

    def validate(self) -> None:
        if len(self.victim_id) != VICTIM_ID_LEN:
            raise AttackerError("malformed", f"victim_id must be {VICTIM_ID_LEN} bytes")
        if len(self.key) != KEY_LEN:
            raise AttackerError("malformed", f"key must be {KEY_LEN} bytes")


@dataclass(frozen=True)
class Ack:
    ordinal: int


class AttackerDb:
    """Append-only registration store with byte accounting.

    keep_payloads=False drops victim id / key retention (counting and
    timestamps only); bulk depletion benchmarks use it to bound memory.
    """

    _CHUNK = 262_144

    def __init__(self, per_entry_bytes: dict | None = None, keep_payloads: bool = True):
        self.per_entry_bytes = dict(per_entry_bytes or DEFAULT_ENTRY_BYTES)
        self.keep_payloads = keep_payloads
        self.total_bytes = 0
        self._samples: list[str] = []  # sample table
        self._sample_idx: dict[str, int] = {}
        self._n = 0
        self._cap = 0
        self._sample_col = np.empty(0, dtype=np.uint16)
        self._ts_col = np.empty(0, dtype=np.float64)
        self._vid_col = np.empty((0, VICTIM_ID_LEN), dtype=np.uint8)
        self._key_col = np.empty((0, KEY_LEN), dtype=np.uint8)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._n

    def entry_bytes(self, sample_id: str) -> int:
        return self.per_entry_bytes.get(sample_id, FALLBACK_ENTRY_BYTES)

    def _sample_code(self, sample_id: str) -> int:
        code = self._sample_idx.get(sample_id)
        if code is None:
            code = len(self._samples)
            self._samples.append(sample_id)
            self._sample_idx[sample_id] = code
        return code

    def _grow(self, need: int) -> None:
        if self._n + need <= self._cap:
            return
        new_cap = max(self._cap * 2, self._n + need, self._CHUNK)
        self._sample_col = np.resize(self._sample_col, new_cap)
        self._ts_col = np.resize(self._ts_col, new_cap)
        if self.keep_payloads:
            self._vid_col = np.resize(self._vid_col, (new_cap, VICTIM_ID_LEN))
            self._key_col = np.resize(self._key_col, (new_cap, KEY_LEN))
        self._cap = new_cap

    # -- appends -----------------------------------------------------------

    def register(self, reg: Registration) -> Ack:
        reg.validate()
        with self._lock:
            self._grow(1)
            i = self._n
            self._sample_col[i] = self._sample_code(reg.sample_id)
            self._ts_col[i] = reg.sim_timestamp
            if self.keep_payloads:
                self._vid_col[i] = np.frombuffer(reg.victim_id, dtype=np.uint8)
                self._key_col[i] = np.frombuffer(reg.key, dtype=np.uint8)
            self._n += 1
            self.total_bytes += self.entry_bytes(reg.sample_id)
            return Ack(ordinal=i)

    def register_batch(
        self,
        sample_id: str,
        timestamps: np.ndarray,
        victim_ids: Optional[np.ndarray] = None,
        keys: Optional[np.ndarray] = None,
    ) -> int:
        """Append many registrations of one sample at once. Payload arrays are
        (n, 16) / (n, 32) uint8; required when keep_payloads is on."""
        n = len(timestamps)
        if n == 0:
            return self._n
        if self.keep_payloads:
            if victim_ids is None or keys is None:
                raise AttackerError("malformed", "payload arrays required when keep_payloads is on")
            if victim_ids.shape != (n, VICTIM_ID_LEN) or keys.shape != (n, KEY_LEN):
                raise AttackerError("malformed", "payload array shapes do not match")
        with self._lock:
            self._grow(n)
            i = self._n
            code = self._sample_code(sample_id)
            self._sample_col[i : i + n] = code
            self._ts_col[i : i + n] = timestamps
            if self.keep_payloads:
                self._vid_col[i : i + n] = victim_ids
                self._key_col[i : i + n] = keys
            self._n += n
            self.total_bytes += n * self.entry_bytes(sample_id)
            return self._n

    # -- reads ---------------------------------------------------------------

    def entry(self, i: int) -> Registration:
        if not (0 <= i < self._n):
            raise IndexError(i)
        return Registration(
            victim_id=self._vid_col[i].tobytes() if self.keep_payloads else b"\x00" * VICTIM_ID_LEN,
            key=self._key_col[i].tobytes() if self.keep_payloads else b"\x00" * KEY_LEN,
            sample_id=self._samples[self._sample_col[i]],
            sim_timestamp=float(self._ts_col[i]),
        )

    def iter_entries(self) -> Iterator[Registration]:
        for i in range(self._n):
            yield self.entry(i)

    def samples(self) -> list[str]:
        return list(self._samples)


def register_victim(db: AttackerDb, reg: Registration) -> Ack:
    return db.register(reg)


def depletion_report(db: AttackerDb, buckets=DEFAULT_BUCKETS) -> dict:
    """Cumulative entries and MB (bytes / 2**20) per sample at each bucket
    boundary, mirroring the per-family depletion table shape."""
    report = {"buckets_seconds": list(buckets), "samples": {}, "totals": {}}
    ts = db._ts_col[: len(db)]
    codes = db._sample_col[: len(db)]
    total_entries = [0] * len(buckets)
    total_mb = [0.0] * len(buckets)
    for code, sample in enumerate(db._samples):
        mask = codes == code
        sample_ts = np.sort(ts[mask])
        counts = [int(np.searchsorted(sample_ts, b, side="right")) for b in buckets]
        per = db.entry_bytes(sample)
        mbs = [c * per / 2**20 for c in counts]
        report["samples"][sample] = {
            "entries": counts,
            "mb": [round(m, 3) for m in mbs],
            "entry_bytes": per,
        }
        total_entries = [a + b for a, b in zip(total_entries, counts)]
        total_mb = [a + b for a, b in zip(total_mb, mbs)]
    report["totals"] = {"entries": total_entries, "mb": [round(m, 3) for m in total_mb]}
    return report


# ---------------------------------------------------------------------------
# persistence: append-only text log
# ---------------------------------------------------------------------------

def snapshot_db(db: AttackerDb, path) -> None:
    """One line per entry: ``sample_id,victim_id_hex,key_hex,t_seconds``."""
    with open(path, "w", encoding="utf-8") as f:
        chunk: list[str] = []
        for i in range(len(db)):
            reg = db.entry(i)
            chunk.append(f"{reg.sample_id},{reg.victim_id.hex()},{reg.key.hex()},{reg.sim_timestamp!r}")
            if len(chunk) >= 65536:
                f.write("\n".join(chunk) + "\n")
                chunk.clear()
        if chunk:
            f.write("\n".join(chunk) + "\n")


def load_db(path, per_entry_bytes: dict | None = None) -> AttackerDb:
    db = AttackerDb(per_entry_bytes=per_entry_bytes)
    sample_rows: dict[str, list] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise AttackerError("corrupt", f"expected 4 fields, got {len(parts)}", line=lineno)
            sample, vid_hex, key_hex, ts = parts
            try:
                vid = bytes.fromhex(vid_hex)
                key = bytes.fromhex(key_hex)
                t = float(ts)
            except ValueError as e:
                raise AttackerError("corrupt", str(e), line=lineno) from e
            if len(vid) != VICTIM_ID_LEN or len(key) != KEY_LEN:
                raise AttackerError("corrupt", "bad id/key length", line=lineno)
            sample_rows.setdefault(sample, [[], [], []])
            rows = sample_rows[sample]
            rows[0].append(vid)
            rows[1].append(key)
            rows[2].append(t)
    # batch per sample keeps load fast; arrival order inside a sample is kept
    for sample, (vids, keys, times) in sample_rows.items():
        db.register_batch(
            sample,
            timestamps=np.asarray(times, dtype=np.float64),
            victim_ids=np.frombuffer(b"".join(vids), dtype=np.uint8).reshape(-1, VICTIM_ID_LEN),
            keys=np.frombuffer(b"".join(keys), dtype=np.uint8).reshape(-1, KEY_LEN),
        )
    return db


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

def encode_registration(reg: Registration) -> bytes:
    """Length-prefixed wire frame: u32 total, u8 sample len, sample utf-8,
    victim id, key, f64 timestamp (big-endian)."""
    sample = reg.sample_id.encode("utf-8")
    body = struct.pack(">B", len(sample)) + sample + reg.victim_id + reg.key
    body += struct.pack(">d", reg.sim_timestamp)
    return struct.pack(">I", len(body)) + body


def decode_registration(frame: bytes) -> Registration:
    slen = frame[0]
    off = 1
    sample = frame[off : off + slen].decode("utf-8")
    off += slen
    vid = frame[off : off + VICTIM_ID_LEN]
    off += VICTIM_ID_LEN
    key = frame[off : off + KEY_LEN]
    off += KEY_LEN
    (ts,) = struct.unpack(">d", frame[off : off + 8])
    reg = Registration(victim_id=vid, key=key, sample_id=sample, sim_timestamp=ts)
    reg.validate()
    return reg


class InProcessChannel:
    """Direct producer-to-db channel; appends are serialized by the db lock."""

    def __init__(self, db: AttackerDb):
        self.db = db

    def send(self, reg: Registration) -> Ack:
        return self.db.register(reg)


class LoopbackServer:
    """TCP loopback consumer for integration tests: reads length-prefixed
    Registration frames and applies them in arrival order."""

    def __init__(self, db: AttackerDb, host: str = "127.0.0.1", port: int = 0):
        self.db = db
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(8)
        self.address = self._sock.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)

    def start(self) -> "LoopbackServer":
        self._thread.start()
        return self

    def _serve(self) -> None:
        self._sock.settimeout(0.2)
        conns: list[socket.socket] = []
        buffers: dict[socket.socket, bytearray] = {}
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
                conn.settimeout(0.05)
                conns.append(conn)
                buffers[conn] = bytearray()
            except socket.timeout:
                pass
            for conn in list(conns):
                try:
                    data = conn.recv(65536)
                    if not data:
                        conns.remove(conn)
                        conn.close()
                        continue
                    buf = buffers[conn]
                    buf.extend(data)
                    while len(buf) >= 4:
                        (need,) = struct.unpack(">I", buf[:4])
                        if len(buf) < 4 + need:
                            break
                        frame = bytes(buf[4 : 4 + need])
                        del buf[: 4 + need]
                        self.db.register(decode_registration(frame))
                except socket.timeout:
                    continue
                except OSError:
                    if conn in conns:
                        conns.remove(conn)
        for conn in conns:
            conn.close()
        self._sock.close()

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5)


class LoopbackClient:
    def __init__(self, address):
        self._sock = socket.create_connection(address)

    def send(self, reg: Registration) -> None:
        self._sock.sendall(encode_registration(reg))

    def close(self) -> None:
        self._sock.close()
