import random
import threading
import time

import numpy as np
import pytest

from rwdecept.attacker import (
    AttackerDb,
    AttackerError,
    InProcessChannel,
    LoopbackClient,
    LoopbackServer,
    Registration,
    decode_registration,
    depletion_report,
    encode_registration,
    load_db,
    register_victim,
    snapshot_db,
)


def reg(sample="r1", t=0.0, rng=None):
    rng = rng or random.Random(1)
    return Registration(victim_id=rng.randbytes(16), key=rng.randbytes(32), sample_id=sample, sim_timestamp=t)


# ---------------------------------------------------------------------------
# registration and accounting
# ---------------------------------------------------------------------------

def test_first_registration_counts_derived_bytes():
    db = AttackerDb()
    ack = register_victim(db, reg("r1"))
    assert ack.ordinal == 0
    assert db.total_bytes == 160


def test_duplicate_victim_ids_still_appended():
    db = AttackerDb()
    r = reg("r1")
    register_victim(db, r)
    register_victim(db, r)
    assert len(db) == 2
    assert db.entry(0).victim_id == db.entry(1).victim_id


def test_empty_db_totals_zero():
    db = AttackerDb()
    assert len(db) == 0
    assert db.total_bytes == 0


def test_malformed_sizes_rejected_and_not_counted():
    db = AttackerDb()
    with pytest.raises(AttackerError):
        register_victim(db, Registration(victim_id=b"short", key=b"\x00" * 32, sample_id="r1", sim_timestamp=0))
    with pytest.raises(AttackerError):
        register_victim(db, Registration(victim_id=b"\x00" * 16, key=b"\x00" * 8, sample_id="r1", sim_timestamp=0))
    assert len(db) == 0
    assert db.total_bytes == 0


def test_per_sample_byte_accounting():
    db = AttackerDb()
    rng = random.Random(3)
    for sample, expected in (("r1", 160), ("r2", 131), ("r3", 135), ("r4", 131)):
        before = db.total_bytes
        register_victim(db, reg(sample, rng=rng))
        assert db.total_bytes - before == expected


def test_unknown_sample_uses_fallback_size():
    db = AttackerDb()
    register_victim(db, reg("mystery"))
    assert db.total_bytes == 160


# ---------------------------------------------------------------------------
# depletion report
# ---------------------------------------------------------------------------

def test_depletion_report_cumulative_counts_and_exact_mb():
    db = AttackerDb()
    rng = random.Random(4)
    times = [60.0, 1800.0, 7200.0, 40000.0, 80000.0]
    for t in times:
        register_victim(db, reg("r1", t=t, rng=rng))
    rep = depletion_report(db)
    row = rep["samples"]["r1"]
    assert row["entries"] == [2, 4, 5]
    for count, mb in zip(row["entries"], row["mb"]):
        assert mb == round(count * 160 / 2**20, 3)


def test_depletion_report_empty_db():
    rep = depletion_report(AttackerDb())
    assert rep["samples"] == {}
    assert rep["totals"]["entries"] == [0, 0, 0]


def test_linearity_ratio_brackets():
    from rwdecept.resetloop import depletion_bench

    for sample in ("r1", "r2", "r3", "r4"):
        rep = depletion_bench(sample, agents=50, seed=5)
        c1, c12, c24 = rep["samples"][sample]["entries"]
        assert 10.6 <= c12 / c1 <= 13.0
        assert 21.4 <= c24 / c1 <= 26.2


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_snapshot_load_roundtrip(tmp_path):
    db = AttackerDb()
    rng = random.Random(6)
    for i in range(10):
        register_victim(db, reg(("r1", "r2")[i % 2], t=float(i), rng=rng))
    path = tmp_path / "db.log"
    snapshot_db(db, path)
    loaded = load_db(path)
    assert len(loaded) == len(db)
    assert loaded.total_bytes == db.total_bytes
    original = sorted((r.sample_id, r.victim_id, r.key, r.sim_timestamp) for r in db.iter_entries())
    restored = sorted((r.sample_id, r.victim_id, r.key, r.sim_timestamp) for r in loaded.iter_entries())
    assert original == restored


def test_truncated_line_reports_line_number(tmp_path):
    db = AttackerDb()
    rng = random.Random(7)
    for i in range(3):
        register_victim(db, reg("r1", t=float(i), rng=rng))
    path = tmp_path / "db.log"
    snapshot_db(db, path)
    text = path.read_text()
    path.write_text(text[: len(text) - 40])  # cut into the final record
    with pytest.raises(AttackerError) as exc:
        load_db(path)
    assert exc.value.code == "corrupt"
    assert exc.value.line == 3


def test_large_db_persists_and_reloads_quickly(tmp_path):
    n = 1_000_000
    db = AttackerDb()
    rng = np.random.default_rng(8)
    db.register_batch(
        "r3",
        timestamps=np.arange(n, dtype=np.float64),
        victim_ids=rng.integers(0, 256, (n, 16), dtype=np.uint8),
        keys=rng.integers(0, 256, (n, 32), dtype=np.uint8),
    )
    path = tmp_path / "big.log"
    t0 = time.perf_counter()
    snapshot_db(db, path)
    loaded = load_db(path)
    elapsed = time.perf_counter() - t0
    assert len(loaded) == n
    assert loaded.total_bytes == db.total_bytes
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

def test_wire_format_roundtrip():
    r = reg("r4", t=123.5)
    frame = encode_registration(r)
    assert decode_registration(frame[4:]) == r


def test_concurrent_agents_lose_no_appends():
    db = AttackerDb()
    channel = InProcessChannel(db)
    per_agent = 500
    agents = 8

    def agent(aid):
        rng = random.Random(100 + aid)
        for i in range(per_agent):
            channel.send(reg("r1", t=float(i), rng=rng))

    threads = [threading.Thread(target=agent, args=(a,)) for a in range(agents)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(db) == agents * per_agent
    assert db.total_bytes == agents * per_agent * 160


def test_loopback_socket_mode():
    db = AttackerDb()
    server = LoopbackServer(db).start()
    try:
        client = LoopbackClient(server.address)
        rng = random.Random(9)
        sent = [reg("r2", t=float(i), rng=rng) for i in range(50)]
        for r in sent:
            client.send(r)
        client.close()
        deadline = time.time() + 10
        while len(db) < len(sent) and time.time() < deadline:
            time.sleep(0.02)
        assert len(db) == len(sent)
        got = {(r.victim_id, r.key) for r in db.iter_entries()}
        assert got == {(r.victim_id, r.key) for r in sent}
    finally:
        server.stop()
