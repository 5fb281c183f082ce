import pytest

from rwdecept.simcore import (
    Allow,
    ApiEvent,
    Assign,
    Block,
    CallApi,
    FakeSuccess,
    Halt,
    Jmp,
    SimError,
    SimProgram,
    Terminate,
    World,
    normalize_path,
    vfs_diff,
    vfs_snapshot,
)


def prog(instructions, entry=0):
    return SimProgram(instructions=instructions, entry_point=entry)


def write_prog(path, data_hex, disposition="CREATE_NEW"):
    return prog(
        {
            0: CallApi("CreateFile", {"path": ["str", path], "disposition": ["str", disposition]}, out="h"),
            1: CallApi("WriteFile", {"handle": ["var", "h"], "buffer": ["bytes", data_hex]}, out="n"),
            2: CallApi("CloseHandle", {"handle": ["var", "h"]}),
            3: Halt(),
        }
    )


class CollectingInterposer:
    def __init__(self, responses=None):
        self.seen = []
        self.responses = responses or {}

    def on_event(self, ev, world):
        self.seen.append(ev)
        return self.responses.get(ev.api, Allow())


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------

def test_paths_normalize_case_and_separators():
    assert normalize_path("\\User\\Desktop\\A.TXT") == "/user/desktop/a.txt"
    assert normalize_path("/user//documents/") == "/user/documents"


# ---------------------------------------------------------------------------
# launch
# ---------------------------------------------------------------------------

def test_launch_empty_program_runs_to_termination():
    w = World(seed=1)
    run = w.launch(prog({0: Halt()}), suspended=False)
    assert run.mode == "terminated"
    assert run.trace == []


def test_launch_suspended_executes_nothing():
    w = World(seed=1)
    run = w.launch(write_prog("/a.txt", "00"), suspended=True)
    assert run.mode == "suspended"
    assert run.trace == []
    assert not w.fs.exists("/a.txt")


def test_launch_rejects_jmp_to_missing_address():
    w = World(seed=1)
    with pytest.raises(SimError) as exc:
        w.launch(prog({0: Jmp(99), 1: Halt()}), suspended=True)
    assert exc.value.code == "invalid-target"
    assert exc.value.addr == 0


def test_launch_snapshots_stack_registers():
    w = World(seed=1)
    p = write_prog("/a.txt", "00")
    run = w.launch(p, suspended=True)
    assert run.launch_stack == (p.stack_base, p.stack_limit)


# ---------------------------------------------------------------------------
# interposition
# ---------------------------------------------------------------------------

def test_interposer_sees_every_call():
    w = World(seed=1)
    run = w.launch(write_prog("/a.txt", "aabb"), suspended=True)
    ip = CollectingInterposer()
    w.attach_interposer(run, ip)
    w.resume(run)
    w.run_to_halt(run)
    assert [e.api for e in ip.seen] == ["CreateFile", "WriteFile", "CloseHandle"]
    n_calls = sum(1 for i in run.program.instructions.values() if isinstance(i, CallApi))
    assert len(ip.seen) == n_calls


def test_attach_to_running_process_is_late():
    w = World(seed=1)
    run = w.launch(prog({0: Halt()}), suspended=True)
    w.resume(run)
    with pytest.raises(SimError) as exc:
        w.attach_interposer(run, CollectingInterposer())
    assert exc.value.code == "late-attach"


def test_fake_success_leaves_vfs_untouched_but_program_sees_value():
    w = World(seed=1)
    w.fs.seed_file("/a.txt", b"data")
    p = prog(
        {
            0: CallApi("DeleteFile", {"path": ["str", "/a.txt"]}, out="ok"),
            1: Halt(),
        }
    )
    run = w.launch(p, suspended=True)
    w.attach_interposer(run, CollectingInterposer({"DeleteFile": FakeSuccess(True)}))
    w.resume(run)
    w.run_to_halt(run)
    assert w.fs.exists("/a.txt")
    assert run.env["ok"] is True
    assert run.trace[0].disposition == "FakeSuccess"


def test_block_suppresses_effect_and_returns_value():
    w = World(seed=1)
    w.fs.seed_file("/a.txt", b"keep")
    p = prog(
        {
            0: CallApi("CreateFile", {"path": ["str", "/a.txt"], "disposition": ["str", "OPEN_EXISTING"]}, out="h"),
            1: CallApi("WriteFile", {"handle": ["var", "h"], "buffer": ["bytes", "ff" * 4]}, out="n"),
            2: Halt(),
        }
    )
    run = w.launch(p, suspended=True)
    w.attach_interposer(run, CollectingInterposer({"WriteFile": Block(4)}))
    w.resume(run)
    w.run_to_halt(run)
    assert w.fs.files["/a.txt"].content == b"keep"
    assert run.env["n"] == 4


def test_terminate_halts_within_the_event():
    w = World(seed=1)
    run = w.launch(write_prog("/a.txt", "00"), suspended=True)
    w.attach_interposer(run, CollectingInterposer({"CreateFile": Terminate()}))
    w.resume(run)
    w.run_to_halt(run)
    assert run.mode == "terminated"
    assert run.termination == "terminated-by-interposer"
    assert not w.fs.exists("/a.txt")


# ---------------------------------------------------------------------------
# step semantics
# ---------------------------------------------------------------------------

def test_step_on_halt_reports_halted():
    w = World(seed=1)
    run = w.launch(prog({0: Halt()}), suspended=True)
    w.resume(run)
    assert w.step(run) == "Halted"


def test_write_applies_at_pointer():
    w = World(seed=1)
    w.fs.seed_file("/f.bin", b"AAAABBBB")
    p = prog(
        {
            0: CallApi("CreateFile", {"path": ["str", "/f.bin"], "disposition": ["str", "OPEN_EXISTING"]}, out="h"),
            1: CallApi("SetFilePointer", {"handle": ["var", "h"], "offset": ["int", 4]}),
            2: CallApi("WriteFile", {"handle": ["var", "h"], "buffer": ["bytes", "43434343"]}, out="n"),
            3: Halt(),
        }
    )
    run = w.launch(p, suspended=True)
    w.resume(run)
    w.run_to_halt(run)
    assert w.fs.files["/f.bin"].content == b"AAAACCCC"


def test_segfault_on_missing_address():
    w = World(seed=1)
    p = prog({0: Assign("x", ["int", 1]), 5: Halt()})
    run = w.launch(p, suspended=True)
    w.resume(run)
    w.step(run)
    with pytest.raises(SimError) as exc:
        w.step(run)
    assert exc.value.code == "segfault-model"
    assert run.mode == "terminated"


def test_same_program_same_seed_identical_traces():
    def one():
        w = World(seed=77)
        w.fs.seed_file("/user/documents/x.txt", b"q" * 100)
        p = prog(
            {
                0: CallApi("RandBytes", {"n": ["int", 16]}, out="r"),
                1: CallApi("GetSystemTime", {}, out="t"),
                2: CallApi("CreateFile", {"path": ["str", "/user/documents/x.txt"], "disposition": ["str", "OPEN_EXISTING"]}, out="h"),
                3: CallApi("ReadFile", {"handle": ["var", "h"]}, out="c"),
                4: CallApi("CryptEncrypt", {"key": ["var", "r"], "buffer": ["var", "c"]}, out="e"),
                5: Halt(),
            }
        )
        run = w.launch(p, suspended=False)
        return [(e.api, repr(e.return_slot)) for e in run.trace], w.fs.content_hash()

    assert one() == one()


def test_moves_follow_open_handles():
    w = World(seed=1)
    w.fs.seed_file("/a.txt", b"abc")
    p = prog(
        {
            0: CallApi("CreateFile", {"path": ["str", "/a.txt"], "disposition": ["str", "OPEN_EXISTING"]}, out="h"),
            1: CallApi("MoveFile", {"src": ["str", "/a.txt"], "dst": ["str", "/b.txt"]}, out="mv"),
            2: CallApi("WriteFile", {"handle": ["var", "h"], "buffer": ["bytes", "5858"]}, out="n"),
            3: Halt(),
        }
    )
    run = w.launch(p, suspended=False)
    assert run.env["mv"] is True
    assert w.fs.files["/b.txt"].content == b"XXc"


def test_move_of_missing_file_is_program_visible_failure():
    w = World(seed=1)
    p = prog({0: CallApi("MoveFile", {"src": ["str", "/no.txt"], "dst": ["str", "/x.txt"]}, out="mv"), 1: Halt()})
    run = w.launch(p, suspended=False)
    assert run.env["mv"] is False
    assert run.mode == "terminated"


def test_find_enumeration_snapshot_is_stable():
    w = World(seed=1)
    w.fs.seed_file("/d/a.txt", b"1")
    w.fs.seed_file("/d/b.txt", b"2")
    p = prog(
        {
            0: CallApi("FindFirstFile", {"dir": ["str", "/d"]}, out="p0"),
            1: CallApi("CreateFile", {"path": ["str", "/d/aa.new"], "disposition": ["str", "CREATE_NEW"]}, out="h"),
            2: CallApi("FindNextFile", {"dir": ["str", "/d"]}, out="p1"),
            3: CallApi("FindNextFile", {"dir": ["str", "/d"]}, out="p2"),
            4: Halt(),
        }
    )
    run = w.launch(p, suspended=False)
    assert run.env["p0"] == "/d/a.txt"
    assert run.env["p1"] == "/d/b.txt"
    assert run.env["p2"] == ""  # the file created mid-enumeration is not seen


# ---------------------------------------------------------------------------
# snapshot / diff
# ---------------------------------------------------------------------------

def test_diff_of_identical_snapshots_is_empty():
    w = World(seed=1)
    w.fs.seed_file("/a", b"1")
    snap = vfs_snapshot(w.fs)
    assert vfs_diff(snap, snap).is_empty()


def test_diff_reports_created():
    w = World(seed=1)
    before = vfs_snapshot(w.fs)
    w.fs.seed_file("/new.txt", b"x")
    rep = vfs_diff(before, vfs_snapshot(w.fs))
    assert list(rep.created) == ["/new.txt"]
    assert not rep.deleted and not rep.modified


def test_diff_apply_roundtrip():
    import random

    rng = random.Random(5)
    w = World(seed=1)
    for i in range(6):
        w.fs.seed_file(f"/f{i}", rng.randbytes(rng.randint(1, 64)))
    a = vfs_snapshot(w.fs)
    del w.fs.files["/f0"]
    w.fs.files["/f1"].content = b"changed"
    w.fs.seed_file("/g", b"made")
    b = vfs_snapshot(w.fs)
    assert vfs_diff(a, b).apply(a) == b


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_program_json_roundtrip_bit_exact():
    p = write_prog("/user/docs/a.txt", "deadbeef")
    text = p.to_json()
    q = SimProgram.from_json(text)
    assert q.to_json() == text
    assert q.instructions == p.instructions


def test_patched_jmp_with_stack_restore_roundtrips():
    p = prog({0: Assign("x", ["int", 0]), 1: Jmp(0, restore_stack=(100, 50))})
    q = SimProgram.from_json(p.to_json())
    assert q.instructions[1] == Jmp(0, restore_stack=(100, 50))
