"""Simulated OS substrate: virtual filesystem, processes, and an instruction
interpreter whose API calls are routed through registered interposers before
their effect is applied.

The API surface is a fixed 20-name enumeration covering file, crypto,
enumeration, fingerprint, network and UI calls; it is extensible through
``API_EFFECTS``. Everything is deterministic given (program, seed): per-process
RNG streams are derived from the world seed, and the virtual clock advances
one tick per interpreted instruction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional

from ._kernels import xor_bytes

API_NAMES = (
    "CreateFile",
    "WriteFile",
    "ReadFile",
    "SetFilePointer",
    "DeleteFile",
    "MoveFile",
    "MoveFileWithProgress",
    "CloseHandle",
    "CryptEncrypt",
    "AES_encrypt",
    "AESxEncryption",
    "FindFirstFile",
    "FindNextFile",
    "GetMacAddress",
    "GetSystemTime",
    "RandBytes",
    "Socket",
    "Connect",
    "Send",
    "SetWallpaper",
)

ENCRYPT_CLASS = frozenset({"CryptEncrypt", "AES_encrypt", "AESxEncryption"})

CREATE_ALWAYS = "CREATE_ALWAYS"
CREATE_NEW = "CREATE_NEW"
OPEN_EXISTING = "OPEN_EXISTING"

DEFAULT_SENSITIVE_DIRS = ("/user/desktop", "/user/documents", "/user/downloads")


class SimError(Exception):
    """Simulator-level contract violation. ``code`` is a stable identifier."""

    def __init__(self, code: str, message: str, addr: int | None = None):
        super().__init__(f"{code}: {message}" + (f" @{addr}" if addr is not None else ""))
        self.code = code
        self.addr = addr


@lru_cache(maxsize=65536)
def normalize_path(p: str) -> str:
    """Case-insensitive, `/`-separated canonical path with a leading slash."""
    p = p.replace("\\", "/").lower()
    parts = [seg for seg in p.split("/") if seg]
    return "/" + "/".join(parts)


def derive_seed(*parts) -> int:
    """Stable integer seed derived from arbitrary labeled parts."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

class Handle:
    """Opaque kernel-object handle. Identity is the integer id."""

    __slots__ = ("id", "kind")

    def __init__(self, hid: int, kind: str = "file"):
        self.id = hid
        self.kind = kind

    def __repr__(self):
        return f"Handle({self.id}, {self.kind})"

    def __eq__(self, other):
        return isinstance(other, Handle) and other.id == self.id

    def __hash__(self):
        return hash(("handle", self.id))


class TaggedBuf:
    """Byte buffer carrying a provenance tag; dataflow edges key on the tag,
    not on content equality."""

    __slots__ = ("data", "tag")

    def __init__(self, data: bytes, tag: int):
        self.data = bytes(data)
        self.tag = tag

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"TaggedBuf(<{len(self.data)}B>, tag={self.tag})"


def as_bytes(v) -> bytes:
    if isinstance(v, TaggedBuf):
        return v.data
    if isinstance(v, (bytes, bytearray)):
        return bytes(v)
    if isinstance(v, str):
        return v.encode("utf-8")
    raise SimError("bad-value", f"cannot coerce {type(v).__name__} to bytes")


# ---------------------------------------------------------------------------
# virtual filesystem
# ---------------------------------------------------------------------------

@dataclass
class FileRecord:
    path: str
    content: bytes = b""
    created_by: Optional[int] = None  # None for files present before any run
    flags: set = field(default_factory=set)


@dataclass
class OpenHandle:
    hid: int
    path: str
    pointer: int = 0
    disposition: str = OPEN_EXISTING
    closed: bool = False


class VirtualFs:
    """Path-keyed store of FileRecords plus the open-handle table."""

    def __init__(self, sensitive_dirs: Iterable[str] = DEFAULT_SENSITIVE_DIRS):
        self.files: dict[str, FileRecord] = {}
        self.sensitive_dirs = {normalize_path(d) for d in sensitive_dirs}
        self.handles: dict[int, OpenHandle] = {}
        self._next_hid = 4  # small offset so handles look handle-ish

    # -- basic operations ---------------------------------------------------

    def seed_file(self, path: str, content: bytes) -> FileRecord:
        """Install a pre-existing file (no creator process)."""
        path = normalize_path(path)
        rec = FileRecord(path=path, content=bytes(content), created_by=None)
        self.files[path] = rec
        return rec

    def exists(self, path: str) -> bool:
        return normalize_path(path) in self.files

    def is_sensitive(self, path: str) -> bool:
        path = normalize_path(path)
        return any(path.startswith(d + "/") or path == d for d in self.sensitive_dirs)

    def alloc_handle(self, path: str, disposition: str) -> OpenHandle:
        h = OpenHandle(hid=self._next_hid, path=normalize_path(path), disposition=disposition)
        self._next_hid += 4
        self.handles[h.hid] = h
        return h

    def handle(self, hid: int) -> Optional[OpenHandle]:
        h = self.handles.get(hid)
        if h is None or h.closed:
            return None
        return h

    def record_for_handle(self, h: OpenHandle) -> Optional[FileRecord]:
        return self.files.get(h.path)

    def listdir(self, prefix: str) -> list[str]:
        prefix = normalize_path(prefix)
        base = prefix if prefix.endswith("/") else prefix + "/"
        return sorted(p for p in self.files if p.startswith(base))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for path in sorted(self.files):
            h.update(path.encode())
            h.update(b"\x00")
            h.update(self.files[path].content)
            h.update(b"\x00")
        return h.hexdigest()

    # -- snapshot / diff ----------------------------------------------------

    def snapshot(self) -> dict[str, bytes]:
        return {p: rec.content for p, rec in self.files.items()}


@dataclass
class DiffReport:
    created: dict[str, bytes] = field(default_factory=dict)
    deleted: list[str] = field(default_factory=list)
    modified: dict[str, bytes] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.created and not self.deleted and not self.modified

    def apply(self, snap: dict[str, bytes]) -> dict[str, bytes]:
        out = dict(snap)
        for p in self.deleted:
            out.pop(p, None)
        out.update(self.modified)
        out.update(self.created)
        return out


def vfs_snapshot(fs: VirtualFs) -> dict[str, bytes]:
    return fs.snapshot()


def vfs_diff(a: dict[str, bytes], b: dict[str, bytes]) -> DiffReport:
    """Byte-exact diff such that ``vfs_diff(a, b).apply(a) == b``."""
    rep = DiffReport()
    for p, content in b.items():
        if p not in a:
            rep.created[p] = content
        elif a[p] != content:
            rep.modified[p] = content
    rep.deleted = sorted(p for p in a if p not in b)
    return rep


# ---------------------------------------------------------------------------
# programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CallApi:
    api: str
    args: dict  # arg name -> expression
    out: Optional[str] = None  # variable receiving the return value


@dataclass(frozen=True)
class Jmp:
    target: int
    restore_stack: Optional[tuple[int, int]] = None  # (base, limit) set before the jump lands


@dataclass(frozen=True)
class Assign:
    var: str
    expr: object


@dataclass(frozen=True)
class Halt:
    pass


@dataclass
class SimProgram:
    instructions: dict[int, object]
    entry_point: int
    code_image: bytes = b""
    stack_base: int = 0x0019_0000
    stack_limit: int = 0x0018_0000

    def validate(self) -> None:
        if getattr(self, "_validated", False):
            return
        if self.entry_point not in self.instructions:
            raise SimError("invalid-target", "entry point missing", addr=self.entry_point)
        for addr in sorted(self.instructions):
            ins = self.instructions[addr]
            if isinstance(ins, Jmp) and ins.target not in self.instructions:
                raise SimError("invalid-target", f"jmp to missing address {ins.target}", addr=addr)
            if isinstance(ins, CallApi) and ins.api not in API_NAMES:
                raise SimError("invalid-target", f"unknown api {ins.api!r}", addr=addr)
            if not isinstance(ins, (CallApi, Jmp, Assign, Halt)):
                raise SimError("invalid-target", "unknown instruction kind", addr=addr)
        self._validated = True

    def digest(self) -> str:
        """Content digest of the serialized program (whitelist identity)."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    # -- JSON wire format ---------------------------------------------------

    def to_json(self) -> str:
        entries = []
        for addr in sorted(self.instructions):
            ins = self.instructions[addr]
            if isinstance(ins, CallApi):
                rec = {"addr": addr, "op": "call", "args": {"api": ins.api, "in": ins.args, "out": ins.out}}
            elif isinstance(ins, Jmp):
                args = {"to": ins.target}
                if ins.restore_stack is not None:
                    args["restore"] = list(ins.restore_stack)
                rec = {"addr": addr, "op": "jmp", "args": args}
            elif isinstance(ins, Assign):
                rec = {"addr": addr, "op": "assign", "args": {"var": ins.var, "expr": ins.expr}}
            else:
                rec = {"addr": addr, "op": "halt", "args": {}}
            entries.append(rec)
        doc = {
            "entry": self.entry_point,
            "instructions": entries,
            "code_image": self.code_image.hex(),
            "stack": {"base": self.stack_base, "limit": self.stack_limit},
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "SimProgram":
        doc = json.loads(text)
        instructions: dict[int, object] = {}
        for rec in doc["instructions"]:
            addr, op, args = rec["addr"], rec["op"], rec["args"]
            if op == "call":
                instructions[addr] = CallApi(api=args["api"], args=args["in"], out=args.get("out"))
            elif op == "jmp":
                restore = args.get("restore")
                instructions[addr] = Jmp(args["to"], tuple(restore) if restore else None)
            elif op == "assign":
                instructions[addr] = Assign(args["var"], args["expr"])
            elif op == "halt":
                instructions[addr] = Halt()
            else:
                raise SimError("invalid-target", f"unknown opcode {op!r}", addr=addr)
        prog = cls(
            instructions=instructions,
            entry_point=doc["entry"],
            code_image=bytes.fromhex(doc["code_image"]),
            stack_base=doc["stack"]["base"],
            stack_limit=doc["stack"]["limit"],
        )
        prog.validate()
        return prog


# ---------------------------------------------------------------------------
# events and dispositions
# ---------------------------------------------------------------------------

@dataclass
class ApiEvent:
    pid: int
    seq: int
    api: str
    args: dict  # evaluated argument values
    caller_addr: int
    return_addr: int
    return_slot: object = None
    disposition: str = "Allow"


class Disposition:
    """Interposer verdict for one ApiEvent."""

    ALLOW = "Allow"
    FAKE = "FakeSuccess"
    BLOCK = "Block"
    TERMINATE = "Terminate"

    __slots__ = ("kind", "value")

    def __init__(self, kind: str, value=None):
        self.kind = kind
        self.value = value

    def __repr__(self):
        return f"Disposition({self.kind}, {self.value!r})"


_ALLOW = Disposition(Disposition.ALLOW)
_TERMINATE = Disposition(Disposition.TERMINATE)


def Allow() -> Disposition:
    return _ALLOW


def FakeSuccess(value) -> Disposition:
    return Disposition(Disposition.FAKE, value)


def Block(value) -> Disposition:
    return Disposition(Disposition.BLOCK, value)


def Terminate() -> Disposition:
    return _TERMINATE


# ---------------------------------------------------------------------------
# process runs
# ---------------------------------------------------------------------------

SUSPENDED = "suspended"
RUNNING = "running"
TERMINATED = "terminated"

PROGRESSED = "Progressed"
HALTED = "Halted"


@dataclass
class ProcessRun:
    pid: int
    program: SimProgram
    mode: str = SUSPENDED
    pc: int = 0
    env: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    record_trace: bool = True
    visible_log: list = field(default_factory=list)  # program-observable return values
    stack_base: int = 0
    stack_limit: int = 0
    launch_stack: tuple[int, int] = (0, 0)
    seq: int = 0
    steps: int = 0
    interposers: list = field(default_factory=list)
    event_hooks: list = field(default_factory=list)  # bound on-event callables
    after_hooks: list = field(default_factory=list)  # bound after-event callables
    termination: str = "running"  # halt | terminated-by-interposer | fault


def _visible(value):
    """What the program can observe of a return value: scalars verbatim,
    buffers by shape only (content indistinguishable to the caller's checks
    beyond length)."""
    if isinstance(value, TaggedBuf):
        return ("buf", len(value.data))
    if isinstance(value, Handle):
        return ("handle",)
    return value


# ---------------------------------------------------------------------------
# API effects
# ---------------------------------------------------------------------------

def _keystream(key: bytes, n: int) -> bytes:
    out = bytearray()
    counter = 0
    seed = hashlib.blake2b(key, digest_size=32).digest()
    while len(out) < n:
        out += hashlib.blake2b(seed + counter.to_bytes(8, "big"), digest_size=64).digest()
        counter += 1
    return bytes(out[:n])


def stream_encrypt(key: bytes, plaintext: bytes) -> bytes:
    """Keyed stream permutation; ciphertext is high-entropy for any input."""
    return xor_bytes(plaintext, _keystream(key, len(plaintext)))


def _fail(world, run, args):
    return False


def _api_create_file(world, run, args):
    path = normalize_path(args["path"])
    disposition = args.get("disposition", OPEN_EXISTING)
    rec = world.fs.files.get(path)
    if disposition == OPEN_EXISTING:
        if rec is None:
            return False
    elif disposition == CREATE_NEW:
        if rec is not None:
            return False
        world.fs.files[path] = FileRecord(path=path, created_by=run.pid)
    elif disposition == CREATE_ALWAYS:
        if rec is None:
            world.fs.files[path] = FileRecord(path=path, created_by=run.pid)
        else:
            rec.content = b""
    else:
        return False
    return Handle(world.fs.alloc_handle(path, disposition).hid)


def _api_write_file(world, run, args):
    h = _file_handle(world, args)
    if h is None:
        return False
    rec = world.fs.files.get(h.path)
    if rec is None:
        return False
    buf = as_bytes(args["buffer"])
    content = rec.content
    end = h.pointer + len(buf)
    rec.content = content[: h.pointer] + buf + content[end:]
    h.pointer = end
    return len(buf)


def _api_read_file(world, run, args):
    h = _file_handle(world, args)
    if h is None:
        return False
    rec = world.fs.files.get(h.path)
    if rec is None:
        return False
    size = args.get("size")
    data = rec.content[h.pointer :] if size is None else rec.content[h.pointer : h.pointer + size]
    h.pointer += len(data)
    return world.fresh_buf(data)


def _api_set_file_pointer(world, run, args):
    h = _file_handle(world, args)
    if h is None:
        return False
    rec = world.fs.files.get(h.path)
    offset = int(args.get("offset", 0))
    limit = len(rec.content) if rec else 0
    h.pointer = max(0, min(offset, limit))
    return h.pointer


def _api_delete_file(world, run, args):
    path = normalize_path(args["path"])
    if path not in world.fs.files:
        return False
    del world.fs.files[path]
    return True


def _api_move_file(world, run, args):
    src = normalize_path(args["src"])
    dst = normalize_path(args["dst"])
    rec = world.fs.files.get(src)
    if rec is None or dst in world.fs.files:
        return False
    del world.fs.files[src]
    rec.path = dst
    world.fs.files[dst] = rec
    for h in world.fs.handles.values():
        if not h.closed and h.path == src:
            h.path = dst
    return True


def _api_close_handle(world, run, args):
    hv = args.get("handle")
    if not isinstance(hv, Handle):
        return False
    h = world.fs.handles.get(hv.id)
    if h is None or h.closed:
        return False
    h.closed = True
    return True


def _api_encrypt(world, run, args):
    key = as_bytes(args["key"])
    data = as_bytes(args["buffer"])
    return world.fresh_buf(stream_encrypt(key, data))


def _api_find_first(world, run, args):
    # the listing is snapshotted here; files created mid-enumeration are not seen
    directory = normalize_path(args["dir"])
    listing = world.fs.listdir(directory)
    world.find_cursors[(run.pid, directory)] = (listing, 1)
    return listing[0] if listing else ""


def _api_find_next(world, run, args):
    directory = normalize_path(args["dir"])
    cursor = world.find_cursors.get((run.pid, directory))
    if cursor is None:
        return ""
    listing, idx = cursor
    if idx >= len(listing):
        return ""
    world.find_cursors[(run.pid, directory)] = (listing, idx + 1)
    return listing[idx]


def _api_get_mac(world, run, args):
    return world.fresh_buf(world.host_mac)


def _api_get_time(world, run, args):
    return world.fresh_buf(world.clock.to_bytes(8, "big"))


def _api_rand_bytes(world, run, args):
    n = int(args.get("n", 16))
    return world.fresh_buf(world.proc_rng(run.pid).randbytes(n))


def _api_socket(world, run, args):
    return Handle(world.fs.alloc_handle(f"/net/sock{world.fs._next_hid}", "socket").hid, kind="socket")


def _api_connect(world, run, args):
    sock = args.get("socket")
    if not isinstance(sock, Handle):
        return False
    return Handle(sock.id, kind="socket")


def _api_send(world, run, args):
    sock = args.get("socket")
    if not isinstance(sock, Handle):
        return False
    payload = as_bytes(args["buffer"])
    if world.network_sink is not None:
        world.network_sink(run.pid, world.clock, payload)
    return len(payload)


def _api_set_wallpaper(world, run, args):
    world.wallpaper = str(args.get("text", ""))
    return True


def _file_handle(world, args):
    hv = args.get("handle")
    if not isinstance(hv, Handle):
        return None
    return world.fs.handle(hv.id)


API_EFFECTS: dict[str, Callable] = {
    "CreateFile": _api_create_file,
    "WriteFile": _api_write_file,
    "ReadFile": _api_read_file,
    "SetFilePointer": _api_set_file_pointer,
    "DeleteFile": _api_delete_file,
    "MoveFile": _api_move_file,
    "MoveFileWithProgress": _api_move_file,
    "CloseHandle": _api_close_handle,
    "CryptEncrypt": _api_encrypt,
    "AES_encrypt": _api_encrypt,
    "AESxEncryption": _api_encrypt,
    "FindFirstFile": _api_find_first,
    "FindNextFile": _api_find_next,
    "GetMacAddress": _api_get_mac,
    "GetSystemTime": _api_get_time,
    "RandBytes": _api_rand_bytes,
    "Socket": _api_socket,
    "Connect": _api_connect,
    "Send": _api_send,
    "SetWallpaper": _api_set_wallpaper,
}


# ---------------------------------------------------------------------------
# expression evaluation
# ---------------------------------------------------------------------------

def eval_expr(world, run, expr):
    """Evaluate a JSON-encodable expression tree.

    Forms: ["var", name], ["str", s], ["int", n], ["bytes", hex],
    ["strcat", e...], ["concat", e...], ["digest", size, e],
    ["encrypt", key_e, data_e].
    """
    if not isinstance(expr, list) or not expr:
        raise SimError("bad-expr", f"malformed expression {expr!r}")
    op = expr[0]
    if op == "var":
        name = expr[1]
        if name not in run.env:
            raise SimError("bad-expr", f"undefined variable {name!r}")
        return run.env[name]
    if op == "str":
        return expr[1]
    if op == "int":
        return int(expr[1])
    if op == "bytes":
        return world.fresh_buf(bytes.fromhex(expr[1]))
    if op == "strcat":
        return "".join(str(eval_expr(world, run, e)) for e in expr[1:])
    if op == "concat":
        return world.fresh_buf(b"".join(as_bytes(eval_expr(world, run, e)) for e in expr[1:]))
    if op == "digest":
        size = int(expr[1])
        data = as_bytes(eval_expr(world, run, expr[2]))
        return world.fresh_buf(hashlib.blake2b(data, digest_size=size).digest())
    if op == "encrypt":
        key = as_bytes(eval_expr(world, run, expr[1]))
        data = as_bytes(eval_expr(world, run, expr[2]))
        return world.fresh_buf(stream_encrypt(key, data))
    raise SimError("bad-expr", f"unknown expression op {op!r}")


# ---------------------------------------------------------------------------
# the world
# ---------------------------------------------------------------------------

class World:
    """One simulation universe: a VFS, a clock, RNG streams, and processes."""

    def __init__(self, seed: int, sensitive_dirs: Iterable[str] = DEFAULT_SENSITIVE_DIRS):
        import random

        self.seed = seed
        self.fs = VirtualFs(sensitive_dirs)
        self.clock = 0
        self.processes: dict[int, ProcessRun] = {}
        self._next_pid = 1
        self._next_tag = 1
        self._rngs: dict[int, random.Random] = {}
        self.host_mac = hashlib.blake2b(
            f"mac:{seed}".encode(), digest_size=6
        ).digest()
        self.network_sink: Optional[Callable] = None
        self.wallpaper: str = ""
        self.find_cursors: dict[tuple[int, str], tuple[list, int]] = {}
        self.event_cost_units = 0

    def proc_rng(self, pid: int):
        import random

        rng = self._rngs.get(pid)
        if rng is None:
            rng = random.Random(derive_seed(self.seed, "proc", pid))
            self._rngs[pid] = rng
        return rng

    def fresh_buf(self, data: bytes) -> TaggedBuf:
        buf = TaggedBuf(data, self._next_tag)
        self._next_tag += 1
        return buf

    # -- process lifecycle ----------------------------------------------

    def launch(self, program: SimProgram, suspended: bool = True) -> ProcessRun:
        program.validate()
        pid = self._next_pid
        self._next_pid += 1
        run = ProcessRun(
            pid=pid,
            program=program,
            mode=SUSPENDED,
            pc=program.entry_point,
            stack_base=program.stack_base,
            stack_limit=program.stack_limit,
            launch_stack=(program.stack_base, program.stack_limit),
        )
        self.processes[pid] = run
        if not suspended:
            self.resume(run)
            self.run_to_halt(run)
        return run

    def attach_interposer(self, run: ProcessRun, interposer) -> None:
        if run.mode != SUSPENDED:
            raise SimError("late-attach", f"process {run.pid} already {run.mode}")
        run.interposers.append(interposer)
        run.event_hooks.append(interposer.on_event if hasattr(interposer, "on_event") else interposer)
        after = getattr(interposer, "after_event", None)
        if after is not None:
            # AFTER_APIS restricts post-effect delivery to the APIs a hook cares about
            run.after_hooks.append((getattr(interposer, "AFTER_APIS", None), after))

    def resume(self, run: ProcessRun) -> None:
        if run.mode == SUSPENDED:
            run.mode = RUNNING

    def step(self, run: ProcessRun) -> str:
        if run.mode != RUNNING:
            raise SimError("not-running", f"process {run.pid} is {run.mode}")
        ins = run.program.instructions.get(run.pc)
        if ins is None:
            run.mode = TERMINATED
            run.termination = "fault"
            raise SimError("segfault-model", "interpretation of missing address", addr=run.pc)
        self.clock += 1
        run.steps += 1
        # deterministic cost model: plain instructions 4 units, API calls 16
        # plus data volume, each interposer delivery 1 (hook trampoline)
        self.event_cost_units += 4 if not isinstance(ins, CallApi) else 0
        if isinstance(ins, Halt):
            run.mode = TERMINATED
            run.termination = "halt"
            return HALTED
        if isinstance(ins, Jmp):
            if ins.restore_stack is not None:
                run.stack_base, run.stack_limit = ins.restore_stack
            run.pc = ins.target
            return PROGRESSED
        if isinstance(ins, Assign):
            run.env[ins.var] = eval_expr(self, run, ins.expr)
            run.pc += 1
            return PROGRESSED
        # CallApi
        args = {name: eval_expr(self, run, e) for name, e in ins.args.items()}
        data_volume = sum(
            len(v.data) if isinstance(v, TaggedBuf) else len(v)
            for v in args.values()
            if isinstance(v, (TaggedBuf, bytes, bytearray))
        )
        self.event_cost_units += 16 + data_volume // 64
        event = ApiEvent(
            pid=run.pid,
            seq=run.seq,
            api=ins.api,
            args=args,
            caller_addr=run.pc,
            return_addr=run.pc + 1,
        )
        run.seq += 1
        disposition = _ALLOW
        for hook in run.event_hooks:
            self.event_cost_units += 1
            d = hook(event, self)
            if d is not None and d.kind != Disposition.ALLOW:
                disposition = d
                break
        event.disposition = disposition.kind
        if disposition.kind == Disposition.TERMINATE:
            run.mode = TERMINATED
            run.termination = "terminated-by-interposer"
            if run.record_trace:
                run.trace.append(event)
            for after in run.after_hooks:
                after(event, self)
            return HALTED
        if disposition.kind == Disposition.ALLOW:
            event.return_slot = API_EFFECTS[ins.api](self, run, args)
        else:  # FakeSuccess / Block: no VFS effect, supplied value returned
            event.return_slot = disposition.value
        if ins.out is not None:
            run.env[ins.out] = event.return_slot
        run.visible_log.append((ins.api, _visible(event.return_slot)))
        if run.record_trace:
            run.trace.append(event)
        for after in run.after_hooks:
            after(event, self)
        run.pc += 1
        return PROGRESSED

    def run_to_halt(self, run: ProcessRun, max_steps: int = 1_000_000) -> int:
        """Interpret until the process terminates or the step budget is hit.
        Returns the number of steps executed."""
        if run.mode == SUSPENDED:
            self.resume(run)
        n = 0
        while run.mode == RUNNING and n < max_steps:
            self.step(run)
            n += 1
        return n
