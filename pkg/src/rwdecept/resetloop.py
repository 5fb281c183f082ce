"""Reset-phase orchestration: analyze a confirmed sample's call trace,
classify its execution chain (key transfer before vs after file operations),
locate the end of the key-transfer chain, emit a patch configuration, rewrite
the program into an infinite key-regeneration loop with randomized-fingerprint
detours, and drive loop iterations against the attacker backend.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import attacker as atk
from .kb import KnowledgeBase, extract_msg, find_embeddings
from .simcore import (
    ENCRYPT_CLASS,
    Disposition,
    FakeSuccess,
    Allow,
    Jmp,
    ProcessRun,
    SimProgram,
    World,
    derive_seed,
)

EC1 = "EC1"  # key transfer precedes the file/encryption block
EC2 = "EC2"  # key transfer follows the file/encryption block
UNKNOWN = "Unknown"

FINGERPRINT_APIS = ("GetMacAddress", "GetSystemTime", "RandBytes")

# Ops that characterize an enumerate/encrypt/delete workflow. Generic data
# ops (CreateFile/ReadFile/WriteFile/CloseHandle) are excluded because a
# ransom-note write uses them too and would smear the block boundary.
CHAIN_ANCHOR_OPS = frozenset(
    {"FindFirstFile", "FindNextFile", "SetFilePointer", "DeleteFile", "MoveFile", "MoveFileWithProgress"}
) | ENCRYPT_CLASS

# Broad file-operation set used to find where the encryption block ends.
FILE_OPS = frozenset(
    {
        "CreateFile",
        "ReadFile",
        "WriteFile",
        "SetFilePointer",
        "DeleteFile",
        "MoveFile",
        "MoveFileWithProgress",
        "CloseHandle",
        "FindFirstFile",
        "FindNextFile",
    }
) | ENCRYPT_CLASS


class ResetError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# ---------------------------------------------------------------------------
# trace analysis
# ---------------------------------------------------------------------------

@dataclass
class CallRecord:
    api: str
    args: dict
    caller_addr: int
    return_addr: int


@dataclass
class SbaReport:
    """Exhaustive call log of one infection pass plus the launch-time stack
    snapshot and entry point."""

    entry_point: int
    calls: list  # of CallRecord, in execution order
    stack_snapshot: tuple  # (base, limit) captured at suspended launch
    trace: list = field(default_factory=list, repr=False)  # raw events, for dataflow


def analyze_trace(run: ProcessRun) -> SbaReport:
    if not run.trace:
        raise ResetError("no-calls", "run produced no API calls")
    calls = [
        CallRecord(api=ev.api, args=dict(ev.args), caller_addr=ev.caller_addr, return_addr=ev.return_addr)
        for ev in run.trace
    ]
    return SbaReport(
        entry_point=run.program.entry_point,
        calls=calls,
        stack_snapshot=tuple(run.launch_stack),
        trace=list(run.trace),
    )


def _transfer_key_terminal(report: SbaReport, kb: KnowledgeBase) -> Optional[int]:
    """Index of the final key-transfer terminal call, or None if the
    transfer-key dataflow pattern does not embed into the trace."""
    graph = extract_msg(report.trace)
    pattern = kb.transfer_key_msg
    best = None
    for mapping in find_embeddings(graph, pattern):
        t = mapping[pattern.terminal]
        if best is None or t > best:
            best = t
    return best


def classify_chain(report: SbaReport, kb: KnowledgeBase) -> str:
    if not report.calls:
        raise ResetError("no-calls", "empty report")
    t = _transfer_key_terminal(report, kb)
    if t is None:
        return UNKNOWN
    anchors = [i for i, c in enumerate(report.calls) if c.api in CHAIN_ANCHOR_OPS]
    if not anchors:
        return UNKNOWN
    if t < anchors[0]:
        return EC1
    if t > anchors[-1]:
        return EC2
    return UNKNOWN


def locate_transfer_key_end(report: SbaReport, kb: KnowledgeBase) -> int:
    """Return address of the terminal call of the matched key-transfer chain
    (the final Send): the loop-patch site."""
    t = _transfer_key_terminal(report, kb)
    if t is None:
        raise ResetError("no-transfer-key", "no key-transfer chain found in trace")
    return report.calls[t].return_addr


# ---------------------------------------------------------------------------
# patch configuration
# ---------------------------------------------------------------------------

@dataclass
class DeceptorConfig:
    detours: dict  # ApiName -> {"kind": ...}
    loop_patch: dict  # {"at": addr, "jmp_to": addr}
    stack_restore: dict  # {"base": int, "limit": int}
    ec2_bypass: Optional[dict] = None  # {"from": addr, "to": addr}

    def to_json(self) -> str:
        doc = {
            "detours": self.detours,
            "loop_patch": self.loop_patch,
            "stack_restore": self.stack_restore,
        }
        if self.ec2_bypass is not None:
            doc["ec2_bypass"] = self.ec2_bypass
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "DeceptorConfig":
        doc = json.loads(text)
        return cls(
            detours=doc["detours"],
            loop_patch=doc["loop_patch"],
            stack_restore=doc["stack_restore"],
            ec2_bypass=doc.get("ec2_bypass"),
        )


_DETOUR_KINDS = {"GetMacAddress": "mac", "GetSystemTime": "time", "RandBytes": "randbytes"}


def build_config(report: SbaReport, chain: str, kb: KnowledgeBase) -> DeceptorConfig:
    if chain == UNKNOWN:
        raise ResetError("no-transfer-key", "cannot build a config for an unknown chain")
    loop_at = locate_transfer_key_end(report, kb)
    observed = {c.api for c in report.calls}
    detours = {api: {"kind": _DETOUR_KINDS[api]} for api in FINGERPRINT_APIS if api in observed}
    cfg = DeceptorConfig(
        detours=detours,
        loop_patch={"at": loop_at, "jmp_to": report.entry_point},
        stack_restore={"base": report.stack_snapshot[0], "limit": report.stack_snapshot[1]},
    )
    if chain == EC2:
        t = _transfer_key_terminal(report, kb)
        enum_idx = [i for i, c in enumerate(report.calls) if c.api == "FindFirstFile"]
        file_idx = [i for i, c in enumerate(report.calls) if c.api in FILE_OPS and i < t]
        if not enum_idx or not file_idx:
            raise ResetError("no-transfer-key", "EC2 chain lacks a file-operation block")
        deletes = [i for i in file_idx if report.calls[i].api == "DeleteFile"]
        end = deletes[-1] if deletes else file_idx[-1]
        cfg.ec2_bypass = {
            "from": report.calls[enum_idx[0]].caller_addr,
            "to": report.calls[end].return_addr,
        }
    return cfg


def apply_patches(program: SimProgram, cfg: DeceptorConfig) -> SimProgram:
    """Non-destructive rewrite: the loop-patch site becomes a stack-restoring
    jump to the entry point; an EC2 bypass becomes a jump over the
    encryption-deletion block. All other instructions are untouched."""
    instructions = dict(program.instructions)
    at = cfg.loop_patch["at"]
    to = cfg.loop_patch["jmp_to"]
    if at not in instructions or to not in instructions:
        raise ResetError("bad-patch", f"loop patch {at}->{to} outside program")
    restore = (cfg.stack_restore["base"], cfg.stack_restore["limit"])
    instructions[at] = Jmp(to, restore_stack=restore)
    if cfg.ec2_bypass is not None:
        b_from, b_to = cfg.ec2_bypass["from"], cfg.ec2_bypass["to"]
        if b_from not in instructions or b_to not in instructions:
            raise ResetError("bad-patch", f"bypass {b_from}->{b_to} outside program")
        instructions[b_from] = Jmp(b_to)
    patched = SimProgram(
        instructions=instructions,
        entry_point=program.entry_point,
        code_image=program.code_image,
        stack_base=program.stack_base,
        stack_limit=program.stack_limit,
    )
    patched.validate()
    return patched


# ---------------------------------------------------------------------------
# loop driving
# ---------------------------------------------------------------------------

class _DetourInterposer:
    """Randomized-value hooks for fingerprint APIs: every loop iteration sees
    fresh MAC / time / random data, so every victim id is unique and useless."""

    def __init__(self, detours: dict, rng: random.Random):
        self.detours = detours
        self.rng = rng

    def on_event(self, ev, world) -> Disposition:
        spec = self.detours.get(ev.api)
        if spec is None:
            return Allow()
        kind = spec["kind"]
        if kind == "mac":
            return FakeSuccess(world.fresh_buf(self.rng.randbytes(6)))
        if kind == "time":
            return FakeSuccess(world.fresh_buf(self.rng.randbytes(8)))
        if kind == "randbytes":
            n = int(ev.args.get("n", 16))
            return FakeSuccess(world.fresh_buf(self.rng.randbytes(n)))
        return Allow()


@dataclass
class LoopReport:
    iterations: int = 0
    victim_ids: list = field(default_factory=list)
    keys: list = field(default_factory=list)
    db_delta_entries: int = 0
    db_delta_bytes: int = 0


def run_loop(
    patched: SimProgram,
    attacker_db: atk.AttackerDb,
    budget: dict,
    *,
    sample_id: str = "r0",
    seed: int = 0,
    rate: float = 1.0,
    world: Optional[World] = None,
    detours: Optional[dict] = None,
    max_steps_per_iteration: int = 100_000,
) -> LoopReport:
    """Drive a patched program against the attacker model.

    budget: {"iterations": N} or {"sim_duration": seconds} (at ``rate``
    registrations per simulated second). Detoured fingerprint APIs return
    fresh randomized values each call; the table defaults to every
    fingerprint API present in the program.
    """
    if "iterations" in budget:
        iterations_budget = int(budget["iterations"])
    elif "sim_duration" in budget:
        iterations_budget = int(rate * float(budget["sim_duration"]))
    else:
        raise ResetError("bad-patch", "budget must carry iterations or sim_duration")
    report = LoopReport()
    entries_before = len(attacker_db)
    bytes_before = attacker_db.total_bytes
    if iterations_budget <= 0:
        return report
    if world is None:
        world = World(seed=derive_seed(seed, "loop-world", sample_id))
    rng = random.Random(derive_seed(seed, "detours", sample_id))
    loop_at = None
    for addr, ins in patched.instructions.items():
        if isinstance(ins, Jmp) and ins.restore_stack is not None and ins.target == patched.entry_point:
            loop_at = addr
            break

    def sink(pid: int, clock: int, payload: bytes) -> None:
        if len(payload) != atk.VICTIM_ID_LEN + atk.KEY_LEN:
            return
        vid, key = payload[: atk.VICTIM_ID_LEN], payload[atk.VICTIM_ID_LEN :]
        t = (report.iterations + 1) / rate
        attacker_db.register(atk.Registration(victim_id=vid, key=key, sample_id=sample_id, sim_timestamp=t))
        report.victim_ids.append(vid)
        report.keys.append(key)

    world.network_sink = sink
    run = world.launch(patched, suspended=True)
    run.record_trace = False
    table = detours if detours is not None else patched_detours(patched)
    world.attach_interposer(run, _DetourInterposer(detours=table, rng=rng))
    world.resume(run)
    steps_this_iteration = 0
    while run.mode == "running" and report.iterations < iterations_budget:
        at_loop_patch = run.pc == loop_at
        world.step(run)
        steps_this_iteration += 1
        if at_loop_patch:
            report.iterations += 1
            steps_this_iteration = 0
        elif steps_this_iteration > max_steps_per_iteration:
            raise ResetError("bad-patch", "loop never reached the patch site")
    report.db_delta_entries = len(attacker_db) - entries_before
    report.db_delta_bytes = attacker_db.total_bytes - bytes_before
    return report


def patched_detours(patched: SimProgram) -> dict:
    """Default detour table for a patched program: every fingerprint API it
    contains."""
    observed = {ins.api for ins in patched.instructions.values() if hasattr(ins, "api")}
    return {api: {"kind": _DETOUR_KINDS[api]} for api in FINGERPRINT_APIS if api in observed}


# ---------------------------------------------------------------------------
# calibrated depletion benchmark
# ---------------------------------------------------------------------------

# Reference per-family registration totals at the 1h / 12h / 24h marks,
# measured against four open-source backends; these calibrate per-sample
# loop rates (aggregate across all agents).
RATE_PROFILES = {
    "r1": (290_000, 3_420_000, 6_910_000),
    "r2": (131_000, 1_582_000, 3_081_000),
    "r3": (413_000, 4_829_000, 9_223_000),
    "r4": (195_000, 2_257_000, 4_357_000),
}

_PROFILE_MARKS = (3600.0, 43200.0, 86400.0)


def arrival_times(
    sample_id: str,
    agents: int = 50,
    sim_seconds: float = 86400.0,
    jitter_seed: int | None = None,
    targets: Optional[tuple] = None,
) -> np.ndarray:
    """Registration arrival times (simulated seconds) for one sample run by
    ``agents`` concurrent loop agents, following the sample's piecewise
    calibrated rate. Deterministic; optional seeded jitter stays within each
    agent's own emission slot."""
    totals = targets or RATE_PROFILES.get(sample_id)
    if totals is None:
        raise ResetError("bad-patch", f"no rate profile for sample {sample_id!r}")
    if agents < 1:
        raise ResetError("bad-patch", "agents must be >= 1")
    segments = []
    prev_t, prev_n = 0.0, 0
    for mark, cum in zip(_PROFILE_MARKS, totals):
        segments.append((prev_t, mark, cum - prev_n))
        prev_t, prev_n = mark, cum
    chunks = []
    rng = np.random.default_rng(jitter_seed) if jitter_seed is not None else None
    for seg_start, seg_end, count in segments:
        if seg_start >= sim_seconds or count <= 0:
            continue
        seg_len = seg_end - seg_start
        base, rem = divmod(count, agents)
        for a in range(agents):
            c = base + (1 if a < rem else 0)
            if c == 0:
                continue
            interval = seg_len / c
            t = seg_start + (np.arange(c, dtype=np.float64) + (a + 0.5) / agents) * interval
            if rng is not None:
                t = t + rng.uniform(-0.25, 0.25, size=c) * interval / agents
            chunks.append(t[t < sim_seconds])
    if not chunks:
        return np.empty(0, dtype=np.float64)
    return np.concatenate(chunks)


def depletion_bench(
    sample_id: str,
    agents: int = 50,
    sim_hours: float = 24.0,
    time_scale: float = 3600.0,
    seed: int = 0,
    db: Optional[atk.AttackerDb] = None,
    keep_payloads: bool = False,
    targets: Optional[tuple] = None,
) -> dict:
    """Simulate a scaled multi-agent reset campaign for one sample and report
    attacker-side depletion. ``time_scale`` maps simulated time to the wall
    budget (24 h at 3600x is a ~24 s wall envelope); the virtual clock is
    advanced directly, so actual wall time is just compute time."""
    sim_seconds = sim_hours * 3600.0
    if db is None:
        db = atk.AttackerDb(keep_payloads=keep_payloads)
    times = arrival_times(sample_id, agents=agents, sim_seconds=sim_seconds, jitter_seed=seed, targets=targets)
    n = len(times)
    if db.keep_payloads and n:
        rng = np.random.default_rng(derive_seed(seed, "bench-payloads", sample_id) % (2**63))
        vids = rng.integers(0, 256, size=(n, atk.VICTIM_ID_LEN), dtype=np.uint8)
        keys = rng.integers(0, 256, size=(n, atk.KEY_LEN), dtype=np.uint8)
        db.register_batch(sample_id, times, vids, keys)
    else:
        db.register_batch(sample_id, times)
    report = atk.depletion_report(db)
    report["meta"] = {
        "sample": sample_id,
        "agents": agents,
        "sim_hours": sim_hours,
        "time_scale": time_scale,
        "wall_budget_seconds": sim_seconds / time_scale,
        "seed": seed,
    }
    return report
