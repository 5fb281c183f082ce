"""Real-time staged identification and deception engine.

A Monitor is attached to a suspended process as an interposer and applies the
five-stage interception policy: extension checks on create/rename, encryption
evidence (crypto API calls, code-image fingerprints, entropy counting),
write routing with FakeSuccess overwrite protection, deferred deletion, and
ransom-note confirmation. Finalization resolves the verdict and either cleans
up attack artifacts or replays deferred benign actions.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .cryptodetect import EntropyPolicy, EntropyState, entropy_step, scan_code_cfs
from .simcore import (
    CREATE_ALWAYS,
    CREATE_NEW,
    ENCRYPT_CLASS,
    OPEN_EXISTING,
    Allow,
    ApiEvent,
    Block,
    Disposition,
    FakeSuccess,
    FileRecord,
    Handle,
    SimProgram,
    Terminate,
    World,
    as_bytes,
    derive_seed,
    normalize_path,
)

ARC_OFF = "off"
ARC_PARTIAL = "partial"
ARC_FULL = "full"
ARC_MODES = (ARC_OFF, ARC_PARTIAL, ARC_FULL)

MONITORING = "Monitoring"
BENIGN = "Benign"
RANSOMWARE = "Ransomware"

RW_REASONS = (
    "rw_extension",
    "rename_rw_extension",
    "ransom_note",
    "wallpaper_note",
    "entropy_confirmed",
)

# Ransom-note scans only consider reasonably note-sized text payloads.
NOTE_SCAN_MAX = 1 << 20


class DeceptorError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class ArcPolicy:
    mode: str = ARC_PARTIAL

    def __post_init__(self):
        if self.mode not in ARC_MODES:
            raise DeceptorError("format", f"unknown ARC mode {self.mode!r}")

    @property
    def contained(self) -> bool:
        return self.mode in (ARC_PARTIAL, ARC_FULL)


@dataclass
class Verdict:
    kind: str = MONITORING
    stage: Optional[int] = None
    reason: Optional[str] = None

    def is_rw(self) -> bool:
        return self.kind == RANSOMWARE

    def as_dict(self) -> dict:
        return {"verdict": self.kind, "stage": self.stage, "reason": self.reason}


@dataclass
class MonitorState:
    pid: int
    stage_reached: int = 1
    encryption_flag: bool = False
    flag_source: Optional[str] = None  # crypto_api | cfs | entropy
    entropy_state: EntropyState = field(default_factory=EntropyState)
    tracked_dest_files: set = field(default_factory=set)
    deferred_deletes: list = field(default_factory=list)
    shadow_copies: dict = field(default_factory=dict)  # path -> original bytes
    verdict: Verdict = field(default_factory=Verdict)
    # tracking internals
    handle_kinds: dict = field(default_factory=dict)  # hid -> ("original"|"destination", path)
    pointer_reset: set = field(default_factory=set)  # hids whose last SetFilePointer was 0
    note_candidates: set = field(default_factory=set)  # paths to keyword-scan on write
    rename_ledger: list = field(default_factory=list)  # (src, dst) for pre-existing files
    baseline: dict = field(default_factory=dict)  # pre-run snapshot (path -> bytes)
    cfs_scanned: bool = False
    finalized: bool = False

    def mark_stage(self, stage: int) -> None:
        self.stage_reached = max(self.stage_reached, stage)

    def confirm_rw(self, stage: int, reason: str) -> None:
        if reason not in RW_REASONS:
            raise DeceptorError("format", f"unknown RW reason {reason!r}")
        self.mark_stage(stage)
        if not self.verdict.is_rw():
            self.verdict = Verdict(RANSOMWARE, stage=stage, reason=reason)


@dataclass
class FinalizeReport:
    verdict: Verdict
    files_lost: int = 0
    deferred_applied: int = 0
    removed_created: int = 0
    restored_shadow: int = 0
    renames_undone: int = 0

    def as_dict(self) -> dict:
        d = self.verdict.as_dict()
        d.update(
            files_lost=self.files_lost,
            deferred_applied=self.deferred_applied,
        )
        return d


class Monitor:
    """Per-process interposer implementing the staged deception policy."""

    def __init__(
        self,
        pid: int,
        kb,
        world: World,
        arc: ArcPolicy = ArcPolicy(),
        entropy_policy: EntropyPolicy | None = None,
        code_image: bytes = b"",
    ):
        self.kb = kb
        self.arc = arc
        self.policy = entropy_policy or EntropyPolicy()
        self.policy.validate()
        self.code_image = code_image
        self.state = MonitorState(pid=pid)
        self.state.baseline = world.fs.snapshot()
        self._decoy_seed = derive_seed(world.seed, "decoy", pid)
        self._decoy_rng_inst = None

    @property
    def _decoy_rng(self) -> random.Random:
        if self._decoy_rng_inst is None:
            self._decoy_rng_inst = random.Random(self._decoy_seed)
        return self._decoy_rng_inst

    # -- interposer protocol -------------------------------------------------

    def on_event(self, ev: ApiEvent, world: World) -> Disposition:
        handler = _HANDLERS.get(ev.api)
        if handler is None:
            return Allow()
        return handler(self, ev, world)

    def after_event(self, ev: ApiEvent, world: World) -> None:
        if ev.api not in ("CreateFile", "MoveFile", "MoveFileWithProgress"):
            return
        if ev.api == "CreateFile" and isinstance(ev.return_slot, Handle):
            path = normalize_path(ev.args.get("path", ""))
            disposition = ev.args.get("disposition", OPEN_EXISTING)
            kind = "original" if disposition == OPEN_EXISTING else "destination"
            self.state.handle_kinds[ev.return_slot.id] = (kind, path)
            if (
                disposition in (CREATE_NEW, CREATE_ALWAYS)
                and world.fs.is_sensitive(path)
                and path not in self.state.baseline
            ):
                self.state.note_candidates.add(path)
        elif ev.api in ("MoveFile", "MoveFileWithProgress") and ev.return_slot is True:
            src = normalize_path(ev.args.get("src", ""))
            dst = normalize_path(ev.args.get("dst", ""))
            if src in self.state.baseline or any(s == src for _, s in self.state.rename_ledger):
                self.state.rename_ledger.append((src, dst))
            if src in self.state.note_candidates:
                self.state.note_candidates.discard(src)
                self.state.note_candidates.add(dst)
            for hid, (kind, hpath) in list(self.state.handle_kinds.items()):
                if hpath == src:
                    self.state.handle_kinds[hid] = (kind, dst)

    # -- stage 1 ---------------------------------------------------------

    def _on_create_file(self, ev: ApiEvent, world: World) -> Disposition:
        self.state.mark_stage(1)
        path = normalize_path(ev.args.get("path", ""))
        disposition = ev.args.get("disposition", OPEN_EXISTING)
        if disposition in (CREATE_NEW, CREATE_ALWAYS) and self.kb.has_rw_extension(path):
            self.state.confirm_rw(1, "rw_extension")
            return Terminate()
        if (
            disposition == CREATE_ALWAYS
            and path in self.state.baseline
            and path not in self.state.shadow_copies
        ):
            # truncate of a pre-existing file is as destructive as an overwrite
            self.state.shadow_copies[path] = self.state.baseline[path]
        return Allow()

    def _on_move_file(self, ev: ApiEvent, world: World) -> Disposition:
        self.state.mark_stage(1)
        dst = normalize_path(ev.args.get("dst", ""))
        if self.kb.has_rw_extension(dst):
            self.state.confirm_rw(1, "rename_rw_extension")
            return Terminate()
        return Allow()

    # -- stage 2 ---------------------------------------------------------

    def _on_crypto_call(self, ev: ApiEvent, world: World = None) -> Disposition:
        self.state.mark_stage(2)
        if not self.state.encryption_flag:
            self.state.encryption_flag = True
            self.state.flag_source = "crypto_api"
        if self.arc.mode == ARC_FULL:
            plaintext = as_bytes(ev.args.get("buffer", b""))
            return FakeSuccess(_decoy_ciphertext(self._decoy_rng, len(plaintext), ev))
        return Allow()

    def _stage2_checks(self, ev: ApiEvent, path: str) -> None:
        if self.state.encryption_flag:
            return
        if not self.state.cfs_scanned:
            self.state.cfs_scanned = True
            if scan_code_cfs(self.code_image, self.kb.cfs):
                self.state.mark_stage(2)
                self.state.encryption_flag = True
                self.state.flag_source = "cfs"
                return
        buffer = as_bytes(ev.args.get("buffer", b""))
        if buffer and entropy_step(self.state.entropy_state, {"path": path, "buffer": buffer}, self.policy):
            self.state.mark_stage(2)
            self.state.encryption_flag = True
            self.state.flag_source = "entropy"

    # -- stage 3 ---------------------------------------------------------

    def _on_write_file(self, ev: ApiEvent, world: World) -> Disposition:
        hv = ev.args.get("handle")
        if not isinstance(hv, Handle):
            return Allow()
        tracked = self.state.handle_kinds.get(hv.id)
        handle = world.fs.handle(hv.id)
        path = tracked[1] if tracked else (handle.path if handle else "")
        if path in self.state.note_candidates:
            hit = self._scan_note(ev.args.get("buffer", b""))
            if hit:
                self.state.confirm_rw(5, "ransom_note")
                return Terminate()
        self._stage2_checks(ev, path)
        if self.state.flag_source == "entropy" and self.state.encryption_flag:
            # custom-crypto confirmation: the distinct-file entropy counter hit
            self.state.confirm_rw(2, "entropy_confirmed")
            return Terminate()
        self.state.mark_stage(3)
        kind = tracked[0] if tracked else None
        if kind == "destination":
            if self.state.encryption_flag:
                self.state.tracked_dest_files.add(path)
                rec = world.fs.files.get(path)
                if rec is not None:
                    rec.flags.add("encrypted_dest")
            return Allow()
        if kind == "original" and hv.id in self.state.pointer_reset:
            if self.state.encryption_flag and self.arc.contained:
                return Block(len(ev.args.get("buffer", b"")))  # drop write, report success
            if self.arc.mode == ARC_OFF and path in self.state.baseline:
                self.state.shadow_copies.setdefault(path, self.state.baseline[path])
            return Allow()
        return Allow()

    def _on_pointer(self, ev: ApiEvent, world: World = None) -> Disposition:
        hv = ev.args.get("handle")
        if isinstance(hv, Handle):
            if int(ev.args.get("offset", 0)) == 0:
                self.state.pointer_reset.add(hv.id)
            else:
                self.state.pointer_reset.discard(hv.id)
        return Allow()

    # -- stage 4 ---------------------------------------------------------

    def _on_delete_file(self, ev: ApiEvent, world: World = None) -> Disposition:
        if not self.state.encryption_flag:
            return Allow()
        self.state.mark_stage(4)
        path = normalize_path(ev.args.get("path", ""))
        if path not in self.state.deferred_deletes:
            self.state.deferred_deletes.append(path)
        return FakeSuccess(True)

    # -- stage 5 ---------------------------------------------------------

    def _scan_note(self, buffer) -> Optional[str]:
        self.state.mark_stage(5)
        data = as_bytes(buffer)[:NOTE_SCAN_MAX]
        return self.kb.keyword_hit(data.decode("latin-1"))

    def _on_wallpaper(self, ev: ApiEvent, world: World = None) -> Disposition:
        text = str(ev.args.get("text", ""))
        self.state.mark_stage(5)
        if self.kb.keyword_hit(text):
            self.state.confirm_rw(5, "wallpaper_note")
            return Terminate()
        return Allow()

    # -- finalization ------------------------------------------------------

    def finalize(self, world: World) -> FinalizeReport:
        return finalize_process(self.state, world)


_HANDLERS = {
    "CreateFile": Monitor._on_create_file,
    "MoveFile": Monitor._on_move_file,
    "MoveFileWithProgress": Monitor._on_move_file,
    "WriteFile": Monitor._on_write_file,
    "DeleteFile": Monitor._on_delete_file,
    "SetFilePointer": Monitor._on_pointer,
    "SetWallpaper": Monitor._on_wallpaper,
    **{api: Monitor._on_crypto_call for api in ENCRYPT_CLASS},
}


def _decoy_ciphertext(rng: random.Random, n: int, ev: ApiEvent) -> object:
    from .simcore import TaggedBuf

    # decoy tag space is negative so it never collides with world tags
    return TaggedBuf(rng.randbytes(n), -(ev.pid * 1_000_003 + ev.seq + 1))


def finalize_process(state: MonitorState, world: World) -> FinalizeReport:
    """Resolve the process verdict and apply cleanup.

    Ransomware: remove files the process created, undo renames of pre-existing
    files, restore overwritten originals from shadow copies, discard the
    deferred-deletion ledger. Benign: execute deferred deletions in order and
    drop the shadows. Idempotent.
    """
    if state.finalized:
        return state._final_report  # type: ignore[attr-defined]
    if state.verdict.kind == MONITORING and state.pid in world.processes:
        if world.processes[state.pid].mode == "terminated":
            state.verdict = Verdict(BENIGN)
    report = FinalizeReport(verdict=state.verdict)
    fs = world.fs
    if state.verdict.is_rw():
        for path, rec in list(fs.files.items()):
            if rec.created_by == state.pid:
                del fs.files[path]
                report.removed_created += 1
        for src, dst in reversed(state.rename_ledger):
            rec = fs.files.get(dst)
            if rec is not None and src not in fs.files:
                del fs.files[dst]
                rec.path = src
                fs.files[src] = rec
                report.renames_undone += 1
        for path, content in state.shadow_copies.items():
            fs.files[path] = FileRecord(path=path, content=content, created_by=None)
            report.restored_shadow += 1
        state.deferred_deletes.clear()
        report.files_lost = sum(
            1
            for path, content in state.baseline.items()
            if path not in fs.files or fs.files[path].content != content
        )
    else:
        for path in state.deferred_deletes:
            if path in fs.files:
                del fs.files[path]
                report.deferred_applied += 1
        state.shadow_copies.clear()
        report.files_lost = 0
    state.finalized = True
    state._final_report = report  # type: ignore[attr-defined]
    return report


# ---------------------------------------------------------------------------
# whitelisting
# ---------------------------------------------------------------------------

@dataclass
class WhitelistStore:
    entries: dict = field(default_factory=dict)  # program digest -> clean run count
    n_threshold: int = 3
    passphrase: str = "change-me"

    def _payload(self) -> bytes:
        doc = {"entries": self.entries, "n_threshold": self.n_threshold}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    def seal(self) -> bytes:
        key = hashlib.blake2b(self.passphrase.encode(), digest_size=32).digest()
        return hashlib.blake2b(self._payload(), key=key, digest_size=32).digest()


def whitelist_check(store: WhitelistStore, program: SimProgram) -> bool:
    return store.entries.get(program.digest(), 0) >= store.n_threshold


def whitelist_update(store: WhitelistStore, program: SimProgram, verdict: Verdict) -> WhitelistStore:
    digest = program.digest()
    if verdict.is_rw():
        store.entries[digest] = 0
    elif verdict.kind == BENIGN:
        store.entries[digest] = store.entries.get(digest, 0) + 1
    return store


def save_whitelist(store: WhitelistStore, path) -> None:
    doc = {
        "entries": store.entries,
        "n_threshold": store.n_threshold,
        "seal": store.seal().hex(),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")


def load_whitelist(path, passphrase: str) -> WhitelistStore:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        store = WhitelistStore(
            entries=dict(doc["entries"]),
            n_threshold=int(doc["n_threshold"]),
            passphrase=passphrase,
        )
        claimed = bytes.fromhex(doc["seal"])
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise DeceptorError("tampered-store", f"unreadable whitelist store: {e}") from e
    if claimed != store.seal():
        raise DeceptorError("tampered-store", "seal verification failed")
    return store
