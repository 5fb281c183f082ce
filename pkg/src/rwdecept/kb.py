"""Knowledge base of behavioral artifacts: dataflow subgraphs over API calls
(MSGs), the known ransomware extension list, ransom-note keyword stems, and
crypto function signatures. Includes MSG extraction from traces and injective
subgraph matching.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .cryptodetect import CfsSignature, default_signatures
from .simcore import ENCRYPT_CLASS, ApiEvent, Handle, TaggedBuf, normalize_path

MAX_PATTERN_NODES = 12

# Wildcard node classes; a pattern node labeled with a class name matches any
# member API.
API_CLASSES: dict[str, frozenset] = {
    "Encrypt": frozenset(ENCRYPT_CLASS),
    "FileMove": frozenset({"MoveFile", "MoveFileWithProgress"}),
}

DEFAULT_EXTENSIONS = (
    ".locky",
    ".zepto",
    ".odin",
    ".thor",
    ".aesir",
    ".wncry",
    ".wcry",
    ".wannacry",
    ".wnry",
    ".cerber",
    ".cerber3",
    ".crypt",
    ".cryp1",
    ".crypz",
    ".crysis",
    ".dharma",
    ".sage",
    ".globe",
    ".osiris",
    ".petya",
    ".gdcb",
    ".krab",
    ".lockbit",
    ".conti",
    ".ryk",
    ".maze",
    ".makop",
    ".phobos",
    ".stop",
    ".djvu",
)

DEFAULT_KEYWORD_STEMS = (
    "ransom",
    "encrypt",
    "encrypted",
    "decrypt",
    "decrypted",
    "payment",
    "bitcoin",
    "delete",
    "deleted",
    "lose",
)


class KbError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

@dataclass
class MsgGraph:
    """Dataflow graph: nodes are API calls, edges carry the dependency kind
    (handle | buffer | path) of the value that flowed between them."""

    nodes: list[dict]  # {"id": int, "class": str}
    edges: list[dict]  # {"from": int, "to": int, "dep": str}
    terminal: int

    def node_ids(self) -> list[int]:
        return [n["id"] for n in self.nodes]

    def validate(self) -> None:
        ids = set()
        for n in self.nodes:
            if n["id"] in ids:
                raise KbError("format", f"duplicate node id {n['id']}")
            ids.add(n["id"])
        for e in self.edges:
            if e["from"] not in ids or e["to"] not in ids:
                raise KbError("format", f"edge endpoint missing: {e}")
            if e["dep"] not in ("handle", "buffer", "path"):
                raise KbError("format", f"bad dependency kind {e['dep']!r}")
        if self.terminal not in ids:
            raise KbError("format", f"terminal {self.terminal} not a node")

    def to_dict(self) -> dict:
        return {"nodes": self.nodes, "edges": self.edges, "terminal": self.terminal}

    @classmethod
    def from_dict(cls, doc: dict) -> "MsgGraph":
        try:
            g = cls(nodes=list(doc["nodes"]), edges=list(doc["edges"]), terminal=doc["terminal"])
        except KeyError as e:
            raise KbError("format", f"missing field {e.args[0]!r}") from e
        g.validate()
        return g


def class_matches(pattern_class: str, api: str) -> bool:
    members = API_CLASSES.get(pattern_class)
    if members is not None:
        return api in members
    return pattern_class == api


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def _value_identity(v):
    """(kind, identity) for dependency-bearing values; None for scalars."""
    if isinstance(v, Handle):
        return ("handle", v.id)
    if isinstance(v, TaggedBuf):
        return ("buffer", v.tag)
    if isinstance(v, str) and v.startswith("/"):
        return ("path", normalize_path(v))
    return None


def extract_msg(trace: list[ApiEvent]) -> MsgGraph:
    """Build the dataflow graph of a single-process trace: one node per event,
    an edge (i, j) whenever an output value of event i appears among the
    inputs of event j."""
    if not trace:
        raise KbError("empty-trace", "cannot extract a graph from an empty trace")
    pids = {ev.pid for ev in trace}
    if len(pids) > 1:
        raise KbError("format", f"trace mixes processes {sorted(pids)}")
    nodes = [{"id": i, "class": ev.api} for i, ev in enumerate(trace)]
    produced: dict[tuple, int] = {}  # identity -> latest producing node
    edges: list[dict] = []
    seen: set[tuple[int, int, str]] = set()
    for j, ev in enumerate(trace):
        for v in ev.args.values():
            ident = _value_identity(v)
            if ident is None:
                continue
            i = produced.get(ident)
            if i is not None and (i, j, ident[0]) not in seen:
                seen.add((i, j, ident[0]))
                edges.append({"from": i, "to": j, "dep": ident[0]})
        out = _value_identity(ev.return_slot)
        if out is not None:
            produced[out] = j
    return MsgGraph(nodes=nodes, edges=edges, terminal=len(trace) - 1)


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------

def find_embeddings(observed: MsgGraph, pattern: MsgGraph):
    """Yield injective node maps (pattern id -> observed id) preserving node
    class membership and mapping every pattern edge onto an observed edge of
    the same dependency kind."""
    if len(pattern.nodes) > MAX_PATTERN_NODES:
        raise KbError("format", f"pattern exceeds {MAX_PATTERN_NODES} nodes")
    obs_nodes = observed.nodes
    obs_edges = {(e["from"], e["to"], e["dep"]) for e in observed.edges}
    candidates = {
        p["id"]: [o["id"] for o in obs_nodes if class_matches(p["class"], o["class"])]
        for p in pattern.nodes
    }
    pattern_ids = sorted(candidates, key=lambda pid: len(candidates[pid]))
    p_edges = [(e["from"], e["to"], e["dep"]) for e in pattern.edges]

    def backtrack(idx: int, mapping: dict, used: set):
        if idx == len(pattern_ids):
            yield dict(mapping)
            return
        pid = pattern_ids[idx]
        for oid in candidates[pid]:
            if oid in used:
                continue
            mapping[pid] = oid
            ok = True
            for (a, b, dep) in p_edges:
                ma, mb = mapping.get(a), mapping.get(b)
                if ma is not None and mb is not None and (ma, mb, dep) not in obs_edges:
                    ok = False
                    break
            if ok:
                used.add(oid)
                yield from backtrack(idx + 1, mapping, used)
                used.discard(oid)
            del mapping[pid]

    yield from backtrack(0, {}, set())


def match_msg(observed: MsgGraph, pattern: MsgGraph) -> bool:
    return next(find_embeddings(observed, pattern), None) is not None


# ---------------------------------------------------------------------------
# knowledge base container + built-in artifacts
# ---------------------------------------------------------------------------

def default_msgs() -> dict[str, MsgGraph]:
    """Canonical patterns: the two file-encryption dataflow shapes plus the
    key-exfiltration chain (terminal = the final Send)."""
    write_to_new_file = MsgGraph(
        nodes=[
            {"id": 0, "class": "CreateFile"},  # original
            {"id": 1, "class": "ReadFile"},
            {"id": 2, "class": "Encrypt"},
            {"id": 3, "class": "CreateFile"},  # destination
            {"id": 4, "class": "WriteFile"},
        ],
        edges=[
            {"from": 0, "to": 1, "dep": "handle"},
            {"from": 1, "to": 2, "dep": "buffer"},
            {"from": 2, "to": 4, "dep": "buffer"},
            {"from": 3, "to": 4, "dep": "handle"},
        ],
        terminal=4,
    )
    overwrite_original = MsgGraph(
        nodes=[
            {"id": 0, "class": "CreateFile"},
            {"id": 1, "class": "ReadFile"},
            {"id": 2, "class": "Encrypt"},
            {"id": 3, "class": "SetFilePointer"},
            {"id": 4, "class": "WriteFile"},
        ],
        edges=[
            {"from": 0, "to": 1, "dep": "handle"},
            {"from": 1, "to": 2, "dep": "buffer"},
            {"from": 0, "to": 3, "dep": "handle"},
            {"from": 0, "to": 4, "dep": "handle"},
            {"from": 2, "to": 4, "dep": "buffer"},
        ],
        terminal=4,
    )
    # Stand-in for the key-exfiltration chain; configurable via msg/*.json.
    transfer_key = MsgGraph(
        nodes=[
            {"id": 0, "class": "Socket"},
            {"id": 1, "class": "Connect"},
            {"id": 2, "class": "Send"},
        ],
        edges=[
            {"from": 0, "to": 1, "dep": "handle"},
            {"from": 1, "to": 2, "dep": "handle"},
        ],
        terminal=2,
    )
    return {
        "write_to_new_file": write_to_new_file,
        "overwrite_original": overwrite_original,
        "transfer_key": transfer_key,
    }


@dataclass
class KnowledgeBase:
    """Immutable after load; shared read-only across monitors."""

    extensions: set = field(default_factory=lambda: set(DEFAULT_EXTENSIONS))
    keywords: set = field(default_factory=lambda: set(DEFAULT_KEYWORD_STEMS))
    msgs: dict = field(default_factory=default_msgs)
    cfs: list = field(default_factory=default_signatures)

    def __post_init__(self):
        self._ext_suffixes = tuple(sorted(self.extensions))
        self._stems = tuple(sorted(self.keywords))

    def has_rw_extension(self, path: str) -> bool:
        return path.lower().endswith(self._ext_suffixes)

    def keyword_hit(self, text: str) -> str | None:
        low = text.lower()
        for stem in self._stems:
            if stem in low:
                return stem
        return None

    @property
    def transfer_key_msg(self) -> MsgGraph:
        return self.msgs["transfer_key"]


def _parse_list_file(path: Path, require_dot: bool) -> set:
    entries = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip().lower()
        if not line:
            continue
        if require_dot and not line.startswith("."):
            raise KbError("format", f"{path.name}:{lineno}: {line!r} must start with '.'")
        entries.add(line)
    return entries


def load_kb(directory) -> KnowledgeBase:
    """Load a KB directory; missing optional files fall back to built-ins."""
    directory = Path(directory)
    extensions = set(DEFAULT_EXTENSIONS)
    keywords = set(DEFAULT_KEYWORD_STEMS)
    msgs = default_msgs()
    cfs = default_signatures()
    ext_file = directory / "extensions.txt"
    if ext_file.exists():
        extensions = _parse_list_file(ext_file, require_dot=True)
        if not extensions:
            raise KbError("format", "extensions.txt is empty")
    kw_file = directory / "keywords.txt"
    if kw_file.exists():
        keywords = _parse_list_file(kw_file, require_dot=False)
        if not keywords:
            raise KbError("format", "keywords.txt is empty")
    msg_dir = directory / "msg"
    if msg_dir.is_dir():
        loaded = {}
        for f in sorted(msg_dir.glob("*.json")):
            try:
                loaded[f.stem] = MsgGraph.from_dict(json.loads(f.read_text(encoding="utf-8")))
            except (KbError, json.JSONDecodeError, TypeError) as e:
                raise KbError("format", f"{f.name}: {e}") from e
        if loaded:
            # files override built-ins by name (incl. the transfer-key chain)
            msgs = {**msgs, **loaded}
    cfs_dir = directory / "cfs"
    if cfs_dir.is_dir():
        sigs = []
        for f in sorted(cfs_dir.glob("*.json")):
            try:
                sigs.append(CfsSignature.from_dict(json.loads(f.read_text(encoding="utf-8"))))
            except (ValueError, KeyError, json.JSONDecodeError) as e:
                raise KbError("format", f"{f.name}: {e}") from e
        if sigs:
            cfs = sigs
    return KnowledgeBase(extensions=extensions, keywords=keywords, msgs=msgs, cfs=cfs)


def save_kb(kb: KnowledgeBase, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "extensions.txt").write_text(
        "# known ransomware extensions, one per line\n" + "\n".join(sorted(kb.extensions)) + "\n",
        encoding="utf-8",
    )
    (directory / "keywords.txt").write_text(
        "# ransom-note keyword stems\n" + "\n".join(sorted(kb.keywords)) + "\n",
        encoding="utf-8",
    )
    msg_dir = directory / "msg"
    msg_dir.mkdir(exist_ok=True)
    for name, g in kb.msgs.items():
        (msg_dir / f"{name}.json").write_text(json.dumps(g.to_dict(), indent=2), encoding="utf-8")
    cfs_dir = directory / "cfs"
    cfs_dir.mkdir(exist_ok=True)
    for sig in kb.cfs:
        (cfs_dir / f"{sig.meta['library_name']}.json").write_text(
            json.dumps(sig.to_dict(), indent=2), encoding="utf-8"
        )
