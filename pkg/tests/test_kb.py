import itertools
import random

import pytest

from rwdecept import kb as kbmod
from rwdecept.kb import (
    KbError,
    KnowledgeBase,
    MsgGraph,
    class_matches,
    extract_msg,
    load_kb,
    match_msg,
    save_kb,
)
from rwdecept.simcore import ApiEvent, Handle, TaggedBuf


def ev(pid, seq, api, args=None, ret=None):
    return ApiEvent(pid=pid, seq=seq, api=api, args=args or {}, caller_addr=seq, return_addr=seq + 1, return_slot=ret)


# ---------------------------------------------------------------------------
# brute-force oracle: try every injective node map
# ---------------------------------------------------------------------------

def match_oracle(observed: MsgGraph, pattern: MsgGraph) -> bool:
    """Exhaustive enumeration of injective node maps (independent of the
    backtracking matcher)."""
    obs_ids = observed.node_ids()
    obs_class = {n["id"]: n["class"] for n in observed.nodes}
    pat_ids = pattern.node_ids()
    k = len(pat_ids)
    if k > len(obs_ids):
        return False
    compat = [
        frozenset(oid for oid in obs_ids if class_matches(n["class"], obs_class[oid]))
        for n in pattern.nodes
    ]
    pat_pos = {pid: i for i, pid in enumerate(pat_ids)}
    p_edges = [(pat_pos[e["from"]], pat_pos[e["to"]], e["dep"]) for e in pattern.edges]
    obs_edges = {(e["from"], e["to"], e["dep"]) for e in observed.edges}
    for image in itertools.permutations(obs_ids, k):
        ok = True
        for i in range(k):
            if image[i] not in compat[i]:
                ok = False
                break
        if not ok:
            continue
        for (a, b, dep) in p_edges:
            if (image[a], image[b], dep) not in obs_edges:
                ok = False
                break
        if ok:
            return True
    return False


def random_graph(rng, n_nodes, classes=("CreateFile", "WriteFile", "Encrypt", "Send", "ReadFile")):
    nodes = [{"id": i, "class": rng.choice(classes)} for i in range(n_nodes)]
    edges = []
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < 0.35:
                edges.append({"from": i, "to": j, "dep": rng.choice(("handle", "buffer", "path"))})
    return MsgGraph(nodes=nodes, edges=edges, terminal=n_nodes - 1)


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def test_extract_buffer_edge_from_encrypt_to_write():
    buf = TaggedBuf(b"ciphertext", tag=9)
    trace = [
        ev(1, 0, "CryptEncrypt", args={"key": TaggedBuf(b"k", 1), "buffer": TaggedBuf(b"p", 2)}, ret=buf),
        ev(1, 1, "WriteFile", args={"handle": Handle(4), "buffer": buf}, ret=10),
    ]
    g = extract_msg(trace)
    assert len(g.nodes) == 2
    assert g.edges == [{"from": 0, "to": 1, "dep": "buffer"}]
    assert g.terminal == 1


def test_extract_single_event():
    g = extract_msg([ev(1, 0, "Socket", ret=Handle(4, "socket"))])
    assert len(g.nodes) == 1 and g.edges == []


def test_extract_disjoint_values_no_edges():
    trace = [
        ev(1, 0, "RandBytes", args={"n": 8}, ret=TaggedBuf(b"a", 1)),
        ev(1, 1, "RandBytes", args={"n": 8}, ret=TaggedBuf(b"b", 2)),
        ev(1, 2, "GetSystemTime", ret=TaggedBuf(b"t", 3)),
    ]
    g = extract_msg(trace)
    assert len(g.nodes) == 3 and g.edges == []


def test_extract_rejects_empty_trace():
    with pytest.raises(KbError) as exc:
        extract_msg([])
    assert exc.value.code == "empty-trace"


def test_extract_rejects_mixed_pids():
    with pytest.raises(KbError):
        extract_msg([ev(1, 0, "Socket"), ev(2, 0, "Socket")])


def test_buffer_edges_key_on_provenance_not_content():
    same_content = b"identical"
    trace = [
        ev(1, 0, "ReadFile", args={"handle": Handle(4)}, ret=TaggedBuf(same_content, 1)),
        ev(1, 1, "RandBytes", args={"n": 9}, ret=TaggedBuf(same_content, 2)),
        ev(1, 2, "WriteFile", args={"handle": Handle(8), "buffer": TaggedBuf(same_content, 2)}, ret=9),
    ]
    g = extract_msg(trace)
    assert {"from": 1, "to": 2, "dep": "buffer"} in g.edges
    assert {"from": 0, "to": 2, "dep": "buffer"} not in g.edges


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------

def test_identity_embedding_matches(kb):
    g = kb.msgs["transfer_key"]
    assert match_msg(g, g)


def test_wildcard_class_matches_any_member(kb):
    observed = MsgGraph(
        nodes=[{"id": 0, "class": "AES_encrypt"}, {"id": 1, "class": "WriteFile"}],
        edges=[{"from": 0, "to": 1, "dep": "buffer"}],
        terminal=1,
    )
    pattern = MsgGraph(
        nodes=[{"id": 0, "class": "Encrypt"}, {"id": 1, "class": "WriteFile"}],
        edges=[{"from": 0, "to": 1, "dep": "buffer"}],
        terminal=1,
    )
    assert match_msg(observed, pattern)


def test_dependency_kind_must_match():
    observed = MsgGraph(
        nodes=[{"id": 0, "class": "CreateFile"}, {"id": 1, "class": "WriteFile"}],
        edges=[{"from": 0, "to": 1, "dep": "handle"}],
        terminal=1,
    )
    pattern = MsgGraph(
        nodes=[{"id": 0, "class": "CreateFile"}, {"id": 1, "class": "WriteFile"}],
        edges=[{"from": 0, "to": 1, "dep": "buffer"}],
        terminal=1,
    )
    assert not match_msg(observed, pattern)


def test_table_pattern_matches_write_to_new_file_trace(kb, world):
    from rwdecept.corpus import RwGenParams, build_rw_program, victim_tree

    tree = victim_tree(1000)
    prog = build_rw_program(RwGenParams("new_file", "EC2", "standard_api", "novel", "file"), tree, seed=3)
    run = world.launch(prog, suspended=False)
    g = extract_msg(run.trace)
    assert match_msg(g, kb.msgs["write_to_new_file"])
    # the exhaustive oracle is O(n^k); confirm on the first file's event window
    head = extract_msg(run.trace[:16])
    assert match_oracle(head, kb.msgs["write_to_new_file"])


def test_matcher_agrees_with_oracle_on_random_pairs():
    rng = random.Random(2024)
    agree = 0
    for _ in range(200):
        observed = random_graph(rng, rng.randint(1, 8))
        k = rng.randint(1, 8)
        if rng.random() < 0.5 and k <= len(observed.nodes):
            # embedded sub-pattern: relabel a random induced subgraph
            ids = rng.sample(observed.node_ids(), k)
            idset = set(ids)
            remap = {oid: i for i, oid in enumerate(ids)}
            nodes = [{"id": remap[n["id"]], "class": n["class"]} for n in observed.nodes if n["id"] in idset]
            edges = [
                {"from": remap[e["from"]], "to": remap[e["to"]], "dep": e["dep"]}
                for e in observed.edges
                if e["from"] in idset and e["to"] in idset and rng.random() < 0.8
            ]
            pattern = MsgGraph(nodes=nodes, edges=edges, terminal=remap[ids[-1]])
        else:
            pattern = random_graph(rng, k)
        got = match_msg(observed, pattern)
        want = match_oracle(observed, pattern)
        assert got == want
        agree += 1
    assert agree == 200


def test_monotonicity_adding_to_observed_never_breaks_match():
    rng = random.Random(77)
    for _ in range(60):
        observed = random_graph(rng, rng.randint(2, 6))
        pattern = random_graph(rng, rng.randint(1, len(observed.nodes)))
        if not match_msg(observed, pattern):
            continue
        grown = MsgGraph(
            nodes=observed.nodes + [{"id": 100, "class": "Socket"}, {"id": 101, "class": "Send"}],
            edges=observed.edges + [{"from": 100, "to": 101, "dep": "handle"}],
            terminal=observed.terminal,
        )
        assert match_msg(grown, pattern)


def test_pattern_size_cap_enforced():
    big = random_graph(random.Random(1), 13)
    small = random_graph(random.Random(2), 3)
    with pytest.raises(KbError):
        match_msg(small, big)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_save_load_roundtrip(tmp_path, kb):
    save_kb(kb, tmp_path)
    loaded = load_kb(tmp_path)
    assert loaded.extensions == kb.extensions
    assert loaded.keywords == kb.keywords
    assert set(loaded.msgs) == set(kb.msgs)
    for name in kb.msgs:
        assert loaded.msgs[name].to_dict() == kb.msgs[name].to_dict()
    assert {s.digest for s in loaded.cfs} == {s.digest for s in kb.cfs}


def test_empty_dir_yields_defaults(tmp_path):
    loaded = load_kb(tmp_path)
    assert ".locky" in loaded.extensions
    assert "bitcoin" in loaded.keywords
    assert "transfer_key" in loaded.msgs
    assert loaded.cfs


def test_extension_without_dot_is_rejected(tmp_path):
    (tmp_path / "extensions.txt").write_text("locky\n", encoding="utf-8")
    with pytest.raises(KbError) as exc:
        load_kb(tmp_path)
    assert exc.value.code == "format"


def test_malformed_msg_names_file_and_field(tmp_path):
    msg_dir = tmp_path / "msg"
    msg_dir.mkdir()
    (msg_dir / "broken.json").write_text('{"nodes": [{"id": 0, "class": "Send"}], "edges": []}')
    with pytest.raises(KbError) as exc:
        load_kb(tmp_path)
    assert "broken.json" in str(exc.value)
    assert "terminal" in str(exc.value)


def test_comments_and_blank_lines_ignored(tmp_path):
    (tmp_path / "keywords.txt").write_text("# comment\n\nransom\nBITCOIN\n", encoding="utf-8")
    loaded = load_kb(tmp_path)
    assert loaded.keywords == {"ransom", "bitcoin"}


def test_keyword_hit_is_case_insensitive_substring(kb):
    assert kb.keyword_hit("Send 0.5 Bitcoin for decryption") in ("bitcoin", "decrypt")
    assert kb.keyword_hit("weekly project review") is None
