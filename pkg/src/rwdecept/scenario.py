"""Scenario execution and reporting: runs a corpus of processes under the
monitor (each in its own isolated world seeded identically), resolves
verdicts, optionally hands confirmed samples to the reset loop, and emits
deterministic machine/human reports shaped like the evaluation tables.

Wall-clock numbers are deliberately kept out of the canonical report (reports
must be byte-identical for a fixed seed); the report's timing section uses the
simulator's deterministic cost model, and real hook overhead is measured by
``overhead_probe``.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import attacker as atk
from . import resetloop
from .corpus import (
    BENIGN_KIND,
    DORMANT_KIND,
    GROUP_ENTROPY,
    GROUP_FLAG_NOTE,
    GROUP_NEVER,
    GROUP_STAGE1,
    RW_KIND,
    CorpusEntry,
    RwGenParams,
    build_benign_program,
    build_dormant_program,
    build_rw_program,
    default_rw_matrix,
    generate_corpus,
    victim_tree,
    BENIGN_PROFILES,
)
from .cryptodetect import EntropyPolicy
from .deceptor import (
    ArcPolicy,
    Monitor,
    WhitelistStore,
    whitelist_check,
    whitelist_update,
)
from .kb import KnowledgeBase, load_kb
from .simcore import Allow, SimProgram, World, derive_seed

DEFAULT_MAX_STEPS = 20_000


class ScenarioError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class ScenarioSpec:
    seed: int
    arc_mode: str = "partial"
    kb_dir: Optional[str] = None
    entropy: dict = field(default_factory=dict)  # EntropyPolicy overrides
    whitelist: Optional[dict] = None  # {"n": int, "passphrase": str}
    processes: list = field(default_factory=list)  # process descriptors
    attacker: Optional[dict] = None  # {"samples", "agents", "sim_hours", "time_scale"}
    reset: Optional[dict] = None  # {"enabled": bool, "iterations": int, "rate": float}
    max_steps: int = DEFAULT_MAX_STEPS

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "arc_mode": self.arc_mode,
            "kb_dir": self.kb_dir,
            "entropy": self.entropy,
            "whitelist": self.whitelist,
            "processes": self.processes,
            "attacker": self.attacker,
            "reset": self.reset,
            "max_steps": self.max_steps,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        doc = json.loads(text)
        if "seed" not in doc or doc["seed"] is None:
            raise ScenarioError("format", "scenario requires an explicit seed")
        return cls(
            seed=int(doc["seed"]),
            arc_mode=doc.get("arc_mode", "partial"),
            kb_dir=doc.get("kb_dir"),
            entropy=doc.get("entropy", {}) or {},
            whitelist=doc.get("whitelist"),
            processes=doc.get("processes", []),
            attacker=doc.get("attacker"),
            reset=doc.get("reset"),
            max_steps=int(doc.get("max_steps", DEFAULT_MAX_STEPS)),
        )


def default_scenario(seed: int, reset: bool = False, attacker: Optional[dict] = None) -> ScenarioSpec:
    """Full matrix (48 variants), all 12 benign profiles, one dormant."""
    processes = [{"kind": RW_KIND, "params": p.as_dict()} for p in default_rw_matrix()]
    processes += [{"kind": BENIGN_KIND, "profile": name} for name in BENIGN_PROFILES]
    processes.append({"kind": DORMANT_KIND})
    return ScenarioSpec(
        seed=seed,
        processes=processes,
        reset={"enabled": True, "iterations": 20, "rate": 1.0} if reset else None,
        attacker=attacker,
    )


def _materialize(spec: ScenarioSpec, tree: dict) -> list[CorpusEntry]:
    entries: list[CorpusEntry] = []
    rw_i = 0
    dormant_i = 0
    for desc in spec.processes:
        kind = desc.get("kind")
        if kind == RW_KIND:
            raw = dict(desc["params"])
            embed = raw.pop("embed_constants", None)
            params = RwGenParams(**raw, embed_constants=embed)
            params.validate()
            name = desc.get("name", f"rw_{rw_i:03d}_{params.label()}")
            program = build_rw_program(params, tree, derive_seed(spec.seed, rw_i))
            entries.append(CorpusEntry(name=name, kind=RW_KIND, program=program, params=params))
            rw_i += 1
        elif kind == BENIGN_KIND:
            profile = desc["profile"]
            name = desc.get("name", f"benign_{profile}")
            program = build_benign_program(profile, tree, spec.seed)
            entries.append(CorpusEntry(name=name, kind=BENIGN_KIND, program=program, profile=profile))
        elif kind == DORMANT_KIND:
            name = desc.get("name", f"dormant_{dormant_i:02d}")
            program = build_dormant_program(derive_seed(spec.seed, "dormant", dormant_i))
            entries.append(CorpusEntry(name=name, kind=DORMANT_KIND, program=program))
            dormant_i += 1
        elif kind == "program":
            text = Path(desc["path"]).read_text(encoding="utf-8")
            program = SimProgram.from_json(text)
            entries.append(
                CorpusEntry(
                    name=desc.get("name", Path(desc["path"]).stem),
                    kind=desc.get("expect", BENIGN_KIND),
                    program=program,
                )
            )
        else:
            raise ScenarioError("format", f"unknown process kind {kind!r}")
    names = [e.name for e in entries]
    if len(set(names)) != len(names):
        raise ScenarioError("format", "process names must be unique")
    return entries


class _NoopInterposer:
    """Pays the hook delivery cost, changes nothing."""

    def on_event(self, ev, world):
        return Allow()


def _fresh_world(spec_seed: int, name: str, tree: dict) -> World:
    world = World(seed=derive_seed(spec_seed, "world", name))
    for path, content in tree.items():
        world.fs.seed_file(path, content)
    return world


def _baseline_damage(tree: dict, world: World) -> int:
    return sum(
        1
        for path, content in tree.items()
        if path not in world.fs.files or world.fs.files[path].content != content
    )


def _run_unhooked(entry: CorpusEntry, spec: ScenarioSpec, tree: dict, noop_hook: bool = False) -> World:
    world = _fresh_world(spec.seed, entry.name, tree)
    run = world.launch(entry.program, suspended=True)
    if noop_hook:
        world.attach_interposer(run, _NoopInterposer())
    world.resume(run)
    world.run_to_halt(run, max_steps=spec.max_steps)
    return world


def run_scenario(spec: ScenarioSpec) -> dict:
    kb = load_kb(spec.kb_dir) if spec.kb_dir else KnowledgeBase()
    arc = ArcPolicy(spec.arc_mode)
    policy = EntropyPolicy(**spec.entropy) if spec.entropy else EntropyPolicy()
    policy.validate()
    tree = victim_tree(spec.seed)
    entries = _materialize(spec, tree)
    store = None
    if spec.whitelist:
        store = WhitelistStore(
            n_threshold=int(spec.whitelist.get("n", 3)),
            passphrase=spec.whitelist.get("passphrase", "change-me"),
        )

    processes = []
    rw_runs = {}  # name -> (entry, hooked world) for the reset phase
    for entry in entries:
        # reference run: same world seed, no hooks; used for the benign
        # equality check, corpus fidelity, and the deterministic cost baseline
        ref_world = _run_unhooked(entry, spec, tree)
        unhooked_units = ref_world.event_cost_units
        unhooked_damage = _baseline_damage(tree, ref_world)

        whitelisted = bool(store and whitelist_check(store, entry.program))
        world = _fresh_world(spec.seed, entry.name, tree)
        run = world.launch(entry.program, suspended=True)
        monitor = None
        if not whitelisted:
            monitor = Monitor(
                pid=run.pid,
                kb=kb,
                world=world,
                arc=arc,
                entropy_policy=policy,  # stateless: per-process state is in the monitor
                code_image=entry.program.code_image,
            )
            world.attach_interposer(run, monitor)
        world.resume(run)
        world.run_to_halt(run, max_steps=spec.max_steps)

        if monitor is not None and run.mode == "terminated":
            fin = monitor.finalize(world)
            verdict = fin.verdict
            files_lost = fin.files_lost
            deferred_applied = fin.deferred_applied
        elif monitor is not None:
            verdict = monitor.state.verdict  # still running: stays Monitoring
            files_lost = 0
            deferred_applied = 0
        else:
            from .deceptor import Verdict, BENIGN

            verdict = Verdict(BENIGN)
            files_lost = 0
            deferred_applied = 0

        if store is not None and not whitelisted:
            whitelist_update(store, entry.program, verdict)

        matches_unhooked = None
        if entry.kind == BENIGN_KIND:
            matches_unhooked = world.fs.snapshot() == ref_world.fs.snapshot()

        record = {
            "name": entry.name,
            "kind": entry.kind,
            "pid": run.pid,
            "verdict": verdict.kind,
            "stage": verdict.stage,
            "reason": verdict.reason,
            "files_lost": files_lost,
            "deferred_applied": deferred_applied,
            "events": run.seq,
            "steps": run.steps,
            "whitelisted": whitelisted,
            "unhooked_damage": unhooked_damage,
            "matches_unhooked": matches_unhooked,
            "cost_units": {"hooked": world.event_cost_units, "unhooked": unhooked_units},
        }
        if entry.params is not None:
            record["params"] = entry.params.as_dict()
            record["expected_group"] = entry.params.expected_group()
        processes.append(record)
        if entry.kind == RW_KIND and verdict.is_rw():
            rw_runs[entry.name] = entry

    report = {
        "spec": {
            "seed": spec.seed,
            "arc_mode": spec.arc_mode,
            "entropy": {
                "threshold": policy.threshold,
                "min_window": policy.min_window,
                "consecutive_k": policy.consecutive_k,
            },
            "max_steps": spec.max_steps,
            "process_count": len(entries),
        },
        "processes": processes,
        "aggregate": _aggregate(processes),
        "groups": _groups(processes),
        "timing": _timing(processes),
        "attacker": None,
        "reset": None,
    }

    if spec.reset and spec.reset.get("enabled"):
        report["reset"] = _reset_phase(spec, tree, rw_runs, kb)
    if spec.attacker:
        report["attacker"] = _attacker_phase(spec)
    return report


def _aggregate(processes: list) -> dict:
    rw = [p for p in processes if p["kind"] == RW_KIND]
    benign = [p for p in processes if p["kind"] == BENIGN_KIND]
    dormant = [p for p in processes if p["kind"] == DORMANT_KIND]
    rw_detected = sum(1 for p in rw if p["verdict"] == "Ransomware")
    benign_fp = sum(1 for p in benign if p["verdict"] == "Ransomware")
    lost = [p["files_lost"] for p in rw]
    return {
        "rw_total": len(rw),
        "rw_detected": rw_detected,
        "rw_undetected": len(rw) - rw_detected,
        "benign_total": len(benign),
        "benign_fp": benign_fp,
        "benign_vfs_matches": sum(1 for p in benign if p["matches_unhooked"]),
        "dormant_total": len(dormant),
        "dormant_monitoring": sum(1 for p in dormant if p["verdict"] == "Monitoring"),
        "avg_files_lost": round(sum(lost) / len(lost), 4) if lost else 0.0,
        "max_files_lost": max(lost) if lost else 0,
    }


_REASON_GROUP = {
    "rw_extension": GROUP_STAGE1,
    "rename_rw_extension": GROUP_STAGE1,
    "ransom_note": GROUP_FLAG_NOTE,
    "wallpaper_note": GROUP_FLAG_NOTE,
    "entropy_confirmed": GROUP_ENTROPY,
}

GROUP_DESCRIPTIONS = {
    GROUP_STAGE1: "CreateFile/rename with known RW extension",
    GROUP_FLAG_NOTE: "Encryption, file deletion or overwrite, ransom note",
    GROUP_ENTROPY: "High entropy",
    GROUP_NEVER: "Never reached encryption",
}


def _groups(processes: list) -> dict:
    groups: dict = {
        g: {"description": GROUP_DESCRIPTIONS[g], "count": 0, "files_lost_total": 0, "files_lost_max": 0}
        for g in (GROUP_STAGE1, GROUP_FLAG_NOTE, GROUP_ENTROPY, GROUP_NEVER)
    }
    for p in processes:
        if p["kind"] == DORMANT_KIND and p["verdict"] == "Monitoring":
            groups[GROUP_NEVER]["count"] += 1
            continue
        if p["kind"] != RW_KIND:
            continue
        g = _REASON_GROUP.get(p["reason"])
        if g is None:
            continue
        row = groups[g]
        row["count"] += 1
        row["files_lost_total"] += p["files_lost"]
        row["files_lost_max"] = max(row["files_lost_max"], p["files_lost"])
    for row in groups.values():
        row["files_lost_avg"] = (
            round(row["files_lost_total"] / row["count"], 4) if row["count"] else 0.0
        )
    return groups


def _timing(processes: list) -> dict:
    # overhead is meaningful only for benign programs: a contained RW run
    # terminates early, which would show up as negative "overhead"
    benign = [p for p in processes if p["kind"] == BENIGN_KIND]
    hooked = sum(p["cost_units"]["hooked"] for p in benign)
    unhooked = sum(p["cost_units"]["unhooked"] for p in benign)
    per_process = [
        round(p["cost_units"]["hooked"] / p["cost_units"]["unhooked"] - 1.0, 6)
        for p in benign
        if p["cost_units"]["unhooked"]
    ]
    return {
        "model": "deterministic cost units (instruction=4, api=16+bytes/64, hook delivery=1)",
        "hooked_units": hooked,
        "unhooked_units": unhooked,
        "overhead_ratio": round(hooked / unhooked - 1.0, 6) if unhooked else 0.0,
        "max_process_overhead": max(per_process) if per_process else 0.0,
    }


def _reset_phase(spec: ScenarioSpec, tree: dict, rw_runs: dict, kb: KnowledgeBase) -> dict:
    iterations = int(spec.reset.get("iterations", 20))
    rate = float(spec.reset.get("rate", 1.0))
    db = atk.AttackerDb()
    out = {"samples": {}, "db_entries": 0}
    for name, entry in sorted(rw_runs.items()):
        # deceptive-environment replay: full infection pass with no containment
        world = _fresh_world(spec.seed, f"reset:{name}", tree)
        run = world.launch(entry.program, suspended=True)
        world.resume(run)
        world.run_to_halt(run, max_steps=spec.max_steps)
        try:
            sba = resetloop.analyze_trace(run)
            chain = resetloop.classify_chain(sba, kb)
            if chain == resetloop.UNKNOWN:
                out["samples"][name] = {"chain": chain, "skipped": "no key-transfer chain"}
                continue
            cfg = resetloop.build_config(sba, chain, kb)
            patched = resetloop.apply_patches(entry.program, cfg)
            loop = resetloop.run_loop(
                patched,
                db,
                {"iterations": iterations},
                sample_id=name,
                seed=derive_seed(spec.seed, "reset", name),
                rate=rate,
            )
            out["samples"][name] = {
                "chain": chain,
                "iterations": loop.iterations,
                "registrations": loop.db_delta_entries,
                "unique_victim_ids": len(set(loop.victim_ids)),
                "unique_keys": len(set(loop.keys)),
            }
        except resetloop.ResetError as e:
            out["samples"][name] = {"chain": "Unknown", "skipped": str(e)}
    out["db_entries"] = len(db)
    return out


def _attacker_phase(spec: ScenarioSpec) -> dict:
    conf = spec.attacker
    samples = conf.get("samples", list(resetloop.RATE_PROFILES))
    agents = int(conf.get("agents", 50))
    sim_hours = float(conf.get("sim_hours", 24.0))
    time_scale = float(conf.get("time_scale", 3600.0))
    db = atk.AttackerDb(keep_payloads=False)
    for sample in samples:
        resetloop.depletion_bench(
            sample,
            agents=agents,
            sim_hours=sim_hours,
            time_scale=time_scale,
            seed=spec.seed,
            db=db,
        )
    rep = atk.depletion_report(db)
    rep["meta"] = {
        "agents": agents,
        "sim_hours": sim_hours,
        "time_scale": time_scale,
        "wall_budget_seconds": sim_hours * 3600.0 / time_scale,
    }
    return rep


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def emit_report(report: dict, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    if fmt != "table":
        raise ScenarioError("format", f"unknown report format {fmt!r}")
    lines = []
    agg = report["aggregate"]
    lines.append("== Identification summary ==")
    lines.append(
        f"ransomware: {agg['rw_detected']}/{agg['rw_total']} detected"
        f" | benign false positives: {agg['benign_fp']}/{agg['benign_total']}"
        f" | dormant: {agg['dormant_total']}"
    )
    lines.append("")
    lines.append("== Detection stages vs file loss ==")
    lines.append(f"{'samples':>8}  {'files lost (avg/max)':>22}  description")
    for g in (GROUP_STAGE1, GROUP_FLAG_NOTE, GROUP_ENTROPY, GROUP_NEVER):
        row = report["groups"][g]
        loss = f"{row['files_lost_avg']}/{row['files_lost_max']}" if g != GROUP_NEVER else "--"
        lines.append(f"{row['count']:>8}  {loss:>22}  {row['description']}")
    timing = report["timing"]
    lines.append("")
    lines.append(f"cost-model overhead: {timing['overhead_ratio'] * 100:.2f}%")
    if report.get("attacker"):
        atk_rep = report["attacker"]
        lines.append("")
        lines.append("== Attacker-side DB depletion (1h / 12h / 24h) ==")
        lines.append(f"{'sample':>8}  {'entries':>30}  {'MB':>26}")
        for sample in sorted(atk_rep["samples"]):
            row = atk_rep["samples"][sample]
            entries = " / ".join(f"{e:,}" for e in row["entries"])
            mbs = " / ".join(f"{m:.1f}" for m in row["mb"])
            lines.append(f"{sample:>8}  {entries:>30}  {mbs:>26}")
    if report.get("reset"):
        lines.append("")
        lines.append("== Reset loop ==")
        for name in sorted(report["reset"]["samples"]):
            row = report["reset"]["samples"][name]
            if "skipped" in row:
                lines.append(f"  {name}: {row['chain']} skipped ({row['skipped']})")
            else:
                lines.append(
                    f"  {name}: {row['chain']} x{row['iterations']} iterations,"
                    f" {row['unique_victim_ids']} unique ids"
                )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# wall-clock overhead probe
# ---------------------------------------------------------------------------

def overhead_probe(seed: int, repeats: int = 20, profiles: Optional[list] = None) -> dict:
    """Median wall-clock slowdown of the full monitor versus a no-op hook over
    the benign corpus. A proxy measurement: the simulator's dispatch stands in
    for syscall cost, so this bounds hook bookkeeping, not real OS overhead."""
    tree = victim_tree(seed)
    names = profiles or list(BENIGN_PROFILES)
    entries = [
        CorpusEntry(name=f"benign_{p}", kind=BENIGN_KIND, program=build_benign_program(p, tree, seed), profile=p)
        for p in names
    ]
    kb = KnowledgeBase()

    def one_pass(hooked: bool) -> float:
        start = time.perf_counter_ns()
        for entry in entries:
            world = _fresh_world(seed, entry.name, tree)
            run = world.launch(entry.program, suspended=True)
            if hooked:
                world.attach_interposer(
                    run,
                    Monitor(pid=run.pid, kb=kb, world=world, code_image=entry.program.code_image),
                )
            else:
                world.attach_interposer(run, _NoopInterposer())
            world.resume(run)
            world.run_to_halt(run)
        return time.perf_counter_ns() - start

    one_pass(True)  # warmup (JIT, allocator)
    one_pass(False)
    samples = []
    for _ in range(repeats):
        t_noop = one_pass(False)
        t_mon = one_pass(True)
        samples.append(t_mon / t_noop - 1.0)
    return {
        "median_overhead": statistics.median(samples),
        "samples": samples,
        "repeats": repeats,
    }
