"""Command-line front end: knowledge-base management, corpus generation,
scenario execution, report rendering, and the attacker-depletion benchmark.

Exit code of ``run`` is 0 only when every ransomware variant was detected and
no benign program was misclassified.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import attacker as atk
from . import resetloop
from .corpus import BENIGN_PROFILES, default_rw_matrix
from .kb import KnowledgeBase, load_kb, save_kb
from .scenario import ScenarioSpec, default_scenario, emit_report, run_scenario


def _cmd_kb(args) -> int:
    directory = Path(args.dir)
    if args.action == "init":
        if directory.exists() and any(directory.iterdir()) and not args.force:
            print(f"error: {directory} is not empty (use --force to overwrite)", file=sys.stderr)
            return 2
        save_kb(KnowledgeBase(), directory)
        print(f"knowledge base written to {directory}")
        return 0
    kb = load_kb(directory) if directory.exists() else KnowledgeBase()
    print(f"extensions ({len(kb.extensions)}): {', '.join(sorted(kb.extensions))}")
    print(f"keywords   ({len(kb.keywords)}): {', '.join(sorted(kb.keywords))}")
    print(f"msg patterns: {', '.join(sorted(kb.msgs))}")
    print(f"cfs signatures: {', '.join(sig.meta['library_name'] for sig in kb.cfs)}")
    return 0


def _cmd_corpus_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .corpus import generate_corpus

    matrix = default_rw_matrix()
    if args.variants < len(matrix):
        matrix = matrix[: args.variants]
    entries = generate_corpus(args.seed, rw_params=matrix)
    programs_dir = out / "programs"
    programs_dir.mkdir(exist_ok=True)
    manifest = []
    for entry in entries:
        fname = f"{entry.name}.json"
        (programs_dir / fname).write_text(entry.program.to_json(), encoding="utf-8")
        manifest.append(
            {
                "name": entry.name,
                "kind": entry.kind,
                "program": f"programs/{fname}",
                "params": entry.params.as_dict() if entry.params else None,
                "profile": entry.profile,
            }
        )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    print(f"{len(entries)} programs written to {out} (seed={args.seed})")
    return 0


def _cmd_run(args) -> int:
    if args.scenario:
        spec = ScenarioSpec.from_json(Path(args.scenario).read_text(encoding="utf-8"))
    else:
        spec = default_scenario(args.seed if args.seed is not None else 0)
    if args.seed is not None:
        spec.seed = args.seed
    if args.arc:
        spec.arc_mode = args.arc
    report = run_scenario(spec)
    text = emit_report(report, "json")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"report written to {args.out}")
    else:
        print(text, end="")
    agg = report["aggregate"]
    ok = agg["benign_fp"] == 0 and agg["rw_detected"] == agg["rw_total"]
    print(
        f"detected {agg['rw_detected']}/{agg['rw_total']} ransomware,"
        f" {agg['benign_fp']} benign false positives",
        file=sys.stderr,
    )
    return 0 if ok else 1


def _cmd_report(args) -> int:
    report = json.loads(Path(args.input).read_text(encoding="utf-8"))
    print(emit_report(report, args.format), end="")
    return 0


def _cmd_reset_bench(args) -> int:
    db = atk.AttackerDb(keep_payloads=False)
    samples = args.sample.split(",") if args.sample else list(resetloop.RATE_PROFILES)
    for sample in samples:
        resetloop.depletion_bench(
            sample,
            agents=args.agents,
            sim_hours=args.sim_hours,
            time_scale=args.time_scale,
            seed=args.seed,
            db=db,
        )
    report = atk.depletion_report(db)
    report["meta"] = {
        "agents": args.agents,
        "sim_hours": args.sim_hours,
        "time_scale": args.time_scale,
        "wall_budget_seconds": args.sim_hours * 3600.0 / args.time_scale,
        "seed": args.seed,
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"depletion report written to {args.out}")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwdecept",
        description="ransomware deception sandbox: identify, contain, and deplete",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_kb = sub.add_parser("kb", help="manage the knowledge base directory")
    p_kb.add_argument("action", choices=("init", "show"))
    p_kb.add_argument("--dir", required=True)
    p_kb.add_argument("--force", action="store_true")
    p_kb.set_defaults(func=_cmd_kb)

    p_corpus = sub.add_parser("corpus", help="corpus generation")
    corpus_sub = p_corpus.add_subparsers(dest="corpus_action", required=True)
    p_gen = corpus_sub.add_parser("gen", help="generate the synthetic corpus")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--variants", type=int, default=len(default_rw_matrix()))
    p_gen.set_defaults(func=_cmd_corpus_gen)

    p_run = sub.add_parser("run", help="run a scenario end to end")
    p_run.add_argument("--scenario", help="scenario spec JSON (defaults to the full matrix)")
    p_run.add_argument("--out", help="write the JSON report here")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--arc", choices=("off", "partial", "full"), default=None)
    p_run.set_defaults(func=_cmd_run)

    p_report = sub.add_parser("report", help="render a report")
    p_report.add_argument("--in", dest="input", required=True)
    p_report.add_argument("--format", choices=("json", "table"), default="table")
    p_report.set_defaults(func=_cmd_report)

    p_bench = sub.add_parser("reset-bench", help="attacker depletion benchmark")
    p_bench.add_argument("--sample", help="comma-separated sample ids (default: all)")
    p_bench.add_argument("--agents", type=int, default=50)
    p_bench.add_argument("--sim-hours", type=float, default=24.0)
    p_bench.add_argument("--time-scale", type=float, default=3600.0)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out")
    p_bench.set_defaults(func=_cmd_reset_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
