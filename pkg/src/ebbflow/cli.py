"""Command-line front end: ``ebbflow run | forensics | spv-fuzz``.

Exit codes: 0 all applicable checks pass, 1 a check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .checks import CHECK_NAMES, all_pass, run_checks
from .core_types import BftBlock, VoteRecord, canonical_json, hexh
from .forensics import (ForensicsError, SafetyViolationWitness, evidence_report, hotstuff_scan,
                        streamlet_attribute_evidence, streamlet_scan)
from .ledger_extraction import BlockStore, UnknownBlock
from .netsim.scenario import Scenario, ScenarioError, load_scenario
from .netsim.simulator import run
from .spv_fuzz import SpvSummary, spv_fuzz

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


@dataclass
class RunReport:
    scenarioDigest: str
    checks: dict
    forensics: dict = field(default_factory=dict)
    spv: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"scenarioDigest": self.scenarioDigest, "checks": self.checks,
                "forensics": self.forensics, "spv": self.spv}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _input_error(kind: str, msg: str) -> int:
    print(json.dumps({"error": kind, "message": msg}), file=sys.stderr)
    return EXIT_INPUT


def _load(path: str, seed: Optional[int]) -> Scenario:
    sc = load_scenario(path)
    if seed is not None:
        sc = sc.replace(seed=seed)
        sc.validate()
    return sc


def store_from_transcript(tr: dict) -> BlockStore:
    store = BlockStore()
    blocks = sorted((BftBlock.from_json(b) for b in tr.get("bftBlocks", ())), key=lambda b: b.depth)
    for b in blocks:
        store.add_bft(b)
    return store


def analyse_transcript(tr: dict, protocol: str) -> dict:
    store = store_from_transcript(tr)
    votes = [VoteRecord.from_json(v) for v in tr.get("votes", ())]
    n = int(tr.get("n") or (max((v.voter for v in votes), default=-1) + 1))
    attributed = None
    if protocol == "streamlet":
        evidence = streamlet_scan(votes)
        if tr.get("witness"):
            w = SafetyViolationWitness.from_json(tr["witness"])
            att = streamlet_attribute_evidence(w, votes, store, n)
            attributed = {e.accused for e in att}
            evidence = evidence + [e for e in att if e not in evidence]
        report = evidence_report(evidence, attributed)
    else:
        audit: list = []
        evidence = hotstuff_scan(votes, store, n, audit)
        report = evidence_report(evidence)
        report["excused"] = audit
    report["protocol"] = protocol
    return report


def cmd_run(args) -> int:
    try:
        sc = _load(args.scenario, args.seed)
    except (ScenarioError, OSError) as e:
        return _input_error("scenario", str(e))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = run(sc)
    results = run_checks(trace)
    (out / "trace.csv").write_text(trace.trace_csv())
    transcript = trace.transcript()
    (out / "transcript.json").write_text(canonical_json(transcript).decode() + "\n")
    foren = analyse_transcript(transcript, "streamlet")
    spv = spv_fuzz(sc, args.queries, sc.seed) if args.queries else SpvSummary()
    report = RunReport(hexh(sc.digest()), {k: results[k].to_json() for k in CHECK_NAMES},
                       {"accused": len(foren["accused"]), "accusedIds": foren["accused"],
                        "witness": transcript.get("witness") is not None},
                       {k: v for k, v in spv.to_json().items() if k != "misses"})
    _dump(out / "report.json", report.to_json())
    for k in CHECK_NAMES:
        print(f"{k:12s} {results[k].status:5s} {results[k].detail}")
    ok = all_pass(results) and spv.falseAccepts == 0
    return EXIT_OK if ok else EXIT_FAIL


def cmd_forensics(args) -> int:
    try:
        tr = json.loads(Path(args.transcript).read_text())
        report = analyse_transcript(tr, args.protocol)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, UnknownBlock,
            ForensicsError) as e:
        return _input_error("transcript", f"{type(e).__name__}: {e}")
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_spv_fuzz(args) -> int:
    try:
        sc = _load(args.scenario, None)
    except (ScenarioError, OSError) as e:
        return _input_error("scenario", str(e))
    summary = spv_fuzz(sc, args.queries, args.seed,
                       byzantine_share=1.0 if args.byzantine else 0.5)
    text = json.dumps(summary.to_json(), indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if summary.falseAccepts:
        slot, node, tx = summary.offenders[0]
        print(json.dumps({"error": "false-accept", "slot": slot, "node": node, "tx": tx}),
              file=sys.stderr)
        return EXIT_FAIL
    if summary.livenessMisses:
        print(json.dumps({"error": "liveness-miss", "first": summary.misses[0]}), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ebbflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate a scenario and check the ledger properties")
    r.add_argument("--scenario", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--queries", type=int, default=0, help="also run this many SPV queries")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("forensics", help="scan a vote transcript for slashable behaviour")
    f.add_argument("--transcript", required=True)
    f.add_argument("--protocol", choices=("streamlet", "hotstuff"), default="streamlet")
    f.add_argument("--out", default=None)
    f.set_defaults(func=cmd_forensics)

    s = sub.add_parser("spv-fuzz", help="random light-client queries against a replayed run")
    s.add_argument("--scenario", required=True)
    s.add_argument("--queries", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--byzantine", action="store_true", help="every query hits a lying prover")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_spv_fuzz)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
