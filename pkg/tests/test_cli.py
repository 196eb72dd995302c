import json
import subprocess
import sys

import pytest

from ebbflow.checks import CHECK_NAMES
from ebbflow.cli import analyse_transcript, main
from ebbflow.netsim import Adversary, Scenario
from ebbflow.netsim.bundled import bundled_path, tx_workload

from test_forensics import HS_FIXTURES, hs_store, hv


def write_scenario(tmp_path, **kw):
    base = dict(name="cli", n=4, slots=100, lotteryP=0.1, k=2, epochLen=4,
                txSchedule=tx_workload(0, 60, 6))
    base.update(kw)
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(Scenario(**base).to_json()))
    return path


def test_run_writes_outputs_and_passes(tmp_path, capsys):
    sc = write_scenario(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(sc), "--out", str(out), "--queries", "50"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["checks"]) == {"prefix", "p1-safety", "p1-liveness", "p2-safety",
                                     "p2-liveness", "catchup"}
    assert all(c["status"] in ("pass", "n.a.") for c in report["checks"].values())
    assert report["spv"]["queries"] == 50 and report["spv"]["falseAccepts"] == 0
    assert (out / "trace.csv").read_text().startswith("slot,node,lenFin,lenDa,lcTip,bftTip\n")
    tr = json.loads((out / "transcript.json").read_text())
    assert {"votes", "bftBlocks", "lcBlocks", "envelopes"} <= set(tr)
    printed = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in printed] == list(CHECK_NAMES)


def test_run_is_byte_identical_and_seed_overrides(tmp_path):
    sc = write_scenario(tmp_path)
    for d in ("a", "b", "c"):
        args = ["run", "--scenario", str(sc), "--out", str(tmp_path / d)]
        assert main(args + (["--seed", "5"] if d == "c" else [])) == 0
    for f in ("trace.csv", "transcript.json", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "c" / "trace.csv").read_bytes()


@pytest.mark.parametrize("payload", ['{"n": 0, "slots": 5}', "not json", '{"slots": 3}'])
def test_bad_scenario_exits_2_with_error_json(tmp_path, capsys, payload):
    path = tmp_path / "bad.json"
    path.write_text(payload)
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "scenario" and err["message"]


def test_missing_scenario_file_exits_2(tmp_path, capsys):
    assert main(["spv-fuzz", "--scenario", str(tmp_path / "nope.json")]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "scenario"


def test_forensics_on_attack_transcript(tmp_path, attack_run):
    tpath = tmp_path / "t.json"
    tpath.write_text(attack_run.transcript_json())
    out = tmp_path / "f.json"
    assert main(["forensics", "--transcript", str(tpath), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    adv = sorted(attack_run.scenario.adversaries.nodes)
    assert set(rep["accused"]) <= set(adv) and len(rep["accused"]) >= 2
    assert rep["attributed"] and set(rep["attributed"]) <= set(adv)


def test_forensics_on_honest_transcript(tmp_path, p2_run, capsys):
    tpath = tmp_path / "t.json"
    tpath.write_text(p2_run.transcript_json())
    assert main(["forensics", "--transcript", str(tpath)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["evidence"] == [] and rep["accused"] == []


def test_forensics_hotstuff_fixture(tmp_path, capsys):
    store, blocks = hs_store()
    raw, expected = HS_FIXTURES["two offenders"]
    votes = [hv(v, view, kind, blocks[b]) for v, view, kind, b in raw]
    tr = {"n": 4, "votes": [v.to_json() for v in votes],
          "bftBlocks": [b.to_json() for b in store.bftBlocks.values()]}
    tpath = tmp_path / "hs.json"
    tpath.write_text(json.dumps(tr))
    assert main(["forensics", "--transcript", str(tpath), "--protocol", "hotstuff"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert {(e["accused"], e["condition"]) for e in rep["evidence"]} == expected
    assert analyse_transcript(tr, "hotstuff")["accused"] == [0, 2]


@pytest.mark.parametrize("text", ["{", '{"votes": [{"voter": 1}]}', '{"votes": [], "bftBlocks": [{}]}'])
def test_forensics_bad_transcript_exits_2(tmp_path, capsys, text):
    tpath = tmp_path / "bad.json"
    tpath.write_text(text)
    assert main(["forensics", "--transcript", str(tpath)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "transcript"


def test_forensics_unresolvable_hotstuff_block_exits_2(tmp_path, capsys):
    store, blocks = hs_store()
    vote = hv(0, 1, "prepare", blocks["A1"]).to_json()
    tpath = tmp_path / "t.json"
    tpath.write_text(json.dumps({"n": 4, "votes": [vote], "bftBlocks": []}))
    assert main(["forensics", "--transcript", str(tpath), "--protocol", "hotstuff"]) == 2


def test_spv_fuzz_subcommand(tmp_path):
    sc = write_scenario(tmp_path, slots=150, adversaries=Adversary(frozenset({3}), "double-spender"))
    out = tmp_path / "spv.json"
    assert main(["spv-fuzz", "--scenario", str(sc), "--queries", "200", "--seed", "3",
                 "--byzantine", "--out", str(out)]) == 0
    s = json.loads(out.read_text())
    assert s["queries"] == 200 and s["byzantineQueries"] == 200 and s["falseAccepts"] == 0


def test_entry_point_runs_as_module(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ebbflow.cli", "forensics", "--transcript",
                          str(tmp_path / "missing.json")], capture_output=True, text=True)
    assert res.returncode == 2
    assert json.loads(res.stderr)["error"] == "transcript"


def test_bundled_scenarios_ship_with_the_package():
    for name in ("p1_partition", "p2_baseline", "attack_equivocate"):
        assert json.loads(bundled_path(name).read_text())["name"] == name
