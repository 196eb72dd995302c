import json

import pytest
from hypothesis import given, settings, strategies as st

from ebbflow.core_types import Transaction
from ebbflow.netsim import (Adversary, Bounds, Partition, Scenario, ScenarioError, TxInjection,
                            delivery_slot, load_scenario, run)
from ebbflow.netsim.bundled import BUNDLED, load_bundled, tx_workload
from ebbflow.node import LcBlockMsg, ProposalMsg, VoteMsg


def small(**kw):
    base = dict(n=4, slots=120, lotteryP=0.1, k=2, epochLen=4, delta=2,
                txSchedule=tx_workload(0, 100, 10))
    base.update(kw)
    return Scenario(**base)


# -- run basics ------------------------------------------------------------------

def test_zero_slots_gives_empty_traces():
    tr = run(Scenario(n=3, slots=0))
    assert tr.rows == [] and tr.envelopes == [] and tr.votes == []
    assert tr.trace_csv().splitlines() == ["slot,node,lenFin,lenDa,lcTip,bftTip"]
    assert tr.witness is None


def test_same_scenario_gives_byte_identical_output():
    sc = small(seed=4, adversaries=Adversary(frozenset({3}), "withholder", {"release_slot": 60}))
    a, b = run(sc), run(sc)
    assert a.trace_csv() == b.trace_csv()
    assert a.transcript_json() == b.transcript_json()


def test_different_seed_changes_the_run():
    assert run(small(seed=1)).trace_csv() != run(small(seed=2)).trace_csv()


def test_one_row_per_node_per_slot():
    sc = small()
    tr = run(sc)
    assert len(tr.rows) == sc.n * sc.slots
    for s in (0, 57, sc.slots - 1):
        assert [(r.slot, r.node) for r in tr.rows_at(s)] == [(s, i) for i in range(sc.n)]


# -- delivery contract ---------------------------------------------------------------

@given(st.integers(0, 300), st.integers(0, 5), st.integers(0, 5), st.integers(0, 50),
       st.integers(1, 4), st.integers(0, 200), st.integers(0, 10**6))
@settings(max_examples=300)
def test_delivery_slot_contract(send, a, b, seq, delta, gst, seed):
    sc = Scenario(n=6, slots=400, delta=delta, gst=gst, epochLen=2 * delta, seed=seed)
    d = delivery_slot(sc, a, b, send, seq)
    assert d >= send + 1
    if send >= gst:
        assert d <= send + delta
    else:
        assert d <= max(send + 1, gst + delta)


@given(st.integers(0, 120), st.integers(0, 3), st.integers(0, 3), st.integers(0, 9))
@settings(max_examples=300)
def test_partition_holds_cross_cell_messages(send, a, b, seq):
    p = Partition(40, 100, ((0, 1), (2, 3)))
    sc = Scenario(n=4, slots=200, delta=2, gst=100, partitions=(p,))
    d = delivery_slot(sc, a, b, send, seq)
    assert d >= send + 1
    if p.cell_of(a) != p.cell_of(b):
        assert not p.active(d)
        if p.active(send):
            assert p.endSlot <= d <= p.endSlot + sc.delta


def test_bundled_envelopes_respect_contract(runs):
    for name, tr in runs.items():
        sc = tr.scenario
        for env in tr.envelopes:
            assert env.deliverSlot >= env.sendSlot + 1
            p = sc.partition_at(env.deliverSlot)
            if p is not None and env.deliverSlot != env.sendSlot + 1:  # bypass is next-slot
                assert p.cell_of(env.sender) == p.cell_of(env.to)
            if env.sendSlot >= sc.gst and sc.partition_at(env.sendSlot) is None:
                assert env.deliverSlot <= env.sendSlot + sc.delta


def test_sleeping_nodes_send_nothing(p2_run):
    sc = p2_run.scenario
    for env in p2_run.envelopes:
        assert sc.awake(env.sender, env.sendSlot)
    for r in p2_run.rows:
        assert r.awake == sc.awake(r.node, r.slot)


def test_sleeper_catches_up_after_waking(p2_run):
    sc = p2_run.scenario
    end = sc.slots - 1
    lens = {r.node: r.lenDa for r in p2_run.rows_at(end) if r.node in sc.honest}
    assert max(lens.values()) - min(lens.values()) <= 5


def test_no_message_dropped():
    sc = small(seed=3)
    tr = run(sc)
    delivered = [e for e in tr.envelopes
                 if isinstance(e.payload, LcBlockMsg) and e.deliverSlot < sc.slots]
    assert delivered
    for e in delivered:
        assert e.payload.block.hash in tr.nodes[e.to].store.lcBlocks


# -- scenario validation and files ------------------------------------------------------

@pytest.mark.parametrize("kw,msg", [
    (dict(n=0), "n must"),
    (dict(delta=0), "delta"),
    (dict(epochLen=3), "epochLen"),
    (dict(lotteryP=1.5), "probability"),
    (dict(adversaries=Adversary(frozenset({1}), "nonsense")), "unknown strategy"),
    (dict(adversaries=Adversary(frozenset({1}), "streamlet-equivocator")), "more than n/3"),
    (dict(adversaries=Adversary(frozenset({1})), sleep={1: ((0, 5),)}, got=10), "cannot sleep"),
    (dict(sleep={0: ((0, 50),)}, got=10), "awake from got"),
    (dict(partitions=(Partition(5, 50, ((0, 1), (2, 3))),), gst=20), "end by gst"),
    (dict(partitions=(Partition(5, 15, ((0, 1), (1, 2))),), gst=20), "disjoint"),
    (dict(partitions=(Partition(5, 15, ((0,),)), Partition(10, 18, ((1,),))), gst=20), "overlap"),
    (dict(txSchedule=(TxInjection(1, None, Transaction.mint("a", 1)),
                      TxInjection(2, None, Transaction.mint("a", 2)))), "unique"),
    (dict(txSchedule=(TxInjection(1, (9,), Transaction.mint("a", 1)),)), "target"),
])
def test_malformed_scenarios_rejected(kw, msg):
    with pytest.raises(ScenarioError, match=msg):
        small(**kw).validate()
    with pytest.raises(ScenarioError):
        run(small(**kw))


def test_json_round_trip_and_digest(tmp_path):
    sc = small(name="rt", seed=7, sleep={0: ((3, 9),)}, got=20,
               partitions=(Partition(2, 10, ((0, 1), (2, 3))),), gst=30,
               bounds=Bounds(50, 60, 70))
    path = tmp_path / "s.json"
    path.write_text(json.dumps(sc.to_json()))
    back = load_scenario(path)
    assert back == sc and back.digest() == sc.digest()
    assert sc.replace(seed=8).digest() != sc.digest()


@pytest.mark.parametrize("text", ["{", "[]", '{"n": 3}', '{"n": "x", "slots": 1}'])
def test_bad_json_is_a_scenario_error(tmp_path, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_bundled_files_match_builders():
    from ebbflow.netsim.bundled import BUILDERS
    for name in BUNDLED:
        assert load_bundled(name) == BUILDERS[name]()


# -- strategies ----------------------------------------------------------------------

def adversarial_sends(tr):
    adv = tr.scenario.adversaries.nodes
    return [e for e in tr.envelopes if e.sender in adv]


def test_honest_but_silent_never_speaks():
    tr = run(small(adversaries=Adversary(frozenset({0}), "honest-but-silent")))
    assert adversarial_sends(tr) == []


def test_withholder_keeps_lc_blocks_among_adversaries_until_release():
    release = 70
    sc = small(n=5, adversaries=Adversary(frozenset({3, 4}), "withholder", {"release_slot": release}),
               lotteryP=0.2)
    tr = run(sc)
    sends = adversarial_sends(tr)
    early = [e for e in sends if e.sendSlot < release and e.sendSlot != release]
    assert early and all(e.to in sc.adversaries.nodes for e in early)
    late = [e for e in sends if e.sendSlot >= release]
    assert any(e.to not in sc.adversaries.nodes for e in late)
    assert not any(isinstance(e.payload, (ProposalMsg, VoteMsg)) for e in sends)


def test_private_miner_publishes_whole_fork_at_once(p2_run):
    sends = adversarial_sends(p2_run)
    assert sends
    assert all(isinstance(e.payload, LcBlockMsg) for e in sends)
    slots = {e.sendSlot for e in sends}
    blocks = {e.payload.block.hash for e in sends}
    assert len(blocks) > len(slots)  # forks are released in batches


def test_double_spender_injects_conflicts():
    sc = small(n=5, adversaries=Adversary(frozenset({4}), "double-spender"), lotteryP=0.15)
    tr = run(sc)
    ds = {e.payload.tx.id for e in adversarial_sends(tr) if e.payload.kind == "tx"}
    assert ds and all(x.startswith("ds-") for x in ds)
    # conflicting spends never both land in an honest ledger
    for nd in tr.nodes[:4]:
        fin, da = nd.read_ledgers()
        for led in (fin, da):
            ids = set(led.ids)
            assert not any(f"ds-{i}" in ids for i in ids)


def test_equivocator_breaks_streamlet_safety(attack_run):
    assert attack_run.witness is not None
    w = attack_run.witness
    assert w["finalizedA"]["B2"] != w["finalizedB"]["B2"]


def test_unknown_strategy_in_adversary_step():
    from ebbflow.netsim.adversary import make_strategy
    with pytest.raises((ValueError, KeyError)):
        make_strategy(None, "nope", (), {})
