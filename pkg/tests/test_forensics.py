import dataclasses
import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from ebbflow.bft_streamlet import Finalization, quorum
from ebbflow.core_types import BFT_GENESIS, LC_GENESIS, VoteRecord
from ebbflow.forensics import (Evidence, ForensicsError, SafetyViolationWitness, hotstuff_scan,
                               min_quorum_intersection, streamlet_attribute,
                               streamlet_attribute_evidence, streamlet_pairs_bruteforce,
                               streamlet_scan, verify_evidence)
from ebbflow.ledger_extraction import BlockStore

from helpers import bft_child


def accused_oracle(votes):
    """Independent all-pairs check, written straight from the two conditions."""
    found = set()
    for a in votes:
        for b in votes:
            if a.voter != b.voter:
                continue
            if a.epochOrView == b.epochOrView and a.block != b.block:
                found.add((a.voter, "streamlet-1"))
            if a.epochOrView < b.epochOrView and a.blockDepth > b.blockDepth:
                found.add((a.voter, "streamlet-2"))
    return found


def branch(store, epochs, parent=BFT_GENESIS.hash):
    out = []
    for e in epochs:
        blk = bft_child(store, parent, e, LC_GENESIS.hash, proposer=e % 4)
        out.append(blk)
        parent = blk.hash
    return out


def sv(voter, blk):
    return VoteRecord.streamlet(voter, blk)


# -- streamlet scan ------------------------------------------------------------------

def test_double_vote_in_one_epoch():
    s = BlockStore()
    a = bft_child(s, BFT_GENESIS.hash, 5, LC_GENESIS.hash, proposer=0)
    b = bft_child(s, BFT_GENESIS.hash, 5, LC_GENESIS.hash, proposer=1)
    ev = streamlet_scan([sv(2, a), sv(2, b), sv(1, a)])
    assert [(e.accused, e.condition) for e in ev] == [(2, "streamlet-1")]
    assert verify_evidence(ev[0], s)


def test_deeper_earlier_vote_is_condition_two():
    s = BlockStore()
    a1, a2 = branch(s, [1, 2])
    c = bft_child(s, BFT_GENESIS.hash, 4, LC_GENESIS.hash)
    ev = streamlet_scan([sv(0, a1), sv(0, a2), sv(0, c)])
    assert [(e.accused, e.condition) for e in ev] == [(0, "streamlet-2")]
    assert ev[0].votes == (sv(0, a2), sv(0, c))


def test_honest_runs_yield_no_evidence(p1_run, p2_run, attack_run):
    assert streamlet_scan(p1_run.vote_records()) == []
    assert streamlet_scan(p2_run.vote_records()) == []
    honest = set(attack_run.scenario.honest)
    assert all(e.accused not in honest for e in streamlet_scan(attack_run.vote_records()))


def test_scan_matches_oracles_on_attack_transcript(attack_run):
    votes = attack_run.vote_records()
    ev = streamlet_scan(votes)
    got = {(e.accused, e.condition) for e in ev}
    assert got == accused_oracle(votes) == streamlet_pairs_bruteforce(votes)
    assert got
    assert all(verify_evidence(e, attack_run.registry, votes) for e in ev)
    assert [(e.accused, e.condition) for e in ev] == sorted(got)


vote_st = st.tuples(st.integers(0, 5), st.integers(1, 8), st.integers(0, 2), st.integers(1, 6))


@given(st.lists(vote_st, max_size=40))
@settings(max_examples=300)
def test_scan_equals_all_pairs_on_random_transcripts(raw):
    votes = [VoteRecord(v, "streamlet", e, "generic", bytes([e, blk]) * 16, d)
             for v, e, blk, d in raw]
    ev = streamlet_scan(votes)
    assert {(e.accused, e.condition) for e in ev} == accused_oracle(votes)
    assert len(ev) == len({(e.accused, e.condition) for e in ev})


# -- attribution ---------------------------------------------------------------------

def two_chain_fixture(epochs_a, epochs_b, voters_a=(0, 1, 2), voters_b=(1, 2, 3)):
    s = BlockStore()
    A = branch(s, epochs_a)
    B = branch(s, epochs_b)
    votes = [sv(v, b) for b in A for v in voters_a] + [sv(v, b) for b in B for v in voters_b]
    fin = lambda t: Finalization(t[0].hash, t[1].hash, t[2].hash, tuple(b.epoch for b in t))
    w = SafetyViolationWitness(fin(A), fin(B), {}, 4)
    return s, votes, w


@pytest.mark.parametrize("ea,eb,cond", [
    ((1, 2, 3), (2, 3, 4), "streamlet-1"),   # e_B = e + 1
    ((2, 3, 4), (1, 3, 5), "streamlet-1"),   # e_B = e
    ((3, 4, 5), (1, 3, 6), "streamlet-1"),   # e_B = e - 1
    ((1, 2, 3), (5, 6, 7), "streamlet-2"),   # e_B > e + 1
    ((5, 6, 7), (1, 2, 3), "streamlet-2"),   # e_B < e - 1
])
def test_attribution_case_split(ea, eb, cond):
    s, votes, w = two_chain_fixture(ea, eb)
    ev = streamlet_attribute_evidence(w, votes, s)
    assert {e.accused for e in ev} == {1, 2}
    assert {e.condition for e in ev} == {cond}
    assert all(verify_evidence(e, s, votes) for e in ev)
    assert len(ev) >= math.ceil(4 / 3)


def test_attribution_on_equivocator_run(attack_run):
    votes = attack_run.vote_records()
    accused = streamlet_attribute(attack_run.witness, votes, attack_run.registry)
    adv = set(attack_run.scenario.adversaries.nodes)
    assert accused <= adv
    assert len(accused) >= math.ceil(attack_run.scenario.n / 3)
    w = SafetyViolationWitness.from_json(attack_run.witness)
    assert all(verify_evidence(e, attack_run.registry, votes)
               for e in streamlet_attribute_evidence(w, votes, attack_run.registry))


def test_attribution_needs_notarizations():
    s, votes, w = two_chain_fixture((1, 2, 3), (5, 6, 7))
    thin = [v for v in votes if v.voter != 0]  # chain A loses its quorum
    with pytest.raises(ForensicsError):
        streamlet_attribute_evidence(w, thin, s)


def test_attribution_rejects_unknown_or_consistent_witness():
    s, votes, w = two_chain_fixture((1, 2, 3), (5, 6, 7))
    with pytest.raises(ForensicsError):
        streamlet_attribute_evidence(w, votes, BlockStore())
    same = SafetyViolationWitness(w.finalizedA, w.finalizedA, {}, 4)
    with pytest.raises(ForensicsError):
        streamlet_attribute_evidence(same, votes, s)


def test_witness_json_round_trip(attack_run):
    w = SafetyViolationWitness.from_json(attack_run.witness)
    assert SafetyViolationWitness.from_json(w.to_json()) == w


@pytest.mark.parametrize("n", range(3, 31))
def test_quorum_intersection_bound(n):
    q = quorum(n)
    # fix one quorum; the other can share k members iff its q-k others fit outside
    feasible = [k for k in range(q + 1) if q - k <= n - q]
    assert min(feasible) == min_quorum_intersection(n)
    assert min_quorum_intersection(n) >= math.ceil(n / 3)
    if n <= 8:
        smallest = min(len(set(a) & set(b)) for a in itertools.combinations(range(n), q)
                       for b in itertools.combinations(range(n), q))
        assert smallest == min_quorum_intersection(n)


# -- evidence verification ------------------------------------------------------------

def mutations(e, store):
    v1, v2 = e.votes
    other_block = next(h for h in store.bftBlocks if h not in (v1.block, v2.block))
    yield dataclasses.replace(e, accused=e.accused + 1)
    yield dataclasses.replace(e, condition="streamlet-2" if e.condition == "streamlet-1" else "streamlet-1")
    for i in (0, 1):
        v = e.votes[i]
        for field, val in (("voter", v.voter + 1), ("epochOrView", v.epochOrView + 1),
                           ("block", other_block), ("blockDepth", v.blockDepth + 7)):
            votes = list(e.votes)
            votes[i] = dataclasses.replace(v, **{field: val})
            yield dataclasses.replace(e, votes=tuple(votes))


def test_every_single_field_mutation_is_rejected(attack_run):
    votes = attack_run.vote_records()
    store = attack_run.registry
    ev = streamlet_scan(votes)
    assert ev
    for e in ev:
        assert verify_evidence(e, store, votes)
        for m in mutations(e, store):
            assert not verify_evidence(m, store, votes), m


def test_fabricated_accusations_against_honest_nodes_fail(attack_run):
    votes = attack_run.vote_records()
    store = attack_run.registry
    for h in attack_run.scenario.honest:
        mine = [v for v in votes if v.voter == h]
        for a, b in itertools.product(mine, repeat=2):
            for cond in ("streamlet-1", "streamlet-2"):
                assert not verify_evidence(Evidence(h, cond, (a, b)), store, votes)


def test_mixed_voter_evidence_rejected():
    s = BlockStore()
    a = bft_child(s, BFT_GENESIS.hash, 5, LC_GENESIS.hash, proposer=0)
    b = bft_child(s, BFT_GENESIS.hash, 5, LC_GENESIS.hash, proposer=1)
    assert not verify_evidence(Evidence(1, "streamlet-1", (sv(1, a), sv(2, b))), s)
    assert not verify_evidence(Evidence(1, "bogus", (sv(1, a), sv(1, b))), s)


def test_evidence_json_round_trip(attack_run):
    for e in streamlet_scan(attack_run.vote_records()):
        assert Evidence.from_json(e.to_json()) == e


# -- hotstuff --------------------------------------------------------------------------

N = 4


def hs_store():
    s = BlockStore()
    a = branch(s, [1, 2, 3])
    c = branch(s, [4, 5])
    return s, {"A1": a[0], "A2": a[1], "A3": a[2], "C1": c[0], "C2": c[1]}


def hv(voter, view, kind, blk):
    return VoteRecord(voter, "hotstuff", view, kind, blk.hash, blk.depth)


def quorum_votes(view, kind, blk, voters=(1, 2, 3)):
    return [(v, view, kind, blk) for v in voters]


HS_FIXTURES = {
    "double prepare": ([(0, 7, "prepare", "A1"), (0, 7, "prepare", "C1")], {(0, "hotstuff-1")}),
    "repeat same vote": ([(0, 7, "prepare", "A1"), (0, 7, "prepare", "A1")], set()),
    "different types same view": ([(0, 7, "prepare", "A1"), (0, 7, "commit", "C1")], set()),
    "double commit": ([(0, 4, "commit", "A1"), (0, 4, "commit", "C2")], {(0, "hotstuff-1")}),
    "commit then conflicting prepare": ([(0, 3, "commit", "A1"), (0, 9, "prepare", "C1")],
                                        {(0, "hotstuff-2")}),
    "excused by conflicting quorum": ([(0, 3, "commit", "A1"), (0, 9, "prepare", "C1")]
                                      + quorum_votes(5, "prepare", "C2"), set()),
    "quorum for a descendant does not excuse": ([(0, 3, "commit", "A1"), (0, 9, "prepare", "C1")]
                                                + quorum_votes(5, "prepare", "A2"), {(0, "hotstuff-2")}),
    "quorum at v1 is not strictly between": ([(0, 3, "commit", "A1"), (0, 9, "prepare", "C1")]
                                             + quorum_votes(3, "prepare", "C2"), {(0, "hotstuff-2")}),
    "quorum at v2 is not strictly between": ([(0, 3, "commit", "A1"), (0, 9, "prepare", "C1")]
                                             + quorum_votes(9, "prepare", "C2"), {(0, "hotstuff-2")}),
    "sub-quorum does not excuse": ([(0, 3, "commit", "A1"), (0, 9, "prepare", "C1")]
                                   + quorum_votes(5, "prepare", "C2", (1, 2)), {(0, "hotstuff-2")}),
    "precommit quorum does not excuse": ([(0, 3, "commit", "A1"), (0, 9, "prepare", "C1")]
                                         + quorum_votes(5, "precommit", "C2"), {(0, "hotstuff-2")}),
    "prepare extends commit": ([(0, 3, "commit", "A1"), (0, 9, "prepare", "A3")], set()),
    "prepare before commit": ([(0, 2, "prepare", "C1"), (0, 6, "commit", "A1")], set()),
    "same view commit and prepare": ([(0, 5, "commit", "A1"), (0, 5, "prepare", "C1")], set()),
    "both conditions": ([(0, 2, "commit", "A1"), (0, 2, "commit", "A2"), (0, 8, "prepare", "C2")],
                        {(0, "hotstuff-1"), (0, "hotstuff-2")}),
    "two offenders": ([(0, 3, "commit", "A1"), (0, 9, "prepare", "C1"),
                       (2, 6, "prepare", "A2"), (2, 6, "prepare", "A3")],
                      {(0, "hotstuff-2"), (2, "hotstuff-1")}),
}


@pytest.mark.parametrize("name", sorted(HS_FIXTURES))
def test_hotstuff_fixtures(name):
    s, blocks = hs_store()
    raw, expected = HS_FIXTURES[name]
    votes = [hv(v, view, kind, blocks[b] if isinstance(b, str) else b)
             for v, view, kind, b in ((r[0], r[1], r[2], r[3]) for r in raw)]
    ev = hotstuff_scan(votes, s, N)
    assert {(e.accused, e.condition) for e in ev} == expected
    for e in ev:
        assert verify_evidence(e, s, votes)
        assert verify_evidence(e, s)  # context alone suffices for hotstuff-2


def test_hotstuff_audit_records_excused_pairs():
    s, b = hs_store()
    votes = [hv(0, 3, "commit", b["A1"]), hv(0, 9, "prepare", b["C1"])]
    votes += [hv(v, 5, "prepare", b["C2"]) for v in (1, 2, 3)]
    audit = []
    assert hotstuff_scan(votes, s, N, audit) == []
    assert len(audit) == 1 and audit[0]["voter"] == 0 and audit[0]["excusedBy"]["view"] == 5


def test_hotstuff_context_tampering_detected():
    s, b = hs_store()
    votes = [hv(0, 3, "commit", b["A1"]), hv(0, 9, "prepare", b["C1"])]
    (e,) = hotstuff_scan(votes, s, N)
    hidden = [hv(v, 5, "prepare", b["C2"]).to_json() for v in (1, 2, 3)]
    forged = dataclasses.replace(e, context={"n": N, "prepares": hidden})
    assert not verify_evidence(forged, s)
    assert not verify_evidence(dataclasses.replace(e, context=None), s)


def test_hotstuff_unresolvable_block_errors():
    s, b = hs_store()
    ghost = VoteRecord(0, "hotstuff", 1, "prepare", b"\x0e" * 32, 1)
    with pytest.raises(ForensicsError):
        hotstuff_scan([ghost], s, N)
