"""Slashing-condition scanners and safety-violation attribution.

Streamlet conditions
    streamlet-1  two votes in the same epoch for distinct blocks
    streamlet-2  a vote in an earlier epoch for a strictly deeper block than
                 a vote in a later epoch
HotStuff conditions
    hotstuff-1   two votes of the same type in the same view for distinct blocks
    hotstuff-2   commit for B1 in view v1, then prepare for a conflicting B2 in
                 v2 > v1, unless some view strictly between saw a prepare
                 quorum for a block conflicting with B1

Signatures are a simulator guarantee, so "the validator really cast this
vote" is checked by membership in the transcript when one is supplied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .bft_streamlet import Finalization, quorum
from .core_types import Hash, NodeId, VoteRecord, hexh, unhex
from .ledger_extraction import BlockStore, UnknownBlock

CONDITIONS = ("streamlet-1", "streamlet-2", "hotstuff-1", "hotstuff-2")


class ForensicsError(ValueError):
    """Witness or transcript cannot support the requested analysis."""


@dataclass(frozen=True)
class Evidence:
    accused: NodeId
    condition: str
    votes: tuple[VoteRecord, VoteRecord]
    context: Optional[Mapping] = None

    def to_json(self) -> dict:
        d = {"accused": self.accused, "condition": self.condition,
             "votes": [v.to_json() for v in self.votes]}
        if self.context is not None:
            d["context"] = self.context
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "Evidence":
        v1, v2 = (VoteRecord.from_json(v) for v in d["votes"])
        return cls(int(d["accused"]), d["condition"], (v1, v2), d.get("context"))


# -- streamlet ---------------------------------------------------------------------

def streamlet_violates(condition: str, v1: VoteRecord, v2: VoteRecord) -> bool:
    """The raw pair predicate, ordered: ``v1`` is the earlier vote."""
    if v1.voter != v2.voter or v1.protocol != "streamlet" or v2.protocol != "streamlet":
        return False
    if condition == "streamlet-1":
        return v1.epochOrView == v2.epochOrView and v1.block != v2.block
    if condition == "streamlet-2":
        return v1.epochOrView < v2.epochOrView and v1.blockDepth > v2.blockDepth
    return False


def streamlet_scan(transcript: Iterable[VoteRecord]) -> list[Evidence]:
    """At most one Evidence per (validator, condition), ordered by both."""
    by_voter: dict[NodeId, list[VoteRecord]] = {}
    for v in transcript:
        if v.protocol == "streamlet":
            by_voter.setdefault(v.voter, []).append(v)
    out: list[Evidence] = []
    for voter in sorted(by_voter):
        votes = sorted(set(by_voter[voter]), key=lambda v: (v.epochOrView, v.block, v.blockDepth))
        c1 = None
        for a, b in zip(votes, votes[1:]):
            if a.epochOrView == b.epochOrView and a.block != b.block:
                c1 = (a, b)
                break
        if c1:
            out.append(Evidence(voter, "streamlet-1", c1))
        # deepest vote from any strictly earlier epoch, tracked epoch by epoch
        best: Optional[VoteRecord] = None
        c2 = None
        i = 0
        while i < len(votes) and c2 is None:
            j = i
            while j < len(votes) and votes[j].epochOrView == votes[i].epochOrView:
                if best is not None and best.blockDepth > votes[j].blockDepth:
                    c2 = (best, votes[j])
                    break
                j += 1
            for v in votes[i:j]:
                if best is None or v.blockDepth > best.blockDepth:
                    best = v
            i = j
        if c2:
            out.append(Evidence(voter, "streamlet-2", c2))
    return out


def streamlet_pairs_bruteforce(transcript: Sequence[VoteRecord]) -> set[tuple[NodeId, str]]:
    """Exhaustive O(V^2) oracle: every (validator, condition) with a violating pair."""
    found = set()
    votes = list(transcript)
    for a in votes:
        for b in votes:
            for cond in ("streamlet-1", "streamlet-2"):
                if streamlet_violates(cond, a, b):
                    found.add((a.voter, cond))
    return found


# -- safety-violation witnesses ------------------------------------------------------

@dataclass(frozen=True)
class SafetyViolationWitness:
    finalizedA: Finalization
    finalizedB: Finalization
    notarizations: Mapping[Hash, frozenset] = field(default_factory=dict)
    n: int = 0

    def to_json(self) -> dict:
        return {"n": self.n, "finalizedA": self.finalizedA.to_json(),
                "finalizedB": self.finalizedB.to_json(),
                "notarizations": {hexh(h): sorted(v) for h, v in sorted(self.notarizations.items())}}

    @classmethod
    def from_json(cls, d: Mapping) -> "SafetyViolationWitness":
        def fin(x):
            return Finalization(unhex(x["B1"]), unhex(x["B2"]), unhex(x["B3"]), tuple(x["epochs"]))
        return cls(fin(d["finalizedA"]), fin(d["finalizedB"]),
                   {unhex(h): frozenset(v) for h, v in d.get("notarizations", {}).items()},
                   int(d.get("n", 0)))


def voters_by_block(transcript: Iterable[VoteRecord]) -> dict[Hash, set[NodeId]]:
    out: dict[Hash, set[NodeId]] = {}
    for v in transcript:
        if v.protocol == "streamlet":
            out.setdefault(v.block, set()).add(v.voter)
    return out


def make_witness(fa: Finalization, fb: Finalization, transcript: Sequence[VoteRecord],
                 store: BlockStore) -> dict:
    n = 0
    voters = voters_by_block(transcript)
    blocks = {fa.b1, fa.b2, fa.b3, fb.b1, fb.b2, fb.b3}
    nots = {h: frozenset(voters.get(h, ())) for h in blocks if store.bft(h).depth > 0}
    if transcript:
        n = max(v.voter for v in transcript) + 1
    return SafetyViolationWitness(fa, fb, nots, n).to_json()


def _conflict(store: BlockStore, a: Hash, b: Hash) -> bool:
    return not (store.bft_is_ancestor(a, b) or store.bft_is_ancestor(b, a))


def streamlet_attribute_evidence(witness: SafetyViolationWitness, transcript: Sequence[VoteRecord],
                                 store: BlockStore, n: Optional[int] = None) -> list[Evidence]:
    """Quorum-intersection attribution for two conflicting finalizations.

    Take the finalized block of smaller depth (B2), find the block B at that
    depth on the other chain, and intersect B's voters with those of the
    triple member chosen by comparing epochs.
    """
    n = n or witness.n
    if not n:
        raise ForensicsError("validator count unknown")
    fa, fb = witness.finalizedA, witness.finalizedB
    try:
        if not _conflict(store, fa.b2, fb.b2):
            raise ForensicsError("witness finalized blocks do not conflict")
        if store.bft(fa.b2).depth > store.bft(fb.b2).depth:
            fa, fb = fb, fa
        triple = [store.bft(h) for h in (fa.b1, fa.b2, fa.b3)]
        B = store.bft(store.bft_chain(fb.b2)[triple[1].depth - 1].hash)
    except UnknownBlock as e:
        raise ForensicsError(f"witness references unknown block {hexh(e.args[0])}") from None
    by_block: dict[Hash, dict[NodeId, VoteRecord]] = {}
    for v in transcript:
        if v.protocol == "streamlet":
            by_block.setdefault(v.block, {})[v.voter] = v
    q = quorum(n)
    for blk in triple + [B] + [store.bft(h) for h in (fb.b1, fb.b2, fb.b3)]:
        if blk.depth > 0 and len(by_block.get(blk.hash, ())) < q:
            raise ForensicsError(f"transcript lacks a notarization for {hexh(blk.hash)[:12]}")
    e = triple[1].epoch
    if e - 1 <= B.epoch <= e + 1:
        other = next((t for t in triple if t.epoch == B.epoch), None)
        if other is None:
            raise ForensicsError("finalized triple epochs are not consecutive")
        cond = "streamlet-1"
        first, second = other, B
    elif B.epoch < e - 1:
        cond, first, second = "streamlet-2", B, triple[0]
    else:
        cond, first, second = "streamlet-2", triple[2], B
    out = []
    vf, vs = by_block.get(first.hash, {}), by_block.get(second.hash, {})
    for voter in sorted(set(vf) & set(vs)):
        out.append(Evidence(voter, cond, (vf[voter], vs[voter])))
    return out


def streamlet_attribute(witness: SafetyViolationWitness | Mapping, transcript: Sequence[VoteRecord],
                        store: BlockStore, n: Optional[int] = None) -> set[NodeId]:
    if not isinstance(witness, SafetyViolationWitness):
        witness = SafetyViolationWitness.from_json(witness)
    return {e.accused for e in streamlet_attribute_evidence(witness, transcript, store, n)}


def min_quorum_intersection(n: int) -> int:
    """Smallest possible overlap of two ceil(2n/3)-sized subsets of n validators."""
    return max(0, 2 * quorum(n) - n)


# -- hotstuff ----------------------------------------------------------------------

def _prepare_quorums(transcript: Iterable[VoteRecord], n: int) -> dict[int, set[Hash]]:
    counts: dict[tuple[int, Hash], set[NodeId]] = {}
    for v in transcript:
        if v.protocol == "hotstuff" and v.voteType == "prepare":
            counts.setdefault((v.epochOrView, v.block), set()).add(v.voter)
    out: dict[int, set[Hash]] = {}
    q = quorum(n)
    for (view, blk), voters in counts.items():
        if len(voters) >= q:
            out.setdefault(view, set()).add(blk)
    return out


def _exception_quorum(quorums: Mapping[int, set[Hash]], v1: int, v2: int, b1: Hash,
                      store: BlockStore) -> Optional[tuple[int, Hash]]:
    for view in sorted(quorums):
        if v1 < view < v2:
            for blk in sorted(quorums[view]):
                if _conflict(store, blk, b1):
                    return view, blk
    return None


def _context_slice(transcript: Sequence[VoteRecord], v1: int, v2: int, n: int) -> dict:
    return {"n": n, "prepares": [v.to_json() for v in transcript
                                 if v.protocol == "hotstuff" and v.voteType == "prepare"
                                 and v1 < v.epochOrView < v2]}


def hotstuff_scan(transcript: Sequence[VoteRecord], store: BlockStore, n: int,
                  audit: Optional[list] = None) -> list[Evidence]:
    """Flag hotstuff-1 and hotstuff-2 violations.

    Pairs excused by the quorum exception are appended to ``audit`` (when
    given) as dicts naming the pair and the excusing quorum.
    """
    votes = [v for v in transcript if v.protocol == "hotstuff"]
    for v in votes:
        if v.block not in store.bftBlocks:
            raise ForensicsError(f"unresolvable block {hexh(v.block)[:12]}")
    quorums = _prepare_quorums(votes, n)
    by_voter: dict[NodeId, list[VoteRecord]] = {}
    for v in votes:
        by_voter.setdefault(v.voter, []).append(v)
    out: list[Evidence] = []
    for voter in sorted(by_voter):
        vs = sorted(set(by_voter[voter]), key=lambda v: (v.epochOrView, v.voteType, v.block))
        c1 = None
        for a, b in zip(vs, vs[1:]):
            if a.epochOrView == b.epochOrView and a.voteType == b.voteType and a.block != b.block:
                c1 = (a, b)
                break
        if c1:
            out.append(Evidence(voter, "hotstuff-1", c1))
        commits = [v for v in vs if v.voteType == "commit"]
        prepares = [v for v in vs if v.voteType == "prepare"]
        c2 = None
        for c in commits:
            for p in prepares:
                if p.epochOrView <= c.epochOrView or not _conflict(store, c.block, p.block):
                    continue
                exc = _exception_quorum(quorums, c.epochOrView, p.epochOrView, c.block, store)
                if exc is not None:
                    if audit is not None:
                        audit.append({"voter": voter, "commit": c.to_json(), "prepare": p.to_json(),
                                      "excusedBy": {"view": exc[0], "block": hexh(exc[1])}})
                    continue
                c2 = (c, p)
                break
            if c2:
                break
        if c2:
            ctx = _context_slice(votes, c2[0].epochOrView, c2[1].epochOrView, n)
            out.append(Evidence(voter, "hotstuff-2", c2, ctx))
    return out


# -- verification --------------------------------------------------------------------

def _vote_matches_store(v: VoteRecord, store: BlockStore) -> bool:
    blk = store.bftBlocks.get(v.block)
    if blk is None or blk.depth != v.blockDepth:
        return False
    return v.protocol == "hotstuff" or blk.epoch == v.epochOrView


def verify_evidence(e: Evidence, store: BlockStore,
                    transcript: Optional[Sequence[VoteRecord]] = None) -> bool:
    """Mechanically re-check ``e``; never raises on malformed input."""
    try:
        if e.condition not in CONDITIONS or len(e.votes) != 2:
            return False
        v1, v2 = e.votes
        if v1.voter != e.accused or v2.voter != e.accused:
            return False
        if not (_vote_matches_store(v1, store) and _vote_matches_store(v2, store)):
            return False
        if transcript is not None:
            cast = set(transcript)
            if v1 not in cast or v2 not in cast:
                return False
        if e.condition.startswith("streamlet"):
            return streamlet_violates(e.condition, v1, v2)
        if v1.protocol != "hotstuff" or v2.protocol != "hotstuff":
            return False
        if e.condition == "hotstuff-1":
            return (v1.epochOrView == v2.epochOrView and v1.voteType == v2.voteType
                    and v1.block != v2.block)
        if not (v1.voteType == "commit" and v2.voteType == "prepare"
                and v1.epochOrView < v2.epochOrView and _conflict(store, v1.block, v2.block)):
            return False
        if transcript is not None:
            n = int((e.context or {}).get("n", 0)) or (max(v.voter for v in transcript) + 1)
            pool = [v for v in transcript if v.protocol == "hotstuff"]
        else:
            if not e.context:
                return False
            n = int(e.context["n"])
            pool = [VoteRecord.from_json(x) for x in e.context.get("prepares", ())]
        quorums = _prepare_quorums(pool, n)
        return _exception_quorum(quorums, v1.epochOrView, v2.epochOrView, v1.block, store) is None
    except (UnknownBlock, KeyError, TypeError, ValueError):
        return False


def evidence_report(evidence: Sequence[Evidence], attributed: Optional[set] = None) -> dict:
    return {"evidence": [e.to_json() for e in evidence],
            "accused": sorted({e.accused for e in evidence} | set(attributed or ())),
            "attributed": None if attributed is None else sorted(attributed)}
