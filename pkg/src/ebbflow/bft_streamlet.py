"""Modified Streamlet: snapshot-carrying proposals, the boycott vote rule,
notarization at ceil(2n/3) distinct voters and finalization of the middle
block of three consecutive-epoch notarized blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .core_types import BFT_GENESIS, BftBlock, Hash, NodeId, VoteRecord
from .ledger_extraction import BlockStore, UnknownBlock, bft_innovation_for
from .lc_chain import LcNodeState, confirmed_tip
from .merkle import merkle_root
from .rng import keyed_randint


def quorum(n: int) -> int:
    """ceil(2n/3)."""
    return (2 * n + 2) // 3


def epoch_leader(epoch: int, seed: int, n: int) -> NodeId:
    if n == 1:
        return 0
    return keyed_randint(seed, "leader", 0, n - 1, epoch)


@dataclass(frozen=True)
class Notarization:
    block: Hash
    voters: frozenset

    def to_json(self) -> dict:
        return {"block": self.block.hex(), "voters": sorted(self.voters)}


@dataclass(frozen=True)
class Finalization:
    """B1 <- B2 <- B3 chained, notarized, consecutive epochs; B2 final."""

    b1: Hash
    b2: Hash
    b3: Hash
    epochs: tuple[int, int, int]

    def to_json(self) -> dict:
        return {"B1": self.b1.hex(), "B2": self.b2.hex(), "B3": self.b3.hex(),
                "epochs": list(self.epochs)}


class BftNodeState:
    def __init__(self, n: int, store: Optional[BlockStore] = None, node_id: NodeId = 0):
        self.n = n
        self.node_id = node_id
        self.store = store if store is not None else BlockStore()
        self.votes: dict[Hash, set[NodeId]] = {}
        self.epoch = 0
        self.votedEpochs: set[int] = set()
        self.finalizedTip: Hash = BFT_GENESIS.hash
        self.finalizations: list[Finalization] = []
        self.notarized: set[Hash] = {BFT_GENESIS.hash}
        self.chain_notarized: set[Hash] = {BFT_GENESIS.hash}
        self.best_depth = 0
        self.best_tips: set[Hash] = {BFT_GENESIS.hash}
        self._children: dict[Hash, list[Hash]] = {}
        self._known: set[Hash] = {BFT_GENESIS.hash}
        # blocks newly notarized since the last drain (light-client certificates)
        self.newly_notarized: list[Hash] = []

    @property
    def threshold(self) -> int:
        return quorum(self.n)

    def notarization(self, h: Hash) -> Notarization:
        return Notarization(h, frozenset(self.votes.get(h, ())))

    def longest_notarized_tips(self) -> list[Hash]:
        return sorted(self.best_tips)

    def add_block(self, block: BftBlock) -> None:
        if block.hash in self._known:
            return
        self.store.add_bft(block)
        self._known.add(block.hash)
        self._children.setdefault(block.prev, []).append(block.hash)
        self._maybe_notarize(block.hash)

    def add_vote(self, vote: VoteRecord) -> None:
        voters = self.votes.setdefault(vote.block, set())
        if vote.voter in voters:
            return
        voters.add(vote.voter)
        if len(voters) >= self.threshold:
            self._maybe_notarize(vote.block)

    def _maybe_notarize(self, h: Hash) -> None:
        if h in self.notarized or h not in self.store.bftBlocks:
            return
        if len(self.votes.get(h, ())) < self.threshold:
            return
        self.notarized.add(h)
        self.newly_notarized.append(h)
        blk = self.store.bftBlocks[h]
        if blk.prev in self.chain_notarized:
            self._extend_chain_notarized(h)

    def _extend_chain_notarized(self, h: Hash) -> None:
        stack = [h]
        while stack:
            x = stack.pop()
            self.chain_notarized.add(x)
            blk = self.store.bftBlocks[x]
            if blk.depth > self.best_depth:
                self.best_depth = blk.depth
                self.best_tips = {x}
            elif blk.depth == self.best_depth:
                self.best_tips.add(x)
            self._check_finalization(blk)
            for c in self._children.get(x, ()):
                if c in self.notarized and c not in self.chain_notarized:
                    stack.append(c)

    def _check_finalization(self, b3: BftBlock) -> None:
        if b3.depth < 2:
            return
        b2 = self.store.bftBlocks[b3.prev]
        b1 = self.store.bftBlocks[b2.prev]
        if b1.epoch + 1 == b2.epoch and b2.epoch + 1 == b3.epoch:
            fin = Finalization(b1.hash, b2.hash, b3.hash, (b1.epoch, b2.epoch, b3.epoch))
            self.finalizations.append(fin)
            cur = self.store.bftBlocks[self.finalizedTip]
            if b2.depth > cur.depth or (b2.depth == cur.depth and b2.hash < cur.hash):
                self.finalizedTip = b2.hash


def on_vote(state: BftNodeState, vote: VoteRecord) -> BftNodeState:
    state.add_vote(vote)
    return state


def finalize(state: BftNodeState) -> Hash:
    return state.finalizedTip


def log_bft(B: Hash, store: BlockStore) -> list[Hash]:
    """The snapshot sequence ordered by the BFT chain up to ``B``."""
    return [blk.b for blk in store.bft_chain(B)]


def compose_bft_block(state: BftNodeState, lcConfirmedTip: Hash, store: Optional[BlockStore] = None,
                      epoch: Optional[int] = None, proposer: Optional[NodeId] = None,
                      parent: Optional[Hash] = None) -> BftBlock:
    store = store if store is not None else state.store
    parent_h = parent if parent is not None else min(state.best_tips)
    par = store.bft(parent_h)
    delta = bft_innovation_for(parent_h, lcConfirmedTip, store)
    root = merkle_root(delta)
    block = BftBlock.create(parent_h, state.epoch if epoch is None else epoch,
                            state.node_id if proposer is None else proposer,
                            lcConfirmedTip, root, par.depth + 1)
    store.cache.put(store.cache.innovations, root, delta)
    store.cache.put(store.cache.verdicts, block.hash, True)
    return block


def validate_bft_block(block: BftBlock, store: BlockStore) -> bool:
    """Structural validity plus recomputed innovation commitment."""
    cached = store.cache.verdicts.get(block.hash)
    if cached is not None:
        return cached and block.prev in store.bftBlocks and block.b in store.lcBlocks
    try:
        parent = store.bft(block.prev)
        store.lc(block.b)
        ok = (block.hash_ok() and block.depth == parent.depth + 1 and block.epoch > parent.epoch)
        if ok:
            delta = bft_innovation_for(block.prev, block.b, store)
            root = merkle_root(delta)
            ok = root == block.auxinnov
            if ok:
                store.cache.put(store.cache.innovations, root, delta)
    except UnknownBlock:
        return False
    store.cache.put(store.cache.verdicts, block.hash, ok)
    return ok


def vote_rule(state: BftNodeState, proposal: BftBlock, lcView: Optional[LcNodeState],
              boycott: bool = True) -> bool:
    if proposal.prev not in state.best_tips:
        return False
    if proposal.epoch != state.epoch:
        return False
    if boycott:
        if lcView is None or proposal.b not in lcView.store.lcBlocks:
            return False
        if not lcView.store.lc_is_ancestor(proposal.b, confirmed_tip(lcView)):
            return False
    return validate_bft_block(proposal, state.store)


def brute_force_finalized(blocks: Iterable[BftBlock], notarized: set[Hash]) -> Optional[Hash]:
    """Window-scan oracle: deepest middle block of a consecutive-epoch triple
    whose chain back to genesis is entirely notarized."""
    by_hash = {b.hash: b for b in blocks}
    by_hash.setdefault(BFT_GENESIS.hash, BFT_GENESIS)

    def chain_ok(h: Hash) -> bool:
        while h != BFT_GENESIS.hash:
            if h not in notarized or h not in by_hash:
                return False
            h = by_hash[h].prev
        return True

    best = None
    for b3 in by_hash.values():
        if b3.depth < 2 or not chain_ok(b3.hash):
            continue
        b2 = by_hash[b3.prev]
        b1 = by_hash[b2.prev]
        if b1.epoch + 1 == b2.epoch == b3.epoch - 1:
            if best is None or b2.depth > by_hash[best].depth or (
                    b2.depth == by_hash[best].depth and b2.hash < best):
                best = b2.hash
    return best
