"""Permissioned longest-chain sub-protocol (sleepy style).

Slot lottery, longest-chain fork choice with smaller-hash tie-break, k-deep
confirmation, and LC block composition carrying the light-client metadata
(``auxref`` to the finalized BFT tip, ``auxinnov`` committing to the
innovation the block brings into the available ledger).
"""

from __future__ import annotations

from typing import Optional, Sequence

from .core_types import BFT_GENESIS, LC_GENESIS, Hash, LcBlock, NodeId, Transaction
from .ledger_extraction import (BlockStore, UnknownBlock, _da_acc, lc_innovation_for)
from .merkle import merkle_root
from .rng import keyed_uniform

DEFAULT_K = 6


def lottery_win(node: NodeId, slot: int, seed: int, p: float) -> bool:
    if p <= 0.0:
        return False
    if p >= 1.0:
        return True
    return keyed_uniform(seed, "lottery", node, slot) < p


class LcNodeState:
    """One node's view of the longest-chain protocol."""

    def __init__(self, store: Optional[BlockStore] = None, k: int = DEFAULT_K,
                 node_id: NodeId = 0):
        self.store = store if store is not None else BlockStore()
        self.k = k
        self.node_id = node_id
        self.tip: Hash = LC_GENESIS.hash
        self.finTip: Hash = BFT_GENESIS.hash
        self.mempool: list[Transaction] = []
        # ids ever queued; pruned txs are parked, not forgotten, so a reorg
        # that drops them from the ledger puts them back in the mempool
        self._mempool_ids: set[str] = set()
        self._parked: list[Transaction] = []

    def add_to_mempool(self, tx: Transaction) -> None:
        if tx.id not in self._mempool_ids:
            self._mempool_ids.add(tx.id)
            self.mempool.append(tx)

    def prune_mempool(self) -> None:
        """Park transactions already in the node's available ledger and
        restore parked ones the ledger no longer contains."""
        ids, _ = prefix_view(self)
        restored = [t for t in self._parked if t.id not in ids]
        if restored or any(t.id in ids for t in self.mempool):
            pool = restored + self.mempool
            self._parked = [t for t in self._parked if t.id in ids] + [t for t in pool if t.id in ids]
            self.mempool = [t for t in pool if t.id not in ids]

    @property
    def height(self) -> int:
        return self.store.height(self.tip)

    def confirmed_tip(self) -> Hash:
        return confirmed_tip(self)

    def receive(self, block: LcBlock) -> bool:
        """Store a validated block and update the tip. Returns True if the tip moved."""
        return on_lc_block(self, block)


def prefix_view(state: LcNodeState):
    acc = _da_acc(state.finTip, state.tip, state.store)
    return acc.ids, acc.coins


def select_block_txs(state: LcNodeState, new_txs: Sequence[Transaction]) -> tuple[Transaction, ...]:
    """Keep transactions valid (and new) against the current available-ledger prefix."""
    acc = _da_acc(state.finTip, state.tip, state.store)
    ext = acc.extend(new_txs, state.store.cache.mint_authority)
    return ext.txs[len(acc.txs):]


def compose_lc_block(state: LcNodeState, slot: int, new_txs: Sequence[Transaction],
                     producer: Optional[NodeId] = None) -> LcBlock:
    store = state.store
    if slot <= store.lc(state.tip).slot:
        raise ValueError(f"slot {slot} does not advance past the parent block")
    txs = select_block_txs(state, new_txs)
    delta = lc_innovation_for(state.finTip, state.tip, txs, store)
    root = merkle_root(delta)
    block = LcBlock.create(state.tip, slot, state.node_id if producer is None else producer,
                           txs, state.finTip, root)
    store.cache.put(store.cache.innovations, root, delta)
    store.cache.put(store.cache.verdicts, block.hash, True)
    return block


def missing_lc_dependency(block: LcBlock, store: BlockStore) -> Optional[Hash]:
    if block.prev not in store.lcBlocks:
        return block.prev
    if block.auxref not in store.bftBlocks:
        return block.auxref
    return None


def validate_lc_block(block: LcBlock, store: BlockStore) -> bool:
    cached = store.cache.verdicts.get(block.hash)
    if cached is not None:
        # verdict is content-addressed, but resolvability is per store
        return cached and missing_lc_dependency(block, store) is None
    try:
        ok = _check_lc_block(block, store)
    except UnknownBlock:
        return False
    store.cache.put(store.cache.verdicts, block.hash, ok)
    return ok


def _check_lc_block(block: LcBlock, store: BlockStore) -> bool:
    if block.hash == LC_GENESIS.hash:
        return True
    parent = store.lc(block.prev)
    ref = store.bft(block.auxref)
    if block.slot <= parent.slot:
        return False
    if parent.hash != LC_GENESIS.hash and ref.depth < store.bft(parent.auxref).depth:
        return False
    if LcBlock.create(block.prev, block.slot, block.producer, block.txs,
                      block.auxref, block.auxinnov).hash != block.hash:
        return False
    delta = lc_innovation_for(block.auxref, block.prev, block.txs, store)
    root = merkle_root(delta)
    if root != block.auxinnov:
        return False
    store.cache.put(store.cache.innovations, root, delta)
    return True


def _better(store: BlockStore, a: Hash, b: Hash) -> bool:
    """Is chain ending at ``a`` preferred over chain ending at ``b``?"""
    ha, hb = store.height(a), store.height(b)
    return ha > hb or (ha == hb and a < b)


def on_lc_block(state: LcNodeState, block: LcBlock) -> bool:
    state.store.add_lc(block)
    if _better(state.store, block.hash, state.tip):
        state.tip = block.hash
        return True
    return False


def fork_choice(store: BlockStore) -> Hash:
    """Batch recomputation of the preferred tip over every stored LC block."""
    best = LC_GENESIS.hash
    for h in store.lcBlocks:
        if _better(store, h, best):
            best = h
    return best


def confirmed_tip(state: LcNodeState) -> Hash:
    h = state.store.height(state.tip)
    return state.store.lc_ancestor_at(state.tip, max(0, h - state.k))
