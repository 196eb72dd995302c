"""Hand-built chains shared by several test modules."""

from ebbflow.core_types import LC_GENESIS, BftBlock, LcBlock
from ebbflow.ledger_extraction import bft_innovation_for, lc_innovation_for
from ebbflow.merkle import merkle_root


def lc_child(store, parent, slot, txs, auxref=None, producer=0):
    """Append a valid LC block carrying ``txs`` verbatim."""
    auxref = auxref if auxref is not None else store.lc(parent).auxref
    root = merkle_root(lc_innovation_for(auxref, parent, txs, store))
    blk = LcBlock.create(parent, slot, producer, tuple(txs), auxref, root)
    store.add_lc(blk)
    return blk


def bft_child(store, parent, epoch, snapshot, proposer=0):
    par = store.bft(parent)
    root = merkle_root(bft_innovation_for(parent, snapshot, store))
    blk = BftBlock.create(parent, epoch, proposer, snapshot, root, par.depth + 1)
    store.add_bft(blk)
    return blk


def lc_chain(store, txs_per_block, start=LC_GENESIS.hash, slot0=1):
    blocks = []
    cur = start
    for i, txs in enumerate(txs_per_block):
        b = lc_child(store, cur, slot0 + i, txs)
        blocks.append(b)
        cur = b.hash
    return blocks
