"""Ledger extraction: flatten, sanitize, supersanitize and the recursive
LOG_lc / LOG_fin / LOG_da ledgers.

LOG functions memoize per block hash in a ``LedgerCache``.  Blocks are
content-addressed, so one cache may be shared by many ``BlockStore`` views
(the simulator shares one across all nodes).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .core_types import (BFT_GENESIS, LC_GENESIS, BftBlock, Hash, LcBlock, Ledger,
                         Transaction, _apply_in, _valid_in)


class UnknownBlock(KeyError):
    """A referenced block hash is not in the store."""


class NotAPrefix(ValueError):
    """``strip_prefix`` called with a ledger that is not a list-prefix."""


@dataclass(frozen=True)
class Snapshot:
    lcTip: Hash


class _Acc:
    """A supersanitized ledger plus the state needed to extend it."""

    __slots__ = ("txs", "ids", "coins", "_ledger")

    def __init__(self, txs=(), ids=frozenset(), coins=None):
        self.txs: tuple = txs
        self.ids: frozenset = ids
        self.coins: dict = coins if coins is not None else {}
        self._ledger = None

    def extend(self, txs: Iterable[Transaction], authority=None) -> "_Acc":
        kept = []
        ids = set(self.ids)
        coins = None
        for tx in txs:
            if tx.id in ids:
                continue
            if coins is None:
                coins = dict(self.coins)
            if not _valid_in(tx, coins, authority):
                continue
            _apply_in(tx, coins)
            ids.add(tx.id)
            kept.append(tx)
        if not kept:
            return self
        return _Acc(self.txs + tuple(kept), frozenset(ids), coins)

    @property
    def ledger(self) -> Ledger:
        if self._ledger is None:
            self._ledger = Ledger(self.txs)
        return self._ledger


EMPTY_ACC = _Acc()


class LedgerCache:
    """Memo tables keyed by immutable hashes; never invalidated.

    Reads are lock-free; insertions take the lock so concurrent evaluators
    never interleave partial writes.
    """

    def __init__(self, mint_authority: Optional[Iterable[str]] = None):
        self.mint_authority = None if mint_authority is None else frozenset(mint_authority)
        self.lc: dict[Hash, _Acc] = {LC_GENESIS.hash: EMPTY_ACC}
        self.fin: dict[Hash, _Acc] = {BFT_GENESIS.hash: EMPTY_ACC}
        self.da: dict[tuple[Hash, Hash], _Acc] = {}
        self.lc_height: dict[Hash, int] = {LC_GENESIS.hash: 0}
        # block hash -> validity verdict, filled by lc_chain / bft_streamlet
        self.verdicts: dict[Hash, bool] = {}
        # commitment root -> committed innovation (full-node prover index)
        self.innovations: dict[Hash, tuple[Transaction, ...]] = {}
        self._lock = threading.Lock()

    def put(self, table: dict, key, value):
        with self._lock:
            return table.setdefault(key, value)


class BlockStore:
    """Parent-closed maps of LC and BFT blocks known to one participant."""

    def __init__(self, cache: Optional[LedgerCache] = None):
        self.lcBlocks: dict[Hash, LcBlock] = {LC_GENESIS.hash: LC_GENESIS}
        self.bftBlocks: dict[Hash, BftBlock] = {BFT_GENESIS.hash: BFT_GENESIS}
        self.cache = cache if cache is not None else LedgerCache()

    def copy(self) -> "BlockStore":
        s = BlockStore(self.cache)
        s.lcBlocks = dict(self.lcBlocks)
        s.bftBlocks = dict(self.bftBlocks)
        return s

    # -- insertion ---------------------------------------------------------
    def add_lc(self, block: LcBlock) -> None:
        if block.hash in self.lcBlocks:
            return
        if block.prev not in self.lcBlocks:
            raise UnknownBlock(block.prev)
        self.lcBlocks[block.hash] = block
        if block.hash not in self.cache.lc_height:
            self.cache.put(self.cache.lc_height, block.hash, self.cache.lc_height[block.prev] + 1)

    def add_bft(self, block: BftBlock) -> None:
        if block.hash in self.bftBlocks:
            return
        if block.prev not in self.bftBlocks:
            raise UnknownBlock(block.prev)
        self.bftBlocks[block.hash] = block

    # -- lookup ------------------------------------------------------------
    def lc(self, h: Hash) -> LcBlock:
        try:
            return self.lcBlocks[h]
        except KeyError:
            raise UnknownBlock(h) from None

    def bft(self, h: Hash) -> BftBlock:
        try:
            return self.bftBlocks[h]
        except KeyError:
            raise UnknownBlock(h) from None

    def height(self, h: Hash) -> int:
        self.lc(h)
        return self.cache.lc_height[h]

    def lc_ancestor_at(self, h: Hash, height: int) -> Hash:
        cur = h
        hh = self.height(h)
        if height > hh or height < 0:
            raise ValueError(f"no ancestor at height {height} (block height {hh})")
        while hh > height:
            cur = self.lcBlocks[cur].prev
            hh -= 1
        return cur

    def lc_is_ancestor(self, a: Hash, b: Hash) -> bool:
        """True iff ``a`` is an ancestor-or-equal of ``b`` on the LC tree."""
        ha, hb = self.height(a), self.height(b)
        return ha <= hb and self.lc_ancestor_at(b, ha) == a

    def bft_is_ancestor(self, a: Hash, b: Hash) -> bool:
        A, B = self.bft(a), self.bft(b)
        cur = B
        while cur.depth > A.depth:
            cur = self.bftBlocks[cur.prev]
        return cur.hash == A.hash

    def bft_chain(self, tip: Hash) -> list[BftBlock]:
        """Blocks from genesis (exclusive) up to ``tip`` (inclusive)."""
        out = []
        cur = self.bft(tip)
        while cur.hash != BFT_GENESIS.hash:
            out.append(cur)
            cur = self.bftBlocks[cur.prev]
        out.reverse()
        return out


# -- list-level operations -----------------------------------------------------

def sanitize(txs: Iterable[Transaction]) -> Ledger:
    seen: set[str] = set()
    out = []
    for tx in txs:
        if tx.id not in seen:
            seen.add(tx.id)
            out.append(tx)
    return Ledger(tuple(out))


def flatten(snapshots: Iterable[Sequence[Transaction]]) -> list[Transaction]:
    return [tx for snap in snapshots for tx in snap]


def supersanitize(txs: Iterable[Transaction], mint_authority: Optional[Iterable[str]] = None) -> Ledger:
    auth = None if mint_authority is None else frozenset(mint_authority)
    return EMPTY_ACC.extend(txs, auth).ledger


def strip_prefix(full: Ledger | Sequence[Transaction], prefix: Ledger | Sequence[Transaction]) -> tuple[Transaction, ...]:
    f = tuple(full.txs if isinstance(full, Ledger) else full)
    p = tuple(prefix.txs if isinstance(prefix, Ledger) else prefix)
    if len(p) > len(f) or any(a.id != b.id for a, b in zip(f, p)):
        raise NotAPrefix("prefix is not a list-prefix of the full ledger")
    return f[len(p):]


# -- recursive ledgers ---------------------------------------------------------

def _lc_acc(b: Hash, store: BlockStore) -> _Acc:
    cache = store.cache
    acc = cache.lc.get(b)
    if acc is not None:
        return acc
    pending = []
    cur = b
    while (acc := cache.lc.get(cur)) is None:
        blk = store.lc(cur)
        pending.append(blk)
        cur = blk.prev
    for blk in reversed(pending):
        acc = cache.put(cache.lc, blk.hash, acc.extend(blk.txs, cache.mint_authority))
    return acc


def _fin_acc(B: Hash, store: BlockStore) -> _Acc:
    cache = store.cache
    acc = cache.fin.get(B)
    if acc is not None:
        return acc
    pending = []
    cur = B
    while (acc := cache.fin.get(cur)) is None:
        blk = store.bft(cur)
        pending.append(blk)
        cur = blk.prev
    for blk in reversed(pending):
        acc = cache.put(cache.fin, blk.hash, acc.extend(_lc_acc(blk.b, store).txs, cache.mint_authority))
    return acc


def _da_acc(B: Hash, b: Hash, store: BlockStore) -> _Acc:
    cache = store.cache
    acc = cache.da.get((B, b))
    if acc is None:
        fin = _fin_acc(B, store)
        acc = cache.put(cache.da, (B, b), fin.extend(_lc_acc(b, store).txs, cache.mint_authority))
    return acc


def log_lc(b: Hash, store: BlockStore) -> Ledger:
    return _lc_acc(b, store).ledger


def log_fin(B: Hash, store: BlockStore) -> Ledger:
    return _fin_acc(B, store).ledger


def log_da(B: Hash, b: Hash, store: BlockStore) -> Ledger:
    return _da_acc(B, b, store).ledger


def innovation(B: BftBlock | Hash, store: BlockStore) -> tuple[Transaction, ...]:
    blk = store.bft(B) if isinstance(B, bytes) else B
    if blk.hash == BFT_GENESIS.hash:
        return ()
    return strip_prefix(_fin_acc(blk.hash, store).txs, _fin_acc(blk.prev, store).txs)


def bft_innovation_for(parent: Hash, snapshot: Hash, store: BlockStore) -> tuple[Transaction, ...]:
    """Innovation a BFT block extending ``parent`` with ``snapshot`` would bring."""
    fin = _fin_acc(parent, store)
    return _da_acc(parent, snapshot, store).txs[len(fin.txs):]


def lc_innovation_for(fin_ref: Hash, parent: Hash, new_txs: Sequence[Transaction],
                      store: BlockStore) -> tuple[Transaction, ...]:
    """Innovation an LC block on ``parent`` carrying ``new_txs`` would bring,
    assuming the finalized ledger of ``fin_ref``."""
    fin = _fin_acc(fin_ref, store)
    da = _da_acc(fin_ref, parent, store).extend(new_txs, store.cache.mint_authority)
    return da.txs[len(fin.txs):]


def prefix_state(B: Hash, b: Hash, store: BlockStore) -> tuple[frozenset, dict]:
    """(ids, coins) after LOG_da(B, b); read-only views for block composers."""
    acc = _da_acc(B, b, store)
    return acc.ids, acc.coins
