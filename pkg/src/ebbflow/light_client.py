"""Header-only clients, full-node provers, and SPV for both ledgers.

A light client keeps LC headers and BFT headers (a ``BftBlock`` carries no
transactions, so it doubles as its own header).  Notarization reaches the
client as a certificate: the set of voter ids attached to a BFT header.
Finality and fork choice reuse the full-node rules on these headers.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Union

from .bft_streamlet import BftNodeState
from .core_types import (BFT_GENESIS, EMPTY_ROOT, LC_GENESIS, BftBlock, Hash, LcBlock, LcHeader,
                         Transaction, VoteRecord, hexh)
from .lc_chain import DEFAULT_K, _better
from .ledger_extraction import BlockStore, LedgerCache, UnknownBlock
from .merkle import MerkleProof, merkleize, prove_inclusion, verify_inclusion

FOLLOW_FIN = "follow-fin"
FOLLOW_DA = "follow-da"

Header = Union[LcHeader, BftBlock]


@dataclass(frozen=True)
class Certificate:
    block: Hash
    voters: frozenset


@dataclass(frozen=True)
class ProverReply:
    tx: Transaction
    root: Hash
    proof: MerkleProof


@dataclass(frozen=True)
class SpvAnswer:
    status: str  # "accepted" | "unavailable"
    acceptedAgainst: Optional[Hash] = None
    proof: Optional[MerkleProof] = None
    gateFired: bool = False

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"

    def to_json(self) -> dict:
        return {"status": self.status,
                "acceptedAgainst": None if self.acceptedAgainst is None else hexh(self.acceptedAgainst),
                "proof": None if self.proof is None else self.proof.to_json()}


UNAVAILABLE = SpvAnswer("unavailable")


class LightClientState:
    def __init__(self, n: int, k: int = DEFAULT_K, mode: str = FOLLOW_DA):
        if mode not in (FOLLOW_FIN, FOLLOW_DA):
            raise ValueError(f"unknown mode {mode!r}")
        self.n, self.k, self.mode = n, k, mode
        self.store = BlockStore(LedgerCache())
        self.store.lcBlocks = {LC_GENESIS.hash: LC_GENESIS.header()}
        self.bft = BftNodeState(n, self.store)
        self._tip: Hash = LC_GENESIS.hash
        self._buffer: dict[Hash, list] = {}
        self.gate_fires = 0

    # -- views --------------------------------------------------------------
    @property
    def lcHeaders(self) -> dict[Hash, LcHeader]:
        return self.store.lcBlocks

    @property
    def bftHeaders(self) -> dict[Hash, BftBlock]:
        return self.store.bftBlocks

    @property
    def lcTip(self) -> Hash:
        """b*: the k-deep confirmed header on the longest header chain."""
        h = self.store.height(self._tip)
        return self.store.lc_ancestor_at(self._tip, max(0, h - self.k))

    @property
    def bftFinalizedTip(self) -> Hash:
        return self.bft.finalizedTip

    def finalized_roots(self) -> set[Hash]:
        return {b.auxinnov for b in self.store.bft_chain(self.bftFinalizedTip)}


def _missing(state: LightClientState, item) -> Optional[Hash]:
    s = state.store
    if isinstance(item, LcHeader):
        for dep, table in ((item.prev, s.lcBlocks), (item.auxref, s.bftBlocks)):
            if dep not in table:
                return dep
    elif isinstance(item, BftBlock):
        for dep, table in ((item.prev, s.bftBlocks), (item.b, s.lcBlocks)):
            if dep not in table:
                return dep
    elif isinstance(item, Certificate):
        if item.block not in s.bftBlocks:
            return item.block
    return None


def _lc_header_ok(state: LightClientState, h: LcHeader) -> bool:
    s = state.store
    parent = s.lcBlocks[h.prev]
    if not h.hash_ok() or h.slot <= parent.slot:
        return False
    if parent.hash == LC_GENESIS.hash:
        return True
    return s.bftBlocks[h.auxref].depth >= s.bftBlocks[parent.auxref].depth


def _bft_header_ok(state: LightClientState, h: BftBlock) -> bool:
    parent = state.store.bftBlocks[h.prev]
    return h.hash_ok() and h.depth == parent.depth + 1 and h.epoch > parent.epoch


def sync_headers(state: LightClientState, item: Header | LcBlock | Certificate) -> LightClientState:
    """Add one header or certificate; items with unknown dependencies wait
    in a buffer until the dependency arrives."""
    if isinstance(item, LcBlock):
        item = item.header()
    work = [item]
    while work:
        it = work.pop()
        dep = _missing(state, it)
        if dep is not None:
            state._buffer.setdefault(dep, []).append(it)
            continue
        accepted = _apply(state, it)
        if accepted is not None:
            work.extend(state._buffer.pop(accepted, ()))
    return state


def _apply(state: LightClientState, it) -> Optional[Hash]:
    s = state.store
    if isinstance(it, Certificate):
        blk = s.bftBlocks[it.block]
        if len(it.voters) >= state.bft.threshold:
            for v in sorted(it.voters):
                state.bft.add_vote(VoteRecord.streamlet(v, blk))
        return None
    if isinstance(it, LcHeader):
        if it.hash in s.lcBlocks or not _lc_header_ok(state, it):
            return None
        s.add_lc(it)
        if _better(s, it.hash, state._tip):
            state._tip = it.hash
        return it.hash
    if it.hash in s.bftBlocks or not _bft_header_ok(state, it):
        return None
    state.bft.add_block(it)
    return it.hash


def follow(node, client: LightClientState) -> None:
    """Feed ``client`` from ``node``'s accepted-block and certificate events."""

    def on_event(kind, payload):
        if kind == "lc":
            sync_headers(client, payload.header())
        elif kind == "bft":
            sync_headers(client, payload)
        elif kind == "cert":
            sync_headers(client, Certificate(*payload))

    node.listeners.append(on_event)


# -- provers ---------------------------------------------------------------------

class ProverLike(Protocol):
    def answer(self, tx_id: str, permitted: set[Hash]) -> Optional[ProverReply]: ...


class Prover:
    """Honest full node: proves against committed innovations it knows.

    Innovation data is indexed by commitment root in the ledger cache; the
    reverse index (tx id -> roots) is refreshed lazily as the cache grows."""

    def __init__(self, cache: LedgerCache):
        self.cache = cache
        self._indexed = 0
        self._where: dict[str, list[Hash]] = {}
        self._trees: dict[Hash, object] = {}

    def _refresh(self) -> None:
        table = self.cache.innovations
        if len(table) == self._indexed:
            return
        for root, txs in list(table.items())[self._indexed:]:
            for tx in txs:
                self._where.setdefault(tx.id, []).append(root)
        self._indexed = len(table)

    def proof_for(self, tx_id: str, root: Hash) -> Optional[ProverReply]:
        txs = self.cache.innovations.get(root)
        if txs is None:
            return None
        for i, tx in enumerate(txs):
            if tx.id == tx_id:
                tree = self._trees.get(root)
                if tree is None:
                    tree = self._trees[root] = merkleize(txs)
                return ProverReply(tx, root, prove_inclusion(tree, i))
        return None

    def answer(self, tx_id: str, permitted: set[Hash]) -> Optional[ProverReply]:
        self._refresh()
        for root in sorted(r for r in self._where.get(tx_id, ()) if r in permitted):
            reply = self.proof_for(tx_id, root)
            if reply is not None:
                return reply
        return None


def prover_answer(store: BlockStore, tx_id: str, permitted: set[Hash]) -> Optional[MerkleProof]:
    reply = Prover(store.cache).answer(tx_id, permitted)
    return None if reply is None else reply.proof


class ByzantineProver:
    """Untrusted full node that lies in assorted ways.

    ``random``: garbage proof against a permitted root.  ``wrong-root``: a
    genuine proof against a root the client did not permit.  ``forged``: a
    proof for another transaction passed off as the requested one.
    ``mixed``: pick one of the above per query."""

    MODES = ("random", "wrong-root", "forged", "mixed")

    def __init__(self, cache: LedgerCache, seed: int = 0, mode: str = "mixed"):
        if mode not in self.MODES:
            raise ValueError(mode)
        self.honest = Prover(cache)
        self.rng = random.Random(seed)
        self.mode = mode

    def answer(self, tx_id: str, permitted: set[Hash]) -> Optional[ProverReply]:
        mode = self.mode
        if mode == "mixed":
            mode = self.rng.choice(self.MODES[:3])
        h = self.honest
        h._refresh()
        if mode == "random":
            root = self.rng.choice(sorted(permitted)) if permitted else self.rng.randbytes(32)
            depth = self.rng.randint(0, 6)
            path = tuple((self.rng.randbytes(32), self.rng.choice(("left", "right")))
                         for _ in range(depth))
            tx = Transaction.mint(tx_id, self.rng.randint(1, 100))
            return ProverReply(tx, root, MerkleProof(self.rng.randint(0, 9), tx.leaf_hash, path))
        if mode == "wrong-root":
            roots = sorted(r for r in h._where.get(tx_id, ()) if r not in permitted)
            if not roots:
                return None
            return h.proof_for(tx_id, self.rng.choice(roots))
        # forged: a real proof for some other transaction under a permitted root
        for root in sorted(permitted):
            txs = h.cache.innovations.get(root) or ()
            for other in txs:
                if other.id != tx_id:
                    real = h.proof_for(other.id, root)
                    forged_tx = Transaction(tx_id, other.inputs, other.outputs)
                    return ProverReply(forged_tx, root, real.proof)
        return None


# -- SPV -------------------------------------------------------------------------

def _check_reply(reply: Optional[ProverReply], tx_id: str, permitted: set[Hash]) -> SpvAnswer:
    if reply is None:
        return UNAVAILABLE
    try:
        ok = (reply.tx.id == tx_id and reply.root in permitted and reply.root != EMPTY_ROOT
              and reply.proof.leaf == reply.tx.leaf_hash and verify_inclusion(reply.root, reply.proof))
    except (AttributeError, TypeError, ValueError):
        ok = False
    if not ok:
        return UNAVAILABLE
    return SpvAnswer("accepted", reply.root, reply.proof)


def spv_finalized(state: LightClientState, tx_id: str, prover: ProverLike) -> SpvAnswer:
    if state.mode != FOLLOW_FIN:
        raise ValueError("spv_finalized needs a follow-fin client")
    permitted = state.finalized_roots()
    return _check_reply(prover.answer(tx_id, permitted), tx_id, permitted)


def available_permitted_roots(state: LightClientState) -> tuple[Optional[set[Hash]], bool]:
    """Permitted commitment roots for the available ledger, plus whether the
    consistency gate fired.  ``None`` means the client cannot answer yet."""
    s = state.store
    b_star = state.lcTip
    B_star = state.bftFinalizedTip
    ref = s.lcBlocks[b_star].auxref
    try:
        if not s.bft_is_ancestor(ref, B_star):
            return None, False
        path = []
        cur = s.bftBlocks[B_star]
        while cur.hash != ref:
            path.append(cur)
            cur = s.bftBlocks[cur.prev]
        conflict = any(not (s.lc_is_ancestor(B.b, b_star) or s.lc_is_ancestor(b_star, B.b))
                       for B in path)
    except (UnknownBlock, KeyError, ValueError):
        return None, False
    permitted = state.finalized_roots()
    if not conflict:
        permitted.add(s.lcBlocks[b_star].auxinnov)
    return permitted, conflict


def spv_available(state: LightClientState, tx_id: str, prover: ProverLike) -> SpvAnswer:
    if state.mode != FOLLOW_DA:
        raise ValueError("spv_available needs a follow-da client")
    permitted, fired = available_permitted_roots(state)
    if fired:
        state.gate_fires += 1
    if permitted is None:
        return UNAVAILABLE
    ans = _check_reply(prover.answer(tx_id, permitted), tx_id, permitted)
    if fired:
        return SpvAnswer(ans.status, ans.acceptedAgainst, ans.proof, gateFired=True)
    return ans
