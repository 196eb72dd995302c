"""A snap-and-chat node: the LC and BFT sub-protocols run side by side over
one block store, with LOG_fin / LOG_da read out every slot."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .bft_streamlet import (BftNodeState, compose_bft_block, epoch_leader, validate_bft_block,
                            vote_rule)
from .core_types import BftBlock, Hash, LcBlock, Ledger, NodeId, Transaction, VoteRecord
from .lc_chain import (LcNodeState, compose_lc_block, confirmed_tip, lottery_win,
                       missing_lc_dependency, validate_lc_block)
from .ledger_extraction import BlockStore, LedgerCache, log_da, log_fin


@dataclass(frozen=True)
class LcBlockMsg:
    block: LcBlock
    kind = "lc_block"


@dataclass(frozen=True)
class ProposalMsg:
    block: BftBlock
    kind = "proposal"


@dataclass(frozen=True)
class VoteMsg:
    vote: VoteRecord
    kind = "vote"


@dataclass(frozen=True)
class TxMsg:
    tx: Transaction
    kind = "tx"


Message = Union[LcBlockMsg, ProposalMsg, VoteMsg, TxMsg]


@dataclass
class NodeConfig:
    n: int
    k: int = 6
    seed: int = 0
    lottery_p: float = 0.02
    epoch_len: int = 4
    lc_enabled: bool = True
    bft_enabled: bool = True
    boycott: bool = True


@dataclass(frozen=True)
class TraceRow:
    slot: int
    node: NodeId
    awake: bool
    lenFin: int
    lenDa: int
    lcTip: Hash
    bftTip: Hash
    confTip: Hash


@dataclass
class VoteEvent:
    slot: int
    vote: VoteRecord
    snapshot: Hash


def epoch_of(slot: int, epoch_len: int) -> int:
    return slot // epoch_len + 1


class SacNode:
    """Single-owner node state; the simulator serializes all calls."""

    def __init__(self, node_id: NodeId, config: NodeConfig, cache: Optional[LedgerCache] = None):
        self.id = node_id
        self.cfg = config
        self.store = BlockStore(cache)
        self.lc = LcNodeState(self.store, config.k, node_id)
        self.bft = BftNodeState(config.n, self.store, node_id)
        self.trace: list[TraceRow] = []
        self.vote_log: list[VoteEvent] = []
        self._waiting: dict[Hash, list[Message]] = {}
        self._candidates: dict[int, list[BftBlock]] = {}
        self._last_prune = (None, None)
        # callbacks(kind, payload) for header-following observers
        self.listeners: list[Callable[[str, object], None]] = []

    # -- ledgers -------------------------------------------------------------
    @property
    def state(self) -> "SacNodeState":
        return SacNodeState(self.lc, self.bft, self.id, self.trace)

    def read_ledgers(self) -> tuple[Ledger, Ledger]:
        return read_ledgers(self)

    def confirmed_da(self) -> Ledger:
        return log_da(self.bft.finalizedTip, confirmed_tip(self.lc), self.store)

    # -- message handling ------------------------------------------------------
    def _emit(self, kind: str, payload) -> None:
        for cb in self.listeners:
            cb(kind, payload)

    def handle(self, msg: Message) -> None:
        if isinstance(msg, TxMsg):
            self.lc.add_to_mempool(msg.tx)
        elif isinstance(msg, VoteMsg):
            self.bft.add_vote(msg.vote)
        elif isinstance(msg, LcBlockMsg):
            self._accept_lc(msg)
        elif isinstance(msg, ProposalMsg):
            self._accept_bft(msg)

    def _park(self, dep: Hash, msg: Message) -> None:
        self._waiting.setdefault(dep, []).append(msg)

    def _release(self, h: Hash) -> None:
        for m in self._waiting.pop(h, ()):
            self.handle(m)

    def _accept_lc(self, msg: LcBlockMsg) -> None:
        block = msg.block
        if block.hash in self.store.lcBlocks:
            return
        dep = missing_lc_dependency(block, self.store)
        if dep is not None:
            self._park(dep, msg)
            return
        if not validate_lc_block(block, self.store):
            return
        self.lc.receive(block)
        self._emit("lc", block)
        self._release(block.hash)

    def _accept_bft(self, msg: ProposalMsg) -> None:
        block = msg.block
        if block.hash in self.store.bftBlocks:
            self._consider(block)
            return
        if block.proposer != epoch_leader(block.epoch, self.cfg.seed, self.cfg.n):
            return
        for dep in (block.prev, ):
            if dep not in self.store.bftBlocks:
                self._park(dep, msg)
                return
        if block.b not in self.store.lcBlocks:
            self._park(block.b, msg)
            return
        if not validate_bft_block(block, self.store):
            return
        self.bft.add_block(block)
        self._emit("bft", block)
        self._consider(block)
        self._release(block.hash)

    def _consider(self, block: BftBlock) -> None:
        if block.epoch == self.bft.epoch:
            cands = self._candidates.setdefault(block.epoch, [])
            if block not in cands:
                cands.append(block)

    # -- per-slot driver -------------------------------------------------------
    def on_slot(self, slot: int, inbox: list[Message]) -> list[Message]:
        epoch = epoch_of(slot, self.cfg.epoch_len)
        if epoch != self.bft.epoch:
            self.bft.epoch = epoch
            self._candidates = {e: c for e, c in self._candidates.items() if e >= epoch}
        for msg in inbox:
            self.handle(msg)
        out: list[Message] = []
        self.lc.finTip = self.bft.finalizedTip
        self._maybe_prune()

        # a block must advance past its parent's slot (rules out slot 0 on genesis)
        if (self.cfg.lc_enabled and slot > self.lc.store.lc(self.lc.tip).slot
                and lottery_win(self.id, slot, self.cfg.seed, self.cfg.lottery_p)):
            block = compose_lc_block(self.lc, slot, self.lc.mempool)
            self.lc.receive(block)
            self._emit("lc", block)
            out.append(LcBlockMsg(block))

        if self.cfg.bft_enabled:
            if slot % self.cfg.epoch_len == 0 and epoch_leader(epoch, self.cfg.seed, self.cfg.n) == self.id:
                prop = compose_bft_block(self.bft, confirmed_tip(self.lc), epoch=epoch, proposer=self.id)
                self.bft.add_block(prop)
                self._emit("bft", prop)
                self._consider(prop)
                out.append(ProposalMsg(prop))
            vote = self._try_vote(slot)
            if vote is not None:
                out.append(VoteMsg(vote))

        self.flush_certificates()
        self.lc.finTip = self.bft.finalizedTip
        return out

    def _try_vote(self, slot: int) -> Optional[VoteRecord]:
        epoch = self.bft.epoch
        if epoch in self.bft.votedEpochs:
            return None
        for prop in self._candidates.get(epoch, ()):
            if vote_rule(self.bft, prop, self.lc, boycott=self.cfg.boycott):
                vote = VoteRecord.streamlet(self.id, prop)
                self.bft.votedEpochs.add(epoch)
                self.bft.add_vote(vote)
                self.vote_log.append(VoteEvent(slot, vote, prop.b))
                return vote
        return None

    def flush_certificates(self) -> None:
        if self.bft.newly_notarized:
            fresh, self.bft.newly_notarized = self.bft.newly_notarized, []
            for h in fresh:
                self._emit("cert", (h, frozenset(self.bft.votes[h])))

    def _maybe_prune(self) -> None:
        key = (self.lc.finTip, self.lc.tip)
        if key != self._last_prune:
            self._last_prune = key
            self.lc.prune_mempool()

    def record(self, slot: int, awake: bool) -> TraceRow:
        fin, da = read_ledgers(self)
        row = TraceRow(slot, self.id, awake, len(fin), len(da), self.lc.tip,
                       self.bft.finalizedTip, confirmed_tip(self.lc))
        self.trace.append(row)
        return row


@dataclass
class SacNodeState:
    lc: LcNodeState
    bft: BftNodeState
    nodeId: NodeId
    trace: list = field(default_factory=list)


def read_ledgers(node: SacNode | SacNodeState) -> tuple[Ledger, Ledger]:
    lc, bft = node.lc, node.bft
    return log_fin(bft.finalizedTip, lc.store), log_da(bft.finalizedTip, lc.tip, lc.store)


def on_slot(node: SacNode, slot: int, inbox: list[Message]) -> tuple[SacNode, list[Message]]:
    out = node.on_slot(slot, inbox)
    return node, out
