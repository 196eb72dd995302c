"""Slot-driven discrete-event harness.

Every stochastic choice (delays, lotteries, leaders) is keyed off the
scenario seed, so a run is a pure function of its ``Scenario``.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from ..core_types import BftBlock, Hash, LcBlock, Transaction, VoteRecord, canonical_json, hexh
from ..bft_streamlet import Finalization
from ..ledger_extraction import BlockStore, LedgerCache, UnknownBlock
from ..node import (LcBlockMsg, Message, NodeConfig, ProposalMsg, SacNode, TraceRow, TxMsg,
                    VoteMsg)
from ..rng import keyed_randint
from .scenario import Partition, Scenario


@dataclass(frozen=True)
class Envelope:
    sender: int
    to: int
    payload: Message
    sendSlot: int
    deliverSlot: int

    def compact(self) -> list:
        return [self.sender, self.to, self.payload.kind, payload_id(self.payload),
                self.sendSlot, self.deliverSlot]


def payload_id(msg: Message) -> str:
    if isinstance(msg, (LcBlockMsg, ProposalMsg)):
        return hexh(msg.block.hash)
    if isinstance(msg, VoteMsg):
        return f"{msg.vote.voter}:{hexh(msg.vote.block)}"
    return msg.tx.id


@dataclass(frozen=True)
class Send:
    """An outbound message. ``targets`` None means every other node; an
    explicit tuple is honored as given.
    ``bypass`` marks adversarial out-of-band delivery (next slot, ignores
    partitions)."""

    sender: int
    msg: Message
    targets: Optional[tuple[int, ...]] = None
    bypass: bool = False


def delivery_slot(sc: Scenario, sender: int, to: int, send: int, seq: int) -> int:
    """Delivery slot under the synchrony contract of ``sc``."""
    if send >= sc.gst:
        deliver = send + keyed_randint(sc.seed, "delay", 1, sc.delta, sender, to, send, seq)
    else:
        deliver = send + keyed_randint(sc.seed, "delay", 1, 2 * sc.delta, sender, to, send, seq)
        deliver = min(deliver, sc.gst + sc.delta)
    while True:
        p = _blocking_partition(sc.partitions, sender, to, deliver)
        if p is None:
            return deliver
        deliver = p.endSlot + keyed_randint(sc.seed, "heal", 1, sc.delta, sender, to, send, seq)


def _blocking_partition(parts: Iterable[Partition], a: int, b: int, slot: int) -> Optional[Partition]:
    for p in parts:
        if p.active(slot) and p.cell_of(a) != p.cell_of(b):
            return p
    return None


@dataclass
class TraceSet:
    scenario: Scenario
    rows: list[TraceRow] = field(default_factory=list)
    envelopes: list[Envelope] = field(default_factory=list)
    votes: list[tuple[int, VoteRecord]] = field(default_factory=list)
    finalizations: list[tuple[int, int, Finalization]] = field(default_factory=list)
    injections: list[tuple[int, int, str]] = field(default_factory=list)
    registry: BlockStore = field(default_factory=BlockStore)
    nodes: list[SacNode] = field(default_factory=list, repr=False)
    witness: Optional[dict] = None

    @property
    def store(self) -> BlockStore:
        return self.registry

    def rows_at(self, slot: int) -> list[TraceRow]:
        n = self.scenario.n
        return self.rows[slot * n:(slot + 1) * n]

    def vote_records(self) -> list[VoteRecord]:
        return [v for _, v in self.votes]

    # -- export ----------------------------------------------------------------
    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "node", "lenFin", "lenDa", "lcTip", "bftTip"])
        for r in self.rows:
            w.writerow([r.slot, r.node, r.lenFin, r.lenDa, hexh(r.lcTip), hexh(r.bftTip)])
        return buf.getvalue()

    def transcript(self) -> dict:
        reg = self.registry
        lc = sorted(reg.lcBlocks.values(), key=lambda b: (reg.height(b.hash), b.hash))
        bft = sorted(reg.bftBlocks.values(), key=lambda b: (b.depth, b.hash))
        out = {
            "n": self.scenario.n,
            "scenario": self.scenario.name,
            "lcBlocks": [b.to_json() for b in lc],
            "bftBlocks": [b.to_json() for b in bft],
            "votes": [dict(v.to_json(), slot=s) for s, v in self.votes],
            "envelopes": [e.compact() for e in self.envelopes],
            "injections": [list(x) for x in self.injections],
            "finalizations": [dict(f.to_json(), slot=s, node=i) for s, i, f in self.finalizations],
        }
        if self.witness is not None:
            out["witness"] = self.witness
        return out

    def transcript_json(self) -> str:
        return canonical_json(self.transcript()).decode() + "\n"


class Simulator:
    def __init__(self, sc: Scenario, attach: Optional[Callable[[SacNode], None]] = None):
        from .adversary import make_strategy
        sc.validate()
        self.sc = sc
        self.cache = LedgerCache()
        self.trace = TraceSet(sc, registry=BlockStore(self.cache))
        self.nodes: list[SacNode] = []
        for i in range(sc.n):
            cfg = NodeConfig(n=sc.n, k=sc.k, seed=sc.seed, lottery_p=sc.lotteryP,
                             epoch_len=sc.epochLen)
            node = SacNode(i, cfg, self.cache)
            node.listeners.append(self._observe)
            if attach is not None:
                attach(node)
            self.nodes.append(node)
        self.trace.nodes = self.nodes
        self.adversaries = frozenset(sc.adversaries.nodes)
        self.strategy = make_strategy(self, sc.adversaries.strategy, sc.adversaries.nodes,
                                      sc.adversaries.params)
        self._queues: list[list] = [[] for _ in range(sc.n)]
        self._seq = 0
        self._send_count: dict[tuple[int, int], int] = {}
        self._seen_votes: set[tuple[int, Hash]] = set()
        self._fin_seen = [0] * sc.n
        self._tx_at: dict[int, list] = {}
        for inj in sc.txSchedule:
            self._tx_at.setdefault(inj.slot, []).append(inj)
        self.slot = -1

    # -- registry ----------------------------------------------------------------
    def _observe(self, kind: str, payload) -> None:
        if kind == "lc":
            self.register(payload)
        elif kind == "bft":
            self.register(payload)

    def register(self, block) -> None:
        try:
            if isinstance(block, LcBlock):
                self.trace.registry.add_lc(block)
            elif isinstance(block, BftBlock):
                self.trace.registry.add_bft(block)
        except UnknownBlock:  # parent is registered by construction; defensive only
            pass

    # -- delivery --------------------------------------------------------------
    def _push(self, to: int, deliver: int, item) -> None:
        self._seq += 1
        heapq.heappush(self._queues[to], (deliver, self._seq, item))

    def send(self, s: Send, slot: int) -> None:
        msg = s.msg
        if isinstance(msg, (LcBlockMsg, ProposalMsg)):
            self.register(msg.block)
        elif isinstance(msg, VoteMsg):
            key = (msg.vote.voter, msg.vote.block)
            if key not in self._seen_votes:
                self._seen_votes.add(key)
                self.trace.votes.append((slot, msg.vote))
        if s.targets is None:
            targets = [i for i in range(self.sc.n) if i != s.sender]
        else:
            targets = s.targets  # explicit lists may include the sender itself
        for to in targets:
            seq = self._send_count.get((s.sender, slot), 0)
            self._send_count[(s.sender, slot)] = seq + 1
            if s.bypass:
                deliver = slot + 1
            else:
                deliver = delivery_slot(self.sc, s.sender, to, slot, seq)
            env = Envelope(s.sender, to, msg, slot, deliver)
            self.trace.envelopes.append(env)
            self._push(to, deliver, msg)

    def _inbox(self, node: int, slot: int) -> list[Message]:
        q = self._queues[node]
        out = []
        while q and q[0][0] <= slot:
            out.append(heapq.heappop(q)[2])
        return out

    # -- main loop -------------------------------------------------------------
    def step(self, slot: int) -> None:
        sc = self.sc
        self.slot = slot
        self._send_count = {}
        for inj in self._tx_at.get(slot, ()):
            for i in range(sc.n):
                if inj.reaches(i):
                    self._push(i, slot, TxMsg(inj.tx))
                    self.trace.injections.append((slot, i, inj.tx.id))
        self.strategy.before(slot)
        outs: list[tuple[int, list[Message]]] = []
        for node in self.nodes:
            if not sc.awake(node.id, slot):
                continue
            outs.append((node.id, node.on_slot(slot, self._inbox(node.id, slot))))
        for nid, msgs in outs:
            if nid in self.adversaries:
                sends = self.strategy.filter(nid, slot, msgs)
            else:
                sends = [Send(nid, m) for m in msgs]
            for s in sends:
                self.send(s, slot)
        for s in self.strategy.step(slot):
            self.send(s, slot)
        for node in self.nodes:
            fins = node.bft.finalizations
            for f in fins[self._fin_seen[node.id]:]:
                self.trace.finalizations.append((slot, node.id, f))
            self._fin_seen[node.id] = len(fins)
            node.record(slot, sc.awake(node.id, slot))
            self.trace.rows.append(node.trace[-1])

    def run(self, hooks: Iterable[Callable[[int, "Simulator"], None]] = ()) -> TraceSet:
        hooks = list(hooks)
        for slot in range(self.sc.slots):
            self.step(slot)
            for h in hooks:
                h(slot, self)
        self.trace.witness = find_witness(self.trace)
        return self.trace


def run(scenario: Scenario, attach=None, hooks=()) -> TraceSet:
    return Simulator(scenario, attach).run(hooks)


def find_witness(trace: TraceSet) -> Optional[dict]:
    """First pair of finalization events whose final blocks conflict."""
    from ..forensics import make_witness
    reg = trace.registry
    seen: list[Finalization] = []
    keys: set[Hash] = set()
    for _, _, f in trace.finalizations:
        if f.b2 in keys:
            continue
        for g in seen:
            if not (reg.bft_is_ancestor(f.b2, g.b2) or reg.bft_is_ancestor(g.b2, f.b2)):
                return make_witness(g, f, trace.vote_records(), reg)
        keys.add(f.b2)
        seen.append(f)
    return None
