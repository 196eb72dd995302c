"""Scripted adversary strategies.

Adversary nodes run an ordinary ``SacNode`` underneath; a strategy decides
what that node's outbound traffic turns into (``filter``) and may inject
extra traffic after seeing every honest message of the slot (``step``, the
rushing hook).  Strategies read simulator internals freely, which models
full transcript visibility.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any, Mapping, Optional

from ..bft_streamlet import compose_bft_block, epoch_leader
from ..core_types import Hash, Transaction, VoteRecord
from ..lc_chain import LcNodeState, compose_lc_block, confirmed_tip, lottery_win
from ..node import LcBlockMsg, Message, ProposalMsg, TxMsg, VoteMsg
from .scenario import Partition, ScenarioError

if TYPE_CHECKING:
    from .simulator import Send, Simulator


class Strategy:
    name = "base"

    def __init__(self, sim: "Simulator", nodes, params: Mapping[str, Any]):
        self.sim = sim
        self.nodes = sorted(nodes)
        self.params = dict(params)

    @property
    def honest(self) -> list[int]:
        return [i for i in range(self.sim.sc.n) if i not in self.sim.adversaries]

    def before(self, slot: int) -> None:
        pass

    def filter(self, node: int, slot: int, msgs: list[Message]) -> list["Send"]:
        return []

    def step(self, slot: int) -> list["Send"]:
        return []

    def _send(self, *a, **kw) -> "Send":
        from .simulator import Send
        return Send(*a, **kw)

    def _honest_sends(self, node: int, msgs) -> list["Send"]:
        return [self._send(node, m) for m in msgs]


class HonestButSilent(Strategy):
    """Runs the protocol locally and never speaks."""

    name = "honest-but-silent"


class Withholder(Strategy):
    """Shares LC blocks only with fellow adversaries until ``release_slot``,
    then publishes everything held back.  Silent in BFT."""

    name = "withholder"

    def __init__(self, sim, nodes, params):
        super().__init__(sim, nodes, params)
        self.release = int(self.params.get("release_slot", sim.sc.gst))
        self.held: list["Send"] = []

    def filter(self, node, slot, msgs):
        out = []
        for m in msgs:
            if not isinstance(m, LcBlockMsg):
                continue
            if slot < self.release:
                peers = tuple(x for x in self.nodes if x != node)
                out.append(self._send(node, m, peers))
                self.held.append(self._send(node, m))
            else:
                out.append(self._send(node, m))
        return out

    def step(self, slot):
        if slot == self.release and self.held:
            held, self.held = self.held, []
            return held
        return []


class LcPrivateMiner(Strategy):
    """Coalition mines a private LC fork and publishes it once the public
    chain is about to catch up.  Silent in BFT."""

    name = "lc-private-miner"

    def __init__(self, sim, nodes, params):
        super().__init__(sim, nodes, params)
        self.lead = sim.nodes[self.nodes[0]]
        self.priv = LcNodeState(self.lead.store, sim.sc.k, self.lead.id)
        self.unreleased: list = []

    def _public_height(self) -> int:
        reg = self.sim.trace.registry
        return max(reg.height(self.sim.nodes[i].lc.tip) for i in self.honest)

    def filter(self, node, slot, msgs):
        return []

    def step(self, slot):
        sc = self.sim.sc
        store = self.lead.store
        pub = self._public_height()
        if store.height(self.priv.tip) < pub:
            # fell behind: abandon the fork and restart from the lead's view
            self.priv.tip = self.lead.lc.tip
            self.unreleased = []
        for a in self.nodes:
            if store.lc(self.priv.tip).slot >= slot:
                break
            if lottery_win(a, slot, sc.seed, sc.lotteryP):
                parent_ref = store.bft(store.lc(self.priv.tip).auxref)
                fin = store.bft(self.lead.bft.finalizedTip)
                self.priv.finTip = fin.hash if fin.depth >= parent_ref.depth else parent_ref.hash
                blk = compose_lc_block(self.priv, slot, self.lead.lc.mempool, producer=a)
                self.priv.receive(blk)
                self.sim.register(blk)
                self.unreleased.append(blk)
                break  # one private block per slot
        priv_h = store.height(self.priv.tip)
        if self.unreleased and priv_h > pub and pub >= priv_h - 1:
            blocks, self.unreleased = self.unreleased, []
            everyone = tuple(range(sc.n))
            return [self._send(b.producer, LcBlockMsg(b), everyone) for b in blocks]
        return []


class DoubleSpender(Strategy):
    """Mines honestly but seeds its own blocks and the honest mempools with
    conflicting spends of pending transactions.  Silent in BFT."""

    name = "double-spender"

    def __init__(self, sim, nodes, params):
        super().__init__(sim, nodes, params)
        self.spent: set[str] = set()
        self.fresh: list[Transaction] = []

    def before(self, slot):
        self.fresh = []
        for a in self.nodes:
            node = self.sim.nodes[a]
            for tx in list(node.lc.mempool):
                if tx.is_mint or tx.id in self.spent or tx.id.startswith("ds-"):
                    continue
                self.spent.add(tx.id)
                total = sum(amt for _, amt in tx.outputs)
                ds = Transaction.create(f"ds-{tx.id}", tx.inputs, [total])
                node.lc.mempool.insert(0, ds)
                node.lc._mempool_ids.add(ds.id)
                self.fresh.append(ds)

    def filter(self, node, slot, msgs):
        out = [self._send(node, m) for m in msgs if isinstance(m, LcBlockMsg)]
        if node == self.nodes[0]:
            out += [self._send(node, TxMsg(tx)) for tx in self.fresh]
        return out


class LcBooster(Strategy):
    """During a partition, lends mining power to the LC chain of the cell
    with fewer honest nodes and votes (without the boycott rule) inside its
    own cell.  Honest outside partition windows.

    The effect is that the finalized ledger built on the larger cell carries
    snapshots the LC later abandons, which is exactly the stale-metadata
    situation a light client has to detect."""

    name = "lc-booster"

    def _partition(self, slot) -> Optional[Partition]:
        return self.sim.sc.partition_at(slot)

    def _favored(self, p: Partition) -> tuple[int, ...]:
        adv = set(self.nodes)
        cells = [tuple(x for x in c if x not in adv) for c in p.cells]
        cells = [c for c in cells if c]
        return min(cells, key=lambda c: (len(c), c))

    def before(self, slot):
        boycott = self._partition(slot) is None
        for a in self.nodes:
            self.sim.nodes[a].cfg.boycott = boycott

    def filter(self, node, slot, msgs):
        if self._partition(slot) is None:
            return self._honest_sends(node, msgs)
        return [self._send(node, m) for m in msgs if not isinstance(m, LcBlockMsg)]

    def __init__(self, sim, nodes, params):
        super().__init__(sim, nodes, params)
        self.boosted: list = []

    def step(self, slot):
        p = self._partition(slot)
        if p is None:
            # publish the boosted chain to everyone once the network heals
            held, self.boosted = self.boosted, []
            everyone = tuple(range(self.sim.sc.n))
            return [self._send(b.producer, LcBlockMsg(b), everyone) for b in held]
        sc = self.sim.sc
        cell = self._favored(p)
        rep = self.sim.nodes[cell[0]]
        out = []
        targets = tuple(sorted(set(cell) | set(self.nodes)))
        winners = [a for a in self.nodes if lottery_win(a, slot, sc.seed, sc.lotteryP)]
        if winners and rep.store.lc(rep.lc.tip).slot < slot:
            # read-only view of the favored node; one block per slot is enough
            view = LcNodeState(rep.store, sc.k, winners[0])
            view.tip, view.finTip = rep.lc.tip, rep.lc.finTip
            blk = compose_lc_block(view, slot, rep.lc.mempool)
            self.sim.register(blk)
            self.boosted.append(blk)
            out.append(self._send(winners[0], LcBlockMsg(blk), targets, bypass=True))
        return out


class StreamletEquivocator(Strategy):
    """Splits the honest nodes along the scripted partition and completes a
    notarization quorum on every side, so each side finalizes its own chain.

    Needs more than n/3 adversaries.  Acts only inside partition windows and
    behaves honestly elsewhere."""

    name = "streamlet-equivocator"

    def __init__(self, sim, nodes, params):
        super().__init__(sim, nodes, params)
        if 3 * len(self.nodes) <= sim.sc.n:
            raise ScenarioError("streamlet-equivocator needs more than n/3 adversaries")
        self.voted: set[tuple[int, Hash]] = set()

    def _cells(self, p: Partition) -> list[tuple[int, ...]]:
        adv = set(self.nodes)
        honest = [i for i in range(self.sim.sc.n) if i not in adv]
        cells: dict[int, list[int]] = {}
        for i in honest:
            cells.setdefault(p.cell_of(i), []).append(i)
        return [tuple(v) for _, v in sorted(cells.items(), key=lambda kv: kv[1])]

    def filter(self, node, slot, msgs):
        if self.sim.sc.partition_at(slot) is None:
            return self._honest_sends(node, msgs)
        return []

    def _common_confirmed(self, cell) -> Hash:
        reg = self.sim.trace.registry
        tips = [confirmed_tip(self.sim.nodes[i].lc) for i in cell]
        base = min(tips, key=lambda h: reg.height(h))
        h = reg.height(base)
        while True:
            cand = reg.lc_ancestor_at(base, h)
            if all(reg.lc_is_ancestor(cand, t) for t in tips):
                return cand
            h -= 1

    def _parent(self, cell) -> Hash:
        sets = [self.sim.nodes[i].bft.best_tips for i in cell]
        common = set.intersection(*map(set, sets))
        return min(common) if common else min(sets[0])

    def step(self, slot):
        sc = self.sim.sc
        p = sc.partition_at(slot)
        if p is None:
            return []
        epoch = slot // sc.epochLen + 1
        leader = epoch_leader(epoch, sc.seed, sc.n)
        out = []
        for cell in self._cells(p):
            rep = self.sim.nodes[cell[0]]
            targets = tuple(cell) + tuple(self.nodes)
            prop = None
            if leader in self.nodes and slot % sc.epochLen == 0:
                prop = compose_bft_block(rep.bft, self._common_confirmed(cell), store=rep.store,
                                         epoch=epoch, proposer=leader, parent=self._parent(cell))
                out.append(self._send(leader, ProposalMsg(prop), targets, bypass=True))
            else:
                for c in rep._candidates.get(epoch, ()):
                    if c.proposer == leader:
                        prop = c
                        break
            if prop is None:
                continue
            for a in self.nodes:
                if (a, prop.hash) in self.voted:
                    continue
                self.voted.add((a, prop.hash))
                out.append(self._send(a, VoteMsg(VoteRecord.streamlet(a, prop)), targets, bypass=True))
        return out


STRATEGY_CLASSES = {c.name: c for c in (HonestButSilent, Withholder, LcPrivateMiner,
                                         DoubleSpender, LcBooster, StreamletEquivocator)}


def make_strategy(sim: "Simulator", name: str, nodes, params) -> Strategy:
    try:
        cls = STRATEGY_CLASSES[name]
    except KeyError:
        raise ScenarioError(f"unknown strategy {name!r}") from None
    return cls(sim, nodes, params)


def adversary_step(strategy: Strategy, slot: int) -> list:
    """Messages the strategy injects at ``slot`` (after honest traffic)."""
    return [s.msg for s in strategy.step(slot)]
