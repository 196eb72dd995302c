"""Replay a scenario with light clients attached and fire random SPV queries.

Every honest node gets two light clients (one per ledger) fed from that
node's own message history.  Queries run at the end of their slot, so the
light client and the full node it shadows see exactly the same blocks.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, asdict
from typing import Optional

from .checks import p1_applies, p2_applies
from .light_client import (FOLLOW_DA, FOLLOW_FIN, ByzantineProver, LightClientState, Prover,
                           follow, spv_available, spv_finalized)
from .ledger_extraction import log_fin
from .netsim.scenario import Scenario
from .netsim.simulator import Simulator

DEFAULT_MARGIN = 200


@dataclass
class SpvSummary:
    queries: int = 0
    accepted: int = 0
    unavailable: int = 0
    falseAccepts: int = 0
    gateFires: int = 0
    byzantineQueries: int = 0
    livenessChecked: int = 0
    livenessMisses: int = 0
    offenders: list = field(default_factory=list)
    misses: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    @property
    def ok(self) -> bool:
        return self.falseAccepts == 0 and self.livenessMisses == 0


@dataclass(frozen=True)
class Query:
    slot: int
    node: int
    tx: str
    mode: str
    byzantine: bool


def security_window_start(sc: Scenario, margin: int = DEFAULT_MARGIN) -> Optional[int]:
    """First slot from which the LC is considered secure, or None."""
    if p2_applies(sc):
        return 0
    if p1_applies(sc):
        return max(sc.gst, sc.got) + margin
    return None


def plan_queries(sc: Scenario, count: int, seed: int, byzantine_share: float = 0.5,
                 slots: Optional[tuple[int, int]] = None) -> list[Query]:
    rng = random.Random(f"spv:{seed}")
    honest = sc.honest
    lo, hi = slots if slots is not None else (0, sc.slots)
    injected = sorted(sc.txSchedule, key=lambda t: t.slot)
    out = []
    for i in range(count):
        slot = rng.randrange(lo, hi)
        known = [t.tx.id for t in injected if t.slot <= slot]
        r = rng.random()
        if known and r < 0.8:
            tx = rng.choice(known[-60:]) if rng.random() < 0.6 else rng.choice(known)
        elif r < 0.9:
            tx = f"ds-{rng.choice(known)}" if known else f"absent-{i}"
        else:
            tx = f"absent-{i}"
        out.append(Query(slot, rng.choice(honest), tx, rng.choice((FOLLOW_DA, FOLLOW_FIN)),
                         rng.random() < byzantine_share))
    out.sort(key=lambda q: (q.slot, q.node, q.tx))
    return out


def spv_fuzz(sc: Scenario, queries: int = 1000, seed: int = 0, byzantine_share: float = 0.5,
             margin: int = DEFAULT_MARGIN, plan: Optional[list[Query]] = None,
             byzantine_mode: str = "mixed") -> SpvSummary:
    clients: dict[tuple[int, str], LightClientState] = {}
    honest = set(sc.honest)

    def attach(node):
        if node.id in honest:
            for mode in (FOLLOW_DA, FOLLOW_FIN):
                c = LightClientState(sc.n, sc.k, mode)
                follow(node, c)
                clients[(node.id, mode)] = c

    sim = Simulator(sc, attach)
    plan = plan if plan is not None else plan_queries(sc, queries, seed, byzantine_share)
    by_slot: dict[int, list[Query]] = {}
    for q in plan:
        by_slot.setdefault(q.slot, []).append(q)
    honest_prover = Prover(sim.cache)
    liar = ByzantineProver(sim.cache, seed, byzantine_mode)
    window = security_window_start(sc, margin)
    summary = SpvSummary()

    def hook(slot, sim_):
        for q in by_slot.get(slot, ()):
            node = sim.nodes[q.node]
            client = clients[(q.node, q.mode)]
            prover = liar if q.byzantine else honest_prover
            if q.mode == FOLLOW_DA:
                before = client.gate_fires
                ans = spv_available(client, q.tx, prover)
                summary.gateFires += client.gate_fires - before
                full = node.confirmed_da()
            else:
                ans = spv_finalized(client, q.tx, prover)
                full = log_fin(node.bft.finalizedTip, node.store)
            summary.queries += 1
            summary.byzantineQueries += q.byzantine
            if ans.accepted:
                summary.accepted += 1
                if q.tx not in full:
                    summary.falseAccepts += 1
                    summary.offenders.append([slot, q.node, q.tx])
            else:
                summary.unavailable += 1
            if not q.byzantine and window is not None and slot >= window and q.tx in full:
                summary.livenessChecked += 1
                if not ans.accepted:
                    summary.livenessMisses += 1
                    summary.misses.append([slot, q.node, q.tx, q.mode])

    sim.run([hook])
    return summary
