"""Declarative simulation input and its JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from ..core_types import Transaction, canonical_json, digest, Hash

STRATEGIES = ("honest-but-silent", "withholder", "lc-private-miner", "streamlet-equivocator",
              "double-spender", "lc-booster")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    startSlot: int
    endSlot: int
    cells: tuple[tuple[int, ...], ...]

    def cell_of(self, node: int) -> int:
        for i, c in enumerate(self.cells):
            if node in c:
                return i
        return -1 - node  # unlisted nodes are isolated singletons

    def active(self, slot: int) -> bool:
        return self.startSlot <= slot < self.endSlot


@dataclass(frozen=True)
class TxInjection:
    slot: int
    targets: Optional[tuple[int, ...]]  # None = every node
    tx: Transaction

    def reaches(self, node: int) -> bool:
        return self.targets is None or node in self.targets


@dataclass(frozen=True)
class Adversary:
    nodes: frozenset[int] = frozenset()
    strategy: str = "honest-but-silent"
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Bounds:
    T_fin: Optional[int] = None
    T_da: Optional[int] = None
    T_catchup: Optional[int] = None


@dataclass(frozen=True)
class Scenario:
    n: int
    slots: int
    adversaries: Adversary = Adversary()
    delta: int = 2
    gst: int = 0
    got: int = 0
    partitions: tuple[Partition, ...] = ()
    sleep: Mapping[int, tuple[tuple[int, int], ...]] = field(default_factory=dict)
    lotteryP: float = 0.02
    k: int = 6
    epochLen: int = 4
    seed: int = 0
    txSchedule: tuple[TxInjection, ...] = ()
    bounds: Bounds = Bounds()
    name: str = ""

    # -- derived -------------------------------------------------------------
    @property
    def honest(self) -> list[int]:
        return [i for i in range(self.n) if i not in self.adversaries.nodes]

    def t_fin(self) -> int:
        return self.bounds.T_fin if self.bounds.T_fin is not None else 10 * self.epochLen

    def t_da(self) -> int:
        return self.bounds.T_da if self.bounds.T_da is not None else 10 * self.k

    def t_catchup(self) -> int:
        return self.bounds.T_catchup if self.bounds.T_catchup is not None else 10 * self.k

    def awake(self, node: int, slot: int) -> bool:
        for a, b in self.sleep.get(node, ()):
            if a <= slot < b:
                return False
        return True

    def partition_at(self, slot: int) -> Optional[Partition]:
        for p in self.partitions:
            if p.active(slot):
                return p
        return None

    def validate(self) -> None:
        if self.n < 1:
            raise ScenarioError("n must be >= 1")
        if self.slots < 0:
            raise ScenarioError("slots must be >= 0")
        if self.delta < 1:
            raise ScenarioError("delta must be >= 1")
        if self.epochLen < 2 * self.delta:
            raise ScenarioError("epochLen must be at least 2*delta")
        if not 0.0 <= self.lotteryP <= 1.0:
            raise ScenarioError("lotteryP must be a probability")
        if self.k < 0 or self.gst < 0 or self.got < 0:
            raise ScenarioError("k, gst, got must be non-negative")
        adv = self.adversaries
        if any(not 0 <= a < self.n for a in adv.nodes):
            raise ScenarioError("adversary id out of range")
        if adv.strategy not in STRATEGIES:
            raise ScenarioError(f"unknown strategy {adv.strategy!r}")
        if adv.strategy == "streamlet-equivocator" and 3 * len(adv.nodes) <= self.n:
            raise ScenarioError("streamlet-equivocator needs more than n/3 adversaries")
        for node, spans in self.sleep.items():
            if node in adv.nodes:
                raise ScenarioError(f"adversary {node} cannot sleep")
            if not 0 <= node < self.n:
                raise ScenarioError(f"sleep schedule for unknown node {node}")
            for a, b in spans:
                if not 0 <= a < b:
                    raise ScenarioError(f"bad sleep span {(a, b)}")
                if b > self.got:
                    raise ScenarioError("honest nodes must be awake from got onwards")
        last_end = -1
        for p in sorted(self.partitions, key=lambda p: p.startSlot):
            if p.startSlot >= p.endSlot:
                raise ScenarioError("empty partition interval")
            if p.startSlot < last_end:
                raise ScenarioError("partitions overlap")
            if p.endSlot > self.gst:
                raise ScenarioError("partitions must end by gst")
            seen = [x for c in p.cells for x in c]
            if len(seen) != len(set(seen)) or any(not 0 <= x < self.n for x in seen):
                raise ScenarioError("partition cells must be disjoint node sets")
            last_end = p.endSlot
        ids = [t.tx.id for t in self.txSchedule]
        if len(ids) != len(set(ids)):
            raise ScenarioError("transaction ids must be unique")
        for t in self.txSchedule:
            if t.targets is not None and any(not 0 <= x < self.n for x in t.targets):
                raise ScenarioError("tx target out of range")

    # -- json ----------------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "slots": self.slots,
            "adversaries": {"nodes": sorted(self.adversaries.nodes),
                            "strategy": self.adversaries.strategy,
                            "params": dict(self.adversaries.params)},
            "delta": self.delta,
            "gst": self.gst,
            "got": self.got,
            "partitions": [[p.startSlot, p.endSlot, [list(c) for c in p.cells]]
                           for p in self.partitions],
            "sleep": {str(k): [list(s) for s in v] for k, v in sorted(self.sleep.items())},
            "lotteryP": self.lotteryP,
            "k": self.k,
            "epochLen": self.epochLen,
            "seed": self.seed,
            "txSchedule": [[t.slot, None if t.targets is None else list(t.targets), t.tx.to_json()]
                           for t in self.txSchedule],
            "bounds": {"T_fin": self.bounds.T_fin, "T_da": self.bounds.T_da,
                       "T_catchup": self.bounds.T_catchup},
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Scenario":
        if not isinstance(d, Mapping):
            raise ScenarioError("scenario must be a JSON object")
        try:
            adv = d.get("adversaries") or {}
            bounds = d.get("bounds") or {}
            sc = cls(
                name=str(d.get("name", "")),
                n=int(d["n"]),
                slots=int(d["slots"]),
                adversaries=Adversary(frozenset(int(x) for x in adv.get("nodes", ())),
                                      adv.get("strategy", "honest-but-silent"),
                                      dict(adv.get("params", {}))),
                delta=int(d.get("delta", 2)),
                gst=int(d.get("gst", 0)),
                got=int(d.get("got", 0)),
                partitions=tuple(Partition(int(a), int(b), tuple(tuple(int(x) for x in c) for c in cells))
                                 for a, b, cells in d.get("partitions", ())),
                sleep={int(k): tuple((int(a), int(b)) for a, b in v)
                       for k, v in (d.get("sleep") or {}).items()},
                lotteryP=float(d.get("lotteryP", 0.02)),
                k=int(d.get("k", 6)),
                epochLen=int(d.get("epochLen", 4)),
                seed=int(d.get("seed", 0)),
                txSchedule=tuple(TxInjection(int(s), None if tg is None else tuple(int(x) for x in tg),
                                             Transaction.from_json(tx))
                                 for s, tg, tx in d.get("txSchedule", ())),
                bounds=Bounds(bounds.get("T_fin"), bounds.get("T_da"), bounds.get("T_catchup")),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise ScenarioError(f"malformed scenario: {e}") from e
        sc.validate()
        return sc

    def digest(self) -> Hash:
        return digest(0x20, canonical_json(self.to_json()))

    def replace(self, **kw) -> "Scenario":
        from dataclasses import replace
        return replace(self, **kw)


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"scenario is not valid JSON: {e}") from e
    return Scenario.from_json(data)


def conflicting_tx_ids(schedule: Sequence[TxInjection]) -> set[str]:
    """Ids of scheduled transactions that share an input with another one."""
    by_input: dict[str, list[str]] = {}
    for t in schedule:
        for c in t.tx.inputs:
            by_input.setdefault(c, []).append(t.tx.id)
    out: set[str] = set()
    for ids in by_input.values():
        if len(ids) > 1:
            out.update(ids)
    return out
