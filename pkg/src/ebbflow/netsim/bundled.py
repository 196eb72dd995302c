"""Bundled scenarios and the transaction workload they share.

The JSON files under ``ebbflow/scenarios`` are generated from these
builders (``python -m ebbflow.netsim.bundled <dir>``) so the numbers live
in one place.
"""

from __future__ import annotations

import json
import sys
from importlib import resources
from pathlib import Path

from ..core_types import Transaction
from .scenario import Adversary, Bounds, Partition, Scenario, TxInjection, load_scenario

BUNDLED = ("p1_partition", "p2_baseline", "attack_equivocate")


def tx_workload(start: int, end: int, every: int, prefix: str = "t",
                targets=None) -> tuple[TxInjection, ...]:
    """A mint every ``every`` slots, each followed two slots later by a
    spend of the previous mint's coin."""
    out = []
    prev = None
    for i, slot in enumerate(range(start, end, every)):
        mint = Transaction.mint(f"{prefix}m{i}", 100)
        out.append(TxInjection(slot, targets, mint))
        if prev is not None and slot + 2 < end:
            out.append(TxInjection(slot + 2, targets,
                                   Transaction.create(f"{prefix}s{i}", [f"{prev.id}:0"], [60, 40])))
        prev = mint
    return tuple(out)


def p1_partition(seed: int = 0) -> Scenario:
    honest_a, honest_b, adv = (0, 1, 2, 3), (4, 5, 6), (7, 8, 9)
    txs = tx_workload(0, 3500, 25)
    txs += (TxInjection(2100, None, Transaction.mint("probe-2100", 1)),)
    return Scenario(
        name="p1_partition", n=10, slots=3600, seed=seed,
        adversaries=Adversary(frozenset(adv), "lc-booster"),
        delta=2, gst=2000, got=0, epochLen=20, lotteryP=0.02, k=6,
        partitions=(Partition(1400, 2000, (honest_a + adv, honest_b)),),
        txSchedule=txs, bounds=Bounds(T_fin=200, T_da=200, T_catchup=200))


def p2_baseline(seed: int = 0) -> Scenario:
    sleep = {
        0: ((100, 400),),
        1: ((300, 650),),
        2: ((500, 800),),
        3: ((700, 900),),
    }
    return Scenario(
        name="p2_baseline", n=10, slots=1600, seed=seed,
        adversaries=Adversary(frozenset({8, 9}), "lc-private-miner"),
        delta=2, gst=0, got=900, epochLen=20, lotteryP=0.02, k=6,
        sleep=sleep, txSchedule=tx_workload(0, 1500, 20),
        # two silent leaders in ten can stall finality for several epochs, so
        # the finality bound here is 20 epochs rather than 10
        bounds=Bounds(T_fin=400, T_da=200, T_catchup=200))


def attack_equivocate(seed: int = 0) -> Scenario:
    return Scenario(
        name="attack_equivocate", n=6, slots=700, seed=seed,
        adversaries=Adversary(frozenset({3, 4, 5}), "streamlet-equivocator"),
        delta=1, gst=500, got=0, epochLen=8, lotteryP=0.08, k=2,
        partitions=(Partition(60, 500, ((0, 1), (2,))),),
        txSchedule=tx_workload(0, 650, 10),
        bounds=Bounds(T_fin=80, T_da=60, T_catchup=60))


BUILDERS = {"p1_partition": p1_partition, "p2_baseline": p2_baseline,
            "attack_equivocate": attack_equivocate}


def bundled_path(name: str):
    return resources.files("ebbflow").joinpath("scenarios", f"{name}.json")


def load_bundled(name: str) -> Scenario:
    with resources.as_file(bundled_path(name)) as p:
        return load_scenario(p)


def write_bundled(directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, build in BUILDERS.items():
        text = json.dumps(build().to_json(), indent=1, sort_keys=True)
        (d / f"{name}.json").write_text(text + "\n")


if __name__ == "__main__":
    write_bundled(sys.argv[1] if len(sys.argv) > 1 else "scenarios")
