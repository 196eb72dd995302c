"""Post-hoc theorem checks over a finished simulation trace.

Each check returns a ``CheckResult`` whose status is ``pass``, ``fail`` or
``n.a.``; a check is n.a. when the scenario does not meet the environment
the property is stated for.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core_types import Hash, Ledger
from .ledger_extraction import BlockStore, log_da, log_fin
from .netsim.scenario import Scenario, conflicting_tx_ids
from .netsim.simulator import TraceSet

CHECK_NAMES = ("prefix", "p1-safety", "p1-liveness", "p2-safety", "p2-liveness", "catchup")

PASS, FAIL, NA = "pass", "fail", "n.a."


@dataclass
class CheckResult:
    status: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"status": self.status, "detail": self.detail}


def _res(ok: bool, detail: str = "") -> CheckResult:
    return CheckResult(PASS if ok else FAIL, detail)


# -- applicability -------------------------------------------------------------------

def p1_applies(sc: Scenario) -> bool:
    return 3 * len(sc.adversaries.nodes) < sc.n


def p2_applies(sc: Scenario) -> bool:
    if sc.gst != 0 or sc.partitions:
        return False
    f = len(sc.adversaries.nodes)
    # only slots where someone falls asleep or wakes can change the ratio
    marks = {0} | {x for spans in sc.sleep.values() for s in spans for x in s}
    for slot in sorted(marks):
        if slot >= max(sc.slots, 1):
            continue
        awake = sum(1 for i in range(sc.n) if sc.awake(i, slot))
        if 2 * f >= awake:
            return False
    return True


# -- helpers ----------------------------------------------------------------------

def all_consistent(ledgers: Iterable[Ledger]) -> Optional[tuple[Ledger, Ledger]]:
    """None if the ledgers are pairwise prefix-consistent, else one bad pair."""
    uniq: dict[tuple, Ledger] = {}
    for led in ledgers:
        uniq.setdefault(led.ids, led)
    ordered = sorted(uniq.values(), key=len)
    for a, b in zip(ordered, ordered[1:]):
        if not a.is_prefix_of(b):
            return a, b
    return None


class _Ledgers:
    """Memoized ledger reads against the global block registry."""

    def __init__(self, store: BlockStore):
        self.store = store

    def fin(self, B: Hash) -> Ledger:
        return log_fin(B, self.store)

    def da(self, B: Hash, b: Hash) -> Ledger:
        return log_da(B, b, self.store)


def _measurable(trace: TraceSet, start: int, bound: int):
    """Scheduled txs sent to every node at or after ``start`` whose deadline
    falls inside the run, minus txs that share inputs with another."""
    sc = trace.scenario
    bad = conflicting_tx_ids(sc.txSchedule)
    return [t for t in sc.txSchedule
            if t.targets is None and t.slot >= start and t.slot + bound < sc.slots
            and t.tx.id not in bad]


# -- checks ---------------------------------------------------------------------

def check_prefix(trace: TraceSet) -> CheckResult:
    L = _Ledgers(trace.registry)
    seen: set[tuple[Hash, Hash]] = set()
    for r in trace.rows:
        key = (r.bftTip, r.lcTip)
        if key in seen:
            continue
        seen.add(key)
        if not L.fin(r.bftTip).is_prefix_of(L.da(r.bftTip, r.lcTip)):
            return _res(False, f"node {r.node} slot {r.slot}: LOG_fin not a prefix of LOG_da")
    return _res(True, f"{len(trace.rows)} rows")


def check_p1_safety(trace: TraceSet) -> CheckResult:
    sc = trace.scenario
    if not p1_applies(sc):
        return CheckResult(NA, "adversaries >= n/3")
    L = _Ledgers(trace.registry)
    honest = set(sc.honest)
    tips = {r.bftTip for r in trace.rows if r.node in honest}
    bad = all_consistent(L.fin(t) for t in tips)
    if bad:
        return _res(False, f"conflicting LOG_fin of lengths {len(bad[0])} and {len(bad[1])}")
    return _res(True, f"{len(tips)} distinct finalized tips")


def check_p1_liveness(trace: TraceSet) -> CheckResult:
    sc = trace.scenario
    if not p1_applies(sc):
        return CheckResult(NA, "adversaries >= n/3")
    bound = sc.t_fin()
    txs = _measurable(trace, max(sc.gst, sc.got), bound)
    if not txs:
        return CheckResult(NA, "no transaction injected after max(GST, GOT) with a deadline in range")
    L = _Ledgers(trace.registry)
    for t in txs:
        for r in trace.rows_at(t.slot + bound):
            if r.node in sc.adversaries.nodes:
                continue
            if t.tx.id not in L.fin(r.bftTip):
                return _res(False, f"{t.tx.id} (slot {t.slot}) missing from node {r.node} by "
                                   f"slot {t.slot + bound}")
    return _res(True, f"{len(txs)} txs finalized within {bound} slots")


def check_p2_safety(trace: TraceSet) -> CheckResult:
    sc = trace.scenario
    if not p2_applies(sc):
        return CheckResult(NA, "needs GST=0, no partitions and an awake honest majority")
    L = _Ledgers(trace.registry)
    honest = set(sc.honest)
    pairs = {(r.bftTip, r.confTip) for r in trace.rows if r.node in honest and r.awake}
    bad = all_consistent(L.da(B, b) for B, b in pairs)
    if bad:
        return _res(False, f"conflicting confirmed LOG_da of lengths {len(bad[0])} and {len(bad[1])}")
    return _res(True, f"{len(pairs)} distinct confirmed views")


def check_p2_liveness(trace: TraceSet) -> CheckResult:
    sc = trace.scenario
    if not p2_applies(sc):
        return CheckResult(NA, "needs GST=0, no partitions and an awake honest majority")
    bound = sc.t_da()
    txs = _measurable(trace, 0, bound)
    if not txs:
        return CheckResult(NA, "no measurable transactions")
    L = _Ledgers(trace.registry)
    for t in txs:
        for r in trace.rows_at(t.slot + bound):
            if r.node in sc.adversaries.nodes or not r.awake:
                continue
            if t.tx.id not in L.da(r.bftTip, r.lcTip):
                return _res(False, f"{t.tx.id} (slot {t.slot}) missing from node {r.node}'s "
                                   f"LOG_da by slot {t.slot + bound}")
    return _res(True, f"{len(txs)} txs available within {bound} slots")


@dataclass
class CatchupMeasure:
    start: int
    end: int
    finDuringWindow: tuple[int, int]
    watermark: int
    caughtUpAt: Optional[int]
    daGrowth: int = 0
    series: list = field(default_factory=list)


def measure_catchup(trace: TraceSet) -> Optional[CatchupMeasure]:
    sc = trace.scenario
    if not sc.partitions:
        return None
    p = min(sc.partitions, key=lambda p: p.startSlot)
    honest = sc.honest
    cells: dict[int, list[int]] = {}
    for i in honest:
        cells.setdefault(p.cell_of(i), []).append(i)
    major = max(cells.values(), key=lambda c: (len(c), [-x for x in c]))

    def min_fin(slot):
        return min(r.lenFin for r in trace.rows_at(slot) if r.node in honest)

    end = min(p.endSlot, sc.slots)
    window = [min_fin(s) for s in range(p.startSlot, end)]
    last = trace.rows_at(end - 1)
    first = trace.rows_at(p.startSlot)
    watermark = max(r.lenDa for r in last if r.node in major)
    da0 = max(r.lenDa for r in first if r.node in major)
    caught = None
    for s in range(end, min(sc.slots, end + sc.t_catchup() + 1)):
        if min_fin(s) >= watermark:
            caught = s
            break
    return CatchupMeasure(p.startSlot, end, (min(window), max(window)), watermark, caught,
                          watermark - da0)


def check_catchup(trace: TraceSet) -> CheckResult:
    sc = trace.scenario
    if not sc.partitions or not p1_applies(sc):
        return CheckResult(NA, "needs a partition and fewer than n/3 adversaries")
    m = measure_catchup(trace)
    lo, hi = m.finDuringWindow
    if lo != hi:
        return _res(False, f"min honest |LOG_fin| moved from {lo} to {hi} during the partition")
    if m.daGrowth <= 0:
        return _res(False, "majority-side LOG_da did not grow during the partition")
    if m.caughtUpAt is None:
        return _res(False, f"|LOG_fin| did not reach watermark {m.watermark} within "
                           f"{sc.t_catchup()} slots of healing")
    return _res(True, f"stalled at {lo}; reached {m.watermark} at slot {m.caughtUpAt} "
                      f"({m.caughtUpAt - m.end} slots after healing)")


CHECKS = {"prefix": check_prefix, "p1-safety": check_p1_safety, "p1-liveness": check_p1_liveness,
          "p2-safety": check_p2_safety, "p2-liveness": check_p2_liveness, "catchup": check_catchup}


def run_checks(trace: TraceSet) -> dict[str, CheckResult]:
    return {name: CHECKS[name](trace) for name in CHECK_NAMES}


def all_pass(results: dict[str, CheckResult]) -> bool:
    return all(r.status != FAIL for r in results.values())
