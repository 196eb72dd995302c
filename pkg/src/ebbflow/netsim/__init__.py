"""Deterministic network simulator and adversary strategies."""

from .scenario import (Adversary, Bounds, Partition, Scenario, ScenarioError, TxInjection,
                       load_scenario)
from .simulator import Envelope, Send, Simulator, TraceSet, delivery_slot, run

__all__ = ["Adversary", "Bounds", "Envelope", "Partition", "Scenario", "ScenarioError", "Send",
           "Simulator", "TraceSet", "TxInjection", "delivery_slot", "load_scenario", "run"]
