"""Snap-and-chat ebb-and-flow consensus: ledgers, sub-protocols, a network
simulator, forensics and light clients."""

__version__ = "0.1.0"
