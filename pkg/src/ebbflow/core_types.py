"""Canonical data model shared by every module.

Encoding
--------
Every core value serializes to ``tag || canonical-json`` where ``tag`` is a
one-byte type tag (see ``Tag``) and the JSON is UTF-8 with sorted keys and no
insignificant whitespace.  Hashes appear in JSON as lowercase hex.  Digests
are SHA-256 over ``tag || payload`` so block identities, transaction leaves
and Merkle nodes can never collide across types.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Optional, Sequence

Hash = bytes
NodeId = int

HASH_LEN = 32
ZERO_HASH: Hash = bytes(HASH_LEN)


class Tag(IntEnum):
    MERKLE_LEAF = 0x00
    MERKLE_NODE = 0x01
    TX = 0x10
    LC_BLOCK = 0x11
    BFT_BLOCK = 0x12
    VOTE = 0x13
    LEDGER = 0x14
    UTXO = 0x15
    TX_LIST = 0x16
    LC_HEADER = 0x17


def digest(tag: int, payload: bytes) -> Hash:
    return hashlib.sha256(bytes([tag]) + payload).digest()


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def hexh(h: Hash) -> str:
    return h.hex()


def unhex(s: str) -> Hash:
    h = bytes.fromhex(s)
    if len(h) != HASH_LEN:
        raise ValueError(f"hash must be {HASH_LEN} bytes, got {len(h)}")
    return h


class InvalidTransaction(ValueError):
    """Raised when applying a transaction that is not valid for the state."""


@dataclass(frozen=True)
class Transaction:
    id: str
    inputs: tuple[str, ...]
    outputs: tuple[tuple[str, int], ...]

    @classmethod
    def create(cls, tx_id: str, inputs: Sequence[str], amounts: Sequence[int]) -> "Transaction":
        """Build a transaction whose output coin ids are ``<tx_id>:<index>``."""
        outs = tuple((f"{tx_id}:{i}", int(a)) for i, a in enumerate(amounts))
        return cls(tx_id, tuple(inputs), outs)

    @classmethod
    def mint(cls, tx_id: str, amount: int) -> "Transaction":
        return cls.create(tx_id, (), (amount,))

    @property
    def is_mint(self) -> bool:
        return not self.inputs

    def to_json(self) -> dict:
        return {"id": self.id, "inputs": list(self.inputs),
                "outputs": [[c, a] for c, a in self.outputs]}

    @classmethod
    def from_json(cls, d: Mapping) -> "Transaction":
        return cls(str(d["id"]), tuple(d["inputs"]), tuple((str(c), int(a)) for c, a in d["outputs"]))

    @cached_property
    def leaf_hash(self) -> Hash:
        return digest(Tag.MERKLE_LEAF, serialize(self))


def txs_digest(txs: Sequence[Transaction]) -> Hash:
    return digest(Tag.TX_LIST, canonical_json([t.to_json() for t in txs]))


# -- transaction validity ---------------------------------------------------
#
# The dict-based helpers below are the hot path used by ledger extraction;
# ``tx_valid``/``apply_tx`` are the public, pure wrappers.

def _valid_in(tx: Transaction, coins: Mapping[str, int],
              mint_authority: Optional[frozenset] = None) -> bool:
    out_ids = [c for c, _ in tx.outputs]
    if len(set(out_ids)) != len(out_ids) or any(c in coins for c in out_ids):
        return False
    if any(a < 0 for _, a in tx.outputs):
        return False
    if tx.is_mint:
        return bool(tx.outputs) and (mint_authority is None or tx.id in mint_authority)
    if len(set(tx.inputs)) != len(tx.inputs):
        return False
    total_in = 0
    for c in tx.inputs:
        amt = coins.get(c)
        if amt is None:
            return False
        total_in += amt
    return total_in >= sum(a for _, a in tx.outputs)


def _apply_in(tx: Transaction, coins: dict) -> None:
    for c in tx.inputs:
        del coins[c]
    for c, a in tx.outputs:
        coins[c] = a


@dataclass(frozen=True)
class UtxoState:
    """Immutable set of unspent coins."""

    _coins: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_coins", MappingProxyType(dict(self._coins)))

    @property
    def unspent(self) -> frozenset[tuple[str, int]]:
        return frozenset(self._coins.items())

    def __contains__(self, coin: str) -> bool:
        return coin in self._coins

    def amount(self, coin: str) -> Optional[int]:
        return self._coins.get(coin)

    def __len__(self) -> int:
        return len(self._coins)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, UtxoState) and dict(self._coins) == dict(other._coins)

    def __hash__(self) -> int:
        return hash(self.unspent)

    def to_json(self) -> dict:
        return {"unspent": [[c, a] for c, a in sorted(self._coins.items())]}

    @classmethod
    def from_json(cls, d: Mapping) -> "UtxoState":
        return cls({str(c): int(a) for c, a in d["unspent"]})


def tx_valid(tx: Transaction, state: UtxoState, mint_authority: Optional[Iterable[str]] = None) -> bool:
    """Every input unspent and inputs cover outputs; mints need authorization.

    ``mint_authority=None`` authorizes every mint (scenario-issued faucet txs).
    """
    auth = None if mint_authority is None else frozenset(mint_authority)
    return _valid_in(tx, state._coins, auth)


def apply_tx(tx: Transaction, state: UtxoState, mint_authority: Optional[Iterable[str]] = None) -> UtxoState:
    if not tx_valid(tx, state, mint_authority):
        raise InvalidTransaction(f"transaction {tx.id!r} is not valid for this state")
    coins = dict(state._coins)
    _apply_in(tx, coins)
    return UtxoState(coins)


# -- blocks -------------------------------------------------------------------

@dataclass(frozen=True)
class LcBlock:
    hash: Hash
    prev: Hash
    slot: int
    producer: NodeId
    txs: tuple[Transaction, ...]
    auxref: Hash
    auxinnov: Hash

    @classmethod
    def create(cls, prev: Hash, slot: int, producer: NodeId, txs: Sequence[Transaction],
               auxref: Hash, auxinnov: Hash) -> "LcBlock":
        txs = tuple(txs)
        h = lc_header_hash(prev, slot, producer, txs_digest(txs), auxref, auxinnov)
        return cls(h, prev, slot, producer, txs, auxref, auxinnov)

    @cached_property
    def txs_digest(self) -> Hash:
        return txs_digest(self.txs)

    def header(self) -> "LcHeader":
        return LcHeader(self.hash, self.prev, self.slot, self.producer, self.txs_digest,
                        self.auxref, self.auxinnov)

    def to_json(self) -> dict:
        return {"hash": hexh(self.hash), "prev": hexh(self.prev), "slot": self.slot,
                "producer": self.producer, "txs": [t.to_json() for t in self.txs],
                "auxref": hexh(self.auxref), "auxinnov": hexh(self.auxinnov)}

    @classmethod
    def from_json(cls, d: Mapping) -> "LcBlock":
        return cls(unhex(d["hash"]), unhex(d["prev"]), int(d["slot"]), int(d["producer"]),
                   tuple(Transaction.from_json(t) for t in d["txs"]),
                   unhex(d["auxref"]), unhex(d["auxinnov"]))


def lc_header_hash(prev: Hash, slot: int, producer: NodeId, body: Hash,
                   auxref: Hash, auxinnov: Hash) -> Hash:
    return digest(Tag.LC_BLOCK, canonical_json(
        [hexh(prev), slot, producer, hexh(body), hexh(auxref), hexh(auxinnov)]))


@dataclass(frozen=True)
class LcHeader:
    """LC block without its transactions; ``txsDigest`` binds the body."""

    hash: Hash
    prev: Hash
    slot: int
    producer: NodeId
    txsDigest: Hash
    auxref: Hash
    auxinnov: Hash

    def hash_ok(self) -> bool:
        return self.hash == lc_header_hash(self.prev, self.slot, self.producer,
                                           self.txsDigest, self.auxref, self.auxinnov)

    def to_json(self) -> dict:
        return {"hash": hexh(self.hash), "prev": hexh(self.prev), "slot": self.slot,
                "producer": self.producer, "txsDigest": hexh(self.txsDigest),
                "auxref": hexh(self.auxref), "auxinnov": hexh(self.auxinnov)}

    @classmethod
    def from_json(cls, d: Mapping) -> "LcHeader":
        return cls(unhex(d["hash"]), unhex(d["prev"]), int(d["slot"]), int(d["producer"]),
                   unhex(d["txsDigest"]), unhex(d["auxref"]), unhex(d["auxinnov"]))


@dataclass(frozen=True)
class BftBlock:
    hash: Hash
    prev: Hash
    epoch: int
    proposer: NodeId
    b: Hash
    auxinnov: Hash
    depth: int

    @classmethod
    def create(cls, prev: Hash, epoch: int, proposer: NodeId, b: Hash, auxinnov: Hash,
               depth: int) -> "BftBlock":
        h = digest(Tag.BFT_BLOCK, canonical_json(
            [hexh(prev), epoch, proposer, hexh(b), hexh(auxinnov), depth]))
        return cls(h, prev, epoch, proposer, b, auxinnov, depth)

    def hash_ok(self) -> bool:
        return self == BftBlock.create(self.prev, self.epoch, self.proposer, self.b,
                                       self.auxinnov, self.depth)

    def to_json(self) -> dict:
        return {"hash": hexh(self.hash), "prev": hexh(self.prev), "epoch": self.epoch,
                "proposer": self.proposer, "b": hexh(self.b), "auxinnov": hexh(self.auxinnov),
                "depth": self.depth}

    @classmethod
    def from_json(cls, d: Mapping) -> "BftBlock":
        return cls(unhex(d["hash"]), unhex(d["prev"]), int(d["epoch"]), int(d["proposer"]),
                   unhex(d["b"]), unhex(d["auxinnov"]), int(d["depth"]))


# Genesis blocks.  BFT genesis points at no snapshot; LC genesis references
# BFT genesis as its finalized-ledger anchor.  Producer -1 marks "no validator".
EMPTY_ROOT: Hash = ZERO_HASH
BFT_GENESIS = BftBlock.create(ZERO_HASH, 0, -1, ZERO_HASH, EMPTY_ROOT, 0)
LC_GENESIS = LcBlock.create(ZERO_HASH, 0, -1, (), BFT_GENESIS.hash, EMPTY_ROOT)


# -- votes --------------------------------------------------------------------

PROTOCOLS = ("streamlet", "hotstuff")
VOTE_TYPES = ("generic", "prepare", "precommit", "commit")


@dataclass(frozen=True, order=True)
class VoteRecord:
    voter: NodeId
    protocol: str
    epochOrView: int
    voteType: str
    block: Hash
    blockDepth: int

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.voteType not in VOTE_TYPES:
            raise ValueError(f"unknown vote type {self.voteType!r}")
        if self.protocol == "streamlet" and self.voteType != "generic":
            raise ValueError("streamlet votes carry voteType 'generic'")

    @classmethod
    def streamlet(cls, voter: NodeId, block: BftBlock) -> "VoteRecord":
        return cls(voter, "streamlet", block.epoch, "generic", block.hash, block.depth)

    def to_json(self) -> dict:
        return {"voter": self.voter, "protocol": self.protocol, "epochOrView": self.epochOrView,
                "voteType": self.voteType, "block": hexh(self.block), "blockDepth": self.blockDepth}

    @classmethod
    def from_json(cls, d: Mapping) -> "VoteRecord":
        return cls(int(d["voter"]), d["protocol"], int(d["epochOrView"]), d["voteType"],
                   unhex(d["block"]), int(d["blockDepth"]))


# -- ledgers ------------------------------------------------------------------

@dataclass(frozen=True)
class Ledger:
    txs: tuple[Transaction, ...] = ()

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.txs)

    def __len__(self) -> int:
        return len(self.txs)

    def __iter__(self):
        return iter(self.txs)

    def __contains__(self, tx_id: object) -> bool:
        return tx_id in self._idset

    @cached_property
    def _idset(self) -> frozenset:
        return frozenset(self.ids)

    def is_prefix_of(self, other: "Ledger") -> bool:
        n = len(self.txs)
        return n <= len(other.txs) and other.ids[:n] == self.ids

    def consistent_with(self, other: "Ledger") -> bool:
        return self.is_prefix_of(other) or other.is_prefix_of(self)

    def to_json(self) -> dict:
        return {"txs": [t.to_json() for t in self.txs]}

    @classmethod
    def from_json(cls, d: Mapping) -> "Ledger":
        return cls(tuple(Transaction.from_json(t) for t in d["txs"]))


# -- canonical encoding -------------------------------------------------------

_CODECS: dict[type, tuple[int, Any]] = {
    Transaction: (Tag.TX, Transaction.from_json),
    LcBlock: (Tag.LC_BLOCK, LcBlock.from_json),
    LcHeader: (Tag.LC_HEADER, LcHeader.from_json),
    BftBlock: (Tag.BFT_BLOCK, BftBlock.from_json),
    VoteRecord: (Tag.VOTE, VoteRecord.from_json),
    Ledger: (Tag.LEDGER, Ledger.from_json),
    UtxoState: (Tag.UTXO, UtxoState.from_json),
}
_DECODERS = {tag: dec for tag, dec in _CODECS.values()}


def serialize(value: Any) -> bytes:
    try:
        tag, _ = _CODECS[type(value)]
    except KeyError:
        raise TypeError(f"not a core type: {type(value).__name__}") from None
    return bytes([tag]) + canonical_json(value.to_json())


def deserialize(data: bytes) -> Any:
    if not data:
        raise ValueError("empty encoding")
    dec = _DECODERS.get(data[0])
    if dec is None:
        raise ValueError(f"unknown type tag {data[0]:#x}")
    return dec(json.loads(data[1:].decode()))


def hash_value(value: Any) -> Hash:
    """Digest of a core value's canonical encoding (tag already included)."""
    data = serialize(value)
    return digest(data[0], data[1:])
