"""Binary Merkle commitments over transaction lists.

Leaves are ``H(0x00 || serialize(tx))``, internal nodes ``H(0x01 || l || r)``.
An unpaired node at the end of a level is promoted unchanged, so a single
leaf tree has the leaf hash as its root.  The empty list commits to
``EMPTY_ROOT`` (all zeros).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

from .core_types import EMPTY_ROOT, Hash, Tag, Transaction, hexh, unhex

LEFT = "left"
RIGHT = "right"

_NODE = bytes([Tag.MERKLE_NODE])


def _node(left: Hash, right: Hash) -> Hash:
    return hashlib.sha256(_NODE + left + right).digest()


def leaf_hash(tx: Transaction) -> Hash:
    return tx.leaf_hash


@dataclass(frozen=True)
class MerkleProof:
    leafIndex: int
    leaf: Hash
    path: tuple[tuple[Hash, str], ...]

    def to_json(self) -> dict:
        return {"leafIndex": self.leafIndex, "leaf": hexh(self.leaf),
                "path": [[hexh(h), side] for h, side in self.path]}

    @classmethod
    def from_json(cls, d) -> "MerkleProof":
        return cls(int(d["leafIndex"]), unhex(d["leaf"]),
                   tuple((unhex(h), str(side)) for h, side in d["path"]))


@dataclass(frozen=True)
class MerkleTree:
    leaves: tuple[Hash, ...]
    levels: tuple[tuple[Hash, ...], ...]

    @property
    def root(self) -> Hash:
        return self.levels[-1][0] if self.leaves else EMPTY_ROOT

    def __len__(self) -> int:
        return len(self.leaves)


def _build_levels(leaves: Sequence[Hash]) -> tuple[tuple[Hash, ...], ...]:
    level = tuple(leaves)
    levels = [level]
    while len(level) > 1:
        nxt = [_node(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = tuple(nxt)
        levels.append(level)
    return tuple(levels)


def merkleize(txs: Sequence[Transaction]) -> MerkleTree:
    leaves = tuple(t.leaf_hash for t in txs)
    if not leaves:
        return MerkleTree((), ((),))
    return MerkleTree(leaves, _build_levels(leaves))


def merkle_root(txs: Sequence[Transaction]) -> Hash:
    return merkleize(txs).root


def prove_inclusion(tree: MerkleTree, index: int) -> MerkleProof:
    if not 0 <= index < len(tree.leaves):
        raise IndexError(f"leaf index {index} out of range for {len(tree.leaves)} leaves")
    path = []
    i = index
    for level in tree.levels[:-1]:
        sib = i ^ 1
        if sib < len(level):
            path.append((level[sib], RIGHT if sib > i else LEFT))
        i //= 2
    return MerkleProof(index, tree.leaves[index], tuple(path))


def verify_inclusion(root: Hash, proof: MerkleProof) -> bool:
    acc = proof.leaf
    for sibling, side in proof.path:
        if side == RIGHT:
            acc = _node(acc, sibling)
        elif side == LEFT:
            acc = _node(sibling, acc)
        else:
            return False
    return acc == root and root != EMPTY_ROOT
