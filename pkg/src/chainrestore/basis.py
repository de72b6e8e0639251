"""Multi-indices, excitation-sector bases and the S/TL/ER/R chain geometry.

Qubit 1 of any (sub)system is the most significant bit of its packed code,
so the canonical sector order (ascending code) is lexicographic on the
bitstring.  Chain nodes are 0-based internally: the sender occupies nodes
``0 .. n_sender-1``, the receiver and the extended receiver sit at the far
end of the chain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import combinations
from math import comb
from typing import Mapping, Sequence

import numpy as np

MAX_QUBITS = 64


@dataclass(frozen=True, order=True)
class MultiIndex:
    """Bitstring over a subsystem, packed into an integer.

    ``code`` holds bit ``j`` (1-based) at position ``length - j``.
    """

    code: int
    length: int

    def __post_init__(self):
        if not 0 <= self.length <= MAX_QUBITS:
            raise ValueError(f"length must be in [0, {MAX_QUBITS}], got {self.length}")
        if not 0 <= self.code < (1 << self.length) or (self.length == 0 and self.code):
            raise ValueError(f"code {self.code} does not fit in {self.length} bits")

    @classmethod
    def from_bits(cls, bits: Sequence[int] | str) -> "MultiIndex":
        bits = [int(b) for b in bits]
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"bits must be 0/1, got {bits}")
        code = 0
        for b in bits:
            code = (code << 1) | b
        return cls(code, len(bits))

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.code >> (self.length - 1 - j)) & 1 for j in range(self.length))

    @property
    def norm(self) -> int:
        return self.code.bit_count()

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        """Concatenation."""
        return MultiIndex((self.code << other.length) | other.code, self.length + other.length)

    def reversed(self) -> "MultiIndex":
        return MultiIndex.from_bits(self.bits[::-1])

    def __str__(self) -> str:
        return "".join(map(str, self.bits)) if self.length else "∅"


def popcount(code: int) -> int:
    return code.bit_count()


@dataclass(frozen=True)
class SectorBasis:
    """All ``n_spins``-bit states with exactly ``k`` excitations, ascending."""

    n_spins: int
    k: int
    codes: tuple[int, ...] = field(repr=False)

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def states(self) -> list[MultiIndex]:
        return [MultiIndex(c, self.n_spins) for c in self.codes]

    @cached_property
    def position(self) -> dict[int, int]:
        return {c: i for i, c in enumerate(self.codes)}

    def index_of(self, state: MultiIndex | int) -> int:
        code = state.code if isinstance(state, MultiIndex) else state
        try:
            return self.position[code]
        except KeyError:
            raise ValueError(f"state {code:b} is not in sector k={self.k} of {self.n_spins} spins") from None


@lru_cache(maxsize=None)
def enumerate_sector(n_spins: int, k: int) -> SectorBasis:
    """Canonically ordered basis of the ``k``-excitation sector."""
    if not 0 <= k <= n_spins:
        raise ValueError(f"excitation number k={k} out of range for {n_spins} spins")
    if n_spins > MAX_QUBITS:
        raise ValueError(f"at most {MAX_QUBITS} spins supported")
    top = n_spins - 1
    codes = sorted(sum(1 << (top - p) for p in pos) for pos in combinations(range(n_spins), k))
    assert len(codes) == comb(n_spins, k)
    return SectorBasis(n_spins, k, tuple(codes))


@dataclass(frozen=True)
class Partition:
    """Geometry of the communication line: sender, transmission line, receiver.

    The extended receiver (ER) is the last ``n_extended_receiver`` chain
    nodes; it contains the receiver.  ER qubits are ordered by ascending chain
    node.  With ``receiver_reversed`` the receiver's qubit ``j`` is chain node
    ``n_total + 1 - j`` (1-based), so sender and receiver are mirror images.
    """

    n_total: int
    n_sender: int
    n_receiver: int
    n_extended_receiver: int
    receiver_reversed: bool = True

    def __post_init__(self):
        if self.n_sender != self.n_receiver:
            raise ValueError("sender and receiver must have the same number of qubits")
        if self.n_sender < 1:
            raise ValueError("sender needs at least one qubit")
        if not self.n_receiver <= self.n_extended_receiver <= self.n_total - self.n_sender:
            raise ValueError(
                "need n_receiver <= n_extended_receiver <= n_total - n_sender, got "
                f"{self.n_receiver}, {self.n_extended_receiver}, {self.n_total - self.n_sender}"
            )
        if self.n_total > MAX_QUBITS:
            raise ValueError(f"at most {MAX_QUBITS} chain nodes supported")

    @property
    def n(self) -> int:
        """Sender (= receiver) qubit count."""
        return self.n_sender

    @property
    def n_tl(self) -> int:
        return self.n_total - self.n_sender - self.n_receiver

    @property
    def sender_nodes(self) -> tuple[int, ...]:
        return tuple(range(self.n_sender))

    @property
    def receiver_nodes(self) -> tuple[int, ...]:
        """Chain node of receiver qubit 1, 2, ..."""
        nodes = tuple(range(self.n_total - self.n_receiver, self.n_total))
        return nodes[::-1] if self.receiver_reversed else nodes

    @property
    def tl_nodes(self) -> tuple[int, ...]:
        return tuple(range(self.n_sender, self.n_total - self.n_receiver))

    @property
    def er_nodes(self) -> tuple[int, ...]:
        return tuple(range(self.n_total - self.n_extended_receiver, self.n_total))

    @property
    def outer_nodes(self) -> tuple[int, ...]:
        """Nodes of S and the bare transmission line (everything outside ER)."""
        return tuple(range(self.n_total - self.n_extended_receiver))


def _extract(code: int, n_total: int, nodes: Sequence[int]) -> int:
    out = 0
    top = n_total - 1
    for nd in nodes:
        out = (out << 1) | ((code >> (top - nd)) & 1)
    return out


def _deposit(code: int, n_total: int, nodes: Sequence[int]) -> int:
    """Inverse of :func:`_extract` for a subsystem code."""
    out = 0
    top = n_total - 1
    m = len(nodes)
    for j, nd in enumerate(nodes):
        if (code >> (m - 1 - j)) & 1:
            out |= 1 << (top - nd)
    return out


def split_index(chain_index: MultiIndex, partition: Partition) -> tuple[MultiIndex, MultiIndex, MultiIndex]:
    """Split a chain multi-index into its sender, line and receiver parts."""
    if chain_index.length != partition.n_total:
        raise ValueError(f"chain index has {chain_index.length} bits, partition has {partition.n_total} nodes")
    n = partition.n_total
    parts = (partition.sender_nodes, partition.tl_nodes, partition.receiver_nodes)
    return tuple(MultiIndex(_extract(chain_index.code, n, p), len(p)) for p in parts)


def join_index(i_s: MultiIndex, i_tl: MultiIndex, i_r: MultiIndex, partition: Partition) -> MultiIndex:
    """Inverse of :func:`split_index`."""
    n = partition.n_total
    code = (
        _deposit(i_s.code, n, partition.sender_nodes)
        | _deposit(i_tl.code, n, partition.tl_nodes)
        | _deposit(i_r.code, n, partition.receiver_nodes)
    )
    return MultiIndex(code, n)


def subsystem_labels(n: int) -> list[str]:
    """Bitstring labels of an ``n``-qubit density-matrix basis, in matrix order."""
    return [format(c, f"0{n}b") for c in range(1 << n)]


def parse_label(label: str) -> int:
    if not label or any(ch not in "01" for ch in label):
        raise ValueError(f"invalid multi-index label {label!r}")
    return int(label, 2)


@dataclass(frozen=True)
class _ERLayout:
    """Per chain sector: (outer code, ER code) of every basis state."""

    outer: np.ndarray
    er: np.ndarray


@lru_cache(maxsize=None)
def er_layout(partition: Partition, k_chain: int) -> _ERLayout:
    basis = enumerate_sector(partition.n_total, k_chain)
    n = partition.n_total
    outer = np.array([_extract(c, n, partition.outer_nodes) for c in basis.codes], dtype=np.int64)
    er = np.array([_extract(c, n, partition.er_nodes) for c in basis.codes], dtype=np.int64)
    return _ERLayout(outer, er)


def embed_er_operator(block_on_er: Mapping[int, np.ndarray], partition: Partition, k_chain: int) -> np.ndarray:
    """Matrix of ``identity(S, bare TL) ⊗ U`` on the chain sector ``k_chain``.

    ``block_on_er`` maps an ER excitation number ``e`` to the block
    ``U^(e)`` in the canonical ER sector basis.  Missing sectors are taken as
    identity.
    """
    n_er = partition.n_extended_receiver
    layout = er_layout(partition, k_chain)
    dim = len(layout.er)
    emb = np.zeros((dim, dim), dtype=complex)
    er_pop = np.array([popcount(int(c)) for c in layout.er], dtype=np.int64)
    for e in range(min(k_chain, n_er) + 1):
        er_basis = enumerate_sector(n_er, e)
        block = block_on_er.get(e)
        if block is not None:
            block = np.asarray(block)
            if block.shape != (len(er_basis),) * 2:
                raise ValueError(f"ER block {e} must be {len(er_basis)}x{len(er_basis)}, got {block.shape}")
        sel = np.flatnonzero(er_pop == e)
        if sel.size == 0:
            continue
        local = np.array([er_basis.index_of(int(c)) for c in layout.er[sel]])
        for o in np.unique(layout.outer[sel]):
            rows = sel[layout.outer[sel] == o]
            loc = local[layout.outer[sel] == o]
            if block is None:
                emb[rows, rows] = 1.0
            else:
                emb[np.ix_(rows, rows)] = block[np.ix_(loc, loc)]
    return emb
