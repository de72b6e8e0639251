"""Brute-force reference on the full 2^n Hilbert space.

Deliberately shares nothing with the sector machinery beyond the input
specification: operators come from Kronecker products of Pauli matrices,
evolution from ``scipy.linalg.expm`` and the receiver state from an explicit
partial trace.  Only usable for short chains.
"""
from __future__ import annotations

from functools import reduce
from typing import Mapping

import numpy as np
from scipy.linalg import expm

from .basis import Partition
from .hamiltonian import ChainSpec, coupling_matrix

_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[-1, 0], [0, 1]], dtype=complex) / 2  # |1> is the excited state
_I2 = np.eye(2, dtype=complex)


def site_operator(op: np.ndarray, site: int, n: int) -> np.ndarray:
    return reduce(np.kron, [op if s == site else _I2 for s in range(n)])


def full_hamiltonian(spec: ChainSpec) -> np.ndarray:
    n = spec.n_total
    d = coupling_matrix(spec)
    h = np.zeros((1 << n, 1 << n), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j]:
                h += d[i, j] * (
                    site_operator(_SX, i, n) @ site_operator(_SX, j, n)
                    + site_operator(_SY, i, n) @ site_operator(_SY, j, n)
                )
    return h


def total_iz(n: int) -> np.ndarray:
    return sum(site_operator(_SZ, i, n) for i in range(n))


def full_er_unitary(blocks: Mapping[int, np.ndarray], n_er: int) -> np.ndarray:
    """Place ER sector blocks into the 2^n_er space (states of equal weight in ascending order)."""
    dim = 1 << n_er
    u = np.eye(dim, dtype=complex)
    weights = np.array([bin(c).count("1") for c in range(dim)])
    for e, blk in blocks.items():
        idx = np.flatnonzero(weights == e)
        u[np.ix_(idx, idx)] = blk
    return u


def permute_qubits(rho: np.ndarray, order: list[int]) -> np.ndarray:
    """Reorder tensor factors of an operator: new qubit ``j`` is old qubit ``order[j]``."""
    n = len(order)
    t = rho.reshape([2] * (2 * n))
    t = t.transpose(order + [n + o for o in order])
    return t.reshape(1 << n, 1 << n)


def partial_trace_keep(rho: np.ndarray, keep: list[int], n: int) -> np.ndarray:
    """Reduced operator on the qubits ``keep``, in the listed order."""
    rest = [q for q in range(n) if q not in keep]
    arr = permute_qubits(rho, keep + rest)
    dk, dr = 1 << len(keep), 1 << len(rest)
    return np.trace(arr.reshape(dk, dr, dk, dr), axis1=1, axis2=3)


def full_receiver_state(
    rho_s: np.ndarray,
    spec: ChainSpec,
    partition: Partition,
    t: float,
    u_blocks: Mapping[int, np.ndarray] | None = None,
) -> np.ndarray:
    n = spec.n_total
    rest = np.zeros((1 << (n - partition.n), 1 << (n - partition.n)), dtype=complex)
    rest[0, 0] = 1.0
    rho = np.kron(rho_s, rest)
    v = expm(-1j * full_hamiltonian(spec) * t)
    if u_blocks:
        n_er = partition.n_extended_receiver
        v = np.kron(np.eye(1 << (n - n_er)), full_er_unitary(u_blocks, n_er)) @ v
    rho_t = v @ rho @ v.conj().T
    return partial_trace_keep(rho_t, list(partition.receiver_nodes), n)
