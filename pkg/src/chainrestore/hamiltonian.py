"""XX Hamiltonian with dipole-dipole couplings, built sector by sector.

Energies are in units of the interior nearest-neighbour coupling, so times
are the dimensionless product ``delta * t``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .basis import SectorBasis


class CouplingMode(str, Enum):
    ALL_TO_ALL_DIPOLE = "all_to_all_dipole"
    NEAREST_NEIGHBOR_ONLY = "nearest_neighbor_only"


@dataclass(frozen=True)
class ChainSpec:
    n_total: int
    nn_couplings: tuple[float, ...]
    coupling_mode: CouplingMode = CouplingMode.ALL_TO_ALL_DIPOLE

    def __post_init__(self):
        object.__setattr__(self, "nn_couplings", tuple(float(c) for c in self.nn_couplings))
        object.__setattr__(self, "coupling_mode", CouplingMode(self.coupling_mode))
        if self.n_total < 2:
            raise ValueError("a chain needs at least two nodes")
        if len(self.nn_couplings) != self.n_total - 1:
            raise ValueError(f"expected {self.n_total - 1} nearest-neighbour couplings, got {len(self.nn_couplings)}")
        if any(not c > 0 for c in self.nn_couplings):
            raise ValueError(f"couplings must be positive: {self.nn_couplings}")

    @classmethod
    def homogeneous(cls, n_total: int, mode=CouplingMode.ALL_TO_ALL_DIPOLE) -> "ChainSpec":
        return cls(n_total, (1.0,) * (n_total - 1), mode)

    @classmethod
    def boundary_adjusted(
        cls, n_total: int, boundary: Sequence[float], mode=CouplingMode.ALL_TO_ALL_DIPOLE
    ) -> "ChainSpec":
        """Mirror-symmetric chain: ``boundary[i]`` replaces bonds ``i+1`` and ``n_total-1-i``."""
        c = [1.0] * (n_total - 1)
        if 2 * len(boundary) > n_total - 1:
            raise ValueError("too many boundary couplings for this chain length")
        for i, b in enumerate(boundary):
            c[i] = c[-1 - i] = float(b)
        return cls(n_total, tuple(c), mode)


def positions_from_couplings(spec: ChainSpec) -> np.ndarray:
    """Node positions whose nearest-neighbour ``1/r**3`` equals the given couplings."""
    c = np.asarray(spec.nn_couplings, dtype=float)
    if np.any(c <= 0):
        raise ValueError("couplings must be positive")
    return np.concatenate([[0.0], np.cumsum(c ** (-1.0 / 3.0))])


def coupling_matrix(spec: ChainSpec) -> np.ndarray:
    n = spec.n_total
    if spec.coupling_mode is CouplingMode.NEAREST_NEIGHBOR_ONLY:
        c = np.asarray(spec.nn_couplings)
        return np.diag(c, 1) + np.diag(c, -1)
    x = positions_from_couplings(spec)
    r = np.abs(x[:, None] - x[None, :])
    d = np.zeros((n, n))
    off = ~np.eye(n, dtype=bool)
    d[off] = 1.0 / r[off] ** 3
    return d


def build_sector_block(d: np.ndarray, basis: SectorBasis) -> np.ndarray:
    """Flip-flop Hamiltonian restricted to one excitation sector.

    ``<I|H|J> = d[i, j] / 2`` when ``J`` moves one excitation of ``I`` from
    site ``i`` to site ``j``.  The result is real symmetric; only the upper
    triangle is computed and then mirrored.
    """
    n = basis.n_spins
    if d.shape != (n, n):
        raise ValueError(f"coupling matrix must be {n}x{n}")
    dim = len(basis)
    h = np.zeros((dim, dim))
    pos = basis.position
    top = n - 1
    for a, code in enumerate(basis.codes):
        occupied = [i for i in range(n) if (code >> (top - i)) & 1]
        empty = [j for j in range(n) if not (code >> (top - j)) & 1]
        for i in occupied:
            for j in empty:
                if d[i, j] == 0.0:
                    continue
                b = pos[code ^ (1 << (top - i)) ^ (1 << (top - j))]
                if b > a:
                    h[a, b] = 0.5 * d[i, j]
    return h + h.T
