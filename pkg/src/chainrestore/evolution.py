"""Sector-wise propagators, the composite operator W and the registration time."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .basis import MultiIndex, Partition, embed_er_operator, enumerate_sector, join_index
from .errors import NumericalError, SearchFailure
from .hamiltonian import ChainSpec, build_sector_block, coupling_matrix


@dataclass
class BlockOperator:
    """Operator that is block diagonal in the excitation number."""

    blocks: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def k_max(self) -> int:
        return max(self.blocks)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.blocks[k]

    def unitarity_error(self) -> float:
        return max(np.abs(b.conj().T @ b - np.eye(len(b))).max() for b in self.blocks.values())

    @classmethod
    def identity(cls, n_spins: int, k_max: int) -> "BlockOperator":
        return cls({k: np.eye(len(enumerate_sector(n_spins, k)), dtype=complex) for k in range(k_max + 1)})


@dataclass(frozen=True)
class Eigensystem:
    values: np.ndarray
    vectors: np.ndarray

    def propagator(self, t: float) -> np.ndarray:
        return (self.vectors * np.exp(-1j * self.values * t)) @ self.vectors.conj().T


def eigensystem(h_block: np.ndarray, block_id=None) -> Eigensystem:
    if not np.all(np.isfinite(h_block)):
        raise NumericalError(f"non-finite Hamiltonian entries in block {block_id}")
    try:
        w, q = np.linalg.eigh(h_block)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed for block {block_id}: {exc}") from exc
    return Eigensystem(w, q)


def propagator_block(h_block: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` for a Hermitian block."""
    return eigensystem(h_block).propagator(t)


@lru_cache(maxsize=64)
def sector_eigensystem(spec: ChainSpec, k: int) -> Eigensystem:
    basis = enumerate_sector(spec.n_total, k)
    return eigensystem(build_sector_block(coupling_matrix(spec), basis), block_id=k)


def evolution_operator(spec: ChainSpec, t: float, k_max: int) -> BlockOperator:
    """V(t) on the sectors ``0..k_max``."""
    return BlockOperator({k: sector_eigensystem(spec, k).propagator(t) for k in range(k_max + 1)})


def compose_w(v: BlockOperator, u_er: Mapping[int, np.ndarray] | BlockOperator, partition: Partition) -> BlockOperator:
    """W = (identity ⊗ U) V, sector by sector."""
    u_blocks = u_er.blocks if isinstance(u_er, BlockOperator) else dict(u_er)
    out = {}
    for k, vk in v.blocks.items():
        if k == 0:
            out[0] = np.ones((1, 1), dtype=complex)
            continue
        emb = embed_er_operator(u_blocks, partition, k)
        if emb.shape[0] != vk.shape[0]:
            raise ValueError(f"sector {k}: embedded U has dimension {emb.shape[0]}, V has {vk.shape[0]}")
        out[k] = emb @ vk
    return BlockOperator(out)


def transfer_indices(partition: Partition) -> tuple[int, int]:
    """(row, column) in sector N of the element taking 1_S 0_TL 0_R to 0_S 0_TL 1_R."""
    n = partition.n
    basis = enumerate_sector(partition.n_total, n)
    zero_s, one_s = MultiIndex(0, n), MultiIndex((1 << n) - 1, n)
    zero_tl = MultiIndex(0, partition.n_tl)
    row = basis.index_of(join_index(zero_s, zero_tl, one_s, partition))
    col = basis.index_of(join_index(one_s, zero_tl, zero_s, partition))
    return row, col


def transfer_amplitude(w: BlockOperator, partition: Partition) -> complex:
    row, col = transfer_indices(partition)
    return complex(w[partition.n][row, col])


@dataclass
class TransferAmplitudeCurve:
    times: np.ndarray
    amplitudes: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["delta_t", "amplitude"])
            for t, a in zip(self.times, self.amplitudes):
                wr.writerow([repr(float(t)), repr(float(a))])


def amplitude_curve(spec: ChainSpec, partition: Partition, times: np.ndarray, chunk: int = 2048) -> TransferAmplitudeCurve:
    """|transfer amplitude| at phi = 0 for every time in ``times``."""
    es = sector_eigensystem(spec, partition.n)
    row, col = transfer_indices(partition)
    coef = es.vectors[row] * es.vectors[col].conj()
    times = np.asarray(times, dtype=float)
    amps = np.empty(times.shape)
    for s in range(0, len(times), chunk):
        ts = times[s:s + chunk]
        amps[s:s + chunk] = np.abs(np.exp(-1j * np.outer(ts, es.values)) @ coef)
    return TransferAmplitudeCurve(times, amps)


class T0Search(NamedTuple):
    t0: float
    amplitude: float
    curve: TransferAmplitudeCurve


def find_t0(
    spec: ChainSpec, partition: Partition, t_max: float = 100.0, grid_step: float = 0.01, tol: float = 1e-6
) -> T0Search:
    """Registration time: the maximiser of the N-order transfer amplitude at phi = 0.

    The grid ``(0, t_max]`` is scanned first; the best grid point (earliest on
    ties) is then refined by golden-section search.
    """
    if t_max <= 0 or grid_step <= 0:
        raise ValueError("t_max and grid_step must be positive")
    n_pts = int(np.floor(t_max / grid_step + 1e-9))
    times = grid_step * np.arange(1, n_pts + 1)
    curve = amplitude_curve(spec, partition, times)
    best = int(np.argmax(curve.amplitudes))
    if curve.amplitudes[best] < 1e-12:
        raise SearchFailure("transfer amplitude vanishes on the whole grid")
    es = sector_eigensystem(spec, partition.n)
    row, col = transfer_indices(partition)
    coef = es.vectors[row] * es.vectors[col].conj()

    def neg_amp(t):
        return -abs(np.exp(-1j * es.values * t) @ coef)

    t_grid, a_grid = float(times[best]), float(curve.amplitudes[best])
    lo, hi = t_grid - grid_step, min(t_grid + grid_step, t_max)
    if best == 0 or best == len(times) - 1 or neg_amp(lo) <= -a_grid or neg_amp(hi) <= -a_grid:
        return T0Search(t_grid, a_grid, curve)
    res = minimize_scalar(neg_amp, bracket=(lo, t_grid, hi), method="golden", options={"xtol": tol / t_grid})
    if -res.fun >= a_grid and lo <= res.x <= hi:
        return T0Search(float(res.x), float(-res.fun), curve)
    return T0Search(t_grid, a_grid, curve)
