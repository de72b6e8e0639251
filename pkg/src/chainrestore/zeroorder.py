"""Perfectly (or almost perfectly) transferable 0-order coherence matrices.

With the transfer tensor ``T`` of a fixed W, every receiver 0-order entry
is linear in the sender 0-order entries.  Requiring the middle entries
(``0 < |N| = |M| < N``) to arrive unchanged gives a homogeneous linear
system; together with normalization (and optionally the exchange condition
``rho^R_{1,1} = rho^S_{0,0}``) it fixes the 0-order matrix.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .basis import Partition, popcount
from .channel import PSD_TOL, apply_transfer, n_qubits_of, transfer_tensor
from .errors import DegeneracyError, InfeasibleStateError, UnsolvableSystemError
from .evolution import BlockOperator
from .restorer import (
    OptimizationResult,
    RestoringProblem,
    ScaleFactorTable,
    label_pair,
    optimize_restorer,
    parse_pair,
    scale_factor_table,
    zero_order_offdiag_pairs,
)

RESIDUAL_TOL = 1e-8
SINGULAR_RTOL = 1e-12


class ZeroOrderMode(str, enum.Enum):
    ALMOST_PERFECT = "almost_perfect"
    PERFECT_WITH_EXCHANGE = "perfect_with_exchange"


@dataclass(frozen=True)
class ZeroOrderSpec:
    """What to solve for.

    ``rho00`` is the 0-excitation population in almost-perfect mode, where
    the solution is only fixed up to that value; it is ignored in exchange
    mode.  ``free_offdiag`` lists off-diagonal middle positions ``(I, J)``,
    ``I < J``, that are left to the user and excluded from the system.
    """

    mode: ZeroOrderMode = ZeroOrderMode.ALMOST_PERFECT
    free_offdiag: frozenset[tuple[int, int]] = frozenset()
    rho00: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", ZeroOrderMode(self.mode))
        object.__setattr__(self, "free_offdiag", frozenset(tuple(sorted(p)) for p in self.free_offdiag))
        if not 0.0 <= self.rho00 <= 1.0:
            raise ValueError(f"rho00 must lie in [0, 1], got {self.rho00}")


@dataclass
class ZeroOrderSolution:
    rho0: np.ndarray
    spec: ZeroOrderSpec
    residual: float
    condition_number: float
    lambda0: dict[tuple[int, int], complex] = field(default_factory=dict)


def _middle_entries(n: int, free: frozenset[tuple[int, int]]) -> list[tuple[int, int]]:
    """Upper-triangular (incl. diagonal) middle positions that are unknowns."""
    return [
        (a, b) for a in range(1 << n) for b in range(a, 1 << n)
        if popcount(a) == popcount(b) and 0 < popcount(a) < n and (a, b) not in free
    ]


def solve_zero_order_tensor(t: np.ndarray, n: int, spec: ZeroOrderSpec) -> ZeroOrderSolution:
    """Solve the 0-order system for a given transfer tensor ``T[N, M, I, J]``."""
    full = (1 << n) - 1
    dim = 1 << n
    for a, b in spec.free_offdiag:
        if a == b or popcount(a) != popcount(b) or not 0 < popcount(a) < n:
            raise ValueError(f"free position {label_pair(n, a, b)} is not an off-diagonal middle entry")
    mid = _middle_entries(n, spec.free_offdiag)

    # real unknowns and the Hermitian unit matrix each one multiplies
    units, names = [], []
    for a, b in [(0, 0), (full, full)] + mid:
        e = np.zeros((dim, dim), dtype=complex)
        e[a, b] = e[b, a] = 1.0
        units.append(e)
        names.append((a, b, "re"))
        if a != b:
            e = np.zeros((dim, dim), dtype=complex)
            e[a, b], e[b, a] = 1j, -1j
            units.append(e)
            names.append((a, b, "im"))
    resp = [apply_transfer(t, e) for e in units]

    eq_pos = [(a, b) for a, b in mid] + [(b, a) for a, b in mid if a != b]
    rows_c = np.array([[r[p] - e[p] for r, e in zip(resp, units)] for p in eq_pos]).reshape(len(eq_pos), len(units))
    rows = [rows_c.real, rows_c.imag]
    rhs = [np.zeros(len(eq_pos)), np.zeros(len(eq_pos))]
    rows.append(np.array([[np.trace(e).real for e in units]]))
    rhs.append(np.array([1.0]))
    if spec.mode is ZeroOrderMode.PERFECT_WITH_EXCHANGE:
        rows.append(np.array([[(r[full, full] - e[0, 0]).real for r, e in zip(resp, units)]]))
    else:
        rows.append(np.array([[e[0, 0].real for e in units]]))
        rhs.append(np.array([spec.rho00]))
    if spec.mode is ZeroOrderMode.PERFECT_WITH_EXCHANGE:
        rhs.append(np.array([0.0]))
    a_mat, b_vec = np.vstack(rows), np.concatenate(rhs)

    sv = np.linalg.svd(a_mat, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if sv[-1] <= SINGULAR_RTOL * sv[0]:
        raise DegeneracyError("0-order system is singular", cond)
    x, *_ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    residual = float(np.abs(a_mat @ x - b_vec).max())
    if residual > RESIDUAL_TOL:
        raise UnsolvableSystemError("no perfectly transferable 0-order matrix at this W", residual)

    rho0 = sum(xi * e for xi, e in zip(x, units))
    diag = np.diag(rho0).real
    if diag.min() < -PSD_TOL:
        raise InfeasibleStateError("0-order solution has a negative population", float(diag.min()))
    lam = {p: complex(t[p[0], p[1], p[0], p[1]]) for p in sorted(spec.free_offdiag)}
    return ZeroOrderSolution(rho0, spec, residual, cond, lam)


def solve_zero_order(w: BlockOperator, partition: Partition, spec: ZeroOrderSpec) -> ZeroOrderSolution:
    return solve_zero_order_tensor(transfer_tensor(w, partition), partition.n, spec)


def exchange_extremes(rho: np.ndarray) -> np.ndarray:
    """Swap the rows and columns of ``0...0`` and ``1...1``."""
    rho = np.asarray(rho)
    n_qubits_of(rho)
    perm = np.arange(len(rho))
    perm[0], perm[-1] = perm[-1], perm[0]
    return rho[np.ix_(perm, perm)]


# --- sender-state assembly -------------------------------------------------


def _min_eig(rho: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(rho).min())


def _as_pairs(entries: Mapping, n: int) -> dict[tuple[int, int], complex]:
    return {(parse_pair(k, n) if isinstance(k, str) else tuple(k)): complex(v) for k, v in entries.items()}


def assemble_sender_state(
    rho0: np.ndarray,
    higher: Mapping | None = None,
    zero_order_offdiag: Mapping | None = None,
    psd_tol: float = PSD_TOL,
) -> np.ndarray:
    """Fill free entries into a 0-order matrix and check positivity.

    ``higher`` maps ``(I, J)`` with ``|J| > |I|`` (or ``"IJ-bits,JJ-bits"``
    strings) to values; the conjugate positions are completed automatically.
    ``zero_order_offdiag`` does the same for free off-diagonal 0-order
    positions.  On a positivity violation the error carries the largest
    factor by which all free entries could be scaled to stay positive.
    """
    rho0 = np.array(rho0, dtype=complex)
    n = n_qubits_of(rho0)
    free = np.zeros_like(rho0)
    for (a, b), v in _as_pairs(higher or {}, n).items():
        if popcount(b) <= popcount(a):
            raise ValueError(f"{label_pair(n, a, b)} is not a positive-order position")
        free[a, b], free[b, a] = v, np.conj(v)
    for (a, b), v in _as_pairs(zero_order_offdiag or {}, n).items():
        if popcount(a) != popcount(b) or a >= b:
            raise ValueError(f"{label_pair(n, a, b)} is not an upper off-diagonal 0-order position")
        free[a, b], free[b, a] = v, np.conj(v)
    rho = rho0 + free
    lo = _min_eig(rho)
    if lo >= -psd_tol:
        return rho
    base = _min_eig(rho0)
    shrink = None
    if base >= -psd_tol:
        lo_s, hi_s = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo_s + hi_s)
            if _min_eig(rho0 + mid * free) >= -psd_tol:
                lo_s = mid
            else:
                hi_s = mid
        shrink = lo_s
    raise InfeasibleStateError("sender state is not positive semidefinite", lo, shrink)


# --- optimized off-diagonal 0-order restoring ------------------------------


@dataclass
class ZeroOrderOptimization:
    phi: np.ndarray
    lambdas: ScaleFactorTable
    solution: ZeroOrderSolution
    search: OptimizationResult


def optimize_zero_order_offdiag(
    w_base: BlockOperator,
    partition: Partition,
    restarts: int = 1000,
    seed: int = 0,
    free_offdiag: list[tuple[int, int]] | None = None,
    mode: ZeroOrderMode = ZeroOrderMode.PERFECT_WITH_EXCHANGE,
    ascent_steps: int = 50,
    problem: RestoringProblem | None = None,
) -> ZeroOrderOptimization:
    """Choose U so the free off-diagonal 0-order entries transfer by pure factors.

    Maximizes the sum of their |lambda^(0)| under the level and 0-order
    elimination constraints (plus the higher-order ones when the sender has
    more than two qubits, where higher coherences survive the block form),
    then solves for the remaining 0-order matrix.
    """
    n = partition.n
    pairs = zero_order_offdiag_pairs(n) if free_offdiag is None else [tuple(sorted(p)) for p in free_offdiag]
    problem = problem or RestoringProblem(w_base, partition)
    search = optimize_restorer(
        w_base, partition, objective=pairs, restarts=restarts, seed=seed, ascent_steps=ascent_steps,
        fix_objective=False, restore_zero_order_offdiag=True, higher_order=n > 2, problem=problem,
    )
    phi = search.best.phi
    t = problem.transfer_at(phi)
    sol = solve_zero_order_tensor(t, n, ZeroOrderSpec(mode=mode, free_offdiag=frozenset(pairs)))
    return ZeroOrderOptimization(phi, scale_factor_table(t, n), sol, search)
