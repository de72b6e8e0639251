"""Optimizing unitary on the extended receiver.

The restoring conditions and scale factors are all entries of the transfer
tensor ``T[N_R, M_R, I_S, J_S]`` (receiver entry ``(N_R, M_R)`` picks up
``T * rho_S[I_S, J_S]``):

* higher-order restoring: ``T[N, M, I, J] = 0`` for every sender pair
  ``(I, J) != (N, M)`` of the same coherence order ``|M| - |N| >= 1``;
* scale factors: ``lambda_{N, M} = T[N, M, N, M]``;
* 0-order off-diagonal restoring: the extra eliminations listed in
  :func:`zero_offdiag_constraints`.

Because U acts on ER only, ``T`` factors as a partial trace over ER \\ R of
``U B_{IJ} U^†`` where ``B_{IJ} = Tr_{S, bare TL}(V |I 0 0><J 0 0| V^†)`` is
computed once from V(t0).  :class:`RestoringProblem` evaluates that product
for whole batches of parameter vectors at a time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .basis import MultiIndex, Partition, _extract, enumerate_sector, er_layout, join_index, popcount
from .errors import OptimizationFailure
from .evolution import BlockOperator

log = logging.getLogger(__name__)

FD_STEP = 1e-6
PINV_RCOND = 1e-10
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 200


# --- parametrization -------------------------------------------------------


def block_parameter_count(n_er: int, k: int) -> int:
    c = comb(n_er, k)
    return c * (c - 1)


@dataclass(frozen=True)
class ParameterLayout:
    """Where each sector's parameters sit in the flat vector phi."""

    n_er: int
    n_sender: int

    @property
    def sizes(self) -> dict[int, int]:
        return {k: block_parameter_count(self.n_er, k) for k in range(1, self.n_sender + 1)}

    @property
    def size(self) -> int:
        return sum(self.sizes.values())

    def split(self, phi: np.ndarray) -> dict[int, np.ndarray]:
        phi = np.asarray(phi, dtype=float)
        if phi.shape[-1] != self.size:
            raise ValueError(f"expected {self.size} parameters, got {phi.shape[-1]}")
        out, off = {}, 0
        for k, m in self.sizes.items():
            out[k] = phi[..., off:off + m]
            off += m
        return out

    def join(self, per_sector: Mapping[int, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(per_sector[k], dtype=float) for k in self.sizes])


def hermitian_generator(phi_k: np.ndarray, dim: int) -> np.ndarray:
    """Zero-diagonal Hermitian matrix (batched) with upper entries ``phi[2m] + i phi[2m+1]``."""
    phi_k = np.asarray(phi_k, dtype=float)
    if phi_k.shape[-1] != dim * (dim - 1):
        raise ValueError(f"block of size {dim} needs {dim * (dim - 1)} parameters, got {phi_k.shape[-1]}")
    iu = np.triu_indices(dim, 1)
    a = np.zeros(phi_k.shape[:-1] + (dim, dim), dtype=complex)
    a[..., iu[0], iu[1]] = phi_k[..., 0::2] + 1j * phi_k[..., 1::2]
    return a + np.conj(np.swapaxes(a, -1, -2))


def exp_i_hermitian(a: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh(a)
    return (q * np.exp(1j * w)[..., None, :]) @ np.conj(np.swapaxes(q, -1, -2))


@dataclass
class ParametrizedUnitary:
    phi: dict[int, np.ndarray]
    blocks: dict[int, np.ndarray]

    def unitarity_error(self) -> float:
        return max(np.abs(b.conj().T @ b - np.eye(len(b))).max() for b in self.blocks.values())


def materialize_unitary(phi: Mapping[int, Sequence[float]], n_er: int) -> ParametrizedUnitary:
    """``U^(k) = exp(i A^(k))`` per ER sector; ``U^(0) = [1]``."""
    blocks = {0: np.ones((1, 1), dtype=complex)}
    clean = {}
    for k, p in phi.items():
        dim = comb(n_er, k)
        p = np.asarray(p, dtype=float)
        if p.shape != (dim * (dim - 1),):
            raise ValueError(f"sector {k}: expected {dim * (dim - 1)} parameters, got {p.size}")
        clean[k] = p
        blocks[k] = exp_i_hermitian(hermitian_generator(p, dim)) if dim > 1 else np.ones((1, 1), dtype=complex)
    return ParametrizedUnitary(clean, blocks)


# --- scale-factor identifiers and constraint sets --------------------------


def label_pair(n: int, row: int, col: int) -> str:
    return f"{row:0{n}b},{col:0{n}b}"


def parse_pair(text: str, n: int) -> tuple[int, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or any(len(p) != n or set(p) - {"0", "1"} for p in parts):
        raise ValueError(f"scale-factor identifier {text!r} must look like " + ",".join(["0" * n, "1" * n]))
    return int(parts[0], 2), int(parts[1], 2)


def higher_order_pairs(n: int) -> list[tuple[int, int]]:
    """Receiver entries (N, M) with coherence order ``|M| - |N| >= 1``."""
    return [(a, b) for a in range(1 << n) for b in range(1 << n) if popcount(b) > popcount(a)]


def zero_order_offdiag_pairs(n: int) -> list[tuple[int, int]]:
    """Off-diagonal 0-order entries (N < M, same weight strictly between 0 and n)."""
    return [
        (a, b) for a in range(1 << n) for b in range(a + 1, 1 << n)
        if popcount(a) == popcount(b) and 0 < popcount(a) < n
    ]


def level_constraints(n: int) -> list[tuple[int, int, int, int]]:
    """W^{(l)}_{0 0 N; I 0 0} = 0 for N != I, 0 < l < n, as ``T[0, N, 0, I]``."""
    out = []
    for a in range(1, (1 << n) - 1):
        for i in range(1, (1 << n) - 1):
            if a != i and popcount(a) == popcount(i):
                out.append((0, a, 0, i))
    return out


def higher_order_constraints(n: int) -> list[tuple[int, int, int, int]]:
    """Off-pattern sums for receiver entries with 0 < |M| < n.

    Sender pairs with ``I = 0`` only restate :func:`level_constraints` and are
    skipped; so are pairs that vanish by excitation counting (``|I| < |N|``).
    """
    full = (1 << n) - 1
    out = []
    for nr, mr in higher_order_pairs(n):
        if not 0 < popcount(mr) < n:
            continue
        order = popcount(mr) - popcount(nr)
        for i in range(1, 1 << n):
            for j in range(1 << n):
                if popcount(j) - popcount(i) != order or popcount(i) < popcount(nr):
                    continue
                if (i, j) != (nr, mr):
                    out.append((nr, mr, i, j))
    del full
    return out


def zero_offdiag_constraints(n: int) -> list[tuple[int, int, int, int]]:
    """Eliminations that make 0-order off-diagonal entries transfer by a pure factor.

    One representative per complex-conjugate pair ``T[M, N, J, I] = conj T[N, M, I, J]``.
    """
    full = (1 << n) - 1
    out = []
    levels = range(1, n)
    # sender entries from strictly higher middle levels feeding receiver level-l entries
    for nr in range(1 << n):
        for mr in range(1 << n):
            l = popcount(nr)
            if popcount(mr) != l or not 0 < l < n:
                continue
            for i in range(1 << n):
                for j in range(1 << n):
                    lp = popcount(i)
                    if popcount(j) != lp or not l < lp < n or (nr == mr and i == j):
                        continue
                    if (nr, mr, i, j) <= (mr, nr, j, i):
                        out.append((nr, mr, i, j))
    # contributions of rho_{1,1} to off-diagonal receiver entries
    for nr, mr in zero_order_offdiag_pairs(n):
        out.append((nr, mr, full, full))
    # off-diagonal middle sender entries feeding rho^R_{0,0}
    for i in range(1 << n):
        for j in range(i + 1, 1 << n):
            if popcount(i) == popcount(j) and 0 < popcount(i) < n:
                out.append((0, 0, i, j))
    del levels
    return out


def constraint_index(n: int, higher_order: bool = True, zero_order_offdiag: bool = False) -> list[tuple[int, int, int, int]]:
    idx = list(level_constraints(n))
    if higher_order:
        idx += higher_order_constraints(n)
    if zero_order_offdiag:
        idx += zero_offdiag_constraints(n)
    return idx


# --- fast evaluation ------------------------------------------------------


class RestoringProblem:
    """Transfer tensor as a function of phi for a fixed V(t0) and geometry."""

    def __init__(self, w_base: BlockOperator, partition: Partition):
        self.partition = partition
        n = partition.n
        n_er = partition.n_extended_receiver
        self.n = n
        self.layout = ParameterLayout(n_er, n)
        dim_r = 1 << n
        nt = partition.n_total

        # ER basis restricted to weights 0..n (the only ones reached)
        er_codes = [c for e in range(min(n, n_er) + 1) for c in enumerate_sector(n_er, e).codes]
        er_pos = {c: i for i, c in enumerate(er_codes)}
        d = len(er_codes)
        self.er_dim = d

        # B_{IJ} = sum_o v_{o,I} v_{o,J}^†
        zero_tl, zero_r = MultiIndex(0, partition.n_tl), MultiIndex(0, n)
        cols: dict[int, np.ndarray] = {}
        for label in range(dim_r):
            i_s = MultiIndex(label, n)
            k = i_s.norm
            basis = enumerate_sector(nt, k)
            col = basis.index_of(join_index(i_s, zero_tl, zero_r, partition))
            psi = w_base[k][:, col]
            lay = er_layout(partition, k)
            for o in np.unique(lay.outer):
                rows = np.flatnonzero(lay.outer == o)
                vec = cols.setdefault(int(o), np.zeros((d, dim_r), dtype=complex))
                vec[[er_pos[int(c)] for c in lay.er[rows]], label] = psi[rows]
        vo = np.array(list(cols.values()))
        # b[i, j] is a d x d operator on ER
        self.b = np.einsum("oai,obj->ijab", vo, vo.conj(), optimize=True)

        # partial trace ER -> R as a 0/1 matrix on flattened (a, b) pairs
        er_nodes = partition.er_nodes
        r_in_er = [er_nodes.index(nd) for nd in partition.receiver_nodes]
        y_in_er = [p for p in range(n_er) if p not in r_in_er]
        r_of = np.array([_extract(c, n_er, r_in_er) for c in er_codes])
        y_of = np.array([_extract(c, n_er, y_in_er) for c in er_codes])
        same_y = y_of[:, None] == y_of[None, :]
        ptr = np.zeros((dim_r * dim_r, d * d))
        aa, bb = np.nonzero(same_y)
        ptr[r_of[aa] * dim_r + r_of[bb], aa * d + bb] = 1.0
        self._ptrace = ptr

        # where each U^(k) lives inside the restricted ER basis
        self._block_index = {
            k: np.array([er_pos[c] for c in enumerate_sector(n_er, k).codes]) for k in range(1, n + 1)
        }
        self._b_flat = self.b.reshape(dim_r * dim_r, d, d)

    @property
    def n_params(self) -> int:
        return self.layout.size

    def unitaries(self, phis: np.ndarray) -> np.ndarray:
        """Batched U on the restricted ER basis, shape (B, d, d)."""
        phis = np.atleast_2d(phis)
        u = np.broadcast_to(np.eye(self.er_dim, dtype=complex), (len(phis), self.er_dim, self.er_dim)).copy()
        for k, p in self.layout.split(phis).items():
            idx = self._block_index[k]
            if len(idx) > 1:
                u[:, idx[:, None], idx[None, :]] = exp_i_hermitian(hermitian_generator(p, len(idx)))
        return u

    def transfer(self, phis: np.ndarray) -> np.ndarray:
        """``T[b, N_R, M_R, I_S, J_S]`` for a batch of parameter vectors."""
        phis = np.atleast_2d(phis)
        u = self.unitaries(phis)
        m = u[:, None] @ self._b_flat[None] @ np.conj(np.swapaxes(u, -1, -2))[:, None]
        dim_r = 1 << self.n
        nb = len(phis)
        t = m.reshape(nb, dim_r * dim_r, -1) @ self._ptrace.T  # (B, IJ, NM)
        return np.swapaxes(t, 1, 2).reshape(nb, dim_r, dim_r, dim_r, dim_r)

    def transfer_at(self, phi: np.ndarray) -> np.ndarray:
        return self.transfer(np.asarray(phi)[None])[0]


def _stack_complex(values: np.ndarray) -> np.ndarray:
    return np.concatenate([values.real, values.imag], axis=-1)


@dataclass
class ConstraintSystem:
    """Residuals and objective entries of one restoring task, batched over phi."""

    problem: RestoringProblem
    constraints: list[tuple[int, int, int, int]]
    objective: list[tuple[int, int]]
    target_objective: float | None = None

    def __post_init__(self):
        c = np.array(self.constraints, dtype=int).reshape(-1, 4)
        self._c = tuple(c.T)
        o = np.array(self.objective, dtype=int).reshape(-1, 2)
        self._o = (o[:, 0], o[:, 1], o[:, 0], o[:, 1])

    @property
    def n_residuals(self) -> int:
        return 2 * len(self.constraints) + (self.target_objective is not None)

    def evaluate(self, phis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(residuals, |lambda| of objective entries) for a batch."""
        t = self.problem.transfer(phis)
        res = _stack_complex(t[(slice(None),) + self._c])
        lam = np.abs(t[(slice(None),) + self._o])
        if self.target_objective is not None:
            res = np.concatenate([res, lam.sum(axis=1, keepdims=True) - self.target_objective], axis=1)
        return res, lam

    def residuals(self, phi: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(phi)[None])[0][0]

    def objective_value(self, phi: np.ndarray) -> float:
        return float(self.evaluate(np.asarray(phi)[None])[1][0].sum())

    def jacobians(self, phi: np.ndarray, step: float = FD_STEP):
        """Central-difference Jacobian of the residuals and gradient of J, one batch."""
        p = len(phi)
        eye = np.eye(p) * step
        pts = np.concatenate([phi[None] + eye, phi[None] - eye, phi[None]])
        res, lam = self.evaluate(pts)
        jac = (res[:p] - res[p:2 * p]).T / (2 * step)
        jsum = lam.sum(axis=1)
        grad = (jsum[:p] - jsum[p:2 * p]) / (2 * step)
        return res[-1], jac, lam[-1], grad

    def residual_jacobian(self, phi: np.ndarray) -> np.ndarray:
        return self.jacobians(phi)[1]


def constraint_residuals(
    phi: np.ndarray,
    w_base: BlockOperator,
    partition: Partition,
    restore_zero_order_offdiag: bool = False,
    higher_order: bool = True,
) -> np.ndarray:
    """Stacked real and imaginary parts of the restoring constraints at phi."""
    problem = RestoringProblem(w_base, partition)
    idx = constraint_index(partition.n, higher_order, restore_zero_order_offdiag)
    return ConstraintSystem(problem, idx, []).residuals(np.asarray(phi, dtype=float))


# --- Newton ----------------------------------------------------------------


@dataclass
class NewtonResult:
    phi: np.ndarray
    converged: bool
    residual_norm: float
    iterations: int


def finite_difference_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((fn(x + e) - fn(x - e)) / (2 * step))
    return np.array(cols).T


def newton_solve(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    phi0: np.ndarray,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    jacobian_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    rcond: float = PINV_RCOND,
) -> NewtonResult:
    """Gauss-Newton with pseudo-inverse steps; the system may be underdetermined."""
    jacobian_fn = jacobian_fn or (lambda x: finite_difference_jacobian(residual_fn, x))
    phi = np.array(phi0, dtype=float)
    r = residual_fn(phi)
    norm = float(np.abs(r).max()) if r.size else 0.0
    for it in range(max_iter):
        if norm <= tol:
            return NewtonResult(phi, True, norm, it)
        step = np.linalg.pinv(jacobian_fn(phi), rcond=rcond) @ r
        phi = phi - step
        r = residual_fn(phi)
        norm = float(np.abs(r).max())
        if not np.isfinite(norm):
            break
    return NewtonResult(phi, norm <= tol, norm, max_iter)


# --- scale factors ----------------------------------------------------------


@dataclass
class ScaleFactorTable:
    n: int
    values: dict[tuple[int, int, int], complex] = field(default_factory=dict)

    def __getitem__(self, key: str | tuple[int, int]) -> complex:
        a, b = parse_pair(key, self.n) if isinstance(key, str) else key
        return self.values[(popcount(b) - popcount(a), a, b)]

    def items(self):
        return self.values.items()

    def max_modulus(self) -> float:
        return max(abs(v) for v in self.values.values())

    def to_json(self) -> list[dict]:
        return [
            {
                "order": order,
                "entry": label_pair(self.n, a, b),
                "re": float(v.real),
                "im": float(v.imag),
                "modulus": float(abs(v)),
                "phase": float(np.angle(v)),
            }
            for (order, a, b), v in sorted(self.values.items(), key=lambda kv: (-kv[0][0], kv[0][1], kv[0][2]))
        ]


def scale_factor_table(t: np.ndarray, n: int) -> ScaleFactorTable:
    table = ScaleFactorTable(n)
    for a, b in higher_order_pairs(n) + zero_order_offdiag_pairs(n):
        table.values[(popcount(b) - popcount(a), a, b)] = complex(t[a, b, a, b])
    return table


def scale_factors(phi: np.ndarray, w_base: BlockOperator, partition: Partition) -> ScaleFactorTable:
    problem = RestoringProblem(w_base, partition)
    return scale_factor_table(problem.transfer_at(phi), partition.n)


# --- optimization -----------------------------------------------------------


@dataclass
class RestoringSolution:
    phi: np.ndarray
    residual_norm: float
    lambdas: ScaleFactorTable
    objective: float
    lambda_min: float
    lambda_min_entry: str
    restart_index: int
    phase: int

    def phi_by_sector(self, layout: ParameterLayout) -> dict[int, np.ndarray]:
        return layout.split(self.phi)


@dataclass
class OptimizationResult:
    best: RestoringSolution
    best_objective: float
    candidates: list[RestoringSolution]
    lambda_min_values: np.ndarray
    converged_restarts: int
    attempted_restarts: int

    def histogram(self, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
        """(bin centres, counts) of lambda_min."""
        vals = self.lambda_min_values
        counts, edges = np.histogram(vals, bins=bins)
        return 0.5 * (edges[:-1] + edges[1:]), counts


def restart_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def projected_ascent(system: ConstraintSystem, phi: np.ndarray, steps: int = 50, initial_step: float = 0.1,
                     min_step: float = 1e-6) -> NewtonResult:
    """Climb J along the constraint manifold, re-projecting by Newton after every step."""
    res, jac, lam, grad = system.jacobians(phi)
    value = lam.sum()
    alpha = initial_step
    norm = float(np.abs(res).max()) if res.size else 0.0
    for _ in range(steps):
        if jac.size:
            grad = grad - np.linalg.pinv(jac, rcond=PINV_RCOND) @ (jac @ grad)
        gnorm = np.linalg.norm(grad)
        if gnorm < 1e-12:
            break
        improved = False
        while alpha >= min_step:
            trial = newton_solve(system.residuals, phi + alpha * grad / gnorm, max_iter=30,
                                 jacobian_fn=system.residual_jacobian)
            if trial.converged:
                cand = system.objective_value(trial.phi)
                if cand > value:
                    phi, value, norm = trial.phi, cand, trial.residual_norm
                    alpha *= 1.5
                    improved = True
                    break
            alpha *= 0.5
        if not improved:
            break
        res, jac, lam, grad = system.jacobians(phi)
    return NewtonResult(phi, True, norm, steps)


def _make_solution(system: ConstraintSystem, phi, norm, index, phase) -> RestoringSolution:
    problem = system.problem
    t = problem.transfer_at(phi)
    n = problem.n
    lam = np.abs([t[a, b, a, b] for a, b in system.objective])
    j = int(np.argmin(lam))
    return RestoringSolution(
        phi=np.asarray(phi, dtype=float),
        residual_norm=float(norm),
        lambdas=scale_factor_table(t, n),
        objective=float(lam.sum()),
        lambda_min=float(lam[j]),
        lambda_min_entry=label_pair(n, *system.objective[j]),
        restart_index=index,
        phase=phase,
    )


def optimize_restorer(
    w_base: BlockOperator,
    partition: Partition,
    objective: Iterable[str | tuple[int, int]] | None = None,
    restarts: int = 1000,
    seed: int = 0,
    ascent_steps: int = 50,
    fix_objective: bool = True,
    phase2_restarts: int | None = None,
    target_objective: float | None = None,
    restore_zero_order_offdiag: bool = False,
    higher_order: bool = True,
    problem: RestoringProblem | None = None,
) -> OptimizationResult:
    """Maximize the sum of |lambda| over the restoring manifold by random restarts.

    Phase 1 Newton-solves the constraints from ``restarts`` random starts in
    ``(0, 2 pi)`` and climbs the objective from each.  Phase 2 (``fix_objective``)
    solves the constraints together with ``J = target`` from fresh starts,
    ``target`` defaulting to the best phase-1 value.  The returned best
    solution maximizes the smallest objective |lambda| over everything
    collected (ties: larger J, then restart order).
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    problem = problem or RestoringProblem(w_base, partition)
    n = partition.n
    if objective is None:
        pairs = higher_order_pairs(n)
    else:
        pairs = [parse_pair(o, n) if isinstance(o, str) else tuple(o) for o in objective]
    idx = constraint_index(n, higher_order, restore_zero_order_offdiag)
    system = ConstraintSystem(problem, idx, pairs)
    p = problem.n_params

    candidates: list[RestoringSolution] = []
    converged = 0
    for r in range(restarts):
        phi0 = restart_rng(seed, r).uniform(0.0, 2 * np.pi, p)
        sol = newton_solve(system.residuals, phi0, jacobian_fn=system.residual_jacobian)
        if not sol.converged:
            log.debug("restart %d: no convergence (residual %.2e)", r, sol.residual_norm)
            continue
        converged += 1
        if ascent_steps:
            sol = projected_ascent(system, sol.phi, steps=ascent_steps)
        candidates.append(_make_solution(system, sol.phi, sol.residual_norm, r, 1))
    if not candidates:
        raise OptimizationFailure(f"none of {restarts} restarts converged")
    best_j = max(c.objective for c in candidates)
    lam_values = [c.lambda_min for c in candidates]
    attempted = restarts

    if fix_objective:
        target = best_j if target_objective is None else target_objective
        fixed = ConstraintSystem(problem, idx, pairs, target_objective=target)
        phase2 = []
        n2 = restarts if phase2_restarts is None else phase2_restarts
        for r in range(n2):
            phi0 = restart_rng(seed, restarts + r).uniform(0.0, 2 * np.pi, p)
            sol = newton_solve(fixed.residuals, phi0, jacobian_fn=fixed.residual_jacobian)
            if sol.converged:
                phase2.append(_make_solution(system, sol.phi, sol.residual_norm, restarts + r, 2))
        attempted += n2
        converged += len(phase2)
        if phase2:
            lam_values = [c.lambda_min for c in phase2]
        candidates += phase2

    best = max(candidates, key=lambda c: (c.lambda_min, c.objective, -c.restart_index))
    return OptimizationResult(best, best_j, candidates, np.array(lam_values), converged, attempted)
