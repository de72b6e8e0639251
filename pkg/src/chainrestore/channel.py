"""Sender-to-receiver channel induced by W, its Kraus form and coherence orders.

The line S ∪ TL ∪ R starts in the ground state, so only the W columns
``(I_S, 0_TL, 0_R)`` enter.  With ``A[x, N_R, I_S] = W_{x N_R; I_S 0 0}``
(``x`` running over configurations of S ∪ TL) the receiver state is
``sum_x A[x] rho_S A[x]^†``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .basis import MultiIndex, Partition, _extract, enumerate_sector, join_index, popcount
from .errors import NumericalError
from .evolution import BlockOperator, evolution_operator
from .hamiltonian import ChainSpec

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
COMPLETENESS_TOL = 1e-10

# callables ``hook(kraus_tensor, output)`` run after every channel evaluation;
# ``output`` is the receiver state, or the transfer tensor
evaluation_hooks: list = []


def _notify(a: np.ndarray, out: np.ndarray) -> None:
    for hook in evaluation_hooks:
        hook(a, out)


def n_qubits_of(rho: np.ndarray) -> int:
    dim = rho.shape[0]
    n = dim.bit_length() - 1
    if rho.ndim != 2 or rho.shape != (dim, dim) or (1 << n) != dim:
        raise ValueError(f"expected a 2^n x 2^n matrix, got shape {rho.shape}")
    return n


def validate_density_matrix(rho: np.ndarray, psd_tol: float = PSD_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    n_qubits_of(rho)
    if np.abs(rho - rho.conj().T).max() > HERMITIAN_TOL:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > TRACE_TOL:
        raise ValueError(f"density matrix trace is {np.trace(rho).real:.15g}, not 1")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -psd_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


def random_density_matrix(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank ``G G^†`` state with complex Gaussian ``G``."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def coherence_orders(n: int) -> np.ndarray:
    """``orders[I, J] = |J| - |I|`` for an ``n``-qubit matrix."""
    pops = np.array([popcount(c) for c in range(1 << n)])
    return pops[None, :] - pops[:, None]


@dataclass
class CoherenceDecomposition:
    components: dict[int, np.ndarray]

    def reassemble(self) -> np.ndarray:
        return sum(self.components.values())

    def __getitem__(self, order: int) -> np.ndarray:
        return self.components[order]


def coherence_decompose(rho: np.ndarray) -> CoherenceDecomposition:
    rho = np.asarray(rho)
    n = n_qubits_of(rho)
    orders = coherence_orders(n)
    return CoherenceDecomposition({m: np.where(orders == m, rho, 0) for m in range(-n, n + 1)})


@dataclass(frozen=True)
class _KrausLayout:
    x_codes: tuple[int, ...]
    # per sector k: position of each chain state in the flattened (x, N_R) grid
    targets: dict[int, np.ndarray]
    # per sender label: (sector, column index of I_S 0_TL 0_R)
    columns: tuple[tuple[int, int], ...]


@lru_cache(maxsize=None)
def kraus_layout(partition: Partition) -> _KrausLayout:
    n = partition.n
    nt = partition.n_total
    s_tl_nodes = partition.sender_nodes + partition.tl_nodes
    r_nodes = partition.receiver_nodes
    zero_tl = MultiIndex(0, partition.n_tl)
    zero_r = MultiIndex(0, n)
    raw = {}
    x_set = set()
    for k in range(n + 1):
        basis = enumerate_sector(nt, k)
        xs = [_extract(c, nt, s_tl_nodes) for c in basis.codes]
        rs = [_extract(c, nt, r_nodes) for c in basis.codes]
        raw[k] = (xs, rs)
        x_set.update(xs)
    x_codes = tuple(sorted(x_set, key=lambda c: (popcount(c), c)))
    x_pos = {c: i for i, c in enumerate(x_codes)}
    dim_r = 1 << n
    targets = {k: np.array([x_pos[x] * dim_r + r for x, r in zip(*raw[k])]) for k in raw}
    columns = []
    for label in range(1 << n):
        i_s = MultiIndex(label, n)
        basis = enumerate_sector(nt, i_s.norm)
        columns.append((i_s.norm, basis.index_of(join_index(i_s, zero_tl, zero_r, partition))))
    return _KrausLayout(x_codes, targets, tuple(columns))


def kraus_tensor(w: BlockOperator, partition: Partition) -> np.ndarray:
    """``A[x, N_R, I_S]``; ``x`` indexes configurations of S ∪ TL with <= N excitations."""
    lay = kraus_layout(partition)
    dim = 1 << partition.n
    a = np.zeros((len(lay.x_codes) * dim, dim), dtype=complex)
    for label, (k, col) in enumerate(lay.columns):
        a[lay.targets[k], label] = w[k][:, col]
    return a.reshape(len(lay.x_codes), dim, dim)


def transfer_tensor(w: BlockOperator, partition: Partition) -> np.ndarray:
    """``T[N_R, M_R, I_S, J_S]`` with ``rho_R = T . rho_S``."""
    a = kraus_tensor(w, partition)
    t = np.einsum("xni,xmj->nmij", a, a.conj(), optimize=True)
    _notify(a, t)
    return t


@dataclass
class KrausSet:
    operators: list[np.ndarray]
    labels: list[tuple[MultiIndex, MultiIndex]]

    def completeness_error(self) -> float:
        dim = self.operators[0].shape[1]
        acc = sum(k.conj().T @ k for k in self.operators)
        return float(np.abs(acc - np.eye(dim)).max())

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.operators)


def kraus_set(w: BlockOperator, partition: Partition, tol: float = COMPLETENESS_TOL) -> KrausSet:
    a = kraus_tensor(w, partition)
    lay = kraus_layout(partition)
    n, n_tl = partition.n, partition.n_tl
    labels = [(MultiIndex(x >> n_tl, n), MultiIndex(x & ((1 << n_tl) - 1), n_tl)) for x in lay.x_codes]
    ks = KrausSet(list(a), labels)
    err = ks.completeness_error()
    if err > tol:
        raise NumericalError(f"Kraus completeness violated by {err:.3e}")
    return ks


def apply_transfer(t: np.ndarray, rho_s: np.ndarray) -> np.ndarray:
    return np.einsum("nmij,ij->nm", t, rho_s)


def receiver_state(rho_s: np.ndarray, w: BlockOperator, partition: Partition, validate: bool = True) -> np.ndarray:
    if validate:
        rho_s = validate_density_matrix(rho_s)
    if rho_s.shape != (1 << partition.n,) * 2:
        raise ValueError(f"sender state must be {1 << partition.n}-dimensional")
    a = kraus_tensor(w, partition)
    out = np.einsum("xni,ij,xmj->nm", a, rho_s, a.conj(), optimize=True)
    _notify(a, out)
    return out


@dataclass
class NonMixingReport:
    max_leakage: dict[int, float]
    threshold: float
    trials: int

    @property
    def passed(self) -> bool:
        return max(self.max_leakage.values()) <= self.threshold


def verify_non_mixing(
    spec: ChainSpec, partition: Partition, t: float, trials: int, seed: int = 0, threshold: float = 1e-12
) -> NonMixingReport:
    """Send states holding a single coherence order (plus diagonal) and measure leakage.

    For each order ``n >= 1`` the sender state is ``diag(rho) + s (rho^(n) + rho^(-n))``
    with ``s`` small enough to keep it positive; any receiver weight at orders
    other than ``±n`` and 0 counts as leakage.  Order 0 uses a diagonal
    state and measures all off-diagonal orders.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    w = evolution_operator(spec, t, partition.n)
    a = kraus_tensor(w, partition)
    n = partition.n
    dim = 1 << n
    leak = {m: 0.0 for m in range(n + 1)}
    for _ in range(trials):
        rho = random_density_matrix(dim, rng)
        dec = coherence_decompose(rho)
        diag = np.diag(np.diag(rho))
        for order in range(n + 1):
            if order == 0:
                sender = diag
                allowed = {0}
            else:
                off = dec[order] + dec[-order]
                scale = min(1.0, 0.5 * np.diag(rho).real.min() / max(np.abs(np.linalg.eigvalsh(off)).max(), 1e-300))
                sender = diag + scale * off
                allowed = {order, -order, 0}
            out = np.einsum("xni,ij,xmj->nm", a, sender, a.conj(), optimize=True)
            out_dec = coherence_decompose(out)
            worst = max((np.abs(c).max() for m, c in out_dec.components.items() if m not in allowed), default=0.0)
            leak[order] = max(leak[order], float(worst))
    return NonMixingReport(leak, threshold, trials)


def reverse_qubits(rho: np.ndarray) -> np.ndarray:
    """Relabel an n-qubit matrix with the qubit order reversed (qubit 1 <-> qubit n)."""
    rho = np.asarray(rho)
    n = n_qubits_of(rho)
    perm = np.array([int(format(c, f"0{n}b")[::-1], 2) if n else 0 for c in range(1 << n)])
    return rho[np.ix_(perm, perm)]
