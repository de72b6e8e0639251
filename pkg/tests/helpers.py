import numpy as np

from chainrestore.fullspace import full_er_unitary
from chainrestore.basis import enumerate_sector


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR with phase correction."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_er_blocks(n_er: int, k_max: int, rng: np.random.Generator) -> dict[int, np.ndarray]:
    """Random unitary per ER sector, with the 0-excitation block fixed to 1."""
    blocks = {k: random_unitary(len(enumerate_sector(n_er, k)), rng) for k in range(1, min(k_max, n_er) + 1)}
    return {0: np.ones((1, 1), dtype=complex), **blocks}


def sector_projector(n: int, k: int) -> np.ndarray:
    """Columns are the full-space basis vectors of sector k, in canonical order."""
    codes = enumerate_sector(n, k).codes
    p = np.zeros((1 << n, len(codes)))
    p[list(codes), np.arange(len(codes))] = 1.0
    return p


__all__ = ["full_er_unitary", "random_er_blocks", "random_unitary", "sector_projector"]
