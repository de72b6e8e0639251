import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainrestore.basis import enumerate_sector
from chainrestore.fullspace import full_hamiltonian, total_iz
from chainrestore.hamiltonian import (
    ChainSpec,
    CouplingMode,
    build_sector_block,
    coupling_matrix,
    positions_from_couplings,
)
from helpers import sector_projector

couplings = st.lists(st.floats(0.1, 3.0), min_size=1, max_size=5)


class TestChainSpec:
    def test_boundary_adjusted_is_mirror_symmetric(self):
        spec = ChainSpec.boundary_adjusted(42, (0.3005, 0.5311))
        c = spec.nn_couplings
        assert c[0] == c[-1] == 0.3005
        assert c[1] == c[-2] == 0.5311
        assert set(c[2:-2]) == {1.0}

    @pytest.mark.parametrize("bad", [(1.0, 0.0), (1.0, -2.0)])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            ChainSpec(3, bad)

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            ChainSpec(4, (1.0, 1.0))

    def test_too_many_boundary_bonds(self):
        with pytest.raises(ValueError):
            ChainSpec.boundary_adjusted(4, (0.5, 0.5))


class TestPositions:
    def test_homogeneous(self):
        assert np.allclose(positions_from_couplings(ChainSpec.homogeneous(5)), np.arange(5))

    def test_cube_root_gaps(self):
        x = positions_from_couplings(ChainSpec(3, (0.3005, 1.0)))
        assert np.allclose(np.diff(x), [0.3005 ** (-1 / 3), 1.0])
        assert np.diff(x)[0] == pytest.approx(1.49297, abs=1e-5)

    def test_single_bond(self):
        assert np.diff(positions_from_couplings(ChainSpec(2, (0.7,))))[0] == pytest.approx(0.7 ** (-1 / 3))

    @given(couplings)
    def test_nearest_neighbour_couplings_are_reproduced(self, c):
        spec = ChainSpec(len(c) + 1, tuple(c))
        d = coupling_matrix(spec)
        assert np.allclose(np.diag(d, 1), c, rtol=1e-12)


class TestCouplingMatrix:
    def test_dipole_values(self):
        assert coupling_matrix(ChainSpec.homogeneous(3))[0, 2] == pytest.approx(1 / 8)
        assert coupling_matrix(ChainSpec.homogeneous(4))[0, 3] == pytest.approx(1 / 27)

    @given(couplings)
    def test_symmetric_positive_zero_diagonal(self, c):
        d = coupling_matrix(ChainSpec(len(c) + 1, tuple(c)))
        assert np.array_equal(d, d.T)
        assert np.all(np.diag(d) == 0)
        assert np.all(d[~np.eye(len(d), dtype=bool)] > 0)

    def test_dipole_law_from_positions(self):
        spec = ChainSpec.boundary_adjusted(10, (0.3, 0.6))
        x = positions_from_couplings(spec)
        i, j = np.triu_indices(10, 1)
        assert np.all(np.diff(x) > 0)
        assert np.allclose(coupling_matrix(spec)[i, j], 1 / (x[j] - x[i]) ** 3)

    def test_nearest_neighbour_mode(self):
        d = coupling_matrix(ChainSpec(4, (1.0, 2.0, 3.0), CouplingMode.NEAREST_NEIGHBOR_ONLY))
        assert np.array_equal(d, np.diag([1.0, 2.0, 3.0], 1) + np.diag([1.0, 2.0, 3.0], -1))


class TestSectorBlock:
    def test_two_spin_single_excitation(self):
        d = coupling_matrix(ChainSpec(2, (0.8,)))
        h = build_sector_block(d, enumerate_sector(2, 1))
        assert h[0, 0] == h[1, 1] == 0
        assert h[0, 1] == h[1, 0] == pytest.approx(0.4, rel=1e-14)

    @pytest.mark.parametrize("k", [0, 5])
    def test_empty_and_full_sectors(self, k):
        h = build_sector_block(coupling_matrix(ChainSpec.homogeneous(5)), enumerate_sector(5, k))
        assert h.shape == (1, 1) and h[0, 0] == 0

    def test_exactly_symmetric(self):
        h = build_sector_block(coupling_matrix(ChainSpec.boundary_adjusted(9, (0.3,))), enumerate_sector(9, 3))
        assert np.array_equal(h, h.T)

    @pytest.mark.parametrize("spec", [
        ChainSpec.homogeneous(4),
        ChainSpec.boundary_adjusted(6, (0.3005, 0.5311)),
        ChainSpec(5, (0.5, 1.5, 0.9, 1.2), CouplingMode.NEAREST_NEIGHBOR_ONLY),
    ])
    def test_matches_full_space(self, spec):
        n = spec.n_total
        h_full = full_hamiltonian(spec)
        d = coupling_matrix(spec)
        for k in range(n + 1):
            p = sector_projector(n, k)
            assert np.abs(build_sector_block(d, enumerate_sector(n, k)) - p.T @ h_full @ p).max() <= 1e-14

    @pytest.mark.parametrize("n", [3, 4, 5, 6])
    def test_full_hamiltonian_conserves_excitations(self, n):
        h = full_hamiltonian(ChainSpec.boundary_adjusted(n, (0.4,)))
        iz = total_iz(n)
        assert np.abs(h @ iz - iz @ h).max() <= 1e-13

    def test_wrong_coupling_shape(self):
        with pytest.raises(ValueError):
            build_sector_block(np.zeros((3, 3)), enumerate_sector(4, 1))
