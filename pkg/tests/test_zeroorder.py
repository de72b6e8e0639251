import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainrestore.basis import Partition
from chainrestore.channel import coherence_orders, random_density_matrix, receiver_state, reverse_qubits, transfer_tensor
from chainrestore.errors import DegeneracyError, InfeasibleStateError, UnsolvableSystemError
from chainrestore.evolution import BlockOperator, compose_w, evolution_operator, find_t0
from chainrestore.fullspace import full_receiver_state
from chainrestore.hamiltonian import ChainSpec
from chainrestore.zeroorder import (
    ZeroOrderMode,
    ZeroOrderSpec,
    assemble_sender_state,
    exchange_extremes,
    optimize_zero_order_offdiag,
    solve_zero_order,
    solve_zero_order_tensor,
)
from helpers import random_er_blocks

seeds = st.integers(0, 2 ** 32 - 1)
EXCHANGE = ZeroOrderSpec(mode=ZeroOrderMode.PERFECT_WITH_EXCHANGE)
SMALL = [
    (ChainSpec.homogeneous(4), Partition(4, 2, 2, 2)),
    (ChainSpec.boundary_adjusted(5, (0.5,)), Partition(5, 2, 2, 3)),
    (ChainSpec.boundary_adjusted(6, (0.3005, 0.5311)), Partition(6, 2, 2, 4)),
]
MIDDLE = [(1, 1), (2, 2), (1, 2), (2, 1)]


def channel_case(spec, part, rng):
    t = float(rng.uniform(0.5, 10.0))
    blocks = random_er_blocks(part.n_extended_receiver, part.n, rng)
    return t, blocks, compose_w(evolution_operator(spec, t, part.n), blocks, part)


def ideal_tensor(n=2):
    d = 1 << n
    t = np.zeros((d, d, d, d), dtype=complex)
    for a in range(d):
        for b in range(d):
            t[a, b, a, b] = 1.0
    return t


class TestSolve:
    def test_identity_w_exchange(self):
        # receiver stays in |00>, so the middle block must vanish and rho_00 = rho^R_11 = 0
        sol = solve_zero_order(BlockOperator.identity(6, 2), SMALL[2][1], EXCHANGE)
        assert np.allclose(sol.rho0, np.diag([0, 0, 0, 1]), atol=1e-14)

    def test_identity_w_almost_perfect(self):
        sol = solve_zero_order(BlockOperator.identity(6, 2), SMALL[2][1], ZeroOrderSpec(rho00=0.3))
        assert np.allclose(sol.rho0, np.diag([0.3, 0, 0, 0.7]), atol=1e-14)

    def test_ideal_channel_is_degenerate(self):
        # every matrix transfers perfectly, so the middle block is undetermined
        with pytest.raises(DegeneracyError) as err:
            solve_zero_order_tensor(ideal_tensor(), 2, ZeroOrderSpec())
        assert err.value.condition_number > 1e12

    def test_inconsistent_tensor_is_unsolvable(self, rng):
        t = rng.standard_normal((4,) * 4) + 1j * rng.standard_normal((4,) * 4)
        with pytest.raises(UnsolvableSystemError) as err:
            solve_zero_order_tensor(t, 2, ZeroOrderSpec())
        assert err.value.residual > 1e-8

    def test_negative_population(self):
        # forces 2 rho_01,01 + rho_11,11 = 0 with the rest vanishing
        t = np.zeros((4,) * 4, dtype=complex)
        t[1, 1, 1, 1], t[1, 1, 3, 3] = 3.0, 1.0
        with pytest.raises(InfeasibleStateError):
            solve_zero_order_tensor(t, 2, ZeroOrderSpec())

    def test_free_position_validation(self):
        with pytest.raises(ValueError):
            solve_zero_order_tensor(ideal_tensor(), 2, ZeroOrderSpec(free_offdiag=frozenset({(0, 3)})))
        with pytest.raises(ValueError):
            ZeroOrderSpec(rho00=1.5)

    @pytest.mark.parametrize("spec,part", SMALL)
    @pytest.mark.parametrize("mode", list(ZeroOrderMode))
    def test_substitution_oracle(self, rng, spec, part, mode):
        t, blocks, w = channel_case(spec, part, rng)
        sol = solve_zero_order(w, part, ZeroOrderSpec(mode=mode, rho00=0.2))
        out = full_receiver_state(sol.rho0, spec, part, t, blocks)
        for p in MIDDLE:
            assert abs(out[p] - sol.rho0[p]) <= 1e-10
        assert np.trace(sol.rho0).real == pytest.approx(1.0, abs=1e-12)
        if mode is ZeroOrderMode.PERFECT_WITH_EXCHANGE:
            assert np.abs(exchange_extremes(out) - sol.rho0).max() <= 1e-10
        else:
            assert sol.rho0[0, 0].real == pytest.approx(0.2, abs=1e-12)

    def test_chain42_exchange(self, chain42, v42):
        sol = solve_zero_order(v42, chain42[1], EXCHANGE)
        relabelled = reverse_qubits(sol.rho0)
        assert np.allclose(np.diag(relabelled).real, [0.130, 0.487, 0.085, 0.298], atol=5e-3)
        assert abs(relabelled[1, 2]) == pytest.approx(0.110, abs=5e-3)
        assert np.angle(relabelled[1, 2]) == pytest.approx(-1.290, abs=5e-3)
        out = receiver_state(sol.rho0, v42, chain42[1])
        assert np.abs(exchange_extremes(out) - sol.rho0).max() <= 1e-9


class TestInvariants:
    @given(seeds)
    def test_conservation_and_middle_transfer(self, seed):
        rng = np.random.default_rng(seed)
        spec, part = SMALL[2]
        t, blocks, w = channel_case(spec, part, rng)
        sol = solve_zero_order(w, part, ZeroOrderSpec(rho00=0.5))
        higher = {(a, b): 0.01 * complex(*rng.standard_normal(2)) for a, b in [(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)]}
        try:
            rho = assemble_sender_state(sol.rho0, higher)
        except InfeasibleStateError as err:
            rho = assemble_sender_state(sol.rho0, {p: 0.9 * err.shrink_factor * v for p, v in higher.items()})
        out = receiver_state(rho, w, part)
        assert abs(rho[0, 0] + rho[3, 3] - out[0, 0] - out[3, 3]) <= 1e-10
        for p in MIDDLE:
            assert abs(out[p] - rho[p]) <= 1e-9

    @given(seeds)
    def test_top_population_scales_by_top_factor(self, seed):
        rng = np.random.default_rng(seed)
        spec, part = SMALL[1]
        _, _, w = channel_case(spec, part, rng)
        tt = transfer_tensor(w, part)
        rho = np.diag([0.0, 0.0, 0.0, 1.0])
        out = receiver_state(rho, w, part)
        assert out[3, 3].real == pytest.approx(abs(tt[0, 3, 0, 3]) ** 2, abs=1e-12)


class TestExchange:
    def test_diagonal(self):
        assert np.array_equal(np.diag(exchange_extremes(np.diag([1.0, 2, 3, 4]))), [4, 2, 3, 1])

    def test_block_form_keeps_coherences(self):
        rho = np.diag([0.2, 0.3, 0.1, 0.4]).astype(complex)
        rho[1, 2], rho[2, 1] = 0.05j, -0.05j
        out = exchange_extremes(rho)
        assert out[1, 2] == 0.05j and out[0, 0] == 0.4 and out[3, 3] == 0.2

    @given(seeds)
    def test_involution_preserves_state(self, seed):
        rho = random_density_matrix(8, np.random.default_rng(seed))
        out = exchange_extremes(rho)
        assert np.array_equal(exchange_extremes(out), rho)
        assert np.linalg.eigvalsh(out).min() >= -1e-12


class TestAssemble:
    def test_no_free_entries(self):
        rho0 = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
        assert np.array_equal(assemble_sender_state(rho0), rho0)

    def test_small_entries_on_restored_state_are_feasible(self, chain42, v42):
        sol = solve_zero_order(v42, chain42[1], ZeroOrderSpec(rho00=0.5))
        entries = {"00,01": 0.01, "00,10": 0.01, "00,11": 0.01, "01,11": 0.01, "10,11": 0.01}
        rho = assemble_sender_state(sol.rho0, entries)
        assert np.linalg.eigvalsh(rho).min() >= -1e-10
        assert rho[3, 1] == 0.01 and rho[0, 3] == 0.01

    def test_large_entry_reports_shrink(self):
        rho0 = np.diag([0.5, 0.0, 0.0, 0.5]).astype(complex)
        with pytest.raises(InfeasibleStateError) as err:
            assemble_sender_state(rho0, {"00,11": 1.0})
        assert err.value.min_eigenvalue < 0
        assert err.value.shrink_factor == pytest.approx(0.5, abs=1e-9)

    def test_rejects_wrong_positions(self):
        rho0 = np.eye(4) / 4
        with pytest.raises(ValueError):
            assemble_sender_state(rho0, {"11,01": 0.1})
        with pytest.raises(ValueError):
            assemble_sender_state(rho0, zero_order_offdiag={"00,11": 0.1})


class TestOffdiagOptimization:
    @pytest.fixture(scope="class")
    @classmethod
    def result(cls):
        spec, part = SMALL[2]
        t0 = find_t0(spec, part, t_max=20.0).t0
        return part, evolution_operator(spec, t0, 2), optimize_zero_order_offdiag(
            evolution_operator(spec, t0, 2), part, restarts=4, seed=2, ascent_steps=5)

    def test_offdiag_entry_scales_by_factor(self, result, rng):
        part, v, res = result
        from chainrestore.restorer import ParameterLayout, materialize_unitary
        u = materialize_unitary(ParameterLayout(4, 2).split(res.phi), 4)
        w = compose_w(v, u.blocks, part)
        lam = res.lambdas[(1, 2)]
        assert res.solution.lambda0[(1, 2)] == pytest.approx(lam, abs=1e-12)
        for _ in range(5):
            c = 0.05 * complex(*rng.standard_normal(2))
            rho = assemble_sender_state(res.solution.rho0, zero_order_offdiag={(1, 2): c})
            out = receiver_state(rho, w, part)
            assert abs(out[1, 2] - lam * c) <= 1e-10
            ex = exchange_extremes(out)
            mask = np.ones((4, 4), bool)
            mask[1, 2] = mask[2, 1] = False
            assert np.abs(np.where(mask, ex - rho, 0)).max() <= 1e-9

    def test_objective_is_the_factor(self, result):
        _, _, res = result
        assert res.search.best.objective == pytest.approx(abs(res.lambdas[(1, 2)]), abs=1e-12)
        assert coherence_orders(2)[1, 2] == 0
