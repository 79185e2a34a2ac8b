"""Linear-solver pipeline tests against dense classical oracles."""

import json
import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from qflow import qlsa
from qflow.cfd import (FlowConfig, LinearSystem, analytic_profile,
                       build_be1_system, build_fe_system, fidelity, forcing,
                       initial_condition, rms_error)
from qflow.engine import apply_keyed_ry, run_program
from qflow.gates import CircuitProgram, diag, ublock, x
from qflow.qlsa import (ConvergenceError, HHLResult, PostSelectionError,
                        QPEConfig, banded_shift_terms,
                        central_difference_terms, hamiltonian_unitary,
                        hermitian_dilation, hhl_program, hhl_solve,
                        iterative_be_driver, lcu_apply, one_shot_driver,
                        pauli_terms, rhs_program, suggest_t0)
from qflow.state import AmplitudeState


def make_system(a, b):
    return LinearSystem(sp.csr_array(np.asarray(a, dtype=float)),
                        np.asarray(b, dtype=float), "test")


def random_spd(rng, n, shift=4.0):
    m = rng.normal(size=(n, n))
    return m @ m.T + shift * np.eye(n)


class TestDilation:
    def test_symmetric_input_still_dilated(self):
        cfg = FlowConfig(n_grid=6, re=10.0, dt=0.05)
        system = build_be1_system(cfg, initial_condition(cfg))
        hsys = hermitian_dilation(system)
        assert hsys.dilated_matrix.shape == (8, 8)
        x_dil = np.linalg.solve(hsys.dilated_matrix, hsys.dilated_rhs)
        x_direct = np.linalg.solve(system.dense, system.rhs)
        np.testing.assert_allclose(x_dil[4:], x_direct, atol=1e-12)
        np.testing.assert_allclose(x_dil[:4], 0.0, atol=1e-12)

    def test_identity_matrix(self):
        b = np.array([0.6, 0.8])
        hsys = hermitian_dilation(make_system(np.eye(2), b))
        np.testing.assert_allclose(np.sort(hsys.eigen_cache[0]),
                                   [-1, -1, 1, 1], atol=1e-12)
        x_dil = np.linalg.solve(hsys.dilated_matrix, hsys.dilated_rhs)
        np.testing.assert_allclose(x_dil[2:], b, atol=1e-12)

    def test_spectrum_in_plus_minus_pairs(self):
        rng = np.random.default_rng(3)
        hsys = hermitian_dilation(make_system(rng.normal(size=(4, 4))
                                              + 5 * np.eye(4),
                                              rng.normal(size=4)))
        ev = np.sort(hsys.eigen_cache[0])
        np.testing.assert_allclose(ev, -ev[::-1], atol=1e-10)

    def test_singular_rejected(self):
        a = np.ones((2, 2))
        with pytest.raises(ValueError):
            hermitian_dilation(make_system(a, [1.0, 0.0]))

    def test_fe_toy_matches_marching_oracle(self):
        cfg = FlowConfig(n_grid=4, re=10.0, dt=0.05, m_steps=1, p_pad=0)
        system = build_fe_system(cfg)
        assert system.dim == 4
        u0 = initial_condition(cfg)
        a_visc = np.array([[-2.0, 1.0], [1.0, -2.0]]) / (cfg.h ** 2 * cfg.re)
        u1 = u0 + cfg.dt * (a_visc @ u0 + forcing(cfg))
        hsys = hermitian_dilation(system)
        x_dil = np.linalg.solve(hsys.dilated_matrix, hsys.dilated_rhs)
        np.testing.assert_allclose(x_dil[4:], np.concatenate([u0, u1]),
                                   atol=1e-10)

    def test_odd_dimension_padded_with_mu(self):
        rng = np.random.default_rng(9)
        a = random_spd(rng, 3)
        b = rng.normal(size=3)
        hsys = hermitian_dilation(make_system(a, b))
        assert hsys.padded_dim == 4
        svals = np.linalg.svd(a, compute_uv=False)
        pad = hsys.dilated_matrix[:4, 4:]
        assert pad[3, 3] == pytest.approx(math.sqrt(svals[0] * svals[-1]))
        assert np.linalg.cond(pad) == pytest.approx(np.linalg.cond(a))
        x_dil = np.linalg.solve(hsys.dilated_matrix, hsys.dilated_rhs)
        np.testing.assert_allclose(x_dil[4:7], np.linalg.solve(a, b),
                                   atol=1e-10)


class TestHamiltonianUnitary:
    def test_zero_time_is_identity(self):
        hsys = hermitian_dilation(make_system(np.eye(2), [1.0, 0.0]))
        np.testing.assert_allclose(hamiltonian_unitary(hsys, 0.0), np.eye(4),
                                   atol=1e-12)

    def test_diag_pi(self):
        u = hamiltonian_unitary(np.diag([1.0, -1.0]), math.pi)
        np.testing.assert_allclose(u, -np.eye(2), atol=1e-12)

    def test_matches_expm_oracle(self):
        rng = np.random.default_rng(17)
        hmat = rng.normal(size=(8, 8))
        hmat = hmat + hmat.T
        u = hamiltonian_unitary(hmat, 0.37)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(8), atol=1e-10)
        np.testing.assert_allclose(u, scipy.linalg.expm(1j * 0.37 * hmat),
                                   atol=1e-9)

    def test_non_symmetric_rejected(self):
        with pytest.raises(ValueError):
            hamiltonian_unitary(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)


class TestConfig:
    def test_default_inversion_constant(self):
        assert QPEConfig(6, 1.0).c_rot == pytest.approx(2.0 ** -6)

    def test_validation(self):
        with pytest.raises(ValueError):
            QPEConfig(0, 1.0)
        with pytest.raises(ValueError):
            QPEConfig(4, 0.0)
        with pytest.raises(ValueError):
            QPEConfig(4, 1.0, c_rot=0.9)


class TestControlledPowers:
    def test_eigenbasis_conjugation_equals_kron_oracle(self):
        rng = np.random.default_rng(23)
        hmat = rng.normal(size=(4, 4))
        hmat = hmat + hmat.T
        evals, evecs = np.linalg.eigh(hmat)
        t0 = 0.53
        prog = CircuitProgram(3)
        prog.append(ublock(1, evecs.T))
        prog.append(diag(1, np.exp(1j * evals * t0), controls=[(0, 1)]))
        prog.append(ublock(1, evecs))
        u_ctrl = scipy.linalg.block_diag(np.eye(4),
                                         scipy.linalg.expm(1j * t0 * hmat))
        v = rng.normal(size=8) + 1j * rng.normal(size=8)
        v /= np.linalg.norm(v)
        st = AmplitudeState(3)
        st.vec[:] = v
        run_program(st, prog)
        np.testing.assert_allclose(st.vec, u_ctrl @ v, atol=1e-10)


class TestHHL:
    def test_identity_system_any_clock_width(self):
        # q_pe = 1 cannot represent the dilated +-1 pair distinctly (both
        # alias to the -1/2 code), so two clock bits are the usable floor.
        hsys = hermitian_dilation(make_system(np.eye(2), [1.0, 0.0]))
        for q_pe in (2, 3, 5):
            res = hhl_solve(hsys, QPEConfig(q_pe, math.pi / 2),
                            rhs_program(hsys))
            np.testing.assert_allclose(res.solution, [1.0, 0.0], atol=1e-9)

    def test_single_clock_bit_aliases_dilated_pair(self):
        hsys = hermitian_dilation(make_system(np.eye(2), [1.0, 0.0]))
        with pytest.raises(PostSelectionError):
            hhl_solve(hsys, QPEConfig(1, math.pi), rhs_program(hsys))

    def test_exact_eigenphases_are_machine_precision(self):
        a = np.diag([1.0, 2.0, 3.0, -2.0])
        b = np.array([0.3, 0.5, 0.2, 0.4])
        hsys = hermitian_dilation(make_system(a, b))
        res = hhl_solve(hsys, QPEConfig(4, 2 * math.pi / 16),
                        rhs_program(hsys))
        np.testing.assert_allclose(res.solution, np.linalg.solve(a, b),
                                   atol=1e-9)

    def test_random_system_with_t0_scan(self):
        rng = np.random.default_rng(7)
        a = random_spd(rng, 4)
        b = rng.normal(size=4)
        system = make_system(a, b)
        hsys = hermitian_dilation(system)
        x_true = np.linalg.solve(a, b)
        base = suggest_t0(hsys)
        best = math.inf
        for t0 in np.linspace(0.4 * base, base, 8):
            res = hhl_solve(hsys, QPEConfig(12, float(t0)),
                            rhs_program(hsys), keep_state=False)
            err = np.linalg.norm(res.solution - x_true)
            best = min(best, err / np.linalg.norm(x_true))
        assert best < 1e-3

    def test_residual_shrinks_with_clock_width(self):
        a = np.array([[1.3, 0.2], [0.2, 0.9]])
        b = np.array([0.8, -0.5])
        system = make_system(a, b)
        hsys = hermitian_dilation(system)
        t0 = suggest_t0(hsys)
        eps = []
        for q_pe in range(4, 10):
            res = hhl_solve(hsys, QPEConfig(q_pe, t0), rhs_program(hsys),
                            keep_state=False)
            eps.append(qlsa.residual(system, res.solution))
        for lo, hi in zip(eps[1:], eps[:-1]):
            assert lo <= hi * 1.5 + 1e-12
        assert eps[-1] < eps[0]

    def test_fused_run_matches_explicit_program(self):
        rng = np.random.default_rng(29)
        a = random_spd(rng, 2)
        b = rng.normal(size=2)
        hsys = hermitian_dilation(make_system(a, b))
        qcfg = QPEConfig(5, suggest_t0(hsys))
        b_prep = rhs_program(hsys)

        st_fused = AmplitudeState(1 + 5 + 2)
        run_program(st_fused, b_prep.shifted(6, 8))
        qpe, angles, inv_qpe, _ = qlsa._core(hsys, qcfg)
        run_program(st_fused, qpe)
        apply_keyed_ry(st_fused, 0, 1, 5, angles)
        run_program(st_fused, inv_qpe)

        st_explicit = AmplitudeState(8)
        run_program(st_explicit, hhl_program(hsys, qcfg, b_prep))
        np.testing.assert_allclose(st_explicit.vec, st_fused.vec, atol=1e-12)

    def test_success_probability_is_flag_mass(self):
        rng = np.random.default_rng(31)
        a = random_spd(rng, 2)
        b = rng.normal(size=2)
        hsys = hermitian_dilation(make_system(a, b))
        qcfg = QPEConfig(5, suggest_t0(hsys))
        b_prep = rhs_program(hsys)
        st = AmplitudeState(8)
        run_program(st, hhl_program(hsys, qcfg, b_prep))
        mass = float(np.sum(np.abs(st.vec[1 << 7:]) ** 2))
        res = hhl_solve(hsys, qcfg, b_prep)
        assert res.success_probability == pytest.approx(mass, abs=1e-12)
        assert 0 < res.success_probability <= 1

    def test_rhs_program_encodes_signs(self):
        a = np.diag([1.0, 1.0])
        b = np.array([0.6, -0.8])
        hsys = hermitian_dilation(make_system(a, b))
        prog = rhs_program(hsys)
        st = AmplitudeState(2)
        run_program(st, prog)
        np.testing.assert_allclose(st.vec, [0.6, -0.8, 0.0, 0.0], atol=1e-12)

    def test_zero_rhs_rejected(self):
        hsys = hermitian_dilation(make_system(np.eye(2), [1.0, 0.0]))
        with pytest.raises(ValueError):
            rhs_program(hsys, np.zeros(2))

    def test_result_state_retention_and_json(self):
        hsys = hermitian_dilation(make_system(np.eye(2), [1.0, 0.0]))
        qcfg = QPEConfig(2, math.pi / 2)
        res = hhl_solve(hsys, qcfg, rhs_program(hsys), keep_state=False)
        assert res.raw_state is None
        payload = json.loads(res.to_json())
        assert payload["config"]["q_pe"] == 2
        assert payload["gate_stats"]["core"]["total_ops"] > 0
        np.testing.assert_allclose(payload["solution"], res.solution)


class TestIterativeDriver:
    def test_settles_onto_steady_profile(self):
        cfg = FlowConfig(n_grid=6, re=10.0, dt=0.05, m_steps=400)
        hsys = hermitian_dilation(build_be1_system(cfg,
                                                   initial_condition(cfg)))
        res = iterative_be_driver(cfg, QPEConfig(10, suggest_t0(hsys)))
        assert res.converged
        assert res.steps < 4000
        assert min(res.fidelities) > 0.99
        steady = analytic_profile(cfg, None)
        assert rms_error(res.final, steady) < 5e-3

    def test_low_clock_width_is_worse(self):
        cfg = FlowConfig(n_grid=6, re=10.0, dt=0.05, m_steps=400)
        hsys = hermitian_dilation(build_be1_system(cfg,
                                                   initial_condition(cfg)))
        t0 = suggest_t0(hsys)
        steady = analytic_profile(cfg, None)
        coarse = iterative_be_driver(cfg, QPEConfig(4, t0), tol=1e-4)
        fine = iterative_be_driver(cfg, QPEConfig(10, t0), tol=1e-4)
        assert rms_error(coarse.final, steady) > rms_error(fine.final, steady)

    def test_degenerate_timestep_keeps_inlet_profile(self):
        cfg = FlowConfig(n_grid=6, re=10.0, dt=1e-9, m_steps=1)
        res = iterative_be_driver(cfg, QPEConfig(8, 1.5), max_iters=5)
        assert res.converged and res.steps == 1
        np.testing.assert_allclose(res.final, initial_condition(cfg),
                                   atol=1e-6)

    def test_non_convergence_raises(self):
        cfg = FlowConfig(n_grid=6, re=10.0, dt=0.05, m_steps=400)
        hsys = hermitian_dilation(build_be1_system(cfg,
                                                   initial_condition(cfg)))
        with pytest.raises(ConvergenceError):
            iterative_be_driver(cfg, QPEConfig(8, suggest_t0(hsys)),
                                max_iters=3)


class TestOneShotDriver:
    def _forward_sub_oracle(self, cfg, scheme):
        """March the scheme block by block with dense solves; padding rows
        copy the final state."""
        u = initial_condition(cfg)
        mat = build_be1_system(cfg, u).dense
        fdt = cfg.dt * forcing(cfg)
        a_visc = (np.eye(cfg.n_interior) - mat) / cfg.dt
        blocks = [u.copy()]
        for _ in range(cfg.m):
            if scheme == "be2":
                u = np.linalg.solve(mat, u + fdt)
            else:
                u = u + cfg.dt * (a_visc @ u) + fdt
            blocks.append(u.copy())
        blocks.extend([u.copy()] * (cfg.p_pad or 0))
        return np.stack(blocks)

    def test_be2_matches_block_oracle(self):
        cfg = FlowConfig(n_grid=6, re=10.0, dt=0.05, m_steps=2, p_pad=1)
        hsys = hermitian_dilation(qlsa.build_be2_system(cfg))
        out = one_shot_driver(cfg, "be2", QPEConfig(10, suggest_t0(hsys)))
        oracle = self._forward_sub_oracle(cfg, "be2")
        assert out.space_time.shape == oracle.shape
        assert fidelity(out.final_profile, oracle[cfg.m]) > 0.99
        np.testing.assert_allclose(out.space_time, oracle, atol=5e-2)

    def test_fe_matches_marching_oracle(self):
        cfg = FlowConfig(n_grid=6, re=10.0, dt=0.02, m_steps=2, p_pad=1)
        hsys = hermitian_dilation(build_fe_system(cfg))
        out = one_shot_driver(cfg, "fe", QPEConfig(10, suggest_t0(hsys)))
        oracle = self._forward_sub_oracle(cfg, "fe")
        assert fidelity(out.final_profile, oracle[cfg.m]) > 0.99

    def test_first_block_reproduces_inlet(self):
        cfg = FlowConfig(n_grid=6, re=10.0, dt=0.05, m_steps=2, p_pad=1)
        hsys = hermitian_dilation(qlsa.build_be2_system(cfg))
        out = one_shot_driver(cfg, "be2", QPEConfig(10, suggest_t0(hsys)))
        np.testing.assert_allclose(out.space_time[0], initial_condition(cfg),
                                   atol=1e-2)

    def test_unknown_scheme_rejected(self):
        cfg = FlowConfig(n_grid=6, re=10.0, dt=0.05, m_steps=2)
        with pytest.raises(ValueError):
            one_shot_driver(cfg, "rk4", QPEConfig(4, 1.0))


class TestLCU:
    def test_single_term_is_deterministic(self):
        rng = np.random.default_rng(41)
        u_mat = np.linalg.qr(rng.normal(size=(8, 8)))[0]
        v = rng.normal(size=8)
        v /= np.linalg.norm(v)
        out, prob = lcu_apply([(0.7, u_mat)], v)
        assert prob == 1.0
        np.testing.assert_allclose(out, u_mat @ v, atol=1e-12)

    def test_cancellation_fails_post_selection(self):
        v = np.zeros(4)
        v[0] = 1.0
        with pytest.raises(PostSelectionError):
            lcu_apply([(1.0, np.eye(4)), (1.0, -np.eye(4))], v)

    def test_weight_sign_rejected(self):
        with pytest.raises(ValueError):
            lcu_apply([(-1.0, np.eye(2))], np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            lcu_apply([], np.array([1.0, 0.0]))

    def test_central_difference_matches_classical(self):
        n = 16
        h = 1.0 / n
        y = np.arange(n) / n
        v = 2.0 + np.sin(2 * np.pi * y)
        v /= np.linalg.norm(v)
        out, prob = lcu_apply(central_difference_terms(n, h), v)
        want = (np.roll(v, -1) - np.roll(v, 1)) / (2 * h)
        np.testing.assert_allclose(out.real, want / np.linalg.norm(want),
                                   atol=1e-10)
        assert prob == pytest.approx(
            np.linalg.norm(want) ** 2 / (1.0 / h) ** 2)

    def test_linearity_and_three_term_padding(self):
        rng = np.random.default_rng(43)
        mats = [np.linalg.qr(rng.normal(size=(4, 4)))[0] for _ in range(3)]
        betas = [0.5, 1.1, 0.3]
        v = rng.normal(size=4)
        v /= np.linalg.norm(v)
        out, prob = lcu_apply(list(zip(betas, mats)), v)
        want = sum(b * (m @ v) for b, m in zip(betas, mats))
        np.testing.assert_allclose(out * math.sqrt(prob) * sum(betas), want,
                                   atol=1e-10)

    def test_banded_decomposition_exact_on_padded_block(self):
        mat = (np.diag([2.0] * 8) + np.diag([-1.0] * 7, 1)
               + np.diag([-1.0] * 7, -1))
        terms, dim2 = banded_shift_terms(mat)
        assert dim2 == 16
        beta_sum = sum(b for b, _ in terms)
        v = np.random.default_rng(3).normal(size=8)
        padded = np.zeros(dim2)
        padded[:8] = v / np.linalg.norm(v)
        out, prob = lcu_apply(terms, padded)
        np.testing.assert_allclose(out.real[:8] * math.sqrt(prob) * beta_sum,
                                   mat @ padded[:8], atol=1e-10)

    def test_non_toeplitz_band_rejected(self):
        mat = np.diag([1.0, 2.0, 3.0, 4.0])
        with pytest.raises(ValueError):
            banded_shift_terms(mat)

    def test_pauli_terms_reconstruct_and_apply(self):
        n = 8
        h = 0.1
        stencil = (np.diag(np.ones(n - 1), 1)
                   - np.diag(np.ones(n - 1), -1)) / (2 * h)
        terms = pauli_terms(stencil)
        assert all(b > 0 for b, _ in terms)
        recon = sum(b * u for b, u in terms)
        np.testing.assert_allclose(recon, stencil, atol=1e-10)
        v = np.random.default_rng(5).normal(size=n)
        v /= np.linalg.norm(v)
        out, prob = lcu_apply(terms, v)
        want = stencil @ v
        beta_sum = sum(b for b, _ in terms)
        np.testing.assert_allclose(out * math.sqrt(prob) * beta_sum, want,
                                   atol=1e-10)
