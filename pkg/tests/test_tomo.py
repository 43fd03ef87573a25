import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionnet import kernels, qcore, tomo, _pykernels
from ionnet.device import ReadoutErrorModel
from ionnet.qcore import DensityMatrix

from helpers import simulate_counts, werner

seeds = st.integers(0, 2**32 - 1)
eps = st.floats(0.0, 0.2)


class TestSettings:
    def test_duplicate_identity_canonical(self):
        assert tomo.MeasurementSetting((1, 2)).canonical == (0, 2)

    def test_index_range(self):
        with pytest.raises(ValueError):
            tomo.MeasurementSetting((6,))

    def test_parity_rotation_reads_sigma_phi(self):
        for phi in (0.0, 0.7, np.pi / 2, 2.0):
            u = tomo.parity_rotation(phi)
            sigma = np.cos(phi) * qcore.X + np.sin(phi) * qcore.Y
            assert np.allclose(u.conj().T @ qcore.Z @ u, sigma, atol=1e-12)

    def test_rotations_cover_paulis(self):
        obs = [u.conj().T @ qcore.Z @ u for u in tomo.ROTATIONS]
        for p in (qcore.X, qcore.Y, qcore.Z):
            assert any(np.allclose(o, p) or np.allclose(o, -p) for o in obs)


class TestPovm:
    @settings(max_examples=40, deadline=None)
    @given(eps, eps, st.lists(st.integers(0, 5), min_size=1, max_size=3))
    def test_completeness(self, e0, e1, idx):
        ro = [ReadoutErrorModel(min(e0, 0.49), min(e1, 0.49))] * len(idx)
        effects = tomo._povm_stack([tuple(idx)], ro)[0]
        assert np.allclose(effects.sum(axis=0), np.eye(2 ** len(idx)), atol=1e-10)

    def test_positive(self):
        ro = [ReadoutErrorModel(0.03, 0.01)] * 2
        for e in tomo._povm_stack([(2, 3)], ro)[0]:
            assert np.linalg.eigvalsh(e).min() > -1e-12

    def test_stack_matches_single(self):
        ro = [ReadoutErrorModel(0.03, 0.01), ReadoutErrorModel(0.0, 0.02)]
        stack = tomo._povm_stack([(2, 5)], ro)[0]
        single = tomo.build_povm(tomo.MeasurementSetting((2, 5)), ro)
        assert np.allclose(stack, [m for _, m in single])


class TestKernels:
    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_backends_agree(self, seed):
        rng = np.random.default_rng(seed)
        eff = tomo._povm_stack([(2, 3), (0, 4)], [ReadoutErrorModel(0.01, 0.02)] * 2).reshape(-1, 4, 4)
        rho = qcore.random_density_matrix(2, rng).data
        w = rng.random(len(eff))
        p_fast = kernels.effect_probabilities(eff, rho)
        assert np.allclose(p_fast, _pykernels.effect_probabilities(eff, rho), atol=1e-12)
        assert np.allclose(kernels.weighted_effect_sum(eff, w), _pykernels.weighted_effect_sum(eff, w), atol=1e-12)
        n = np.round(w * 10)
        assert kernels.log_likelihood(n, p_fast) == pytest.approx(_pykernels.log_likelihood(n, p_fast, 1e-12))

    def test_parity_products(self):
        bits = np.array([[0, 0], [0, 1], [1, 1], [1, 0]])
        assert list(kernels.parity_products(bits)) == [1, -1, 1, -1]

    def test_env_forces_fallback(self):
        import os
        import subprocess
        import sys

        env = {**os.environ, "IONNET_KERNELS": "python"}
        out = subprocess.run([sys.executable, "-c", "from ionnet import kernels; print(kernels.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"

    def test_tally(self):
        t = kernels.tally([0, 0, 1], [1, 1, 0], 2, 2)
        assert t.tolist() == [[0, 2], [1, 0]]


class TestMLE:
    @settings(max_examples=8, deadline=None)
    @given(seeds, st.floats(0.0, 0.05))
    def test_loglik_monotone(self, seed, e):
        rng = np.random.default_rng(seed)
        ro = [ReadoutErrorModel(e, e)] * 2
        rho = qcore.random_density_matrix(2, rng).data
        res = tomo.mle_reconstruct(simulate_counts(rho, ro, 2000, rng), tol=1e-9)
        assert np.all(np.diff(res.log_likelihood) >= 0)

    @settings(max_examples=8, deadline=None)
    @given(seeds)
    def test_output_is_state(self, seed):
        rng = np.random.default_rng(seed)
        ro = [ReadoutErrorModel(0.01, 0.01)] * 2
        res = tomo.mle_reconstruct(simulate_counts(werner(0.2), ro, 500, rng))
        res.rho_hat.validate()

    def test_known_state(self):
        rng = np.random.default_rng(11)
        ro = [ReadoutErrorModel(0.005, 0.005)] * 2
        rho = werner(0.1)
        res = tomo.mle_reconstruct(simulate_counts(rho, ro, 10_000, rng))
        assert qcore.fidelity_to_pure(res.rho_hat, qcore.make_target_state(2)) == pytest.approx(
            qcore.fidelity_to_pure(rho, qcore.make_target_state(2)), abs=0.015)

    def test_incomplete_settings(self):
        ro = [ReadoutErrorModel()] * 2
        data = tomo.TomographyDataset({(0, 0): np.array([10, 0, 0, 10])}, ro)
        with pytest.raises(tomo.IncompleteDataError):
            tomo.mle_reconstruct(data)

    def test_zero_counts_regularised(self):
        rng = np.random.default_rng(2)
        ro = [ReadoutErrorModel()] * 2
        pure = qcore.make_target_state(2).projector()
        res = tomo.mle_reconstruct(simulate_counts(pure, ro, 3000, rng))
        assert np.isfinite(res.log_likelihood[-1])
        assert qcore.fidelity_to_pure(res.rho_hat, qcore.make_target_state(2)) > 0.98

    def test_resample_keeps_totals(self):
        rng = np.random.default_rng(3)
        data = simulate_counts(werner(0.1), [ReadoutErrorModel()] * 2, 1000, rng)
        assert data.resample(rng).total_shots == data.total_shots


class TestFidelities:
    @settings(max_examples=50, deadline=None)
    @given(seeds, st.integers(2, 4))
    def test_ghz_invariant_under_local_z(self, seed, n):
        rng = np.random.default_rng(seed)
        rho = DensityMatrix(qcore.random_density_matrix(n, rng).data)
        f0 = tomo.ghz_entanglement_fidelity(rho)
        angles = rng.uniform(0, 2 * np.pi, n)
        rz = qcore.tensor(*[np.diag([1, np.exp(1j * a)]) for a in angles])
        f1 = tomo.ghz_entanglement_fidelity(rz @ rho.data @ rz.conj().T)
        assert f1 == pytest.approx(f0, abs=1e-12)

    def test_ghz_closed_form_is_max(self):
        ghz = qcore.make_target_state(3, 1.1)
        assert tomo.ghz_entanglement_fidelity(ghz.projector()) == pytest.approx(1)

    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_bipartite_matches_bell_diagonal(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.dirichlet(np.ones(4))
        s = 1 / np.sqrt(2)
        bells = np.array([[s, 0, 0, s], [s, 0, 0, -s], [0, s, s, 0], [0, s, -s, 0]])
        rho = sum(wk * np.outer(b, b) for wk, b in zip(w, bells))
        u = np.kron(qcore.random_unitary(2, rng), qcore.random_unitary(2, rng))
        rot = u @ rho @ u.conj().T
        f, ok = tomo.bipartite_entanglement_fidelity(rot)
        assert f == pytest.approx(max(w), abs=1e-6)
        assert tomo.fully_entangled_fraction_bell_diagonal(rho) == pytest.approx(max(w))

    def test_bipartite_needs_two_qubits(self):
        with pytest.raises(qcore.DimensionError):
            tomo.bipartite_entanglement_fidelity(np.eye(8) / 8)


class TestParityPopulation:
    def _bits(self, rho, phases, rng, n_each):
        n = qcore.n_qubits_of(rho.shape[0])
        pop, par_ph, par = [], [], []
        p0 = np.real(np.diag(rho))
        for j in rng.choice(len(p0), n_each, p=p0):
            pop.append([(j >> (n - 1 - q)) & 1 for q in range(n)])
        for ph in phases:
            u = qcore.tensor(*[tomo.parity_rotation(ph)] * n)
            p = np.clip(np.real(np.diag(u @ rho @ u.conj().T)), 0, None)
            for j in rng.choice(len(p), n_each, p=p / p.sum()):
                par.append([(j >> (n - 1 - q)) & 1 for q in range(n)])
                par_ph.append(ph)
        return np.array(pop), par_ph, np.array(par)

    def test_ghz_estimate(self):
        from ionnet.fitstats import phase_grid
        rng = np.random.default_rng(4)
        target = qcore.make_target_state(3, 0.3).projector()
        rho = 0.8 * target + 0.2 * np.eye(8) / 8
        pop, ph, par = self._bits(rho, phase_grid(3), rng, 3000)
        est = tomo.estimate_parity_population(pop, ph, par)
        assert est.P == pytest.approx(0.8 + 0.2 / 4, abs=0.02)
        assert est.C == pytest.approx(0.8, abs=0.03)
        assert est.F == pytest.approx(tomo.ghz_entanglement_fidelity(rho), abs=0.02)

    def test_too_few_phases(self):
        rng = np.random.default_rng(5)
        pop, ph, par = self._bits(werner(0.1), [0.0, 1.0], rng, 50)
        with pytest.raises(ValueError):
            tomo.estimate_parity_population(pop, ph, par)
