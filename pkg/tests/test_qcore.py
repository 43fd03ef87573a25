import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionnet import qcore
from ionnet.qcore import DensityMatrix, DimensionError, QuantumChannel

seeds = st.integers(0, 2**32 - 1)


class TestDensityMatrix:
    def test_rejects_bad_trace(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.eye(2))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_rejects_non_power_of_two(self):
        with pytest.raises(DimensionError):
            DensityMatrix(np.eye(3) / 3)

    def test_label_count(self):
        with pytest.raises(DimensionError):
            DensityMatrix(np.eye(4) / 4, ("a",))

    def test_immutable(self):
        rho = DensityMatrix.maximally_mixed(1)
        with pytest.raises(ValueError):
            rho.data[0, 0] = 1


class TestVectorization:
    def test_column_stacking(self):
        a = np.arange(4).reshape(2, 2)
        assert list(qcore.vectorize(a)) == [0, 2, 1, 3]

    @given(seeds)
    def test_roundtrip(self, seed):
        a = np.random.default_rng(seed).standard_normal((4, 4))
        assert np.array_equal(qcore.unvectorize(qcore.vectorize(a)), a)

    def test_kraus_identity(self):
        rng = np.random.default_rng(0)
        k = qcore.random_unitary(2, rng)
        rho = qcore.random_density_matrix(1, rng).data
        lhs = qcore.vectorize(k @ rho @ k.conj().T)
        rhs = np.kron(k.conj(), k) @ qcore.vectorize(rho)
        assert np.allclose(lhs, rhs, atol=1e-14)


class TestChannels:
    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(1, 2))
    def test_superop_matches_kraus(self, seed, n):
        rng = np.random.default_rng(seed)
        ch = qcore.random_channel(n, rng)
        rho = qcore.random_density_matrix(n, rng)
        direct = qcore.apply_channel(rho, ch, list(range(n))).data
        via = qcore.superop_apply(qcore.kraus_to_superop(ch), rho)
        assert np.allclose(direct, via, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_choi_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        s = qcore.kraus_to_superop(qcore.random_channel(1, rng))
        s2 = qcore.choi_to_superop(qcore.superop_to_choi(s), 2)
        assert np.allclose(s.matrix, s2.matrix, atol=1e-12)
        back = qcore.kraus_to_superop(qcore.choi_to_kraus(qcore.superop_to_choi(s), 2))
        assert np.allclose(back.matrix, s.matrix, atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_channel_output_is_state(self, seed):
        rng = np.random.default_rng(seed)
        out = qcore.apply_channel(qcore.random_density_matrix(2, rng), qcore.random_channel(1, rng), [1])
        out.validate()

    def test_depolarizing_full(self):
        rho = qcore.random_density_matrix(2, np.random.default_rng(3))
        out = qcore.apply_channel(rho, qcore.depolarizing_channel(1.0, 2), [0, 1])
        assert np.allclose(out.data, np.eye(4) / 4, atol=1e-14)

    def test_depolarizing_fidelity_formula(self):
        from ionnet.device import noise_avg_fidelity
        for f in (0.9, 0.976, 0.999):
            p = qcore.depolarizing_prob_from_fidelity(f, 4)
            assert noise_avg_fidelity(qcore.depolarizing_channel(p, 2), 4) == pytest.approx(f, abs=1e-12)

    def test_amplitude_damping_fixed_point(self):
        out = qcore.apply_channel(DensityMatrix(np.diag([0, 1.0])), qcore.amplitude_damping_channel(1.0), [0])
        assert np.allclose(out.data, np.diag([1, 0]))

    def test_dephasing_scales_coherence(self):
        plus = DensityMatrix(np.full((2, 2), 0.5))
        out = qcore.apply_channel(plus, qcore.dephasing_channel(0.3), [0])
        assert out.data[0, 1] == pytest.approx(0.15)

    def test_trace_increasing_rejected(self):
        with pytest.raises(ValueError):
            QuantumChannel((2 * np.eye(2),), trace_preserving=False)

    def test_then_order(self):
        x = qcore.unitary_channel(qcore.X)
        ad = qcore.amplitude_damping_channel(1.0)
        out = qcore.apply_channel(DensityMatrix(np.diag([1.0, 0])), x.then(ad), [0])
        assert np.allclose(out.data, np.diag([1, 0]))

    def test_dimension_mismatch(self):
        rho = DensityMatrix.maximally_mixed(2)
        with pytest.raises(DimensionError):
            qcore.apply_channel(rho, qcore.depolarizing_channel(0.1, 2), [0])


class TestPartialTrace:
    def test_bell_marginal(self):
        bell = DensityMatrix.from_pure(qcore.make_target_state(2), ("a", "b"))
        red = qcore.partial_trace(bell, ["b"])
        assert np.allclose(red.data, np.eye(2) / 2)
        assert red.qubit_labels == ("b",)

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_product_state(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (qcore.random_density_matrix(1, rng) for _ in range(3))
        ab = qcore.tensor_states(a.relabel({0: "a"}), b.relabel({0: "b"}), c.relabel({0: "c"}))
        assert np.allclose(qcore.partial_trace(ab, ["b"]).data, b.data, atol=1e-12)
        assert np.allclose(qcore.partial_trace(ab, ["a", "c"]).data, np.kron(a.data, c.data), atol=1e-12)

    def test_msb_convention(self):
        s = DensityMatrix(np.diag([0, 0, 1.0, 0]), ("q0", "q1"))
        assert qcore.partial_trace(s, ["q0"]).data[1, 1] == pytest.approx(1)


class TestTargets:
    def test_fidelity_to_target(self):
        ghz = qcore.make_target_state(3, 0.4)
        assert qcore.fidelity_to_pure(ghz.projector(), ghz) == pytest.approx(1)

    def test_target_needs_two_qubits(self):
        with pytest.raises(ValueError):
            qcore.make_target_state(1)


class TestRngStream:
    def test_split_independent_of_parent_draws(self):
        a = qcore.RngStream(5)
        b = qcore.RngStream(5)
        a.random(100)
        assert a.split("x").random() == b.split("x").random()

    def test_children_differ(self):
        r = qcore.RngStream(5)
        assert r.split(1).random() != r.split(2).random()

    def test_haar_mean_state(self):
        rng = np.random.default_rng(0)
        m = np.mean([qcore.haar_sample(2, rng).projector() for _ in range(20000)], axis=0)
        assert np.allclose(m, np.eye(2) / 2, atol=0.01)
