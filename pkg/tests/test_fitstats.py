import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionnet import fitstats
from ionnet.fitstats import FitError


class TestPhaseGrid:
    @given(st.integers(2, 6))
    def test_default_density(self, n):
        g = fitstats.phase_grid(n)
        assert len(g) == 2 * n + 2
        assert g[0] == 0 and g[-1] < 2 * np.pi / n


class TestFringe:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 4), st.floats(0.0, 1.0), st.floats(-np.pi, np.pi))
    def test_exact_on_noiseless(self, n, c, phi):
        ph = fitstats.phase_grid(n)
        y = c * np.cos(n * ph - phi)
        fit = fitstats.fit_parity_fringe(ph, y, np.full(len(ph), 1e-9), n)
        assert fit.C_raw == pytest.approx(c, abs=1e-10)
        assert np.allclose(fit.predict(ph), y, atol=1e-9)

    def test_too_few_phases(self):
        with pytest.raises(FitError):
            fitstats.fit_parity_fringe([0, 0.5, 1.0], [1, 0, -1], [0.1] * 3, 2)

    def test_phase_gap(self):
        ph = np.linspace(0, 0.4, 8)
        with pytest.raises(FitError):
            fitstats.fit_parity_fringe(ph, np.cos(2 * ph), np.full(8, 0.01), 2)

    def test_bias_correction_floor(self):
        rng = np.random.default_rng(0)
        ph = fitstats.phase_grid(2)
        fit = fitstats.fit_parity_fringe(ph, rng.normal(0, 0.1, len(ph)), np.full(len(ph), 0.1), 2)
        assert fit.C >= 0 and fit.C <= fit.C_raw

    def test_bias_correction_targets_c_squared(self):
        rng = np.random.default_rng(1)
        ph = fitstats.phase_grid(2)
        raw, corr = [], []
        for _ in range(400):
            y = 0.3 * np.cos(2 * ph) + rng.normal(0, 0.15, len(ph))
            f = fitstats.fit_parity_fringe(ph, y, np.full(len(ph), 0.15), 2)
            raw.append(f.C_raw)
            corr.append(f.C)
        raw2, corr2 = np.mean(np.square(raw)), np.mean(np.square(corr))
        assert abs(corr2 - 0.09) < abs(raw2 - 0.09)
        assert corr2 == pytest.approx(0.09, abs=0.005)


class TestDecay:
    @pytest.mark.parametrize("model,c", [("floor", 0.5), ("free", 0.3)])
    def test_exact_recovery(self, model, c):
        t = np.array([0, 5, 10, 20, 40, 80, 150.0])
        y = c + 0.45 * np.exp(-t / 44)
        fit = fitstats.fit_exp_decay(t, y, np.full(len(t), 1e-4), model)
        assert fit.T == pytest.approx(44, rel=1e-6)
        assert fit.offset == pytest.approx(c, abs=1e-6)

    def test_bootstrap_ci_covers(self):
        rng = np.random.default_rng(2)
        t = np.linspace(0, 10000, 9)
        err = np.full(len(t), 0.01)
        y = 0.5 + 0.4 * np.exp(-t / 14000) + rng.normal(0, 0.01, len(t))
        fit = fitstats.fit_exp_decay(t, y, err, "floor", rng)
        lo, hi = fit.ci["T"]
        assert lo < fit.T < hi

    def test_constant_not_identifiable(self):
        fit = fitstats.fit_exp_decay([0, 1, 2, 3], [0.5] * 4, [0.01] * 4)
        assert not fit.identifiable and np.isinf(fit.T)

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fitstats.fit_exp_decay([0, 1], [0.9, 0.8], [0.01, 0.01])

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            fitstats.fit_exp_decay([0, 1, 2], [0.9, 0.8, 0.7], [0.01] * 3, "linear")


class TestBootstrap:
    def test_interval_contains_mean(self):
        rng = np.random.default_rng(3)
        x = rng.normal(1.0, 0.5, 500)
        val, (lo, hi) = fitstats.bootstrap(x, np.mean, 300, rng)
        assert lo < val < hi
        assert hi - lo == pytest.approx(2 * 1.96 * 0.5 / np.sqrt(500), rel=0.25)

    def test_min_resamples(self):
        with pytest.raises(ValueError):
            fitstats.bootstrap([1.0, 2.0], np.mean, 50, np.random.default_rng())

    def test_binomial(self):
        assert fitstats.binomial_error(0.5, 100) == pytest.approx(0.05)
        with pytest.raises(ValueError):
            fitstats.binomial_error(0.5, 0)

    def test_report(self):
        text = fitstats.format_report([{"name": "T", "value": 44.0, "ci": (40.0, 48.0), "n": 9}])
        assert "T" in text.splitlines()[1] and "44" in text
