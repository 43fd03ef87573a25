import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionnet import netsim, qcore, tomo
from ionnet.device import ModuleClock
from ionnet.netsim import ClassicalLink, RawLinkModel, ScheduleConfig, ShotEngine, ShotRecord

KINDS = ("srsr", "srca", "caca", "ghz3", "ghz4")


def _sched(**kw):
    base = dict(attempt_window=500.0, doppler_window=200.0, eit_window=300.0, attempt_period=1.2,
                success_prob=1e-3)
    return ScheduleConfig(**{**base, **kw})


class TestSchedule:
    @given(st.integers(1, 10_000))
    def test_elapsed_monotone(self, k):
        s = _sched()
        assert s.elapsed_for(k + 1) > s.elapsed_for(k)

    def test_elapsed_no_dead_time_in_first_window(self):
        s = _sched()
        assert s.elapsed_for(400) == pytest.approx(480.0)

    def test_dead_time_after_window(self):
        s = _sched()
        assert s.elapsed_for(420) == pytest.approx(420 * 1.2 + 500.0)

    @settings(max_examples=5, deadline=None)
    @given(st.floats(1e-4, 0.05))
    def test_mean_elapsed_matches_sampling(self, p):
        s = _sched(success_prob=p)
        k = np.random.default_rng(0).geometric(p, 200_000)
        assert s.mean_elapsed() == pytest.approx(s.elapsed_for(k).mean(), rel=0.01)

    def test_duty_cycle(self):
        assert _sched().duty_cycle == pytest.approx(0.5)

    @pytest.mark.parametrize("kw", [dict(success_prob=1.5), dict(success_prob=0.0),
                                    dict(attempt_period=0.0), dict(extra_window=-1.0),
                                    dict(attempt_period=600.0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            _sched(**kw)


class TestLink:
    @given(st.floats(0, 0.2), st.floats(0, 0.5))
    def test_fidelity_formula(self, pe, ce):
        link = RawLinkModel(pe, ce)
        f = qcore.fidelity_to_pure(link.state(), qcore.make_target_state(2))
        assert f == pytest.approx(link.fidelity, abs=1e-12)

    def test_low_fidelity_rejected(self):
        with pytest.raises(ValueError):
            RawLinkModel(0.5, 0.5)

    def test_geometric_attempts(self):
        rng = np.random.default_rng(0)
        s = _sched(success_prob=0.01)
        ks = [netsim.generate_raw_pair(RawLinkModel(), s, rng)[1] for _ in range(20_000)]
        assert np.mean(ks) == pytest.approx(100, rel=0.03)

    def test_messages_wait_for_latency(self):
        clock = ModuleClock()
        link = ClassicalLink(latency=10.0)
        clock.advance("Alice", 5.0)
        assert link.send(clock, "Alice", "Bob", 1) == 15.0
        assert clock.t["Bob"] == 15.0

    def test_exchange(self):
        clock = ModuleClock()
        clock.advance("Alice", 3.0)
        got = ClassicalLink(2.0).exchange(clock, {"Alice": 0, "Bob": 1})
        assert got == {"Bob": 0, "Alice": 1}
        assert clock.t == {"Alice": 3.0, "Bob": 5.0}

    def test_out_of_order(self):
        clock = ModuleClock()
        link = ClassicalLink()
        clock.advance("Alice", 5.0)
        link.send(clock, "Alice", "Bob", 0)
        clock.t["Alice"] = 1.0
        with pytest.raises(RuntimeError):
            link.send(clock, "Alice", "Bob", 0)


class TestEngine:
    @pytest.mark.parametrize("kind", KINDS)
    def test_distributions_normalised(self, cal, kind):
        eng = ShotEngine(cal.network, kind)
        n = len(eng.register)
        for setting in [(0,) * n, (2,) * n, 0.4]:
            d = eng.accepted_distribution(setting)
            assert d.sum() == pytest.approx(1) and d.min() >= 0

    @pytest.mark.parametrize("kind", KINDS)
    def test_accepted_state_valid(self, cal, kind):
        ShotEngine(cal.network, kind).accepted_state().validate()

    def test_no_transfer_no_abort(self, cal):
        assert ShotEngine(cal.network, "srsr").abort_probability() == 0

    def test_sampled_abort_matches_exact(self, cal):
        eng = ShotEngine(cal.network, "caca")
        plan = netsim.settings_plan("caca", 3000, "pst", np.random.default_rng(0))
        recs = netsim.run_experiment("caca", plan, cal.network, seed=3)
        st_ = netsim.rate_report(recs)
        pa = eng.abort_probability()
        sigma = np.sqrt(pa * (1 - pa) / (st_.n_aborts + st_.n_shots))
        assert abs(st_.abort_fraction - pa) < 4 * sigma

    def test_sampled_rate_matches_exact(self, cal):
        eng = ShotEngine(cal.network, "srsr")
        plan = netsim.settings_plan("srsr", 4000, "pst", np.random.default_rng(0))
        recs = netsim.run_experiment("srsr", plan, cal.network, seed=4)
        assert netsim.rate_report(recs).rate == pytest.approx(netsim.expected_rate(eng), rel=0.04)

    def test_storage_lowers_fidelity(self, cal):
        f0 = ShotEngine(cal.network, "storage_net", 0).expected_pst()[2]
        f1 = ShotEngine(cal.network, "storage_net", 40).expected_pst()[2]
        assert f1 < f0

    def test_negative_storage(self, cal):
        with pytest.raises(ValueError):
            ShotEngine(cal.network, "storage_cir", -1)

    def test_pst_bounds_fidelity(self, cal):
        eng = ShotEngine(cal.network, "ghz3")
        _, _, f = eng.expected_pst()
        exact = tomo.ghz_entanglement_fidelity(netsim._reorder(eng.accepted_state(), eng.register))
        assert f == pytest.approx(exact, abs=0.01)


class TestExperiments:
    def test_plan_shapes(self):
        plan = netsim.settings_plan("ghz3", 100, "pst", np.random.default_rng(0))
        assert sum(p is None for _, p in plan) == 50
        assert len({p for _, p in plan if p is not None}) == 8

    def test_plan_unknown_mode(self):
        with pytest.raises(ValueError):
            netsim.settings_plan("srsr", 10, "bogus", np.random.default_rng(0))

    def test_empty_plan(self, cal):
        assert netsim.run_experiment("ghz4", [], cal.network, seed=0) == []

    def test_workers_do_not_change_results(self, cal):
        plan = netsim.settings_plan("srca", 200, "pst", np.random.default_rng(0))
        a = netsim.run_experiment("srca", plan, cal.network, seed=9, workers=1)
        b = netsim.run_experiment("srca", plan, cal.network, seed=9, workers=2)
        assert a == b

    def test_seed_changes_results(self, cal):
        plan = netsim.settings_plan("srsr", 50, "pst", np.random.default_rng(0))
        a = netsim.run_experiment("srsr", plan, cal.network, seed=1)
        b = netsim.run_experiment("srsr", plan, cal.network, seed=2)
        assert a != b

    def test_record_roundtrip(self):
        r = ShotRecord(3, 120, 4567.5, 1, (0, 2), None, (1, 0))
        assert ShotRecord.from_dict(r.to_dict()) == r

    def test_rate_report_counts(self):
        recs = [ShotRecord(i, 10, 1000.0, a, None, 0.0, (0, 0)) for i, a in enumerate((0, 1, 0, 1))]
        st_ = netsim.rate_report(recs)
        assert st_.mean_success_prob == pytest.approx(0.1)
        assert st_.rate == pytest.approx(1000.0)
        assert st_.abort_fraction == pytest.approx(2 / 6)

    def test_rate_report_empty(self):
        with pytest.raises(ValueError):
            netsim.rate_report([])
