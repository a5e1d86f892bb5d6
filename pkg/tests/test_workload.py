import pytest

from faaslab.cluster import Application
from faaslab.errors import ConfigError
from faaslab.workload import (EVAL_BANDS, TRAIN_BAND, TraceSeries, WorkloadSpec,
                              builtin_catalog, filter_traces, load_traces,
                              make_workload, save_traces, select_apps,
                              synthesize, synthetic_traces, window_rates)


class TestTraceIO:
    def test_row_parses_as_rates(self, tmp_path):
        p = tmp_path / "traces.txt"
        p.write_text("f1, 3 5 2\n")
        series = load_traces(p)
        assert series[0].trace_id == "f1"
        assert series[0].counts == (3, 5, 2)
        assert [series[0].rate_at(w) for w in range(3)] == [3, 5, 2]

    def test_negative_count_rejected_with_line(self, tmp_path):
        p = tmp_path / "traces.txt"
        p.write_text("ok, 1 2\nbad, 3 -1\n")
        with pytest.raises(ConfigError, match=":2"):
            load_traces(p)

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "traces.txt"
        p.write_text("\n")
        with pytest.raises(ConfigError):
            load_traces(p)

    def test_malformed_row_rejected(self, tmp_path):
        p = tmp_path / "traces.txt"
        p.write_text("justtext\n")
        with pytest.raises(ConfigError, match=":1"):
            load_traces(p)

    def test_roundtrip(self, tmp_path):
        original = [TraceSeries("a", (1, 2, 3)), TraceSeries("b", (0, 4))]
        p = tmp_path / "out.txt"
        save_traces(original, p)
        assert load_traces(p) == original

    def test_filter_by_peak_rate(self):
        corpus = [TraceSeries("lo", (10, 20)), TraceSeries("hi", (10, 61))]
        kept = filter_traces(corpus, max_rate=60)
        assert [s.trace_id for s in kept] == ["lo"]

    def test_trace_validation(self):
        with pytest.raises(ConfigError):
            TraceSeries("x", ())
        with pytest.raises(ConfigError):
            TraceSeries("x", (1, -2))


class TestSynthesize:
    def _spec(self, counts, duration, **kw):
        app = Application(app_id=0, function_sequence=(0,))
        trace = TraceSeries("t", counts)
        return WorkloadSpec(duration=duration, applications=(app,),
                            entry_traces={0: trace}, **kw)

    def test_even_spread_exact_counts(self):
        arrivals = synthesize(self._spec((2, 2, 2), 3))
        assert len(arrivals) == 6
        for w in range(3):
            in_window = [t for t, _ in arrivals if w <= t < w + 1]
            assert len(in_window) == 2
        assert arrivals == sorted(arrivals)

    def test_no_arrivals_after_duration(self):
        arrivals = synthesize(self._spec((5, 5), 2))
        assert all(t < 2.0 for t, _ in arrivals)

    def test_deterministic_for_same_seed(self):
        a = synthesize(self._spec((3, 1, 4), 3, seed=9, jitter=True))
        b = synthesize(self._spec((3, 1, 4), 3, seed=9, jitter=True))
        assert a == b

    def test_jitter_changes_placement_not_counts(self):
        flat = synthesize(self._spec((4, 4), 2, seed=1))
        jit = synthesize(self._spec((4, 4), 2, seed=1, jitter=True))
        assert len(flat) == len(jit) == 8
        assert flat != jit

    def test_trace_shorter_than_duration_cycles(self):
        arrivals = synthesize(self._spec((1, 3), 4))
        per_window = [sum(1 for t, _ in arrivals if w <= t < w + 1) for w in range(4)]
        assert per_window == [1, 3, 1, 3]

    def test_shared_entry_function_deals_round_robin(self):
        apps = (Application(app_id=0, function_sequence=(0,)),
                Application(app_id=1, function_sequence=(0,)))
        spec = WorkloadSpec(duration=1, applications=apps,
                            entry_traces={0: TraceSeries("t", (4,))})
        arrivals = synthesize(spec)
        assert [a for _, a in arrivals] == [0, 1, 0, 1]

    def test_missing_trace_assignment_rejected(self):
        app = Application(app_id=0, function_sequence=(0,))
        with pytest.raises(ConfigError):
            WorkloadSpec(duration=10, applications=(app,), entry_traces={})


class TestBandFitting:
    def test_aggregate_rate_in_band_every_window(self):
        profiles, apps = select_apps(["primary", "float", "thumbnail", "facial", "todo"])
        assert len(profiles) == 14
        corpus = synthetic_traces(n=12, length=120, seed=5)
        spec = make_workload(apps, corpus, EVAL_BANDS["mid"], duration=60, seed=3)
        lo, hi = EVAL_BANDS["mid"]
        arrivals = synthesize(spec)
        for w in range(60):
            count = sum(1 for t, _ in arrivals if w <= t < w + 1)
            assert lo <= count <= hi
        for rates in window_rates(spec):
            assert lo <= sum(rates.values()) <= hi

    def test_zero_windows_filled_to_band_floor(self):
        app = Application(app_id=0, function_sequence=(0,))
        spec = WorkloadSpec(duration=2, applications=(app,),
                            entry_traces={0: TraceSeries("z", (0, 0))},
                            band=(5, 20))
        arrivals = synthesize(spec)
        per_window = [sum(1 for t, _ in arrivals if w <= t < w + 1) for w in range(2)]
        assert per_window == [5, 5]

    def test_training_entry_function_cap(self):
        profiles, apps = select_apps(["primary", "float", "matmul", "linpack", "load"])
        corpus = synthetic_traces(n=4, length=60, seed=0)
        with pytest.raises(ConfigError, match="at most 4"):
            make_workload(apps, corpus, TRAIN_BAND, duration=60, seed=1, training=True)
        make_workload(apps, corpus, TRAIN_BAND, duration=60, seed=1, training=False)


class TestCatalog:
    def test_twelve_applications(self):
        profiles, apps, names = builtin_catalog()
        assert len(apps) == 12
        assert len(names) == 12
        chain_lengths = sorted(len(a.function_sequence) for a in apps)
        assert chain_lengths == [1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 5, 5]
        for profile in profiles.values():
            assert 0 < profile.standard_response_time < 10.0
            assert 2.0 <= profile.cold_start_seconds <= 6.0
            assert profile.initial_pod_cpu <= 1.0
            assert profile.initial_pod_mem <= 3072.0

    def test_select_apps_trims_profiles(self):
        profiles, apps = select_apps(["primary", "thumbnail"])
        used = {fn for a in apps for fn in a.function_sequence}
        assert set(profiles) == used
        assert len(apps) == 2

    def test_unknown_name_rejected(self):
        with pytest.raises(ConfigError, match="unknown application"):
            select_apps(["nonesuch"])


class TestSyntheticCorpus:
    def test_bounded_and_deterministic(self):
        a = synthetic_traces(n=5, length=100, seed=4)
        b = synthetic_traces(n=5, length=100, seed=4)
        assert a == b
        for series in a:
            assert len(series.counts) == 100
            assert series.max_rate <= 60
