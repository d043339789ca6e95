"""Simulated teacher state machine, metrics, and trace files."""

import numpy as np
import pytest

from ot3d.params import Params
from ot3d.protocol import (STATUS_EXHAUSTED, STATUS_STALLED, IterationRecord,
                           ProtocolConfig, compute_metrics, load_trace,
                           run_experiment, running_accuracy, save_trace)


class StubProvider:
    """In-memory provider with trivially distinct 'features' per view."""

    def __init__(self, categories, views_per_category):
        self.params = None
        self._views = {c: [f"{c}/{i:02d}" for i in range(views_per_category)]
                       for c in categories}

    def categories(self):
        return list(self._views)

    def views(self, category):
        return list(self._views[category])

    def all_view_ids(self):
        return [v for vs in self._views.values() for v in vs]

    def features(self, vid):
        return np.full((3, 4), hash(vid) % 97, dtype=np.float64)


class OracleAgent:
    """Answers with the true category parsed from the view id."""

    def __init__(self):
        self.taught = []

    def teach(self, name, views):
        self.taught.append(name)

    def correct(self, name, view):
        raise AssertionError("oracle agent never needs correction")

    def predict(self, features, vid=None):
        return vid.split("/")[0]


class AdversarialAgent:
    """Always answers a wrong label."""

    def __init__(self):
        self.known = []

    def teach(self, name, views):
        self.known.append(name)

    def correct(self, name, view):
        pass

    def predict(self, features, vid=None):
        true = vid.split("/")[0]
        return "not-" + true


def stub_config(categories=("a", "b", "c", "d", "e"), views=20, **kwargs):
    provider = StubProvider(categories, views)
    params = Params(generic_words=5, topics=3, specific_words=3)
    return ProtocolConfig(dataset=provider, params=params, **kwargs)


class TestRunningAccuracy:
    def _ask(self, i, ok):
        return IterationRecord(i, "ask" if ok else "correct", "c", None,
                               "c" if ok else "x", ok, 1, 0.0)

    def _teach(self, i):
        return IterationRecord(i, "teach", "c", None, None, None, 1, 0.0)

    def test_empty_window_is_zero(self):
        assert running_accuracy([self._teach(0)]) == 0.0
        assert running_accuracy([]) == 0.0

    def test_ccw_two_thirds(self):
        records = [self._teach(0), self._ask(1, True), self._ask(2, True),
                   self._ask(3, False)]
        assert running_accuracy(records, window=3) == pytest.approx(2 / 3)

    def test_resets_on_introduction(self):
        records = [self._teach(0), self._ask(1, False), self._ask(2, False),
                   self._teach(3), self._ask(4, True)]
        assert running_accuracy(records) == 1.0

    def test_window_limits_lookback(self):
        records = [self._teach(0)] + [self._ask(i, i > 4) for i in range(1, 9)]
        assert running_accuracy(records, window=4) == 1.0
        assert running_accuracy(records) == pytest.approx(4 / 8)

    def test_matches_sliding_recount(self, rng):
        records = [self._teach(0)]
        flags = []
        for i in range(1, 120):
            if rng.random() < 0.1:
                records.append(self._teach(i))
                flags.clear()
            else:
                ok = bool(rng.random() < 0.7)
                records.append(self._ask(i, ok))
                flags.append(ok)
            for w in (1, 3, 10, None):
                recent = flags if w is None else flags[-w:]
                expected = sum(recent) / len(recent) if recent else 0.0
                assert running_accuracy(records, window=w) == pytest.approx(expected)


class TestRunExperiment:
    def test_oracle_learns_everything(self):
        config = stub_config(seed=3)
        trace = run_experiment(config, OracleAgent())
        metrics = compute_metrics(trace)
        assert metrics.alc == 5
        assert metrics.gca == 1.0
        assert metrics.apa == 1.0
        assert trace.status == STATUS_EXHAUSTED

    def test_adversarial_stalls_at_window(self):
        # enough views that the stall window, not view exhaustion, terminates
        config = stub_config(views=120, stall_window=100, seed=1)
        trace = run_experiment(config, AdversarialAgent())
        metrics = compute_metrics(trace)
        assert trace.status == STATUS_STALLED
        assert metrics.alc == 1
        # exactly stall_window question/correction iterations after the teach
        assert metrics.qci == 100
        assert all(r.action == "correct" for r in trace.qci_records())

    def test_single_category_three_views_exhausts(self):
        config = stub_config(categories=("solo",), views=3, seed=0)
        trace = run_experiment(config, OracleAgent())
        assert trace.status == STATUS_EXHAUSTED
        teaches = [r for r in trace.records if r.action == "teach"]
        asks = trace.qci_records()
        assert len(teaches) == 1
        assert len(asks) == 2  # remaining views asked until exhaustion

    def test_intro_requires_accuracy_above_tau(self):
        config = stub_config(seed=5)
        trace = run_experiment(config, OracleAgent())
        known = 1
        for prev, rec in zip(trace.records, trace.records[1:]):
            if rec.action == "teach":
                assert prev.accuracy > config.tau
                known += 1
            assert rec.known == known if rec.action == "teach" else True

    def test_min_asks_before_introduction(self):
        config = stub_config(seed=5)
        trace = run_experiment(config, OracleAgent())
        asks_since = 0
        known = 0
        for rec in trace.records:
            if rec.action == "teach":
                if known:  # not the first introduction
                    assert asks_since >= config.min_asks_factor * known
                known += 1
                asks_since = 0
            else:
                asks_since += 1

    def test_views_used_at_most_once(self):
        config = stub_config(seed=9)
        trace = run_experiment(config, OracleAgent())
        vids = [r.view for r in trace.records]
        assert len(vids) == len(set(vids))

    def test_deterministic_given_seed(self):
        t1 = run_experiment(stub_config(seed=4), OracleAgent())
        t2 = run_experiment(stub_config(seed=4), OracleAgent())
        assert [r.to_json() for r in t1.records] == [r.to_json() for r in t2.records]

    def test_empty_dataset_errors(self):
        config = stub_config(categories=(), views=0)
        with pytest.raises(ValueError):
            run_experiment(config, OracleAgent())


class TestMetrics:
    def test_hand_trace_arithmetic(self):
        records = [IterationRecord(0, "teach", "a", None, None, None, 1, 0.0)]
        for i in range(1, 11):
            ok = i <= 7
            records.append(IterationRecord(i, "ask" if ok else "correct", "a",
                                           None, "a" if ok else "b", ok, 1, 0.5))
        from ot3d.protocol import ExperimentTrace
        trace = ExperimentTrace(config={}, records=records, status="stalled")
        metrics = compute_metrics(trace)
        assert metrics.qci == 10
        assert metrics.gca == pytest.approx(0.7)
        assert metrics.apa == pytest.approx(0.5)
        assert metrics.alc == 1

    def test_qci_is_trace_length_minus_teaches(self):
        trace = run_experiment(stub_config(seed=2), OracleAgent())
        metrics = compute_metrics(trace)
        teaches = sum(1 for r in trace.records if r.action == "teach")
        assert metrics.qci == len(trace.records) - teaches
        assert metrics.qci >= metrics.alc

    def test_aic_from_trace_counts_instances(self):
        trace = run_experiment(stub_config(seed=2), AdversarialAgent())
        metrics = compute_metrics(trace)
        stored = sum(1 for r in trace.records
                     if r.action in ("teach", "correct"))
        assert metrics.aic * metrics.alc == pytest.approx(stored)

    def test_empty_trace_errors(self):
        from ot3d.protocol import ExperimentTrace
        with pytest.raises(ValueError):
            compute_metrics(ExperimentTrace(config={}))


class TestTraceFiles:
    def test_metrics_recomputed_from_file_match(self, tmp_path):
        trace = run_experiment(stub_config(seed=6), OracleAgent())
        in_memory = compute_metrics(trace)
        save_trace(trace, tmp_path / "t.jsonl")
        reloaded = load_trace(tmp_path / "t.jsonl")
        from_file = compute_metrics(reloaded)
        assert from_file == in_memory
        assert reloaded.status == trace.status
        assert reloaded.config == trace.config

    def test_byte_identical_for_fixed_seed(self, tmp_path):
        for i in (1, 2):
            trace = run_experiment(stub_config(seed=11), OracleAgent())
            save_trace(trace, tmp_path / f"t{i}.jsonl")
        assert (tmp_path / "t1.jsonl").read_bytes() == \
               (tmp_path / "t2.jsonl").read_bytes()
