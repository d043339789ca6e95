"""Acceptance criteria, one test per criterion.

Run with: pytest tests/test_acceptance.py -v
A summary table (one PASS/FAIL line per criterion) prints at the end of the
session. P9 only runs when OT3D_RESTAURANT_ROOT points at a converted copy
of the restaurant object dataset.
"""

import copy
import math
import os
import time

import numpy as np
import pytest
from scipy import stats

from conftest import record_criterion
from test_protocol import AdversarialAgent, OracleAgent, StubProvider
from test_spin import naive_spin_image, rotation_about_axis

from ot3d.cloud import Keypoint, PointCloud, select_keypoints
from ot3d.codebook import batch_kmeans, init_category_dictionary
from ot3d.datasets import SyntheticDataset
from ot3d.learner import LearningAgent, bootstrap_generic_model
from ot3d.memory import chi_squared, classify, load_store, save_store
from ot3d.params import Params
from ot3d.protocol import (ProtocolConfig, compute_metrics, load_trace,
                           pair_accuracy, run_experiment, run_protocol, save_trace)
from ot3d.spin import compute_spin_image
from ot3d.synthetic import FAMILIES, SyntheticShapeSpec, generate_synthetic
from ot3d.topics import TopicModel, categorical_draw, load_model, save_model


class TestP1DescriptorCorrectness:
    def test_p1_descriptor_correctness(self):
        start = time.monotonic()
        rng = np.random.default_rng(101)
        families = list(FAMILIES)
        for i in range(50):
            spec = SyntheticShapeSpec(families[i % 5], points=400,
                                      seed=1000 + i)
            cloud = generate_synthetic(spec)
            kps = select_keypoints(cloud, 0.02)
            picks = rng.choice(len(kps), size=min(3, len(kps)), replace=False)
            for j in picks:
                ours = compute_spin_image(cloud, kps[j], 8, 0.09)
                ref = naive_spin_image(cloud.points, kps[j].position,
                                       kps[j].normal, 8, 0.09)
                assert np.max(np.abs(ours.bins - ref)) < 1e-12

        # rotation about the keypoint normal: bit-exact on boundary-safe sets
        n = np.array([0.0, 0.0, 1.0])
        for seed in range(10):
            r = np.random.default_rng(seed)
            alphas = r.uniform(0.012, 0.078, 80)
            betas = r.uniform(-0.078, 0.078, 80)
            thetas = r.uniform(0, 2 * np.pi, 80)
            pts = np.c_[alphas * np.cos(thetas), alphas * np.sin(thetas), betas]
            kp = Keypoint(np.zeros(3), n, 0)
            base = compute_spin_image(PointCloud(pts), kp, 8, 0.09)
            rot = rotation_about_axis(n, r.uniform(0.1, 6.2))
            turned = compute_spin_image(PointCloud(pts @ rot.T), kp, 8, 0.09)
            assert np.array_equal(base.bins, turned.bins)

        elapsed = time.monotonic() - start
        assert elapsed < 10.0
        record_criterion("P1 descriptor correctness", "PASS")


class TestP2SamplerCorrectness:
    def test_p2_sampler_correctness(self):
        start = time.monotonic()
        # 20 frozen small models: empirical conditional vs enumeration
        for i in range(20):
            v = 2 + i % 4          # V <= 5
            k = 2 + i % 2          # K <= 3
            model = TopicModel(k=k, v=v, alpha=1.0, beta=0.1, seed=i)
            rng = np.random.default_rng(500 + i)
            for _ in range(3):
                model.absorb_object(rng.integers(0, v, size=10), sweeps=2)
            obj = model.objects[i % 3]
            site = int(rng.integers(obj.words.size))
            k_before = int(obj.z[site])
            model._remove(obj, site)
            weights = model.conditional(obj, int(obj.words[site]))
            model._insert(obj, site, k_before)
            expected = weights / weights.sum()

            draws = categorical_draw(
                weights, np.random.default_rng(9000 + i).random(100_000))
            counts = np.bincount(draws, minlength=k)
            result = stats.chisquare(counts, expected * 100_000)
            assert result.pvalue > 0.01, f"model {i}: p={result.pvalue}"

        # 1,000-sweep fuzz with counter conservation after every sweep
        model = TopicModel(k=3, v=5, seed=77)
        rng = np.random.default_rng(7)
        for _ in range(4):
            model.absorb_object(rng.integers(0, 5, size=25), sweeps=2)
        for sweep in range(1000):
            model.refresh(1)
            assert np.array_equal(model.n_wk.sum(axis=0), model.n_k)
            for obj in model.objects:
                assert int(obj.n_ok.sum()) == obj.words.size
        model.check_invariants()

        elapsed = time.monotonic() - start
        assert elapsed < 60.0
        record_criterion("P2 sampler correctness", "PASS")


class TestP3PhiTopicAlgebra:
    def test_p3_phi_and_topic_synthesis(self):
        rng = np.random.default_rng(3)
        # phi columns sum to 1 on randomized counters
        for _ in range(50):
            v, k = int(rng.integers(2, 120)), int(rng.integers(1, 90))
            model = TopicModel(k=k, v=v, beta=float(rng.uniform(0.01, 2.0)),
                               seed=0)
            model.n_wk = rng.integers(0, 100, size=(v, k)).astype(np.int64)
            model.n_k = model.n_wk.sum(axis=0)
            phi = model.estimate_phi()
            assert np.allclose(phi.sum(axis=0), 1.0, atol=1e-9)

        # synthesize_topics vs naive recomputation at the published scale
        from ot3d.codebook import Dictionary
        words = rng.random((90, 153))
        words /= words.sum(axis=1, keepdims=True)
        model = TopicModel(k=70, v=90, seed=1)
        model.n_wk = rng.integers(0, 60, size=(90, 70)).astype(np.int64)
        model.n_k = model.n_wk.sum(axis=0)
        topics = model.synthesize_topics(Dictionary(words))
        phi = model.estimate_phi()
        for k in range(70):
            z = np.zeros(153)
            for i in range(90):
                z += phi[i, k] * words[i]
            z /= np.abs(z).sum()
            assert np.max(np.abs(topics[k] - z)) < 1e-12
        record_criterion("P3 phi / topic synthesis algebra", "PASS")


class TestP4ClusteringOracles:
    def test_p4_online_kmeans_replay_exact(self):
        from ot3d.codebook import update_dictionary_incremental
        rng = np.random.default_rng(4)
        for trial in range(10):
            d = init_category_dictionary(rng.random((30, 6)), 12,
                                         seed=trial, category="c")
            start_words = d.words.copy()
            start_counts = d.assignment_counts.copy()
            stream = rng.random((100, 6))
            assigned = {j: [] for j in range(12)}
            ref = start_words.copy()
            cnt = start_counts.astype(np.float64).copy()
            for x in stream:
                j = int(np.argmin(((ref - x) ** 2).sum(axis=1)))
                assigned[j].append(x)
                cnt[j] += 1
                ref[j] = ref[j] + (x - ref[j]) / cnt[j]
            update_dictionary_incremental(d, stream)
            for j in range(12):
                total = start_counts[j] + len(assigned[j])
                if total == 0:
                    assert np.array_equal(d.words[j], start_words[j])
                else:
                    mean = (start_words[j] * start_counts[j]
                            + np.sum(assigned[j], axis=0) if assigned[j]
                            else start_words[j] * start_counts[j]) / total
                    assert np.allclose(d.words[j], mean, rtol=0, atol=1e-12)
                assert d.assignment_counts[j] == total

    def test_p4_batch_inertia_non_increasing(self):
        rng = np.random.default_rng(44)
        for _ in range(100):
            n = int(rng.integers(30, 120))
            dim = int(rng.integers(2, 12))
            k = int(rng.integers(2, min(10, n)))
            _, _, history = batch_kmeans(rng.random((n, dim)), k,
                                         seed=int(rng.integers(1 << 31)))
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))
        record_criterion("P4 clustering oracles", "PASS")


class TestP5ChiSquaredAxioms:
    def test_p5_chi_squared_axioms(self):
        rng = np.random.default_rng(5)
        p = rng.random((10_000, 140))
        p /= p.sum(axis=1, keepdims=True)
        q = rng.random((10_000, 140))
        q /= q.sum(axis=1, keepdims=True)
        for i in range(10_000):
            d = chi_squared(p[i], q[i])
            assert d >= 0.0
            assert d <= 1.0 + 1e-12
            assert chi_squared(q[i], p[i]) == d
            # elementwise recomputation
            s = p[i] + q[i]
            ref = 0.5 * float(np.sum(np.where(s > 0, (p[i] - q[i]) ** 2
                                              / np.where(s > 0, s, 1), 0.0)))
            assert abs(d - ref) < 1e-12
        # identity of indiscernibles on the normalized domain
        for i in range(100):
            assert chi_squared(p[i], p[i]) == 0.0
            if not np.allclose(p[i], q[i]):
                assert chi_squared(p[i], q[i]) > 0.0
        record_criterion("P5 chi-squared metric axioms", "PASS")


class TestP6ProtocolStateMachine:
    def _config(self, **kw):
        provider = StubProvider(("a", "b", "c", "d", "e"),
                                kw.pop("views", 20))
        params = Params(generic_words=5, topics=3, specific_words=3)
        return ProtocolConfig(dataset=provider, params=params, **kw)

    def test_p6_protocol_state_machine(self, tmp_path):
        # oracle agent: learns all five, perfect accuracy
        trace = run_experiment(self._config(seed=3), OracleAgent())
        metrics = compute_metrics(trace)
        assert metrics.alc == 5
        assert metrics.gca == 1.0 and metrics.apa == 1.0
        assert trace.status == "dataset-exhausted"

        # adversarial agent: stalls after exactly stall_window iterations
        trace_a = run_experiment(self._config(views=120, stall_window=100,
                                              seed=1), AdversarialAgent())
        metrics_a = compute_metrics(trace_a)
        assert trace_a.status == "stalled"
        assert metrics_a.alc == 1
        assert metrics_a.qci == 100

        # metrics recomputed from the emitted file match in-memory exactly
        save_trace(trace, tmp_path / "t.jsonl")
        assert compute_metrics(load_trace(tmp_path / "t.jsonl")) == metrics
        save_trace(trace_a, tmp_path / "ta.jsonl")
        assert compute_metrics(load_trace(tmp_path / "ta.jsonl")) == metrics_a

        # fixed seed -> byte-identical trace files
        for run in (1, 2):
            t = run_experiment(self._config(seed=11), OracleAgent())
            save_trace(t, tmp_path / f"b{run}.jsonl")
        assert (tmp_path / "b1.jsonl").read_bytes() == \
               (tmp_path / "b2.jsonl").read_bytes()
        record_criterion("P6 protocol state machine", "PASS")


class TestP7EndToEndOpenEnded:
    def test_p7_synthetic_open_ended_run(self):
        start = time.monotonic()
        params = Params(generic_words=30, topics=20, specific_words=20)
        dataset = SyntheticDataset(params, views_per_category=20, seed=42)
        pair = ("cylinder", "mug")

        passing = 0
        full_pair, ablation_pair = [], []
        for seed in range(10):
            config = ProtocolConfig(dataset=dataset, params=params, seed=seed)
            trace, agent = run_protocol(config, representation="full")
            metrics = compute_metrics(trace, agent.store)
            if metrics.alc == 5 and metrics.gca >= 0.67:
                passing += 1
            pa = pair_accuracy(trace, pair)
            if pa is not None:
                full_pair.append(pa)

            config = ProtocolConfig(dataset=dataset, params=params, seed=seed)
            trace_g, _ = run_protocol(config, representation="generic")
            pg = pair_accuracy(trace_g, pair)
            if pg is not None:
                ablation_pair.append(pg)

        assert passing >= 8, f"only {passing}/10 seeds reached ALC=5, GCA>=0.67"
        assert np.mean(full_pair) > np.mean(ablation_pair), (
            f"fine-grained pair GCA: full {np.mean(full_pair):.4f} "
            f"<= generic-only {np.mean(ablation_pair):.4f}")
        elapsed = time.monotonic() - start
        assert elapsed < 900.0
        record_criterion(
            "P7 end-to-end synthetic open-ended run",
            f"PASS ({passing}/10 seeds; pair GCA full "
            f"{np.mean(full_pair):.3f} > generic {np.mean(ablation_pair):.3f}; "
            f"{elapsed:.0f}s)")


class TestP8PersistenceReplay:
    def test_p8_store_and_model_round_trip(self, tmp_path):
        params = Params(generic_words=18, topics=10, specific_words=10, seed=6)
        dataset = SyntheticDataset(params, views_per_category=5, points=600,
                                   seed=13)
        feats = {v: dataset.features(v) for v in dataset.all_view_ids()}
        generic = bootstrap_generic_model(list(feats.values()), params)
        agent = LearningAgent(generic, params)
        for fam in FAMILIES:
            vids = dataset.views(fam)
            agent.teach(fam, [feats[vids[0]], feats[vids[1]]])
            agent.correct(fam, feats[vids[2]])

        save_model(agent.generic.topics, tmp_path / "m.otlm")
        from ot3d.codebook import save_dictionary, load_dictionary
        save_dictionary(agent.generic.dictionary, tmp_path / "g.otdc")
        save_store(agent.store, tmp_path / "store")

        model = load_model(tmp_path / "m.otlm")
        dictionary = load_dictionary(tmp_path / "g.otdc")
        store, _ = load_store(tmp_path / "store")
        assert np.array_equal(model.topics, agent.generic.topics.topics)
        assert np.array_equal(dictionary.words, agent.generic.dictionary.words)

        rng = np.random.default_rng(88)
        queries = []
        for i in range(100):
            fam = FAMILIES[i % 5]
            spec = SyntheticShapeSpec(fam, points=600, seed=50_000 + i)
            from ot3d.spin import describe_object_matrix
            queries.append(describe_object_matrix(generate_synthetic(spec),
                                                  params))
        for q in queries:
            before = classify(q, agent.store, agent.generic.topics, math.inf)
            after = classify(q, store, model, math.inf)
            assert before.label == after.label
            for name in before.per_category_ocd:
                assert abs(before.per_category_ocd[name]
                           - after.per_category_ocd[name]) < 1e-12

    def test_p8_session_event_log_replay(self):
        from fastapi.testclient import TestClient
        from ot3d.cloud import cloud_to_ot3d_bytes
        from ot3d.service import SESSIONS, create_app
        import base64

        SESSIONS.clear()
        config = {"generic_words": 12, "topics": 8, "specific_words": 8,
                  "gibbs_sweeps": 10, "bootstrap_views": 2, "seed": 9}

        def blob(family, seed):
            cloud = generate_synthetic(SyntheticShapeSpec(family, points=600,
                                                          seed=seed))
            return base64.b64encode(cloud_to_ot3d_bytes(cloud)).decode()

        with TestClient(create_app()) as client:
            sid = client.post("/sessions", json={"config": config}
                              ).json()["session_id"]
            for fam, seed in (("box", 1), ("sphere", 2)):
                client.post(f"/sessions/{sid}/teach", json={
                    "name": fam,
                    "clouds": [{"filename": fam, "content_b64": blob(fam, seed)}]})
            labels = []
            ref = None
            for fam, seed in (("box", 3), ("sphere", 4), ("box", 5)):
                body = client.post(f"/sessions/{sid}/classify", json={
                    "filename": "q", "content_b64": blob(fam, seed)}).json()
                labels.append(body["label"])
                ref = body["object_ref"]
            client.post(f"/sessions/{sid}/correct",
                        json={"object_ref": ref, "name": "box"})
            export = client.get(f"/sessions/{sid}/export").json()

            replayed = client.post("/sessions/import", json=export).json()
            assert [r["label"] for r in replayed["replayed"]] == labels
            assert all(r["matches"] for r in replayed["replayed"])
        SESSIONS.clear()
        record_criterion("P8 persistence / replay", "PASS")


RESTAURANT_ROOT = os.environ.get("OT3D_RESTAURANT_ROOT")


class TestP9RestaurantDataset:
    @pytest.mark.skipif(not RESTAURANT_ROOT,
                        reason="restaurant dataset not supplied "
                               "(set OT3D_RESTAURANT_ROOT)")
    def test_p9_crossvalidation_accuracy(self):
        from ot3d.datasets import FileDataset, load_dataset
        params = Params()
        index = load_dataset(RESTAURANT_ROOT)
        provider = FileDataset(index, params)
        rng = np.random.default_rng(0)
        folds = 10
        split = {c: [provider.views(c)[i] for i in
                     rng.permutation(len(provider.views(c)))]
                 for c in provider.categories()}
        accuracies = []
        for f in range(folds):
            train = {c: [v for i, v in enumerate(vs) if i % folds != f]
                     for c, vs in split.items()}
            test = {c: [v for i, v in enumerate(vs) if i % folds == f]
                    for c, vs in split.items()}
            sets = [provider.features(v) for vs in train.values() for v in vs]
            generic = bootstrap_generic_model(sets, params)
            agent = LearningAgent(generic, params)
            for c, vs in train.items():
                if vs:
                    agent.teach(c, [provider.features(v) for v in vs])
            total = hits = 0
            for c, vs in test.items():
                for v in vs:
                    total += 1
                    hits += agent.predict(provider.features(v)) == c
            accuracies.append(hits / total if total else 0.0)
        mean_acc = float(np.mean(accuracies))
        assert mean_acc >= 0.85, f"10-fold accuracy {mean_acc:.4f} < 0.85"
        record_criterion("P9 restaurant crossval (conditional)",
                         f"PASS ({mean_acc:.3f})")
