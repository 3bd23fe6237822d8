"""End-to-end smoke tests for the retnav extension module."""

import math

import pytest

import retnav


@pytest.fixture(scope="module")
def scene():
    return retnav.synth_scene(kind="maze", width=24, height=24, seed=3,
                              sigma=0.75, aliasing=True)


@pytest.fixture(scope="module")
def store(scene):
    s = retnav.EmbedStore(scene.feature_dim)
    for rec in retnav.generate_dataset(scene, 400, seed=9):
        rec.scene_id = scene.scene_id
        s.add_record(rec)
    return s


def test_store_roundtrip_and_topk(store, scene):
    assert len(store) == 400
    query = store.record(5).vector
    hits = store.topk(scene.scene_id, query, 3)
    assert len(hits) == 3
    # The record itself is its own nearest neighbor with cosine ~1.
    assert hits[0][0] == store.record(5).frame_id
    assert hits[0][1] == pytest.approx(1.0, abs=1e-5)
    scores = [s for _, s in hits]
    assert scores == sorted(scores, reverse=True)


def test_normalization_and_cosine():
    v = retnav.l2_normalize([3.0, 4.0])
    assert v == pytest.approx([0.6, 0.8])
    assert retnav.cosine(v, v) == pytest.approx(1.0, abs=1e-6)


def test_mmr_prefers_diverse_results(store, scene):
    goal = store.record(0).vector
    shortlist = retnav.build_shortlist(store, scene.scene_id, goal)
    picks = retnav.mmr_rerank(shortlist, store, 8)
    assert len(picks) == 8
    assert len(set(picks)) == 8
    assert picks[0] == shortlist.indices[0]  # first pick is pure relevance
    assert retnav.mmr_rerank(shortlist, store, 8, beta=1.0) == list(
        shortlist.indices[:8]
    )


def test_graph_and_shortest_path(store, scene):
    graph = retnav.build_graph(store, scene.scene_id, "swg")
    assert graph.variant == "SWG"
    assert graph.threshold == retnav.SPARSE_THRESHOLD
    assert len(graph.nodes) == 400
    found, nodes, cost = retnav.shortest_path(graph, graph.nodes[0], graph.nodes[0])
    assert found and nodes == [graph.nodes[0]] and cost == 0.0


def test_features_decay_with_distance(scene):
    a = scene.cell_center(2, 2)
    near = scene.cell_center(3, 2)
    f_a = retnav.features(scene, a)
    f_near = retnav.features(scene, near)
    assert math.isclose(sum(x * x for x in f_a), 1.0, rel_tol=1e-5)
    assert retnav.cosine(f_a, f_near) > 0.8


def test_agents_and_metrics(scene, store):
    episodes = retnav.sample_episodes(scene, 5, seed=21, max_geodesic=6.0)
    traces = [retnav.run_agent(scene, ep, "oracle") for ep in episodes]
    m = retnav.compute_metrics(traces)
    assert m.sr == 100.0 and m.spl == 100.0 and m.episodes == 5

    graph = retnav.build_graph(store, scene.scene_id, "swg")
    t = retnav.run_agent(scene, episodes[0], "context_follower",
                         store=store, graph=graph, seed=7)
    assert t.steps >= 1
    assert len(t.rewards) == t.steps
    assert set(t.actions) <= set("NSEWX")


def test_gumbel_selection_sums_to_one():
    selected, weights = retnav.gumbel_select([0.5, -1.0, 2.0], seed=13)
    assert 0 <= selected < 3
    assert sum(weights) == pytest.approx(1.0, abs=1e-9)
    assert selected == max(range(3), key=lambda i: weights[i])
    hard, _ = retnav.argmax_select([0.5, -1.0, 2.0])
    assert hard == 2


def test_remb_roundtrip(tmp_path, store):
    records = [store.record(i) for i in range(20)]
    remb = tmp_path / "x.remb"
    sidecar = tmp_path / "x.meta.jsonl"
    retnav.write_remb(remb, sidecar, store.dimension, records)
    loaded = retnav.read_remb(remb, sidecar)
    assert len(loaded) == 20
    for got, want in zip(loaded, records):
        assert got.frame_id == want.frame_id
        assert got.vector == want.vector


def test_scene_json_roundtrip(tmp_path, scene):
    path = tmp_path / "scene.json"
    retnav.save_scene_json(scene, path)
    again = retnav.load_scene_json(path)
    p = scene.cell_center(4, 4)
    assert retnav.features(again, p) == retnav.features(scene, p)
