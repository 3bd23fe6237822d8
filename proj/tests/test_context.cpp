#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "retnav/context.hpp"
#include "test_util.hpp"

using namespace retnav;

namespace {

EmbeddingRecord make_record(std::uint64_t id, std::vector<float> v) {
    EmbeddingRecord rec;
    rec.frame_id = id;
    rec.scene_id = "s";
    rec.vector = std::move(v);
    return rec;
}

std::vector<double> softmax_oracle(const std::vector<double>& alphas) {
    const double m = *std::max_element(alphas.begin(), alphas.end());
    std::vector<double> out(alphas.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        out[i] = std::exp(alphas[i] - m);
        denom += out[i];
    }
    for (double& x : out) x /= denom;
    return out;
}

/// Empirical hard-selection frequencies over `draws` samples.
std::vector<double> empirical(const SelectorLogits& logits, std::size_t draws,
                              std::mt19937_64& rng) {
    std::vector<double> freq(logits.alphas.size(), 0.0);
    for (std::size_t i = 0; i < draws; ++i) {
        freq[gumbel_select(logits, rng).selected] += 1.0;
    }
    for (double& f : freq) f /= static_cast<double>(draws);
    return freq;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    double tv = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
    return 0.5 * tv;
}

}  // namespace

TEST_CASE("static context equals goal-shortlist MMR and is episode-constant") {
    std::mt19937_64 rng(51);
    EmbedStore store(12);
    for (std::uint64_t i = 0; i < 10; ++i) {
        store.add_record(make_record(i, testutil::random_unit(rng, 12)));
    }
    const auto goal = testutil::random_unit(rng, 12);
    const auto context = build_static_context(store, "s", goal, 8);
    CHECK(context.strategy == ContextStrategy::Static);
    REQUIRE(context.slots.size() == 8);

    const auto shortlist = build_shortlist(store, "s", goal, kDefaultShortlistSize);
    CHECK(context.slots == mmr_rerank(shortlist, store, 8, kDefaultMmrBeta));
    // Same inputs, same context: nothing episode-varying feeds the builder.
    CHECK(build_static_context(store, "s", goal, 8).slots == context.slots);
}

TEST_CASE("dynamic context on a chain graph is in increasing path order") {
    // Records 0..11 laid out as a chain; the graph mirrors that topology.
    EmbedStore store(13);
    for (std::uint64_t i = 0; i < 12; ++i) {
        std::vector<float> v(13, 0.0f);
        v[i] = 1.0f;
        v[12] = 0.1f;  // shared component so vectors are not orthogonal
        store.add_record(make_record(i, std::move(v)));
    }
    SimilarityGraph graph;
    for (std::size_t i = 0; i < 12; ++i) graph.nodes.push_back(i);
    graph.adjacency.assign(12, {});
    for (std::size_t i = 0; i + 1 < 12; ++i) {
        graph.edges.push_back({i, i + 1, 1.0});
        graph.adjacency[i].emplace_back(i + 1, 1.0);
        graph.adjacency[i + 1].emplace_back(i, 1.0);
    }
    Context previous;
    previous.slots.assign(8, 0);
    std::mt19937_64 rng(52);
    const auto obs = store.record(1).vector;
    const auto goal = store.record(10).vector;
    const auto context =
        build_dynamic_context(store, "s", graph, obs, goal, 8, previous, rng);
    CHECK(context.strategy == ContextStrategy::Dynamic);
    REQUIRE(context.slots.size() == 8);
    CHECK(context.slots.front() == 1);
    CHECK(context.slots.back() == 10);
    CHECK(std::is_sorted(context.slots.begin(), context.slots.end()));
    // All slots lie on the chain between the two retrieved anchors.
    for (std::size_t idx : context.slots) {
        CHECK(idx >= 1);
        CHECK(idx <= 10);
    }
}

TEST_CASE("dynamic context keeps previous tail when the path is short") {
    EmbedStore store(4);
    store.add_record(make_record(0, {1.0f, 0.0f, 0.0f, 0.1f}));
    store.add_record(make_record(1, {0.0f, 1.0f, 0.0f, 0.1f}));
    SimilarityGraph graph;
    graph.nodes = {0, 1};
    graph.adjacency.assign(2, {});
    graph.edges.push_back({0, 1, 1.0});
    graph.adjacency[0].emplace_back(1, 1.0);
    graph.adjacency[1].emplace_back(0, 1.0);
    Context previous;
    previous.slots = {9, 9, 9, 9};
    std::mt19937_64 rng(53);
    const auto context = build_dynamic_context(store, "s", graph,
                                               store.record(0).vector,
                                               store.record(1).vector, 4, previous,
                                               rng);
    CHECK(context.slots == std::vector<std::size_t>{0, 1, 9, 9});
}

TEST_CASE("random context is a uniform C-subset (chi-square at 0.01)") {
    std::mt19937_64 rng(54);
    EmbedStore store(4);
    const std::size_t m = 20, c = 8, draws = 10000;
    for (std::uint64_t i = 0; i < m; ++i) {
        store.add_record(make_record(i, testutil::random_unit(rng, 4)));
    }
    CHECK_THROWS_AS(build_random_context(store, "s", 21, rng), std::invalid_argument);

    std::vector<double> count(m, 0.0);
    for (std::size_t d = 0; d < draws; ++d) {
        const auto context = build_random_context(store, "s", c, rng);
        REQUIRE(context.slots.size() == c);
        CHECK(std::set<std::size_t>(context.slots.begin(), context.slots.end())
                  .size() == c);
        for (std::size_t idx : context.slots) count[idx] += 1.0;
    }
    // Each record's inclusion count is Bin(draws, c/m); the chi-square
    // statistic over all records is ~ chi2 with m-1 dof (the total is fixed).
    const double p = static_cast<double>(c) / static_cast<double>(m);
    const double expect = draws * p;
    const double var = draws * p * (1.0 - p);
    double chi2 = 0.0;
    for (double x : count) chi2 += (x - expect) * (x - expect) / var;
    CHECK(chi2 < 36.19);  // chi2 quantile, 19 dof, significance 0.01
}

TEST_CASE("panorama oracle context: 8 goal frames rotated 45 degrees apart") {
    SceneSpec spec;
    spec.kind = SceneKind::OpenRoom;
    spec.seed = 5;
    const auto scene = synth_scene(spec);
    const Pose2 goal = scene.cell_center(5, 5);
    const auto frames = build_oracle_context(scene, OracleKind::Panorama,
                                             scene.cell_center(2, 2), goal, 8);
    REQUIRE(frames.size() == 8);
    const auto goal_embedding = features(scene, goal);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(frames[i].pose.x == goal.x);
        CHECK(frames[i].pose.y == goal.y);
        CHECK(frames[i].heading_deg == doctest::Approx(45.0 * i));
        CHECK(frames[i].embedding == goal_embedding);
    }
}

TEST_CASE("shortest-path oracle context samples poses on the geodesic") {
    SceneSpec spec;
    spec.kind = SceneKind::Corridor;
    spec.seed = 9;
    const auto scene = synth_scene(spec);
    std::mt19937_64 rng(55);
    const auto episodes = sample_episodes(scene, 5, rng);
    for (const auto& ep : episodes) {
        const auto frames = build_oracle_context(scene, OracleKind::ShortestPath,
                                                 ep.start, ep.goal, 8);
        REQUIRE(frames.size() == 8);
        const auto path = shortest_cell_path(scene, ep.start, ep.goal);
        std::set<std::pair<double, double>> on_path;
        for (const auto& [c, r] : path) {
            const Pose2 p = scene.cell_center(c, r);
            on_path.insert({p.x, p.y});
        }
        for (const auto& f : frames) {
            CHECK(on_path.count({f.pose.x, f.pose.y}) == 1);
        }
        // Endpoints are the agent and goal cells.
        CHECK(frames.front().pose.x == scene.cell_center(path.front().first,
                                                         path.front().second).x);
        CHECK(frames.back().pose.x == scene.cell_center(path.back().first,
                                                        path.back().second).x);
    }
}

TEST_CASE("shortest-path oracle context throws when the goal is unreachable") {
    SceneSpec spec;
    spec.kind = SceneKind::OpenRoom;
    spec.width = 9;
    spec.height = 9;
    spec.seed = 1;
    auto scene = synth_scene(spec);
    for (std::size_t row = 0; row < scene.height; ++row) {
        scene.cells[row * scene.width + 4] = 0;  // wall splitting the room
    }
    CHECK_THROWS(build_oracle_context(scene, OracleKind::ShortestPath,
                                      scene.cell_center(2, 2),
                                      scene.cell_center(6, 6), 8));
}

TEST_CASE("gumbel soft weights are positive and sum to 1") {
    std::mt19937_64 rng(56);
    std::uniform_real_distribution<double> logit(-3.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        SelectorLogits logits;
        for (int i = 0; i < 8; ++i) logits.alphas.push_back(logit(rng));
        logits.temperature = 0.25 + 2.0 * (trial % 5);
        const auto sel = gumbel_select(logits, rng);
        REQUIRE(sel.soft_weights.size() == 8);
        double sum = 0.0;
        for (double w : sel.soft_weights) {
            CHECK(w > 0.0);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        CHECK(sel.selected ==
              static_cast<std::size_t>(
                  std::max_element(sel.soft_weights.begin(), sel.soft_weights.end()) -
                  sel.soft_weights.begin()));
    }
}

TEST_CASE("gumbel hard selection is distributed as softmax(alpha)") {
    std::mt19937_64 rng(57);
    std::uniform_real_distribution<double> logit(-2.0, 2.0);
    for (int trial = 0; trial < 3; ++trial) {
        SelectorLogits logits;
        for (int i = 0; i < 6; ++i) logits.alphas.push_back(logit(rng));
        const auto target = softmax_oracle(logits.alphas);
        CHECK(total_variation(empirical(logits, 100000, rng), target) < 0.01);
    }
}

TEST_CASE("gumbel hard-selection law is independent of temperature") {
    std::mt19937_64 rng(58);
    SelectorLogits logits;
    logits.alphas = {0.4, -1.2, 0.9, 0.0, 1.7};
    const auto target = softmax_oracle(logits.alphas);
    for (double tau : {0.1, 1.0, 10.0}) {
        logits.temperature = tau;
        CHECK(total_variation(empirical(logits, 100000, rng), target) < 0.01);
    }
}

TEST_CASE("argmax_select is deterministic and softmax-weighted") {
    SelectorLogits logits;
    logits.alphas = {0.1, 2.0, -0.5};
    const auto sel = argmax_select(logits);
    CHECK(sel.selected == 1);
    const auto weights = softmax_oracle(logits.alphas);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(sel.soft_weights[i] == doctest::Approx(weights[i]).epsilon(1e-9));
    }
}

TEST_CASE("selector input validation") {
    std::mt19937_64 rng(59);
    SelectorLogits empty;
    CHECK_THROWS_AS(gumbel_select(empty, rng), std::invalid_argument);
    SelectorLogits bad_tau;
    bad_tau.alphas = {0.0};
    bad_tau.temperature = 0.0;
    CHECK_THROWS_AS(gumbel_select(bad_tau, rng), std::invalid_argument);
    SelectorLogits non_finite;
    non_finite.alphas = {std::nan("")};
    CHECK_THROWS_AS(argmax_select(non_finite), std::invalid_argument);
}
