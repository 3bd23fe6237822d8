#include "retnav/context.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace retnav {

std::string to_string(ContextStrategy strategy) {
    switch (strategy) {
        case ContextStrategy::Static: return "static";
        case ContextStrategy::Dynamic: return "dynamic";
        case ContextStrategy::Random: return "random";
        case ContextStrategy::OraclePanorama: return "oracle_panorama";
        case ContextStrategy::OracleShortestPath: return "oracle_shortest_path";
    }
    return "static";
}

ContextStrategy context_strategy_from_string(const std::string& name) {
    if (name == "static") return ContextStrategy::Static;
    if (name == "dynamic") return ContextStrategy::Dynamic;
    if (name == "random") return ContextStrategy::Random;
    if (name == "oracle_panorama") return ContextStrategy::OraclePanorama;
    if (name == "oracle_shortest_path") return ContextStrategy::OracleShortestPath;
    throw std::invalid_argument("unknown context strategy: " + name);
}

Context build_static_context(const EmbedStore& store, const std::string& scene_id,
                             const std::vector<float>& goal_embedding,
                             std::size_t context_size, double beta) {
    auto shortlist =
        build_shortlist(store, scene_id, goal_embedding, kDefaultShortlistSize);
    Context context;
    context.strategy = ContextStrategy::Static;
    context.slots = mmr_rerank(shortlist, store, context_size, beta);
    return context;
}

Context build_dynamic_context(const EmbedStore& store, const std::string& scene_id,
                              const SimilarityGraph& graph,
                              const std::vector<float>& obs_embedding,
                              const std::vector<float>& goal_embedding,
                              std::size_t context_size,
                              const Context& previous, std::mt19937_64& rng) {
    const std::size_t r_obs = retrieve_goal(store, scene_id, obs_embedding);
    const std::size_t r_goal = retrieve_goal(store, scene_id, goal_embedding);
    const PathResult path = shortest_path(graph, r_obs, r_goal);
    Context context;
    context.strategy = ContextStrategy::Dynamic;
    context.slots =
        path_to_context(path, r_obs, r_goal, context_size, previous.slots, rng);
    return context;
}

Context build_random_context(const EmbedStore& store, const std::string& scene_id,
                             std::size_t context_size, std::mt19937_64& rng) {
    auto partition = store.scene_partition(scene_id);
    if (partition.size() < context_size) {
        throw std::invalid_argument("build_random_context: scene smaller than context");
    }
    // Partial Fisher-Yates: the first C entries are a uniform C-subset.
    for (std::size_t i = 0; i < context_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, partition.size() - 1);
        std::swap(partition[i], partition[pick(rng)]);
    }
    partition.resize(context_size);
    Context context;
    context.strategy = ContextStrategy::Random;
    context.slots = std::move(partition);
    return context;
}

std::vector<SyntheticFrame> build_oracle_context(const Scene& scene, OracleKind kind,
                                                 const Pose2& agent_pose,
                                                 const Pose2& goal_pose,
                                                 std::size_t context_size) {
    std::vector<SyntheticFrame> frames;
    frames.reserve(context_size);
    if (kind == OracleKind::Panorama) {
        const auto embedding = features(scene, goal_pose);
        for (std::size_t i = 0; i < context_size; ++i) {
            frames.push_back({goal_pose, 45.0 * static_cast<double>(i), embedding});
        }
        return frames;
    }
    const auto path = shortest_cell_path(scene, agent_pose, goal_pose);
    if (path.empty()) {
        throw std::runtime_error("build_oracle_context: goal unreachable");
    }
    const std::size_t last = path.size() - 1;
    for (std::size_t i = 0; i < context_size; ++i) {
        const std::size_t at =
            context_size == 1 ? last
                              : (i * last + (context_size - 1) / 2) / (context_size - 1);
        const Pose2 pose = scene.cell_center(path[at].first, path[at].second);
        frames.push_back({pose, 0.0, features(scene, pose)});
    }
    return frames;
}

namespace {

std::vector<double> softmax(const std::vector<double>& v) {
    const double max_v = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - max_v);
        denom += out[i];
    }
    for (double& x : out) x /= denom;
    return out;
}

void check_logits(const SelectorLogits& logits) {
    if (logits.alphas.empty()) {
        throw std::invalid_argument("gumbel_select: empty logits");
    }
    if (!(logits.temperature > 0.0)) {
        throw std::invalid_argument("gumbel_select: temperature must be positive");
    }
    for (double a : logits.alphas) {
        if (!std::isfinite(a)) {
            throw std::invalid_argument("gumbel_select: non-finite logit");
        }
    }
}

}  // namespace

GumbelSelection gumbel_select(const SelectorLogits& logits, std::mt19937_64& rng) {
    check_logits(logits);
    std::uniform_real_distribution<double> unif(
        std::numeric_limits<double>::min(), 1.0);
    std::vector<double> perturbed(logits.alphas.size());
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
        const double gumbel = -std::log(-std::log(unif(rng)));
        perturbed[i] = (logits.alphas[i] + gumbel) / logits.temperature;
    }
    GumbelSelection sel;
    sel.soft_weights = softmax(perturbed);
    sel.selected = static_cast<std::size_t>(
        std::max_element(sel.soft_weights.begin(), sel.soft_weights.end()) -
        sel.soft_weights.begin());
    return sel;
}

GumbelSelection argmax_select(const SelectorLogits& logits) {
    check_logits(logits);
    std::vector<double> scaled(logits.alphas);
    for (double& a : scaled) a /= logits.temperature;
    GumbelSelection sel;
    sel.soft_weights = softmax(scaled);
    sel.selected = static_cast<std::size_t>(
        std::max_element(sel.soft_weights.begin(), sel.soft_weights.end()) -
        sel.soft_weights.begin());
    return sel;
}

}  // namespace retnav
