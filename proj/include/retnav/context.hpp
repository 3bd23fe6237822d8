#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "retnav/embed_store.hpp"
#include "retnav/navsim.hpp"
#include "retnav/retrieval.hpp"
#include "retnav/sim_graph.hpp"

namespace retnav {

constexpr std::size_t kDefaultContextSize = 8;
constexpr double kDefaultGumbelTau = 1.0;

enum class ContextStrategy {
    Static,
    Dynamic,
    Random,
    OraclePanorama,
    OracleShortestPath,
};

std::string to_string(ContextStrategy strategy);
ContextStrategy context_strategy_from_string(const std::string& name);

/// Ordered list of exactly C record indices shown to the agent each step.
struct Context {
    ContextStrategy strategy = ContextStrategy::Static;
    std::vector<std::size_t> slots;
};

/// Goal-anchored context, fixed for a whole episode: top-100 shortlist of the
/// goal embedding re-ranked by MMR down to C entries.
Context build_static_context(const EmbedStore& store, const std::string& scene_id,
                             const std::vector<float>& goal_embedding,
                             std::size_t context_size = kDefaultContextSize,
                             double beta = kDefaultMmrBeta);

/// Waypoint context, recomputed each step: nearest neighbors of observation
/// and goal plus samples of the graph shortest path between them, with the
/// path_to_context fill rules applied against `previous`.
Context build_dynamic_context(const EmbedStore& store, const std::string& scene_id,
                              const SimilarityGraph& graph,
                              const std::vector<float>& obs_embedding,
                              const std::vector<float>& goal_embedding,
                              std::size_t context_size,
                              const Context& previous, std::mt19937_64& rng);

/// C distinct records sampled uniformly from the scene.
Context build_random_context(const EmbedStore& store, const std::string& scene_id,
                             std::size_t context_size, std::mt19937_64& rng);

enum class OracleKind { Panorama, ShortestPath };

/// A context frame synthesized from privileged simulator state rather than
/// retrieved from the database.
struct SyntheticFrame {
    Pose2 pose;
    double heading_deg = 0.0;
    std::vector<float> embedding;
};

/// Panorama: C frames at the goal pose, headings spaced 45 degrees apart.
/// ShortestPath: C frames evenly spaced along the current geodesic from the
/// agent to the goal. Throws when the goal is unreachable.
std::vector<SyntheticFrame> build_oracle_context(const Scene& scene, OracleKind kind,
                                                 const Pose2& agent_pose,
                                                 const Pose2& goal_pose,
                                                 std::size_t context_size);

struct SelectorLogits {
    std::vector<double> alphas;  // one relevance logit per slot
    double temperature = kDefaultGumbelTau;
};

struct GumbelSelection {
    std::size_t selected = 0;
    std::vector<double> soft_weights;  // positive, sums to 1
};

/// Gumbel soft-max selection over context slots: perturb logits with i.i.d.
/// standard Gumbel noise, soften at temperature tau, pick the argmax. The
/// hard-selection law is softmax(alpha) regardless of tau.
GumbelSelection gumbel_select(const SelectorLogits& logits, std::mt19937_64& rng);

/// Deterministic variant: argmax of the logits, no noise.
GumbelSelection argmax_select(const SelectorLogits& logits);

}  // namespace retnav
