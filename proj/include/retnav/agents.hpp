#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retnav/context.hpp"
#include "retnav/navsim.hpp"
#include "retnav/sim_graph.hpp"

namespace retnav {

enum class AgentKind { Oracle, GoalGreedy, ContextFollower };

std::string to_string(AgentKind kind);
AgentKind agent_kind_from_string(const std::string& name);

constexpr int kDefaultMaxSteps = 500;
constexpr double kDefaultStopThreshold = 0.95;
constexpr double kDefaultWaypointThreshold = 0.90;

struct AgentConfig {
    int max_steps = kDefaultMaxSteps;
    // STOP when cosine(observation, goal embedding) reaches this.
    double stop_threshold = kDefaultStopThreshold;
    // A waypoint counts as reached once its slot similarity reaches this.
    double waypoint_threshold = kDefaultWaypointThreshold;
    std::size_t context_size = kDefaultContextSize;
    std::uint64_t seed = 0;
    // context_follower inputs; `oracle_context` replaces graph retrieval with
    // privileged geodesic shortest-path contexts.
    const EmbedStore* store = nullptr;
    const SimilarityGraph* graph = nullptr;
    std::string scene_db_id;
    bool oracle_context = false;
    bool dump_contexts = false;
};

struct ContextSnapshot {
    int step = 0;
    std::string strategy;
    std::vector<std::uint64_t> slots;  // frame ids (synthetic frames use step order)
    std::size_t selected = 0;
    std::vector<double> soft_weights;
};

struct AgentRun {
    AgentTrace trace;
    std::vector<ContextSnapshot> contexts;  // only when dump_contexts is set
};

/// Runs one scripted episode. The oracle follows the geodesic and always
/// succeeds; goal_greedy hill-climbs feature similarity to the goal;
/// context_follower chases the earliest unreached waypoint of a per-step
/// dynamic (or oracle) context.
AgentRun run_agent(const Scene& scene, const Episode& episode, AgentKind kind,
                   const AgentConfig& config);

}  // namespace retnav
