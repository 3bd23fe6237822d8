#include "retnav/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace retnav {

namespace {

constexpr int kDx[4] = {0, 0, 1, -1};  // N, S, E, W
constexpr int kDy[4] = {1, -1, 0, 0};

struct Rollout {
    const Scene& scene;
    const Episode& episode;
    std::vector<int> field;  // BFS steps to the goal
    std::size_t col = 0;
    std::size_t row = 0;
    AgentTrace trace;

    Rollout(const Scene& scene_, const Episode& episode_)
        : scene(scene_), episode(episode_),
          field(distance_field(scene_, episode_.goal)) {
        auto [c, r] = scene.pose_cell(episode.start);
        col = c;
        row = r;
        trace.poses.push_back(episode.start);
        trace.shortest_length = episode.geodesic_start;
    }

    double geo() const {
        const int d = field[row * scene.width + col];
        return d < 0 ? std::numeric_limits<double>::infinity() : d * kCellMeters;
    }

    Pose2 pose() const { return scene.cell_center(col, row); }

    void move(Action action) {
        const int k = static_cast<int>(action);
        const double prev = geo();
        col = static_cast<std::size_t>(static_cast<long>(col) + kDx[k]);
        row = static_cast<std::size_t>(static_cast<long>(row) + kDy[k]);
        trace.actions.push_back(action);
        trace.rewards.push_back(step_reward(prev, geo(), false));
        trace.poses.push_back(pose());
    }

    void stop() {
        trace.success = geo() <= kSuccessRadiusMeters;
        trace.actions.push_back(Action::Stop);
        trace.rewards.push_back(step_reward(geo(), geo(), trace.success));
        trace.poses.push_back(pose());  // STOP leaves the pose unchanged
    }

    void finalize() {
        std::size_t moves = 0;
        for (Action a : trace.actions) {
            if (a != Action::Stop) ++moves;
        }
        trace.path_length = static_cast<double>(moves) * kCellMeters;
    }

    /// Best move by cosine of the neighbor's features to `target`; first in
    /// N, S, E, W order wins ties.
    Action best_move(const std::vector<float>& target) const {
        double best = -2.0;
        int best_k = -1;
        for (int k = 0; k < 4; ++k) {
            const auto nc = static_cast<std::size_t>(static_cast<long>(col) + kDx[k]);
            const auto nr = static_cast<std::size_t>(static_cast<long>(row) + kDy[k]);
            if (!scene.navigable(nc, nr)) continue;
            const double sim =
                cosine(features(scene, scene.cell_center(nc, nr)), target);
            if (sim > best) {
                best = sim;
                best_k = k;
            }
        }
        if (best_k < 0) {
            throw std::runtime_error("run_agent: agent is walled in");
        }
        return static_cast<Action>(best_k);
    }
};

AgentRun run_oracle(const Scene& scene, const Episode& episode,
                    const AgentConfig& config) {
    const auto path = shortest_cell_path(scene, episode.start, episode.goal);
    if (path.empty()) {
        throw std::runtime_error("run_agent: oracle given an unsolvable episode");
    }
    AgentRun run;
    Rollout roll(scene, episode);
    for (std::size_t i = 1;
         i < path.size() && static_cast<int>(roll.trace.actions.size()) + 1 < config.max_steps;
         ++i) {
        for (int k = 0; k < 4; ++k) {
            if (static_cast<long>(roll.col) + kDx[k] == static_cast<long>(path[i].first) &&
                static_cast<long>(roll.row) + kDy[k] == static_cast<long>(path[i].second)) {
                roll.move(static_cast<Action>(k));
                break;
            }
        }
    }
    roll.stop();
    roll.finalize();
    run.trace = std::move(roll.trace);
    return run;
}

AgentRun run_goal_greedy(const Scene& scene, const Episode& episode,
                         const AgentConfig& config) {
    AgentRun run;
    Rollout roll(scene, episode);
    while (static_cast<int>(roll.trace.actions.size()) < config.max_steps) {
        const auto obs = features(scene, roll.pose());
        if (cosine(obs, episode.goal_embedding) >= config.stop_threshold) {
            roll.stop();
            break;
        }
        roll.move(roll.best_move(episode.goal_embedding));
    }
    roll.finalize();
    run.trace = std::move(roll.trace);
    return run;
}

AgentRun run_context_follower(const Scene& scene, const Episode& episode,
                              const AgentConfig& config) {
    if (!config.oracle_context && (!config.store || !config.graph)) {
        throw std::invalid_argument(
            "run_agent: context_follower needs a store and graph");
    }
    AgentRun run;
    Rollout roll(scene, episode);
    std::mt19937_64 rng(config.seed);

    Context context;
    if (!config.oracle_context) {
        context = build_static_context(*config.store, config.scene_db_id,
                                       episode.goal_embedding, config.context_size);
    }

    int step = 0;
    while (static_cast<int>(roll.trace.actions.size()) < config.max_steps) {
        const auto obs = features(scene, roll.pose());
        if (cosine(obs, episode.goal_embedding) >= config.stop_threshold) {
            roll.stop();
            break;
        }

        // Rebuild the context, then chase the earliest waypoint that is not
        // yet reached; with everything reached, home in on the goal itself.
        std::vector<const std::vector<float>*> slot_embeddings;
        std::vector<std::uint64_t> slot_ids;
        std::vector<SyntheticFrame> oracle_frames;
        if (config.oracle_context) {
            oracle_frames = build_oracle_context(scene, OracleKind::ShortestPath,
                                                 roll.pose(), episode.goal,
                                                 config.context_size);
            for (std::size_t i = 0; i < oracle_frames.size(); ++i) {
                slot_embeddings.push_back(&oracle_frames[i].embedding);
                slot_ids.push_back(i);
            }
        } else {
            context = build_dynamic_context(*config.store, config.scene_db_id,
                                            *config.graph, obs,
                                            episode.goal_embedding,
                                            config.context_size, context, rng);
            for (std::size_t idx : context.slots) {
                slot_embeddings.push_back(&config.store->record(idx).vector);
                slot_ids.push_back(config.store->record(idx).frame_id);
            }
        }

        const std::vector<float>* target = &episode.goal_embedding;
        SelectorLogits logits;
        for (const auto* emb : slot_embeddings) {
            logits.alphas.push_back(cosine(obs, *emb));
        }
        for (std::size_t i = 0; i < slot_embeddings.size(); ++i) {
            if (logits.alphas[i] < config.waypoint_threshold) {
                target = slot_embeddings[i];
                break;
            }
        }

        if (config.dump_contexts) {
            auto sel = gumbel_select(logits, rng);
            run.contexts.push_back(
                {step,
                 config.oracle_context ? to_string(ContextStrategy::OracleShortestPath)
                                       : to_string(ContextStrategy::Dynamic),
                 slot_ids, sel.selected, std::move(sel.soft_weights)});
        }

        roll.move(roll.best_move(*target));
        ++step;
    }
    roll.finalize();
    run.trace = std::move(roll.trace);
    return run;
}

}  // namespace

std::string to_string(AgentKind kind) {
    switch (kind) {
        case AgentKind::Oracle: return "oracle";
        case AgentKind::GoalGreedy: return "goal_greedy";
        case AgentKind::ContextFollower: return "context_follower";
    }
    return "oracle";
}

AgentKind agent_kind_from_string(const std::string& name) {
    if (name == "oracle") return AgentKind::Oracle;
    if (name == "goal_greedy") return AgentKind::GoalGreedy;
    if (name == "context_follower") return AgentKind::ContextFollower;
    throw std::invalid_argument("unknown agent kind: " + name);
}

AgentRun run_agent(const Scene& scene, const Episode& episode, AgentKind kind,
                   const AgentConfig& config) {
    if (config.max_steps < 1) {
        throw std::invalid_argument("run_agent: max_steps must be >= 1");
    }
    switch (kind) {
        case AgentKind::Oracle: return run_oracle(scene, episode, config);
        case AgentKind::GoalGreedy: return run_goal_greedy(scene, episode, config);
        case AgentKind::ContextFollower:
            return run_context_follower(scene, episode, config);
    }
    throw std::invalid_argument("run_agent: unknown agent kind");
}

}  // namespace retnav
