#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "retnav/embed_store.hpp"

namespace retnav {

constexpr double kCellMeters = 0.25;
constexpr double kSuccessRadiusMeters = 1.0;
constexpr double kSlackCost = 0.01;
constexpr double kSuccessBonus = 10.0;
constexpr std::size_t kDefaultFeatureDim = 256;
constexpr double kDefaultSigmaMeters = 2.0;
constexpr double kDefaultAliasPeriodMeters = 3.0;
// Fraction of feature dimensions computed on wrapped coordinates when
// aliasing is enabled; far-apart aliased poses then reach cosine ~0.6,
// below the sparse graph threshold but high enough to trap hill-climbers.
constexpr double kAliasFraction = 0.6;

enum class SceneKind { OpenRoom, Corridor, Maze };

std::string to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& name);

struct SceneSpec {
    std::size_t width = 32;   // cells
    std::size_t height = 32;  // cells
    SceneKind kind = SceneKind::Maze;
    std::uint64_t seed = 0;
    std::size_t feature_dim = kDefaultFeatureDim;
    double sigma = kDefaultSigmaMeters;  // feature kernel bandwidth, meters
    bool aliasing = false;
    double alias_period = kDefaultAliasPeriodMeters;
    std::string scene_id;
};

/// A 0.25 m occupancy grid plus the random Fourier basis that turns poses
/// into unit-norm feature vectors whose cosine decays with pose distance.
struct Scene {
    std::string scene_id;
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> cells;  // row-major, 1 = navigable
    std::size_t feature_dim = kDefaultFeatureDim;
    double sigma = kDefaultSigmaMeters;
    bool aliasing = false;
    double alias_period = kDefaultAliasPeriodMeters;
    std::uint64_t rff_seed = 0;
    // basis entry k: frequencies (wx1, wy1, wx2, wy2) in rad/m and a phase.
    // Plain dimensions use only (wx1, wy1) on the raw coordinates; aliased
    // dimensions use all four on the torus embedding of the wrapped
    // coordinates, so similarity stays continuous across period boundaries.
    std::vector<std::array<double, 5>> basis;

    bool navigable(std::size_t col, std::size_t row) const {
        return col < width && row < height && cells[row * width + col] != 0;
    }
    bool navigable_pose(const Pose2& p) const;
    std::pair<std::size_t, std::size_t> pose_cell(const Pose2& p) const;
    Pose2 cell_center(std::size_t col, std::size_t row) const {
        return {(static_cast<double>(col) + 0.5) * kCellMeters,
                (static_cast<double>(row) + 0.5) * kCellMeters};
    }
};

Scene synth_scene(const SceneSpec& spec);

/// Deterministic unit-norm feature vector for a navigable pose.
std::vector<float> features(const Scene& scene, const Pose2& pose);

/// Grid BFS geodesic distance in meters; nullopt when unreachable.
std::optional<double> geodesic(const Scene& scene, const Pose2& a, const Pose2& b);

/// BFS step counts from `goal` to every cell; -1 where unreachable.
std::vector<int> distance_field(const Scene& scene, const Pose2& goal);

/// Cell path (inclusive of both ends) realizing the BFS geodesic; empty when
/// unreachable. Deterministic.
std::vector<std::pair<std::size_t, std::size_t>> shortest_cell_path(
    const Scene& scene, const Pose2& from, const Pose2& to);

/// Appendix-style dataset generation: repeatedly sample a solvable
/// start/goal pair, walk the shortest path and record one frame per step,
/// until `target_count` records exist. Poses are stored as evaluation-only
/// metadata.
std::vector<EmbeddingRecord> generate_dataset(const Scene& scene,
                                              std::size_t target_count,
                                              std::mt19937_64& rng,
                                              std::uint64_t first_frame_id = 0);

struct Episode {
    Pose2 start;
    Pose2 goal;
    std::vector<float> goal_embedding;
    double geodesic_start = 0.0;  // meters
};

constexpr double kMinEpisodeGeodesic = 1.5;

/// Samples solvable, nontrivial episodes (geodesic >= 1.5 m).
std::vector<Episode> sample_episodes(const Scene& scene, std::size_t count,
                                     std::mt19937_64& rng,
                                     double min_geodesic = kMinEpisodeGeodesic,
                                     double max_geodesic = 0.0);

enum class Action : std::uint8_t { North, South, East, West, Stop };

char action_char(Action a);

struct AgentTrace {
    std::vector<Pose2> poses;     // length = actions + 1
    std::vector<Action> actions;
    std::vector<double> rewards;  // one per action
    bool success = false;
    double path_length = 0.0;      // meters
    double shortest_length = 0.0;  // meters
};

/// r = 10 * success - (new_geo - prev_geo) - 0.01
double step_reward(double prev_geo, double new_geo, bool success);

struct Metrics {
    double sr = 0.0;   // percent
    double spl = 0.0;  // percent
    std::size_t episodes = 0;
};

Metrics compute_metrics(const std::vector<AgentTrace>& traces);

void save_scene_json(const Scene& scene, const std::filesystem::path& path);
Scene load_scene_json(const std::filesystem::path& path);

}  // namespace retnav
