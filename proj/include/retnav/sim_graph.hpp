#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "retnav/embed_store.hpp"

namespace retnav {

enum class GraphVariant { SWG, SBG, DWG, PG };

std::string to_string(GraphVariant variant);
GraphVariant graph_variant_from_string(const std::string& name);

constexpr double kSparseThreshold = 0.75;
constexpr double kDenseThreshold = 0.40;
constexpr double kPoseCutMeters = 1.0;

/// Dense pairwise cosine matrix over one scene partition, row/column order
/// equal to the partition order.
struct AffinityMatrix {
    std::vector<std::size_t> nodes;  // record indices
    std::vector<std::vector<float>> values;
};

AffinityMatrix build_affinity(const EmbedStore& store, const std::string& scene_id);

struct GraphEdge {
    std::size_t i;  // positions into nodes, i < j
    std::size_t j;
    double weight;
};

/// Undirected weighted graph over a scene's records. Similarity variants keep
/// edges with s > threshold; SWG/DWG weight them sqrt(1 - s), SBG uses unit
/// weights. PG connects nodes whose poses are within 1 m, unit weights.
struct SimilarityGraph {
    GraphVariant variant = GraphVariant::SWG;
    double threshold = kSparseThreshold;
    std::vector<std::size_t> nodes;          // record indices
    std::vector<GraphEdge> edges;
    std::vector<std::vector<std::pair<std::size_t, double>>> adjacency;

    bool has_node(std::size_t record_index) const;
    std::size_t node_position(std::size_t record_index) const;
};

SimilarityGraph build_graph(const AffinityMatrix& affinity, GraphVariant variant,
                            const std::map<std::size_t, Pose2>* poses = nullptr);

struct PathResult {
    bool found = false;
    std::vector<std::size_t> nodes;  // record indices, source..target
    double cost = 0.0;
};

/// Dijkstra shortest path between two record indices. Ties between
/// minimal-cost paths resolve to the lexicographically smallest node-position
/// sequence. source == target yields a single-node path of cost 0; a
/// disconnected pair yields found = false.
PathResult shortest_path(const SimilarityGraph& graph, std::size_t source,
                         std::size_t target);

/// Fills a length-C context from a waypoint path per the dynamic-context
/// rules: if the path fits, it occupies the leading slots and the rest of
/// `previous` is kept; if it is longer than C, C elements are sampled without
/// replacement (endpoints always kept) in path order; if no path was found,
/// only the first two slots become r_obs and r_goal.
std::vector<std::size_t> path_to_context(const PathResult& path,
                                         std::size_t r_obs, std::size_t r_goal,
                                         std::size_t context_size,
                                         const std::vector<std::size_t>& previous,
                                         std::mt19937_64& rng);

/// Samples `want` sorted positions from 0..population-1, always including the
/// first and last, by sequential selection sampling over the interior.
std::vector<std::size_t> sample_path_positions(std::size_t population,
                                               std::size_t want,
                                               std::mt19937_64& rng);

/// JSON round-trip: {variant, threshold, nodes, edges: [[i, j, w], ...]}.
void save_graph_json(const SimilarityGraph& graph, const std::filesystem::path& path);
SimilarityGraph load_graph_json(const std::filesystem::path& path);

}  // namespace retnav
