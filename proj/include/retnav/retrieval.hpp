#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "retnav/embed_store.hpp"

namespace retnav {

/// Top-k candidates for a query together with their pairwise similarities,
/// the inputs MMR re-ranking needs.
struct Shortlist {
    std::vector<std::size_t> indices;   // record indices, relevance-ordered
    std::vector<float> relevance;       // omega, sorted descending
    std::vector<std::vector<float>> pairwise;  // symmetric, unit diagonal
};

constexpr std::size_t kDefaultShortlistSize = 100;
constexpr double kDefaultMmrBeta = 0.5;
constexpr std::size_t kDefaultCategoryK = 9;

Shortlist build_shortlist(const EmbedStore& store, const std::string& scene_id,
                          const std::vector<float>& query,
                          std::size_t shortlist_size = kDefaultShortlistSize);

/// Greedy maximal-marginal-relevance selection. The first pick is the
/// relevance argmax; each later pick maximizes
///   beta * omega(r) - (1 - beta) * max_{s in selected} pairwise(r, s)
/// over the remaining candidates, ties broken by ascending frame_id.
/// Returns record indices, length min(n, shortlist size).
std::vector<std::size_t> mmr_rerank(const Shortlist& shortlist,
                                    const EmbedStore& store, std::size_t n,
                                    double beta = kDefaultMmrBeta);

/// Nearest database neighbor of a goal embedding (the retrieved goal).
std::size_t retrieve_goal(const EmbedStore& store, const std::string& scene_id,
                          const std::vector<float>& goal_embedding);

/// Per-image category scores, raw and softmax-normalized across the fixed
/// category set.
struct CategoryTable {
    std::vector<std::string> categories;
    // frame_id -> category -> score
    std::map<std::uint64_t, std::map<std::string, double>> raw;
    std::map<std::uint64_t, std::map<std::string, double>> normalized;
};

/// Builds a table from the category_scores metadata of one scene's records.
CategoryTable category_table_from_store(const EmbedStore& store,
                                        const std::string& scene_id);

/// Fills `normalized` with per-image softmax over categories. Throws on
/// non-finite raw scores.
void softmax_normalize(CategoryTable& table);

/// Ranks a scene's images by normalized score of one category, descending,
/// ties by ascending frame_id.
std::vector<std::size_t> retrieve_category(const EmbedStore& store,
                                           const std::string& scene_id,
                                           const CategoryTable& table,
                                           const std::string& category,
                                           std::size_t k = kDefaultCategoryK);

}  // namespace retnav
