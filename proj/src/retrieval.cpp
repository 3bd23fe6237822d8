#include "retnav/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace retnav {

Shortlist build_shortlist(const EmbedStore& store, const std::string& scene_id,
                          const std::vector<float>& query,
                          std::size_t shortlist_size) {
    if (shortlist_size == 0) {
        throw std::invalid_argument("build_shortlist: size must be positive");
    }
    auto hits = store.topk(scene_id, query, shortlist_size);
    Shortlist s;
    s.indices.reserve(hits.size());
    s.relevance.reserve(hits.size());
    for (const auto& h : hits) {
        s.indices.push_back(h.index);
        s.relevance.push_back(h.score);
    }
    const std::size_t n = s.indices.size();
    s.pairwise.assign(n, std::vector<float>(n, 0.0f));
    for (std::size_t i = 0; i < n; ++i) {
        s.pairwise[i][i] = 1.0f;
        for (std::size_t j = i + 1; j < n; ++j) {
            const float sim = cosine(store.record(s.indices[i]).vector,
                                     store.record(s.indices[j]).vector);
            s.pairwise[i][j] = sim;
            s.pairwise[j][i] = sim;
        }
    }
    return s;
}

std::vector<std::size_t> mmr_rerank(const Shortlist& shortlist,
                                    const EmbedStore& store, std::size_t n,
                                    double beta) {
    const std::size_t m = shortlist.indices.size();
    if (m == 0) {
        throw std::invalid_argument("mmr_rerank: empty shortlist");
    }
    if (beta < 0.0 || beta > 1.0) {
        throw std::invalid_argument("mmr_rerank: beta must be in [0, 1]");
    }
    const std::size_t want = std::min(n, m);
    std::vector<std::size_t> selected;       // positions within the shortlist
    std::vector<char> used(m, 0);
    selected.reserve(want);
    while (selected.size() < want) {
        double best_score = -std::numeric_limits<double>::infinity();
        std::size_t best_pos = m;
        for (std::size_t pos = 0; pos < m; ++pos) {
            if (used[pos]) continue;
            double redundancy = 0.0;
            for (std::size_t sel : selected) {
                redundancy = std::max(redundancy,
                                      static_cast<double>(shortlist.pairwise[pos][sel]));
            }
            const double score = beta * shortlist.relevance[pos] -
                                 (selected.empty() ? 0.0 : (1.0 - beta) * redundancy);
            const bool better =
                score > best_score ||
                (score == best_score && best_pos < m &&
                 store.record(shortlist.indices[pos]).frame_id <
                     store.record(shortlist.indices[best_pos]).frame_id);
            if (better) {
                best_score = score;
                best_pos = pos;
            }
        }
        used[best_pos] = 1;
        selected.push_back(best_pos);
    }
    std::vector<std::size_t> out;
    out.reserve(selected.size());
    for (std::size_t pos : selected) out.push_back(shortlist.indices[pos]);
    return out;
}

std::size_t retrieve_goal(const EmbedStore& store, const std::string& scene_id,
                          const std::vector<float>& goal_embedding) {
    return store.topk(scene_id, goal_embedding, 1).front().index;
}

CategoryTable category_table_from_store(const EmbedStore& store,
                                        const std::string& scene_id) {
    CategoryTable table;
    for (std::size_t idx : store.scene_partition(scene_id)) {
        const auto& rec = store.record(idx);
        if (!rec.category_scores) continue;
        for (const auto& [cat, score] : *rec.category_scores) {
            if (std::find(table.categories.begin(), table.categories.end(), cat) ==
                table.categories.end()) {
                table.categories.push_back(cat);
            }
        }
        table.raw[rec.frame_id] = *rec.category_scores;
    }
    std::sort(table.categories.begin(), table.categories.end());
    return table;
}

void softmax_normalize(CategoryTable& table) {
    if (table.categories.empty()) {
        throw std::invalid_argument("softmax_normalize: empty category set");
    }
    table.normalized.clear();
    for (const auto& [frame_id, scores] : table.raw) {
        double max_score = -std::numeric_limits<double>::infinity();
        for (const auto& cat : table.categories) {
            auto it = scores.find(cat);
            if (it == scores.end()) {
                throw std::invalid_argument("softmax_normalize: missing score for " + cat);
            }
            if (!std::isfinite(it->second)) {
                throw std::invalid_argument("softmax_normalize: non-finite score");
            }
            max_score = std::max(max_score, it->second);
        }
        // Shift by the max before exponentiating; the result is unchanged.
        double denom = 0.0;
        std::map<std::string, double> out;
        for (const auto& cat : table.categories) {
            const double e = std::exp(scores.at(cat) - max_score);
            out[cat] = e;
            denom += e;
        }
        for (auto& [cat, v] : out) v /= denom;
        table.normalized[frame_id] = std::move(out);
    }
}

std::vector<std::size_t> retrieve_category(const EmbedStore& store,
                                           const std::string& scene_id,
                                           const CategoryTable& table,
                                           const std::string& category,
                                           std::size_t k) {
    if (std::find(table.categories.begin(), table.categories.end(), category) ==
        table.categories.end()) {
        throw std::invalid_argument("retrieve_category: unknown category " + category);
    }
    struct Entry {
        std::size_t index;
        std::uint64_t frame_id;
        double score;
    };
    std::vector<Entry> entries;
    for (std::size_t idx : store.scene_partition(scene_id)) {
        const auto frame_id = store.record(idx).frame_id;
        auto it = table.normalized.find(frame_id);
        if (it == table.normalized.end()) {
            throw std::invalid_argument("retrieve_category: missing normalized scores");
        }
        entries.push_back({idx, frame_id, it->second.at(category)});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.frame_id < b.frame_id;
    });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, entries.size()); ++i) {
        out.push_back(entries[i].index);
    }
    return out;
}

}  // namespace retnav
