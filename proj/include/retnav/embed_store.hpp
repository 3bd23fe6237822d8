#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace retnav {

struct Pose2 {
    double x = 0.0;  // meters
    double y = 0.0;  // meters
};

/// One embedding with its identity and optional metadata. Vectors are stored
/// L2-normalized; `pose` is evaluation-only metadata and must never influence
/// retrieval results.
struct EmbeddingRecord {
    std::uint64_t frame_id = 0;
    std::vector<float> vector;
    std::string scene_id;
    std::optional<Pose2> pose;
    std::optional<std::map<std::string, double>> category_scores;
};

struct SearchHit {
    std::size_t index;
    float score;
};

/// Exact cosine similarity of two unit-norm vectors (their dot product).
float cosine(const std::vector<float>& a, const std::vector<float>& b);

/// Normalizes `v` in place. Throws if the vector has zero norm.
void l2_normalize(std::vector<float>& v);

/// Append-only embedding database with exact cosine top-k search, partitioned
/// by scene. Safe for concurrent appenders and readers: reads observe a
/// consistent prefix of the append log.
class EmbedStore {
public:
    explicit EmbedStore(std::size_t dimension);

    std::size_t dimension() const { return dimension_; }

    /// Normalizes and appends a record, returning its permanent index.
    /// Rejects dimension mismatches, zero vectors and duplicate frame_ids.
    std::size_t add_record(EmbeddingRecord record);

    std::size_t size() const;
    std::size_t scene_size(const std::string& scene_id) const;
    std::vector<std::string> scene_ids() const;

    const EmbeddingRecord& record(std::size_t index) const;
    std::optional<std::size_t> find_frame(std::uint64_t frame_id) const;

    /// Record indices of one scene, in insertion order.
    std::vector<std::size_t> scene_partition(const std::string& scene_id) const;

    /// Exact top-k by cosine score over one scene partition. Sorted by score
    /// descending, ties broken by ascending frame_id. Throws on an unknown or
    /// empty scene.
    std::vector<SearchHit> topk(const std::string& scene_id,
                                const std::vector<float>& query,
                                std::size_t k) const;

private:
    std::size_t dimension_;
    mutable std::shared_mutex mutex_;
    std::deque<EmbeddingRecord> records_;  // deque: appends never move records
    std::unordered_map<std::uint64_t, std::size_t> frame_index_;
    std::unordered_map<std::string, std::vector<std::size_t>> scenes_;
    // Row-major copy of each scene's vectors, kept contiguous so topk scans
    // sequential memory instead of chasing per-record allocations.
    std::unordered_map<std::string, std::vector<float>> scene_data_;
    // int8 copy used as a certified prefilter on hardware with AVX-512 VNNI:
    // quarters the scan's memory traffic, with exact float32 rescoring of
    // every candidate whose approximate-score interval overlaps the k-th
    // best lower bound. Per-row symmetric quantization: bytes hold
    // round(x / scale) + 128, plus the row's scale and L1 norm for the
    // error bound. Empty when the hardware path is unavailable.
    struct Q8Rows {
        std::vector<std::uint8_t> bytes;  // biased by +128 (unsigned operand)
        std::vector<float> scale;         // per row
        std::vector<float> l1;            // per row, of the exact fp32 values
    };
    std::unordered_map<std::string, Q8Rows> scene_q8_;
};

}  // namespace retnav
