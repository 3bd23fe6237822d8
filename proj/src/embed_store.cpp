#include "retnav/embed_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <stdexcept>

#if defined(__AVX512F__) && defined(__AVX512VNNI__)
#include <immintrin.h>
#define RETNAV_Q8_SCAN 1
#endif

namespace retnav {

namespace {

/// Four independent accumulators break the loop-carried dependency so the
/// compiler can pipeline/vectorize without -ffast-math.
float dot(const float* a, const float* b, std::size_t n) {
    float acc0 = 0.0f, acc1 = 0.0f, acc2 = 0.0f, acc3 = 0.0f;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 += a[i] * b[i];
        acc1 += a[i + 1] * b[i + 1];
        acc2 += a[i + 2] * b[i + 2];
        acc3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) acc0 += a[i] * b[i];
    return (acc0 + acc1) + (acc2 + acc3);
}

#ifdef RETNAV_Q8_SCAN

/// dot of a biased-uint8 row (value + 128) with a signed-int8 query. The
/// +128 bias makes the row operand unsigned, as _mm512_dpbusd_epi32
/// requires; the caller subtracts 128 * sum(query) afterwards.
std::int32_t dot_q8(const std::uint8_t* a, const std::int8_t* b, std::size_t n) {
    __m512i acc = _mm512_setzero_si512();
    std::size_t i = 0;
    for (; i + 64 <= n; i += 64) {
        acc = _mm512_dpbusd_epi32(
            acc, _mm512_loadu_si512(reinterpret_cast<const void*>(a + i)),
            _mm512_loadu_si512(reinterpret_cast<const void*>(b + i)));
    }
    std::int32_t dp = _mm512_reduce_add_epi32(acc);
    for (; i < n; ++i) {
        dp += static_cast<std::int32_t>(a[i]) * static_cast<std::int32_t>(b[i]);
    }
    return dp;
}

#endif  // RETNAV_Q8_SCAN

}  // namespace

float cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine: dimension mismatch");
    }
    return dot(a.data(), b.data(), a.size());
}

void l2_normalize(std::vector<float>& v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    if (sq <= 0.0) {
        throw std::invalid_argument("l2_normalize: zero vector");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (float& x : v) x = static_cast<float>(x * inv);
}

EmbedStore::EmbedStore(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) {
        throw std::invalid_argument("EmbedStore: dimension must be positive");
    }
}

std::size_t EmbedStore::add_record(EmbeddingRecord record) {
    if (record.vector.size() != dimension_) {
        throw std::invalid_argument("add_record: dimension mismatch");
    }
    l2_normalize(record.vector);
    std::unique_lock lock(mutex_);
    if (frame_index_.count(record.frame_id)) {
        throw std::invalid_argument("add_record: duplicate frame_id " +
                                    std::to_string(record.frame_id));
    }
    const std::size_t index = records_.size();
    frame_index_.emplace(record.frame_id, index);
    scenes_[record.scene_id].push_back(index);
    auto& data = scene_data_[record.scene_id];
    data.insert(data.end(), record.vector.begin(), record.vector.end());
#ifdef RETNAV_Q8_SCAN
    auto& q8 = scene_q8_[record.scene_id];
    float peak = 0.0f, l1 = 0.0f;
    for (float x : record.vector) {
        peak = std::max(peak, std::fabs(x));
        l1 += std::fabs(x);
    }
    const float scale = peak / 127.0f;  // peak > 0: zero vectors are rejected
    for (float x : record.vector) {
        const long v = std::lrintf(x / scale);
        q8.bytes.push_back(static_cast<std::uint8_t>(
            std::clamp(v, -127L, 127L) + 128));
    }
    q8.scale.push_back(scale);
    q8.l1.push_back(l1);
#endif
    records_.push_back(std::move(record));
    return index;
}

std::size_t EmbedStore::size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
}

std::size_t EmbedStore::scene_size(const std::string& scene_id) const {
    std::shared_lock lock(mutex_);
    auto it = scenes_.find(scene_id);
    return it == scenes_.end() ? 0 : it->second.size();
}

std::vector<std::string> EmbedStore::scene_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> ids;
    ids.reserve(scenes_.size());
    for (const auto& [id, _] : scenes_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

const EmbeddingRecord& EmbedStore::record(std::size_t index) const {
    std::shared_lock lock(mutex_);
    if (index >= records_.size()) {
        throw std::out_of_range("record: index out of range");
    }
    return records_[index];
}

std::optional<std::size_t> EmbedStore::find_frame(std::uint64_t frame_id) const {
    std::shared_lock lock(mutex_);
    auto it = frame_index_.find(frame_id);
    if (it == frame_index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::size_t> EmbedStore::scene_partition(const std::string& scene_id) const {
    std::shared_lock lock(mutex_);
    auto it = scenes_.find(scene_id);
    if (it == scenes_.end()) {
        throw std::invalid_argument("scene_partition: unknown scene " + scene_id);
    }
    return it->second;
}

std::vector<SearchHit> EmbedStore::topk(const std::string& scene_id,
                                        const std::vector<float>& query,
                                        std::size_t k) const {
    if (query.size() != dimension_) {
        throw std::invalid_argument("topk: dimension mismatch");
    }
    if (k == 0) {
        throw std::invalid_argument("topk: k must be positive");
    }
    std::shared_lock lock(mutex_);
    auto it = scenes_.find(scene_id);
    if (it == scenes_.end() || it->second.empty()) {
        throw std::invalid_argument("topk: unknown or empty scene " + scene_id);
    }
    const auto& part = it->second;
    const float* rows = scene_data_.at(scene_id).data();
    const std::size_t n = std::min(k, part.size());
    auto better = [this](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return records_[a.index].frame_id < records_[b.index].frame_id;
    };
    std::vector<SearchHit> hits;

#ifdef RETNAV_Q8_SCAN
    const float qpeak =
        std::fabs(*std::max_element(query.begin(), query.end(),
                                    [](float a, float b) {
                                        return std::fabs(a) < std::fabs(b);
                                    }));
    if (part.size() >= 4096 && qpeak > 0.0f) {
        // Two-pass exact search: scan the int8 copy (a quarter of the fp32
        // memory traffic), then rescore in float32 every row whose
        // approximate-score interval [approx-b, approx+b] reaches the n-th
        // best lower bound. Every exact top-n row passes that test, so the
        // candidate set is a superset of the exact answer and the result is
        // identical to a full float32 scan.
        //
        // With row r quantized as a_d = sa*A_d + ea_d (|ea_d| <= sa/2) and
        // the query as q_d = sq*Q_d + eq_d (|eq_d| <= sq/2),
        //   exact - approx = sum sa*A*eq + sum sq*Q*ea + sum ea*eq
        // whose magnitude is at most
        //   b_r = sq/2*(L1(a) + D*sa/2) + sa/2*(L1(q) + D*sq/2) + D*sa*sq/4.
        const auto& q8 = scene_q8_.at(scene_id);
        const std::size_t dim = dimension_;
        const float sq = qpeak / 127.0f;
        float l1q = 0.0f;
        std::int32_t sum_q = 0;
        std::vector<std::int8_t> qq(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            l1q += std::fabs(query[d]);
            const long v = std::clamp(std::lrintf(query[d] / sq), -127L, 127L);
            qq[d] = static_cast<std::int8_t>(v);
            sum_q += static_cast<std::int32_t>(v);
        }
        std::vector<float> approx(part.size()), bound(part.size());
        for (std::size_t row = 0; row < part.size(); ++row) {
            const std::int32_t dp = dot_q8(q8.bytes.data() + row * dim,
                                           qq.data(), dim);
            const float sa = q8.scale[row];
            approx[row] = sa * sq * static_cast<float>(dp - 128 * sum_q);
            // 1e-5 covers float rounding in approx and in the bound itself.
            bound[row] = 0.5f * sq * (q8.l1[row] + 0.5f * dim * sa) +
                         0.5f * sa * (l1q + 0.5f * dim * sq) +
                         0.25f * dim * sa * sq + 1e-5f;
        }
        std::vector<float> lower(part.size());
        for (std::size_t row = 0; row < part.size(); ++row) {
            lower[row] = approx[row] - bound[row];
        }
        std::vector<float> order(lower);
        std::nth_element(order.begin(), order.begin() + (n - 1), order.end(),
                         std::greater<float>());
        const float cutoff = order[n - 1];
        for (std::size_t row = 0; row < part.size(); ++row) {
            if (approx[row] + bound[row] >= cutoff) {
                hits.push_back({part[row],
                                dot(rows + row * dim, query.data(), dim)});
            }
        }
        std::partial_sort(hits.begin(), hits.begin() + n, hits.end(), better);
        hits.resize(n);
        return hits;
    }
#endif

    hits.reserve(part.size());
    for (std::size_t row = 0; row < part.size(); ++row) {
        hits.push_back(
            {part[row], dot(rows + row * dimension_, query.data(), dimension_)});
    }
    std::partial_sort(hits.begin(), hits.begin() + n, hits.end(), better);
    hits.resize(n);
    return hits;
}

}  // namespace retnav
