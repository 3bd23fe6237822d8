#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "retnav/embed_store.hpp"
#include "retnav/remb.hpp"
#include "test_util.hpp"

using namespace retnav;
using testutil::TempDir;

namespace {

/// Independent full-sort top-k: float cosine, sort by score descending with
/// ties broken by ascending frame_id.
std::vector<std::size_t> topk_oracle(const EmbedStore& store,
                                     const std::vector<std::size_t>& partition,
                                     const std::vector<float>& query,
                                     std::size_t k) {
    struct Entry {
        std::size_t index;
        float score;
        std::uint64_t frame_id;
    };
    std::vector<Entry> entries;
    for (std::size_t idx : partition) {
        const auto& rec = store.record(idx);
        float s = 0.0f;
        for (std::size_t d = 0; d < query.size(); ++d) s += rec.vector[d] * query[d];
        entries.push_back({idx, s, rec.frame_id});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.frame_id < b.frame_id;
    });
    entries.resize(std::min(k, entries.size()));
    std::vector<std::size_t> out;
    for (const auto& e : entries) out.push_back(e.index);
    return out;
}

EmbeddingRecord make_record(std::uint64_t id, std::string scene,
                            std::vector<float> v) {
    EmbeddingRecord rec;
    rec.frame_id = id;
    rec.scene_id = std::move(scene);
    rec.vector = std::move(v);
    return rec;
}

}  // namespace

TEST_CASE("cosine matches extended-precision oracle and is symmetric") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 50; ++i) {
        auto a = testutil::random_unit(rng, 64);
        auto b = testutil::random_unit(rng, 64);
        CHECK(cosine(a, b) == doctest::Approx(testutil::cosine_oracle(a, b)).epsilon(1e-6));
        CHECK(cosine(a, b) == cosine(b, a));
        CHECK(std::abs(cosine(a, a) - 1.0f) <= 1e-6f);
    }
    CHECK_THROWS_AS(cosine(std::vector<float>(3, 1.0f), std::vector<float>(4, 1.0f)),
                    std::invalid_argument);
}

TEST_CASE("vector [3,4] is stored as [0.6, 0.8]") {
    EmbedStore store(2);
    const std::size_t idx = store.add_record(make_record(1, "s", {3.0f, 4.0f}));
    const auto& v = store.record(idx).vector;
    CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("normalization is idempotent to 1e-7") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 20; ++i) {
        auto v = testutil::random_unit(rng, 32);
        auto w = v;
        l2_normalize(w);
        for (std::size_t d = 0; d < v.size(); ++d) {
            CHECK(std::abs(v[d] - w[d]) <= 1e-7f);
        }
    }
}

TEST_CASE("stored vectors are unit norm") {
    std::mt19937_64 rng(13);
    EmbedStore store(16);
    for (std::uint64_t i = 0; i < 100; ++i) {
        auto raw = testutil::random_vector(rng, 16);
        for (auto& x : raw) x *= 37.5f;  // arbitrary scale, must not matter
        const std::size_t idx = store.add_record(make_record(i, "s", raw));
        long double sq = 0.0L;
        for (float x : store.record(idx).vector) sq += static_cast<long double>(x) * x;
        CHECK(std::abs(std::sqrt(static_cast<double>(sq)) - 1.0) <= 1e-6);
    }
}

TEST_CASE("add_record rejects bad input") {
    EmbedStore store(4);
    CHECK_THROWS_AS(store.add_record(make_record(0, "s", {1.0f, 2.0f})),
                    std::invalid_argument);
    CHECK_THROWS_AS(store.add_record(make_record(0, "s", {0.0f, 0.0f, 0.0f, 0.0f})),
                    std::invalid_argument);
    store.add_record(make_record(7, "s", {1.0f, 0.0f, 0.0f, 0.0f}));
    CHECK_THROWS_AS(store.add_record(make_record(7, "s", {0.0f, 1.0f, 0.0f, 0.0f})),
                    std::invalid_argument);
    CHECK_THROWS_AS(EmbedStore(0), std::invalid_argument);
}

TEST_CASE("append-only monotonicity: earlier handles stay valid") {
    std::mt19937_64 rng(14);
    EmbedStore store(8);
    std::vector<std::pair<std::size_t, std::uint64_t>> handles;
    std::vector<std::vector<float>> snapshots;
    for (std::uint64_t i = 0; i < 500; ++i) {
        const std::size_t idx =
            store.add_record(make_record(i, i % 3 ? "a" : "b",
                                         testutil::random_unit(rng, 8)));
        handles.emplace_back(idx, i);
        snapshots.push_back(store.record(idx).vector);
        // Every previously returned handle still resolves to the same record.
        if (i % 50 == 49) {
            for (std::size_t h = 0; h < handles.size(); ++h) {
                const auto& rec = store.record(handles[h].first);
                CHECK(rec.frame_id == handles[h].second);
                CHECK(rec.vector == snapshots[h]);
                CHECK(store.find_frame(handles[h].second) == handles[h].first);
            }
        }
    }
}

TEST_CASE("scene partition holds exactly the scene's records") {
    std::mt19937_64 rng(15);
    EmbedStore store(8);
    for (std::uint64_t i = 0; i < 1000; ++i) {
        store.add_record(make_record(i, "one", testutil::random_unit(rng, 8)));
    }
    CHECK(store.scene_size("one") == 1000);
    CHECK(store.scene_partition("one").size() == 1000);
    CHECK(store.scene_size("absent") == 0);
    CHECK_THROWS_AS(store.scene_partition("absent"), std::invalid_argument);
}

TEST_CASE("topk matches the full-sort oracle") {
    std::mt19937_64 rng(16);
    EmbedStore store(24);
    for (std::uint64_t i = 0; i < 100; ++i) {
        store.add_record(make_record(i, "s", testutil::random_unit(rng, 24)));
    }
    const auto partition = store.scene_partition("s");
    for (int trial = 0; trial < 50; ++trial) {
        const auto query = testutil::random_unit(rng, 24);
        const auto hits = store.topk("s", query, 8);
        const auto expect = topk_oracle(store, partition, query, 8);
        REQUIRE(hits.size() == expect.size());
        for (std::size_t i = 0; i < hits.size(); ++i) {
            CHECK(hits[i].index == expect[i]);
        }
    }
}

TEST_CASE("topk breaks score ties by ascending frame_id") {
    EmbedStore store(2);
    // Insert identical vectors under shuffled frame ids.
    for (std::uint64_t id : {42, 7, 19, 3, 25}) {
        store.add_record(make_record(id, "s", {1.0f, 0.0f}));
    }
    const auto hits = store.topk("s", {1.0f, 0.0f}, 5);
    std::vector<std::uint64_t> order;
    for (const auto& h : hits) order.push_back(store.record(h.index).frame_id);
    CHECK(order == std::vector<std::uint64_t>{3, 7, 19, 25, 42});
}

TEST_CASE("topk matches the oracle at 10k records") {
    std::mt19937_64 rng(17);
    EmbedStore store(32);
    for (std::uint64_t i = 0; i < 10000; ++i) {
        store.add_record(make_record(i, "s", testutil::random_unit(rng, 32)));
    }
    const auto partition = store.scene_partition("s");
    for (int trial = 0; trial < 5; ++trial) {
        const auto query = testutil::random_unit(rng, 32);
        const auto hits = store.topk("s", query, 10);
        const auto expect = topk_oracle(store, partition, query, 10);
        for (std::size_t i = 0; i < hits.size(); ++i) {
            CHECK(hits[i].index == expect[i]);
        }
    }
}

TEST_CASE("topk matches the oracle on near-tied vectors at scan scale") {
    // 6000 copies of one direction with tiny jitter: exact scores differ at
    // the 1e-6 level, far below any quantized prefilter's resolution, so the
    // result is only correct if every near-tie is rescored exactly.
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<float> jitter(-1e-5f, 1e-5f);
    auto base = testutil::random_unit(rng, 32);
    EmbedStore store(32);
    for (std::uint64_t i = 0; i < 6000; ++i) {
        auto v = base;
        for (auto& x : v) x += jitter(rng);
        store.add_record(make_record(i, "s", v));
    }
    // Score gaps here are below one float ulp, so ordering is decided by
    // ulp-level rounding; the oracle must use the same dot (cosine) as the
    // scan, which makes this a pure test of the scan path, not of summation
    // order.
    struct Entry {
        std::size_t index;
        float score;
        std::uint64_t frame_id;
    };
    std::vector<Entry> entries;
    for (std::size_t idx : store.scene_partition("s")) {
        const auto& rec = store.record(idx);
        entries.push_back({idx, cosine(rec.vector, base), rec.frame_id});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.frame_id < b.frame_id;
    });
    const auto hits = store.topk("s", base, 10);
    REQUIRE(hits.size() == 10);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].index == entries[i].index);
    }
}

TEST_CASE("topk input validation") {
    EmbedStore store(4);
    store.add_record(make_record(0, "s", {1.0f, 0.0f, 0.0f, 0.0f}));
    CHECK_THROWS_AS(store.topk("s", {1.0f, 0.0f}, 1), std::invalid_argument);
    CHECK_THROWS_AS(store.topk("s", {1.0f, 0.0f, 0.0f, 0.0f}, 0), std::invalid_argument);
    CHECK_THROWS_AS(store.topk("absent", {1.0f, 0.0f, 0.0f, 0.0f}, 1),
                    std::invalid_argument);
}

TEST_CASE("REMB round-trip is bit-exact") {
    std::mt19937_64 rng(18);
    TempDir dir("remb");
    std::vector<EmbeddingRecord> records;
    for (std::uint64_t i = 0; i < 200; ++i) {
        auto rec = make_record(i * 3 + 1, i % 2 ? "a" : "b",
                               testutil::random_unit(rng, 48));
        if (i % 4 == 0) rec.pose = Pose2{0.25 * static_cast<double>(i), 1.5};
        if (i % 5 == 0) rec.category_scores = {{"chair", 0.3}, {"plant", -1.25}};
        records.push_back(std::move(rec));
    }
    const auto remb = dir.path() / "log.remb";
    const auto sidecar = dir.path() / "log.meta.jsonl";
    write_remb(remb, sidecar, 48, records);
    std::size_t dim = 0;
    const auto loaded = read_remb(remb, sidecar, &dim);
    CHECK(dim == 48);
    REQUIRE(loaded.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(loaded[i].frame_id == records[i].frame_id);
        CHECK(loaded[i].scene_id == records[i].scene_id);
        CHECK(loaded[i].vector == records[i].vector);  // bit-exact floats
        CHECK(loaded[i].pose.has_value() == records[i].pose.has_value());
        if (records[i].pose) {
            CHECK(loaded[i].pose->x == records[i].pose->x);
            CHECK(loaded[i].pose->y == records[i].pose->y);
        }
        CHECK(loaded[i].category_scores == records[i].category_scores);
    }
}

TEST_CASE("REMB rejects corrupt files") {
    std::mt19937_64 rng(19);
    TempDir dir("remb-bad");
    std::vector<EmbeddingRecord> records;
    for (std::uint64_t i = 0; i < 10; ++i) {
        records.push_back(make_record(i, "s", testutil::random_unit(rng, 8)));
    }
    const auto remb = dir.path() / "log.remb";
    const auto sidecar = dir.path() / "log.meta.jsonl";
    write_remb(remb, sidecar, 8, records);

    // Truncate the binary payload.
    std::filesystem::resize_file(remb, std::filesystem::file_size(remb) - 5);
    CHECK_THROWS(read_remb(remb, sidecar));

    // Break the magic.
    write_remb(remb, sidecar, 8, records);
    {
        std::fstream f(remb, std::ios::in | std::ios::out | std::ios::binary);
        f.write("NOPE", 4);
    }
    CHECK_THROWS(read_remb(remb, sidecar));
}

TEST_CASE("RembAppender extends an existing log") {
    std::mt19937_64 rng(20);
    TempDir dir("remb-append");
    const auto remb = dir.path() / "log.remb";
    const auto sidecar = dir.path() / "log.meta.jsonl";
    std::vector<EmbeddingRecord> all;
    RembAppender appender(remb, sidecar, 8);
    for (int batch = 0; batch < 5; ++batch) {
        std::vector<EmbeddingRecord> records;
        for (int i = 0; i < 7; ++i) {
            records.push_back(make_record(all.size() + records.size(), "s",
                                          testutil::random_unit(rng, 8)));
        }
        appender.append(records);
        all.insert(all.end(), records.begin(), records.end());
        CHECK(appender.count() == all.size());

        const auto loaded = read_remb(remb, sidecar);
        REQUIRE(loaded.size() == all.size());
        for (std::size_t k = 0; k < all.size(); ++k) {
            CHECK(loaded[k].frame_id == all[k].frame_id);
            CHECK(loaded[k].vector == all[k].vector);
        }
    }
}
