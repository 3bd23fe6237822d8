#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "retnav/embed_store.hpp"

namespace retnav {

/// Binary embedding log, magic "REMB" version 1, little-endian:
///   magic[4] | version u32 | dimension u32 | count u64 |
///   count x { frame_id u64, dimension x float32 }
/// Metadata lives in a JSONL sidecar, one object per record with fields
/// frame_id, scene, optional pose [x, y] and category_scores.

void write_remb(const std::filesystem::path& remb_path,
                const std::filesystem::path& sidecar_path,
                std::size_t dimension,
                const std::vector<EmbeddingRecord>& records);

/// Reads a REMB file and its sidecar. Rejects unknown magic or version,
/// truncated files and sidecar/record count mismatches.
std::vector<EmbeddingRecord> read_remb(const std::filesystem::path& remb_path,
                                       const std::filesystem::path& sidecar_path,
                                       std::size_t* dimension_out = nullptr);

/// Appends records to an existing log (or creates it), updating the header
/// count. Used by the fleet service as its durability path.
class RembAppender {
public:
    RembAppender(std::filesystem::path remb_path,
                 std::filesystem::path sidecar_path,
                 std::size_t dimension);

    /// Appends a batch and flushes both files before returning.
    void append(const std::vector<EmbeddingRecord>& records);

    std::uint64_t count() const { return count_; }

private:
    std::filesystem::path remb_path_;
    std::filesystem::path sidecar_path_;
    std::size_t dimension_;
    std::uint64_t count_ = 0;
};

}  // namespace retnav
