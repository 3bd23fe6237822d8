#include "retnav/remb.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace retnav {
namespace {

constexpr char kMagic[4] = {'R', 'E', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;
// Header: magic + version + dimension + count.
constexpr std::streamoff kHeaderSize = 4 + 4 + 4 + 8;

template <typename T>
void write_le(std::ostream& out, T value) {
    // Assumes a little-endian host, as the rest of the codebase does.
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}

nlohmann::json sidecar_line(const EmbeddingRecord& r) {
    nlohmann::json j;
    j["frame_id"] = r.frame_id;
    j["scene"] = r.scene_id;
    if (r.pose) j["pose"] = {r.pose->x, r.pose->y};
    if (r.category_scores) j["category_scores"] = *r.category_scores;
    return j;
}

void parse_sidecar_line(const std::string& line, EmbeddingRecord& r) {
    nlohmann::json j = nlohmann::json::parse(line);
    if (j.at("frame_id").get<std::uint64_t>() != r.frame_id) {
        throw std::runtime_error("remb: sidecar frame_id does not match binary log");
    }
    r.scene_id = j.at("scene").get<std::string>();
    if (j.contains("pose")) {
        r.pose = Pose2{j["pose"].at(0).get<double>(), j["pose"].at(1).get<double>()};
    }
    if (j.contains("category_scores")) {
        r.category_scores = j["category_scores"].get<std::map<std::string, double>>();
    }
}

void write_header(std::ostream& out, std::uint32_t dimension, std::uint64_t count) {
    out.write(kMagic, 4);
    write_le(out, kVersion);
    write_le(out, dimension);
    write_le(out, count);
}

}  // namespace

void write_remb(const std::filesystem::path& remb_path,
                const std::filesystem::path& sidecar_path,
                std::size_t dimension,
                const std::vector<EmbeddingRecord>& records) {
    std::ofstream bin(remb_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("remb: cannot open " + remb_path.string());
    write_header(bin, static_cast<std::uint32_t>(dimension),
                 static_cast<std::uint64_t>(records.size()));
    std::ofstream meta(sidecar_path, std::ios::trunc);
    if (!meta) throw std::runtime_error("remb: cannot open " + sidecar_path.string());
    for (const auto& r : records) {
        if (r.vector.size() != dimension) {
            throw std::invalid_argument("remb: record dimension mismatch");
        }
        write_le(bin, r.frame_id);
        bin.write(reinterpret_cast<const char*>(r.vector.data()),
                  static_cast<std::streamsize>(dimension * sizeof(float)));
        meta << sidecar_line(r).dump() << '\n';
    }
    if (!bin || !meta) throw std::runtime_error("remb: write failed");
}

std::vector<EmbeddingRecord> read_remb(const std::filesystem::path& remb_path,
                                       const std::filesystem::path& sidecar_path,
                                       std::size_t* dimension_out) {
    std::ifstream bin(remb_path, std::ios::binary);
    if (!bin) throw std::runtime_error("remb: cannot open " + remb_path.string());
    char magic[4];
    bin.read(magic, 4);
    if (!bin || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("remb: bad magic in " + remb_path.string());
    }
    const auto version = read_le<std::uint32_t>(bin);
    if (version != kVersion) {
        throw std::runtime_error("remb: unsupported version " + std::to_string(version));
    }
    const auto dimension = read_le<std::uint32_t>(bin);
    const auto count = read_le<std::uint64_t>(bin);
    if (dimension_out) *dimension_out = dimension;

    std::ifstream meta(sidecar_path);
    if (!meta) throw std::runtime_error("remb: cannot open " + sidecar_path.string());

    std::vector<EmbeddingRecord> records;
    records.reserve(count);
    std::string line;
    for (std::uint64_t i = 0; i < count; ++i) {
        EmbeddingRecord r;
        r.frame_id = read_le<std::uint64_t>(bin);
        r.vector.resize(dimension);
        bin.read(reinterpret_cast<char*>(r.vector.data()),
                 static_cast<std::streamsize>(dimension * sizeof(float)));
        if (!bin) throw std::runtime_error("remb: truncated file " + remb_path.string());
        if (!std::getline(meta, line)) {
            throw std::runtime_error("remb: sidecar has fewer lines than records");
        }
        parse_sidecar_line(line, r);
        records.push_back(std::move(r));
    }
    return records;
}

RembAppender::RembAppender(std::filesystem::path remb_path,
                           std::filesystem::path sidecar_path,
                           std::size_t dimension)
    : remb_path_(std::move(remb_path)),
      sidecar_path_(std::move(sidecar_path)),
      dimension_(dimension) {
    if (std::filesystem::exists(remb_path_)) {
        std::size_t dim = 0;
        count_ = read_remb(remb_path_, sidecar_path_, &dim).size();
        if (dim != dimension_) {
            throw std::runtime_error("remb: existing log has different dimension");
        }
    } else {
        std::ofstream bin(remb_path_, std::ios::binary | std::ios::trunc);
        write_header(bin, static_cast<std::uint32_t>(dimension_), 0);
        std::ofstream meta(sidecar_path_, std::ios::trunc);
        if (!bin || !meta) throw std::runtime_error("remb: cannot create log");
    }
}

void RembAppender::append(const std::vector<EmbeddingRecord>& records) {
    std::ofstream bin(remb_path_, std::ios::binary | std::ios::in | std::ios::out);
    if (!bin) throw std::runtime_error("remb: cannot open " + remb_path_.string());
    bin.seekp(0, std::ios::end);
    std::ofstream meta(sidecar_path_, std::ios::app);
    for (const auto& r : records) {
        if (r.vector.size() != dimension_) {
            throw std::invalid_argument("remb: record dimension mismatch");
        }
        write_le(bin, r.frame_id);
        bin.write(reinterpret_cast<const char*>(r.vector.data()),
                  static_cast<std::streamsize>(dimension_ * sizeof(float)));
        meta << sidecar_line(r).dump() << '\n';
    }
    count_ += records.size();
    // Update the header count last so a crash mid-batch leaves a readable
    // prefix with the old count.
    bin.seekp(kHeaderSize - 8, std::ios::beg);
    write_le(bin, count_);
    bin.flush();
    meta.flush();
    if (!bin || !meta) throw std::runtime_error("remb: append failed");
}

}  // namespace retnav
