#include "retnav/navsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace retnav {

namespace {

constexpr int kDx[4] = {0, 0, 1, -1};   // N, S, E, W
constexpr int kDy[4] = {1, -1, 0, 0};

std::vector<std::array<double, 5>> make_basis(std::size_t dim, double sigma,
                                              std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> freq(0.0, 1.0 / sigma);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<std::array<double, 5>> basis(dim);
    for (auto& b : basis) {
        b = {freq(rng), freq(rng), freq(rng), freq(rng), phase(rng)};
    }
    return basis;
}

void carve(Scene& scene, std::size_t col, std::size_t row, std::uint8_t value) {
    scene.cells[row * scene.width + col] = value;
}

std::size_t navigable_count(const Scene& scene) {
    return static_cast<std::size_t>(
        std::count(scene.cells.begin(), scene.cells.end(), std::uint8_t{1}));
}

}  // namespace

std::string to_string(SceneKind kind) {
    switch (kind) {
        case SceneKind::OpenRoom: return "open";
        case SceneKind::Corridor: return "corridor";
        case SceneKind::Maze: return "maze";
    }
    return "open";
}

SceneKind scene_kind_from_string(const std::string& name) {
    if (name == "open") return SceneKind::OpenRoom;
    if (name == "corridor") return SceneKind::Corridor;
    if (name == "maze") return SceneKind::Maze;
    throw std::invalid_argument("unknown scene kind: " + name);
}

bool Scene::navigable_pose(const Pose2& p) const {
    if (p.x < 0.0 || p.y < 0.0) return false;
    const auto col = static_cast<std::size_t>(p.x / kCellMeters);
    const auto row = static_cast<std::size_t>(p.y / kCellMeters);
    return navigable(col, row);
}

std::pair<std::size_t, std::size_t> Scene::pose_cell(const Pose2& p) const {
    if (!navigable_pose(p)) {
        throw std::invalid_argument("pose_cell: pose is not navigable");
    }
    return {static_cast<std::size_t>(p.x / kCellMeters),
            static_cast<std::size_t>(p.y / kCellMeters)};
}

Scene synth_scene(const SceneSpec& spec) {
    if (spec.width < 8 || spec.height < 8) {
        throw std::invalid_argument("synth_scene: scene must be at least 8x8 cells");
    }
    if (spec.feature_dim == 0 || spec.sigma <= 0.0) {
        throw std::invalid_argument("synth_scene: bad feature configuration");
    }
    Scene scene;
    scene.scene_id = spec.scene_id.empty()
                         ? to_string(spec.kind) + "-" + std::to_string(spec.seed)
                         : spec.scene_id;
    scene.width = spec.width;
    scene.height = spec.height;
    scene.feature_dim = spec.feature_dim;
    scene.sigma = spec.sigma;
    scene.aliasing = spec.aliasing;
    scene.alias_period = spec.alias_period;
    scene.rff_seed = spec.seed;
    scene.basis = make_basis(spec.feature_dim, spec.sigma, spec.seed);

    const std::size_t w = spec.width;
    const std::size_t h = spec.height;
    scene.cells.assign(w * h, 0);
    // Interior navigable, 1-cell border wall.
    for (std::size_t row = 1; row + 1 < h; ++row) {
        for (std::size_t col = 1; col + 1 < w; ++col) {
            carve(scene, col, row, 1);
        }
    }

    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);

    if (spec.kind == SceneKind::Corridor) {
        // Serpentine: 2-cell corridors separated by 2-cell walls, joined at
        // alternating ends.
        for (std::size_t row = 1; row + 1 < h; ++row) {
            const std::size_t band = (row - 1) % 4;
            if (band >= 2) {
                for (std::size_t col = 1; col + 1 < w; ++col) carve(scene, col, row, 0);
            }
        }
        bool right = true;
        for (std::size_t row = 1; row + 5 < h; row += 4) {
            // Reopen a 2x2 connector between corridor `row` and `row + 4`.
            const std::size_t col = right ? w - 3 : 1;
            for (std::size_t r = row; r < row + 4 && r + 1 < h; ++r) {
                carve(scene, col, r, 1);
                if (col + 1 < w - 1) carve(scene, col + 1, r, 1);
            }
            right = !right;
        }
    } else if (spec.kind == SceneKind::Maze) {
        // Grid of rooms separated by 2-cell walls with 2-cell door gaps.
        auto pick_walls = [&](std::size_t extent) {
            std::vector<std::size_t> walls;
            const std::size_t rooms = std::max<std::size_t>(2, (extent - 2) / 12 + 1);
            for (std::size_t i = 1; i < rooms; ++i) {
                std::size_t base = 1 + i * (extent - 2) / rooms;
                std::uniform_int_distribution<int> jitter(-1, 1);
                std::size_t pos = base + static_cast<std::size_t>(jitter(rng) + 1) - 1;
                pos = std::clamp<std::size_t>(pos, 4, extent - 6);
                if (!walls.empty() && pos < walls.back() + 5) pos = walls.back() + 5;
                if (pos + 6 <= extent) walls.push_back(pos);
            }
            return walls;
        };
        const auto wall_cols = pick_walls(w);
        const auto wall_rows = pick_walls(h);
        for (std::size_t x : wall_cols) {
            for (std::size_t row = 1; row + 1 < h; ++row) {
                carve(scene, x, row, 0);
                carve(scene, x + 1, row, 0);
            }
        }
        for (std::size_t y : wall_rows) {
            for (std::size_t col = 1; col + 1 < w; ++col) {
                carve(scene, col, y, 0);
                carve(scene, col, y + 1, 0);
            }
        }
        // Door per wall segment between consecutive crossing walls.
        auto bands = [&](const std::vector<std::size_t>& walls, std::size_t extent) {
            std::vector<std::pair<std::size_t, std::size_t>> out;  // [lo, hi) open span
            std::size_t lo = 1;
            for (std::size_t pos : walls) {
                out.emplace_back(lo, pos);
                lo = pos + 2;
            }
            out.emplace_back(lo, extent - 1);
            return out;
        };
        for (std::size_t x : wall_cols) {
            for (const auto& [lo, hi] : bands(wall_rows, h)) {
                if (hi < lo + 2) continue;
                std::uniform_int_distribution<std::size_t> at(lo, hi - 2);
                const std::size_t row = at(rng);
                carve(scene, x, row, 1);
                carve(scene, x + 1, row, 1);
                carve(scene, x, row + 1, 1);
                carve(scene, x + 1, row + 1, 1);
            }
        }
        for (std::size_t y : wall_rows) {
            for (const auto& [lo, hi] : bands(wall_cols, w)) {
                if (hi < lo + 2) continue;
                std::uniform_int_distribution<std::size_t> at(lo, hi - 2);
                const std::size_t col = at(rng);
                carve(scene, col, y, 1);
                carve(scene, col + 1, y, 1);
                carve(scene, col, y + 1, 1);
                carve(scene, col + 1, y + 1, 1);
            }
        }
    }

    if (navigable_count(scene) == 0) {
        throw std::invalid_argument("synth_scene: degenerate scene, no navigable cell");
    }
    return scene;
}

std::vector<float> features(const Scene& scene, const Pose2& pose) {
    if (!scene.navigable_pose(pose)) {
        throw std::invalid_argument("features: pose is not navigable");
    }
    const std::size_t dim = scene.feature_dim;
    std::vector<float> v(dim);
    const std::size_t aliased =
        scene.aliasing ? static_cast<std::size_t>(kAliasFraction * dim) : 0;
    // Torus embedding of the wrapped coordinates: period-T, continuous across
    // boundaries, and locally isometric (arc length ~ chord length for small
    // offsets), so nearby poses stay similar while poses a full period apart
    // become indistinguishable on the aliased dimensions.
    const double radius = scene.alias_period / (2.0 * std::numbers::pi);
    const double tx = pose.x / radius;
    const double ty = pose.y / radius;
    const double ux = radius * std::cos(tx), vx = radius * std::sin(tx);
    const double uy = radius * std::cos(ty), vy = radius * std::sin(ty);
    for (std::size_t k = 0; k < dim; ++k) {
        const auto& [w1, w2, w3, w4, phase] = scene.basis[k];
        const double arg = k < aliased
                               ? w1 * ux + w2 * uy + w3 * vx + w4 * vy + phase
                               : w1 * pose.x + w2 * pose.y + phase;
        v[k] = static_cast<float>(std::cos(arg));
    }
    l2_normalize(v);
    return v;
}

std::vector<int> distance_field(const Scene& scene, const Pose2& goal) {
    const auto [gc, gr] = scene.pose_cell(goal);
    std::vector<int> dist(scene.width * scene.height, -1);
    std::deque<std::pair<std::size_t, std::size_t>> queue;
    dist[gr * scene.width + gc] = 0;
    queue.emplace_back(gc, gr);
    while (!queue.empty()) {
        auto [c, r] = queue.front();
        queue.pop_front();
        const int d = dist[r * scene.width + c];
        for (int k = 0; k < 4; ++k) {
            const auto nc = static_cast<std::size_t>(static_cast<long>(c) + kDx[k]);
            const auto nr = static_cast<std::size_t>(static_cast<long>(r) + kDy[k]);
            if (!scene.navigable(nc, nr)) continue;
            auto& slot = dist[nr * scene.width + nc];
            if (slot < 0) {
                slot = d + 1;
                queue.emplace_back(nc, nr);
            }
        }
    }
    return dist;
}

std::optional<double> geodesic(const Scene& scene, const Pose2& a, const Pose2& b) {
    const auto field = distance_field(scene, b);
    const auto [ac, ar] = scene.pose_cell(a);
    const int d = field[ar * scene.width + ac];
    if (d < 0) return std::nullopt;
    return d * kCellMeters;
}

std::vector<std::pair<std::size_t, std::size_t>> shortest_cell_path(
    const Scene& scene, const Pose2& from, const Pose2& to) {
    const auto field = distance_field(scene, to);
    auto [c, r] = scene.pose_cell(from);
    if (field[r * scene.width + c] < 0) return {};
    std::vector<std::pair<std::size_t, std::size_t>> path;
    path.emplace_back(c, r);
    while (field[r * scene.width + c] > 0) {
        const int d = field[r * scene.width + c];
        for (int k = 0; k < 4; ++k) {
            const auto nc = static_cast<std::size_t>(static_cast<long>(c) + kDx[k]);
            const auto nr = static_cast<std::size_t>(static_cast<long>(r) + kDy[k]);
            if (scene.navigable(nc, nr) && field[nr * scene.width + nc] == d - 1) {
                c = nc;
                r = nr;
                break;
            }
        }
        path.emplace_back(c, r);
    }
    return path;
}

std::vector<EmbeddingRecord> generate_dataset(const Scene& scene,
                                              std::size_t target_count,
                                              std::mt19937_64& rng,
                                              std::uint64_t first_frame_id) {
    std::vector<std::pair<std::size_t, std::size_t>> navigable;
    for (std::size_t row = 0; row < scene.height; ++row) {
        for (std::size_t col = 0; col < scene.width; ++col) {
            if (scene.navigable(col, row)) navigable.emplace_back(col, row);
        }
    }
    if (navigable.size() < 2) {
        throw std::invalid_argument("generate_dataset: no navigable pairs");
    }
    std::uniform_int_distribution<std::size_t> pick(0, navigable.size() - 1);
    std::vector<EmbeddingRecord> records;
    records.reserve(target_count);
    std::uint64_t frame_id = first_frame_id;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 10000 + 100 * target_count;
    while (records.size() < target_count) {
        if (++attempts > max_attempts) {
            throw std::runtime_error("generate_dataset: no solvable start/goal pairs");
        }
        const auto [sc, sr] = navigable[pick(rng)];
        const auto [gc, gr] = navigable[pick(rng)];
        const auto path = shortest_cell_path(scene, scene.cell_center(sc, sr),
                                             scene.cell_center(gc, gr));
        if (path.size() < 4) continue;  // skip trivial or unreachable pairs
        for (const auto& [c, r] : path) {
            if (records.size() >= target_count) break;
            const Pose2 pose = scene.cell_center(c, r);
            EmbeddingRecord rec;
            rec.frame_id = frame_id++;
            rec.scene_id = scene.scene_id;
            rec.vector = features(scene, pose);
            rec.pose = pose;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

std::vector<Episode> sample_episodes(const Scene& scene, std::size_t count,
                                     std::mt19937_64& rng, double min_geodesic,
                                     double max_geodesic) {
    std::vector<std::pair<std::size_t, std::size_t>> navigable;
    for (std::size_t row = 0; row < scene.height; ++row) {
        for (std::size_t col = 0; col < scene.width; ++col) {
            if (scene.navigable(col, row)) navigable.emplace_back(col, row);
        }
    }
    std::uniform_int_distribution<std::size_t> pick(0, navigable.size() - 1);
    std::vector<Episode> episodes;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 10000 + 1000 * count;
    while (episodes.size() < count) {
        if (++attempts > max_attempts) {
            throw std::runtime_error("sample_episodes: scene admits too few episodes");
        }
        const auto [sc, sr] = navigable[pick(rng)];
        const auto [gc, gr] = navigable[pick(rng)];
        const Pose2 start = scene.cell_center(sc, sr);
        const Pose2 goal = scene.cell_center(gc, gr);
        const auto geo = geodesic(scene, start, goal);
        if (!geo || *geo < min_geodesic) continue;
        if (max_geodesic > 0.0 && *geo > max_geodesic) continue;
        episodes.push_back({start, goal, features(scene, goal), *geo});
    }
    return episodes;
}

char action_char(Action a) {
    switch (a) {
        case Action::North: return 'N';
        case Action::South: return 'S';
        case Action::East: return 'E';
        case Action::West: return 'W';
        case Action::Stop: return 'X';
    }
    return '?';
}

double step_reward(double prev_geo, double new_geo, bool success) {
    return kSuccessBonus * (success ? 1.0 : 0.0) - (new_geo - prev_geo) - kSlackCost;
}

Metrics compute_metrics(const std::vector<AgentTrace>& traces) {
    if (traces.empty()) {
        throw std::invalid_argument("compute_metrics: empty trace list");
    }
    Metrics m;
    m.episodes = traces.size();
    double spl_sum = 0.0;
    std::size_t successes = 0;
    for (const auto& t : traces) {
        if (!t.success) continue;
        ++successes;
        const double denom = std::max(t.path_length, t.shortest_length);
        spl_sum += denom > 0.0 ? t.shortest_length / denom : 1.0;
    }
    m.sr = 100.0 * static_cast<double>(successes) / static_cast<double>(m.episodes);
    m.spl = 100.0 * spl_sum / static_cast<double>(m.episodes);
    return m;
}

void save_scene_json(const Scene& scene, const std::filesystem::path& path) {
    nlohmann::json j;
    j["scene_id"] = scene.scene_id;
    j["width"] = scene.width;
    j["height"] = scene.height;
    j["cells"] = scene.cells;
    j["rff_seed"] = scene.rff_seed;
    j["sigma"] = scene.sigma;
    j["dim"] = scene.feature_dim;
    j["aliasing"] = scene.aliasing;
    j["alias_period"] = scene.alias_period;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_scene_json: cannot open " + path.string());
    out << j.dump(2) << '\n';
}

Scene load_scene_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_scene_json: cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    Scene scene;
    scene.scene_id = j.at("scene_id").get<std::string>();
    scene.width = j.at("width").get<std::size_t>();
    scene.height = j.at("height").get<std::size_t>();
    scene.cells = j.at("cells").get<std::vector<std::uint8_t>>();
    scene.rff_seed = j.at("rff_seed").get<std::uint64_t>();
    scene.sigma = j.at("sigma").get<double>();
    scene.feature_dim = j.at("dim").get<std::size_t>();
    scene.aliasing = j.at("aliasing").get<bool>();
    scene.alias_period = j.value("alias_period", kDefaultAliasPeriodMeters);
    if (scene.cells.size() != scene.width * scene.height) {
        throw std::runtime_error("load_scene_json: cell count mismatch");
    }
    scene.basis = make_basis(scene.feature_dim, scene.sigma, scene.rff_seed);
    return scene;
}

}  // namespace retnav
