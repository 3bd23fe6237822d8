#include "retnav/sim_graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <stdexcept>

#include <json.hpp>

namespace retnav {

namespace {
constexpr double kCostEps = 1e-9;
}

std::string to_string(GraphVariant variant) {
    switch (variant) {
        case GraphVariant::SWG: return "SWG";
        case GraphVariant::SBG: return "SBG";
        case GraphVariant::DWG: return "DWG";
        case GraphVariant::PG: return "PG";
    }
    return "SWG";
}

GraphVariant graph_variant_from_string(const std::string& name) {
    std::string upper = name;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return std::toupper(c); });
    if (upper == "SWG") return GraphVariant::SWG;
    if (upper == "SBG") return GraphVariant::SBG;
    if (upper == "DWG") return GraphVariant::DWG;
    if (upper == "PG") return GraphVariant::PG;
    throw std::invalid_argument("unknown graph variant: " + name);
}

AffinityMatrix build_affinity(const EmbedStore& store, const std::string& scene_id) {
    AffinityMatrix affinity;
    affinity.nodes = store.scene_partition(scene_id);
    if (affinity.nodes.empty()) {
        throw std::invalid_argument("build_affinity: empty scene " + scene_id);
    }
    const std::size_t n = affinity.nodes.size();
    // Copy the vectors into one flat buffer first: the pairwise loop then
    // reads contiguous memory and takes no per-element store locks.
    const std::size_t dim = store.dimension();
    std::vector<float> flat(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = store.record(affinity.nodes[i]).vector;
        std::copy(v.begin(), v.end(), flat.begin() + i * dim);
    }
    // Same 4-accumulator arithmetic as cosine() so both paths agree bit for
    // bit on identical inputs.
    auto dot = [dim](const float* a, const float* b) {
        float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
        std::size_t d = 0;
        for (; d + 4 <= dim; d += 4) {
            s0 += a[d] * b[d];
            s1 += a[d + 1] * b[d + 1];
            s2 += a[d + 2] * b[d + 2];
            s3 += a[d + 3] * b[d + 3];
        }
        for (; d < dim; ++d) s0 += a[d] * b[d];
        return (s0 + s1) + (s2 + s3);
    };
    affinity.values.assign(n, std::vector<float>(n, 0.0f));
    for (std::size_t i = 0; i < n; ++i) {
        affinity.values[i][i] = 1.0f;
        const float* row_i = flat.data() + i * dim;
        for (std::size_t j = i + 1; j < n; ++j) {
            const float s = dot(row_i, flat.data() + j * dim);
            affinity.values[i][j] = s;
            affinity.values[j][i] = s;
        }
    }
    return affinity;
}

bool SimilarityGraph::has_node(std::size_t record_index) const {
    return std::find(nodes.begin(), nodes.end(), record_index) != nodes.end();
}

std::size_t SimilarityGraph::node_position(std::size_t record_index) const {
    auto it = std::find(nodes.begin(), nodes.end(), record_index);
    if (it == nodes.end()) {
        throw std::invalid_argument("node_position: record is not a graph node");
    }
    return static_cast<std::size_t>(it - nodes.begin());
}

SimilarityGraph build_graph(const AffinityMatrix& affinity, GraphVariant variant,
                            const std::map<std::size_t, Pose2>* poses) {
    SimilarityGraph graph;
    graph.variant = variant;
    graph.nodes = affinity.nodes;
    const std::size_t n = graph.nodes.size();
    graph.adjacency.assign(n, {});

    auto add_edge = [&](std::size_t i, std::size_t j, double w) {
        graph.edges.push_back({i, j, w});
        graph.adjacency[i].emplace_back(j, w);
        graph.adjacency[j].emplace_back(i, w);
    };

    if (variant == GraphVariant::PG) {
        if (!poses) {
            throw std::invalid_argument("build_graph: PG requires poses");
        }
        graph.threshold = kPoseCutMeters;
        for (std::size_t i = 0; i < n; ++i) {
            auto pi = poses->find(graph.nodes[i]);
            if (pi == poses->end()) {
                throw std::invalid_argument("build_graph: PG node without pose");
            }
            for (std::size_t j = i + 1; j < n; ++j) {
                auto pj = poses->find(graph.nodes[j]);
                if (pj == poses->end()) {
                    throw std::invalid_argument("build_graph: PG node without pose");
                }
                const double dx = pi->second.x - pj->second.x;
                const double dy = pi->second.y - pj->second.y;
                if (std::hypot(dx, dy) <= kPoseCutMeters) {
                    add_edge(i, j, 1.0);
                }
            }
        }
    } else {
        graph.threshold =
            variant == GraphVariant::DWG ? kDenseThreshold : kSparseThreshold;
        const bool binary = variant == GraphVariant::SBG;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double s = affinity.values[i][j];
                if (s > graph.threshold) {  // strict: boundary similarity drops out
                    add_edge(i, j, binary ? 1.0 : std::sqrt(std::max(0.0, 1.0 - s)));
                }
            }
        }
    }
    return graph;
}

PathResult shortest_path(const SimilarityGraph& graph, std::size_t source,
                         std::size_t target) {
    const std::size_t src = graph.node_position(source);
    const std::size_t dst = graph.node_position(target);
    const std::size_t n = graph.nodes.size();

    PathResult result;
    if (src == dst) {
        result.found = true;
        result.nodes = {source};
        result.cost = 0.0;
        return result;
    }

    // Dijkstra from the target, so dist[v] is the remaining cost to reach it.
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, kInf);
    std::vector<std::size_t> next(n, n);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[dst] = 0.0;
    queue.emplace(0.0, dst);
    std::vector<char> done(n, 0);
    while (!queue.empty()) {
        auto [d, v] = queue.top();
        queue.pop();
        if (done[v]) continue;
        done[v] = 1;
        for (const auto& [u, w] : graph.adjacency[v]) {
            const double cand = d + w;
            if (cand < dist[u] - kCostEps ||
                (cand < dist[u] + kCostEps && v < next[u])) {
                dist[u] = std::min(dist[u], cand);
                next[u] = v;
                queue.emplace(cand, u);
            }
        }
    }
    if (dist[src] == kInf) {
        result.found = false;
        return result;
    }

    // Walk greedily toward the target, always taking the smallest node
    // position that stays on a minimal-cost path.
    result.found = true;
    result.cost = dist[src];
    std::vector<char> visited(n, 0);
    std::size_t cur = src;
    result.nodes.push_back(graph.nodes[cur]);
    visited[cur] = 1;
    while (cur != dst) {
        std::size_t chosen = n;
        for (const auto& [u, w] : graph.adjacency[cur]) {
            if (visited[u]) continue;
            if (w + dist[u] <= dist[cur] + kCostEps && u < chosen) {
                chosen = u;
            }
        }
        if (chosen == n) {
            // Fall back to the Dijkstra tree if the greedy walk dead-ends
            // (possible only with zero-weight cycles).
            chosen = next[cur];
            if (chosen == n) break;
        }
        cur = chosen;
        visited[cur] = 1;
        result.nodes.push_back(graph.nodes[cur]);
    }
    return result;
}

std::vector<std::size_t> sample_path_positions(std::size_t population,
                                               std::size_t want,
                                               std::mt19937_64& rng) {
    if (want < 2 || population < want) {
        throw std::invalid_argument("sample_path_positions: need 2 <= want <= population");
    }
    std::vector<std::size_t> out;
    out.reserve(want);
    out.push_back(0);
    // Selection sampling over the interior positions, order-preserving.
    std::size_t need = want - 2;
    std::size_t remaining = population - 2;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t pos = 1; pos + 1 < population && need > 0; ++pos, --remaining) {
        if (unif(rng) * static_cast<double>(remaining) < static_cast<double>(need)) {
            out.push_back(pos);
            --need;
        }
    }
    out.push_back(population - 1);
    return out;
}

std::vector<std::size_t> path_to_context(const PathResult& path,
                                         std::size_t r_obs, std::size_t r_goal,
                                         std::size_t context_size,
                                         const std::vector<std::size_t>& previous,
                                         std::mt19937_64& rng) {
    if (context_size < 2) {
        throw std::invalid_argument("path_to_context: context size must be >= 2");
    }
    if (previous.size() != context_size) {
        throw std::invalid_argument("path_to_context: previous context has wrong length");
    }
    std::vector<std::size_t> out = previous;
    if (!path.found) {
        out[0] = r_obs;
        out[1] = r_goal;
        return out;
    }
    // The full waypoint set: observation anchor, path interior, goal anchor.
    std::vector<std::size_t> waypoints;
    waypoints.push_back(r_obs);
    for (std::size_t i = 1; i + 1 < path.nodes.size(); ++i) {
        waypoints.push_back(path.nodes[i]);
    }
    waypoints.push_back(r_goal);

    if (waypoints.size() > context_size) {
        auto positions = sample_path_positions(waypoints.size(), context_size, rng);
        for (std::size_t i = 0; i < context_size; ++i) {
            out[i] = waypoints[positions[i]];
        }
    } else {
        for (std::size_t i = 0; i < waypoints.size(); ++i) {
            out[i] = waypoints[i];
        }
    }
    return out;
}

void save_graph_json(const SimilarityGraph& graph, const std::filesystem::path& path) {
    nlohmann::json j;
    j["variant"] = to_string(graph.variant);
    j["threshold"] = graph.threshold;
    j["nodes"] = graph.nodes;
    auto& edges = j["edges"] = nlohmann::json::array();
    for (const auto& e : graph.edges) {
        edges.push_back({e.i, e.j, e.weight});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_graph_json: cannot open " + path.string());
    out << j.dump(2) << '\n';
}

SimilarityGraph load_graph_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_graph_json: cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    SimilarityGraph graph;
    graph.variant = graph_variant_from_string(j.at("variant").get<std::string>());
    graph.threshold = j.at("threshold").get<double>();
    graph.nodes = j.at("nodes").get<std::vector<std::size_t>>();
    graph.adjacency.assign(graph.nodes.size(), {});
    for (const auto& e : j.at("edges")) {
        const auto i = e.at(0).get<std::size_t>();
        const auto k = e.at(1).get<std::size_t>();
        const auto w = e.at(2).get<double>();
        graph.edges.push_back({i, k, w});
        graph.adjacency[i].emplace_back(k, w);
        graph.adjacency[k].emplace_back(i, w);
    }
    return graph;
}

}  // namespace retnav
