#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <random>

#include "retnav/agents.hpp"
#include "retnav/context.hpp"
#include "retnav/embed_store.hpp"
#include "retnav/navsim.hpp"
#include "retnav/remb.hpp"
#include "retnav/retrieval.hpp"
#include "retnav/sim_graph.hpp"

namespace py = pybind11;
using namespace retnav;

PYBIND11_MODULE(_retnav, m) {
    m.doc() = "Retrieval-context engine and navigation harness bindings";

    py::class_<Pose2>(m, "Pose2")
        .def(py::init<>())
        .def(py::init([](double x, double y) { return Pose2{x, y}; }),
             py::arg("x"), py::arg("y"))
        .def_readwrite("x", &Pose2::x)
        .def_readwrite("y", &Pose2::y)
        .def("__repr__", [](const Pose2& p) {
            return "Pose2(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")";
        });

    py::class_<EmbeddingRecord>(m, "EmbeddingRecord")
        .def(py::init<>())
        .def_readwrite("frame_id", &EmbeddingRecord::frame_id)
        .def_readwrite("vector", &EmbeddingRecord::vector)
        .def_readwrite("scene_id", &EmbeddingRecord::scene_id)
        .def_readwrite("pose", &EmbeddingRecord::pose)
        .def_readwrite("category_scores", &EmbeddingRecord::category_scores);

    py::class_<EmbedStore>(m, "EmbedStore")
        .def(py::init<std::size_t>(), py::arg("dimension"))
        .def_property_readonly("dimension", &EmbedStore::dimension)
        .def("__len__", &EmbedStore::size)
        .def("scene_size", &EmbedStore::scene_size, py::arg("scene_id"))
        .def("scene_ids", &EmbedStore::scene_ids)
        .def("add_record", &EmbedStore::add_record, py::arg("record"))
        .def(
            "add",
            [](EmbedStore& s, std::uint64_t frame_id, const std::string& scene_id,
               std::vector<float> vector, std::optional<Pose2> pose) {
                EmbeddingRecord rec;
                rec.frame_id = frame_id;
                rec.scene_id = scene_id;
                rec.vector = std::move(vector);
                rec.pose = pose;
                return s.add_record(std::move(rec));
            },
            py::arg("frame_id"), py::arg("scene_id"), py::arg("vector"),
            py::arg("pose") = std::nullopt)
        .def("record", &EmbedStore::record, py::arg("index"),
             py::return_value_policy::reference_internal)
        .def("find_frame", &EmbedStore::find_frame, py::arg("frame_id"))
        .def(
            "topk",
            [](const EmbedStore& s, const std::string& scene_id,
               const std::vector<float>& query, std::size_t k) {
                std::vector<std::pair<std::uint64_t, float>> out;
                for (const auto& hit : s.topk(scene_id, query, k)) {
                    out.emplace_back(s.record(hit.index).frame_id, hit.score);
                }
                return out;
            },
            py::arg("scene_id"), py::arg("query"), py::arg("k"),
            "Exact cosine top-k; returns [(frame_id, score), ...]");

    m.def("cosine", &cosine, py::arg("a"), py::arg("b"));
    m.def(
        "l2_normalize",
        [](std::vector<float> v) {
            l2_normalize(v);
            return v;
        },
        py::arg("vector"));

    // Retrieval -------------------------------------------------------------
    py::class_<Shortlist>(m, "Shortlist")
        .def_readonly("indices", &Shortlist::indices)
        .def_readonly("relevance", &Shortlist::relevance);
    m.def("build_shortlist", &build_shortlist, py::arg("store"),
          py::arg("scene_id"), py::arg("query"),
          py::arg("shortlist_size") = kDefaultShortlistSize);
    m.def("mmr_rerank", &mmr_rerank, py::arg("shortlist"), py::arg("store"),
          py::arg("n"), py::arg("beta") = kDefaultMmrBeta);
    m.def("retrieve_goal", &retrieve_goal, py::arg("store"), py::arg("scene_id"),
          py::arg("goal_embedding"));

    // Similarity graphs -----------------------------------------------------
    py::class_<GraphEdge>(m, "GraphEdge")
        .def_readonly("i", &GraphEdge::i)
        .def_readonly("j", &GraphEdge::j)
        .def_readonly("weight", &GraphEdge::weight);

    py::class_<SimilarityGraph>(m, "SimilarityGraph")
        .def_property_readonly("variant",
                               [](const SimilarityGraph& g) { return to_string(g.variant); })
        .def_readonly("threshold", &SimilarityGraph::threshold)
        .def_readonly("nodes", &SimilarityGraph::nodes)
        .def_readonly("edges", &SimilarityGraph::edges);

    m.def(
        "build_graph",
        [](const EmbedStore& store, const std::string& scene_id,
           const std::string& variant) {
            const auto v = graph_variant_from_string(variant);
            if (v == GraphVariant::PG) {
                std::map<std::size_t, Pose2> poses;
                for (std::size_t idx : store.scene_partition(scene_id)) {
                    const auto& pose = store.record(idx).pose;
                    if (pose) poses[idx] = *pose;
                }
                return build_graph(build_affinity(store, scene_id), v, &poses);
            }
            return build_graph(build_affinity(store, scene_id), v);
        },
        py::arg("store"), py::arg("scene_id"), py::arg("variant") = "swg");

    m.def(
        "shortest_path",
        [](const SimilarityGraph& g, std::size_t source, std::size_t target) {
            const auto r = shortest_path(g, source, target);
            return py::make_tuple(r.found, r.nodes, r.cost);
        },
        py::arg("graph"), py::arg("source"), py::arg("target"),
        "Returns (found, record_indices, cost)");

    m.def("save_graph_json", &save_graph_json, py::arg("graph"), py::arg("path"));
    m.def("load_graph_json", &load_graph_json, py::arg("path"));

    // Navigation simulator --------------------------------------------------
    py::class_<Scene>(m, "Scene")
        .def_readonly("scene_id", &Scene::scene_id)
        .def_readonly("width", &Scene::width)
        .def_readonly("height", &Scene::height)
        .def_readonly("feature_dim", &Scene::feature_dim)
        .def("navigable", &Scene::navigable, py::arg("col"), py::arg("row"))
        .def("cell_center", &Scene::cell_center, py::arg("col"), py::arg("row"));

    m.def(
        "synth_scene",
        [](const std::string& kind, std::size_t width, std::size_t height,
           std::uint64_t seed, double sigma, bool aliasing, double alias_period,
           std::size_t feature_dim, const std::string& scene_id) {
            SceneSpec spec;
            spec.kind = scene_kind_from_string(kind);
            spec.width = width;
            spec.height = height;
            spec.seed = seed;
            spec.sigma = sigma;
            spec.aliasing = aliasing;
            spec.alias_period = alias_period;
            spec.feature_dim = feature_dim;
            spec.scene_id = scene_id;
            return synth_scene(spec);
        },
        py::arg("kind") = "maze", py::arg("width") = 32, py::arg("height") = 32,
        py::arg("seed") = 0, py::arg("sigma") = kDefaultSigmaMeters,
        py::arg("aliasing") = false,
        py::arg("alias_period") = kDefaultAliasPeriodMeters,
        py::arg("feature_dim") = kDefaultFeatureDim, py::arg("scene_id") = "");

    m.def("features", &features, py::arg("scene"), py::arg("pose"));
    m.def("geodesic", &geodesic, py::arg("scene"), py::arg("a"), py::arg("b"));
    m.def(
        "generate_dataset",
        [](const Scene& scene, std::size_t count, std::uint64_t seed,
           std::uint64_t first_frame_id) {
            std::mt19937_64 rng(seed);
            return generate_dataset(scene, count, rng, first_frame_id);
        },
        py::arg("scene"), py::arg("count"), py::arg("seed") = 0,
        py::arg("first_frame_id") = 0);

    py::class_<Episode>(m, "Episode")
        .def_readonly("start", &Episode::start)
        .def_readonly("goal", &Episode::goal)
        .def_readonly("goal_embedding", &Episode::goal_embedding)
        .def_readonly("geodesic_start", &Episode::geodesic_start);

    m.def(
        "sample_episodes",
        [](const Scene& scene, std::size_t count, std::uint64_t seed,
           double min_geodesic, double max_geodesic) {
            std::mt19937_64 rng(seed);
            return sample_episodes(scene, count, rng, min_geodesic, max_geodesic);
        },
        py::arg("scene"), py::arg("count"), py::arg("seed") = 0,
        py::arg("min_geodesic") = kMinEpisodeGeodesic, py::arg("max_geodesic") = 0.0);

    m.def("save_scene_json", &save_scene_json, py::arg("scene"), py::arg("path"));
    m.def("load_scene_json", &load_scene_json, py::arg("path"));

    // Context selection -----------------------------------------------------
    m.def(
        "gumbel_select",
        [](const std::vector<double>& alphas, double temperature,
           std::uint64_t seed) {
            SelectorLogits logits{alphas, temperature};
            std::mt19937_64 rng(seed);
            const auto sel = gumbel_select(logits, rng);
            return py::make_tuple(sel.selected, sel.soft_weights);
        },
        py::arg("alphas"), py::arg("temperature") = kDefaultGumbelTau,
        py::arg("seed") = 0, "Returns (selected_slot, soft_weights)");
    m.def(
        "argmax_select",
        [](const std::vector<double>& alphas) {
            const auto sel = argmax_select(SelectorLogits{alphas, 1.0});
            return py::make_tuple(sel.selected, sel.soft_weights);
        },
        py::arg("alphas"));

    // Agents and metrics ----------------------------------------------------
    py::class_<AgentTrace>(m, "AgentTrace")
        .def_readonly("success", &AgentTrace::success)
        .def_readonly("path_length", &AgentTrace::path_length)
        .def_readonly("shortest_length", &AgentTrace::shortest_length)
        .def_readonly("rewards", &AgentTrace::rewards)
        .def_property_readonly("actions", [](const AgentTrace& t) {
            std::string s;
            for (Action a : t.actions) s.push_back(action_char(a));
            return s;
        })
        .def_property_readonly("steps",
                               [](const AgentTrace& t) { return t.actions.size(); });

    py::class_<Metrics>(m, "Metrics")
        .def_readonly("sr", &Metrics::sr)
        .def_readonly("spl", &Metrics::spl)
        .def_readonly("episodes", &Metrics::episodes)
        .def("__repr__", [](const Metrics& m_) {
            return "Metrics(sr=" + std::to_string(m_.sr) +
                   ", spl=" + std::to_string(m_.spl) +
                   ", episodes=" + std::to_string(m_.episodes) + ")";
        });

    m.def(
        "run_agent",
        [](const Scene& scene, const Episode& episode, const std::string& agent,
           const EmbedStore* store, const SimilarityGraph* graph,
           const std::string& scene_db_id, bool oracle_context,
           std::uint64_t seed, int max_steps) {
            AgentConfig config;
            config.store = store;
            config.graph = graph;
            config.scene_db_id = scene_db_id.empty() ? scene.scene_id : scene_db_id;
            config.oracle_context = oracle_context;
            config.seed = seed;
            config.max_steps = max_steps;
            return run_agent(scene, episode, agent_kind_from_string(agent), config)
                .trace;
        },
        py::arg("scene"), py::arg("episode"), py::arg("agent"),
        py::arg("store") = nullptr, py::arg("graph") = nullptr,
        py::arg("scene_db_id") = "", py::arg("oracle_context") = false,
        py::arg("seed") = 0, py::arg("max_steps") = kDefaultMaxSteps,
        py::keep_alive<0, 4>(), py::keep_alive<0, 5>());

    m.def("compute_metrics", &compute_metrics, py::arg("traces"));
    m.def("step_reward", &step_reward, py::arg("prev_geo"), py::arg("new_geo"),
          py::arg("success"));

    // Persistence -----------------------------------------------------------
    m.def("write_remb", &write_remb, py::arg("remb_path"), py::arg("sidecar_path"),
          py::arg("dimension"), py::arg("records"));
    m.def(
        "read_remb",
        [](const std::filesystem::path& remb,
           const std::filesystem::path& sidecar) {
            return read_remb(remb, sidecar);
        },
        py::arg("remb_path"), py::arg("sidecar_path"));

    m.attr("CONTEXT_SIZE") = kDefaultContextSize;
    m.attr("SHORTLIST_SIZE") = kDefaultShortlistSize;
    m.attr("MMR_BETA") = kDefaultMmrBeta;
    m.attr("SPARSE_THRESHOLD") = kSparseThreshold;
    m.attr("DENSE_THRESHOLD") = kDenseThreshold;
    m.attr("CELL_METERS") = kCellMeters;
}
