// Command-line driver: scene/dataset generation, graph building, retrieval
// queries, simulation, evaluation sweeps, micro-benchmarks and the fleet
// service.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "retnav/agents.hpp"
#include "retnav/context.hpp"
#include "retnav/embed_store.hpp"
#include "retnav/fleet.hpp"
#include "retnav/navsim.hpp"
#include "retnav/remb.hpp"
#include "retnav/retrieval.hpp"
#include "retnav/sim_graph.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace retnav;

namespace {

struct Outputs {
    std::vector<fs::path> written;

    fs::path track(fs::path p) {
        written.push_back(p);
        return p;
    }
    void discard_all() {
        for (const auto& p : written) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
};

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    json j;
    in >> j;
    return j;
}

SceneSpec scene_spec_from_json(const json& j, std::uint64_t seed) {
    SceneSpec spec;
    spec.width = j.value("width", std::size_t{32});
    spec.height = j.value("height", std::size_t{32});
    spec.kind = scene_kind_from_string(j.value("kind", std::string("maze")));
    spec.seed = j.value("seed", seed);
    spec.feature_dim = j.value("dim", kDefaultFeatureDim);
    spec.sigma = j.value("sigma", kDefaultSigmaMeters);
    spec.aliasing = j.value("aliasing", false);
    spec.alias_period = j.value("alias_period", kDefaultAliasPeriodMeters);
    spec.scene_id = j.value("scene_id", std::string());
    return spec;
}

std::unique_ptr<EmbedStore> load_store(const json& dataset) {
    std::size_t dim = 0;
    auto records = read_remb(dataset.at("remb").get<std::string>(),
                             dataset.at("sidecar").get<std::string>(), &dim);
    auto store = std::make_unique<EmbedStore>(dim);
    for (auto& rec : records) store->add_record(std::move(rec));
    return store;
}

std::vector<float> query_from_config(const json& cfg) {
    if (cfg.contains("query_vector")) {
        auto v = cfg["query_vector"].get<std::vector<float>>();
        l2_normalize(v);
        return v;
    }
    if (cfg.contains("query_pose")) {
        const Scene scene = load_scene_json(cfg.at("scene_file").get<std::string>());
        return features(scene, Pose2{cfg["query_pose"].at(0).get<double>(),
                                     cfg["query_pose"].at(1).get<double>()});
    }
    throw std::runtime_error("retrieve: config needs query_vector or query_pose");
}

void parallel_for(std::size_t count, unsigned jobs,
                  const std::function<void(std::size_t)>& body) {
    if (jobs <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (unsigned t = 0; t < jobs; ++t) {
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

json trace_to_json(const AgentRun& run, std::size_t episode_index) {
    json j;
    j["episode"] = episode_index;
    j["success"] = run.trace.success;
    j["path_length"] = run.trace.path_length;
    j["shortest_length"] = run.trace.shortest_length;
    std::string actions;
    for (Action a : run.trace.actions) actions.push_back(action_char(a));
    j["actions"] = actions;
    auto& poses = j["poses"] = json::array();
    for (const auto& p : run.trace.poses) poses.push_back({p.x, p.y});
    j["rewards"] = run.trace.rewards;
    if (!run.contexts.empty()) {
        auto& ctx = j["contexts"] = json::array();
        for (const auto& c : run.contexts) {
            ctx.push_back({{"step", c.step},
                           {"strategy", c.strategy},
                           {"slots", c.slots},
                           {"selected", c.selected},
                           {"soft_weights", c.soft_weights}});
        }
    }
    return j;
}

struct SuiteResult {
    Metrics metrics;
    std::vector<AgentTrace> traces;
};

struct AgentSpec {
    AgentKind kind;
    bool oracle_context = false;
    std::string label;
};

AgentSpec agent_spec_from_name(const std::string& name) {
    if (name == "context_follower_oracle") {
        return {AgentKind::ContextFollower, true, name};
    }
    return {agent_kind_from_string(name), false, name};
}

struct SceneBundle {
    Scene scene;
    std::unique_ptr<EmbedStore> store;
    SimilarityGraph graph;
    std::vector<Episode> episodes;
};

SceneBundle prepare_scene(const json& cfg, std::uint64_t scene_seed,
                          std::size_t dataset_size) {
    SceneSpec spec = scene_spec_from_json(cfg.value("scene", json::object()), 0);
    spec.seed = scene_seed;
    spec.scene_id.clear();
    SceneBundle bundle;
    bundle.scene = synth_scene(spec);
    bundle.store = std::make_unique<EmbedStore>(spec.feature_dim);

    std::mt19937_64 data_rng(scene_seed * 0x1000193ull + 7);
    for (auto& rec : generate_dataset(bundle.scene, dataset_size, data_rng)) {
        bundle.store->add_record(std::move(rec));
    }
    const auto variant =
        graph_variant_from_string(cfg.value("graph_variant", std::string("SWG")));
    const auto affinity = build_affinity(*bundle.store, bundle.scene.scene_id);
    if (variant == GraphVariant::PG) {
        std::map<std::size_t, Pose2> poses;
        for (std::size_t idx : bundle.store->scene_partition(bundle.scene.scene_id)) {
            poses[idx] = *bundle.store->record(idx).pose;
        }
        bundle.graph = build_graph(affinity, variant, &poses);
    } else {
        bundle.graph = build_graph(affinity, variant);
    }
    std::mt19937_64 episode_rng(scene_seed * 0x9e3779b9ull + 13);
    bundle.episodes = sample_episodes(
        bundle.scene, cfg.value("episodes_per_scene", std::size_t{50}), episode_rng,
        cfg.value("min_geodesic", kMinEpisodeGeodesic),
        cfg.value("max_geodesic", 6.0));
    return bundle;
}

AgentConfig agent_config_from_json(const json& cfg, const SceneBundle& bundle,
                                   const AgentSpec& agent, std::uint64_t seed) {
    AgentConfig config;
    config.max_steps = cfg.value("max_steps", kDefaultMaxSteps);
    config.stop_threshold = cfg.value("stop_threshold", kDefaultStopThreshold);
    config.waypoint_threshold =
        cfg.value("waypoint_threshold", kDefaultWaypointThreshold);
    config.context_size = cfg.value("context_size", kDefaultContextSize);
    config.store = bundle.store.get();
    config.graph = &bundle.graph;
    config.scene_db_id = bundle.scene.scene_id;
    config.oracle_context = agent.oracle_context;
    config.seed = seed;
    return config;
}

int cmd_gen_scene(const json& cfg, std::uint64_t seed, const fs::path& out_dir,
                  Outputs& outputs) {
    const SceneSpec spec = scene_spec_from_json(cfg.value("scene", json::object()), seed);
    const Scene scene = synth_scene(spec);
    const auto path = outputs.track(out_dir / (scene.scene_id + ".scene.json"));
    save_scene_json(scene, path);
    std::cout << path.string() << "\n";
    return 0;
}

int cmd_gen_dataset(const json& cfg, std::uint64_t seed, const fs::path& out_dir,
                    Outputs& outputs) {
    const Scene scene = load_scene_json(cfg.at("scene_file").get<std::string>());
    const auto count = cfg.value("dataset_size", std::size_t{1000});
    std::mt19937_64 rng(seed);
    const auto records = generate_dataset(scene, count, rng);
    const auto remb = outputs.track(out_dir / (scene.scene_id + ".remb"));
    const auto sidecar = outputs.track(out_dir / (scene.scene_id + ".meta.jsonl"));
    write_remb(remb, sidecar, scene.feature_dim, records);
    std::cout << remb.string() << "\n" << sidecar.string() << "\n";
    return 0;
}

int cmd_build_graph(const json& cfg, const fs::path& out_dir, Outputs& outputs) {
    auto store_ptr = load_store(cfg.at("dataset"));
    EmbedStore& store = *store_ptr;
    const auto scene_ids = store.scene_ids();
    const std::string scene_id =
        cfg.value("scene", scene_ids.empty() ? std::string() : scene_ids.front());
    const auto variant =
        graph_variant_from_string(cfg.value("variant", std::string("SWG")));
    const auto affinity = build_affinity(store, scene_id);
    SimilarityGraph graph;
    if (variant == GraphVariant::PG) {
        std::map<std::size_t, Pose2> poses;
        for (std::size_t idx : store.scene_partition(scene_id)) {
            if (!store.record(idx).pose) {
                throw std::runtime_error("build-graph: PG needs pose metadata");
            }
            poses[idx] = *store.record(idx).pose;
        }
        graph = build_graph(affinity, variant, &poses);
    } else {
        graph = build_graph(affinity, variant);
    }
    const auto path = outputs.track(
        out_dir / (scene_id + "." + to_string(variant) + ".graph.json"));
    save_graph_json(graph, path);
    std::cout << path.string() << " (" << graph.edges.size() << " edges)\n";
    return 0;
}

int cmd_retrieve(const json& cfg, const fs::path& out_dir, Outputs& outputs) {
    auto store_ptr = load_store(cfg.at("dataset"));
    EmbedStore& store = *store_ptr;
    const auto scene_ids = store.scene_ids();
    const std::string scene_id =
        cfg.value("scene", scene_ids.empty() ? std::string() : scene_ids.front());
    const std::string mode = cfg.value("mode", std::string("topk"));
    const auto k = cfg.value("k", std::size_t{8});

    json results = json::array();
    auto emit = [&](std::size_t index, double score) {
        results.push_back(
            {{"frame_id", store.record(index).frame_id}, {"score", score}});
    };
    if (mode == "topk") {
        for (const auto& hit : store.topk(scene_id, query_from_config(cfg), k)) {
            emit(hit.index, hit.score);
        }
    } else if (mode == "mmr") {
        const auto query = query_from_config(cfg);
        const auto shortlist = build_shortlist(store, scene_id, query,
                                               cfg.value("shortlist_size",
                                                         kDefaultShortlistSize));
        for (std::size_t idx :
             mmr_rerank(shortlist, store, k, cfg.value("beta", kDefaultMmrBeta))) {
            emit(idx, cosine(store.record(idx).vector, query));
        }
    } else if (mode == "goal") {
        const auto query = query_from_config(cfg);
        const std::size_t idx = retrieve_goal(store, scene_id, query);
        emit(idx, cosine(store.record(idx).vector, query));
    } else if (mode == "category") {
        auto table = category_table_from_store(store, scene_id);
        softmax_normalize(table);
        const std::string category = cfg.at("category").get<std::string>();
        for (std::size_t idx : retrieve_category(store, scene_id, table, category, k)) {
            emit(idx, table.normalized.at(store.record(idx).frame_id).at(category));
        }
    } else {
        throw std::runtime_error("retrieve: unknown mode " + mode);
    }
    const auto path = outputs.track(out_dir / "retrieve.json");
    std::ofstream out(path);
    out << results.dump(2) << "\n";
    std::cout << results.dump(2) << "\n";
    return 0;
}

int cmd_simulate(const json& cfg, std::uint64_t seed, const fs::path& out_dir,
                 unsigned jobs, Outputs& outputs) {
    const auto agent = agent_spec_from_name(
        cfg.value("agent", std::string("context_follower")));
    const auto bundle = prepare_scene(cfg, cfg.value("scene_seed", seed),
                                      cfg.value("dataset_size", std::size_t{1000}));
    std::vector<json> lines(bundle.episodes.size());
    parallel_for(bundle.episodes.size(), jobs, [&](std::size_t i) {
        AgentConfig config =
            agent_config_from_json(cfg, bundle, agent, seed * 1000003ull + i);
        config.dump_contexts = cfg.value("dump_contexts", false);
        lines[i] = trace_to_json(
            run_agent(bundle.scene, bundle.episodes[i], agent.kind, config), i);
    });
    const auto path = outputs.track(out_dir / (agent.label + ".traces.jsonl"));
    std::ofstream out(path);
    for (std::size_t i = 0; i < lines.size(); ++i) out << lines[i].dump() << "\n";
    std::cout << path.string() << "\n";
    return 0;
}

int cmd_evaluate(const json& cfg, std::uint64_t seed, const fs::path& out_dir,
                 unsigned jobs, Outputs& outputs) {
    const std::string suite = cfg.value("suite", std::string("default"));
    const auto scene_count = cfg.value("scenes", std::size_t{10});
    std::vector<std::size_t> db_sizes;
    if (cfg.contains("db_sizes")) {
        db_sizes = cfg["db_sizes"].get<std::vector<std::size_t>>();
    } else {
        db_sizes.push_back(cfg.value("dataset_size", std::size_t{1000}));
    }
    std::vector<AgentSpec> agents;
    for (const auto& name :
         cfg.value("agents", std::vector<std::string>{"oracle", "goal_greedy",
                                                      "context_follower"})) {
        agents.push_back(agent_spec_from_name(name));
    }

    const auto csv_path = outputs.track(out_dir / "metrics.csv");
    std::ofstream csv(csv_path);
    csv << "agent,suite,SR,SPL,N\n";
    for (std::size_t db_size : db_sizes) {
        std::vector<SceneBundle> bundles;
        bundles.reserve(scene_count);
        for (std::size_t s = 0; s < scene_count; ++s) {
            bundles.push_back(prepare_scene(cfg, seed + s, db_size));
        }
        for (const auto& agent : agents) {
            std::vector<AgentTrace> traces;
            for (std::size_t s = 0; s < scene_count; ++s) {
                const auto& bundle = bundles[s];
                std::vector<AgentTrace> scene_traces(bundle.episodes.size());
                parallel_for(bundle.episodes.size(), jobs, [&](std::size_t i) {
                    const AgentConfig config = agent_config_from_json(
                        cfg, bundle, agent, (seed + s) * 1000003ull + i);
                    scene_traces[i] =
                        run_agent(bundle.scene, bundle.episodes[i], agent.kind, config)
                            .trace;
                });
                traces.insert(traces.end(), scene_traces.begin(), scene_traces.end());
            }
            const Metrics m = compute_metrics(traces);
            const std::string tag =
                db_sizes.size() > 1 ? suite + "@" + std::to_string(db_size) : suite;
            csv << agent.label << "," << tag << "," << m.sr << "," << m.spl << ","
                << m.episodes << "\n";
            std::cout << agent.label << " " << tag << ": SR=" << m.sr
                      << " SPL=" << m.spl << " N=" << m.episodes << "\n";
        }
    }
    std::cout << csv_path.string() << "\n";
    return 0;
}

int cmd_bench(const json& cfg, std::uint64_t seed, const fs::path& out_dir,
              Outputs& outputs) {
    const std::size_t dim = cfg.value("dim", kDefaultFeatureDim);
    const auto sizes =
        cfg.value("sizes", std::vector<std::size_t>{100, 1000, 10000, 100000});
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    auto random_unit = [&] {
        std::vector<float> v(dim);
        for (auto& x : v) x = normal(rng);
        l2_normalize(v);
        return v;
    };
    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    const auto csv_path = outputs.track(out_dir / "bench.csv");
    std::ofstream csv(csv_path);
    csv << "stage,size,ms_per_op\n";
    for (std::size_t size : sizes) {
        EmbedStore store(dim);
        auto t0 = clock::now();
        for (std::size_t i = 0; i < size; ++i) {
            EmbeddingRecord rec;
            rec.frame_id = i;
            rec.scene_id = "bench";
            rec.vector = random_unit();
            store.add_record(std::move(rec));
        }
        csv << "ingest," << size << "," << ms_since(t0) / static_cast<double>(size)
            << "\n";

        const int queries = 20;
        t0 = clock::now();
        for (int q = 0; q < queries; ++q) {
            store.topk("bench", random_unit(), 8);
        }
        const double topk_ms = ms_since(t0) / queries;
        csv << "topk," << size << "," << topk_ms << "\n";

        const auto query = random_unit();
        const auto shortlist = build_shortlist(store, "bench", query);
        t0 = clock::now();
        for (int q = 0; q < queries; ++q) {
            mmr_rerank(shortlist, store, 8);
        }
        csv << "mmr," << size << "," << ms_since(t0) / queries << "\n";

        // Sparse random graph at the same node count; dense affinity matrices
        // past 20k nodes are out of scope, so path cost is timed on a
        // synthetic edge set of ~8 edges per node.
        SimilarityGraph graph;
        graph.nodes.resize(size);
        for (std::size_t i = 0; i < size; ++i) graph.nodes[i] = i;
        graph.adjacency.assign(size, {});
        std::uniform_int_distribution<std::size_t> node(0, size - 1);
        std::uniform_real_distribution<double> weight(0.01, 0.5);
        auto link = [&](std::size_t i, std::size_t j, double w) {
            graph.edges.push_back({i, j, w});
            graph.adjacency[i].emplace_back(j, w);
            graph.adjacency[j].emplace_back(i, w);
        };
        for (std::size_t i = 0; i + 1 < size; ++i) link(i, i + 1, weight(rng));
        for (std::size_t e = 0; e < size * 3; ++e) {
            const std::size_t a = node(rng);
            const std::size_t b = node(rng);
            if (a != b) link(std::min(a, b), std::max(a, b), weight(rng));
        }
        t0 = clock::now();
        for (int q = 0; q < queries; ++q) {
            shortest_path(graph, node(rng), node(rng));
        }
        csv << "graph_path," << size << "," << ms_since(t0) / queries << "\n";

        Context previous;
        previous.slots.assign(kDefaultContextSize, 0);
        std::mt19937_64 ctx_rng(seed);
        t0 = clock::now();
        for (int q = 0; q < queries; ++q) {
            previous = build_dynamic_context(store, "bench", graph, random_unit(),
                                             query, kDefaultContextSize, previous,
                                             ctx_rng);
        }
        csv << "context_build," << size << "," << ms_since(t0) / queries << "\n";
        std::cout << "size " << size << ": topk " << topk_ms << " ms\n";
    }
    std::cout << csv_path.string() << "\n";
    return 0;
}

std::atomic<bool> g_stop{false};

int cmd_serve(const json& cfg, const std::string& listen) {
    const std::size_t dim = cfg.value("dimension", kDefaultFeatureDim);
    EmbedStore store(dim);
    std::unique_ptr<RembAppender> appender;
    if (cfg.contains("data_dir")) {
        const fs::path dir = cfg["data_dir"].get<std::string>();
        fs::create_directories(dir);
        appender = std::make_unique<RembAppender>(dir / "fleet.remb",
                                                  dir / "fleet.meta.jsonl", dim);
        if (fs::exists(dir / "fleet.remb")) {
            for (auto& rec :
                 read_remb(dir / "fleet.remb", dir / "fleet.meta.jsonl")) {
                store.add_record(std::move(rec));
            }
        }
    }
    std::string host = "127.0.0.1";
    std::uint16_t port = 7077;
    if (const auto colon = listen.rfind(':'); colon != std::string::npos) {
        host = listen.substr(0, colon);
        port = static_cast<std::uint16_t>(std::stoi(listen.substr(colon + 1)));
    }
    FleetServer server(store, appender.get());
    server.start(host, port);
    std::cout << "listening on " << host << ":" << server.port() << "\n";
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"retrieval-context navigation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::string listen = "127.0.0.1:7077";
    std::uint64_t seed = 0;
    unsigned jobs = 1;

    app.add_option("--config", config_path, "JSON experiment config");
    app.add_option("--seed", seed, "base random seed");
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--jobs", jobs, "parallel episode workers");

    auto* gen_scene = app.add_subcommand("gen-scene", "generate an occupancy scene");
    auto* gen_dataset =
        app.add_subcommand("gen-dataset", "generate a REMB dataset for a scene");
    auto* build_graph_cmd =
        app.add_subcommand("build-graph", "build a similarity graph from a dataset");
    auto* retrieve = app.add_subcommand("retrieve", "run retrieval queries");
    auto* simulate = app.add_subcommand("simulate", "run one agent, write traces");
    auto* evaluate = app.add_subcommand("evaluate", "run agent suites, write metrics");
    auto* bench = app.add_subcommand("bench", "per-stage latency benchmark");
    auto* serve = app.add_subcommand("serve", "run the fleet ingestion service");
    serve->add_option("--listen", listen, "host:port to listen on");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    Outputs outputs;
    try {
        const json cfg = config_path.empty() ? json::object() : load_config(config_path);
        fs::create_directories(out_dir);
        if (gen_scene->parsed()) return cmd_gen_scene(cfg, seed, out_dir, outputs);
        if (gen_dataset->parsed()) return cmd_gen_dataset(cfg, seed, out_dir, outputs);
        if (build_graph_cmd->parsed()) return cmd_build_graph(cfg, out_dir, outputs);
        if (retrieve->parsed()) return cmd_retrieve(cfg, out_dir, outputs);
        if (simulate->parsed())
            return cmd_simulate(cfg, seed, out_dir, jobs, outputs);
        if (evaluate->parsed())
            return cmd_evaluate(cfg, seed, out_dir, jobs, outputs);
        if (bench->parsed()) return cmd_bench(cfg, seed, out_dir, outputs);
        if (serve->parsed()) return cmd_serve(cfg, listen);
        return 1;
    } catch (const std::exception& e) {
        outputs.discard_all();
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
