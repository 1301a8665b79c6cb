#include "fwmerge/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "fwmerge/baselines.hpp"
#include "fwmerge/checkpoint_io.hpp"
#include "fwmerge/trace.hpp"

namespace fwmerge {

namespace {

using Json = nlohmann::json;

std::string format_accuracy(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string format_score(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

long elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
}

}  // namespace

std::string PlanEntry::checkpoint_id() const {
    return task_id + "_" + std::to_string(seed) + "_" + std::to_string(epochs);
}

std::vector<SuiteTask> parse_suite(const Json& suite) {
    if (!suite.is_array() || suite.empty()) {
        throw ConfigError("task suite must be a non-empty array");
    }
    std::vector<SuiteTask> tasks;
    std::set<std::string> ids;
    std::set<std::uint64_t> seeds;
    for (const auto& item : suite) {
        SuiteTask t;
        try {
            t.spec.task_id = item.at("task_id").get<std::string>();
            t.spec.seed = item.at("seed").get<std::uint64_t>();
            t.spec.input_dim = item.at("input_dim").get<int>();
            t.spec.num_classes = item.at("num_classes").get<int>();
            t.n_train = item.at("n_train").get<int>();
            t.n_test = item.at("n_test").get<int>();
            if (item.contains("mean_radius")) t.spec.mean_radius = item["mean_radius"];
            if (item.contains("noise_sigma")) t.spec.noise_sigma = item["noise_sigma"];
        } catch (const Json::exception& e) {
            throw ConfigError(std::string("malformed suite entry: ") + e.what());
        }
        if (!ids.insert(t.spec.task_id).second) {
            throw ConfigError("duplicate task id '" + t.spec.task_id + "'");
        }
        if (!seeds.insert(t.spec.seed).second) {
            throw ConfigError("tasks must have disjoint seeds ('" + t.spec.task_id + "')");
        }
        tasks.push_back(std::move(t));
    }
    return tasks;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
    Json j;
    try {
        is >> j;
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    return from_json(j, path.parent_path());
}

ExperimentConfig ExperimentConfig::from_json(const Json& j,
                                             const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    try {
        cfg.suite = parse_suite(j.at("suite"));
        if (j.contains("hidden")) cfg.hidden = j["hidden"].get<std::vector<int>>();
        if (j.contains("theta0_seed")) cfg.theta0_seed = j["theta0_seed"].get<std::uint64_t>();
        for (const auto& p : j.value("pool_plan", Json::array())) {
            PlanEntry e;
            e.task_id = p.at("task_id").get<std::string>();
            e.seed = p.value("seed", 0ull);
            e.epochs = p.value("epochs", 150);
            e.lr = p.value("lr", 0.05);
            cfg.pool_plan.push_back(std::move(e));
        }
        cfg.eval_tasks = j.value("eval_tasks", std::vector<std::string>{});
        for (const auto& m : j.value("methods", Json::array())) {
            MethodSpec spec;
            spec.name = m.at("name").get<std::string>();
            spec.params = m;
            cfg.methods.push_back(std::move(spec));
        }
        cfg.sizes = j.value("sizes", std::vector<int>{});
        cfg.relevance_mode = j.value("relevance", "irrelevant");
        cfg.out_dir = base_dir / j.value("out_dir", "out");
        if (j.contains("cache_dir")) cfg.cache_dir = base_dir / j["cache_dir"].get<std::string>();
        cfg.zero_timings = j.value("zero_timings", false);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed experiment config: ") + e.what());
    }

    if (const char* env = std::getenv("FW_MERGE_CACHE")) cfg.cache_dir = env;
    if (cfg.cache_dir.empty()) cfg.cache_dir = cfg.out_dir / "cache";

    std::set<std::string> suite_ids;
    for (const auto& t : cfg.suite) suite_ids.insert(t.spec.task_id);
    for (const auto& id : cfg.eval_tasks) {
        if (!suite_ids.count(id)) {
            throw ConfigError("evaluation task '" + id + "' is not in the suite");
        }
    }
    for (const auto& e : cfg.pool_plan) {
        if (!suite_ids.count(e.task_id)) {
            throw ConfigError("pool plan references unknown task '" + e.task_id + "'");
        }
    }
    if (cfg.relevance_mode != "relevant" && cfg.relevance_mode != "irrelevant") {
        throw ConfigError("relevance must be 'relevant' or 'irrelevant'");
    }
    const int in_dim = cfg.suite[0].spec.input_dim;
    const int classes = cfg.suite[0].spec.num_classes;
    for (const auto& t : cfg.suite) {
        if (t.spec.input_dim != in_dim || t.spec.num_classes != classes) {
            throw ConfigError("all suite tasks must share input_dim and num_classes");
        }
    }
    return cfg;
}

MlpArchitecture ExperimentConfig::architecture() const {
    MlpArchitecture arch;
    arch.input_dim = suite[0].spec.input_dim;
    arch.hidden = hidden;
    arch.num_classes = suite[0].spec.num_classes;
    return arch;
}

const SuiteTask& ExperimentConfig::task(const std::string& id) const {
    for (const auto& t : suite) {
        if (t.spec.task_id == id) return t;
    }
    throw ConfigError("unknown task '" + id + "'");
}

std::filesystem::path ensure_checkpoint(const ExperimentConfig& cfg, const PlanEntry& entry) {
    std::filesystem::create_directories(cfg.cache_dir);
    const auto path = cfg.cache_dir / (entry.checkpoint_id() + ".fwck");
    const ParamSchema expected = cfg.architecture().schema();
    if (std::filesystem::exists(path)) {
        try {
            expected.require_same(read_checkpoint_schema(path), "cached checkpoint");
            return path;
        } catch (const MergeError& e) {
            std::cerr << "warning: regenerating corrupt cache entry " << path << " ("
                      << e.what() << ")\n";
        }
    }
    const SuiteTask& t = cfg.task(entry.task_id);
    auto [train, test] = generate_task(t.spec, t.n_train, t.n_test, entry.seed);
    const ParamSet theta0 = init_mlp_params(cfg.architecture(), cfg.theta0_seed);
    const ParamSet tuned = finetune(theta0, train, entry.epochs, entry.lr);
    save_checkpoint(tuned, path);
    return path;
}

MultiTaskObjective calibration_objective(const ExperimentConfig& cfg) {
    if (cfg.eval_tasks.empty()) throw ConfigError("no evaluation tasks configured");
    std::vector<CalibrationBatch> batches;
    for (const auto& id : cfg.eval_tasks) {
        const SuiteTask& t = cfg.task(id);
        batches.push_back(generate_task(t.spec, t.n_train, t.n_test).first);
    }
    return MultiTaskObjective(cfg.architecture(), std::move(batches));
}

FwConfig fw_config_from_json(const Json& params, FwVariant variant) {
    FwConfig fw;
    fw.variant = variant;
    const std::string lmo = params.value("lmo", "task");
    if (lmo == "task") {
        fw.lmo = LmoGranularity::task_wise;
    } else if (lmo == "layer") {
        fw.lmo = LmoGranularity::layer_wise;
    } else {
        throw ConfigError("lmo must be 'task' or 'layer'");
    }
    fw.budget = params.value("budget", 10);
    fw.epsilon = params.value("epsilon", 1e-6);
    fw.top_k = params.value("k", 0);
    fw.inner_steps = params.value("inner_steps", 50);
    fw.inner_lr = params.value("inner_lr", 0.1);
    const std::string simplex = params.value("simplex", "unit");
    if (simplex == "unit") {
        fw.simplex_mode = SimplexMode::unit;
    } else if (simplex == "capped") {
        fw.simplex_mode = SimplexMode::capped;
    } else {
        throw ConfigError("simplex must be 'unit' or 'capped'");
    }
    const std::string lam = params.value("lambda_granularity", "per-vertex");
    if (lam == "per-vertex") {
        fw.lambda_granularity = LambdaGranularity::per_vertex;
    } else if (lam == "per-layer") {
        fw.lambda_granularity = LambdaGranularity::per_layer;
    } else {
        throw ConfigError("lambda_granularity must be 'per-vertex' or 'per-layer'");
    }
    fw.line_search_points = params.value("line_search_points", 21);
    return fw;
}

ParamSet run_method(const MethodSpec& method, const CheckpointPool& pool,
                    const ParamSet& theta0, const MultiTaskObjective& obj,
                    const std::filesystem::path& trace_path) {
    if (method.name == "weight-average") {
        return weight_average(pool);
    }
    if (method.name == "task-arithmetic") {
        return task_arithmetic(theta0, pool, method.params.value("lambda", 0.3));
    }
    if (method.name == "ties") {
        TiesConfig ties;
        ties.density = method.params.value("density", 0.5);
        ties.scaling = method.params.value("lambda", 0.5);
        return ties_merge(theta0, pool, ties);
    }
    if (method.name == "fw-hard" || method.name == "fw-soft") {
        const FwConfig fw = fw_config_from_json(
            method.params, method.name == "fw-hard" ? FwVariant::hard : FwVariant::soft);
        FwResult result = run_fw(fw, pool, obj, theta0);
        if (!trace_path.empty()) {
            write_trace_file(result, fw, result.merged.schema(), trace_path.string());
        }
        return std::move(result.merged);
    }
    throw ConfigError("unknown method '" + method.name + "'");
}

void run_scaling(const ExperimentConfig& cfg) {
    if (cfg.methods.empty()) throw ConfigError("methods list is empty");
    if (cfg.sizes.empty()) throw ConfigError("sizes list is empty");
    for (std::size_t i = 1; i < cfg.sizes.size(); ++i) {
        if (cfg.sizes[i] <= cfg.sizes[i - 1]) throw ConfigError("sizes must be ascending");
    }
    const int max_size = cfg.sizes.back();
    if (max_size > static_cast<int>(cfg.pool_plan.size())) {
        throw ConfigError("largest size exceeds the pool plan");
    }

    std::filesystem::create_directories(cfg.out_dir);

    // Fine-tune (or load) every checkpoint the sweep needs.
    std::vector<std::filesystem::path> checkpoint_paths;
    for (int i = 0; i < max_size; ++i) {
        checkpoint_paths.push_back(ensure_checkpoint(cfg, cfg.pool_plan[i]));
    }

    const ParamSet theta0 = init_mlp_params(cfg.architecture(), cfg.theta0_seed);
    const MultiTaskObjective obj = calibration_objective(cfg);

    std::vector<std::pair<std::string, CalibrationBatch>> eval_batches;
    for (const auto& id : cfg.eval_tasks) {
        const SuiteTask& t = cfg.task(id);
        eval_batches.emplace_back(id, generate_task(t.spec, t.n_train, t.n_test).second);
    }

    std::ostringstream report;
    report << "method,pool_size,relevance,task_id,accuracy,mean_accuracy,wall_ms,"
              "peak_residency\n";

    for (const auto& method : cfg.methods) {
        for (int size : cfg.sizes) {
            CheckpointPool pool;
            for (int i = 0; i < size; ++i) {
                pool.add_file(cfg.pool_plan[i].checkpoint_id(), checkpoint_paths[i]);
            }
            pool.check_schema();
            pool.stats().reset();

            const auto trace_path =
                cfg.out_dir /
                ("trace_" + method.name + "_" + std::to_string(size) + ".jsonl");
            const bool is_fw = method.name.rfind("fw-", 0) == 0;

            const auto start = std::chrono::steady_clock::now();
            const ParamSet merged =
                run_method(method, pool, theta0, obj, is_fw ? trace_path : "");
            const long wall = cfg.zero_timings ? 0 : elapsed_ms(start);
            const long residency = std::max<long>(1, pool.stats().peak_resident());

            double mean_acc = 0.0;
            std::vector<double> accs;
            for (const auto& [id, batch] : eval_batches) {
                const double a = accuracy(merged, batch);
                accs.push_back(a);
                mean_acc += a;
            }
            mean_acc /= static_cast<double>(eval_batches.size());

            for (std::size_t i = 0; i < eval_batches.size(); ++i) {
                report << method.name << ',' << size << ',' << cfg.relevance_mode << ','
                       << eval_batches[i].first << ',' << format_accuracy(accs[i]) << ','
                       << format_accuracy(mean_acc) << ',' << wall << ',' << residency
                       << '\n';
            }
            std::cerr << "scaling: " << method.name << " size " << size << " mean_acc "
                      << format_accuracy(mean_acc) << " residency " << residency << "\n";
        }
    }

    std::ofstream os(cfg.out_dir / "report.csv", std::ios::trunc);
    if (!os) throw ConfigError("cannot write report.csv");
    os << report.str();
}

double run_relevance(const ExperimentConfig& cfg) {
    if (cfg.suite.size() < 2) throw ConfigError("relevance analysis needs >= 2 tasks");
    if (cfg.pool_plan.empty()) throw ConfigError("relevance analysis needs a pool plan");
    if (cfg.eval_tasks.empty()) throw ConfigError("no evaluation tasks configured");

    std::filesystem::create_directories(cfg.out_dir);
    CheckpointPool pool;
    for (const auto& entry : cfg.pool_plan) {
        pool.add_file(entry.checkpoint_id(), ensure_checkpoint(cfg, entry));
    }
    pool.check_schema();

    const ParamSet theta0 = init_mlp_params(cfg.architecture(), cfg.theta0_seed);

    std::ofstream os(cfg.out_dir / "relevance.csv", std::ios::trunc);
    if (!os) throw ConfigError("cannot write relevance.csv");
    os << "task_id";
    for (std::size_t i = 0; i < pool.size(); ++i) os << ',' << pool.id(i);
    os << '\n';

    int own_minimal = 0;
    for (const auto& id : cfg.eval_tasks) {
        const SuiteTask& t = cfg.task(id);
        const CalibrationBatch train = generate_task(t.spec, t.n_train, t.n_test).first;
        const MultiTaskObjective task_obj(cfg.architecture(), {train});
        const ParamSet grad = task_obj.loss_and_grad(theta0).second;
        const auto scores = linear_scores(pool, grad);

        os << id;
        std::size_t argmin = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            os << ',' << format_score(scores[i].second);
            if (scores[i].second < scores[argmin].second) argmin = i;
        }
        os << '\n';
        if (cfg.pool_plan[argmin].task_id == id) ++own_minimal;
    }
    const double fraction =
        static_cast<double>(own_minimal) / static_cast<double>(cfg.eval_tasks.size());

    std::ofstream summary(cfg.out_dir / "relevance_summary.csv", std::ios::trunc);
    summary << "own_min_fraction\n" << format_accuracy(fraction) << '\n';
    return fraction;
}

}  // namespace fwmerge
