// fwmerge: merge pools of fine-tuned checkpoints by Frank-Wolfe
// optimization over their convex hull, plus an experiment harness.
//
// Exit codes: 0 success, 2 configuration/input error, 3 numeric error.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

#include "fwmerge/baselines.hpp"
#include "fwmerge/checkpoint_io.hpp"
#include "fwmerge/experiment.hpp"
#include "fwmerge/trace.hpp"

namespace {

using namespace fwmerge;

// Objective file: {"suite": [...], "hidden": [...], "tasks": [ids]}.
// `tasks` defaults to every suite task.
MultiTaskObjective load_objective(const std::filesystem::path& path, ParamSchema* schema_out) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open objective file '" + path.string() + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    const auto suite = parse_suite(j.at("suite"));
    MlpArchitecture arch;
    arch.input_dim = suite[0].spec.input_dim;
    arch.num_classes = suite[0].spec.num_classes;
    if (j.contains("hidden")) arch.hidden = j["hidden"].get<std::vector<int>>();

    std::vector<std::string> task_ids = j.value("tasks", std::vector<std::string>{});
    if (task_ids.empty()) {
        for (const auto& t : suite) task_ids.push_back(t.spec.task_id);
    }
    std::vector<CalibrationBatch> batches;
    for (const auto& id : task_ids) {
        const SuiteTask* found = nullptr;
        for (const auto& t : suite) {
            if (t.spec.task_id == id) found = &t;
        }
        if (!found) throw ConfigError("objective task '" + id + "' is not in the suite");
        batches.push_back(generate_task(found->spec, found->n_train, found->n_test).first);
    }
    if (schema_out) *schema_out = arch.schema();
    return MultiTaskObjective(arch, std::move(batches));
}

int cmd_merge(const std::string& pool_dir, const std::string& base_path,
              const std::string& objective_path, const FwConfig& fw,
              const std::string& merge_fn_name, double ties_density,
              const std::string& out_path, const std::string& trace_path) {
    CheckpointPool pool = CheckpointPool::from_directory(pool_dir);
    pool.check_schema();
    const ParamSet theta0 = load_checkpoint(base_path);
    const MultiTaskObjective obj = load_objective(objective_path, nullptr);

    FwConfig cfg = fw;
    if (merge_fn_name == "ties") {
        cfg.merge_fn = MergeFnKind::external;
        cfg.external_merge = [ties_density](const ParamSet& current, const ParamSet& vertex,
                                            double gamma) {
            CheckpointPool single;
            single.add_in_memory("vertex", vertex);
            return ties_merge(current, single, TiesConfig{ties_density, gamma});
        };
    } else if (merge_fn_name != "convex") {
        throw ConfigError("unknown merge function '" + merge_fn_name + "'");
    }

    FwResult result = run_fw(cfg, pool, obj, theta0);
    save_checkpoint(result.merged, out_path);
    if (!trace_path.empty()) {
        write_trace_file(result, cfg, result.merged.schema(), trace_path);
    }
    std::cerr << "merged " << pool.size() << " checkpoints in " << result.trace.size()
              << " iterations (" << to_string(result.stop_reason) << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frank-Wolfe checkpoint merging"};
    app.require_subcommand(1);

    // --- merge ---
    auto* merge = app.add_subcommand("merge", "merge a pool of FWCK checkpoints");
    std::string pool_dir, base_path, objective_path, out_path, trace_path;
    std::string variant = "hard", lmo = "task", simplex = "unit", lambda_gran = "per-vertex";
    std::string merge_fn = "convex";
    FwConfig fw;
    double ties_density = 0.5;
    merge->add_option("--pool", pool_dir, "directory of .fwck pool checkpoints")->required();
    merge->add_option("--base", base_path, "initial model checkpoint")->required();
    merge->add_option("--objective", objective_path, "objective JSON (task suite)")->required();
    merge->add_option("--variant", variant, "hard|soft");
    merge->add_option("--lmo", lmo, "task|layer");
    merge->add_option("--k", fw.top_k, "soft top-k (0: min(4, pool))");
    merge->add_option("--budget", fw.budget, "FW iteration budget");
    merge->add_option("--epsilon", fw.epsilon, "gap stopping threshold");
    merge->add_option("--simplex", simplex, "unit|capped");
    merge->add_option("--lambda-granularity", lambda_gran, "per-vertex|per-layer");
    merge->add_option("--inner-steps", fw.inner_steps, "inner PGD steps");
    merge->add_option("--inner-lr", fw.inner_lr, "inner PGD learning rate");
    merge->add_option("--line-search-points", fw.line_search_points, "grid points on [0,1]");
    merge->add_option("--merge-fn", merge_fn, "convex|ties");
    merge->add_option("--ties-density", ties_density, "density for --merge-fn ties");
    merge->add_option("--out", out_path, "output FWCK path")->required();
    merge->add_option("--trace", trace_path, "JSONL trace path");

    // --- scaling ---
    auto* scaling = app.add_subcommand("scaling", "pool-size sweep over merging methods");
    std::string scaling_config;
    scaling->add_option("--config", scaling_config, "experiment config JSON")->required();

    // --- relevance ---
    auto* relevance = app.add_subcommand("relevance", "linear-score relevance matrix");
    std::string relevance_config;
    relevance->add_option("--config", relevance_config, "experiment config JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (merge->parsed()) {
            if (variant == "hard") {
                fw.variant = FwVariant::hard;
            } else if (variant == "soft") {
                fw.variant = FwVariant::soft;
            } else {
                throw ConfigError("variant must be 'hard' or 'soft'");
            }
            if (lmo == "task") {
                fw.lmo = LmoGranularity::task_wise;
            } else if (lmo == "layer") {
                fw.lmo = LmoGranularity::layer_wise;
            } else {
                throw ConfigError("lmo must be 'task' or 'layer'");
            }
            if (simplex == "unit") {
                fw.simplex_mode = SimplexMode::unit;
            } else if (simplex == "capped") {
                fw.simplex_mode = SimplexMode::capped;
            } else {
                throw ConfigError("simplex must be 'unit' or 'capped'");
            }
            if (lambda_gran == "per-vertex") {
                fw.lambda_granularity = LambdaGranularity::per_vertex;
            } else if (lambda_gran == "per-layer") {
                fw.lambda_granularity = LambdaGranularity::per_layer;
            } else {
                throw ConfigError("lambda-granularity must be 'per-vertex' or 'per-layer'");
            }
            return cmd_merge(pool_dir, base_path, objective_path, fw, merge_fn, ties_density,
                             out_path, trace_path);
        }
        if (scaling->parsed()) {
            run_scaling(ExperimentConfig::load(scaling_config));
            return 0;
        }
        if (relevance->parsed()) {
            const double fraction = run_relevance(ExperimentConfig::load(relevance_config));
            std::cout << "own_min_fraction " << fraction << "\n";
            return 0;
        }
    } catch (const NumericsError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const MergeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
