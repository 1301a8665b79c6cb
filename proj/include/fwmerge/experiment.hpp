#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "fwmerge/fw.hpp"
#include "fwmerge/objective.hpp"

namespace fwmerge {

struct SuiteTask {
    TaskSpec spec;
    int n_train = 100;
    int n_test = 400;
};

// One fine-tuned checkpoint to put in the pool: which task, which sample
// stream, how long to train. Cached as cache/<task>_<seed>_<epochs>.fwck.
struct PlanEntry {
    std::string task_id;
    std::uint64_t seed = 0;
    int epochs = 150;
    double lr = 0.05;

    std::string checkpoint_id() const;
};

struct MethodSpec {
    std::string name;  // fw-hard | fw-soft | weight-average | task-arithmetic | ties
    nlohmann::json params;
};

struct ExperimentConfig {
    std::vector<SuiteTask> suite;
    std::vector<int> hidden{32, 32};
    std::uint64_t theta0_seed = 7;
    std::vector<PlanEntry> pool_plan;
    std::vector<std::string> eval_tasks;
    std::vector<MethodSpec> methods;
    std::vector<int> sizes;
    std::string relevance_mode = "irrelevant";  // relevant | irrelevant
    std::filesystem::path out_dir;
    std::filesystem::path cache_dir;  // empty -> out_dir/cache; FW_MERGE_CACHE overrides
    bool zero_timings = false;

    static ExperimentConfig load(const std::filesystem::path& path);
    static ExperimentConfig from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir);

    MlpArchitecture architecture() const;
    const SuiteTask& task(const std::string& id) const;
};

std::vector<SuiteTask> parse_suite(const nlohmann::json& suite);

// Loads the cached checkpoint for `entry`, fine-tuning and caching it
// first if missing or unreadable.
std::filesystem::path ensure_checkpoint(const ExperimentConfig& cfg, const PlanEntry& entry);

// The calibration objective over the configured evaluation tasks.
MultiTaskObjective calibration_objective(const ExperimentConfig& cfg);

// Runs every configured method at every pool size and writes
// out_dir/report.csv plus one JSONL trace per FW cell. Row order is
// (method, size, task); wall times are zeroed when cfg.zero_timings.
void run_scaling(const ExperimentConfig& cfg);

// Per-task linear scores of every pool checkpoint under that task's
// gradient at theta0; writes out_dir/relevance.csv and returns the
// fraction of tasks whose own checkpoint attains the minimum.
double run_relevance(const ExperimentConfig& cfg);

// Builds the merged model for one method spec; exposed for tests.
ParamSet run_method(const MethodSpec& method, const CheckpointPool& pool,
                    const ParamSet& theta0, const MultiTaskObjective& obj,
                    const std::filesystem::path& trace_path);

FwConfig fw_config_from_json(const nlohmann::json& params, FwVariant variant);

}  // namespace fwmerge
