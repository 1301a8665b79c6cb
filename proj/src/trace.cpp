#include "fwmerge/trace.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <ostream>

namespace fwmerge {

namespace {

using Json = nlohmann::ordered_json;

// Row r of `m` keyed by id (one row) or nested under layer names.
Json matrix_by_id(const Eigen::MatrixXd& m, const std::vector<std::string>& ids,
                  const std::vector<LayerInfo>& layers) {
    auto row_obj = [&ids](const Eigen::MatrixXd& mat, Eigen::Index r) {
        Json obj = Json::object();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            obj[ids[i]] = mat(r, static_cast<Eigen::Index>(i));
        }
        return obj;
    };
    if (m.rows() == 1) return row_obj(m, 0);
    Json obj = Json::object();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        obj[layers[static_cast<std::size_t>(r)].name] = row_obj(m, r);
    }
    return obj;
}

Json selection_json(const LmoSelection& sel, const std::vector<LayerInfo>& layers) {
    auto row_ids = [&sel](Eigen::Index r) {
        Json arr = Json::array();
        for (Eigen::Index j = 0; j < sel.table.cols(); ++j) {
            arr.push_back(sel.ids[static_cast<std::size_t>(sel.table(r, j))]);
        }
        return arr;
    };
    if (sel.table.rows() == 1) return row_ids(0);
    Json obj = Json::object();
    for (Eigen::Index r = 0; r < sel.table.rows(); ++r) {
        obj[layers[static_cast<std::size_t>(r)].name] = row_ids(r);
    }
    return obj;
}

Json lambda_json(const Eigen::MatrixXd& lambda, const std::vector<LayerInfo>& layers) {
    auto row_arr = [&lambda](Eigen::Index r) {
        Json arr = Json::array();
        for (Eigen::Index j = 0; j < lambda.cols(); ++j) arr.push_back(lambda(r, j));
        return arr;
    };
    if (lambda.rows() == 1) return row_arr(0);
    Json obj = Json::object();
    for (Eigen::Index r = 0; r < lambda.rows(); ++r) {
        obj[layers[static_cast<std::size_t>(r)].name] = row_arr(r);
    }
    return obj;
}

}  // namespace

std::string to_string(FwVariant v) { return v == FwVariant::hard ? "hard" : "soft"; }
std::string to_string(LmoGranularity g) {
    return g == LmoGranularity::task_wise ? "task" : "layer";
}
std::string to_string(LambdaGranularity g) {
    return g == LambdaGranularity::per_vertex ? "per-vertex" : "per-layer";
}
std::string to_string(SimplexMode m) { return m == SimplexMode::unit ? "unit" : "capped"; }
std::string to_string(MergeFnKind m) { return m == MergeFnKind::convex ? "convex" : "external"; }
std::string to_string(StopReason r) {
    return r == StopReason::gap_below_epsilon ? "gap-below-epsilon" : "budget-exhausted";
}

void write_trace(const FwResult& result, const FwConfig& cfg, const ParamSchema& schema,
                 std::ostream& os) {
    const auto& layers = schema.layers();

    Json header;
    header["type"] = "header";
    Json config;
    config["variant"] = to_string(cfg.variant);
    config["lmo"] = to_string(cfg.lmo);
    config["budget"] = cfg.budget;
    config["epsilon"] = cfg.epsilon;
    config["k"] = cfg.top_k;
    config["inner_steps"] = cfg.inner_steps;
    config["inner_lr"] = cfg.inner_lr;
    config["simplex_mode"] = to_string(cfg.simplex_mode);
    config["lambda_granularity"] = to_string(cfg.lambda_granularity);
    config["line_search_points"] = cfg.line_search_points;
    config["merge_fn"] = to_string(cfg.merge_fn);
    header["config"] = std::move(config);
    header["vertex_ids"] = result.vertex_ids;
    header["theta0_appended"] = result.theta0_appended;
    header["feasibility_unverified"] = result.feasibility_unverified;
    header["stop_reason"] = to_string(result.stop_reason);
    os << header.dump() << "\n";

    for (const auto& rec : result.trace) {
        Json j;
        j["type"] = "iteration";
        j["t"] = rec.t;
        j["scores"] = matrix_by_id(rec.scores.scores, rec.scores.ids, layers);
        j["selected"] = selection_json(rec.selected, layers);
        j["gap"] = rec.gap;
        if (rec.lambda.size() > 0) {
            j["lambda"] = lambda_json(rec.lambda, layers);
        } else {
            j["gamma"] = rec.gamma;
        }
        j["loss_before"] = rec.loss_before;
        j["loss_after"] = rec.loss_after;
        if (!rec.coords.empty()) {
            j["coords"] = matrix_by_id(rec.coords.weights, rec.coords.ids, layers);
        }
        os << j.dump() << "\n";
    }
}

void write_trace_file(const FwResult& result, const FwConfig& cfg, const ParamSchema& schema,
                      const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot open trace file '" + path + "'");
    write_trace(result, cfg, schema, os);
}

}  // namespace fwmerge
