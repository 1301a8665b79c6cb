#include "fwmerge/fw.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace fwmerge {

void FwConfig::validate() const {
    if (budget < 1) throw ConfigError("FW budget must be >= 1");
    if (epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
    if (line_search_points < 2) throw ConfigError("line search needs >= 2 grid points");
    if (inner_steps < 1) throw ConfigError("inner PGD needs >= 1 step");
    if (!(inner_lr > 0.0)) throw ConfigError("inner PGD learning rate must be > 0");
    if (lambda_granularity == LambdaGranularity::per_layer && variant != FwVariant::soft) {
        throw ConfigError("per-layer coefficients require the soft variant");
    }
    if (merge_fn == MergeFnKind::external) {
        if (!external_merge) throw ConfigError("external merge function not set");
        if (variant != FwVariant::hard) {
            throw ConfigError("external merge functions apply to the hard variant only");
        }
    }
}

ScoreTable compute_scores(const CheckpointPool& pool, const ParamSet& grad,
                          LmoGranularity granularity) {
    if (pool.empty()) throw EmptyPoolError("cannot score an empty pool");
    const Eigen::Index rows = granularity == LmoGranularity::layer_wise
                                  ? static_cast<Eigen::Index>(grad.layer_count())
                                  : 1;
    ScoreTable table;
    table.ids = pool.ids();
    table.scores.resize(rows, static_cast<Eigen::Index>(pool.size()));
    for (std::size_t i = 0; i < pool.size(); ++i) {
        // One checkpoint resident at a time; the handle dies each pass.
        LoadedCheckpoint v = pool.load(i);
        if (granularity == LmoGranularity::layer_wise) {
            table.scores.col(static_cast<Eigen::Index>(i)) = dot_per_layer(grad, v.get());
        } else {
            table.scores(0, static_cast<Eigen::Index>(i)) = dot(grad, v.get());
        }
    }
    return table;
}

std::vector<std::pair<std::string, double>> linear_scores(const CheckpointPool& pool,
                                                          const ParamSet& grad) {
    const ScoreTable table = compute_scores(pool, grad, LmoGranularity::task_wise);
    std::vector<std::pair<std::string, double>> out;
    out.reserve(table.ids.size());
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        out.emplace_back(table.ids[i], table.scores(0, static_cast<Eigen::Index>(i)));
    }
    return out;
}

LmoSelection select_topk(const ScoreTable& table, int k) {
    const Eigen::Index m = table.scores.cols();
    if (k < 1) throw ConfigError("top-k needs k >= 1");
    if (k > m) {
        throw ConfigError("top-k " + std::to_string(k) + " exceeds pool size " +
                          std::to_string(m));
    }
    LmoSelection sel;
    sel.ids = table.ids;
    sel.table.resize(table.scores.rows(), k);
    std::vector<int> order(static_cast<std::size_t>(m));
    for (Eigen::Index r = 0; r < table.scores.rows(); ++r) {
        std::iota(order.begin(), order.end(), 0);
        // Ascending score; equal scores keep pool order.
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return table.scores(r, a) < table.scores(r, b);
        });
        for (int j = 0; j < k; ++j) sel.table(r, j) = order[static_cast<std::size_t>(j)];
    }
    return sel;
}

LmoSelection lmo_hard(const CheckpointPool& pool, const ParamSet& grad,
                      LmoGranularity granularity) {
    return select_topk(compute_scores(pool, grad, granularity), 1);
}

LmoSelection lmo_topk(const CheckpointPool& pool, const ParamSet& grad, int k,
                      LmoGranularity granularity) {
    return select_topk(compute_scores(pool, grad, granularity), k);
}

double fw_gap(const ParamSet& grad, const ParamSet& theta, const ParamSet& s) {
    return dot(grad, theta) - dot(grad, s);
}

double line_search(const Objective& obj, const ParamSet& theta, const ParamSet& direction,
                   int points) {
    if (points < 2) throw ConfigError("line search needs >= 2 grid points");
    double best_gamma = 0.0;
    double best_loss = obj.loss(theta);
    for (int i = 1; i < points; ++i) {
        const double gamma = static_cast<double>(i) / static_cast<double>(points - 1);
        const double l = obj.loss(axpy(theta, gamma, direction));
        if (l < best_loss) {
            best_loss = l;
            best_gamma = gamma;
        }
    }
    return best_gamma;
}

ParamSet merge_convex(const ParamSet& theta, const ParamSet& s, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw ConfigError("merge_convex: gamma " + std::to_string(gamma) + " outside [0,1]");
    }
    theta.schema().require_same(s.schema(), "merge_convex");
    ParamSet out;
    for (std::size_t i = 0; i < theta.layer_count(); ++i) {
        const auto& info = theta.schema().layer(i);
        Vector v = (1.0 - gamma) * theta.layer(i) + gamma * s.layer(i);
        if (!v.allFinite()) {
            throw NumericsError("merge_convex produced non-finite values in '" + info.name + "'");
        }
        out.add_layer(info.name, info.shape, std::move(v));
    }
    return out;
}

ParamSet merge_soft(const ParamSet& theta, const std::vector<const ParamSet*>& vertices,
                    const LambdaSolution& lambda) {
    const Eigen::Index k = lambda.lambda.cols();
    if (static_cast<std::size_t>(k) != vertices.size()) {
        throw ConfigError("merge_soft: coefficient count does not match vertex count");
    }
    for (const auto* v : vertices) theta.schema().require_same(v->schema(), "merge_soft");
    for (Eigen::Index r = 0; r < lambda.lambda.rows(); ++r) {
        SimplexWeights{lambda.lambda.row(r).transpose(), lambda.mode}.validate();
    }
    if (lambda.per_layer &&
        lambda.lambda.rows() != static_cast<Eigen::Index>(theta.layer_count())) {
        throw ConfigError("merge_soft: per-layer coefficients do not match layer count");
    }

    ParamSet out;
    for (std::size_t i = 0; i < theta.layer_count(); ++i) {
        const auto& info = theta.schema().layer(i);
        const Eigen::Index r = lambda.per_layer ? static_cast<Eigen::Index>(i) : 0;
        Vector v = theta.layer(i);
        for (Eigen::Index j = 0; j < k; ++j) {
            v += lambda.lambda(r, j) * (vertices[static_cast<std::size_t>(j)]->layer(i) -
                                        theta.layer(i));
        }
        if (!v.allFinite()) {
            throw NumericsError("merge_soft produced non-finite values in '" + info.name + "'");
        }
        out.add_layer(info.name, info.shape, std::move(v));
    }
    return out;
}

namespace {

// theta + sum_j lambda_j (v_j - theta) without the validation overhead;
// used inside the inner PGD loop.
ParamSet blend(const ParamSet& theta, const std::vector<const ParamSet*>& vertices,
               const Eigen::MatrixXd& lambda, bool per_layer) {
    ParamSet out;
    for (std::size_t i = 0; i < theta.layer_count(); ++i) {
        const auto& info = theta.schema().layer(i);
        const Eigen::Index r = per_layer ? static_cast<Eigen::Index>(i) : 0;
        Vector v = theta.layer(i);
        for (Eigen::Index j = 0; j < lambda.cols(); ++j) {
            v += lambda(r, j) *
                 (vertices[static_cast<std::size_t>(j)]->layer(i) - theta.layer(i));
        }
        out.add_layer(info.name, info.shape, std::move(v));
    }
    return out;
}

}  // namespace

LambdaSolution inner_optimize_lambda(const Objective& obj, const ParamSet& theta,
                                     const std::vector<const ParamSet*>& vertices,
                                     const FwConfig& cfg) {
    if (vertices.empty()) throw ConfigError("inner optimization needs >= 1 vertex");
    const Eigen::Index k = static_cast<Eigen::Index>(vertices.size());
    const bool per_layer = cfg.lambda_granularity == LambdaGranularity::per_layer;
    const Eigen::Index rows = per_layer ? static_cast<Eigen::Index>(theta.layer_count()) : 1;

    Eigen::MatrixXd lam =
        Eigen::MatrixXd::Constant(rows, k, 1.0 / static_cast<double>(k));

    Eigen::MatrixXd best_lam = lam;
    double best_phi = std::numeric_limits<double>::infinity();

    for (int step = 0; step < cfg.inner_steps; ++step) {
        const ParamSet current = blend(theta, vertices, lam, per_layer);
        auto [phi, grad] = obj.loss_and_grad(current);
        if (!std::isfinite(phi)) {
            throw NumericsError("inner PGD hit a non-finite loss at step " +
                                std::to_string(step));
        }
        if (phi < best_phi) {
            best_phi = phi;
            best_lam = lam;
        }

        // d phi / d lambda_j = <grad l(theta(lambda)), v_j - theta>.
        Eigen::MatrixXd dlam(rows, k);
        if (per_layer) {
            const Vector g_theta = dot_per_layer(grad, theta);
            for (Eigen::Index j = 0; j < k; ++j) {
                dlam.col(j) =
                    dot_per_layer(grad, *vertices[static_cast<std::size_t>(j)]) - g_theta;
            }
        } else {
            const double g_theta = dot(grad, theta);
            for (Eigen::Index j = 0; j < k; ++j) {
                dlam(0, j) = dot(grad, *vertices[static_cast<std::size_t>(j)]) - g_theta;
            }
        }

        for (Eigen::Index r = 0; r < rows; ++r) {
            lam.row(r) = project_simplex(
                             (lam.row(r) - cfg.inner_lr * dlam.row(r)).transpose(),
                             cfg.simplex_mode)
                             .values.transpose();
        }
    }

    const double final_phi = obj.loss(blend(theta, vertices, lam, per_layer));
    if (final_phi < best_phi) {
        best_phi = final_phi;
        best_lam = lam;
    }

    // Floor the solution at the best single vertex: guarantees the top-k
    // step dominates the corresponding hard step even when PGD stalls on
    // a non-convex objective.
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(rows, k);
        basis.col(j).setOnes();
        const double phi_j = obj.loss(blend(theta, vertices, basis, per_layer));
        if (phi_j < best_phi) {
            best_phi = phi_j;
            best_lam = basis;
        }
    }

    return LambdaSolution{std::move(best_lam), cfg.simplex_mode, per_layer, best_phi};
}

void update_coords_convex(BarycentricCoords& coords, const LmoSelection& sel, double gamma) {
    if (coords.empty()) return;
    coords.weights *= (1.0 - gamma);
    for (Eigen::Index r = 0; r < coords.weights.rows(); ++r) {
        const Eigen::Index sr = sel.table.rows() > 1 ? r : 0;
        coords.weights(r, sel.table(sr, 0)) += gamma;
    }
}

void update_coords_soft(BarycentricCoords& coords, const LmoSelection& sel,
                        const Eigen::MatrixXd& lambda) {
    if (coords.empty()) return;
    for (Eigen::Index r = 0; r < coords.weights.rows(); ++r) {
        const Eigen::Index sr = sel.table.rows() > 1 ? r : 0;
        const Eigen::Index lr = lambda.rows() > 1 ? r : 0;
        const double total = lambda.row(lr).sum();
        coords.weights.row(r) *= (1.0 - total);
        for (Eigen::Index j = 0; j < lambda.cols(); ++j) {
            coords.weights(r, sel.table(sr, j)) += lambda(lr, j);
        }
    }
}

ParamSet reconstruct_from_coords(const BarycentricCoords& coords,
                                 const std::vector<const ParamSet*>& vertices) {
    if (coords.empty()) throw SimplexError("cannot reconstruct from empty coordinates");
    if (vertices.size() != coords.ids.size()) {
        throw ConfigError("vertex list does not match coordinate ids");
    }
    ParamSet out = ParamSet::zeros(vertices[0]->schema());
    for (std::size_t i = 0; i < out.layer_count(); ++i) {
        const Eigen::Index r =
            coords.weights.rows() > 1 ? static_cast<Eigen::Index>(i) : 0;
        for (std::size_t v = 0; v < vertices.size(); ++v) {
            out.layer(i) += coords.weights(r, static_cast<Eigen::Index>(v)) *
                            vertices[v]->layer(i);
        }
    }
    return out;
}

namespace {

// Assembles the parameter sets named by a selection table. Task-wise rows
// hold plain load handles; layer-wise rows stitch together composite
// vertices (rank j takes each layer from that layer's rank-j candidate),
// streamed one pool entry at a time.
struct MaterializedSelection {
    std::vector<LoadedCheckpoint> handles;       // task-wise path
    std::vector<ParamSet> composites;            // layer-wise path
    std::optional<SyntheticResidency> residency;

    std::vector<const ParamSet*> views() const {
        std::vector<const ParamSet*> out;
        if (!handles.empty()) {
            for (const auto& h : handles) out.push_back(&h.get());
        } else {
            for (const auto& c : composites) out.push_back(&c);
        }
        return out;
    }
};

MaterializedSelection materialize(const CheckpointPool& pool, const ParamSchema& schema,
                                  const LmoSelection& sel) {
    MaterializedSelection out;
    const Eigen::Index k = sel.table.cols();
    if (sel.table.rows() == 1) {
        for (Eigen::Index j = 0; j < k; ++j) {
            out.handles.push_back(pool.load(static_cast<std::size_t>(sel.table(0, j))));
        }
        return out;
    }

    out.composites.assign(static_cast<std::size_t>(k), ParamSet::zeros(schema));
    out.residency.emplace(pool.stats(), k);
    std::set<int> needed(sel.table.data(), sel.table.data() + sel.table.size());
    for (int idx : needed) {
        LoadedCheckpoint v = pool.load(static_cast<std::size_t>(idx));
        for (Eigen::Index l = 0; l < sel.table.rows(); ++l) {
            for (Eigen::Index j = 0; j < k; ++j) {
                if (sel.table(l, j) == idx) {
                    out.composites[static_cast<std::size_t>(j)].layer(
                        static_cast<std::size_t>(l)) = v->layer(static_cast<std::size_t>(l));
                }
            }
        }
    }
    return out;
}

// Best attainable linear value over the candidate set: the row-wise
// minimum, summed across rows in the layer-wise case.
double best_linear_value(const ScoreTable& table) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < table.scores.rows(); ++r) {
        total += table.scores.row(r).minCoeff();
    }
    return total;
}

}  // namespace

FwResult run_fw(const FwConfig& cfg, const CheckpointPool& pool, const Objective& obj,
                const ParamSet& theta0) {
    cfg.validate();
    const ParamSchema& schema = pool.check_schema();
    schema.require_same(theta0.schema(), "initial model vs pool");
    schema.require_same(obj.schema(), "objective vs pool");

    // Algorithm step 0: make the initial model a vertex unless the pool
    // already contains it (matched by content hash, not id).
    CheckpointPool candidates = pool.clone_sharing_stats();
    const std::uint64_t h0 = content_hash(theta0);
    std::ptrdiff_t theta0_match = -1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (content_hash(pool.load(i).get()) == h0) {
            theta0_match = static_cast<std::ptrdiff_t>(i);
            break;
        }
    }
    const bool theta0_in_pool = theta0_match >= 0;
    std::string theta0_id = cfg.theta0_id;
    if (!theta0_in_pool) {
        while (candidates.find(theta0_id) >= 0) theta0_id += "_";
        candidates.add_in_memory(theta0_id, theta0);
    }

    const int n_candidates = static_cast<int>(candidates.size());
    const int k = cfg.variant == FwVariant::soft
                      ? (cfg.top_k > 0 ? cfg.top_k : std::min(4, n_candidates))
                      : 1;
    if (k > n_candidates) {
        throw ConfigError("top-k " + std::to_string(k) + " exceeds candidate count " +
                          std::to_string(n_candidates));
    }

    const bool track_coords = cfg.merge_fn == MergeFnKind::convex;
    const bool layer_rows = cfg.lmo == LmoGranularity::layer_wise ||
                            cfg.lambda_granularity == LambdaGranularity::per_layer;
    const Eigen::Index coord_rows =
        layer_rows ? static_cast<Eigen::Index>(schema.layer_count()) : 1;

    FwResult result;
    result.vertex_ids = candidates.ids();
    result.theta0_appended = !theta0_in_pool;
    result.feasibility_unverified = !track_coords;

    BarycentricCoords coords;
    if (track_coords) {
        const Eigen::Index theta0_idx =
            theta0_in_pool ? static_cast<Eigen::Index>(theta0_match)
                           : static_cast<Eigen::Index>(candidates.size()) - 1;
        coords = BarycentricCoords::delta(result.vertex_ids, theta0_idx, coord_rows);
    }

    ParamSet theta = theta0;
    result.stop_reason = StopReason::budget_exhausted;

    for (int t = 0; t < cfg.budget; ++t) {
        auto [loss_before, grad] = obj.loss_and_grad(theta);
        IterationRecord rec;
        rec.t = t;
        rec.scores = compute_scores(candidates, grad, cfg.lmo);
        rec.loss_before = loss_before;
        rec.gap = dot(grad, theta) - best_linear_value(rec.scores);

        if (cfg.variant == FwVariant::hard) {
            rec.selected = select_topk(rec.scores, 1);
            if (rec.gap <= cfg.epsilon) {
                rec.gamma = 0.0;
                rec.loss_after = loss_before;
                rec.coords = coords;
                result.trace.push_back(std::move(rec));
                result.stop_reason = StopReason::gap_below_epsilon;
                break;
            }
            MaterializedSelection sel = materialize(candidates, schema, rec.selected);
            const ParamSet& s_t = *sel.views()[0];
            const ParamSet direction = axpy(s_t, -1.0, theta);
            const double gamma = line_search(obj, theta, direction, cfg.line_search_points);
            if (cfg.merge_fn == MergeFnKind::convex) {
                theta = merge_convex(theta, s_t, gamma);
                update_coords_convex(coords, rec.selected, gamma);
            } else {
                theta = cfg.external_merge(theta, s_t, gamma);
            }
            rec.gamma = gamma;
            rec.loss_after = obj.loss(theta);
            rec.coords = coords;
            result.trace.push_back(std::move(rec));
        } else {
            rec.selected = select_topk(rec.scores, k);
            MaterializedSelection sel = materialize(candidates, schema, rec.selected);
            const LambdaSolution lam = inner_optimize_lambda(obj, theta, sel.views(), cfg);
            theta = merge_soft(theta, sel.views(), lam);
            update_coords_soft(coords, rec.selected, lam.lambda);
            rec.lambda = lam.lambda;
            rec.gamma = std::numeric_limits<double>::quiet_NaN();
            rec.loss_after = lam.phi;
            rec.coords = coords;
            const double gap = rec.gap;
            result.trace.push_back(std::move(rec));
            if (gap <= cfg.epsilon) {
                result.stop_reason = StopReason::gap_below_epsilon;
                break;
            }
        }
    }

    result.merged = std::move(theta);
    result.final_coords = std::move(coords);
    return result;
}

}  // namespace fwmerge
