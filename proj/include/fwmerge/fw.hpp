#pragma once

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fwmerge/barycentric.hpp"
#include "fwmerge/checkpoint_pool.hpp"
#include "fwmerge/objective.hpp"
#include "fwmerge/simplex.hpp"

namespace fwmerge {

enum class FwVariant { hard, soft };
enum class LmoGranularity { task_wise, layer_wise };
enum class LambdaGranularity { per_vertex, per_layer };
enum class MergeFnKind { convex, external };
enum class StopReason { gap_below_epsilon, budget_exhausted };

// Pluggable merging function for the hard variant. May leave the convex
// hull; when installed, barycentric tracking is off and the trace says so.
using ExternalMergeFn =
    std::function<ParamSet(const ParamSet& current, const ParamSet& vertex, double gamma)>;

struct FwConfig {
    FwVariant variant = FwVariant::hard;
    LmoGranularity lmo = LmoGranularity::task_wise;
    int budget = 10;          // FW iterations T
    double epsilon = 1e-6;    // gap threshold for early stop
    int top_k = 0;            // soft variant; 0 means min(4, candidates)
    int inner_steps = 50;     // projected gradient descent steps
    double inner_lr = 0.1;
    SimplexMode simplex_mode = SimplexMode::unit;
    LambdaGranularity lambda_granularity = LambdaGranularity::per_vertex;
    int line_search_points = 21;
    MergeFnKind merge_fn = MergeFnKind::convex;
    ExternalMergeFn external_merge;
    std::string theta0_id = "theta0";

    void validate() const;
};

// Per-candidate linear scores <grad, v_i>; rows: 1 (task-wise) or one per
// layer (layer-wise). Column order is pool order.
struct ScoreTable {
    std::vector<std::string> ids;
    Eigen::MatrixXd scores;
};

// Candidate indices chosen by an LMO, ascending by (score, index).
// rows match the granularity of the score table; cols = k.
struct LmoSelection {
    std::vector<std::string> ids;  // candidate id list the indices refer to
    Eigen::MatrixXi table;
};

struct LambdaSolution {
    Eigen::MatrixXd lambda;  // rows: 1 or layer count; cols: k
    SimplexMode mode = SimplexMode::unit;
    bool per_layer = false;
    double phi = 0.0;  // objective value at the returned coefficients
};

struct IterationRecord {
    int t = 0;
    ScoreTable scores;
    LmoSelection selected;
    double gap = 0.0;
    double gamma = 0.0;             // hard variant step size
    Eigen::MatrixXd lambda;         // soft variant coefficients (empty for hard)
    double loss_before = 0.0;
    double loss_after = 0.0;
    BarycentricCoords coords;       // after the update; empty if unverified
};

struct FwResult {
    ParamSet merged;
    std::vector<IterationRecord> trace;
    StopReason stop_reason = StopReason::budget_exhausted;
    BarycentricCoords final_coords;
    bool feasibility_unverified = false;
    bool theta0_appended = false;
    std::vector<std::string> vertex_ids;
};

// --- LMO building blocks ---------------------------------------------------

// Streams the pool one checkpoint at a time (exactly pool.size() loads,
// at most one resident beyond the caller's working set).
std::vector<std::pair<std::string, double>> linear_scores(const CheckpointPool& pool,
                                                          const ParamSet& grad);

// Streaming score computation at either granularity.
ScoreTable compute_scores(const CheckpointPool& pool, const ParamSet& grad,
                          LmoGranularity granularity);

// k smallest-score candidates per row, ties broken by lowest index.
LmoSelection select_topk(const ScoreTable& table, int k);

LmoSelection lmo_hard(const CheckpointPool& pool, const ParamSet& grad,
                      LmoGranularity granularity);
LmoSelection lmo_topk(const CheckpointPool& pool, const ParamSet& grad, int k,
                      LmoGranularity granularity);

// <-grad, s - theta>; nonnegative when s minimizes the linear score over a
// hull containing theta.
double fw_gap(const ParamSet& grad, const ParamSet& theta, const ParamSet& s);

// Uniform-grid exact-ish line search over [0,1] including the endpoints;
// returns the argmin gamma (lowest on ties). gamma=0 is always a grid
// point, so the step never increases the loss.
double line_search(const Objective& obj, const ParamSet& theta, const ParamSet& direction,
                   int points);

// (1-gamma) * theta + gamma * s.
ParamSet merge_convex(const ParamSet& theta, const ParamSet& s, double gamma);

// theta + sum_j lambda_j (v_j - theta), applied per layer when lambda has
// one row per layer.
ParamSet merge_soft(const ParamSet& theta, const std::vector<const ParamSet*>& vertices,
                    const LambdaSolution& lambda);

// Projected gradient descent for the soft-variant merging coefficients,
// started from uniform weights. Returns the best iterate seen, floored at
// the single best vertex (each basis vector is evaluated as a candidate),
// which keeps the top-k step at least as good as the hard step.
LambdaSolution inner_optimize_lambda(const Objective& obj, const ParamSet& theta,
                                     const std::vector<const ParamSet*>& vertices,
                                     const FwConfig& cfg);

// --- coordinate tracking ----------------------------------------------------

void update_coords_convex(BarycentricCoords& coords, const LmoSelection& sel, double gamma);
void update_coords_soft(BarycentricCoords& coords, const LmoSelection& sel,
                        const Eigen::MatrixXd& lambda);

// Rebuilds the parameter set described by coords from vertices aligned
// with coords.ids. Affordable only on small pools; used by feasibility
// checks.
ParamSet reconstruct_from_coords(const BarycentricCoords& coords,
                                 const std::vector<const ParamSet*>& vertices);

// --- the full loop -----------------------------------------------------------

// Frank-Wolfe merging. If theta0's content hash is not already present in
// the pool, theta0 joins the candidate set as an extra vertex.
FwResult run_fw(const FwConfig& cfg, const CheckpointPool& pool, const Objective& obj,
                const ParamSet& theta0);

}  // namespace fwmerge
