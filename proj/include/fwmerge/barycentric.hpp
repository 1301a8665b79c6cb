#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "fwmerge/errors.hpp"

namespace fwmerge {

// Convex-combination weights of the current merged model over the pool
// vertices; the testable witness that the iterate stays in the hull.
// One row when the whole parameter vector is a single block, one row per
// layer when selection or coefficients are layer-wise (Cartesian product
// of per-layer hulls).
struct BarycentricCoords {
    std::vector<std::string> ids;  // column order
    Eigen::MatrixXd weights;       // rows: 1 or layer count; cols: ids
    bool per_layer = false;

    // Point mass on vertex `idx`.
    static BarycentricCoords delta(std::vector<std::string> ids_, Eigen::Index idx,
                                   Eigen::Index rows);

    bool empty() const { return weights.size() == 0; }

    // Every weight >= -tol and every row sums to 1 within tol.
    void validate(double tol = 1e-9) const;
};

}  // namespace fwmerge
