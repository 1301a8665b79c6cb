#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <vector>

#include "fwmerge/errors.hpp"

namespace fwmerge {

enum class SimplexMode {
    unit,    // { v >= 0, sum v  = 1 }
    capped,  // { v >= 0, sum v <= 1 }
};

struct SimplexWeights {
    Eigen::VectorXd values;
    SimplexMode mode = SimplexMode::unit;

    // Throws SimplexError if the invariants do not hold.
    void validate() const;
};

namespace detail {

// Euclidean projection onto the unit simplex by sort-and-threshold
// (Held/Wolfe/Crowder): sort descending, take the largest rho with
// u_rho - (sum_{i<=rho} u_i - 1)/rho > 0, subtract that threshold, clip.
Eigen::VectorXd project_unit_simplex(const Eigen::VectorXd& v);

}  // namespace detail

// Projection of v onto the unit or capped simplex. Accepts any dense
// Eigen expression; scalar type must be convertible to double.
template <typename Derived>
SimplexWeights project_simplex(const Eigen::MatrixBase<Derived>& v,
                               SimplexMode mode = SimplexMode::unit) {
    Eigen::VectorXd x = v.template cast<double>().eval();
    if (x.size() == 0) throw DimensionError("project_simplex: empty input");
    if (!x.allFinite()) throw NumericsError("project_simplex: non-finite input");
    if (mode == SimplexMode::capped) {
        Eigen::VectorXd clipped = x.cwiseMax(0.0);
        if (clipped.sum() <= 1.0) return SimplexWeights{std::move(clipped), mode};
        // Once the orthant projection overshoots the cap the sum
        // constraint is tight, so the unit projection applies.
        return SimplexWeights{detail::project_unit_simplex(x), mode};
    }
    return SimplexWeights{detail::project_unit_simplex(x), mode};
}

// n entries of 1/n; the inner-optimization starting point.
SimplexWeights uniform_weights(Eigen::Index n);

}  // namespace fwmerge
