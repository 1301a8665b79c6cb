#include "fwmerge/barycentric.hpp"

namespace fwmerge {

BarycentricCoords BarycentricCoords::delta(std::vector<std::string> ids_, Eigen::Index idx,
                                           Eigen::Index rows) {
    BarycentricCoords c;
    c.ids = std::move(ids_);
    c.weights = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(c.ids.size()));
    c.weights.col(idx).setOnes();
    c.per_layer = rows > 1;
    return c;
}

void BarycentricCoords::validate(double tol) const {
    if (empty()) throw SimplexError("barycentric coordinates are empty");
    if ((weights.array() < -tol).any()) {
        throw SimplexError("negative barycentric coordinate");
    }
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
        const double sum = weights.row(r).sum();
        if (sum < 1.0 - tol || sum > 1.0 + tol) {
            throw SimplexError("barycentric row " + std::to_string(r) + " sums to " +
                               std::to_string(sum));
        }
    }
}

}  // namespace fwmerge
