#include "fwmerge/simplex.hpp"

namespace fwmerge {

void SimplexWeights::validate() const {
    if (values.size() == 0) throw SimplexError("empty weight vector");
    if ((values.array() < 0.0).any()) throw SimplexError("negative simplex weight");
    const double sum = values.sum();
    if (mode == SimplexMode::unit) {
        if (sum < 1.0 - 1e-9 || sum > 1.0 + 1e-9) {
            throw SimplexError("unit simplex weights sum to " + std::to_string(sum));
        }
    } else if (sum > 1.0 + 1e-9) {
        throw SimplexError("capped simplex weights sum to " + std::to_string(sum));
    }
}

namespace detail {

Eigen::VectorXd project_unit_simplex(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    // Stable sort: equal values keep original index order.
    std::stable_sort(order.begin(), order.end(),
                     [&v](Eigen::Index a, Eigen::Index b) { return v[a] > v[b]; });

    double cumsum = 0.0;
    double threshold = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        cumsum += v[order[static_cast<std::size_t>(j)]];
        const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (v[order[static_cast<std::size_t>(j)]] - t > 0.0) threshold = t;
    }
    return (v.array() - threshold).cwiseMax(0.0);
}

}  // namespace detail

SimplexWeights uniform_weights(Eigen::Index n) {
    if (n < 1) throw DimensionError("uniform_weights: n must be >= 1");
    return SimplexWeights{Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)),
                          SimplexMode::unit};
}

}  // namespace fwmerge
