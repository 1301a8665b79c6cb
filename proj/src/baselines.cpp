#include "fwmerge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace fwmerge {

ParamSet weight_average(const CheckpointPool& pool) {
    if (pool.empty()) throw EmptyPoolError("weight_average: empty pool");
    const ParamSchema& schema = pool.check_schema();
    ParamSet acc = ParamSet::zeros(schema);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        acc = axpy(acc, 1.0, pool.load(i).get());
    }
    const double inv = 1.0 / static_cast<double>(pool.size());
    for (std::size_t l = 0; l < acc.layer_count(); ++l) acc.layer(l) *= inv;
    return acc;
}

ParamSet task_arithmetic(const ParamSet& theta0, const CheckpointPool& pool, double lambda) {
    const ParamSchema& schema = pool.check_schema();
    schema.require_same(theta0.schema(), "task_arithmetic base");
    ParamSet merged = theta0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const LoadedCheckpoint v = pool.load(i);
        merged = axpy(merged, lambda, axpy(v.get(), -1.0, theta0));
    }
    return merged;
}

ParamSet ties_merge(const ParamSet& theta0, const CheckpointPool& pool, const TiesConfig& cfg) {
    if (pool.empty()) throw EmptyPoolError("ties_merge: empty pool");
    if (!(cfg.density > 0.0 && cfg.density <= 1.0)) {
        throw ConfigError("ties density must be in (0, 1]");
    }
    const ParamSchema& schema = pool.check_schema();
    schema.require_same(theta0.schema(), "ties_merge base");
    const std::size_t n = pool.size();
    const std::int64_t dim = schema.total_dim();

    // The whole procedure needs all task vectors simultaneously (trim,
    // elect, disjoint mean); this is the linear-memory baseline.
    std::vector<LoadedCheckpoint> handles;
    handles.reserve(n);
    for (std::size_t i = 0; i < n; ++i) handles.push_back(pool.load(i));

    std::vector<Eigen::VectorXd> task_vectors;
    task_vectors.reserve(n);
    for (const auto& h : handles) {
        Eigen::VectorXd flat(dim);
        Eigen::Index pos = 0;
        for (std::size_t l = 0; l < schema.layer_count(); ++l) {
            const Vector& v = h->layer(l);
            flat.segment(pos, v.size()) = v - theta0.layer(l);
            pos += v.size();
        }
        task_vectors.push_back(std::move(flat));
    }

    // Trim: keep the ceil(density * dim) largest-magnitude entries of each
    // task vector; magnitude ties keep the lower flat index.
    const auto keep = static_cast<std::int64_t>(
        std::min<double>(static_cast<double>(dim),
                         std::ceil(cfg.density * static_cast<double>(dim))));
    if (keep < dim) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(dim));
        for (auto& tv : task_vectors) {
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&tv](Eigen::Index a, Eigen::Index b) {
                return std::abs(tv[a]) > std::abs(tv[b]);
            });
            Eigen::VectorXd trimmed = Eigen::VectorXd::Zero(dim);
            for (std::int64_t j = 0; j < keep; ++j) {
                const Eigen::Index idx = order[static_cast<std::size_t>(j)];
                trimmed[idx] = tv[idx];
            }
            tv = std::move(trimmed);
        }
    }

    // Elect sign by summed magnitude; equal magnitudes elect positive.
    // Disjoint mean over entries whose sign matches the elected one.
    Eigen::VectorXd merged = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index p = 0; p < dim; ++p) {
        double pos_mag = 0.0, neg_mag = 0.0;
        for (const auto& tv : task_vectors) {
            if (tv[p] > 0.0) pos_mag += tv[p];
            else neg_mag -= tv[p];
        }
        const double sign = pos_mag >= neg_mag ? 1.0 : -1.0;
        double sum = 0.0;
        int count = 0;
        for (const auto& tv : task_vectors) {
            if (tv[p] != 0.0 && tv[p] * sign > 0.0) {
                sum += tv[p];
                ++count;
            }
        }
        if (count > 0) merged[p] = sum / static_cast<double>(count);
    }

    ParamSet out;
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l < schema.layer_count(); ++l) {
        const auto& info = schema.layer(l);
        Vector v = theta0.layer(l) + cfg.scaling * merged.segment(pos, info.elements());
        pos += info.elements();
        out.add_layer(info.name, info.shape, std::move(v));
    }
    return out;
}

}  // namespace fwmerge
