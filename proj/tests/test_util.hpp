#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fwmerge/param_set.hpp"
#include "fwmerge/rng.hpp"

namespace fwtest {

using fwmerge::ParamSchema;
using fwmerge::ParamSet;
using fwmerge::Rng;
using fwmerge::Vector;

// One-layer parameter set around the given values.
inline ParamSet make_flat(const std::string& layer, std::vector<double> values) {
    ParamSet p;
    Vector v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
    p.add_layer(layer, {static_cast<std::int64_t>(values.size())}, std::move(v));
    return p;
}

inline ParamSet random_params(const ParamSchema& schema, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    ParamSet p;
    for (const auto& info : schema.layers()) {
        Vector v(info.elements());
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
        p.add_layer(info.name, info.shape, std::move(v));
    }
    return p;
}

inline ParamSchema two_layer_schema() {
    return ParamSchema({{"alpha", {2, 3}}, {"beta", {4}}});
}

inline double max_abs_diff(const ParamSet& a, const ParamSet& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.layer_count(); ++i) {
        m = std::max(m, (a.layer(i) - b.layer(i)).cwiseAbs().maxCoeff());
    }
    return m;
}

// Scratch directory under the system temp path, wiped on construction.
class TempDir {
public:
    explicit TempDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace fwtest
