#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "fwmerge/errors.hpp"

namespace fwmerge {

using Vector = Eigen::VectorXd;

struct LayerInfo {
    std::string name;
    std::vector<std::int64_t> shape;

    std::int64_t elements() const {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    bool operator==(const LayerInfo& other) const = default;
};

// Layer-name/shape signature shared by all checkpoints of a pool.
// Layer order is fixed at construction (file header order) and is the
// iteration order for every operation that touches all layers.
class ParamSchema {
public:
    ParamSchema() = default;
    explicit ParamSchema(std::vector<LayerInfo> layers);

    std::size_t layer_count() const { return layers_.size(); }
    std::int64_t total_dim() const { return total_dim_; }
    const LayerInfo& layer(std::size_t i) const { return layers_[i]; }
    const std::vector<LayerInfo>& layers() const { return layers_; }

    // Index of a layer by name, or -1 if absent.
    std::ptrdiff_t find(const std::string& name) const;

    bool operator==(const ParamSchema& other) const { return layers_ == other.layers_; }

    // Throws SchemaError with a description of the first difference.
    // `what` names the offending object in the message.
    void require_same(const ParamSchema& other, const std::string& what) const;

private:
    std::vector<LayerInfo> layers_;
    std::int64_t total_dim_ = 0;
};

// An ordered map layer-name -> (shape, flat f64 tensor). Immutable in
// practice: operations return new ParamSets and never mutate arguments.
class ParamSet {
public:
    ParamSet() = default;

    static ParamSet zeros(const ParamSchema& schema);

    // Appends a layer; data length must equal the shape's element count.
    void add_layer(std::string name, std::vector<std::int64_t> shape, Vector data);

    const ParamSchema& schema() const { return schema_; }
    std::size_t layer_count() const { return schema_.layer_count(); }
    std::int64_t total_dim() const { return schema_.total_dim(); }

    const Vector& layer(std::size_t i) const { return data_[i]; }
    Vector& layer(std::size_t i) { return data_[i]; }
    const Vector& layer(const std::string& name) const;

    bool all_finite() const;

private:
    ParamSchema schema_;
    std::vector<Vector> data_;
};

// dst + alpha * src, element-wise. Inputs are untouched.
// Throws SchemaError on signature mismatch, NumericsError if the result
// contains NaN/Inf.
ParamSet axpy(const ParamSet& dst, double alpha, const ParamSet& src);

// Full inner product. Summation order is fixed (layer order, then flat
// index) so scores are bit-reproducible; no parallel reduction.
double dot(const ParamSet& a, const ParamSet& b);

// Per-layer inner products, indexed in schema layer order.
Vector dot_per_layer(const ParamSet& a, const ParamSet& b);

// FNV-1a over layer names, shapes and raw f64 payloads. Used to decide
// whether a base model is already present in a pool.
std::uint64_t content_hash(const ParamSet& p);

}  // namespace fwmerge
