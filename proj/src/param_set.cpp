#include "fwmerge/param_set.hpp"

#include <cstring>
#include <sstream>

namespace fwmerge {

ParamSchema::ParamSchema(std::vector<LayerInfo> layers) : layers_(std::move(layers)) {
    total_dim_ = 0;
    for (const auto& l : layers_) {
        if (l.elements() <= 0) {
            throw FormatError("layer '" + l.name + "' has non-positive element count");
        }
        total_dim_ += l.elements();
    }
}

std::ptrdiff_t ParamSchema::find(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].name == name) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
}

void ParamSchema::require_same(const ParamSchema& other, const std::string& what) const {
    if (layers_.size() != other.layers_.size()) {
        std::ostringstream os;
        os << "schema mismatch (" << what << "): " << layers_.size() << " vs "
           << other.layers_.size() << " layers";
        throw SchemaError(os.str());
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& a = layers_[i];
        const auto& b = other.layers_[i];
        if (a.name != b.name) {
            throw SchemaError("schema mismatch (" + what + "): layer " + std::to_string(i) +
                              " named '" + a.name + "' vs '" + b.name + "'");
        }
        if (a.shape != b.shape) {
            throw SchemaError("schema mismatch (" + what + "): layer '" + a.name +
                              "' has different shape");
        }
    }
}

ParamSet ParamSet::zeros(const ParamSchema& schema) {
    ParamSet p;
    for (const auto& l : schema.layers()) {
        p.add_layer(l.name, l.shape, Vector::Zero(l.elements()));
    }
    return p;
}

void ParamSet::add_layer(std::string name, std::vector<std::int64_t> shape, Vector data) {
    LayerInfo info{std::move(name), std::move(shape)};
    if (info.elements() != data.size()) {
        throw FormatError("layer '" + info.name + "' declares " +
                          std::to_string(info.elements()) + " elements but carries " +
                          std::to_string(data.size()));
    }
    auto layers = schema_.layers();
    layers.push_back(std::move(info));
    schema_ = ParamSchema(std::move(layers));
    data_.push_back(std::move(data));
}

const Vector& ParamSet::layer(const std::string& name) const {
    auto idx = schema_.find(name);
    if (idx < 0) throw SchemaError("no layer named '" + name + "'");
    return data_[static_cast<std::size_t>(idx)];
}

bool ParamSet::all_finite() const {
    for (const auto& v : data_) {
        if (!v.allFinite()) return false;
    }
    return true;
}

ParamSet axpy(const ParamSet& dst, double alpha, const ParamSet& src) {
    dst.schema().require_same(src.schema(), "axpy");
    ParamSet out;
    for (std::size_t i = 0; i < dst.layer_count(); ++i) {
        const auto& info = dst.schema().layer(i);
        Vector v = dst.layer(i) + alpha * src.layer(i);
        if (!v.allFinite()) {
            throw NumericsError("axpy produced non-finite values in layer '" + info.name + "'");
        }
        out.add_layer(info.name, info.shape, std::move(v));
    }
    return out;
}

double dot(const ParamSet& a, const ParamSet& b) {
    a.schema().require_same(b.schema(), "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.layer_count(); ++i) {
        const Vector& x = a.layer(i);
        const Vector& y = b.layer(i);
        // Serial accumulation in flat-index order; keep it that way so
        // LMO argmin ties are reproducible across runs.
        for (Eigen::Index j = 0; j < x.size(); ++j) acc += x[j] * y[j];
    }
    return acc;
}

Vector dot_per_layer(const ParamSet& a, const ParamSet& b) {
    a.schema().require_same(b.schema(), "dot_per_layer");
    Vector out(static_cast<Eigen::Index>(a.layer_count()));
    for (std::size_t i = 0; i < a.layer_count(); ++i) {
        const Vector& x = a.layer(i);
        const Vector& y = b.layer(i);
        double acc = 0.0;
        for (Eigen::Index j = 0; j < x.size(); ++j) acc += x[j] * y[j];
        out[static_cast<Eigen::Index>(i)] = acc;
    }
    return out;
}

std::uint64_t content_hash(const ParamSet& p) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix_bytes = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        const auto& info = p.schema().layer(i);
        mix_bytes(info.name.data(), info.name.size());
        const char sep = '\0';
        mix_bytes(&sep, 1);
        for (auto d : info.shape) mix_bytes(&d, sizeof(d));
        const Vector& v = p.layer(i);
        mix_bytes(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
    }
    return h;
}

}  // namespace fwmerge
