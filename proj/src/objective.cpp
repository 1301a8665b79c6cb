#include "fwmerge/objective.hpp"

#include <cmath>

#include "fwmerge/rng.hpp"

namespace fwmerge {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeightMap = Eigen::Map<const RowMajorMatrix>;
using WeightMap = Eigen::Map<RowMajorMatrix>;

struct ForwardState {
    std::vector<Eigen::MatrixXd> activations;  // activations[0] = inputs
    Eigen::MatrixXd logits;
};

ForwardState mlp_forward(const MlpArchitecture& arch, const ParamSet& theta,
                         const Eigen::MatrixXd& inputs) {
    ForwardState st;
    st.activations.push_back(inputs);
    const std::size_t n_layers = arch.hidden.size() + 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const Vector& wflat = theta.layer(2 * l);
        const Vector& b = theta.layer(2 * l + 1);
        const auto& shape = theta.schema().layer(2 * l).shape;
        ConstWeightMap w(wflat.data(), shape[0], shape[1]);
        Eigen::MatrixXd z = (st.activations.back() * w).rowwise() + b.transpose();
        if (l + 1 < n_layers) {
            st.activations.push_back(z.array().tanh().matrix());
        } else {
            st.logits = std::move(z);
        }
    }
    return st;
}

// Row-wise log-softmax cross-entropy, mean over the batch.
double softmax_xent(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        total += lse - logits(i, labels[i]);
    }
    return total / static_cast<double>(logits.rows());
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
        p.row(i) = (e / e.sum()).matrix();
    }
    return p;
}

void require_mlp_schema(const ParamSet& theta, const CalibrationBatch& batch,
                        const MlpArchitecture& arch) {
    if (arch.input_dim != batch.inputs.cols()) {
        throw SchemaError("batch input dim " + std::to_string(batch.inputs.cols()) +
                          " does not match model input dim " + std::to_string(arch.input_dim));
    }
    if (batch.num_classes != arch.num_classes) {
        throw SchemaError("batch classes " + std::to_string(batch.num_classes) +
                          " do not match model classes " + std::to_string(arch.num_classes));
    }
    theta.schema().require_same(arch.schema(), "mlp parameters");
}

}  // namespace

std::pair<CalibrationBatch, CalibrationBatch> generate_task(const TaskSpec& spec, int n_train,
                                                            int n_test,
                                                            std::uint64_t sample_stream) {
    if (n_train < 1 || n_test < 1) throw DimensionError("generate_task: need n >= 1 samples");
    if (spec.input_dim < 1 || spec.num_classes < 2) {
        throw DimensionError("generate_task: invalid dimensions");
    }
    Rng mean_rng(spec.seed);

    // Per-class blob centers: random directions, orthogonalized so the
    // classes are well separated, then scaled out to mean_radius.
    Eigen::MatrixXd means(spec.num_classes, spec.input_dim);
    for (int c = 0; c < spec.num_classes; ++c) {
        Eigen::VectorXd dir(spec.input_dim);
        for (int d = 0; d < spec.input_dim; ++d) dir[d] = mean_rng.normal();
        for (int prev = 0; prev < c; ++prev) {
            const Eigen::VectorXd p = means.row(prev).transpose().normalized();
            dir -= p.dot(dir) * p;
        }
        if (dir.norm() < 1e-8) dir.setOnes();  // degenerate draw
        means.row(c) = spec.mean_radius * dir.normalized().transpose();
    }

    Rng rng(spec.seed ^ (0x9e3779b97f4a7c15ull * (sample_stream + 1)));

    auto sample = [&](int n, const std::string& id) {
        CalibrationBatch b;
        b.task_id = id;
        b.num_classes = spec.num_classes;
        b.inputs.resize(n, spec.input_dim);
        b.labels.resize(n);
        for (int i = 0; i < n; ++i) {
            const int c = i % spec.num_classes;
            b.labels[i] = c;
            for (int d = 0; d < spec.input_dim; ++d) {
                b.inputs(i, d) = means(c, d) + spec.noise_sigma * rng.normal();
            }
        }
        return b;
    };
    CalibrationBatch train = sample(n_train, spec.task_id);
    CalibrationBatch test = sample(n_test, spec.task_id);
    return {std::move(train), std::move(test)};
}

ParamSchema MlpArchitecture::schema() const {
    std::vector<LayerInfo> layers;
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(num_classes);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::string idx = std::to_string(l + 1);
        layers.push_back(LayerInfo{"W" + idx, {dims[l], dims[l + 1]}});
        layers.push_back(LayerInfo{"b" + idx, {dims[l + 1]}});
    }
    return ParamSchema(std::move(layers));
}

MlpArchitecture MlpArchitecture::from_schema(const ParamSchema& schema) {
    if (schema.layer_count() < 2 || schema.layer_count() % 2 != 0) {
        throw SchemaError("not an MLP schema: expected W/b layer pairs");
    }
    MlpArchitecture arch;
    arch.hidden.clear();
    const std::size_t n_layers = schema.layer_count() / 2;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& w = schema.layer(2 * l);
        const auto& b = schema.layer(2 * l + 1);
        const std::string idx = std::to_string(l + 1);
        if (w.name != "W" + idx || b.name != "b" + idx || w.shape.size() != 2 ||
            b.shape.size() != 1 || w.shape[1] != b.shape[0]) {
            throw SchemaError("not an MLP schema at layer pair " + idx);
        }
        if (l == 0) {
            arch.input_dim = static_cast<int>(w.shape[0]);
        } else if (w.shape[0] != schema.layer(2 * (l - 1)).shape[1]) {
            throw SchemaError("MLP layer shapes do not chain at W" + idx);
        }
        if (l + 1 < n_layers) {
            arch.hidden.push_back(static_cast<int>(w.shape[1]));
        } else {
            arch.num_classes = static_cast<int>(w.shape[1]);
        }
    }
    return arch;
}

ParamSet init_mlp_params(const MlpArchitecture& arch, std::uint64_t seed) {
    Rng rng(seed);
    ParamSet p;
    const ParamSchema schema = arch.schema();
    for (const auto& info : schema.layers()) {
        Vector v(info.elements());
        if (info.name[0] == 'W') {
            const double scale = 1.0 / std::sqrt(static_cast<double>(info.shape[0]));
            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
        } else {
            v.setZero();
        }
        p.add_layer(info.name, info.shape, std::move(v));
    }
    return p;
}

double mlp_loss(const ParamSet& theta, const CalibrationBatch& batch) {
    const MlpArchitecture arch = MlpArchitecture::from_schema(theta.schema());
    require_mlp_schema(theta, batch, arch);
    const ForwardState st = mlp_forward(arch, theta, batch.inputs);
    return softmax_xent(st.logits, batch.labels);
}

std::pair<double, ParamSet> mlp_loss_and_grad(const ParamSet& theta,
                                              const CalibrationBatch& batch) {
    const MlpArchitecture arch = MlpArchitecture::from_schema(theta.schema());
    require_mlp_schema(theta, batch, arch);
    const ForwardState st = mlp_forward(arch, theta, batch.inputs);
    const double loss = softmax_xent(st.logits, batch.labels);

    const Eigen::Index n = batch.inputs.rows();
    ParamSet grad = ParamSet::zeros(theta.schema());

    // dL/dlogits = (softmax - onehot) / n
    Eigen::MatrixXd delta = softmax_rows(st.logits);
    for (Eigen::Index i = 0; i < n; ++i) delta(i, batch.labels[i]) -= 1.0;
    delta /= static_cast<double>(n);

    const std::size_t n_layers = arch.hidden.size() + 1;
    for (std::size_t l = n_layers; l-- > 0;) {
        const auto& wshape = theta.schema().layer(2 * l).shape;
        const Eigen::MatrixXd& a_in = st.activations[l];

        WeightMap dw(grad.layer(2 * l).data(), wshape[0], wshape[1]);
        dw = a_in.transpose() * delta;
        grad.layer(2 * l + 1) = delta.colwise().sum().transpose();

        if (l > 0) {
            ConstWeightMap w(theta.layer(2 * l).data(), wshape[0], wshape[1]);
            Eigen::MatrixXd da = delta * w.transpose();
            // tanh'(z) = 1 - tanh(z)^2, and a_in already holds tanh(z).
            delta = da.array() * (1.0 - a_in.array().square());
        }
    }
    return {loss, std::move(grad)};
}

double accuracy(const ParamSet& theta, const CalibrationBatch& batch) {
    const MlpArchitecture arch = MlpArchitecture::from_schema(theta.schema());
    require_mlp_schema(theta, batch, arch);
    const ForwardState st = mlp_forward(arch, theta, batch.inputs);
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < st.logits.rows(); ++i) {
        int best = 0;
        for (int c = 1; c < batch.num_classes; ++c) {
            if (st.logits(i, c) > st.logits(i, best)) best = c;  // ties keep lowest index
        }
        if (best == batch.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(st.logits.rows());
}

ParamSet finetune(const ParamSet& theta0, const CalibrationBatch& train, int epochs, double lr) {
    ParamSet theta = theta0;
    for (int e = 0; e < epochs; ++e) {
        auto [loss, grad] = mlp_loss_and_grad(theta, train);
        if (!std::isfinite(loss)) {
            throw NumericsError("finetune diverged at epoch " + std::to_string(e));
        }
        theta = axpy(theta, -lr, grad);
    }
    return theta;
}

MultiTaskObjective::MultiTaskObjective(MlpArchitecture arch, std::vector<CalibrationBatch> batches)
    : arch_(std::move(arch)), batches_(std::move(batches)), schema_(arch_.schema()) {
    if (batches_.empty()) throw ConfigError("multi-task objective needs at least one batch");
    for (const auto& b : batches_) {
        if (b.inputs.rows() < 1) throw DimensionError("empty calibration batch");
        if ((b.labels.array() < 0).any() || (b.labels.array() >= b.num_classes).any()) {
            throw ConfigError("labels out of range in task '" + b.task_id + "'");
        }
    }
}

double MultiTaskObjective::loss(const ParamSet& theta) const {
    theta.schema().require_same(schema_, "objective parameters");
    double total = 0.0;
    for (const auto& b : batches_) total += mlp_loss(theta, b);
    return total / static_cast<double>(batches_.size());
}

std::pair<double, ParamSet> MultiTaskObjective::loss_and_grad(const ParamSet& theta) const {
    theta.schema().require_same(schema_, "objective parameters");
    double total = 0.0;
    ParamSet grad = ParamSet::zeros(schema_);
    for (const auto& b : batches_) {
        auto [l, g] = mlp_loss_and_grad(theta, b);
        total += l;
        grad = axpy(grad, 1.0, g);
    }
    const double inv = 1.0 / static_cast<double>(batches_.size());
    return {total * inv, axpy(ParamSet::zeros(schema_), inv, grad)};
}

QuadraticObjective::QuadraticObjective(ParamSet target) : target_(std::move(target)) {}

double QuadraticObjective::loss(const ParamSet& theta) const {
    theta.schema().require_same(target_.schema(), "quadratic objective");
    double acc = 0.0;
    for (std::size_t i = 0; i < theta.layer_count(); ++i) {
        acc += (theta.layer(i) - target_.layer(i)).squaredNorm();
    }
    return acc;
}

std::pair<double, ParamSet> QuadraticObjective::loss_and_grad(const ParamSet& theta) const {
    const double l = loss(theta);
    // grad = 2 (theta - target)
    ParamSet grad = axpy(theta, -1.0, target_);
    for (std::size_t i = 0; i < grad.layer_count(); ++i) grad.layer(i) *= 2.0;
    return {l, std::move(grad)};
}

}  // namespace fwmerge
