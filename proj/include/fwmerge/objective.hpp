#pragma once

#include <Eigen/Core>

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fwmerge/param_set.hpp"

namespace fwmerge {

// Synthetic Gaussian-blob classification task. Class means are seeded
// random directions (an implicit per-task rotation), so tasks with
// different seeds are mutually non-trivial. Same seed, same dataset.
struct TaskSpec {
    std::string task_id;
    std::uint64_t seed = 0;
    int input_dim = 16;
    int num_classes = 4;
    double mean_radius = 3.0;  // shift of each class blob from the origin
    double noise_sigma = 0.6;  // within-class spread
};

struct CalibrationBatch {
    std::string task_id;
    Eigen::MatrixXd inputs;  // n_samples x input_dim, one sample per row
    Eigen::VectorXi labels;  // in [0, num_classes)
    int num_classes = 0;
};

// (train, test) split; deterministic in the spec's seed. The blob
// geometry depends only on spec.seed; `sample_stream` selects an
// independent draw from the same distribution (stream 0 is the default
// calibration split).
std::pair<CalibrationBatch, CalibrationBatch> generate_task(const TaskSpec& spec, int n_train,
                                                            int n_test,
                                                            std::uint64_t sample_stream = 0);

// Feed-forward tanh MLP; parameters live in a ParamSet with layers
// W1,b1,...,WL,bL. Weight matrices are stored row-major as [in, out].
struct MlpArchitecture {
    int input_dim = 16;
    std::vector<int> hidden{32, 32};
    int num_classes = 4;

    ParamSchema schema() const;
    static MlpArchitecture from_schema(const ParamSchema& schema);
};

// Seeded Gaussian init scaled by 1/sqrt(fan_in); the stand-in for a
// pre-trained base model.
ParamSet init_mlp_params(const MlpArchitecture& arch, std::uint64_t seed);

// Loss/gradient contract consumed by the merging engine. Implementations
// must be pure: same theta, bitwise-same results.
class Objective {
public:
    virtual ~Objective() = default;
    virtual const ParamSchema& schema() const = 0;
    virtual double loss(const ParamSet& theta) const = 0;
    virtual std::pair<double, ParamSet> loss_and_grad(const ParamSet& theta) const = 0;
};

// Mean over tasks of the per-task mean cross-entropy on calibration
// batches; the gradient is the matching mean of per-task gradients.
class MultiTaskObjective final : public Objective {
public:
    MultiTaskObjective(MlpArchitecture arch, std::vector<CalibrationBatch> batches);

    const ParamSchema& schema() const override { return schema_; }
    double loss(const ParamSet& theta) const override;
    std::pair<double, ParamSet> loss_and_grad(const ParamSet& theta) const override;

    const MlpArchitecture& architecture() const { return arch_; }
    const std::vector<CalibrationBatch>& batches() const { return batches_; }

private:
    MlpArchitecture arch_;
    std::vector<CalibrationBatch> batches_;
    ParamSchema schema_;
};

// l(theta) = || theta - target ||^2. Smoothness constant L = 2. Used by
// convergence/feasibility checks where closed-form geometry is needed.
class QuadraticObjective final : public Objective {
public:
    explicit QuadraticObjective(ParamSet target);

    const ParamSchema& schema() const override { return target_.schema(); }
    double loss(const ParamSet& theta) const override;
    std::pair<double, ParamSet> loss_and_grad(const ParamSet& theta) const override;

    const ParamSet& target() const { return target_; }

private:
    ParamSet target_;
};

// Mean cross-entropy of the MLP described by theta's schema on one batch.
double mlp_loss(const ParamSet& theta, const CalibrationBatch& batch);

// Loss plus hand-written backprop gradient (same schema as theta).
std::pair<double, ParamSet> mlp_loss_and_grad(const ParamSet& theta,
                                              const CalibrationBatch& batch);

// Fraction of argmax-correct predictions; logit ties resolve to the
// lowest class index.
double accuracy(const ParamSet& theta, const CalibrationBatch& batch);

// Plain full-batch gradient descent from theta0. Throws NumericsError if
// the loss diverges to NaN.
ParamSet finetune(const ParamSet& theta0, const CalibrationBatch& train, int epochs, double lr);

}  // namespace fwmerge
