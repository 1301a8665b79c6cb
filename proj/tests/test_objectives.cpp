#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fwmerge/objective.hpp"
#include "fwmerge/rng.hpp"
#include "test_util.hpp"

using namespace fwmerge;
using namespace fwtest;

namespace {

TaskSpec small_task(std::uint64_t seed, int classes = 2, int dim = 6) {
    TaskSpec spec;
    spec.task_id = "task" + std::to_string(seed);
    spec.seed = seed;
    spec.input_dim = dim;
    spec.num_classes = classes;
    return spec;
}

// Central finite difference of the batch loss along one coordinate.
double fd_coordinate(const ParamSet& theta, const CalibrationBatch& batch, std::size_t layer,
                     Eigen::Index idx, double h) {
    ParamSet plus = theta;
    ParamSet minus = theta;
    plus.layer(layer)[idx] += h;
    minus.layer(layer)[idx] -= h;
    return (mlp_loss(plus, batch) - mlp_loss(minus, batch)) / (2.0 * h);
}

}  // namespace

TEST_CASE("task generation is deterministic and seeded") {
    const TaskSpec spec = small_task(11, 3);
    auto [train_a, test_a] = generate_task(spec, 30, 20);
    auto [train_b, test_b] = generate_task(spec, 30, 20);

    CHECK(train_a.inputs == train_b.inputs);
    CHECK(train_a.labels == train_b.labels);
    CHECK(test_a.inputs == test_b.inputs);

    SUBCASE("different seeds give different inputs") {
        TaskSpec other = spec;
        other.seed = 12;
        auto [train_c, test_c] = generate_task(other, 30, 20);
        CHECK(train_a.inputs != train_c.inputs);
    }
    SUBCASE("another sample stream keeps the geometry but not the draws") {
        auto [train_s, test_s] = generate_task(spec, 30, 20, 5);
        CHECK(train_a.inputs != train_s.inputs);
        CHECK(train_a.labels == train_s.labels);  // same round-robin labels
    }
    SUBCASE("labels stay in range") {
        CHECK((train_a.labels.array() >= 0).all());
        CHECK((train_a.labels.array() < spec.num_classes).all());
    }
}

TEST_CASE("zero weights give the uniform-softmax loss") {
    MlpArchitecture arch;
    arch.input_dim = 4;
    arch.hidden = {5};
    arch.num_classes = 2;
    const ParamSet theta = ParamSet::zeros(arch.schema());

    CalibrationBatch batch;
    batch.task_id = "t";
    batch.num_classes = 2;
    batch.inputs = Eigen::MatrixXd::Random(1, 4);
    batch.labels = Eigen::VectorXi::Zero(1);

    CHECK(mlp_loss(theta, batch) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("backprop matches central finite differences") {
    struct Arch {
        int dim;
        std::vector<int> hidden;
        int classes;
    };
    const std::vector<Arch> matrix = {
        {6, {8}, 2}, {16, {32, 32}, 4}, {4, {8, 8}, 3}, {5, {}, 2}};

    Rng picker(99);
    for (const auto& a : matrix) {
        MlpArchitecture arch;
        arch.input_dim = a.dim;
        arch.hidden = a.hidden;
        arch.num_classes = a.classes;

        TaskSpec spec = small_task(1000 + static_cast<std::uint64_t>(a.dim), a.classes, a.dim);
        const CalibrationBatch batch = generate_task(spec, 12, 4).first;
        const ParamSet theta = init_mlp_params(arch, 5);

        auto [loss, grad] = mlp_loss_and_grad(theta, batch);
        CHECK(std::isfinite(loss));

        for (int probe = 0; probe < 20; ++probe) {
            const auto layer =
                static_cast<std::size_t>(picker.below(theta.layer_count()));
            const auto idx = static_cast<Eigen::Index>(
                picker.below(static_cast<std::uint64_t>(theta.layer(layer).size())));
            const double numeric = fd_coordinate(theta, batch, layer, idx, 1e-5);
            const double analytic = grad.layer(layer)[idx];
            const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            CHECK(std::abs(numeric - analytic) / scale <= 1e-4);
        }
    }
}

TEST_CASE("loss is deterministic and nonnegative") {
    const TaskSpec spec = small_task(7, 3, 8);
    const CalibrationBatch batch = generate_task(spec, 25, 5).first;
    MlpArchitecture arch;
    arch.input_dim = 8;
    arch.hidden = {16};
    arch.num_classes = 3;
    const ParamSet theta = init_mlp_params(arch, 3);

    const double l1 = mlp_loss(theta, batch);
    const double l2 = mlp_loss(theta, batch);
    CHECK(l1 == l2);  // bitwise
    CHECK(l1 >= 0.0);
}

TEST_CASE("multi-task aggregation is the mean of per-task losses") {
    MlpArchitecture arch;
    arch.input_dim = 6;
    arch.hidden = {8};
    arch.num_classes = 2;
    const CalibrationBatch a = generate_task(small_task(21), 20, 5).first;
    const CalibrationBatch b = generate_task(small_task(22), 20, 5).first;
    const ParamSet theta = init_mlp_params(arch, 9);

    const MultiTaskObjective obj_ab(arch, {a, b});
    const double la = mlp_loss(theta, a);
    const double lb = mlp_loss(theta, b);
    CHECK(obj_ab.loss(theta) == doctest::Approx((la + lb) / 2.0).epsilon(1e-12));

    SUBCASE("duplicated batch leaves the aggregate unchanged") {
        const MultiTaskObjective obj_aa(arch, {a, a});
        CHECK(obj_aa.loss(theta) == doctest::Approx(la).epsilon(1e-12));
    }
    SUBCASE("aggregate gradient is the mean of per-task gradients") {
        const ParamSet grad = obj_ab.loss_and_grad(theta).second;
        const ParamSet ga = mlp_loss_and_grad(theta, a).second;
        const ParamSet gb = mlp_loss_and_grad(theta, b).second;
        const ParamSet mean = axpy(axpy(ParamSet::zeros(arch.schema()), 0.5, ga), 0.5, gb);
        for (std::uint64_t s = 0; s < 5; ++s) {
            const ParamSet probe = random_params(arch.schema(), 500 + s);
            CHECK(dot(grad, probe) == doctest::Approx(dot(mean, probe)).epsilon(1e-9));
        }
    }
}

TEST_CASE("schema mismatch raises SchemaError") {
    MlpArchitecture arch;
    arch.input_dim = 6;
    arch.hidden = {8};
    arch.num_classes = 2;
    const CalibrationBatch batch = generate_task(small_task(31), 10, 5).first;

    MlpArchitecture wrong_input = arch;
    wrong_input.input_dim = 7;
    CHECK_THROWS_AS(mlp_loss(init_mlp_params(wrong_input, 1), batch), SchemaError);

    const MultiTaskObjective obj(arch, {batch});
    MlpArchitecture other = arch;
    other.hidden = {9};
    CHECK_THROWS_AS(obj.loss(init_mlp_params(other, 1)), SchemaError);
    CHECK_THROWS_AS(obj.loss_and_grad(init_mlp_params(other, 1)), SchemaError);
}

TEST_CASE("finetune") {
    const TaskSpec spec = small_task(41, 2, 6);
    auto [train, test] = generate_task(spec, 60, 200);
    MlpArchitecture arch;
    arch.input_dim = 6;
    arch.hidden = {16};
    arch.num_classes = 2;
    const ParamSet theta0 = init_mlp_params(arch, 13);

    SUBCASE("zero epochs is the identity") {
        const ParamSet same = finetune(theta0, train, 0, 0.1);
        CHECK(max_abs_diff(same, theta0) == 0.0);
    }
    SUBCASE("training beats the untrained model") {
        const double acc0 = accuracy(theta0, test);
        const ParamSet tuned = finetune(theta0, train, 200, 0.1);
        const double acc1 = accuracy(tuned, test);
        CHECK(acc0 <= 0.75);  // untrained stays near chance
        CHECK(acc1 >= 0.9);
        CHECK(acc1 > acc0);
    }
    SUBCASE("same inputs give bitwise-identical checkpoints") {
        const ParamSet a = finetune(theta0, train, 50, 0.1);
        const ParamSet b = finetune(theta0, train, 50, 0.1);
        CHECK(max_abs_diff(a, b) == 0.0);
    }
    SUBCASE("a non-finite loss raises NumericsError") {
        CalibrationBatch corrupt = train;
        corrupt.inputs(0, 0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(finetune(theta0, corrupt, 5, 0.1), NumericsError);
    }
}

TEST_CASE("accuracy") {
    const TaskSpec spec = small_task(51, 2, 6);
    auto [train, test] = generate_task(spec, 60, 100);
    MlpArchitecture arch;
    arch.input_dim = 6;
    arch.hidden = {16};
    arch.num_classes = 2;

    SUBCASE("oracle weights classify the separable batch perfectly") {
        const ParamSet tuned = finetune(init_mlp_params(arch, 13), train, 300, 0.1);
        CHECK(accuracy(tuned, train) == 1.0);
    }
    SUBCASE("zero weights predict class 0 everywhere") {
        const ParamSet zero = ParamSet::zeros(arch.schema());
        double class0 = 0.0;
        for (Eigen::Index i = 0; i < test.labels.size(); ++i) {
            if (test.labels[i] == 0) class0 += 1.0;
        }
        class0 /= static_cast<double>(test.labels.size());
        CHECK(accuracy(zero, test) == doctest::Approx(class0));
    }
    SUBCASE("random model stays within [0,1]") {
        const ParamSet rnd = init_mlp_params(arch, 999);
        const double a = accuracy(rnd, test);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("quadratic objective") {
    const ParamSet target = make_flat("x", {0.5, -0.25});
    const QuadraticObjective obj(target);
    const ParamSet theta = make_flat("x", {1.5, -0.25});
    CHECK(obj.loss(theta) == doctest::Approx(1.0));
    auto [loss, grad] = obj.loss_and_grad(theta);
    CHECK(loss == doctest::Approx(1.0));
    CHECK(grad.layer("x")[0] == doctest::Approx(2.0));
    CHECK(grad.layer("x")[1] == doctest::Approx(0.0));
}
