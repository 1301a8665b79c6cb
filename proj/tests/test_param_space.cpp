#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "fwmerge/checkpoint_io.hpp"
#include "fwmerge/checkpoint_pool.hpp"
#include "test_util.hpp"

using namespace fwmerge;
using namespace fwtest;

TEST_CASE("axpy basics") {
    const ParamSet a = make_flat("a", {1.0, 2.0});
    const ParamSet b = make_flat("a", {2.0, 4.0});
    const ParamSet zero = make_flat("a", {0.0, 0.0});

    SUBCASE("zero coefficient is the identity") {
        const ParamSet out = axpy(a, 0.0, b);
        CHECK(max_abs_diff(out, a) == 0.0);
    }
    SUBCASE("identity on a zero base") {
        const ParamSet out = axpy(zero, 1.0, b);
        CHECK(max_abs_diff(out, b) == 0.0);
    }
    SUBCASE("direct arithmetic") {
        const ParamSet out = axpy(a, 0.5, b);
        CHECK(out.layer("a")[0] == doctest::Approx(2.0));
        CHECK(out.layer("a")[1] == doctest::Approx(4.0));
    }
    SUBCASE("inputs are unmodified") {
        (void)axpy(a, 0.5, b);
        CHECK(a.layer("a")[0] == 1.0);
        CHECK(b.layer("a")[1] == 4.0);
    }
}

TEST_CASE("axpy errors") {
    const ParamSet a = make_flat("a", {1.0, 2.0});
    CHECK_THROWS_AS(axpy(a, 1.0, make_flat("b", {1.0, 2.0})), SchemaError);
    CHECK_THROWS_AS(axpy(a, 1.0, make_flat("a", {1.0})), SchemaError);
    CHECK_THROWS_AS(axpy(a, 1e308, make_flat("a", {1e308, 1e308})), NumericsError);
}

TEST_CASE("axpy linearity reconstructs the original") {
    const ParamSchema schema = two_layer_schema();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ParamSet a = random_params(schema, seed);
        const ParamSet b = random_params(schema, seed + 100);
        const double alpha = 0.25 * static_cast<double>(seed) - 1.0;
        const ParamSet back = axpy(axpy(a, alpha, b), -alpha, b);
        CHECK(max_abs_diff(back, a) <= 1e-12);
    }
}

TEST_CASE("dot") {
    const ParamSet a = make_flat("a", {1.0, 2.0});
    const ParamSet b = make_flat("a", {3.0, 4.0});

    CHECK(dot(a, make_flat("a", {0.0, 0.0})) == 0.0);
    CHECK(dot(a, b) == doctest::Approx(11.0));
    CHECK_THROWS_AS(dot(a, make_flat("z", {3.0, 4.0})), SchemaError);

    SUBCASE("symmetry on random pairs") {
        const ParamSchema schema = two_layer_schema();
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            const ParamSet x = random_params(schema, seed);
            const ParamSet y = random_params(schema, seed + 50);
            CHECK(dot(x, y) == dot(y, x));
        }
    }
    SUBCASE("bilinearity") {
        const ParamSchema schema = two_layer_schema();
        const ParamSet x = random_params(schema, 1);
        const ParamSet y = random_params(schema, 2);
        const ParamSet z = random_params(schema, 3);
        const double alpha = 0.37;
        const double lhs = dot(axpy(x, alpha, y), z);
        const double rhs = dot(x, z) + alpha * dot(y, z);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

TEST_CASE("dot_per_layer") {
    ParamSet a, b;
    a.add_layer("a", {1}, Vector::Constant(1, 1.0));
    a.add_layer("b", {1}, Vector::Constant(1, 2.0));
    b.add_layer("a", {1}, Vector::Constant(1, 3.0));
    b.add_layer("b", {1}, Vector::Constant(1, 5.0));

    const Vector per_layer = dot_per_layer(a, b);
    REQUIRE(per_layer.size() == 2);
    CHECK(per_layer[0] == doctest::Approx(3.0));
    CHECK(per_layer[1] == doctest::Approx(10.0));

    SUBCASE("per-layer sum equals full dot") {
        const ParamSchema schema = two_layer_schema();
        const ParamSet x = random_params(schema, 11);
        const ParamSet y = random_params(schema, 12);
        CHECK(dot_per_layer(x, y).sum() == doctest::Approx(dot(x, y)).epsilon(1e-9));
    }
    SUBCASE("single layer equals dot") {
        const ParamSet x = make_flat("only", {1.0, -2.0, 0.5});
        const ParamSet y = make_flat("only", {2.0, 1.0, 4.0});
        const Vector v = dot_per_layer(x, y);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == dot(x, y));
    }
}

TEST_CASE("checkpoint round trip is bit-exact") {
    TempDir dir("fwmerge_io_test");
    const ParamSchema schema = two_layer_schema();
    const ParamSet p = random_params(schema, 42);

    const auto path = dir.path() / "p.fwck";
    save_checkpoint(p, path);
    const ParamSet q = load_checkpoint(path);

    REQUIRE(q.schema() == p.schema());
    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        for (Eigen::Index j = 0; j < p.layer(i).size(); ++j) {
            CHECK(q.layer(i)[j] == p.layer(i)[j]);
        }
    }

    SUBCASE("re-save produces identical bytes") {
        const auto path2 = dir.path() / "q.fwck";
        save_checkpoint(q, path2);
        std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
        const std::string b1((std::istreambuf_iterator<char>(f1)), {});
        const std::string b2((std::istreambuf_iterator<char>(f2)), {});
        CHECK(b1 == b2);
        CHECK(!b1.empty());
    }

    SUBCASE("header-only schema read matches") {
        CHECK(read_checkpoint_schema(path) == p.schema());
    }
}

TEST_CASE("f32 storage is promoted on load") {
    TempDir dir("fwmerge_io_f32");
    const ParamSet p = make_flat("w", {0.5, -1.25, 3.0});
    const auto path = dir.path() / "p32.fwck";
    save_checkpoint(p, path, StorageType::f32);
    const ParamSet q = load_checkpoint(path);
    // These values are exactly representable in f32.
    CHECK(max_abs_diff(p, q) == 0.0);
}

TEST_CASE("malformed checkpoint files") {
    TempDir dir("fwmerge_io_bad");
    const ParamSet p = make_flat("w", {1.0, 2.0});
    const auto good = dir.path() / "good.fwck";
    save_checkpoint(p, good);

    SUBCASE("wrong magic") {
        auto bad = dir.path() / "magic.fwck";
        std::ifstream in(good, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        bytes[0] = 'X';
        std::ofstream out(bad, std::ios::binary);
        out << bytes;
        out.close();
        CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
    }
    SUBCASE("truncated payload") {
        auto bad = dir.path() / "trunc.fwck";
        std::ifstream in(good, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        bytes.resize(bytes.size() - 8);  // drop one f64
        std::ofstream out(bad, std::ios::binary);
        out << bytes;
        out.close();
        CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
    }
    SUBCASE("header declares more data than the shape holds") {
        // Header says 8 floats of payload for a shape of 4.
        const std::string header =
            R"([{"name":"w","dtype":"f64","shape":[4],"offset":0,"nbytes":64}])";
        auto bad = dir.path() / "mismatch.fwck";
        std::ofstream out(bad, std::ios::binary);
        out.write("FWCK", 4);
        const std::uint32_t version = 1;
        out.write(reinterpret_cast<const char*>(&version), 4);
        const std::uint64_t hlen = header.size();
        out.write(reinterpret_cast<const char*>(&hlen), 8);
        out << header;
        const std::vector<double> payload(8, 1.0);
        out.write(reinterpret_cast<const char*>(payload.data()), 64);
        out.close();
        CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
    }
    SUBCASE("unsupported version") {
        auto bad = dir.path() / "version.fwck";
        std::ifstream in(good, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        bytes[4] = 9;
        std::ofstream out(bad, std::ios::binary);
        out << bytes;
        out.close();
        CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
    }
}

TEST_CASE("pool schema checks") {
    TempDir dir("fwmerge_pool_test");
    const ParamSchema schema = two_layer_schema();

    SUBCASE("three matching entries pass") {
        CheckpointPool pool;
        for (int i = 0; i < 3; ++i) {
            const auto path = dir.path() / ("c" + std::to_string(i) + ".fwck");
            save_checkpoint(random_params(schema, static_cast<std::uint64_t>(i)), path);
            pool.add_file("c" + std::to_string(i), path);
        }
        CHECK_NOTHROW(pool.check_schema());
        CHECK(pool.schema() == schema);
    }
    SUBCASE("missing layer is a schema error naming the entry") {
        CheckpointPool pool;
        pool.add_in_memory("full", random_params(schema, 1));
        pool.add_in_memory("short", make_flat("alpha", {1, 2, 3, 4, 5, 6}));
        try {
            pool.check_schema();
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("short") != std::string::npos);
        }
    }
    SUBCASE("transposed shape is a schema error") {
        CheckpointPool pool;
        pool.add_in_memory("a", random_params(schema, 1));
        ParamSet transposed;
        transposed.add_layer("alpha", {3, 2}, Vector::Zero(6));
        transposed.add_layer("beta", {4}, Vector::Zero(4));
        pool.add_in_memory("b", std::move(transposed));
        CHECK_THROWS_AS(pool.check_schema(), SchemaError);
    }
    SUBCASE("empty pool") {
        CheckpointPool pool;
        CHECK_THROWS_AS(pool.check_schema(), EmptyPoolError);
    }
}

TEST_CASE("pool residency instrumentation") {
    TempDir dir("fwmerge_pool_residency");
    const ParamSchema schema = two_layer_schema();
    CheckpointPool pool;
    for (int i = 0; i < 4; ++i) {
        const auto path = dir.path() / ("c" + std::to_string(i) + ".fwck");
        save_checkpoint(random_params(schema, static_cast<std::uint64_t>(i)), path);
        pool.add_file("c" + std::to_string(i), path);
    }
    pool.stats().reset();
    {
        auto h0 = pool.load(0);
        auto h1 = pool.load(1);
        CHECK(pool.stats().resident() == 2);
        CHECK(pool.stats().peak_resident() == 2);
    }
    CHECK(pool.stats().resident() == 0);
    CHECK(pool.stats().peak_resident() == 2);
    CHECK(pool.stats().loads() == 2);
}

TEST_CASE("content hash distinguishes checkpoints") {
    const ParamSchema schema = two_layer_schema();
    const ParamSet a = random_params(schema, 1);
    const ParamSet b = random_params(schema, 2);
    CHECK(content_hash(a) == content_hash(a));
    CHECK(content_hash(a) != content_hash(b));
}
